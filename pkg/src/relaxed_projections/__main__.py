import logging

from relaxed_projections.cli import main as cli


def main(argv: list[str] | None = None) -> int:
    """Main entry point for the command line."""
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")
    return cli.main(argv)


if __name__ == "__main__":
    raise SystemExit(main())
