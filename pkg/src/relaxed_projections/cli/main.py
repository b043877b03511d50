from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
import argparse
import json
import logging
import math

import numpy as np

from relaxed_projections.cli import figure, reports
from relaxed_projections.cli.config import (
    DEFAULT_LAMBDAS,
    DEFAULT_P,
    DEFAULT_Q,
    DEFAULT_SCHEDULES,
    DEFAULT_STEPS,
    SCHEDULE_NAMES,
    ExperimentConfig,
    InstanceKind,
    InstanceSpec,
    parse_vector,
    resolve_output_dir,
    start_point,
)
from relaxed_projections.cli.instances import Instance, generate, write_instance
from relaxed_projections.cli.traces import HIGHLIGHT_SUFFIX, highlight_path, write_highlight, write_trace
from relaxed_projections.core.certificate import BoundCertificate, bound_certificate, verify_boundedness
from relaxed_projections.core.engine import LambdaRule, Schedule, iterate
from relaxed_projections.core.errors import GuardExceededError, InputError, NumericalAnomalyError
from relaxed_projections.core.fixpoint import cyclic_map, fixed_points, linear_rate, log_linear_fit, project_onto_fix
from relaxed_projections.core.kaczmarz import BlockSystem, singleton_blocks, solve
from relaxed_projections.core.linops import least_squares
from relaxed_projections.core.regularity import (
    DEFAULT_GUARD,
    DEFAULT_SAMPLES,
    DEFAULT_VALIDATION_SAMPLES,
    kappa_star,
    theta_sweep,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_GUARD = 4

DEFAULT_THETAS = (math.pi / 2, math.pi / 4, math.pi / 8, math.pi / 16)
SUMMARY_FILE = "summary.json"


# -------------------------
# Parser
# -------------------------

def _add_instance_args(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--instance", type=Path, help="Instance file (rows 'a_1 ... a_q | b')")
    source.add_argument(
        "--gaussian",
        type=int,
        nargs=2,
        metavar=("P", "Q"),
        help=f"Generate a normalized Gaussian P x Q system from --seed (default {DEFAULT_P} x {DEFAULT_Q})",
    )
    parser.add_argument("--blocks", help="Row partition of the instance file, e.g. '0,1;2;3,4'")


def _add_sampling_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help="Random starts per regularity estimate")
    parser.add_argument(
        "--validation-samples",
        type=int,
        default=DEFAULT_VALIDATION_SAMPLES,
        help="Validation vectors per regularity estimate",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relaxed-projections",
        description="Relaxed projections onto affine subspaces: experiments, bounds and figures.",
    )
    parser.add_argument("--seed", type=int, default=None, help="Seed for instances and random schedules (default 0)")
    parser.add_argument("--out", default=None, help="Output directory (CLI > env:RELAXED_PROJECTIONS_OUT > ./out)")
    parser.add_argument("--full-vectors", action="store_true", help="Write every coordinate to trace CSVs")
    parser.add_argument(
        "--guard-override",
        type=int,
        default=None,
        metavar="ELL",
        help=f"Allow subcollection enumeration up to ELL distinct subspaces (default {DEFAULT_GUARD})",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("--quiet", action="store_true", help="Warnings and errors only")

    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Write a normalized Gaussian instance file")
    gen.add_argument("--p", type=int, default=DEFAULT_P, help="Number of equations")
    gen.add_argument("--q", type=int, default=DEFAULT_Q, help="Number of unknowns")
    gen.add_argument("--output", type=Path, help="Instance path (default <out>/instance_p<P>_q<Q>_s<seed>.txt)")

    run = sub.add_parser("run", help="Iterate relaxed projections for every (lambda, schedule) pair")
    run.add_argument("--config", type=Path, help="JSON experiment config (instance flags are then ignored)")
    _add_instance_args(run)
    run.add_argument("--lambdas", type=float, nargs="+", default=list(DEFAULT_LAMBDAS))
    run.add_argument("--schedules", nargs="+", choices=SCHEDULE_NAMES, default=list(DEFAULT_SCHEDULES))
    run.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    run.add_argument("--x0", help="Starting point as comma-separated coordinates (default 0)")
    run.add_argument("--varying", action="store_true", help="Draw lambda_n uniformly on [0, lambda]")
    run.add_argument("--highlight", action="store_true", help="Also write Q^k x_0 of cyclic runs")
    run.add_argument("--certificate", action="store_true", help="Check every trace against the bound certificate")
    run.add_argument("--jobs", type=int, default=1, help="Worker threads")
    _add_sampling_args(run)

    fig = sub.add_parser("figure", help="Draw trace CSVs into one SVG")
    fig.add_argument("traces", nargs="+", type=Path, help="Trace CSVs, or run directories")
    fig.add_argument("--output", type=Path, help="SVG path (default <out>/figure.svg)")
    fig.add_argument("--columns", type=int, default=figure.COLUMNS)

    bound = sub.add_parser("bound", help="Boundedness certificate of an instance")
    _add_instance_args(bound)
    bound.add_argument("--lam", type=float, required=True, help="Relaxation parameter in ]0, 2[")
    _add_sampling_args(bound)

    kappa = sub.add_parser("kappa", help="Regularity constants of an instance")
    _add_instance_args(kappa)
    kappa.add_argument("--theta-sweep", action="store_true", help="Two lines at decreasing angles instead of an instance")
    kappa.add_argument("--thetas", type=float, nargs="+", default=list(DEFAULT_THETAS))
    _add_sampling_args(kappa)

    kz = sub.add_parser("kaczmarz", help="Block Kaczmarz solve")
    _add_instance_args(kz)
    kz.add_argument("--lam", type=float, default=1.0)
    kz.add_argument("--schedule", choices=SCHEDULE_NAMES, default="cyclic")
    kz.add_argument("--steps", type=int, default=10_000)
    kz.add_argument("--x0", help="Starting point as comma-separated coordinates (default 0)")

    fix = sub.add_parser("fixpoint", help="Fixed points and linear rate of the cyclic composition")
    _add_instance_args(fix)
    fix.add_argument("--lam", type=float, default=1.0)
    fix.add_argument("--steps", type=int, default=200)
    fix.add_argument("--x0", help="Starting point as comma-separated coordinates (default 0)")
    return parser


# -------------------------
# Helpers
# -------------------------

def _seed(args) -> int:
    return 0 if args.seed is None else args.seed


def _guard(args) -> int:
    if args.guard_override is None:
        return DEFAULT_GUARD
    logging.warning(f"Enumeration guard overridden: {DEFAULT_GUARD} -> {args.guard_override}")
    return args.guard_override


def _instance_spec(args) -> InstanceSpec:
    if args.instance is None:
        p, q = args.gaussian or (DEFAULT_P, DEFAULT_Q)
        return InstanceSpec(InstanceKind.GAUSSIAN_HYPERPLANES, p=p, q=q, seed=_seed(args), blocks=args.blocks)
    kind = InstanceKind.KACZMARZ if args.blocks else InstanceKind.EXPLICIT
    return InstanceSpec(kind, file=args.instance, blocks=args.blocks)


def _schedule(name: str, lam: float, seed: int, varying: bool) -> Schedule:
    rule = LambdaRule.varying(lam, seed=seed) if varying else LambdaRule.fixed(lam)
    match name:
        case "cyclic":
            return Schedule.cyclic(rule)
        case "random":
            return Schedule.random_uniform(rule, seed)
        case _:
            raise InputError(f"unknown schedule {name!r}")


def _trace_name(lam: float, schedule: str, varying: bool) -> str:
    return f"trace_lam{lam:g}_{schedule}{'_varying' if varying else ''}.csv"


# -------------------------
# Commands
# -------------------------

def cmd_gen(args, out_dir: Path) -> int:
    seed = _seed(args)
    instance = generate(args.p, args.q, seed)
    path = args.output or out_dir / f"instance_p{args.p}_q{args.q}_s{seed}.txt"
    write_instance(path, instance, [f"gaussian instance p={args.p} q={args.q} seed={seed}", "rows: a_i1 ... a_iq | b_i"])
    print(path)
    return EXIT_OK


def _config_from_args(args, out_dir: Path) -> ExperimentConfig:
    if args.config is not None:
        return ExperimentConfig.from_json(
            args.config,
            output_dir=out_dir,
            seed=args.seed,
            guard=args.guard_override,
            full_vectors=args.full_vectors or None,
        )
    return ExperimentConfig(
        instance=_instance_spec(args),
        lambdas=tuple(args.lambdas),
        schedules=tuple(args.schedules),
        n_steps=args.steps,
        x0=parse_vector(args.x0),
        output_dir=out_dir,
        seed=_seed(args),
        varying=args.varying,
        highlight=args.highlight,
        certificate=args.certificate,
        full_vectors=args.full_vectors,
        guard=_guard(args),
        jobs=args.jobs,
        samples=args.samples,
        validation_samples=args.validation_samples,
    )


def _run_one(config: ExperimentConfig, instance: Instance, collection, x0, lam: float, name: str,
             cert: BoundCertificate | None) -> dict:
    schedule = _schedule(name, lam, config.seed, config.varying)
    logging.info(f"Running {schedule.label} schedule, lambda={lam:g}, {config.n_steps} steps")
    trace = iterate(collection, schedule, x0, config.n_steps, store_iterates=True)
    path = write_trace(config.output_dir / _trace_name(lam, name, config.varying), trace, config.full_vectors)

    entry = {
        "lambda": lam,
        "schedule": name,
        "varying": config.varying,
        "n_steps": config.n_steps,
        "sup_norm": trace.sup_norm,
        "final_norm": float(trace.norms[-1]),
        "final_residual": float(np.linalg.norm(instance.M @ trace.final - instance.b)),
        "csv": path.name,
        "highlight": None,
        "bound": None,
        "within_bound": None,
    }
    if config.highlight and name == "cyclic":
        entry["highlight"] = write_highlight(highlight_path(path), trace, len(collection), config.full_vectors).name
    if cert is not None:
        ok, _ = verify_boundedness(trace, cert, x0)
        entry["bound"] = cert.bound(float(np.linalg.norm(x0)))
        entry["within_bound"] = ok
    return entry


def cmd_run(config: ExperimentConfig) -> int:
    instance, blocks = config.instance.load()
    collection = instance.collection(blocks)
    x0 = config.start(instance.shape[1])

    certificates: dict[float, BoundCertificate] = {}
    if config.certificate:
        for lam in config.lambdas:
            certificates[lam] = bound_certificate(
                collection,
                lam,
                guard=config.guard,
                n_samples=config.samples,
                seed=config.seed,
                validation_samples=config.validation_samples,
            )

    jobs = [(lam, name) for lam in config.lambdas for name in config.schedules]
    with ThreadPoolExecutor(max_workers=config.jobs) as pool:
        entries = list(pool.map(
            lambda job: _run_one(config, instance, collection, x0, job[0], job[1], certificates.get(job[0])),
            jobs,
        ))

    _, lsq_residual = least_squares(instance.M, instance.b)
    summary = {
        "instance": config.instance.stem,
        "shape": list(instance.shape),
        "subspaces": len(collection),
        "seed": config.seed,
        "lsq_residual": lsq_residual,
        "runs": entries,
    }
    reports.write_json(config.output_dir / SUMMARY_FILE, summary)
    for entry in entries:
        print(reports.summary_line(entry))
    return EXIT_OK


def _figure_inputs(paths: list[Path]) -> list[Path]:
    """Expand run directories into their trace CSVs, in run order when a summary is present."""
    traces = []
    for path in paths:
        if not path.is_dir():
            traces.append(path)
            continue
        summary = path / SUMMARY_FILE
        if summary.exists():
            runs = json.loads(summary.read_text(encoding="utf-8"))["runs"]
            traces.extend(path / run["csv"] for run in runs)
        else:
            traces.extend(p for p in sorted(path.glob("*.csv")) if not p.stem.endswith(HIGHLIGHT_SUFFIX))
    return traces


def cmd_figure(args, out_dir: Path) -> int:
    traces = _figure_inputs(args.traces)
    if not traces:
        raise InputError("no trace CSVs found")
    path = figure.make_figure(traces, args.output or out_dir / "figure.svg", args.columns)
    print(path)
    return EXIT_OK


def cmd_bound(args, out_dir: Path) -> int:
    spec = _instance_spec(args)
    instance, blocks = spec.load()
    cert = bound_certificate(
        instance.collection(blocks),
        args.lam,
        guard=_guard(args),
        n_samples=args.samples,
        seed=_seed(args),
        validation_samples=args.validation_samples,
    )
    print(reports.certificate_text(cert))
    reports.write_json(out_dir / f"{spec.stem}_bound.json", reports.certificate_payload(cert))
    return EXIT_OK


def cmd_kappa(args, out_dir: Path) -> int:
    if args.theta_sweep:
        rows = theta_sweep(args.thetas, args.samples, _seed(args), args.validation_samples)
        print(reports.sweep_text(rows))
        reports.write_json(out_dir / "theta_sweep.json", reports.sweep_payload(rows))
        return EXIT_OK
    spec = _instance_spec(args)
    instance, blocks = spec.load()
    report = kappa_star(
        [A.direction for A in instance.collection(blocks)],
        n_samples=args.samples,
        seed=_seed(args),
        validation_samples=args.validation_samples,
        guard=_guard(args),
    )
    print(reports.regularity_text(report))
    reports.write_json(out_dir / f"{spec.stem}_kappa.json", reports.regularity_payload(report))
    return EXIT_OK


def cmd_kaczmarz(args, out_dir: Path) -> int:
    spec = _instance_spec(args)
    instance, blocks = spec.load()
    system = BlockSystem(instance.M, instance.b, blocks or singleton_blocks(instance.shape[0]))
    x0 = start_point(parse_vector(args.x0), instance.shape[1])
    result = solve(system, _schedule(args.schedule, args.lam, _seed(args), False), x0, args.steps)

    path = write_trace(out_dir / f"kaczmarz_{spec.stem}_{args.schedule}.csv", result.trace, args.full_vectors)
    payload = {
        "instance": spec.stem,
        "blocks": [list(block) for block in system.blocks],
        "lambda": args.lam,
        "schedule": args.schedule,
        "n_steps": args.steps,
        "consistent": result.consistent,
        "final_residual": float(result.residuals[-1]),
        "lsq_residual": result.lsq_residual,
        "final_lsq_distance": float(result.lsq_distance[-1]),
        "sup_norm": result.trace.sup_norm,
        "csv": path.name,
    }
    reports.write_json(out_dir / f"kaczmarz_{spec.stem}_{args.schedule}.json", payload)
    print(
        f"consistent={result.consistent} final_residual={payload['final_residual']:.6g} "
        f"lsq_residual={result.lsq_residual:.6g} lsq_distance={payload['final_lsq_distance']:.6g}"
    )
    return EXIT_OK


def cmd_fixpoint(args, out_dir: Path) -> int:
    spec = _instance_spec(args)
    instance, blocks = spec.load()
    collection = instance.collection(blocks)
    x0 = start_point(parse_vector(args.x0), instance.shape[1])

    Q = cyclic_map(collection, args.lam)
    fps = fixed_points(Q)
    x_star = project_onto_fix(fps, x0)
    rate, residuals = linear_rate(Q, x0, x_star, args.steps)
    try:
        slope, r2 = log_linear_fit(residuals)
    except InputError:
        slope, r2 = None, None

    payload = {
        "instance": spec.stem,
        "lambda": args.lam,
        "n_steps": args.steps,
        "consistent": fps.consistent,
        "fix_residual": fps.residual,
        "fix_dim": fps.directions.dim,
        "x_star": x_star.tolist(),
        "rate": rate,
        "log_slope": slope,
        "log_r2": r2,
        "final_distance": residuals[-1],
    }
    reports.write_json(out_dir / f"{spec.stem}_fixpoint.json", payload)
    print(f"dim Fix Q={fps.directions.dim} rate={rate:.6g} final_distance={residuals[-1]:.3e}")
    return EXIT_OK


def _dispatch(args) -> int:
    out_dir = resolve_output_dir(args.out)
    match args.command:
        case "gen":
            return cmd_gen(args, out_dir)
        case "run":
            return cmd_run(_config_from_args(args, out_dir))
        case "figure":
            return cmd_figure(args, out_dir)
        case "bound":
            return cmd_bound(args, out_dir)
        case "kappa":
            return cmd_kappa(args, out_dir)
        case "kaczmarz":
            return cmd_kaczmarz(args, out_dir)
        case "fixpoint":
            return cmd_fixpoint(args, out_dir)
    raise InputError(f"unknown command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    """
    Parse arguments, run one subcommand and map failures to exit codes:
    2 invalid input or unwritable path, 3 numerical anomaly, 4 enumeration guard exceeded.
    """
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_INPUT

    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    elif args.quiet:
        logging.getLogger().setLevel(logging.WARNING)

    try:
        return _dispatch(args)
    except GuardExceededError as e:
        logging.error(str(e))
        return EXIT_GUARD
    except NumericalAnomalyError as e:
        logging.error(str(e))
        return EXIT_NUMERICAL
    except InputError as e:
        logging.error(str(e))
        return EXIT_INPUT
    except OSError as e:
        logging.error(f"cannot write output: {e}")
        return EXIT_INPUT
