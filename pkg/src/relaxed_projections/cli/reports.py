from collections.abc import Sequence
from pathlib import Path
import json
import logging

from relaxed_projections.core.certificate import BoundCertificate
from relaxed_projections.core.regularity import KappaMethod, RegularityReport


def write_json(path: Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logging.info(f"Wrote {path}")
    return path


# -------------------------
# Certificate
# -------------------------

def certificate_payload(cert: BoundCertificate) -> dict:
    return {
        "tau": cert.tau,
        "D": cert.D,
        "kappa_star": cert.kappa_star,
        "ell": cert.ell,
        "lambda": cert.lam,
        "C": cert.C,
        "label": cert.label,
        "ledger": [{"members": sorted(members), "C": value} for members, value in cert.ledger.items()],
    }


def certificate_text(cert: BoundCertificate) -> str:
    lines = [
        f"bound certificate ({cert.label})",
        f"  lambda   = {cert.lam:.6g}",
        f"  ell      = {cert.ell}",
        f"  tau      = {cert.tau:.6g}",
        f"  D        = {cert.D:.6g}",
        f"  kappa*   = {cert.kappa_star:.6g}",
        f"  C        = {cert.C:.6g}",
        f"  sup ||x_n|| <= ||x_0|| + {cert.lam * cert.C:.6g}",
        "  subcollections:",
    ]
    lines.extend(f"    {sorted(members)}: C = {value:.6g}" for members, value in cert.ledger.items())
    return "\n".join(lines)


# -------------------------
# Regularity
# -------------------------

def regularity_payload(report: RegularityReport) -> dict:
    return {
        "kappa": report.kappa,
        "kappa_star": report.kappa_star,
        "method": report.method.name.lower(),
        "samples_checked": report.samples_checked,
        "max_violation": report.max_violation,
        "pairs": [
            {"first": sorted(pair.first), "second": sorted(pair.second), "kappa": pair.kappa}
            for pair in report.pairs
        ],
    }


def regularity_text(report: RegularityReport) -> str:
    lines = [
        f"regularity ({report.method.name.lower()})",
        f"  kappa          = {report.kappa:.6g}",
        f"  kappa*         = {report.kappa_star:.6g}",
        f"  samples        = {report.samples_checked}",
        f"  max violation  = {report.max_violation:.3e}",
    ]
    if report.pairs:
        lines.append("  pairs:")
        lines.extend(f"    {sorted(p.first)} vs {sorted(p.second)}: kappa = {p.kappa:.6g}" for p in report.pairs)
    return "\n".join(lines)


def sweep_payload(rows: Sequence[tuple[float, float, float]]) -> dict:
    return {
        "method": KappaMethod.EMPIRICAL.name.lower(),
        "rows": [{"theta": t, "kappa": k, "closed_form": c} for t, k, c in rows],
    }


def sweep_text(rows: Sequence[tuple[float, float, float]]) -> str:
    lines = [f"{'theta':>12} {'kappa':>12} {'1/sin(t/2)':>12}"]
    lines.extend(f"{t:12.6g} {k:12.6g} {c:12.6g}" for t, k, c in rows)
    return "\n".join(lines)


# -------------------------
# Runs
# -------------------------

def summary_line(entry: dict) -> str:
    parts = [
        f"lambda={entry['lambda']:g}",
        f"schedule={entry['schedule']}",
        f"steps={entry['n_steps']}",
        f"sup_norm={entry['sup_norm']:.6g}",
        f"final_residual={entry['final_residual']:.6g}",
    ]
    if entry.get("bound") is not None:
        parts.append(f"bound={entry['bound']:.6g}")
        parts.append(f"within_bound={entry['within_bound']}")
    return " ".join(parts)
