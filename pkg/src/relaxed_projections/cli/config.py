from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
import json
import os

import numpy as np

from relaxed_projections.cli.instances import Instance, generate, read_instance
from relaxed_projections.core.errors import InputError
from relaxed_projections.core.kaczmarz import parse_blocks
from relaxed_projections.core.regularity import DEFAULT_GUARD, DEFAULT_SAMPLES, DEFAULT_VALIDATION_SAMPLES

OUTPUT_ENV = "RELAXED_PROJECTIONS_OUT"
DEFAULT_OUTPUT_DIR = "out"

DEFAULT_LAMBDAS = (0.5, 1.0, 1.5)
DEFAULT_SCHEDULES = ("random", "cyclic")
DEFAULT_STEPS = 3000
DEFAULT_P, DEFAULT_Q = 15, 10
SCHEDULE_NAMES = ("cyclic", "random")


class InstanceKind(Enum):
    """
    Where the affine subspaces of an experiment come from.

    Members:
    - GAUSSIAN_HYPERPLANES: generated p x q system, one hyperplane per row.
    - EXPLICIT: an instance file, one hyperplane per row.
    - KACZMARZ: an instance file with a block partition of its rows.
    """
    GAUSSIAN_HYPERPLANES = "gaussian_hyperplanes"
    EXPLICIT = "explicit"
    KACZMARZ = "kaczmarz"


@dataclass(frozen=True)
class InstanceSpec:
    kind: InstanceKind
    p: int = DEFAULT_P
    q: int = DEFAULT_Q
    seed: int = 0
    file: Path | None = None
    blocks: str | None = None

    def __post_init__(self):
        match self.kind:
            case InstanceKind.GAUSSIAN_HYPERPLANES:
                if self.p < 1 or self.q < 1:
                    raise InputError(f"instance shape must be positive, got {self.p} x {self.q}")
            case InstanceKind.EXPLICIT | InstanceKind.KACZMARZ:
                if self.file is None:
                    raise InputError(f"{self.kind.value} instance needs a file")
        if self.blocks is not None and self.kind is not InstanceKind.KACZMARZ:
            raise InputError("a block partition needs a kaczmarz instance read from a file")

    @property
    def stem(self) -> str:
        if self.kind is InstanceKind.GAUSSIAN_HYPERPLANES:
            return f"gaussian_p{self.p}_q{self.q}_s{self.seed}"
        return Path(self.file).stem

    def load(self) -> tuple[Instance, tuple[tuple[int, ...], ...] | None]:
        """The instance and its block partition (None for one hyperplane per row)."""
        if self.kind is InstanceKind.GAUSSIAN_HYPERPLANES:
            return generate(self.p, self.q, self.seed), None
        instance = read_instance(self.file)
        blocks = None if self.blocks is None else parse_blocks(self.blocks, instance.shape[0])
        return instance, blocks


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything a `run` needs.

    Attributes:
        instance (InstanceSpec): The affine subspaces.
        lambdas (tuple[float, ...]): Relaxation parameters (caps when varying), each in ]0, 2[.
        schedules (tuple[str, ...]): Any of "cyclic" and "random".
        n_steps (int): Steps per run, >= 0.
        x0 (tuple[float, ...] | None): Starting point, zero when None.
        output_dir (Path): Where CSVs and the summary go.
        seed (int): Seed of the random schedules.
        varying (bool): Draw lam_n uniformly on [0, lam] instead of a fixed lam.
        highlight (bool): Also write the Q^k x_0 subsequence of cyclic runs.
        certificate (bool): Compute the boundedness certificate per lam.
        full_vectors (bool): Write every coordinate instead of the first two.
        guard (int): Largest number of distinct linear parts for certificates.
        jobs (int): Worker threads for the (lam, schedule) runs.
        samples (int): Random starts per regularity estimate.
        validation_samples (int): Validation vectors per regularity estimate.
    """
    instance: InstanceSpec
    lambdas: tuple[float, ...] = DEFAULT_LAMBDAS
    schedules: tuple[str, ...] = DEFAULT_SCHEDULES
    n_steps: int = DEFAULT_STEPS
    x0: tuple[float, ...] | None = None
    output_dir: Path = field(default_factory=lambda: Path(DEFAULT_OUTPUT_DIR))
    seed: int = 0
    varying: bool = False
    highlight: bool = False
    certificate: bool = False
    full_vectors: bool = False
    guard: int = DEFAULT_GUARD
    jobs: int = 1
    samples: int = DEFAULT_SAMPLES
    validation_samples: int = DEFAULT_VALIDATION_SAMPLES

    def __post_init__(self):
        if not self.lambdas:
            raise InputError("at least one relaxation parameter is required")
        bad = [lam for lam in self.lambdas if not 0.0 < lam < 2.0]
        if bad:
            raise InputError(f"relaxation parameters must lie in ]0, 2[, got {bad}")
        if not self.schedules:
            raise InputError("at least one schedule is required")
        unknown = [s for s in self.schedules if s not in SCHEDULE_NAMES]
        if unknown:
            raise InputError(f"unknown schedules {unknown}; choose from {list(SCHEDULE_NAMES)}")
        if self.n_steps < 0:
            raise InputError(f"n_steps must be >= 0, got {self.n_steps}")
        if self.jobs < 1:
            raise InputError(f"jobs must be >= 1, got {self.jobs}")
        if self.guard < 1:
            raise InputError(f"guard must be >= 1, got {self.guard}")

    def start(self, dim: int) -> np.ndarray:
        return start_point(self.x0, dim)

    @classmethod
    def from_json(cls, path: Path, **overrides) -> "ExperimentConfig":
        """
        Load a config file; keyword overrides (output_dir, guard, ...) win over its values.

        Raises:
            InputError: On unreadable JSON, unknown keys or invalid values.
        """
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise InputError(f"cannot load config {path}: {e}") from e
        if not isinstance(raw, dict):
            raise InputError(f"{path}: config must be a JSON object")

        raw_instance = raw.pop("instance", {"kind": InstanceKind.GAUSSIAN_HYPERPLANES.value})
        try:
            kind = InstanceKind(raw_instance.pop("kind"))
            if "file" in raw_instance:
                # relative instance paths are read from the config's directory
                raw_instance["file"] = path.parent / raw_instance["file"]
            instance = InstanceSpec(kind=kind, **raw_instance)
        except (AttributeError, KeyError, TypeError, ValueError) as e:
            raise InputError(f"{path}: invalid instance section: {e}") from e

        known = set(cls.__dataclass_fields__) - {"instance"}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise InputError(f"{path}: unknown config keys {unknown}")
        for key in ("lambdas", "schedules", "x0"):
            if raw.get(key) is not None:
                raw[key] = tuple(raw[key])
        if "output_dir" in raw:
            raw["output_dir"] = Path(raw["output_dir"])
        raw.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(instance=instance, **raw)
        except TypeError as e:
            raise InputError(f"{path}: {e}") from e


def resolve_output_dir(cli_value: str | None) -> Path:
    """CLI > env:RELAXED_PROJECTIONS_OUT > ./out."""
    return Path(cli_value or os.getenv(OUTPUT_ENV) or DEFAULT_OUTPUT_DIR)


def parse_vector(text: str | None) -> tuple[float, ...] | None:
    """A comma-separated vector such as "1,0,-2.5"."""
    if text is None:
        return None
    try:
        return tuple(float(token) for token in text.split(","))
    except ValueError as e:
        raise InputError(f"malformed vector {text!r}: {e}") from e


def start_point(x0: tuple[float, ...] | None, dim: int) -> np.ndarray:
    """x0 as a vector of R^dim, the origin when None."""
    if x0 is None:
        return np.zeros(dim)
    if len(x0) != dim:
        raise InputError(f"x0 has {len(x0)} coordinates, instance lives in R^{dim}")
    return np.asarray(x0, dtype=np.float64)
