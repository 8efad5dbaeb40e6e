"""Experiment configuration read from INI-style ``key = value`` files.

Sections and keys
-----------------
``[experiment]``
    ``family`` (required), ``seed`` (master seed, default 0), ``output_dir``
    (default ``runs/<family>``), ``format`` (``binary`` or ``text``).
``[solver]``
    Overrides of the family's data generator settings; keys are the field
    names of the matching config dataclass (for example ``nu``,
    ``n_points``, ``domain = -8, 8``).  Tuples are comma separated.
``[data]``
    ``n_curr``, ``n_prev`` (points per snapshot), ``snapshot`` (index of the
    earlier snapshot, or ``random``), ``dt_multiplier`` (gap in base steps),
    ``dt_multipliers`` (list for Δt sweeps), ``noise`` (list of noise
    fractions), ``max_pairs`` (cap on pairs per sweep, ``all`` by default).
``[train]``
    ``restarts``, ``max_iters``, ``gtol``.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
import typing
from dataclasses import dataclass

from .datagen.particles import ParticleConfig
from .datagen.solvers import BurgersConfig, KdVConfig, KSConfig, NLSConfig
from .datagen.taylor_green import TaylorGreenConfig
from .errors import InvalidConfigError
from .inference import TrainConfig
from .models import FAMILIES

SOLVER_CONFIGS = {
    "burgers": BurgersConfig,
    "kdv": KdVConfig,
    "ks": KSConfig,
    "nls": NLSConfig,
    "ns2d": TaylorGreenConfig,
    "fractional_rl": ParticleConfig,
    "fractional_laplacian": ParticleConfig,
}

# per-family defaults that differ from the generator defaults
_SOLVER_PRESETS = {"fractional_laplacian": {"alpha": 1.5}}

# points per snapshot used for each family when [data] does not set them
DEFAULT_POINTS = {
    "burgers": (71, 69),
    "kdv": (111, 109),
    "ks": (301, 299),
    "nls": (49, 51),
    "ns2d": (251, 249),
    "fractional_rl": (100, 100),
    "fractional_laplacian": (100, 100),
}


@dataclass(frozen=True)
class DataSelection:
    n_curr: int
    n_prev: int
    snapshot: int | None = None  # None draws the snapshot from the seed
    dt_multiplier: int = 1
    dt_multipliers: tuple[int, ...] = (1,)
    noise: tuple[float, ...] = (0.0,)
    max_pairs: int | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    family: str
    solver: typing.Any
    data: DataSelection
    train: TrainConfig = TrainConfig()
    seed: int = 0
    output_dir: str = ""
    data_format: str = "binary"

    def canonical(self) -> dict:
        """Settings that determine the results (output location and threads excluded)."""
        tr = dataclasses.asdict(self.train)
        tr.pop("threads")
        return {
            "family": self.family,
            "solver": _jsonable(dataclasses.asdict(self.solver)),
            "data": _jsonable(dataclasses.asdict(self.data)),
            "train": tr,
            "seed": self.seed,
        }

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def solver_dt(self) -> float:
        if isinstance(self.solver, ParticleConfig):
            return self.solver.step_dt
        return float(self.solver.dt)

    @property
    def n_snapshots(self) -> int:
        if isinstance(self.solver, ParticleConfig):
            return self.solver.n_steps - self.solver.first_step + 1
        return int(self.solver.n_snapshots)

    @property
    def grid_size(self) -> int:
        s = self.solver
        if isinstance(s, ParticleConfig):
            return s.n_bins
        if isinstance(s, TaylorGreenConfig):
            return s.n_grid**2
        return int(s.n_points)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _jsonable(d):
    if isinstance(d, dict):
        return {k: _jsonable(v) for k, v in d.items()}
    if isinstance(d, (tuple, list)):
        return [_jsonable(v) for v in d]
    return d


def _parse_scalar(text: str, kind):
    text = text.strip()
    try:
        if kind is bool:
            return text.lower() in ("1", "true", "yes", "on")
        if kind is int:
            return int(text)
        if kind is float:
            return float(eval_number(text))
        return text
    except ValueError as exc:
        raise InvalidConfigError(f"cannot parse {text!r} as {kind.__name__}") from exc


def eval_number(text: str) -> float:
    """Float literal, also accepting ``pi`` and products such as ``32*pi`` or ``pi/500``."""
    t = text.replace(" ", "").lower()
    num, *rest = t.split("/")
    val = 1.0
    for factor in num.split("*"):
        val *= math.pi if factor == "pi" else float(factor)
    for d in rest:
        val /= math.pi if d == "pi" else float(d)
    return val


def _parse_field(text: str, annotation):
    if typing.get_origin(annotation) is tuple:
        args = typing.get_args(annotation)
        items = [p for p in text.split(",") if p.strip()]
        kind = args[0]
        if len(args) != 2 or args[1] is not Ellipsis:
            if len(items) != len(args):
                raise InvalidConfigError(f"expected {len(args)} comma-separated values, got {text!r}")
        return tuple(_parse_scalar(p, kind) for p in items)
    return _parse_scalar(text, annotation)


def _build_dataclass(cls, values: dict, where: str):
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for key, text in values.items():
        if key not in hints:
            raise InvalidConfigError(f"unknown key {key!r} in [{where}]")
        kwargs[key] = _parse_field(text, hints[key])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise InvalidConfigError(f"invalid [{where}] settings: {exc}") from exc


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(_parse_scalar(p, int) for p in text.split(",") if p.strip())


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(_parse_scalar(p, float) for p in text.split(",") if p.strip())


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise InvalidConfigError(str(exc)) from exc
    for name in cp.sections():
        if name not in ("experiment", "solver", "data", "train"):
            raise InvalidConfigError(f"unknown section [{name}]")
    exp = dict(cp["experiment"]) if cp.has_section("experiment") else {}
    family = exp.pop("family", None)
    if family is None:
        raise InvalidConfigError("[experiment] family is required")
    if family not in SOLVER_CONFIGS:
        raise InvalidConfigError(f"unknown family {family!r}; choose from {sorted(SOLVER_CONFIGS)}")
    seed = _parse_scalar(exp.pop("seed", "0"), int)
    output_dir = exp.pop("output_dir", f"runs/{family}")
    data_format = exp.pop("format", "binary")
    if data_format not in ("binary", "text"):
        raise InvalidConfigError("format must be 'binary' or 'text'")
    if exp:
        raise InvalidConfigError(f"unknown [experiment] keys: {sorted(exp)}")

    solver_vals = dict(_SOLVER_PRESETS.get(family, {}))
    solver_vals = {k: str(v) for k, v in solver_vals.items()}
    if cp.has_section("solver"):
        solver_vals.update(cp["solver"])
    solver = _build_dataclass(SOLVER_CONFIGS[family], solver_vals, "solver")

    d = dict(cp["data"]) if cp.has_section("data") else {}
    n_curr, n_prev = DEFAULT_POINTS[family]
    snap = d.pop("snapshot", "random").strip()
    max_pairs = d.pop("max_pairs", "all").strip()
    data = DataSelection(
        n_curr=_parse_scalar(d.pop("n_curr", str(n_curr)), int),
        n_prev=_parse_scalar(d.pop("n_prev", str(n_prev)), int),
        snapshot=None if snap == "random" else _parse_scalar(snap, int),
        dt_multiplier=_parse_scalar(d.pop("dt_multiplier", "1"), int),
        dt_multipliers=_int_list(d.pop("dt_multipliers", "1")),
        noise=_float_list(d.pop("noise", "0")),
        max_pairs=None if max_pairs == "all" else _parse_scalar(max_pairs, int),
    )
    if d:
        raise InvalidConfigError(f"unknown [data] keys: {sorted(d)}")

    t = dict(cp["train"]) if cp.has_section("train") else {}
    if "seed" in t or "threads" in t:
        raise InvalidConfigError("seed belongs in [experiment]; threads is a command-line flag")
    train = _build_dataclass(TrainConfig, t, "train")

    cfg = ExperimentConfig(family, solver, data, train, seed, output_dir, data_format)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def default_config(family: str, **data_overrides) -> ExperimentConfig:
    """Configuration with every default for ``family``."""
    cfg = parse_config(f"[experiment]\nfamily = {family}\n")
    if data_overrides:
        cfg = cfg.replace(data=dataclasses.replace(cfg.data, **data_overrides))
        validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    if cfg.family not in FAMILIES:
        raise InvalidConfigError(f"unknown family {cfg.family!r}")
    if not cfg.solver_dt > 0:
        raise InvalidConfigError("the snapshot spacing dt must be positive")
    d = cfg.data
    if d.dt_multiplier < 1:
        raise InvalidConfigError("dt_multiplier must be at least 1 (a zero gap gives dt = 0)")
    if not d.dt_multipliers:
        raise InvalidConfigError("dt_multipliers must list at least one gap")
    if any(m < 1 for m in d.dt_multipliers):
        raise InvalidConfigError("every entry of dt_multipliers must be at least 1")
    if not d.noise:
        raise InvalidConfigError("noise must list at least one level")
    if any(n < 0 for n in d.noise):
        raise InvalidConfigError("noise levels must be non-negative")
    T = cfg.n_snapshots
    if d.snapshot is not None:
        last = d.snapshot + max(d.dt_multiplier, *d.dt_multipliers)
        if d.snapshot < 0 or last >= T:
            raise InvalidConfigError(f"snapshot {d.snapshot} with its gaps exceeds the {T} snapshots")
    if max(d.dt_multiplier, *d.dt_multipliers) >= T:
        raise InvalidConfigError(f"gap exceeds the {T} available snapshots")
    N = cfg.grid_size
    if not (1 <= d.n_curr <= N and 1 <= d.n_prev <= N):
        raise InvalidConfigError(f"point counts must lie in [1, {N}]")
    if d.max_pairs is not None and d.max_pairs < 1:
        raise InvalidConfigError("max_pairs must be positive")
    if cfg.train.restarts < 1 or cfg.train.max_iters < 1:
        raise InvalidConfigError("restarts and max_iters must be positive")
