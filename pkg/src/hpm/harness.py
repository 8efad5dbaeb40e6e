"""End-to-end experiment commands: generate, identify, sweep and report.

Every run writes plain files under the configured output directory.  Arrays
are little-endian float64 (``.f8``) with a JSON sidecar, or CSV when the
config asks for ``format = text``.  Nothing time- or host-dependent is
written, so rerunning a config reproduces its files byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .datagen.fields import SolutionField, make_pair
from .datagen.particles import ParticleConfig, generate_particles
from .datagen.solvers import solve_burgers, solve_kdv, solve_ks, solve_nls
from .datagen.taylor_green import TaylorGreenConfig, generate_taylor_green
from .errors import HPMError, InvalidConfigError, InvalidInputError, TrainingFailedError
from .inference import TrainConfig, TrainResult, train
from .models import FAMILIES, ModelSpec, SnapshotPair

log = logging.getLogger(__name__)

_SOLVE = {"burgers": solve_burgers, "kdv": solve_kdv, "ks": solve_ks, "nls": solve_nls}

# tags that keep the derived seed streams apart
_PAIR, _TRAIN, _SNAPSHOT = 1, 2, 3


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def fmt(x) -> str:
    """Shortest round-trip text for a number; ``nan`` for missing cells."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if np.isnan(x) else repr(x)


# ---------------------------------------------------------------- data files

def generate_field(cfg: ExperimentConfig) -> SolutionField:
    if cfg.family in _SOLVE:
        return _SOLVE[cfg.family](cfg.solver)
    if isinstance(cfg.solver, TaylorGreenConfig):
        return generate_taylor_green(cfg.solver)
    if isinstance(cfg.solver, ParticleConfig):
        sol = generate_particles(cfg.solver)
        if sol.family != cfg.family:
            raise InvalidConfigError(
                f"alpha = {cfg.solver.alpha} produces {sol.family} data, not {cfg.family}")
        return sol
    raise InvalidConfigError(f"no generator for {cfg.family}")


def _write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _write_text(path: Path, text: str) -> None:
    _write_bytes(path, text.encode("utf-8"))


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([c if isinstance(c, str) else fmt(c) for c in r])
    return buf.getvalue()


def provenance(cfg: ExperimentConfig, **seeds) -> dict:
    return {"config_hash": cfg.config_hash, "version": __version__, "seed": cfg.seed,
            "config": cfg.canonical(), **seeds}


def save_field(sol: SolutionField, directory, data_format: str = "binary", extra: dict | None = None):
    """Write ``sol`` as ``times``/``grid``/``values`` arrays plus ``field.json``."""
    d = Path(directory)
    T, N, Q = sol.values.shape
    arrays = {"times": sol.times, "grid": sol.grid, "values": sol.values.reshape(T, N * Q)}
    files = {}
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        if data_format == "binary":
            fname = f"{name}.f8"
            _write_bytes(d / fname, arr.tobytes())
        else:
            fname = f"{name}.csv"
            rows = arr.reshape(arr.shape[0], -1)
            _write_text(d / fname, "".join(",".join(fmt(v) for v in row) + "\n" for row in rows))
        files[name] = {"file": fname, "shape": list(arr.shape)}
    meta = {
        "family": sol.family, "true_lambda": list(sol.true_lambda), "validated": sol.validated,
        "shape": [T, N, Q], "dtype": "float64", "byte_order": "little", "format": data_format,
        "files": files, "meta": sol.meta, **(extra or {}),
    }
    _write_text(d / "field.json", _json_text(meta))
    return d / "field.json"


def load_field(directory) -> SolutionField:
    d = Path(directory)
    try:
        meta = json.loads((d / "field.json").read_text())
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"no readable field.json in {d}") from exc
    arrays = {}
    for name, info in meta["files"].items():
        path = d / info["file"]
        if meta["format"] == "binary":
            arr = np.frombuffer(path.read_bytes(), dtype="<f8")
        else:
            arr = np.loadtxt(path, delimiter=",", ndmin=2)
        arrays[name] = arr.reshape(info["shape"])
    T, N, Q = meta["shape"]
    return SolutionField(arrays["times"], arrays["grid"], arrays["values"].reshape(T, N, Q),
                         tuple(meta["true_lambda"]), meta["family"], meta["validated"], meta["meta"])


def data_hash(cfg: ExperimentConfig) -> str:
    """Hash of the settings that determine the generated field."""
    keys = {k: cfg.canonical()[k] for k in ("family", "solver")}
    blob = json.dumps({**keys, "format": cfg.data_format}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def cmd_generate(cfg: ExperimentConfig, out: str | None = None) -> Path:
    """Generate the configured dataset under ``<out>/data``; skipped if already current."""
    d = Path(out or cfg.output_dir) / "data"
    sidecar = d / "field.json"
    if sidecar.exists():
        try:
            if json.loads(sidecar.read_text()).get("data_hash") == data_hash(cfg):
                log.info("data already current in %s", d)
                return sidecar
        except ValueError:
            pass
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InvalidConfigError(f"cannot create output directory {d}: {exc}") from exc
    sol = generate_field(cfg)
    extra = {"data_hash": data_hash(cfg), "version": __version__,
             "solver": cfg.canonical()["solver"]}
    return save_field(sol, d, cfg.data_format, extra)


def _field_for(cfg: ExperimentConfig, out) -> SolutionField:
    cmd_generate(cfg, out)
    return load_field(Path(out or cfg.output_dir) / "data")


# ---------------------------------------------------------------- identification

EQUATIONS = {
    "burgers": "u_t + {0} u u_x - {1} u_xx = 0",
    "kdv": "u_t + {0} u u_x + {1} u_xxx = 0",
    "ks": "u_t + {0} u u_x + {1} u_xx + {2} u_xxxx = 0",
    "nls": "i h_t + {0} h_xx + {1} |h|^2 h = 0",
    "ns2d": "u_t + {0} (u u_x + v u_y) = -p_x + {1} (u_xx + u_yy); "
            "v_t + {0} (u v_x + v v_y) = -p_y + {1} (v_xx + v_yy)",
    "fractional_rl": "u_t = {0} D_x^{1} u",
    "fractional_laplacian": "u_t = -(-Laplacian)^({0}/2) u",
}


def equation_string(family: str, lam) -> str:
    return EQUATIONS[family].format(*(f"{v:.4f}" for v in lam))


@dataclass
class RunRecord:
    family: str
    noise_pct: float
    dt: float
    k_prev: int
    k_curr: int
    pair_seed: int
    train_seed: int
    lam: tuple[float, ...] = ()
    nlml: float = float("nan")
    sigma2: float = float("nan")
    status: str = "ok"
    detail: dict = field(default_factory=dict)

    @staticmethod
    def header(n_lambda: int) -> list[str]:
        return (["family", "noise_pct", "dt"] + [f"lambda_{i + 1}" for i in range(n_lambda)]
                + ["nlml", "sigma2", "pair_seed", "train_seed", "k_prev", "k_curr", "status"])

    def row(self, n_lambda: int) -> list:
        lam = list(self.lam) if self.lam else [float("nan")] * n_lambda
        return ([self.family, self.noise_pct, self.dt] + lam
                + [self.nlml, self.sigma2, self.pair_seed, self.train_seed,
                   self.k_prev, self.k_curr, self.status])


def _identify_task(family, pair: SnapshotPair, tc: TrainConfig, record: RunRecord) -> RunRecord:
    try:
        res = train(ModelSpec(family, FAMILIES[family].true_lambda), pair, tc)
    except HPMError as exc:
        record.status = f"failed: {type(exc).__name__}"
        record.detail = {"error": str(exc)}
        return record
    record.lam = tuple(float(v) for v in res.lam)
    record.nlml = res.nlml
    record.sigma2 = res.sigma2
    record.detail = _result_detail(res)
    return record


def _result_detail(res: TrainResult) -> dict:
    return {
        "theta": [{"gamma": t.gamma, "weights": list(t.weights)} for t in res.theta],
        "converged": res.converged, "restarts_run": res.restarts_run,
        "iterations": res.iterations, "restart_nlml": res.restart_nlml,
    }


def _make_task(cfg: ExperimentConfig, sol: SolutionField, k_prev: int, gap: int,
               noise_idx: int, threads: int = 1, seed_gap: int | None = None):
    """Pair and training settings for one run.

    Seeds derive from (master seed, noise level, snapshot, ``seed_gap``);
    ``seed_gap`` defaults to ``gap``.  Gap sweeps pass a fixed value so every
    gap sees the same point subsets and restarts.
    """
    noise = cfg.data.noise[noise_idx]
    sg = gap if seed_gap is None else seed_gap
    pair_seed = derive_seed(cfg.seed, _PAIR, noise_idx, k_prev, sg)
    train_seed = derive_seed(cfg.seed, _TRAIN, noise_idx, k_prev, sg)
    pair = make_pair(sol, k_prev, k_prev + gap, cfg.data.n_prev, cfg.data.n_curr, noise, pair_seed)
    tc = TrainConfig(restarts=cfg.train.restarts, max_iters=cfg.train.max_iters, seed=train_seed,
                     threads=threads, gtol=cfg.train.gtol, ftol=cfg.train.ftol)
    rec = RunRecord(cfg.family, noise, pair.dt, k_prev, k_prev + gap, pair_seed, train_seed)
    return (cfg.family, pair, tc, rec)


def _run_tasks(tasks, threads: int) -> list[RunRecord]:
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_identify_task, *zip(*tasks)))
    return [_identify_task(*t) for t in tasks]


def _choose_snapshot(cfg: ExperimentConfig, gap: int) -> int:
    if cfg.data.snapshot is not None:
        return cfg.data.snapshot
    rng = np.random.default_rng(derive_seed(cfg.seed, _SNAPSHOT))
    return int(rng.integers(0, cfg.n_snapshots - gap))


def cmd_identify(cfg: ExperimentConfig, out: str | None = None, threads: int = 1) -> RunRecord:
    """Identify the PDE parameters from one snapshot pair and record the result.

    Uses the first noise level of the config.  Writes ``identify.csv``,
    ``identify.json`` and the plot data ``identify_points.csv`` and
    ``identify_curves.csv``.
    """
    out_dir = Path(out or cfg.output_dir)
    sol = _field_for(cfg, out_dir)
    gap = cfg.data.dt_multiplier
    k = _choose_snapshot(cfg, gap)
    family, pair, tc, rec = _make_task(cfg, sol, k, gap, 0, threads)
    rec = _identify_task(family, pair, tc, rec)
    if rec.status != "ok":
        raise_training_failure(rec)
    n_lambda = FAMILIES[cfg.family].n_lambda
    _write_text(out_dir / "identify.csv", _csv_text(RunRecord.header(n_lambda), [rec.row(n_lambda)]))
    eq = equation_string(cfg.family, rec.lam)
    record = {
        "equation": eq, "true_equation": equation_string(cfg.family, FAMILIES[cfg.family].true_lambda),
        "lambda": list(rec.lam), "nlml": rec.nlml, "sigma2": rec.sigma2, "dt": rec.dt,
        "k_prev": rec.k_prev, "k_curr": rec.k_curr, "noise_pct": rec.noise_pct,
        "result": rec.detail,
        "provenance": provenance(cfg, pair_seed=rec.pair_seed, train_seed=rec.train_seed),
    }
    _write_text(out_dir / "identify.json", _json_text(record))
    _write_plot_data(out_dir, sol, pair, rec)
    return rec


def raise_training_failure(rec: RunRecord):
    raise TrainingFailedError(f"identification failed: {rec.detail.get('error', rec.status)}",
                              diagnostics=rec.detail)


def _write_plot_data(out_dir: Path, sol: SolutionField, pair: SnapshotPair, rec: RunRecord):
    labels = list(pair.field_labels)
    D = sol.grid.shape[1]
    coords = ["x", "y"][:D] if D <= 2 else [f"x{i}" for i in range(D)]
    rows = []
    for tag, X, H in (("prev", pair.x_prev, pair.h_prev), ("curr", pair.x_curr, pair.h_curr)):
        rows += [[tag] + list(x) + list(h) for x, h in zip(X, H)]
    _write_text(out_dir / "identify_points.csv", _csv_text(["snapshot"] + coords + labels, rows))
    cols = coords + [f"{q}_prev" for q in labels] + [f"{q}_curr" for q in labels]
    vals = np.hstack([sol.grid, sol.values[rec.k_prev], sol.values[rec.k_curr]])
    _write_text(out_dir / "identify_curves.csv", _csv_text(cols, vals.tolist()))


# ---------------------------------------------------------------- sweeps and tables

def quartiles(values) -> tuple[float, float, float]:
    """First quartile, median and third quartile by linear interpolation."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise InvalidInputError("quartiles of an empty sample")
    q1, q2, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    return float(q1), float(q2), float(q3)


@dataclass
class ResultTable:
    """Rows keyed by noise level or Δt; cells are quartiles or point estimates."""

    family: str
    row_key: str
    rows: list[tuple[float, list[tuple[float, ...]]]]
    param_names: tuple[str, ...]
    true_lambda: tuple[float, ...]
    config_hash: str = ""
    n_runs: list[int] = field(default_factory=list)

    @property
    def stats(self) -> tuple[str, ...]:
        width = len(self.rows[0][1][0]) if self.rows else 3
        return ("q1", "median", "q3") if width == 3 else ("estimate",)

    def header(self) -> list[str]:
        return [self.row_key] + [f"{p}_{s}" for p in self.param_names for s in self.stats] + ["n_runs"]

    def csv(self) -> str:
        body = []
        for (key, cells), n in zip(self.rows, self.n_runs or [0] * len(self.rows)):
            body.append([key] + [c for cell in cells for c in cell] + [n])
        return _csv_text(self.header(), body)

    def metadata(self) -> dict:
        return {"family": self.family, "true_lambda": list(self.true_lambda),
                "config_hash": self.config_hash, "version": __version__,
                "row_key": self.row_key, "params": list(self.param_names)}


def quartile_table(records: list[RunRecord], family: str, config_hash: str = "") -> ResultTable:
    info = FAMILIES[family]
    levels = sorted({r.noise_pct for r in records})
    rows, counts = [], []
    for lvl in levels:
        good = [r for r in records if r.noise_pct == lvl and r.status == "ok"]
        cells = []
        for i in range(info.n_lambda):
            cells.append(quartiles([r.lam[i] for r in good]) if good else (float("nan"),) * 3)
        rows.append((lvl, cells))
        counts.append(len(good))
    return ResultTable(family, "noise_pct", rows, info.param_names, info.true_lambda, config_hash, counts)


def estimate_table(records: list[RunRecord], family: str, config_hash: str = "") -> ResultTable:
    info = FAMILIES[family]
    rows, counts = [], []
    for r in sorted(records, key=lambda r: r.dt):
        ok = r.status == "ok"
        cells = [(r.lam[i] if ok else float("nan"),) for i in range(info.n_lambda)]
        rows.append((r.dt, cells))
        counts.append(int(ok))
    return ResultTable(family, "dt", rows, info.param_names, info.true_lambda, config_hash, counts)


def _write_runs(out_dir: Path, name: str, cfg: ExperimentConfig, records: list[RunRecord]):
    n_lambda = FAMILIES[cfg.family].n_lambda
    _write_text(out_dir / f"{name}_runs.csv",
                _csv_text(RunRecord.header(n_lambda), [r.row(n_lambda) for r in records]))
    failures = {f"{r.k_prev}-{r.k_curr}@{fmt(r.noise_pct)}": r.detail for r in records if r.status != "ok"}
    meta = {"provenance": provenance(cfg), "failures": failures, "n_runs": len(records)}
    _write_text(out_dir / f"{name}_runs.json", _json_text(meta))


def _write_table(out_dir: Path, name: str, table: ResultTable):
    _write_text(out_dir / f"{name}_table.csv", table.csv())
    _write_text(out_dir / f"{name}_table.json", _json_text(table.metadata()))


def sweep_indices(cfg: ExperimentConfig, gap: int) -> list[int]:
    """Earlier-snapshot indices of all pairs ``(k, k + gap)``, thinned evenly to ``max_pairs``."""
    ks = list(range(cfg.n_snapshots - gap))
    m = cfg.data.max_pairs
    if m is not None and m < len(ks):
        pick = np.unique(np.round(np.linspace(0, len(ks) - 1, m)).astype(int))
        ks = [ks[i] for i in pick]
    return ks


def cmd_sweep_pairs(cfg: ExperimentConfig, out: str | None = None, threads: int = 1) -> ResultTable:
    """Identify on every consecutive pair at every noise level and tabulate quartiles."""
    out_dir = Path(out or cfg.output_dir)
    sol = _field_for(cfg, out_dir)
    gap = cfg.data.dt_multiplier
    tasks = [_make_task(cfg, sol, k, gap, j)
             for j in range(len(cfg.data.noise)) for k in sweep_indices(cfg, gap)]
    records = _run_tasks(tasks, threads)
    _write_runs(out_dir, "sweep_pairs", cfg, records)
    table = quartile_table(records, cfg.family, cfg.config_hash)
    _write_table(out_dir, "sweep_pairs", table)
    return table


def cmd_sweep_dt(cfg: ExperimentConfig, out: str | None = None, threads: int = 1) -> ResultTable:
    """Fix the earlier snapshot and widen the gap through ``dt_multipliers``."""
    if not cfg.data.dt_multipliers:
        raise InvalidConfigError("dt_multipliers must list at least one gap")
    out_dir = Path(out or cfg.output_dir)
    sol = _field_for(cfg, out_dir)
    k = _choose_snapshot(cfg, max(cfg.data.dt_multipliers))
    tasks = [_make_task(cfg, sol, k, m, 0, seed_gap=0) for m in cfg.data.dt_multipliers]
    records = _run_tasks(tasks, threads)
    _write_runs(out_dir, "sweep_dt", cfg, records)
    table = estimate_table(records, cfg.family, cfg.config_hash)
    _write_table(out_dir, "sweep_dt", table)
    return table


# ---------------------------------------------------------------- report

def _read_runs(path: Path) -> tuple[str, list[RunRecord]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    records = []
    for r in rows:
        lam = tuple(float(r[k]) for k in r if k.startswith("lambda_"))
        records.append(RunRecord(
            r["family"], float(r["noise_pct"]), float(r["dt"]), int(r["k_prev"]), int(r["k_curr"]),
            int(r["pair_seed"]), int(r["train_seed"]), lam if r["status"] == "ok" else (),
            float(r["nlml"]), float(r["sigma2"]), r["status"],
        ))
    family = records[0].family if records else ""
    return family, records


def cmd_report(results_dir, out: str | None = None) -> list[Path]:
    """Rebuild the summary tables and plot-data files from run records.

    Scans ``results_dir`` recursively for ``*_runs.csv`` and identify
    outputs and writes them under ``<out or results_dir>/report``.
    """
    root = Path(results_dir)
    report = Path(out) if out else root / "report"
    written: list[Path] = []
    runs = sorted(p for p in root.rglob("*_runs.csv") if report not in p.parents)
    idents = sorted(p for p in root.rglob("identify.json") if report not in p.parents)
    if not runs and not idents:
        warnings.warn(f"no run records under {root}; the report is empty", stacklevel=2)
        return written
    for path in runs:
        family, records = _read_runs(path)
        if not records:
            continue
        name = path.name[: -len("_runs.csv")]
        rel = path.parent.relative_to(root)
        table = estimate_table(records, family) if name == "sweep_dt" else quartile_table(records, family)
        dest = report / rel / f"{name}_table.csv"
        _write_text(dest, table.csv())
        written.append(dest)
    summary = []
    for path in idents:
        rec = json.loads(path.read_text())
        rel = path.parent.relative_to(root)
        summary.append([str(rel), rec["true_equation"], rec["equation"]])
        for fname in ("identify_points.csv", "identify_curves.csv"):
            src = path.parent / fname
            if src.exists():
                dest = report / rel / fname
                _write_bytes(dest, src.read_bytes())
                written.append(dest)
    if summary:
        dest = report / "equations.csv"
        _write_text(dest, _csv_text(["run", "correct", "identified"], summary))
        written.append(dest)
    return written
