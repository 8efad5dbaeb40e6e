"""Negative log marginal likelihood and multi-restart L-BFGS training.

Kernel amplitudes, inverse length scales and the noise variance are optimized
in log space; PDE coefficients are unconstrained; fractional orders pass
through a scaled sigmoid so they stay inside the range where the spectral
covariances are defined.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import cho_solve
from scipy.optimize import minimize

from .assembly import (
    FRACTIONAL_FAMILIES,
    JointCovariance,
    TableCache,
    assemble,
    jittered_cholesky,
    n_latents,
)
from .errors import (
    AssemblyDegenerateError,
    InvalidInputError,
    InvalidParameterError,
    TrainingFailedError,
)
from .kernels import ArdSeKernelParams
from .models import ModelSpec, SnapshotPair

log = logging.getLogger(__name__)

LOG_POSITIVE = "log_positive"
IDENTITY = "identity"
ORDER_BOUND = {"fractional_rl": 2.5, "fractional_laplacian": 2.0}

FD_REL_STEP = 1e-4
FD_ABS_FLOOR = 1e-6


# ---------------------------------------------------------------- objective

def nlml_terms(cov: JointCovariance, h) -> tuple[float, float, float]:
    """``(data_fit, complexity, constant)`` = ``(h'K^-1 h / 2, log|K| / 2, N log(2 pi) / 2)``."""
    h = np.asarray(h, dtype=float).ravel()
    if h.shape[0] != cov.size:
        raise InvalidInputError(f"observation vector has {h.shape[0]} entries, covariance {cov.size}")
    if cov.chol is None:
        cov.chol, cov.jitter_applied = jittered_cholesky(cov.matrix)
    L = cov.chol
    alpha = cho_solve((L, True), h, check_finite=False)
    data_fit = 0.5 * float(h @ alpha)
    complexity = float(np.sum(np.log(np.diag(L))))
    return data_fit, complexity, 0.5 * h.shape[0] * math.log(2 * math.pi)


def nlml(cov: JointCovariance, h) -> float:
    """Negative log marginal likelihood; ``inf`` when the covariance cannot be factorized."""
    try:
        return float(sum(nlml_terms(cov, h)))
    except AssemblyDegenerateError:
        return math.inf


# ---------------------------------------------------------------- parameters

def _sigmoid(z):
    return 0.5 * (1.0 + math.tanh(0.5 * z))


@dataclass(frozen=True)
class ParamLayout:
    """Names and transform tags of the packed unconstrained vector for one family."""

    family: str
    dim: int
    names: tuple[str, ...]
    tags: tuple[str, ...]

    @classmethod
    def for_model(cls, model: ModelSpec) -> "ParamLayout":
        names, tags = [], []
        for ell in range(n_latents(model.family)):
            names.append(f"gamma{ell}")
            tags.append(LOG_POSITIVE)
            for d in range(model.dim):
                names.append(f"w{ell}_{d}")
                tags.append(LOG_POSITIVE)
        info = model.info
        for i, pname in enumerate(info.param_names):
            names.append(pname)
            if i in info.order_indices:
                tags.append(f"bounded_sigmoid(0,{ORDER_BOUND[model.family]})")
            else:
                tags.append(IDENTITY)
        names.append("sigma2")
        tags.append(LOG_POSITIVE)
        return cls(model.family, model.dim, tuple(names), tuple(tags))

    def __len__(self):
        return len(self.names)

    @staticmethod
    def _bound(tag: str) -> float:
        return float(tag.split(",")[1].rstrip(")"))

    def decode_entry(self, tag: str, z: float) -> float:
        if tag == LOG_POSITIVE:
            return math.exp(z)
        if tag == IDENTITY:
            return float(z)
        return self._bound(tag) * _sigmoid(z)

    def encode_entry(self, tag: str, v: float) -> float:
        if tag == LOG_POSITIVE:
            if not v > 0:
                raise InvalidInputError(f"positive parameter required, got {v}")
            return math.log(v)
        if tag == IDENTITY:
            return float(v)
        b = self._bound(tag)
        if not 0 < v < b:
            raise InvalidInputError(f"bounded parameter must lie in (0, {b}), got {v}")
        return math.log(v) - math.log(b - v)


@dataclass(frozen=True)
class ParamVector:
    entries: np.ndarray
    layout: ParamLayout

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float).ravel()
        if e.shape[0] != len(self.layout):
            raise InvalidInputError("entry count does not match layout")
        object.__setattr__(self, "entries", e)

    def values(self) -> np.ndarray:
        return np.array([self.layout.decode_entry(t, z) for t, z in zip(self.layout.tags, self.entries)])

    def decode(self) -> tuple[list[ArdSeKernelParams], tuple[float, ...], float]:
        v = self.values()
        D = self.layout.dim
        thetas, k = [], 0
        for _ in range(n_latents(self.layout.family)):
            thetas.append(ArdSeKernelParams(v[k], tuple(v[k + 1:k + 1 + D])))
            k += 1 + D
        lam = tuple(float(x) for x in v[k:-1])
        return thetas, lam, float(v[-1])

    @classmethod
    def encode(cls, layout: ParamLayout, thetas: Sequence[ArdSeKernelParams], lam, sigma2) -> "ParamVector":
        vals = []
        for th in thetas:
            vals.append(th.gamma)
            vals.extend(th.weights)
        vals.extend(np.atleast_1d(lam))
        vals.append(sigma2)
        if len(vals) != len(layout):
            raise InvalidInputError("values do not match layout")
        return cls(np.array([layout.encode_entry(t, v) for t, v in zip(layout.tags, vals)]), layout)


# ---------------------------------------------------------------- objective wrapper

class Objective:
    """NLML of one (model family, snapshot pair) as a function of the packed vector."""

    def __init__(self, model: ModelSpec, pair: SnapshotPair, **assemble_kw):
        pair.check_model(model)
        self.model = model
        self.pair = pair
        self.layout = ParamLayout.for_model(model)
        self.h = pair.stacked()
        self.assemble_kw = dict(assemble_kw)
        if model.family not in FRACTIONAL_FAMILIES:
            # kernel tables survive stencil steps that leave the weights alone
            self.assemble_kw.setdefault("cache", TableCache(pair))
        self.n_evals = 0

    def __call__(self, z) -> float:
        self.n_evals += 1
        pv = ParamVector(z, self.layout)
        try:
            # extreme trial points overflow inside the kernel; the Cholesky guard rejects them
            with np.errstate(all="ignore"):
                thetas, lam, sigma2 = pv.decode()
                cov = assemble(self.model.with_lambda(lam), thetas, sigma2, self.pair,
                               **self.assemble_kw)
                val = nlml(cov, self.h)
        except (AssemblyDegenerateError, FloatingPointError, OverflowError):
            return math.inf
        except (InvalidInputError, InvalidParameterError):
            # overflowed/underflowed hyperparameters
            return math.inf
        return val if np.isfinite(val) else math.inf

    def grad(self, z, f0: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Central-difference gradient and a per-component ``degenerate`` flag.

        Step per coordinate is ``max(1e-4 |z_i|, 1e-6)``.  A non-finite stencil
        side falls back to a one-sided difference; both sides non-finite gives 0.
        """
        z = np.asarray(z, dtype=float)
        g = np.zeros_like(z)
        flags = np.zeros(z.shape, dtype=bool)
        for i in range(z.shape[0]):
            step = max(FD_REL_STEP * abs(z[i]), FD_ABS_FLOOR)
            zp, zm = z.copy(), z.copy()
            zp[i] += step
            zm[i] -= step
            fp, fm = self(zp), self(zm)
            if np.isfinite(fp) and np.isfinite(fm):
                g[i] = (fp - fm) / (2 * step)
                continue
            if f0 is None:
                f0 = self(z)
            if np.isfinite(fp) and np.isfinite(f0):
                g[i] = (fp - f0) / step
            elif np.isfinite(fm) and np.isfinite(f0):
                g[i] = (f0 - fm) / step
            else:
                flags[i] = True
        return g, flags


def nlml_grad(model: ModelSpec, pair: SnapshotPair, params: ParamVector) -> np.ndarray:
    return Objective(model, pair).grad(params.entries)[0]


# ---------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainConfig:
    restarts: int = 10
    max_iters: int = 500
    seed: int = 0
    threads: int = 1
    # scipy L-BFGS-B tolerances; the optimizer runs unbounded (plain L-BFGS)
    gtol: float = 1e-5
    ftol: float = 1e-12


@dataclass
class TrainResult:
    theta: list[ArdSeKernelParams]
    lam: tuple[float, ...]
    sigma2: float
    nlml: float
    restarts_run: int
    converged: bool
    iterations: list[int]
    restart_nlml: list[float] = field(default_factory=list)
    restart_messages: list[str] = field(default_factory=list)
    z: np.ndarray | None = field(default=None, repr=False)
    family: str = ""


def initial_point(model: ModelSpec, pair: SnapshotPair, rng: np.random.Generator) -> np.ndarray:
    """Random start: log-uniform hyperparameters over two decades, scaled by data ranges.

    PDE coefficients start at 0, except the leading one at 1.0 so that the
    operator is not the identity; fractional orders start at 1.0.
    """
    layout = ParamLayout.for_model(model)
    h = pair.stacked()
    scale = float(np.std(h))
    if not (np.isfinite(scale) and scale > 0):
        scale = 1.0
    X = np.vstack([pair.x_prev, pair.x_curr])
    span = np.ptp(X, axis=0)
    span = np.where(span > 0, span, 1.0)
    lo, hi = math.log(0.1), math.log(10.0)
    thetas = []
    for _ in range(n_latents(model.family)):
        gamma = scale * math.exp(rng.uniform(lo, hi))
        w = tuple(10.0 / span[d] * math.exp(rng.uniform(lo, hi)) for d in range(model.dim))
        thetas.append(ArdSeKernelParams(gamma, w))
    info = model.info
    lam = [0.0] * info.n_lambda
    lam[0] = 1.0
    for i in info.order_indices:
        lam[i] = 1.0
    sigma2 = 1e-3 * scale**2 * math.exp(rng.uniform(lo, hi))
    return ParamVector.encode(layout, thetas, lam, sigma2).entries


def _run_restart(model, pair, config: TrainConfig, r: int, assemble_kw) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, r]))
    obj = Objective(model, pair, **assemble_kw)
    z0 = initial_point(model, pair, rng)
    cache = {}

    def fun(z):
        f = obj(z)
        cache["last"] = (z.copy(), f)
        return f if np.isfinite(f) else 1e300

    def jac(z):
        f0 = cache["last"][1] if "last" in cache and np.array_equal(cache["last"][0], z) else None
        return obj.grad(z, f0)[0]

    f_start = obj(z0)
    if not np.isfinite(f_start):
        return {"z": z0, "nlml": math.inf, "nit": 0, "success": False,
                "message": "non-finite objective at the initial point"}
    res = minimize(fun, z0, jac=jac, method="L-BFGS-B",
                   options={"maxiter": config.max_iters, "maxcor": 10,
                            "gtol": config.gtol, "ftol": config.ftol})
    f = obj(res.x)
    return {"z": res.x, "nlml": f, "nit": int(res.nit), "success": bool(res.success),
            "message": str(res.message)}


def train(model: ModelSpec, pair: SnapshotPair, config: TrainConfig = TrainConfig(),
          **assemble_kw) -> TrainResult:
    """Fit kernel hyperparameters, PDE parameters and noise variance.

    ``model.lam`` only selects the family; its values are not used as a start.
    Returns the restart with the lowest final NLML.
    """
    pair.check_model(model)
    if config.restarts < 1:
        raise InvalidInputError("at least one restart is required")
    args = [(model, pair, config, r, assemble_kw) for r in range(config.restarts)]
    if config.threads > 1 and config.restarts > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            runs = list(pool.map(_run_restart, *zip(*args)))
    else:
        runs = [_run_restart(*a) for a in args]
    finite = [i for i, run in enumerate(runs) if np.isfinite(run["nlml"])]
    if not finite:
        raise TrainingFailedError("all restarts diverged", diagnostics=runs)
    best = min(finite, key=lambda i: runs[i]["nlml"])
    run = runs[best]
    layout = ParamLayout.for_model(model)
    thetas, lam, sigma2 = ParamVector(run["z"], layout).decode()
    log.info("%s: best restart %d/%d nlml=%.6g lambda=%s", model.family, best, len(runs), run["nlml"], lam)
    return TrainResult(
        theta=thetas, lam=lam, sigma2=sigma2, nlml=float(run["nlml"]),
        restarts_run=len(runs), converged=run["success"],
        iterations=[r["nit"] for r in runs],
        restart_nlml=[float(r["nlml"]) for r in runs],
        restart_messages=[r["message"] for r in runs],
        z=np.asarray(run["z"]), family=model.family,
    )
