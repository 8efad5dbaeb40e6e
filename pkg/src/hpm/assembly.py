"""Joint covariance matrices of the observed snapshots for each PDE family.

Each observed block (a field at t^n or t^{n-1}) is a linear functional of
independent latent Gaussian processes: a list of :class:`OperatorTerm`
objects, each naming the latent it differentiates.  The covariance between
two blocks is then a sum over latents of operator-applied kernel Gram
matrices, which covers the scalar families, the two-field Schroedinger
system and the stream-function/pressure Navier-Stokes model with one code
path.  The fractional families replace the differential blocks by spectral
ones.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AssemblyDegenerateError, InvalidInputError, UnsupportedModelError
from .kernels import ArdSeKernelParams, DerivativeTable, se_gram
from .models import ModelSpec, SnapshotPair
from .operators import OperatorTerm, build_linearized, terms_gram
from .spectral import (
    FRACTIONAL_LAPLACIAN,
    IDENTITY,
    RIEMANN_LIOUVILLE,
    FourierSymbol,
    spectral_cross_gram,
    spectral_self_gram,
)

JITTER_START = 1e-10
JITTER_CAP = 1e-4
DIFFERENTIAL_FAMILIES = ("burgers", "kdv", "ks", "nls", "ns2d")
FRACTIONAL_FAMILIES = ("fractional_rl", "fractional_laplacian")


def n_latents(family: str) -> int:
    """Number of independent latent GPs (and kernel parameter sets) per family."""
    return 2 if family in ("nls", "ns2d") else 1


@dataclass
class JointCovariance:
    """Assembled covariance ``K`` (noise included, jitter excluded) and its factor.

    ``chol`` is the lower Cholesky factor of ``K + jitter_applied * I``.
    """

    matrix: np.ndarray
    block_layout: list[tuple[str, int, int]]
    jitter_applied: float = 0.0
    chol: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def block(self, a: str, b: str) -> np.ndarray:
        lay = {name: (off, n) for name, off, n in self.block_layout}
        (oa, na), (ob, nb) = lay[a], lay[b]
        return self.matrix[oa:oa + na, ob:ob + nb]


def jittered_cholesky(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky of ``K + j I`` with the smallest ``j`` on the jitter ladder that works.

    ``K`` itself is tried first; on failure ``j`` grows tenfold from
    1e-10*mean(diag) up to 1e-4*mean(diag).
    """
    scale = float(np.mean(np.diag(K)))
    if not np.isfinite(scale) or scale <= 0 or not np.all(np.isfinite(K)):
        raise AssemblyDegenerateError("covariance has non-positive or non-finite diagonal")
    try:
        return np.linalg.cholesky(K), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_START * scale
    idx = np.diag_indices_from(K)
    while jitter <= JITTER_CAP * scale * (1 + 1e-9):
        A = K.copy()
        A[idx] += jitter
        try:
            return np.linalg.cholesky(A), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise AssemblyDegenerateError("covariance not positive definite at the jitter cap")


@dataclass(frozen=True)
class Observable:
    """A block of observations: a linear functional of latents evaluated on ``points``."""

    label: str
    points: str  # "curr" or "prev"
    terms: tuple[OperatorTerm, ...]


def functional_cov(a: Observable, b: Observable, tables) -> np.ndarray:
    """Covariance block between two observables.

    ``tables(latent, set_a, set_b)`` returns the :class:`DerivativeTable` for
    that latent kernel on the two point sets.
    """
    out = None
    for latent in sorted({t.latent for t in a.terms} & {t.latent for t in b.terms}):
        ta = [t for t in a.terms if t.latent == latent]
        tb = [t for t in b.terms if t.latent == latent]
        g = terms_gram(ta, tb, tables(latent, a.points, b.points))
        out = g if out is None else out + g
    if out is None:
        tab = tables(0, a.points, b.points)
        out = np.zeros(tab.shape)
    return out


class TableCache:
    """Derivative tables of one snapshot pair, keyed by kernel weights.

    Reusing a cache across calls with the same pair skips the kernel work
    whenever only amplitudes, PDE parameters or the noise level change, as
    in finite-difference gradient stencils.
    """

    def __init__(self, pair: SnapshotPair, capacity: int = 24):
        self.sets = {"curr": pair.x_curr, "prev": pair.x_prev}
        self.capacity = capacity
        self._tables: OrderedDict = OrderedDict()

    def get(self, latent: int, sa: str, sb: str, theta: ArdSeKernelParams) -> DerivativeTable:
        key = (latent, sa, sb, tuple(theta.weights))
        tab = self._tables.get(key)
        if tab is None:
            tab = DerivativeTable(self.sets[sa], self.sets[sb], theta)
            self._tables[key] = tab
            if len(self._tables) > self.capacity:
                self._tables.popitem(last=False)
        else:
            self._tables.move_to_end(key)
        return tab.with_gamma(theta)


def _assemble_observables(observables: Sequence[Observable], thetas: Sequence[ArdSeKernelParams],
                          pair: SnapshotPair, sigma2: float, factor: bool,
                          cache: TableCache | None = None) -> JointCovariance:
    sets = {"curr": pair.x_curr, "prev": pair.x_prev}
    if cache is None:
        cache = TableCache(pair)

    def tables(latent, sa, sb):
        return cache.get(latent, sa, sb, thetas[latent])

    sizes = [sets[o.points].shape[0] for o in observables]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    N = int(offsets[-1])
    K = np.empty((N, N))
    for i, a in enumerate(observables):
        for j in range(i, len(observables)):
            b = observables[j]
            blk = functional_cov(a, b, tables)
            sa = slice(offsets[i], offsets[i + 1])
            sb = slice(offsets[j], offsets[j + 1])
            if i == j:
                blk = 0.5 * (blk + blk.T)
                K[sa, sa] = blk
            else:
                K[sa, sb] = blk
                K[sb, sa] = blk.T
    layout = [(o.label, int(offsets[i]), sizes[i]) for i, o in enumerate(observables)]
    return _finish(K, layout, sigma2, factor)


def _finish(K, layout, sigma2, factor) -> JointCovariance:
    if sigma2 < 0:
        raise InvalidInputError("noise variance must be non-negative")
    K[np.diag_indices_from(K)] += sigma2
    cov = JointCovariance(K, layout)
    if factor:
        cov.chol, cov.jitter_applied = jittered_cholesky(K)
    return cov


def _ident(dim, latent=0):
    return OperatorTerm(1.0, (0,) * dim, latent)


def _dt(pair, dt):
    return pair.dt if dt is None else float(dt)


def assemble_scalar(model: ModelSpec, theta: ArdSeKernelParams, sigma2: float, pair: SnapshotPair,
                    *, dt: float | None = None, factor: bool = True,
                    cache: TableCache | None = None) -> JointCovariance:
    """Two-block hidden physics covariance for Burgers, KdV and Kuramoto-Sivashinsky."""
    if model.family not in ("burgers", "kdv", "ks"):
        raise UnsupportedModelError(f"{model.family} is not a scalar differential family")
    pair.check_model(model)
    (row,) = build_linearized(model, model.lam, _dt(pair, dt), pair.h_prev)
    obs = [
        Observable("u^n", "curr", (_ident(1),)),
        Observable("u^{n-1}", "prev", row.terms),
    ]
    return _assemble_observables(obs, [theta], pair, sigma2, factor, cache)


def assemble_nls(model: ModelSpec, theta_u: ArdSeKernelParams, theta_v: ArdSeKernelParams,
                 sigma2: float, pair: SnapshotPair, *, dt: float | None = None,
                 factor: bool = True, cache: TableCache | None = None) -> JointCovariance:
    """Four-block covariance over (u^n, v^n, u^{n-1}, v^{n-1}) with independent u, v priors."""
    if model.family != "nls":
        raise UnsupportedModelError("assemble_nls needs the nls family")
    pair.check_model(model)
    row_u, row_v = build_linearized(model, model.lam, _dt(pair, dt), pair.h_prev)
    obs = [
        Observable("u^n", "curr", (_ident(1, 0),)),
        Observable("v^n", "curr", (_ident(1, 1),)),
        Observable("u^{n-1}", "prev", row_u.terms),
        Observable("v^{n-1}", "prev", row_v.terms),
    ]
    return _assemble_observables(obs, [theta_u, theta_v], pair, sigma2, factor, cache)


# velocity components in terms of the stream function: u = psi_y, v = -psi_x
_STREAM = {0: ((0, 1), 1.0), 1: ((1, 0), -1.0)}


def ns_observables(lam, dt, prev_values) -> list[Observable]:
    model = ModelSpec("ns2d", lam)
    rows = build_linearized(model, model.lam, dt, prev_values)
    obs = [
        Observable("u^n", "curr", (OperatorTerm(1.0, (0, 1), 0),)),
        Observable("v^n", "curr", (OperatorTerm(-1.0, (1, 0), 0),)),
    ]
    for q, row in enumerate(rows):
        shift, sign = _STREAM[q]
        terms = [t.shifted(shift).scaled(sign) for t in row.terms]
        terms = [OperatorTerm(t.coeff, t.deriv_orders, 0) for t in terms]
        if dt:
            terms.append(OperatorTerm(dt, (1, 0) if q == 0 else (0, 1), 1))
        obs.append(Observable("uv"[q] + "^{n-1}", "prev", tuple(terms)))
    return obs


def assemble_ns(model: ModelSpec, theta_psi: ArdSeKernelParams, theta_p: ArdSeKernelParams,
                sigma2: float, pair: SnapshotPair, *, dt: float | None = None,
                factor: bool = True, cache: TableCache | None = None) -> JointCovariance:
    """Four-block velocity covariance from a stream-function prior plus a latent pressure.

    Pressure is never observed; it enters only the t^{n-1} rows through
    ``dt * grad p``.
    """
    if model.family != "ns2d":
        raise UnsupportedModelError("assemble_ns needs the ns2d family")
    pair.check_model(model)
    obs = ns_observables(model.lam, _dt(pair, dt), pair.h_prev)
    return _assemble_observables(obs, [theta_psi, theta_p], pair, sigma2, factor, cache)


def fractional_symbol(model: ModelSpec, dt: float) -> FourierSymbol:
    if dt == 0:
        return FourierSymbol(IDENTITY)
    if model.family == "fractional_rl":
        return FourierSymbol(RIEMANN_LIOUVILLE, lambda1=model.lam[0], order=model.lam[1], dt=dt)
    if model.family == "fractional_laplacian":
        return FourierSymbol(FRACTIONAL_LAPLACIAN, order=model.lam[0], dt=dt)
    raise UnsupportedModelError(f"{model.family} is not a fractional family")


def assemble_fractional(model: ModelSpec, theta: ArdSeKernelParams, sigma2: float, pair: SnapshotPair,
                        *, dt: float | None = None, factor: bool = True, rule=None) -> JointCovariance:
    """Two-block covariance whose operator blocks are evaluated spectrally."""
    if model.family not in FRACTIONAL_FAMILIES:
        raise UnsupportedModelError(f"{model.family} is not a fractional family")
    pair.check_model(model)
    sym = fractional_symbol(model, _dt(pair, dt))
    xc, xp = pair.x_curr, pair.x_prev
    knn = se_gram(xc, xc, theta)
    kcross = spectral_cross_gram(xc, xp, theta, sym, rule)
    kself = spectral_self_gram(xp, xp, theta, sym, rule)
    n1, n0 = xc.shape[0], xp.shape[0]
    K = np.block([[0.5 * (knn + knn.T), kcross], [kcross.T, 0.5 * (kself + kself.T)]])
    layout = [("u^n", 0, n1), ("u^{n-1}", n1, n0)]
    return _finish(K, layout, sigma2, factor)


def assemble(model: ModelSpec, thetas: Sequence[ArdSeKernelParams], sigma2: float,
             pair: SnapshotPair, **kw) -> JointCovariance:
    """Dispatch to the family-specific assembler."""
    fam = model.family
    if len(thetas) != n_latents(fam):
        raise InvalidInputError(f"{fam} needs {n_latents(fam)} kernel parameter sets")
    if fam in ("burgers", "kdv", "ks"):
        return assemble_scalar(model, thetas[0], sigma2, pair, **kw)
    if fam == "nls":
        return assemble_nls(model, thetas[0], thetas[1], sigma2, pair, **kw)
    if fam == "ns2d":
        return assemble_ns(model, thetas[0], thetas[1], sigma2, pair, **kw)
    if fam in FRACTIONAL_FAMILIES:
        return assemble_fractional(model, thetas[0], sigma2, pair, **kw)
    raise UnsupportedModelError(f"unknown PDE family {fam!r}")


def velocity_prior_cov(theta_psi: ArdSeKernelParams, X) -> np.ndarray:
    """Prior covariance of ``(u, v)`` stacked at points ``X`` under the stream-function GP."""
    X = np.asarray(X, dtype=float)
    tab = DerivativeTable(X, X, theta_psi)
    comps = [OperatorTerm(1.0, (0, 1)), OperatorTerm(-1.0, (1, 0))]
    blocks = [[terms_gram([a], [b], tab) for b in comps] for a in comps]
    K = np.block(blocks)
    return 0.5 * (K + K.T)
