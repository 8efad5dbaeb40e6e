"""Covariances of fractional operators applied to the squared-exponential kernel.

A stationary kernel is the inverse Fourier transform of its spectral density,

    k(x, x') = 1/(2 pi) * int S(w) exp(i w (x - x')) dw,
    S(w) = gamma**2 sqrt(2 pi) / l * exp(-w**2 / (2 l**2)),

with ``l`` the inverse length scale.  Under this convention a derivative in
the second argument multiplies the integrand by ``(-i w)`` and one in the
first argument by ``(i w)``, so a backward-Euler operator with Fourier symbol
``m(w)`` acting on ``x'`` gives the integrand ``S(w) m(w)``; acting on both
arguments gives ``S(w) |m(w)|**2``.

All symbols used here are finite sums of ``c |w|**nu exp(-i phi sign(w))``.
Each such term integrates in closed form against the Gaussian density through
Kummer's confluent hypergeometric function ``1F1``:

    int_0^inf u**nu e^{-u**2/2} cos(u rho) du
        = 2**((nu-1)/2) Gamma((nu+1)/2) 1F1((nu+1)/2; 1/2; -rho**2/2)
    int_0^inf u**nu e^{-u**2/2} sin(u rho) du
        = rho 2**(nu/2) Gamma(nu/2+1) 1F1(nu/2+1; 3/2; -rho**2/2)

which is what the default (``rule=None``) path evaluates.  A Gauss-Hermite
``QuadratureRule`` can be passed instead; it converges quickly for integer
orders but only algebraically when ``nu`` is fractional, because ``|w|**nu``
is not smooth at the origin.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import InvalidInputError, InvalidParameterError
from .kernels import ArdSeKernelParams, as_points

IDENTITY = "identity"
RIEMANN_LIOUVILLE = "riemann_liouville"
FRACTIONAL_LAPLACIAN = "fractional_laplacian"
SYMBOL_KINDS = (IDENTITY, RIEMANN_LIOUVILLE, FRACTIONAL_LAPLACIAN)

DEFAULT_NODES = 120
IMAG_TOL = 1e-10


class SpectralAccuracyWarning(UserWarning):
    """Quadrature did not reach the internal tolerance."""


def rl_multiplier(omega, lambda1: float, lambda2: float, dt: float):
    """Backward-Euler symbol ``1 - dt*lambda1*(-i w)**lambda2`` (principal branch)."""
    if not lambda2 > 0:
        raise InvalidParameterError(f"fractional order must be positive, got {lambda2}")
    omega = np.asarray(omega, dtype=float)
    power = np.abs(omega) ** lambda2 * np.exp(-1j * lambda2 * 0.5 * np.pi * np.sign(omega))
    out = 1.0 - dt * lambda1 * power
    return complex(out) if out.ndim == 0 else out


def frac_laplacian_multiplier(omega, alpha: float, dt: float):
    """Backward-Euler symbol ``1 + dt*|w|**alpha`` of ``I + dt(-Laplacian)**(alpha/2)``."""
    if not 0 < alpha <= 2:
        raise InvalidParameterError(f"alpha must lie in (0, 2], got {alpha}")
    omega = np.asarray(omega, dtype=float)
    out = 1.0 + dt * np.abs(omega) ** alpha
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FourierSymbol:
    """Symbol of a backward-Euler step operator acting on one kernel argument.

    ``riemann_liouville``: ``I - dt*lambda1*D**order`` (``order`` = lambda2).
    ``fractional_laplacian``: ``I + dt*(-Laplacian)**(order/2)`` (``order`` = alpha).
    ``identity``: ``I``.
    """

    kind: str
    lambda1: float = 0.0
    order: float = 1.0
    dt: float = 1.0

    def __post_init__(self):
        if self.kind not in SYMBOL_KINDS:
            raise InvalidParameterError(f"unknown symbol kind {self.kind!r}")
        if not self.order > 0:
            raise InvalidParameterError(f"order must be positive, got {self.order}")
        if not self.dt > 0:
            raise InvalidParameterError(f"dt must be positive, got {self.dt}")

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        if self.kind == IDENTITY:
            return np.ones_like(omega, dtype=complex)
        return self.terms_value(self.terms(), omega)

    def terms(self) -> list[tuple[float, float, float]]:
        """Symbol as ``[(c, nu, phi)]`` meaning ``sum c |w|**nu exp(-i phi sign(w))``."""
        if self.kind == IDENTITY:
            return [(1.0, 0.0, 0.0)]
        if self.kind == RIEMANN_LIOUVILLE:
            return [(1.0, 0.0, 0.0), (-self.dt * self.lambda1, self.order, 0.5 * np.pi * self.order)]
        return [(1.0, 0.0, 0.0), (self.dt, self.order, 0.0)]

    def conj_terms(self):
        return [(c, nu, -phi) for c, nu, phi in self.terms()]

    def abs2_terms(self):
        """Terms of ``|m(w)|**2``, all real (phi = 0 after pairing)."""
        out: dict[float, float] = {}
        ts = self.terms()
        for c1, n1, p1 in ts:
            for c2, n2, p2 in ts:
                # pairs (1,2) and (2,1) combine to 2 c1 c2 cos(p1 - p2)
                out[n1 + n2] = out.get(n1 + n2, 0.0) + c1 * c2 * np.cos(p1 - p2)
        return [(c, nu, 0.0) for nu, c in sorted(out.items()) if c != 0.0]

    @staticmethod
    def terms_value(terms, omega):
        omega = np.asarray(omega, dtype=float)
        out = np.zeros(omega.shape, dtype=complex)
        for c, nu, phi in terms:
            mag = np.abs(omega) ** nu if nu else np.ones_like(omega)
            out = out + c * mag * np.exp(-1j * phi * np.sign(omega))
        return out


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite nodes/weights for ``int f(t) exp(-t**2) dt``."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def count(self) -> int:
        return len(self.nodes)


@lru_cache(maxsize=16)
def gauss_hermite_rule(count: int = DEFAULT_NODES) -> QuadratureRule:
    if count < 1:
        raise InvalidParameterError("quadrature needs at least one node")
    t, w = np.polynomial.hermite.hermgauss(count)
    t.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(t, w)


def _half_line_moments(nu: float, rho: np.ndarray, need_sin: bool):
    """Closed-form cosine/sine moments of ``u**nu exp(-u**2/2)`` on ``[0, inf)``."""
    z = -0.5 * rho * rho
    cos_part = 2.0 ** (0.5 * (nu - 1.0)) * special.gamma(0.5 * (nu + 1.0)) * special.hyp1f1(
        0.5 * (nu + 1.0), 0.5, z
    )
    sin_part = None
    if need_sin:
        sin_part = rho * 2.0 ** (0.5 * nu) * special.gamma(0.5 * nu + 1.0) * special.hyp1f1(
            0.5 * nu + 1.0, 1.5, z
        )
    return cos_part, sin_part


def _closed_form(terms, r: np.ndarray, params: ArdSeKernelParams) -> np.ndarray:
    w = params.weights[0]
    rho = w * r
    out = np.zeros_like(rho)
    for c, nu, phi in terms:
        if c == 0.0:
            continue
        cphi, sphi = np.cos(phi), np.sin(phi)
        need_sin = abs(sphi) > 1e-15
        cos_part, sin_part = _half_line_moments(nu, rho, need_sin)
        val = cphi * cos_part
        if need_sin:
            val = val + sphi * sin_part
        out += c * w**nu * val
    return params.gamma**2 * np.sqrt(2.0 / np.pi) * out


def _quadrature(terms, r: np.ndarray, params: ArdSeKernelParams, rule: QuadratureRule):
    w = params.weights[0]
    omega = np.sqrt(2.0) * w * np.asarray(rule.nodes)
    mult = FourierSymbol.terms_value(terms, omega)
    phase = np.exp(1j * np.multiply.outer(r, omega))
    vals = params.gamma**2 / np.sqrt(np.pi) * (phase * (rule.weights * mult)).sum(axis=-1)
    scale = params.gamma**2 * max(1.0, float(np.max(np.abs(mult))))
    if np.any(np.abs(vals.imag) > IMAG_TOL * scale):
        warnings.warn("non-negligible imaginary part in spectral covariance", SpectralAccuracyWarning)
    return vals.real


def _evaluate(terms, r, params, rule, check):
    if params.dim != 1:
        raise InvalidInputError("spectral covariances are one-dimensional")
    if rule is None:
        return _closed_form(terms, r, params)
    vals = _quadrature(terms, r, params, rule)
    if check and rule.count >= 2:
        coarse = _quadrature(terms, r, params, gauss_hermite_rule(max(1, rule.count // 2)))
        tol = 1e-8 * params.gamma**2 * max(1.0, float(np.max(np.abs(vals))))
        if np.max(np.abs(vals - coarse)) > tol:
            warnings.warn(
                f"{rule.count}-node quadrature did not converge to 1e-8", SpectralAccuracyWarning
            )
    return vals


def spectral_cross_cov(x, x_prime, params: ArdSeKernelParams, symbol: FourierSymbol,
                       rule: QuadratureRule | None = None, check: bool = True) -> float:
    """``k^{n,n-1}(x, x')``: the symbol's operator applied to the second argument."""
    r = np.asarray(float(np.squeeze(x)) - float(np.squeeze(x_prime)))
    return float(_evaluate(symbol.terms(), r, params, rule, check))


def spectral_self_cov(x, x_prime, params: ArdSeKernelParams, symbol: FourierSymbol,
                      rule: QuadratureRule | None = None, check: bool = True) -> float:
    """``k^{n-1,n-1}(x, x')``: the operator applied to both arguments."""
    r = np.asarray(float(np.squeeze(x)) - float(np.squeeze(x_prime)))
    return float(_evaluate(symbol.abs2_terms(), r, params, rule, check))


def spectral_cross_gram(X, Xp, params, symbol, rule=None, check=False) -> np.ndarray:
    X = as_points(X, 1)[:, 0]
    Xp = as_points(Xp, 1)[:, 0]
    r = X[:, None] - Xp[None, :]
    return _evaluate(symbol.terms(), r, params, rule, check)


def spectral_self_gram(X, Xp, params, symbol, rule=None, check=False) -> np.ndarray:
    X = as_points(X, 1)[:, 0]
    Xp = as_points(Xp, 1)[:, 0]
    r = X[:, None] - Xp[None, :]
    return _evaluate(symbol.abs2_terms(), r, params, rule, check)
