"""ARD squared-exponential kernel and its closed-form mixed partial derivatives.

The kernel is

    k(x, x') = gamma**2 * prod_d exp(-w_d**2 (x_d - x'_d)**2 / 2)

and every mixed partial factorizes over dimensions.  With ``r = x_d - x'_d``
and ``a = w_d**2 / 2``,

    (d/dr)**p exp(-a r**2) = (-1)**p a**(p/2) H_p(sqrt(a) r) exp(-a r**2)

where ``H_p`` is the physicists' Hermite polynomial.  Since ``d/dx = d/dr``
and ``d/dx' = -d/dr``, a derivative of order ``m`` on ``x`` and ``n`` on
``x'`` contributes the factor ``(-1)**n (d/dr)**(m+n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, InvalidParameterError, UnsupportedOrderError

MAX_ORDER = 8


@dataclass(frozen=True)
class ArdSeKernelParams:
    """Signal amplitude ``gamma`` and per-dimension inverse length scales."""

    gamma: float
    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(v) for v in np.atleast_1d(self.weights))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "gamma", float(self.gamma))
        if not self.gamma > 0:
            raise InvalidParameterError(f"gamma must be positive, got {self.gamma}")
        if len(w) == 0 or not all(v > 0 for v in w):
            raise InvalidParameterError(f"weights must be positive, got {w}")

    @property
    def dim(self) -> int:
        return len(self.weights)

    def scaled(self, c: float) -> "ArdSeKernelParams":
        return ArdSeKernelParams(self.gamma * c, self.weights)


@dataclass(frozen=True)
class DerivMultiIndexPair:
    """Derivative orders on the first (``left``) and second (``right``) argument."""

    left_orders: tuple[int, ...]
    right_orders: tuple[int, ...]

    def __post_init__(self):
        left = tuple(int(v) for v in self.left_orders)
        right = tuple(int(v) for v in self.right_orders)
        object.__setattr__(self, "left_orders", left)
        object.__setattr__(self, "right_orders", right)
        if len(left) != len(right):
            raise InvalidInputError("left and right orders differ in length")
        if any(v < 0 for v in left + right):
            raise UnsupportedOrderError("derivative orders must be non-negative")
        if any(a + b > MAX_ORDER for a, b in zip(left, right)):
            raise UnsupportedOrderError(
                f"per-dimension total order exceeds {MAX_ORDER}: {left}, {right}"
            )

    @property
    def totals(self) -> tuple[int, ...]:
        return tuple(a + b for a, b in zip(self.left_orders, self.right_orders))

    def swapped(self) -> "DerivMultiIndexPair":
        return DerivMultiIndexPair(self.right_orders, self.left_orders)


def hermite(p: int, z):
    """Physicists' Hermite polynomial ``H_p(z)`` for ``0 <= p <= 8``."""
    if not 0 <= p <= MAX_ORDER or int(p) != p:
        raise UnsupportedOrderError(f"Hermite degree must lie in [0, {MAX_ORDER}], got {p}")
    z = np.asarray(z, dtype=float)
    h_prev = np.ones_like(z)
    if p == 0:
        return h_prev if z.ndim else float(h_prev)
    h = 2.0 * z
    for k in range(1, int(p)):
        h_prev, h = h, 2.0 * z * h - 2.0 * k * h_prev
    return h if z.ndim else float(h)


def _as_point(x, dim=None):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise InvalidInputError("a single point must be a 1-D array")
    if dim is not None and x.shape[0] != dim:
        raise InvalidInputError(f"point has dimension {x.shape[0]}, kernel has {dim}")
    return x


def as_points(X, dim: int) -> np.ndarray:
    """Coerce ``X`` to an ``(n, dim)`` float array."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if dim == 1 else X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise InvalidInputError(f"expected points of dimension {dim}, got shape {X.shape}")
    return X


def _unit_derivative(p: int, r, w: float):
    """(d/dr)**p exp(-w**2 r**2 / 2), vectorized over ``r``."""
    a = np.float64(0.5) * w * w  # numpy scalars overflow to inf instead of raising
    sa = np.sqrt(a)
    return (-1.0) ** p * a ** (0.5 * p) * hermite(p, sa * r) * np.exp(-a * r * r)


def se_eval(x, x_prime, params: ArdSeKernelParams) -> float:
    x = _as_point(x, params.dim)
    xp = _as_point(x_prime, params.dim)
    w = np.asarray(params.weights)
    return float(params.gamma**2 * np.exp(-0.5 * np.sum((w * (x - xp)) ** 2)))


def se_partial(idx: DerivMultiIndexPair, x, x_prime, params: ArdSeKernelParams) -> float:
    """Exact value of the mixed partial ``d^m/dx^m d^n/dx'^n k(x, x')``."""
    x = _as_point(x, params.dim)
    xp = _as_point(x_prime, params.dim)
    if len(idx.left_orders) != params.dim:
        raise InvalidInputError("multi-index dimension does not match kernel")
    val = params.gamma**2
    for d, (m, n) in enumerate(zip(idx.left_orders, idx.right_orders)):
        val *= (-1.0) ** n * _unit_derivative(m + n, x[d] - xp[d], params.weights[d])
    return float(val)


class DerivativeTable:
    """Lazily cached per-dimension derivative factors for two point sets.

    ``gram(left, right)`` returns the matrix of ``se_partial`` values over
    all pairs ``(X[i], Xp[j])``.  Cached grams have unit amplitude, so
    :meth:`with_gamma` can reuse them when only ``gamma`` changes.
    """

    def __init__(self, X, Xp, params: ArdSeKernelParams):
        self.params = params
        self.X = as_points(X, params.dim)
        self.Xp = as_points(Xp, params.dim)
        self._diff = [self.X[:, d][:, None] - self.Xp[:, d][None, :] for d in range(params.dim)]
        self._cache: dict[tuple[int, int], np.ndarray] = {}
        self._gram_cache: dict[tuple, np.ndarray] = {}

    def with_gamma(self, params: ArdSeKernelParams) -> "DerivativeTable":
        """View sharing this table's caches under a new amplitude (same weights)."""
        if tuple(params.weights) != tuple(self.params.weights):
            raise InvalidInputError("with_gamma requires identical weights")
        other = object.__new__(DerivativeTable)
        other.__dict__.update(self.__dict__)
        other.params = params
        return other

    @property
    def shape(self) -> tuple[int, int]:
        return self.X.shape[0], self.Xp.shape[0]

    def factor(self, d: int, p: int) -> np.ndarray:
        key = (d, p)
        out = self._cache.get(key)
        if out is None:
            if p > MAX_ORDER:
                raise UnsupportedOrderError(f"order {p} exceeds {MAX_ORDER}")
            out = _unit_derivative(p, self._diff[d], self.params.weights[d])
            self._cache[key] = out
        return out

    def gram(self, left: Sequence[int], right: Sequence[int]) -> np.ndarray:
        return self.params.gamma**2 * self.unit_gram(left, right)

    def unit_gram(self, left: Sequence[int], right: Sequence[int]) -> np.ndarray:
        """``gram`` for ``gamma = 1``."""
        key = (tuple(left), tuple(right))
        out = self._gram_cache.get(key)
        if out is not None:
            return out
        if len(left) != self.params.dim or len(right) != self.params.dim:
            raise InvalidInputError("multi-index dimension does not match kernel")
        sign = 1.0
        out = None
        for d, (m, n) in enumerate(zip(left, right)):
            if m + n > MAX_ORDER:
                raise UnsupportedOrderError(f"order {m + n} exceeds {MAX_ORDER}")
            if n % 2:
                sign = -sign
            f = self.factor(d, m + n)
            out = f if out is None else out * f
        out = sign * out
        self._gram_cache[key] = out
        return out


def se_partial_gram(idx: DerivMultiIndexPair, X, Xp, params: ArdSeKernelParams) -> np.ndarray:
    return DerivativeTable(X, Xp, params).gram(idx.left_orders, idx.right_orders)


def se_gram(X, Xp, params: ArdSeKernelParams) -> np.ndarray:
    zeros = (0,) * params.dim
    return DerivativeTable(X, Xp, params).gram(zeros, zeros)
