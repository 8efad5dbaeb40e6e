"""Backward-Euler linearized operators as sums of coefficient-times-derivative terms.

Every term carries the latent function it differentiates, so one operator
row can mix latents (the two-field Schroedinger system does).  Coefficients
are either constants or per-point samples aligned with the point set the
row is evaluated on; for the n-1 rows these come straight from the observed
previous snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import InvalidInputError, UnsupportedModelError
from .kernels import MAX_ORDER, ArdSeKernelParams, DerivativeTable, DerivMultiIndexPair, se_partial
from .models import ModelSpec

Coefficient = Union[float, np.ndarray]


@dataclass(frozen=True)
class OperatorTerm:
    coeff: Coefficient
    deriv_orders: tuple[int, ...]
    latent: int = 0

    def __post_init__(self):
        orders = tuple(int(v) for v in np.atleast_1d(self.deriv_orders))
        if any(v < 0 or v > MAX_ORDER for v in orders):
            raise InvalidInputError(f"derivative orders out of range: {orders}")
        object.__setattr__(self, "deriv_orders", orders)
        if np.ndim(self.coeff) == 0:
            object.__setattr__(self, "coeff", float(self.coeff))
        else:
            c = np.asarray(self.coeff, dtype=float).ravel()
            c.setflags(write=False)
            object.__setattr__(self, "coeff", c)

    @property
    def coeff_kind(self) -> str:
        return "constant" if isinstance(self.coeff, float) else "per_point"

    @property
    def is_identity(self) -> bool:
        return not any(self.deriv_orders)

    def coeff_at(self, j: int) -> float:
        if isinstance(self.coeff, float):
            return self.coeff
        if not 0 <= j < self.coeff.shape[0]:
            raise InvalidInputError(f"no coefficient sample at index {j}")
        return float(self.coeff[j])

    def coeff_vector(self, n: int) -> np.ndarray:
        if isinstance(self.coeff, float):
            return np.full(n, self.coeff)
        if self.coeff.shape[0] != n:
            raise InvalidInputError(
                f"coefficient has {self.coeff.shape[0]} samples, point set has {n}"
            )
        return self.coeff

    def scaled(self, a: float) -> "OperatorTerm":
        return OperatorTerm(self.coeff * a, self.deriv_orders, self.latent)

    def shifted(self, orders: Sequence[int]) -> "OperatorTerm":
        """Compose on the right with a constant-coefficient derivative."""
        return OperatorTerm(self.coeff, tuple(a + b for a, b in zip(self.deriv_orders, orders)), self.latent)

    def is_zero(self) -> bool:
        return not np.any(self.coeff)


@dataclass(frozen=True)
class LinearizedOperator:
    """One row ``L h^n = h^{n-1}`` of the linearized backward-Euler scheme.

    Contains exactly one identity term (on latent ``output_index``, coefficient 1).
    """

    terms: tuple[OperatorTerm, ...]
    output_index: int = 0

    def __post_init__(self):
        terms = tuple(self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise InvalidInputError("operator has no terms")
        ident = [t for t in terms if t.is_identity and t.latent == self.output_index]
        if len(ident) != 1 or ident[0].coeff_kind != "constant" or ident[0].coeff != 1.0:
            raise InvalidInputError("operator must contain the unit identity term exactly once")

    def __iter__(self):
        return iter(self.terms)

    def __len__(self):
        return len(self.terms)

    def latents(self) -> set[int]:
        return {t.latent for t in self.terms}


def _terms(op) -> tuple[OperatorTerm, ...]:
    return tuple(op.terms) if isinstance(op, LinearizedOperator) else tuple(op)


def combine(*scaled_ops: tuple[float, Iterable[OperatorTerm]]) -> tuple[OperatorTerm, ...]:
    """Term list of ``sum a_k op_k``."""
    out = []
    for a, op in scaled_ops:
        out.extend(t.scaled(a) for t in _terms(op))
    return tuple(out)


def apply_right(op, params: ArdSeKernelParams, x_i, x_prime_j, coeff_index_j: int) -> float:
    """``(L_{x'} k)(x_i, x'_j)`` with per-point coefficients read at ``j``."""
    total = 0.0
    for t in _terms(op):
        c = t.coeff_at(coeff_index_j)
        if c:
            zeros = (0,) * len(t.deriv_orders)
            total += c * se_partial(DerivMultiIndexPair(zeros, t.deriv_orders), x_i, x_prime_j, params)
    return total


def apply_left_right(op_left, op_right, params: ArdSeKernelParams, x_i, x_prime_j,
                     coeff_i: int, coeff_j: int) -> float:
    """``(L_x L_{x'} k)(x_i, x'_j)``."""
    total = 0.0
    for tl in _terms(op_left):
        cl = tl.coeff_at(coeff_i)
        if not cl:
            continue
        for tr in _terms(op_right):
            cr = tr.coeff_at(coeff_j)
            if cr:
                idx = DerivMultiIndexPair(tl.deriv_orders, tr.deriv_orders)
                total += cl * cr * se_partial(idx, x_i, x_prime_j, params)
    return total


def terms_gram(left_terms, right_terms, table: DerivativeTable) -> np.ndarray:
    """Matrix of ``sum_l sum_r c_l(i) c_r(j) d^{l} d'^{r} k(X_i, Xp_j)`` over one latent."""
    n, m = table.shape
    out = np.zeros((n, m))
    for tl in left_terms:
        if tl.is_zero():
            continue
        for tr in right_terms:
            if tr.is_zero():
                continue
            g = table.gram(tl.deriv_orders, tr.deriv_orders)
            if isinstance(tl.coeff, float) and isinstance(tr.coeff, float):
                out += (tl.coeff * tr.coeff) * g
            else:
                out += np.outer(tl.coeff_vector(n), tr.coeff_vector(m)) * g
    return out


def apply_right_gram(op, params: ArdSeKernelParams, X, Xp) -> np.ndarray:
    table = DerivativeTable(X, Xp, params)
    ident = (OperatorTerm(1.0, (0,) * params.dim),)
    return terms_gram(ident, _terms(op), table)


def apply_left_right_gram(op_left, op_right, params: ArdSeKernelParams, X, Xp) -> np.ndarray:
    table = DerivativeTable(X, Xp, params)
    return terms_gram(_terms(op_left), _terms(op_right), table)


def _nonzero(terms):
    return tuple(t for t in terms if t.is_identity or not t.is_zero())


def build_linearized(model: ModelSpec, lam, dt: float, prev_values) -> list[LinearizedOperator]:
    """Operator rows for ``model`` with nonlinear coefficients frozen at ``prev_values``.

    ``prev_values`` is the ``(N_prev, Q)`` array of observed fields at t^{n-1}.
    Terms whose coefficient vanishes identically are dropped.
    """
    lam = tuple(float(v) for v in np.atleast_1d(lam))
    if len(lam) != model.info.n_lambda:
        raise InvalidInputError(f"{model.family} takes {model.info.n_lambda} parameters")
    if dt < 0:
        raise InvalidInputError("dt must be non-negative")
    prev = np.asarray(prev_values, dtype=float)
    if prev.ndim == 1:
        prev = prev[:, None]
    fam = model.family

    if fam in ("burgers", "kdv", "ks"):
        u = prev[:, 0]
        terms = [OperatorTerm(1.0, (0,)), OperatorTerm(dt * lam[0] * u, (1,))]
        if fam == "burgers":
            terms.append(OperatorTerm(-dt * lam[1], (2,)))
        elif fam == "kdv":
            terms.append(OperatorTerm(dt * lam[1], (3,)))
        else:
            terms += [OperatorTerm(dt * lam[1], (2,)), OperatorTerm(dt * lam[2], (4,))]
        return [LinearizedOperator(_nonzero(terms), 0)]

    if fam == "nls":
        c = prev[:, 0] ** 2 + prev[:, 1] ** 2
        row_u = [
            OperatorTerm(1.0, (0,), latent=0),
            OperatorTerm(dt * lam[0], (2,), latent=1),
            OperatorTerm(dt * lam[1] * c, (0,), latent=1),
        ]
        row_v = [
            OperatorTerm(1.0, (0,), latent=1),
            OperatorTerm(-dt * lam[0], (2,), latent=0),
            OperatorTerm(-dt * lam[1] * c, (0,), latent=0),
        ]
        return [LinearizedOperator(_nonzero(row_u), 0), LinearizedOperator(_nonzero(row_v), 1)]

    if fam == "ns2d":
        u, v = prev[:, 0], prev[:, 1]
        rows = []
        for q in (0, 1):
            rows.append(LinearizedOperator(_nonzero([
                OperatorTerm(1.0, (0, 0), latent=q),
                OperatorTerm(dt * lam[0] * u, (1, 0), latent=q),
                OperatorTerm(dt * lam[0] * v, (0, 1), latent=q),
                OperatorTerm(-dt * lam[1], (2, 0), latent=q),
                OperatorTerm(-dt * lam[1], (0, 2), latent=q),
            ]), q))
        return rows

    raise UnsupportedModelError(
        f"{fam!r} has no differential linearization; fractional families use Fourier symbols"
    )
