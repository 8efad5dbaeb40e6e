"""PDE families and the observed data that drive one identification run."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, UnsupportedModelError


@dataclass(frozen=True)
class FamilyInfo:
    n_lambda: int
    dim: int
    outputs: int
    param_names: tuple[str, ...]
    # indices into lambda that are fractional orders (bounded during training)
    order_indices: tuple[int, ...] = ()
    labels: tuple[str, ...] = ("u",)
    true_lambda: tuple[float, ...] = ()


FAMILIES: dict[str, FamilyInfo] = {
    "burgers": FamilyInfo(2, 1, 1, ("lambda1", "lambda2"), true_lambda=(1.0, 0.1)),
    "kdv": FamilyInfo(2, 1, 1, ("lambda1", "lambda2"), true_lambda=(6.0, 1.0)),
    "ks": FamilyInfo(3, 1, 1, ("lambda1", "lambda2", "lambda3"), true_lambda=(1.0, 1.0, 1.0)),
    "nls": FamilyInfo(2, 1, 2, ("lambda1", "lambda2"), labels=("u", "v"), true_lambda=(0.5, 1.0)),
    "ns2d": FamilyInfo(2, 2, 2, ("lambda1", "lambda2"), labels=("u", "v"), true_lambda=(1.0, 0.01)),
    "fractional_rl": FamilyInfo(
        2, 1, 1, ("lambda1", "lambda2"), order_indices=(1,), true_lambda=(0.5, 2.0)
    ),
    "fractional_laplacian": FamilyInfo(
        1, 1, 1, ("alpha",), order_indices=(0,), true_lambda=(1.5,)
    ),
}


def family_info(family: str) -> FamilyInfo:
    try:
        return FAMILIES[family]
    except KeyError:
        raise UnsupportedModelError(f"unknown PDE family {family!r}") from None


@dataclass(frozen=True)
class ModelSpec:
    family: str
    lam: tuple[float, ...]

    def __post_init__(self):
        info = family_info(self.family)
        lam = tuple(float(v) for v in np.atleast_1d(self.lam))
        if len(lam) != info.n_lambda:
            raise InvalidInputError(
                f"{self.family} takes {info.n_lambda} parameters, got {len(lam)}"
            )
        object.__setattr__(self, "lam", lam)

    @property
    def info(self) -> FamilyInfo:
        return FAMILIES[self.family]

    @property
    def dim(self) -> int:
        return self.info.dim

    @property
    def outputs(self) -> int:
        return self.info.outputs

    def with_lambda(self, lam) -> "ModelSpec":
        return ModelSpec(self.family, tuple(lam))


@dataclass(frozen=True)
class SnapshotPair:
    """Two snapshots ``dt`` apart: ``(x_prev, h_prev)`` at t^{n-1}, ``(x_curr, h_curr)`` at t^n.

    ``h_*`` arrays are ``(N, Q)``; 1-D inputs are promoted to one column.
    """

    x_prev: np.ndarray
    h_prev: np.ndarray
    x_curr: np.ndarray
    h_curr: np.ndarray
    dt: float
    field_labels: tuple[str, ...] = ("u",)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        def pts(a):
            a = np.asarray(a, dtype=float)
            return a[:, None] if a.ndim == 1 else a

        for name in ("x_prev", "h_prev", "x_curr", "h_curr"):
            object.__setattr__(self, name, pts(getattr(self, name)))
        if not self.dt > 0:
            raise InvalidInputError(f"dt must be positive, got {self.dt}")
        if self.x_prev.shape[0] != self.h_prev.shape[0] or self.x_curr.shape[0] != self.h_curr.shape[0]:
            raise InvalidInputError("locations and values disagree in length")
        if self.x_prev.shape[0] < 1 or self.x_curr.shape[0] < 1:
            raise InvalidInputError("each snapshot needs at least one point")
        if self.h_prev.shape[1] != self.h_curr.shape[1]:
            raise InvalidInputError("snapshots have different output counts")
        if self.x_prev.shape[1] != self.x_curr.shape[1]:
            raise InvalidInputError("snapshots have different spatial dimensions")
        if len(self.field_labels) != self.h_prev.shape[1]:
            object.__setattr__(self, "field_labels", tuple(f"h{q}" for q in range(self.h_prev.shape[1])))

    @property
    def n_prev(self) -> int:
        return self.x_prev.shape[0]

    @property
    def n_curr(self) -> int:
        return self.x_curr.shape[0]

    @property
    def outputs(self) -> int:
        return self.h_prev.shape[1]

    @property
    def dim(self) -> int:
        return self.x_prev.shape[1]

    def stacked(self) -> np.ndarray:
        """Observation vector ordered (outputs at t^n, then outputs at t^{n-1})."""
        return np.concatenate(
            [self.h_curr[:, q] for q in range(self.outputs)]
            + [self.h_prev[:, q] for q in range(self.outputs)]
        )

    def check_model(self, model: ModelSpec):
        if self.outputs != model.outputs:
            raise InvalidInputError(
                f"{model.family} has {model.outputs} outputs, data has {self.outputs}"
            )
        if self.dim != model.dim:
            raise InvalidInputError(f"{model.family} is {model.dim}-D, data is {self.dim}-D")
