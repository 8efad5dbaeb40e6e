"""Solution containers, noise injection and random subsampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInputError
from ..models import FAMILIES, SnapshotPair


@dataclass
class SolutionField:
    """Snapshots of a simulated solution on a fixed grid.

    ``values`` has shape ``(T, N, Q)``; ``grid`` is ``(N, D)``.
    """

    times: np.ndarray
    grid: np.ndarray
    values: np.ndarray
    true_lambda: tuple[float, ...]
    family: str
    validated: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        g = np.asarray(self.grid, dtype=float)
        self.grid = g[:, None] if g.ndim == 1 else g
        v = np.asarray(self.values, dtype=float)
        self.values = v[..., None] if v.ndim == 2 else v
        if self.values.shape[:2] != (self.times.shape[0], self.grid.shape[0]):
            raise InvalidInputError(
                f"values {self.values.shape} do not match {len(self.times)} times x {len(self.grid)} points"
            )
        if len(self.times) > 2:
            steps = np.diff(self.times)
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
                raise InvalidInputError("snapshot times must be uniformly spaced")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("solution contains non-finite values")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian noise with standard deviation ``pct * std(values)`` per output."""

    pct: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.pct < 0:
            raise InvalidInputError("noise fraction must be non-negative")


def add_noise(values, spec: NoiseSpec) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if spec.pct == 0:
        return values.copy()
    rng = np.random.default_rng(spec.seed)
    flat = values.reshape(values.shape[0], -1) if values.ndim > 1 else values[:, None]
    std = flat.std(axis=0)
    noisy = flat + spec.pct * std * rng.standard_normal(flat.shape)
    return noisy.reshape(values.shape)


def subsample(points, values, n_points: int, seed: int):
    """Uniform random subset of ``n_points`` rows (without replacement), sorted by index."""
    points = np.asarray(points)
    values = np.asarray(values)
    N = points.shape[0]
    if not 1 <= n_points <= N:
        raise InvalidInputError(f"cannot draw {n_points} of {N} points")
    if n_points == N:
        return points.copy(), values.copy()
    idx = np.sort(np.random.default_rng(seed).choice(N, size=n_points, replace=False))
    return points[idx], values[idx]


def make_pair(sol: SolutionField, k_prev: int, k_curr: int, n_prev: int, n_curr: int,
              noise_pct: float = 0.0, seed: int = 0) -> SnapshotPair:
    """Snapshot pair from two time indices with independent point sets and noise draws."""
    T = len(sol.times)
    if not (0 <= k_prev < T and 0 <= k_curr < T) or k_curr <= k_prev:
        raise InvalidInputError(f"bad snapshot indices {k_prev}, {k_curr} for {T} snapshots")
    ss = np.random.SeedSequence(seed).spawn(4)
    seeds = [int(s.generate_state(1)[0]) for s in ss]
    # noise is scaled by the std of the whole snapshot, then points are drawn
    full_prev = add_noise(sol.values[k_prev], NoiseSpec(noise_pct, seeds[2]))
    full_curr = add_noise(sol.values[k_curr], NoiseSpec(noise_pct, seeds[3]))
    xp, hp = subsample(sol.grid, full_prev, n_prev, seeds[0])
    xc, hc = subsample(sol.grid, full_curr, n_curr, seeds[1])
    labels = FAMILIES[sol.family].labels if sol.family in FAMILIES else ("u",)
    return SnapshotPair(
        xp, hp, xc, hc, float(sol.times[k_curr] - sol.times[k_prev]), labels,
        meta={"k_prev": k_prev, "k_curr": k_curr, "noise_pct": noise_pct, "seed": seed},
    )

