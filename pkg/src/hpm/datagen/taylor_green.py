"""Analytic Taylor-Green vortex, optionally carried by a uniform background flow.

With zero background flow the advective term of the vortex is a pure
gradient, so it can be absorbed entirely by the (unobserved) pressure and
the advection coefficient is not identifiable from velocity snapshots.  A
constant carrier velocity ``advect = (U, V)`` keeps the field an exact
Navier-Stokes solution (Galilean invariance) while making the advective term
non-potential.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import SolutionField


def taylor_green(nu: float, t: float, grid, advect=(0.0, 0.0)):
    """Velocity ``(u, v)`` and pressure ``p`` at time ``t`` on ``(N, 2)`` points."""
    grid = np.asarray(grid, dtype=float)
    U, V = advect
    x = grid[:, 0] - U * t
    y = grid[:, 1] - V * t
    decay = np.exp(-2.0 * nu * t)
    u = U - np.cos(x) * np.sin(y) * decay
    v = V + np.sin(x) * np.cos(y) * decay
    p = -0.25 * (np.cos(2 * x) + np.cos(2 * y)) * decay**2
    return u, v, p


def taylor_green_field(nu: float = 0.01, dt: float = 0.02, n_snapshots: int = 11,
                       n_grid: int = 50, domain=((0.0, 2 * np.pi), (0.0, 2 * np.pi)),
                       advect=(0.0, 0.0), t0: float = 0.0) -> SolutionField:
    """Velocity snapshots on a uniform ``n_grid x n_grid`` lattice (endpoints excluded)."""
    (ax, bx), (ay, by) = domain
    xs = ax + (bx - ax) * (np.arange(n_grid) + 0.5) / n_grid
    ys = ay + (by - ay) * (np.arange(n_grid) + 0.5) / n_grid
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    grid = np.column_stack([X.ravel(), Y.ravel()])
    times = t0 + dt * np.arange(n_snapshots)
    vals = np.empty((n_snapshots, grid.shape[0], 2))
    for i, t in enumerate(times):
        u, v, _ = taylor_green(nu, t, grid, advect)
        vals[i, :, 0] = u
        vals[i, :, 1] = v
    meta = {"nu": nu, "advect": list(advect), "n_grid": n_grid,
            "domain": [list(domain[0]), list(domain[1])]}
    return SolutionField(times, grid, vals, (1.0, nu), "ns2d", validated=True, meta=meta)


@dataclass(frozen=True)
class TaylorGreenConfig:
    nu: float = 0.01
    dt: float = 0.02
    n_snapshots: int = 11
    n_grid: int = 50
    # carrier flow; see the module docstring
    advect: tuple[float, float] = (0.5, 0.0)
    t0: float = 0.0


def generate_taylor_green(config: TaylorGreenConfig = TaylorGreenConfig()) -> SolutionField:
    return taylor_green_field(nu=config.nu, dt=config.dt, n_snapshots=config.n_snapshots,
                              n_grid=config.n_grid, advect=config.advect, t0=config.t0)
