"""Particle simulations whose displacement densities obey fractional equations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError, InvalidParameterError
from .fields import SolutionField

BLOCK = 100_000


def _block_rngs(n_particles: int, seed: int):
    n_blocks = max(1, -(-n_particles // BLOCK))
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    sizes = [min(BLOCK, n_particles - b * BLOCK) for b in range(n_blocks)]
    return [(np.random.default_rng(c), n) for c, n in zip(children, sizes)]


def chambers_mallows_stuck(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    """Standard symmetric alpha-stable variates (characteristic function ``exp(-|w|**alpha)``)."""
    if not 0 < alpha <= 2:
        raise InvalidParameterError(f"alpha must lie in (0, 2], got {alpha}")
    V = rng.uniform(-0.5 * np.pi, 0.5 * np.pi, size)
    W = rng.exponential(1.0, size)
    if alpha == 1.0:
        return np.tan(V)
    return (np.sin(alpha * V) / np.cos(V) ** (1.0 / alpha)
            * (np.cos(V - alpha * V) / W) ** ((1.0 - alpha) / alpha))


def _simulate(increments, n_particles, n_steps, seed):
    if n_particles < 1 or n_steps < 0:
        raise InvalidInputError("need at least one particle and non-negative steps")
    out = np.zeros((n_steps + 1, n_particles))
    start = 0
    for rng, n in _block_rngs(n_particles, seed):
        steps = increments(rng, (n_steps, n))
        out[1:, start:start + n] = np.cumsum(steps, axis=0)
        start += n
    return out


def simulate_brownian(n_particles: int, step_dt: float, n_steps: int, seed: int) -> np.ndarray:
    """Positions ``(n_steps + 1, n_particles)`` of Brownian particles started at 0 (Var = t)."""
    sd = np.sqrt(step_dt)
    return _simulate(lambda rng, shape: sd * rng.standard_normal(shape), n_particles, n_steps, seed)


def simulate_alpha_stable(alpha: float, n_particles: int, step_dt: float, n_steps: int,
                          seed: int) -> np.ndarray:
    """Positions of symmetric alpha-stable Levy particles; increments scaled by ``step_dt**(1/alpha)``."""
    if not 0 < alpha <= 2:
        raise InvalidParameterError(f"alpha must lie in (0, 2], got {alpha}")
    scale = step_dt ** (1.0 / alpha)
    return _simulate(lambda rng, shape: scale * chambers_mallows_stuck(alpha, shape, rng),
                     n_particles, n_steps, seed)


def histogram_density(samples, n_bins: int, value_range=None):
    """Bin centers and a density that integrates to one over the binned range."""
    samples = np.asarray(samples, dtype=float).ravel()
    counts, edges = np.histogram(samples, bins=n_bins, range=value_range)
    widths = np.diff(edges)
    total = counts.sum()
    if total == 0:
        raise InvalidInputError("no samples fall inside the histogram range")
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, counts / (total * widths)


def histogram_field(positions, step_dt: float, snapshots, n_bins: int = 100,
                    value_range=None, family: str = "fractional_rl",
                    true_lambda=(0.5, 2.0)) -> SolutionField:
    """Densities of the particle cloud at the chosen step indices on shared bins.

    Without ``value_range`` the bins span the central 99.5% of the last
    snapshot, symmetrized about zero.
    """
    snapshots = list(snapshots)
    if value_range is None:
        last = positions[snapshots[-1]]
        half = float(np.quantile(np.abs(last), 0.995))
        value_range = (-half, half)
    dens = []
    for k in snapshots:
        centers, d = histogram_density(positions[k], n_bins, value_range)
        dens.append(d)
    times = step_dt * np.asarray(snapshots, dtype=float)
    meta = {"value_range": list(value_range), "n_bins": n_bins, "snapshots": snapshots}
    return SolutionField(times, centers, np.array(dens), tuple(true_lambda), family,
                         validated=True, meta=meta)


@dataclass(frozen=True)
class ParticleConfig:
    """Particle cloud whose histograms at steps ``first_step..n_steps`` form the snapshots.

    ``alpha = 2`` simulates Brownian motion (density obeys ``u_t = 0.5 u_xx``);
    ``alpha < 2`` a symmetric stable process (``u_t = -(-Laplacian)^(alpha/2) u``).
    """

    alpha: float = 2.0
    n_particles: int = 100_000
    step_dt: float = 0.01
    first_step: int = 10
    n_steps: int = 11
    n_bins: int = 100
    seed: int = 1


def generate_particles(config: ParticleConfig = ParticleConfig()) -> SolutionField:
    if not 0 <= config.first_step < config.n_steps:
        raise InvalidInputError("need 0 <= first_step < n_steps")
    if config.alpha == 2.0:
        pos = simulate_brownian(config.n_particles, config.step_dt, config.n_steps, config.seed)
        family, lam = "fractional_rl", (0.5, 2.0)
    else:
        pos = simulate_alpha_stable(config.alpha, config.n_particles, config.step_dt,
                                    config.n_steps, config.seed)
        family, lam = "fractional_laplacian", (config.alpha,)
    snaps = list(range(config.first_step, config.n_steps + 1))
    sol = histogram_field(pos, config.step_dt, snaps, config.n_bins, family=family, true_lambda=lam)
    sol.meta.update(alpha=config.alpha, n_particles=config.n_particles, seed=config.seed)
    return sol
