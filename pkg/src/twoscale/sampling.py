"""Seeded baskets of random nodal fields used by the sampled form checks."""

import numpy as np

from .grid import PERIODIC


def _trig_modes(grid, coords, rng, max_mode):
    p = rng.integers(1, max_mode + 1)
    q = rng.integers(1, max_mode + 1)
    if grid.kind == PERIODIC:
        ph = rng.random(2) * 2 * np.pi
        return (np.cos(2 * np.pi * p * coords[:, 0] + ph[0])
                * np.cos(2 * np.pi * q * coords[:, 1] + ph[1]))
    return np.sin(np.pi * p * coords[:, 0]) * np.sin(np.pi * q * coords[:, 1])


def random_fields(grid, count, rng, max_mode=8):
    """Return ``count`` DOF vectors on ``grid`` drawn from a mixed family.

    The family cycles through smooth random trigonometric sums, localized
    Gaussian bumps (cut off at the boundary on Dirichlet grids) and white
    nodal noise, so both low- and high-frequency directions are probed.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    x = grid.dof_coords
    if grid.kind == PERIODIC:
        cutoff = np.ones(len(x))
    else:
        cutoff = 16.0 * x[:, 0] * (1 - x[:, 0]) * x[:, 1] * (1 - x[:, 1])
    out = np.empty((count, grid.n_dofs))
    for j in range(count):
        kind = j % 3
        if kind == 0:
            v = np.zeros(grid.n_dofs)
            for _ in range(int(rng.integers(1, 6))):
                v += rng.normal() * _trig_modes(grid, x, rng, max_mode)
        elif kind == 1:
            c = rng.random(2)
            w = 0.03 + 0.3 * rng.random()
            d = x - c
            if grid.kind == PERIODIC:
                d -= np.round(d)
            v = np.exp(-np.sum(d**2, axis=1) / (2 * w**2)) * cutoff * rng.choice([-1.0, 1.0])
        else:
            v = rng.normal(size=grid.n_dofs)
        if not np.any(v):
            v = rng.normal(size=grid.n_dofs)
        out[j] = v
    return out
