"""Discrete unfolding ``T_delta``, the cell partition and two-scale errors.

``T_delta(u)(x, y) = u(delta [x / delta] + delta y)`` on the union of the
lattice cells inside ``D`` and zero on the leftover layer.  Functions on
``D x Y`` are stored per lattice cell at the Y-grid quadrature points,
since they do not vary in ``x`` within a cell.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .grid import DIRICHLET, ScalarField, gauss_rule

_ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class UnfoldPartition:
    """Lattice cells ``delta (xi + Y)`` contained in the unit square."""

    delta: float
    count: int

    @property
    def xi(self):
        """Lattice points, row-major, shape ``(count**2, 2)``."""
        i, j = np.meshgrid(np.arange(self.count), np.arange(self.count), indexing="xy")
        return np.column_stack([i.ravel(), j.ravel()])

    @property
    def n_cells(self):
        return self.count**2

    @property
    def side(self):
        return self.count * self.delta

    @property
    def covered_area(self):
        return self.side**2

    @property
    def layer_area(self):
        return 1.0 - self.covered_area

    def cell_of(self, points):
        """Cell index of each point, ``-1`` in the leftover layer."""
        points = np.asarray(points, dtype=float)
        c = np.floor(points / self.delta).astype(np.int64)
        inside = np.all((c >= 0) & (c < self.count) & (points < self.side), axis=-1)
        idx = c[..., 1] * self.count + c[..., 0]
        return np.where(inside, idx, -1)


def build_partition(delta):
    """Partition for ``0 < delta <= 1``."""
    if not (isinstance(delta, (int, float, np.floating)) and 0 < delta <= 1):
        raise ConfigurationError(f"delta must lie in (0, 1], got {delta!r}")
    count = int(math.floor(1.0 / delta + 1e-12))
    return UnfoldPartition(float(delta), count)


def _is_integer(z):
    return abs(z - round(z)) <= _ALIGN_TOL * max(1.0, abs(z))


def is_aligned(partition, macro_grid, y_grid):
    """Y-elements mapped into a cell nest inside macro elements (or coincide).

    Cells must be unions of macro elements and every macro element a union
    of mapped Y-elements, so Y-quadrature of macro interpolants is exact.
    """
    macro_per_cell = partition.delta * macro_grid.n
    return (_is_integer(macro_per_cell) and macro_per_cell <= y_grid.n + _ALIGN_TOL
            and _is_integer(y_grid.n / macro_per_cell))


@dataclass(eq=False)
class UnfoldedField:
    """Values of ``T_delta(u)`` per cell at the Y-grid quadrature points.

    ``values`` has shape ``(n_cells, ne_y, nq_y)`` for scalars and an extra
    trailing axis of length 2 for gradients.
    """

    partition: UnfoldPartition
    y_grid: object
    values: np.ndarray

    def _w(self):
        return self.y_grid.weights

    def __mul__(self, other):
        other = other.values if isinstance(other, UnfoldedField) else other
        return UnfoldedField(self.partition, self.y_grid, self.values * other)

    __rmul__ = __mul__

    def __sub__(self, other):
        other = other.values if isinstance(other, UnfoldedField) else other
        return UnfoldedField(self.partition, self.y_grid, self.values - other)

    def integral(self):
        """``int_{D x Y}`` (the leftover layer contributes zero)."""
        v = self.values
        if v.ndim == 4:
            raise ValueError("integral of a vector field; take a component")
        return float(self.partition.delta**2 * np.einsum("ceq,q->", v, self._w()))

    def l2_norm(self):
        v = self.values
        sq = v**2 if v.ndim == 3 else np.sum(v**2, axis=-1)
        return float(math.sqrt(self.partition.delta**2 * np.einsum("ceq,q->", sq, self._w())))

    def cell_means(self):
        """Y-average per cell (averaging operator)."""
        return np.einsum("ceq...,q->c...", self.values, self._w())

    def slice_to_csv(self, path, cell):
        """Write ``y1, y2, value`` at the Y quadrature points of one cell."""
        pts = self.y_grid.quad_points.reshape(-1, 2)
        vals = self.values[cell].reshape(len(pts), -1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y1", "y2"] + [f"v{i}" for i in range(vals.shape[1])])
            for p, v in zip(pts, vals):
                w.writerow([repr(float(p[0])), repr(float(p[1]))] + [repr(float(z)) for z in v])


def sample_points(partition, y_grid, cells=None):
    """Images ``delta xi + delta y_q``, shape ``(n_cells, ne_y, nq_y, 2)``."""
    xi = partition.xi if cells is None else partition.xi[cells]
    return partition.delta * (xi[:, None, None, :] + y_grid.quad_points[None])


def unfold(u, delta, y_grid, gradient=False, chunk=64):
    """Unfold a field on the macro grid, or a callable of points.

    ``gradient=True`` unfolds the gradient of a ScalarField.
    """
    part = delta if isinstance(delta, UnfoldPartition) else build_partition(delta)
    if isinstance(u, ScalarField):
        evaluator = (lambda p: u.gradient(p)) if gradient else u
    elif callable(u):
        if gradient:
            raise ConfigurationError("gradient unfolding needs a ScalarField")
        evaluator = u
    else:
        raise ConfigurationError("unfold needs a ScalarField or a callable")
    out = []
    for start in range(0, part.n_cells, chunk):
        cells = np.arange(start, min(start + chunk, part.n_cells))
        out.append(np.asarray(evaluator(sample_points(part, y_grid, cells)), dtype=float))
    return UnfoldedField(part, y_grid, np.concatenate(out, axis=0))


# ---------------------------------------------------------------------------
# integrals over the covered region on the macro grid

def _clipped_rule(grid, side):
    """Quadrature for macro elements intersected with ``[0, side]^2``.

    Returns element indices, physical points ``(ne, nq, 2)`` and weights
    ``(ne, nq)``; exact for bilinear-squared integrands.
    """
    pts, wts = gauss_rule(2)
    lo = grid.element_origin
    hi = np.minimum(lo + grid.h, side)
    keep = np.all(hi > lo + 1e-14, axis=1)
    lo, hi = lo[keep], hi[keep]
    qs, qt = np.meshgrid(pts, pts, indexing="xy")
    ref = np.column_stack([qs.ravel(), qt.ravel()])
    span = hi - lo
    x = lo[:, None, :] + span[:, None, :] * ref[None]
    w = np.outer(wts, wts).ravel()[None, :] * np.prod(span, axis=1)[:, None]
    return np.flatnonzero(keep), x, w


def covered_integral(u, partition):
    """``int`` of the interpolant over the union of lattice cells."""
    _, x, w = _clipped_rule(u.grid, partition.side)
    return float(np.sum(u(x) * w))


def check_integral_identity(u, delta, y_grid):
    """``|int_{D x Y} T_delta(u) - int_{covered} u|``."""
    part = delta if isinstance(delta, UnfoldPartition) else build_partition(delta)
    return abs(unfold(u, part, y_grid).integral() - covered_integral(u, part))


@dataclass(eq=False)
class CellwiseField:
    """Piecewise-constant function on the lattice cells, zero on the layer."""

    partition: UnfoldPartition
    values: np.ndarray

    def __call__(self, points):
        c = self.partition.cell_of(points)
        return np.where(c >= 0, self.values[np.maximum(c, 0)], 0.0)

    def integral(self):
        return float(self.partition.delta**2 * np.sum(self.values))


def mean_Y(w):
    """Averaging operator: per-cell Y-mean of an unfolded scalar field."""
    if w.values.ndim != 3:
        raise ConfigurationError("mean_Y acts on scalar unfolded fields")
    return CellwiseField(w.partition, w.cell_means())


def unfold_distance(u, delta, y_grid):
    """``||T_delta(u) - u||_{L^2(D x Y)}`` (``u`` extended constantly in ``y``)."""
    part = build_partition(delta)
    T = unfold(u, part, y_grid)
    w = y_grid.weights
    tt = np.einsum("ceq,q->c", T.values**2, w)
    tm = np.einsum("ceq,q->c", T.values, w)
    cells, x, wx = _macro_cells(u.grid, part)
    ux = u(x)
    inside = cells >= 0
    one = np.bincount(cells[inside], (ux * wx)[inside], minlength=part.n_cells)
    two = np.bincount(cells[inside], (ux**2 * wx)[inside], minlength=part.n_cells)
    total = part.delta**2 * tt.sum() - 2 * np.dot(tm, one) + two.sum()
    total += np.sum((ux**2 * wx)[~inside])
    return math.sqrt(max(total, 0.0))


def _macro_cells(grid, part):
    """Macro quadrature points with weights and their lattice cell, flattened."""
    x = grid.quad_points
    w = np.broadcast_to(grid.weights, x.shape[:-1])
    if not _is_integer(part.delta * grid.n):
        raise ConfigurationError(
            f"macro grid n={grid.n} does not resolve cells of size delta={part.delta}")
    cells = part.cell_of(x)
    return cells.ravel(), x.reshape(-1, 2), w.ravel()


# ---------------------------------------------------------------------------
# two-scale limits

class TwoScaleField:
    """``u_1(x, y) = u0(x) omega_0(x, y) + sum_i d_i u0(x) omega_i(x, y)``.

    Evaluated lazily; for x-dependent correctors, ``x`` must be one of the
    corrector sample points.
    """

    def __init__(self, u0, correctors):
        self.u0 = u0
        self.correctors = correctors

    def _samples(self, x):
        cs = self.correctors
        x = np.asarray(x, dtype=float)
        if cs.x_independent:
            return np.zeros(x.shape[:-1], dtype=np.int64)
        pts = cs.x_points
        flat = x.reshape(-1, 2)
        d = np.abs(flat[:, None, :] - pts[None, :, :]).max(axis=-1)
        idx = np.argmin(d, axis=1)
        if np.any(d[np.arange(len(flat)), idx] > 1e-12):
            raise ConfigurationError("x-dependent correctors are only known at their sample points")
        return idx.reshape(x.shape[:-1])

    def coefficients(self, x):
        """``(u0, d_1 u0, d_2 u0)`` at ``x``."""
        return self.u0(x), self.u0.gradient(x)

    def __call__(self, x, y):
        """Values for matching point arrays ``x`` and ``y`` of shape ``(P, 2)``."""
        cs = self.correctors
        s = self._samples(x)
        val, grad = self.coefficients(x)
        out = np.zeros(len(x))
        for i, c in enumerate((val, grad[:, 0], grad[:, 1])):
            om = np.array([cs.y_grid.evaluate(cs.omega[si, i], yy[None])[0]
                           for si, yy in zip(s, y)]) if not cs.x_independent else \
                cs.y_grid.evaluate(cs.omega[0, i], y)
            out += c * om
        return out

    def grad_y(self, x, y):
        cs = self.correctors
        s = self._samples(x)
        val, grad = self.coefficients(x)
        out = np.zeros((len(x), 2))
        for i, c in enumerate((val, grad[:, 0], grad[:, 1])):
            if cs.x_independent:
                g = cs.y_grid.gradient(cs.omega[0, i], y)
            else:
                g = np.array([cs.y_grid.gradient(cs.omega[si, i], yy[None])[0]
                              for si, yy in zip(s, y)])
            out += c[:, None] * g
        return out


def reconstruct_u1(u0, correctors):
    """Two-scale corrector term built from ``u0`` and the correctors."""
    return TwoScaleField(u0, correctors)


def _corrected_directions(correctors, s):
    """``W = (e_1 + grad omega_1, e_2 + grad omega_2, grad omega_0)`` at sample ``s``."""
    G = correctors.gradients[s]
    W = np.stack([G[1], G[2], G[0]])
    W[0, ..., 0] += 1.0
    W[1, ..., 1] += 1.0
    return W


def two_scale_error(u_delta, u0, correctors, delta, chunk=16):
    """``||T_delta(grad u_delta) - grad u0 - grad_y u1||_{L^2(D x Y)}``.

    With ``g = (d_1 u0, d_2 u0, u0)`` the limit gradient is
    ``sum_k g_k(x) W_k(y)``; the squared error is expanded into Y-moments
    of ``W`` and cell moments of ``g`` so the product space is never
    sampled jointly.  The layer outside the lattice cells contributes
    ``int |sum_k g_k W_k|^2``.  The macro grid must resolve the cells and
    the Y-grid images must nest in macro elements.
    """
    part = build_partition(delta)
    macro = u_delta.grid
    yg = correctors.y_grid
    if macro.kind != DIRICHLET or u0.grid is not macro:
        raise ConfigurationError("u_delta and u0 must share one dirichlet macro grid")
    if not is_aligned(part, macro, yg):
        raise ConfigurationError(
            f"delta={delta} with n={macro.n} and m={yg.n} does not align the Y-grid with the macro grid")
    w = yg.weights
    cells, x, wx = _macro_cells(macro, part)
    g = np.concatenate([u0.grad_at_quad().reshape(-1, 2), u0.at_quad().reshape(-1, 1)], axis=1)
    if correctors.x_independent:
        sample = np.zeros(len(x), dtype=np.int64)
    else:
        sample = TwoScaleField(u0, correctors)._samples(x)

    dirs, gram = {}, {}

    def dirs_of(s):
        if s not in dirs:
            dirs[s] = _corrected_directions(correctors, s)
        return dirs[s]

    def gram_of(s):
        if s not in gram:
            W = dirs_of(s)
            gram[s] = np.einsum("keqd,leqd,q->kl", W, W, w)
        return gram[s]

    total = 0.0
    # limit-only terms at every macro quadrature point
    for s in np.unique(sample):
        sel = sample == s
        G = gram_of(int(s))
        total += float(np.einsum("p,pk,kl,pl->", wx[sel], g[sel], G, g[sel]))

    inside = cells >= 0
    order = np.argsort(cells[inside], kind="stable")
    pts_in = np.flatnonzero(inside)[order]
    cells_sorted = cells[pts_in]
    bounds = np.searchsorted(cells_sorted, np.arange(part.n_cells + 1))
    for start in range(0, part.n_cells, chunk):
        cidx = np.arange(start, min(start + chunk, part.n_cells))
        T = u_delta.gradient(sample_points(part, yg, cidx))   # (c, ne, nq, 2)
        tt = np.einsum("ceqd,q->c", T**2, w)
        for j, c in enumerate(cidx):
            ps = pts_in[bounds[c]:bounds[c + 1]]
            total += part.delta**2 * tt[j]
            ss = sample[ps]
            for s in np.unique(ss):
                W = dirs_of(int(s))
                P = np.einsum("eqd,keqd,q->k", T[j], W, w)
                sel = ps[ss == s]
                total -= 2.0 * float(np.einsum("p,pk,k->", wx[sel], g[sel], P))
    return math.sqrt(max(total, 0.0))
