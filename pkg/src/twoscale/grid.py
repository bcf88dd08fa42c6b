"""Uniform bilinear quadrilateral meshes on the unit square.

Two kinds of degree-of-freedom identification are supported:

``"dirichlet"``
    homogeneous Dirichlet data on the whole boundary; only interior nodes
    carry unknowns (discrete stand-in for :math:`H^1_0(D)`).
``"periodic"``
    nodes on opposite faces share one unknown (discrete stand-in for
    :math:`H_\\#(Y)`).

Nodes are numbered row-major, ``node = j * (n + 1) + i`` for the node at
``(i / n, j / n)``.  Elements are numbered the same way and list their
corners counter-clockwise starting at the lower-left one.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError

DIRICHLET = "dirichlet"
PERIODIC = "periodic"

#: marker in :attr:`Grid.dof_map` for nodes carrying no unknown
BOUNDARY = -1

_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def gauss_rule(order):
    """Gauss-Legendre points and weights mapped to ``[0, 1]``."""
    t, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (t + 1.0), 0.5 * w


def reference_shape(points):
    """Bilinear shape functions and their reference gradients.

    Parameters
    ----------
    points : (P, 2) array of local coordinates in ``[0, 1]^2``

    Returns
    -------
    N : (P, 4) array
    dN : (P, 4, 2) array
    """
    s = points[:, 0, None]
    t = points[:, 1, None]
    cs = _CORNERS[None, :, 0]
    ct = _CORNERS[None, :, 1]
    fs = np.where(cs == 1.0, s, 1.0 - s)
    ft = np.where(ct == 1.0, t, 1.0 - t)
    dfs = np.where(cs == 1.0, 1.0, -1.0) * np.ones_like(s)
    dft = np.where(ct == 1.0, 1.0, -1.0) * np.ones_like(t)
    N = fs * ft
    dN = np.stack([dfs * ft, fs * dft], axis=-1)
    return N, dN


class Grid:
    """Structured mesh with ``n`` cells per side.

    Instances are immutable; use :func:`build_grid` to construct them.
    """

    def __init__(self, kind, n, quad_order=2):
        self.kind = kind
        self.n = int(n)
        self.quad_order = int(quad_order)
        self.h = 1.0 / self.n

        n1 = self.n + 1
        i, j = np.meshgrid(np.arange(n1), np.arange(n1), indexing="xy")
        i = i.ravel()
        j = j.ravel()
        self.nodes = np.column_stack([i, j]).astype(float) * self.h

        if kind == DIRICHLET:
            interior = (i > 0) & (i < self.n) & (j > 0) & (j < self.n)
            dof_map = np.full(n1 * n1, BOUNDARY, dtype=np.int64)
            dof_map[interior] = np.arange(interior.sum())
            self.dof_nodes = np.flatnonzero(interior)
        else:
            dof_map = (i % self.n) + self.n * (j % self.n)
            self.dof_nodes = np.flatnonzero((i < self.n) & (j < self.n))
        self.dof_map = dof_map
        self.n_dofs = int(self.dof_nodes.size)

        ei, ej = np.meshgrid(np.arange(self.n), np.arange(self.n), indexing="xy")
        base = (ej * n1 + ei).ravel()
        self.elements = np.column_stack([base, base + 1, base + n1 + 1, base + n1])
        self.element_dofs = dof_map[self.elements]
        self.element_origin = self.nodes[base]

        pts, wts = gauss_rule(self.quad_order)
        qs, qt = np.meshgrid(pts, pts, indexing="xy")
        self.ref_points = np.column_stack([qs.ravel(), qt.ravel()])
        self.ref_weights = np.outer(wts, wts).ravel()
        self.N, dN = reference_shape(self.ref_points)
        self.dN = dN / self.h
        self.weights = self.ref_weights * self.h**2

        for arr in (self.nodes, self.dof_map, self.dof_nodes, self.elements,
                    self.element_dofs, self.element_origin, self.ref_points,
                    self.ref_weights, self.N, self.dN, self.weights):
            arr.flags.writeable = False

    def __repr__(self):
        return f"Grid(kind={self.kind!r}, n={self.n}, quad_order={self.quad_order})"

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def is_periodic(self):
        return self.kind == PERIODIC

    @cached_property
    def quad_points(self):
        """Physical quadrature points, shape ``(n_elements, nq, 2)``."""
        pts = self.element_origin[:, None, :] + self.h * self.ref_points[None, :, :]
        pts.flags.writeable = False
        return pts

    @property
    def dof_coords(self):
        return self.nodes[self.dof_nodes]

    # -- nodal <-> quadrature maps ------------------------------------------

    def full_nodal(self, values):
        """Expand a DOF vector to all ``(n + 1)^2`` nodes."""
        values = np.asarray(values)
        out = np.zeros((self.n_nodes,) + values.shape[1:], dtype=values.dtype)
        mask = self.dof_map >= 0
        out[mask] = values[self.dof_map[mask]]
        return out

    def element_values(self, values):
        return self.full_nodal(values)[self.elements]

    def values_at_quad(self, values):
        """Interpolant values at quadrature points, ``(n_elements, nq)``."""
        return self.element_values(values) @ self.N.T

    def grads_at_quad(self, values):
        """Interpolant gradients at quadrature points, ``(n_elements, nq, 2)``."""
        ev = self.element_values(values)
        return np.einsum("ea,qad->eqd", ev, self.dN)

    def locate(self, points):
        """Element index and local coordinates of points in ``[0, 1]^2``."""
        points = np.asarray(points, dtype=float)
        scaled = points / self.h
        cell = np.clip(np.floor(scaled), 0, self.n - 1).astype(np.int64)
        local = scaled - cell
        elem = cell[..., 1] * self.n + cell[..., 0]
        return elem, local

    def evaluate(self, values, points):
        """Point values of the bilinear interpolant of a DOF vector."""
        points = np.asarray(points, dtype=float)
        shape = points.shape[:-1]
        elem, local = self.locate(points.reshape(-1, 2))
        N, _ = reference_shape(local)
        ev = self.full_nodal(values)[self.elements[elem]]
        return np.einsum("pa,pa->p", ev, N).reshape(shape)

    def gradient(self, values, points):
        """Point gradients of the bilinear interpolant, shape ``(..., 2)``."""
        points = np.asarray(points, dtype=float)
        shape = points.shape[:-1]
        elem, local = self.locate(points.reshape(-1, 2))
        _, dN = reference_shape(local)
        ev = self.full_nodal(values)[self.elements[elem]]
        return (np.einsum("pa,pad->pd", ev, dN) / self.h).reshape(shape + (2,))

    def interpolate(self, func):
        """Nodal interpolant of ``func((P, 2) points) -> (P,)``."""
        return ScalarField(self, np.asarray(func(self.dof_coords), dtype=float))

    def zeros(self):
        return ScalarField(self, np.zeros(self.n_dofs))

    # -- reference matrices ------------------------------------------------

    def _scatter(self, local):
        rows = np.broadcast_to(self.element_dofs[:, :, None], local.shape)
        cols = np.broadcast_to(self.element_dofs[:, None, :], local.shape)
        keep = (rows >= 0) & (cols >= 0)
        mat = sp.coo_matrix((local[keep], (rows[keep], cols[keep])),
                            shape=(self.n_dofs, self.n_dofs))
        return mat.tocsr()

    @cached_property
    def mass_matrix(self):
        local = np.einsum("q,qa,qb->ab", self.weights, self.N, self.N)
        return self._scatter(np.broadcast_to(local, (self.n_elements, 4, 4)))

    @cached_property
    def laplace_matrix(self):
        local = np.einsum("q,qad,qbd->ab", self.weights, self.dN, self.dN)
        return self._scatter(np.broadcast_to(local, (self.n_elements, 4, 4)))

    @cached_property
    def h1_matrix(self):
        return (self.mass_matrix + self.laplace_matrix).tocsr()


def build_grid(kind, n, quad_order=2):
    """Build a :class:`Grid`.

    Raises
    ------
    ConfigurationError
        unknown kind, unsupported quadrature order, or ``n`` below the
        minimum (2 for Dirichlet grids, which need an interior DOF; 1 for
        periodic grids).
    """
    if kind not in (DIRICHLET, PERIODIC):
        raise ConfigurationError(f"unknown grid kind {kind!r}")
    if quad_order not in (2, 3):
        raise ConfigurationError("quad_order must be 2 or 3")
    if int(n) != n:
        raise ConfigurationError(f"n must be an integer, got {n!r}")
    if kind == DIRICHLET and n < 2:
        raise ConfigurationError(f"n={n} leaves no interior DOF; dirichlet grids need n >= 2")
    if kind == PERIODIC and n < 1:
        raise ConfigurationError(f"periodic grids need n >= 1, got n={n}")
    return Grid(kind, int(n), quad_order)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """DOF vector attached to a grid; evaluates as its bilinear interpolant."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n_dofs,):
            raise ValueError(
                f"field has {vals.shape} values, grid {self.grid!r} has {self.grid.n_dofs} DOFs")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __call__(self, points):
        return self.grid.evaluate(self.values, points)

    def gradient(self, points):
        return self.grid.gradient(self.values, points)

    def at_quad(self):
        return self.grid.values_at_quad(self.values)

    def grad_at_quad(self):
        return self.grid.grads_at_quad(self.values)

    def _coerce(self, other):
        if isinstance(other, ScalarField):
            if other.grid is not self.grid:
                raise ValueError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._coerce(other) - self.values)

    def __mul__(self, scalar):
        return ScalarField(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


def integrate(field):
    """Integral of the bilinear interpolant over the unit square."""
    g = field.grid
    return float(np.sum(field.at_quad() * g.weights))


def l2_norm(field):
    v = field.values
    return float(np.sqrt(max(v @ (field.grid.mass_matrix @ v), 0.0)))


def h1_seminorm(field):
    v = field.values
    return float(np.sqrt(max(v @ (field.grid.laplace_matrix @ v), 0.0)))


def h1_norm(field):
    """Full Sobolev norm, ``sqrt(l2_norm**2 + h1_seminorm**2)``."""
    return float(np.hypot(l2_norm(field), h1_seminorm(field)))
