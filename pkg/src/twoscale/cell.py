"""Periodic cell problems for the correctors ``omega_0, omega_1, omega_2``.

For a fixed macro point ``x`` the correctors are the mean-zero periodic
solutions of

    int_Y A grad omega_i . grad phi = - int_Y A e_i . grad phi     (i = 1, 2)
    int_Y A grad omega_0 . grad phi = - int_Y C . grad phi

The constant kernel of the periodic stiffness matrix is removed by
pinning one DOF and subtracting the mean afterwards.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from .coeffs import evaluate
from .errors import ConfigurationError, DiagnosticFailure, SolverError
from .forms import assemble_load, assemble_matrix
from .grid import PERIODIC, ScalarField


def _check_periodic(y_grid):
    if y_grid.kind != PERIODIC:
        raise ConfigurationError("cell problems need a periodic Y-grid")


def normalize_mean_zero(field):
    """Subtract the cell average; works on ScalarFields and DOF vectors."""
    vals = getattr(field, "values", field)
    grid = field.grid
    mean = float(np.sum(grid.mass_matrix @ vals))
    out = np.asarray(vals, dtype=float) - mean
    return ScalarField(grid, out)


def _mean_zero(grid, vals):
    # last axis holds DOFs
    lumped = np.asarray(grid.mass_matrix.sum(axis=0)).ravel()
    return vals - (vals @ lumped)[..., None]


class CellSolver:
    """Factorized pinned periodic stiffness matrix for one diffusion field.

    Parameters
    ----------
    y_grid : periodic Grid
    A : array ``(n_elements, nq, 2, 2)`` of diffusion values at quadrature points
    pin : DOF held at zero before the mean is removed
    """

    def __init__(self, y_grid, A, pin=0):
        _check_periodic(y_grid)
        self.grid = y_grid
        self.A = A
        n = y_grid.n_dofs
        if not 0 <= pin < n:
            raise ConfigurationError(f"pin DOF {pin} outside 0..{n - 1}")
        self.pin = int(pin)
        K = assemble_matrix(y_grid, A=A).tocsc()
        keep = np.ones(n, dtype=bool)
        keep[self.pin] = False
        self._keep = keep
        self._K = K
        if n == 1:
            self._lu = None
            return
        try:
            self._lu = spla.splu(K[keep][:, keep].tocsc())
        except RuntimeError as exc:
            raise SolverError(f"cell matrix is singular beyond constants: {exc}") from None

    def solve_flux(self, flux, tol=1e-9):
        """Mean-zero ``omega`` with ``int A grad omega . grad phi = -int flux . grad phi``.

        ``flux`` has shape ``(n_elements, nq, 2)`` or a leading batch axis.
        """
        flux = np.asarray(flux, dtype=float)
        batch = flux.reshape((-1,) + flux.shape[-3:])
        out = np.zeros((batch.shape[0], self.grid.n_dofs))
        if self._lu is not None:
            rhs = np.stack([-assemble_load(self.grid, flux=f) for f in batch], axis=1)
            sol = self._lu.solve(np.ascontiguousarray(rhs[self._keep]))
            out[:, self._keep] = np.atleast_2d(sol.T)
            res = self._K @ out.T - rhs
            # a load that cancels to roundoff is measured against the flux size
            scale = max(np.abs(rhs).max(), np.abs(batch).max() * self.grid.h, 1e-300)
            if np.abs(res).max() > tol * scale * max(1.0, self.grid.n):
                raise SolverError("cell problem residual above tolerance",
                                  [float(np.abs(res).max() / scale)])
        out = _mean_zero(self.grid, out)
        return out.reshape(flux.shape[:-3] + (self.grid.n_dofs,))


def cell_coefficients(coeff, y_grid, x):
    """Coefficient values at the Y-grid quadrature points for the macro point ``x``."""
    yq = y_grid.quad_points
    xb = np.broadcast_to(np.asarray(x, dtype=float), yq.shape)
    return evaluate(coeff, xb, yq)


def solve_corrector_i(A, i, y_grid, pin=0):
    """Corrector ``omega_i`` (``i`` in ``{1, 2}``) for diffusion values ``A`` on Y."""
    if i not in (1, 2):
        raise ConfigurationError(f"corrector index must be 1 or 2, got {i}")
    solver = CellSolver(y_grid, A, pin)
    return ScalarField(y_grid, solver.solve_flux(A[..., :, i - 1]))


def solve_corrector_0(A, C, y_grid, pin=0):
    """Corrector ``omega_0`` for diffusion ``A`` and drift ``C`` on Y."""
    solver = CellSolver(y_grid, A, pin)
    return ScalarField(y_grid, solver.solve_flux(C))


@dataclass(eq=False)
class CorrectorSet:
    """Correctors at a list of macro sample points.

    ``x_points`` is ``None`` for x-independent coefficients, in which case
    ``omega`` has a single sample.  ``omega[s, i]`` holds the DOF values of
    ``omega_i`` at sample ``s`` (``i = 0, 1, 2``).
    """

    coeff: object
    y_grid: object
    omega: np.ndarray
    x_points: Optional[np.ndarray] = None
    x_shape: Optional[tuple] = None
    pin: int = 0
    shared_diffusion: bool = False
    tol: float = 1e-9
    extras: dict = field(default_factory=dict)

    @property
    def x_independent(self):
        return self.x_points is None

    @property
    def n_samples(self):
        return self.omega.shape[0]

    def field(self, i, sample=0):
        return ScalarField(self.y_grid, self.omega[sample, i])

    @cached_property
    def gradients(self):
        """``grad_y omega`` at Y quadrature points, ``(n_samples, 3, ne, nq, 2)``."""
        g = self.y_grid
        ev = g.full_nodal(np.moveaxis(self.omega, -1, 0))[g.elements]
        return np.einsum("ea...,qad->...eqd", ev, g.dN)

    def sample_points(self):
        """Macro points at which cell coefficients are evaluated."""
        if self.x_points is None:
            return np.full((1, 2), 0.5)
        return self.x_points

    def cell_values(self, sample):
        return cell_coefficients(self.coeff, self.y_grid, self.sample_points()[sample])

    def gradient_norms(self):
        """``||grad_y omega_i(x, .)||_{L^2(Y)}``, shape ``(n_samples, 3)``."""
        w = self.y_grid.weights
        g = self.gradients
        return np.sqrt(np.einsum("sieqd,q->si", g**2, w))

    def to_csv(self, path, sample=0):
        """Write nodal values ``y1, y2, omega0, omega1, omega2`` of one sample."""
        coords = self.y_grid.dof_coords
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y1", "y2", "omega0", "omega1", "omega2"])
            for j in range(self.y_grid.n_dofs):
                w.writerow([repr(float(coords[j, 0])), repr(float(coords[j, 1]))]
                           + [repr(float(self.omega[sample, i, j])) for i in range(3)])


def _scalar_factor(A):
    """``a`` if ``A = a * A_ref`` with ``A_ref`` fixed, from the ``(0, 0)`` entry."""
    return A[..., 0, 0]


def solve_correctors(coeff, y_grid, x_points=None, pin=0, tol=1e-9):
    """Solve all correctors for ``coeff``.

    Periodic-only coefficients are solved once.  Otherwise ``x_points``
    (shape ``(..., 2)``, usually macro quadrature points) is required.  For
    separable coefficients with scalar ``A1`` the diffusion matrix is
    factorized once: ``omega_1, omega_2`` are shared and ``omega_0`` at ``x``
    solves the reference problem with drift ``C(x, .) / a1(x)``.
    """
    _check_periodic(y_grid)
    if coeff.is_periodic_only:
        cv = cell_coefficients(coeff, y_grid, (0.5, 0.5))
        solver = CellSolver(y_grid, cv.A, pin)
        flux = np.stack([cv.C, cv.A[..., :, 0], cv.A[..., :, 1]])
        omega = solver.solve_flux(flux)[None]
        return CorrectorSet(coeff, y_grid, omega, None, None, pin, True, tol)

    if x_points is None:
        raise ConfigurationError(f"preset {coeff.name!r} depends on x; x_points are required")
    x_points = np.asarray(x_points, dtype=float)
    x_shape = x_points.shape[:-1]
    xs = x_points.reshape(-1, 2)
    omega = np.empty((len(xs), 3, y_grid.n_dofs))

    if coeff.is_separable and coeff.A1 is not None and coeff.A2 is not None:
        yq = y_grid.quad_points
        A2 = np.asarray(coeff.A2(np.broadcast_to(xs[0], yq.shape), yq), dtype=float)
        solver = CellSolver(y_grid, A2, pin)
        shared = solver.solve_flux(np.stack([A2[..., :, 0], A2[..., :, 1]]))
        a1 = _scalar_factor(np.asarray(coeff.A1(xs, xs), dtype=float))
        for s, x in enumerate(xs):
            C = cell_coefficients(coeff, y_grid, x).C
            omega[s, 0] = solver.solve_flux(C / a1[s])
            omega[s, 1:] = shared
        return CorrectorSet(coeff, y_grid, omega, xs, x_shape, pin, True, tol)

    for s, x in enumerate(xs):
        cv = cell_coefficients(coeff, y_grid, x)
        solver = CellSolver(y_grid, cv.A, pin)
        omega[s] = solver.solve_flux(np.stack([cv.C, cv.A[..., :, 0], cv.A[..., :, 1]]))
    return CorrectorSet(coeff, y_grid, omega, xs, x_shape, pin, False, tol)


def gradient_bound(coeff, y_grid, x):
    """Right side ``(1 / alpha) (sum_i (int_Y |c_i|^p0)^(2 / p0))^(1/2)`` by quadrature."""
    C = cell_coefficients(coeff, y_grid, x).C
    w = y_grid.weights
    if math.isinf(coeff.p0):
        norms = np.abs(C).max(axis=(0, 1))
    else:
        p = coeff.p0
        norms = np.einsum("eqi,q->i", np.abs(C) ** p, w) ** (1.0 / p)
    return float(np.sqrt(np.sum(norms**2)) / coeff.alpha)


def check_gradient_bound(correctors, rtol=1e-9):
    """Verify ``||grad omega_0(x, .)|| <= gradient_bound`` at every sample.

    Returns the list of ``(norm, bound)`` pairs.
    """
    norms = correctors.gradient_norms()[:, 0]
    out = []
    for s in range(correctors.n_samples):
        b = gradient_bound(correctors.coeff, correctors.y_grid, correctors.sample_points()[s])
        if norms[s] > b * (1 + rtol) + 1e-14:
            raise DiagnosticFailure(
                f"corrector gradient {norms[s]} exceeds bound {b} at sample {s}", witness=s)
        out.append((float(norms[s]), b))
    return out


def corrector_residual(correctors, i, phis, sample=0):
    """Relative residual of the cell identity for ``omega_i`` against test fields.

    For ``i >= 1`` the identity is ``int A (e_i + grad omega_i) . grad phi = 0``,
    for ``i = 0`` it is ``int (A grad omega_0 + C) . grad phi = 0``.
    """
    g = correctors.y_grid
    cv = correctors.cell_values(sample)
    grad = correctors.gradients[sample, i]
    if i == 0:
        flux = np.einsum("eqij,eqj->eqi", cv.A, grad) + cv.C
    else:
        e = np.zeros(2)
        e[i - 1] = 1.0
        flux = np.einsum("eqij,eqj->eqi", cv.A, grad + e)
    load = assemble_load(g, flux=flux)
    phis = np.atleast_2d(phis)
    res = np.abs(phis @ load)
    scale = np.sqrt(np.einsum("eqi,q->", flux**2, g.weights)) * np.sqrt(
        np.einsum("ij,ij->i", phis, (g.laplace_matrix @ phis.T).T))
    return res / np.maximum(scale, 1e-300)
