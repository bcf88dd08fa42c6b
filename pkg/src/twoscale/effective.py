"""Effective coefficients from correctors and checks of the limit form.

Per macro sample ``x`` and with ``grad = grad_y``:

    a_ij = int_Y a_ij + sum_l a_il d omega_j / d y_l
    b_j  = int_Y b_j + sum_l b_l d omega_j / d y_l
    c_i  = int_Y sum_l a_il d omega_0 / d y_l + c_i
    k    = int_Y k + sum_l b_l d omega_0 / d y_l
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cell import CorrectorSet
from .coeffs import CoefficientValues, constant
from .errors import ConfigurationError, DiagnosticFailure
from .forms import (assemble_effective_form, assemble_load, extreme_generalized_eigenpair,
                    form_index, _sym)
from .solver import solve_variational


@dataclass(eq=False)
class EffectiveCoefficients:
    """Effective coefficient tables, one row per macro sample.

    ``A`` has shape ``(S, 2, 2)``, ``B`` and ``C`` ``(S, 2)``, ``k`` ``(S,)``.
    For x-independent data ``S = 1`` and ``x_points`` is ``None``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    k: np.ndarray
    x_points: Optional[np.ndarray] = None
    x_shape: Optional[tuple] = None
    preset: str = ""
    m: int = 0
    tol: float = 1e-9
    M: float = 0.0
    M_squared: float = 0.0
    corrector_norms: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def x_independent(self):
        return self.x_points is None

    def at_quad(self, grid):
        """Coefficient arrays shaped for :func:`forms.assemble_matrix` on ``grid``."""
        shape = (grid.n_elements, grid.ref_points.shape[0])
        if self.x_independent:
            return CoefficientValues(
                np.broadcast_to(self.A[0], shape + (2, 2)),
                np.broadcast_to(self.B[0], shape + (2,)),
                np.broadcast_to(self.C[0], shape + (2,)),
                np.broadcast_to(self.k[0], shape))
        if self.x_shape != shape or not np.allclose(
                self.x_points.reshape(shape + (2,)), grid.quad_points, atol=1e-14):
            raise ConfigurationError(
                "effective coefficients were sampled on a different macro grid")
        return CoefficientValues(self.A.reshape(shape + (2, 2)), self.B.reshape(shape + (2,)),
                                 self.C.reshape(shape + (2,)), self.k.reshape(shape))

    def as_coefficient(self):
        """Constant coefficient preset equal to x-independent effective data."""
        if not self.x_independent:
            raise ConfigurationError("only x-independent effective data is a constant preset")
        return constant(self.A[0], self.B[0], self.C[0], float(self.k[0]))

    def rows(self):
        pts = self.x_points
        for s in range(len(self.k)):
            yield {
                "x1": None if pts is None else float(pts[s, 0]),
                "x2": None if pts is None else float(pts[s, 1]),
                "A11": float(self.A[s, 0, 0]), "A12": float(self.A[s, 0, 1]),
                "A21": float(self.A[s, 1, 0]), "A22": float(self.A[s, 1, 1]),
                "B1": float(self.B[s, 0]), "B2": float(self.B[s, 1]),
                "C1": float(self.C[s, 0]), "C2": float(self.C[s, 1]),
                "k": float(self.k[s]),
            }

    def to_dict(self):
        return {
            "preset": self.preset,
            "y_grid_m": self.m,
            "corrector_tol": self.tol,
            "x_independent": self.x_independent,
            "M": self.M,
            "M_squared": self.M_squared,
            "samples": list(self.rows()),
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def to_csv(self, path):
        rows = list(self.rows())
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


def assemble_effective(coeff, correctors, y_grid=None):
    """Effective coefficients by Y-quadrature of the corrector formulas."""
    if not isinstance(correctors, CorrectorSet):
        raise ConfigurationError("correctors must be a CorrectorSet")
    if y_grid is not None and (y_grid.kind != correctors.y_grid.kind
                               or y_grid.n != correctors.y_grid.n):
        raise ConfigurationError(
            f"correctors were solved on m={correctors.y_grid.n}, not m={y_grid.n}")
    yg = correctors.y_grid
    w = yg.weights
    S = correctors.n_samples
    A = np.empty((S, 2, 2))
    B = np.empty((S, 2))
    C = np.empty((S, 2))
    k = np.empty(S)
    G = correctors.gradients
    for s in range(S):
        cv = correctors.cell_values(s)
        g0, g1, g2 = G[s, 0], G[s, 1], G[s, 2]
        grads = np.stack([g1, g2], axis=-1)            # (ne, nq, l, j)
        A[s] = np.einsum("q,eqij->ij", w, cv.A) + np.einsum("q,eqil,eqlj->ij", w, cv.A, grads)
        B[s] = np.einsum("q,eqj->j", w, cv.B) + np.einsum("q,eql,eqlj->j", w, cv.B, grads)
        C[s] = np.einsum("q,eqil,eql->i", w, cv.A, g0) + np.einsum("q,eqi->i", w, cv.C)
        k[s] = np.einsum("q,eq->", w, cv.k) + np.einsum("q,eql,eql->", w, cv.B, g0)
    norms = correctors.gradient_norms()
    M = float(np.max(norms[:, 1:].sum(axis=1)))
    M_sq = float(np.max((norms[:, 1:] ** 2).sum(axis=1)))
    return EffectiveCoefficients(A, B, C, k, correctors.x_points, correctors.x_shape,
                                 coeff.name, yg.n, correctors.tol, M, M_sq, norms)


def _unit_directions(count):
    t = np.linspace(0.0, np.pi, count, endpoint=False)
    return np.column_stack([np.cos(t), np.sin(t)])


@dataclass(frozen=True)
class EllipticityReport:
    alpha_eff: float
    beta_eff: float
    M: float
    lower: float
    upper: float
    passed: bool


def check_effective_ellipticity(eff, alpha, beta, directions=64, tol=1e-6, raise_on_fail=True):
    """Quadratic form ``A_eff xi . xi`` over ``directions`` unit vectors.

    Checks ``alpha - tol <= min`` and ``max <= beta (1 + M) + tol`` with
    ``M = max_x sum_i ||grad_y omega_i||``.
    """
    xi = _unit_directions(directions)
    q = np.einsum("di,sij,dj->sd", xi, eff.A, xi)
    lo, hi = float(q.min()), float(q.max())
    upper = beta * (1.0 + eff.M)
    ok = (alpha - tol <= lo) and (hi <= upper + tol)
    if raise_on_fail and not ok:
        raise DiagnosticFailure(
            f"effective ellipticity violated: range [{lo}, {hi}] vs [{alpha}, {upper}]")
    return EllipticityReport(lo, hi, eff.M, alpha, upper, ok)


def quadratic_form_gap(coeff, correctors, eff, xi, sample=0):
    """Relative gap between ``A_eff xi . xi`` and the corrected energy.

    The energy is ``int_Y A (xi + grad phi) . (xi + grad phi)`` with
    ``phi = xi_1 omega_1 + xi_2 omega_2``.
    """
    xi = np.asarray(xi, dtype=float)
    cv = correctors.cell_values(sample)
    G = correctors.gradients[sample]
    v = xi + xi[0] * G[1] + xi[1] * G[2]
    energy = np.einsum("q,eqi,eqij,eqj->", correctors.y_grid.weights, v, cv.A, v)
    direct = xi @ eff.A[sample] @ xi
    return abs(direct - energy) / max(abs(energy), 1e-300)


def reconstruction_residual(correctors, u0_value, grad_u0, phis, sample=0):
    """Cell residual of ``u_1 = u0 omega_0 + sum_i d_i u0 omega_i`` against test fields.

    Returns ``|int A (grad_x u0 + grad_y u1) . grad psi + u0 int C . grad psi|``
    relative to ``(||A (grad_x u0 + grad_y u1)|| + ||u0 C||) ||grad psi||``,
    per test field ``psi``.
    """
    g = correctors.y_grid
    cv = correctors.cell_values(sample)
    G = correctors.gradients[sample]
    grad_u0 = np.asarray(grad_u0, dtype=float)
    total = grad_u0 + u0_value * G[0] + grad_u0[0] * G[1] + grad_u0[1] * G[2]
    flux = np.einsum("eqij,eqj->eqi", cv.A, total)
    drift = u0_value * cv.C
    load = assemble_load(g, flux=flux + drift)
    phis = np.atleast_2d(phis)
    w = g.weights
    scale = (np.sqrt(np.einsum("eqi,q->", flux**2, w)) + np.sqrt(np.einsum("eqi,q->", drift**2, w)))
    scale = scale * np.sqrt(np.einsum("ij,ij->i", phis, (g.laplace_matrix @ phis.T).T))
    return np.abs(phis @ load) / np.maximum(scale, 1e-300)


def discrete_index(form):
    """Smallest ``beta >= 0`` with ``E(u, u) + beta ||u||^2 >= 0`` on the grid."""
    mu = extreme_generalized_eigenpair(_sym(form.K), form.M, "min")[0]
    return max(0.0, -mu)


def effective_index(eff, grid=None, safety=1.5, seed=0):
    """Index of the effective form.

    x-independent data goes through the calibrated empirical estimate for
    the equivalent constant preset; otherwise the exact discrete index of
    the assembled effective form on ``grid`` is inflated by ``safety``.
    """
    if eff.x_independent:
        c = eff.as_coefficient()
        if not c.has_drift:
            return 0.0
        return form_index(c, "empirical", seed=seed, safety=safety)
    if grid is None:
        raise ConfigurationError("x-dependent effective data needs its macro grid")
    return safety * discrete_index(assemble_effective_form(grid, eff, 0.0))


def solve_homogenized(grid, eff, lam, f, beta_prime=None, tol=1e-10):
    """Solve the effective problem ``E^0_lam(u0, phi) = (f, phi)``.

    ``beta_prime`` (when given) must be below ``lam``.
    """
    form = assemble_effective_form(grid, eff, lam)
    return solve_variational(form, f=f, beta0=beta_prime, tol=tol), form

