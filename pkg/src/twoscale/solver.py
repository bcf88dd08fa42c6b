"""Resolvent solves ``(K + lam M) u = rhs`` and their sampled checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, DiagnosticFailure, SolverError
from .forms import POINCARE_CONSTANT
from .grid import ScalarField, h1_norm, l2_norm
from .sampling import random_fields

#: macro resolution up to which a sparse LU factorization is used
DIRECT_LIMIT = 256


class ResolventOperator:
    """``G_lam f`` for an assembled form.

    Parameters
    ----------
    form : AssembledForm
    tol : float
        relative residual target ``||(K + lam M) u - rhs|| <= tol ||rhs||``.
    method : {"auto", "direct", "iterative"}
        ``"auto"`` factorizes when the grid has at most ``DIRECT_LIMIT``
        cells per side and otherwise uses ILU-preconditioned GMRES.
    """

    def __init__(self, form, tol=1e-10, method="auto", maxiter=2000):
        if method not in ("auto", "direct", "iterative"):
            raise ConfigurationError(f"unknown solver method {method!r}")
        self.form = form
        self.tol = float(tol)
        self.maxiter = int(maxiter)
        if method == "auto":
            method = "direct" if form.grid.n <= DIRECT_LIMIT else "iterative"
        self.method = method
        A = form.matrix
        if method == "direct":
            try:
                self._lu = spla.splu(A)
            except RuntimeError as exc:
                raise SolverError(f"factorization failed: {exc}") from None
        else:
            self._ilu = spla.spilu(A, drop_tol=1e-5, fill_factor=20)

    @property
    def lam(self):
        return self.form.lam

    def _iterative(self, A, rhs, trans):
        ilu = self._ilu
        P = spla.LinearOperator(A.shape, lambda r: ilu.solve(r, "T" if trans else "N"))
        history = []
        u, info = spla.gmres(A, rhs, rtol=self.tol, atol=0.0, M=P, restart=100,
                             maxiter=self.maxiter, callback=history.append,
                             callback_type="pr_norm")
        if info != 0:
            raise SolverError(f"GMRES did not converge (info={info})", history)
        return u

    def solve_vector(self, rhs, transpose=False):
        """Solve with a dual vector (``<f, phi_a>`` per DOF) as right side."""
        rhs = np.asarray(rhs, dtype=float)
        if not np.any(rhs):
            return np.zeros_like(rhs)
        A = self.form.matrix.T if transpose else self.form.matrix
        if self.method == "direct":
            u = self._lu.solve(rhs, trans="T" if transpose else "N")
        else:
            u = self._iterative(A.tocsr(), rhs, transpose)
        res = np.linalg.norm(A @ u - rhs) / np.linalg.norm(rhs)
        if not np.isfinite(res) or res > max(self.tol, 1e-12) * 10:
            raise SolverError(f"relative residual {res:.3e} exceeds tolerance {self.tol:.1e}", [res])
        return u

    def apply(self, f):
        """``G_lam f`` for an L2 nodal field (right side ``M f``)."""
        vals = getattr(f, "values", f)
        return ScalarField(self.form.grid, self.solve_vector(self.form.M @ vals))

    def apply_adjoint(self, f):
        """Adjoint resolvent via the transposed system."""
        vals = getattr(f, "values", f)
        return ScalarField(self.form.grid, self.solve_vector(self.form.M @ vals, transpose=True))

    __call__ = apply


def solve_variational(form, f=None, dual=None, beta0=None, tol=1e-10):
    """Solve ``E_lam(u, phi) = <f, phi>`` for all discrete ``phi``.

    ``f`` is an L2 datum (ScalarField, DOF vector or callable of points,
    integrated against the basis by quadrature); ``dual`` a precomputed
    vector of ``<f, phi_a>``.  When ``beta0`` is given, ``lam <= beta0``
    is refused.
    """
    if beta0 is not None and not form.lam > beta0:
        raise ConfigurationError(f"lambda={form.lam} must exceed the index beta0={beta0}")
    if (f is None) == (dual is None):
        raise ConfigurationError("give exactly one of f and dual")
    if dual is None:
        dual = load_vector(form.grid, f)
    return ScalarField(form.grid, ResolventOperator(form, tol).solve_vector(dual))


def load_vector(grid, f):
    """``<f, phi_a>``: fields use the mass matrix, callables quadrature."""
    from .forms import assemble_load

    if isinstance(f, ScalarField):
        return grid.mass_matrix @ f.values
    if callable(f):
        return assemble_load(grid, values=np.asarray(f(grid.quad_points), dtype=float))
    return grid.mass_matrix @ np.asarray(f, dtype=float)


@dataclass(frozen=True)
class AprioriResult:
    passed: bool
    lhs: float
    bound: float

    @property
    def slack(self):
        return self.bound - self.lhs


def check_apriori(u, f, kappa1, rtol=1e-10):
    """Check ``||u||_{H^1} <= C_P ||f||_{L^2} / kappa1``.

    ``kappa1`` is the coercivity constant of ``E_lam`` against the full
    Sobolev norm (see :func:`forms.norm_equivalence`).
    """
    if not kappa1 > 0:
        raise ConfigurationError(f"kappa1 must be positive, got {kappa1}")
    if not isinstance(f, ScalarField):
        f = ScalarField(u.grid, f)
    lhs = h1_norm(u)
    bound = POINCARE_CONSTANT * l2_norm(f) / kappa1
    return AprioriResult(lhs <= bound * (1 + rtol), lhs, bound)


def coercivity_constant(form):
    """Exact discrete ``min E_lam(u, u) / ||u||_{H^1}^2``."""
    from .forms import _sym, extreme_generalized_eigenpair

    S = _sym(form.K) + form.lam * form.M
    return extreme_generalized_eigenpair(S, form.grid.h1_matrix, "min")[0]


def check_resolvent_identity(form, lam, mu, f, tol=1e-10):
    """``||(G_lam - G_mu) f - (mu - lam) G_lam G_mu f|| / ||f||`` in L2."""
    f = f if isinstance(f, ScalarField) else ScalarField(form.grid, f)
    G_lam = ResolventOperator(form.with_lambda(lam), tol)
    G_mu = ResolventOperator(form.with_lambda(mu), tol) if mu != lam else G_lam
    a = G_lam(f)
    b = G_mu(f)
    c = G_lam(b)
    r = a - b - (mu - lam) * c
    nf = l2_norm(f)
    return l2_norm(r) / nf if nf > 0 else l2_norm(r)


def duality_gap(G, f, g):
    """``|<G f, g> - <f, G^ g>|`` relative to ``||f|| ||g||`` (L2 products)."""
    grid = G.form.grid
    M = grid.mass_matrix
    fv = getattr(f, "values", f)
    gv = getattr(g, "values", g)
    lhs = G(fv).values @ (M @ gv)
    rhs = fv @ (M @ G.apply_adjoint(gv).values)
    scale = np.sqrt((fv @ (M @ fv)) * (gv @ (M @ gv)))
    return abs(lhs - rhs) / scale


@dataclass(frozen=True)
class MarkovReport:
    min_value: float
    max_value: float
    m_matrix: bool
    asserted: bool
    passed: Optional[bool]


def is_m_matrix(mat, tol=0.0):
    """Nonpositive off-diagonals and nonnegative row sums (sufficient test)."""
    mat = mat.tocsr()
    off = mat - sp.diags(mat.diagonal())
    return bool(off.max() <= tol and mat.diagonal().min() > 0 and mat.sum(axis=1).min() >= -tol)


def markov_report(G, coeff, samples=20, seed=0, tol=1e-8):
    """Range of ``lam G_lam f`` over seeded data ``0 <= f <= 1``.

    The bound ``0 <= lam G f <= 1`` is asserted only for contraction-compliant
    presets with scalar diffusion on an M-matrix; otherwise it is reported.
    """
    grid = G.form.grid
    rng = np.random.default_rng(seed)
    base = random_fields(grid, samples, rng)
    lo, hi = base.min(axis=1, keepdims=True), base.max(axis=1, keepdims=True)
    data = (base - lo) / np.where(hi > lo, hi - lo, 1.0)
    vals = np.array([G.lam * G(f).values for f in data])
    m = is_m_matrix(G.form.matrix)
    A = G.form.coefficients.A if G.form.coefficients is not None else None
    scalar = A is not None and bool(
        np.allclose(A[..., 0, 1], 0) and np.allclose(A[..., 1, 0], 0)
        and np.allclose(A[..., 0, 0], A[..., 1, 1]))
    asserted = bool(coeff.satisfies_A3 and scalar and m)
    mn, mx = float(vals.min()), float(vals.max())
    passed = (mn >= -tol and mx <= 1 + tol) if asserted else None
    if asserted and not passed:
        raise DiagnosticFailure(f"lam G f left [0, 1]: range [{mn}, {mx}]")
    return MarkovReport(mn, mx, m, asserted, passed)
