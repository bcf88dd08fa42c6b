"""Assembly of the bilinear forms and sampled checks of their structure.

For trial ``u`` and test ``v`` the form is

    E(u, v) = int A grad u . grad v + (B . grad u) v + u (C . grad v) + k u v

and ``E_lam = E + lam (., .)_{L^2}``.  Matrices are stored test-by-trial,
so ``E(u, v) = v @ K @ u`` and ``u @ K @ u = E(u, u)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coeffs import CoefficientValues, evaluate_delta
from .errors import ConfigurationError, DiagnosticFailure, UnsupportedModeError
from .grid import DIRICHLET, build_grid, gauss_rule, reference_shape
from .sampling import random_fields

#: Poincare constant of the unit square, 1 / sqrt(2 pi^2) plus slack
POINCARE_CONSTANT = 1.0 / (math.sqrt(2.0) * math.pi) + 1e-6

DENSE_LIMIT = 2500


def coefficients_at_quad(grid, coeff, delta):
    """``(A^delta, B^delta, C^delta, k^delta)`` at the quadrature points of ``grid``."""
    return evaluate_delta(coeff, delta, grid.quad_points)


def assemble_matrix(grid, A=None, B=None, C=None, k=None):
    """Sparse matrix of the form with coefficient arrays given at quadrature points.

    Each coefficient is ``None`` (term absent) or an array shaped like
    ``(n_elements, nq, ...)``.  Rows are test DOFs, columns trial DOFs.
    """
    w = grid.weights
    N = grid.N
    dN = grid.dN
    local = np.zeros((grid.n_elements, 4, 4))
    if A is not None:
        local += np.einsum("q,qai,eqij,qbj->eab", w, dN, A, dN, optimize=True)
    if B is not None:
        local += np.einsum("q,qa,eqj,qbj->eab", w, N, B, dN, optimize=True)
    if C is not None:
        local += np.einsum("q,qb,eqi,qai->eab", w, N, C, dN, optimize=True)
    if k is not None:
        local += np.einsum("q,eq,qa,qb->eab", w, k, N, N, optimize=True)
    return grid._scatter(local)


def assemble_load(grid, values=None, flux=None):
    """Load vector ``int f phi_a + int G . grad phi_a`` from quadrature values."""
    local = np.zeros((grid.n_elements, 4))
    if values is not None:
        local += np.einsum("q,eq,qa->ea", grid.weights, values, grid.N)
    if flux is not None:
        local += np.einsum("q,eqd,qad->ea", grid.weights, flux, grid.dN)
    dofs = grid.element_dofs.ravel()
    keep = dofs >= 0
    return np.bincount(dofs[keep], local.ravel()[keep], minlength=grid.n_dofs)


@dataclass(frozen=True, eq=False)
class AssembledForm:
    """Form matrix ``K`` over the grid DOFs, mass matrix ``M`` and metadata."""

    grid: object
    K: sp.csr_matrix
    M: sp.csr_matrix
    lam: float
    delta: object
    preset: str
    coefficients: Optional[CoefficientValues] = field(default=None, repr=False)
    coeff: object = field(default=None, repr=False)

    @cached_property
    def matrix(self):
        """``K + lam M``, the matrix of ``E_lam``."""
        return (self.K + self.lam * self.M).tocsc()

    def with_lambda(self, lam):
        return AssembledForm(self.grid, self.K, self.M, float(lam), self.delta,
                             self.preset, self.coefficients, self.coeff)

    def energy(self, u, v=None, shift=None):
        """``E(u, v) + shift (u, v)``; ``shift`` defaults to the form's lambda."""
        u = getattr(u, "values", u)
        v = u if v is None else getattr(v, "values", v)
        s = self.lam if shift is None else shift
        return float(v @ (self.K @ u) + s * (v @ (self.M @ u)))


def assemble_delta_form(grid, coeff, delta, lam):
    """Assemble ``E^delta_lam`` with Dirichlet elimination on the boundary."""
    if grid.kind != DIRICHLET:
        raise ConfigurationError("the delta form is assembled on a dirichlet grid")
    if not delta > 0:
        raise ConfigurationError(f"delta must be positive, got {delta!r}")
    cv = coefficients_at_quad(grid, coeff, delta)
    K = assemble_matrix(grid, cv.A, cv.B, cv.C, cv.k)
    return AssembledForm(grid, K, grid.mass_matrix, float(lam), float(delta), coeff.name, cv, coeff)


def assemble_effective_form(grid, eff, lam):
    """Assemble ``E^0_lam`` from effective coefficients sampled at the quadrature points."""
    if grid.kind != DIRICHLET:
        raise ConfigurationError("the effective form is assembled on a dirichlet grid")
    cv = eff.at_quad(grid)
    K = assemble_matrix(grid, cv.A, cv.B, cv.C, cv.k)
    return AssembledForm(grid, K, grid.mass_matrix, float(lam), "effective", eff.preset, cv)


# ---------------------------------------------------------------------------
# generalized eigenvalue helpers

def _sym(mat):
    return 0.5 * (mat + mat.T)


def extreme_generalized_eigenpair(S, B, which):
    """Largest (``"max"``) or smallest (``"min"``) eigenpair of ``S x = mu B x``.

    ``S`` symmetric, ``B`` symmetric positive definite.
    """
    n = S.shape[0]
    if n <= DENSE_LIMIT:
        Sd = S.toarray() if sp.issparse(S) else np.asarray(S)
        Bd = B.toarray() if sp.issparse(B) else np.asarray(B)
        idx = [n - 1, n - 1] if which == "max" else [0, 0]
        mu, vec = sla.eigh(Sd, Bd, subset_by_index=idx)
        if mu.size == 0:
            # the selective driver can return nothing on fully clustered spectra
            mu, vec = sla.eigh(Sd, Bd)
            j = -1 if which == "max" else 0
            return float(mu[j]), vec[:, j]
        return float(mu[0]), vec[:, 0]
    sign = 1.0 if which == "max" else -1.0
    mu, vec = spla.eigsh(sign * S, k=1, M=B, which="LA", tol=1e-10, maxiter=20000)
    return float(sign * mu[0]), vec[:, 0]


# ---------------------------------------------------------------------------
# lower-order term estimates

_TERMS = ("B", "C", "k")


def _term_matrix(grid, cv, term):
    if term == "B":
        return _sym(assemble_matrix(grid, B=cv.B))
    if term == "C":
        return _sym(assemble_matrix(grid, C=cv.C))
    if term == "k":
        return assemble_matrix(grid, k=cv.k)
    raise ConfigurationError(f"unknown lower-order term {term!r}")


def _analytic_term(coeff, lam, term, d=2):
    sup = {"B": coeff.b_sup, "C": coeff.c_sup, "k": coeff.k_sup}[term]
    if sup is None:
        raise UnsupportedModeError(
            f"analytic beta0 needs a bounded {term} (p0 = inf); preset {coeff.name!r} has p0={coeff.p0}")
    if term == "k":
        return float(sup)
    half = 0.5 * sup
    eps = lam / (half + 1.0)
    return half * d / eps


def lower_order_requirements(S, K, M, lam, fields):
    """Per-field smallest ``beta`` with ``|u.S.u| <= lam u.K.u + beta u.M.u``."""
    su = np.einsum("ij,ij->i", fields, (S @ fields.T).T)
    ku = np.einsum("ij,ij->i", fields, (K @ fields.T).T)
    mu = np.einsum("ij,ij->i", fields, (M @ fields.T).T)
    return np.maximum(np.abs(su) - lam * ku, 0.0) / mu


@dataclass(frozen=True)
class Beta0Estimate:
    beta0: float
    mode: str
    lam: float
    per_term: dict
    basket_requirement: dict
    discrete_sup: dict
    seed: int


def estimate_beta0_details(coeff, lam, mode="analytic", terms=("B", "k"), grid=None, delta=0.25,
                           samples=200, seed=0, safety=1.5):
    """Constant ``beta0`` with ``|T(u)| <= lam D(u, u) + beta0 ||u||^2`` for each term.

    ``T(u)`` is ``int B . grad u u`` (term ``"B"``), ``int u C . grad u``
    (``"C"``) or ``int u^2 k`` (``"k"``); ``D`` is the Dirichlet integral.

    ``mode="analytic"`` (bounded coefficients only) uses the Young-inequality
    chain: with ``M = max_i ||b_i||_inf`` and ``eps = lam / (M/2 + 1)`` the
    drift needs ``beta0 = (M/2) d / eps``; a bounded potential needs
    ``||k||_inf``.

    ``mode="empirical"`` works on a Dirichlet grid (default ``n = 32``) with
    the ``delta``-scaled coefficients.  For each term it takes the larger of
    the requirement over a seeded basket of ``samples`` fields and the exact
    discrete supremum (largest generalized eigenvalue of ``+-S - lam K``
    against the mass matrix), then inflates by ``safety``.
    """
    if not lam > 0:
        raise ConfigurationError(f"lambda must be positive, got {lam!r}")
    if mode not in ("analytic", "empirical"):
        raise ConfigurationError(f"unknown beta0 mode {mode!r}")
    for t in terms:
        if t not in _TERMS:
            raise ConfigurationError(f"unknown lower-order term {t!r}")
    per_term, basket, sup = {}, {}, {}
    if mode == "analytic":
        if not math.isinf(coeff.p0):
            raise UnsupportedModeError(
                f"analytic beta0 needs p0 = inf; preset {coeff.name!r} has p0={coeff.p0}")
        for t in terms:
            per_term[t] = _analytic_term(coeff, lam, t)
    else:
        grid = grid if grid is not None else build_grid(DIRICHLET, 32)
        cv = coefficients_at_quad(grid, coeff, delta)
        fields = random_fields(grid, samples, np.random.default_rng(seed))
        K, M = grid.laplace_matrix, grid.mass_matrix
        for t in terms:
            S = _term_matrix(grid, cv, t)
            if S.nnz == 0 or abs(S).max() == 0:
                per_term[t], basket[t], sup[t] = 0.0, 0.0, 0.0
                continue
            req = lower_order_requirements(S, K, M, lam, fields)
            basket[t] = float(req.max())
            top = max(extreme_generalized_eigenpair(s * S - lam * K, M, "max")[0] for s in (1.0, -1.0))
            sup[t] = max(top, 0.0)
            per_term[t] = safety * max(basket[t], sup[t])
    beta0 = max(per_term.values(), default=0.0)
    return Beta0Estimate(float(beta0), mode, float(lam), per_term, basket, sup, seed)


def estimate_beta0(coeff, lam, mode="analytic", **kwargs):
    """Scalar ``beta0``; see :func:`estimate_beta0_details`."""
    return estimate_beta0_details(coeff, lam, mode, **kwargs).beta0


def default_mode(coeff):
    bounded = math.isinf(coeff.p0) and None not in (coeff.b_sup, coeff.c_sup, coeff.k_sup)
    return "analytic" if bounded else "empirical"


def form_index(coeff, mode=None, **kwargs):
    """Index ``beta0`` making ``E + beta0 (., .)`` nonnegative.

    Each lower-order term is bounded by ``(alpha/3) D(u, u) + beta_t ||u||^2``
    and ``beta0 = beta_B + beta_C + beta_k``, so that
    ``E(u, u) + beta0 ||u||^2 >= 0``.
    """
    mode = mode or default_mode(coeff)
    lam = coeff.alpha / 3.0
    total = 0.0
    for t in _TERMS:
        total += estimate_beta0(coeff, lam, mode, terms=(t,), **kwargs)
    return total


# ---------------------------------------------------------------------------
# sampled structure checks

@dataclass(frozen=True)
class GardingResult:
    passed: bool
    worst_margin: float
    witness: Optional[np.ndarray] = field(default=None, repr=False)


def check_garding(form, beta, samples=200, seed=0, search=True, tol=1e-10):
    """Check ``E_beta(u, u) >= -tol ||u||_{H^1}^2`` on a seeded basket.

    With ``search`` the basket is augmented by the exact minimizer of the
    discrete Rayleigh quotient ``E_beta(u, u) / ||u||_{H^1}^2``.
    """
    grid = form.grid
    fields = random_fields(grid, samples, np.random.default_rng(seed))
    H = grid.h1_matrix
    S = _sym(form.K) + beta * form.M
    if search:
        _, v = extreme_generalized_eigenpair(S, H, "min")
        fields = np.vstack([fields, v[None, :]])
    num = np.einsum("ij,ij->i", fields, (S @ fields.T).T)
    den = np.einsum("ij,ij->i", fields, (H @ fields.T).T)
    margin = num / den
    i = int(np.argmin(margin))
    worst = float(margin[i])
    return GardingResult(worst >= -tol, worst, fields[i])


def check_sector(form, beta, samples=200, seed=0):
    """Sampled sector constant ``max |E(u, v)| / sqrt(E_beta(u, u) E_beta(v, v))``.

    Raises
    ------
    DiagnosticFailure
        a sampled ``E_beta(u, u)`` is not positive ("beta below index").
    """
    rng = np.random.default_rng(seed)
    grid = form.grid
    U = random_fields(grid, samples, rng)
    V = random_fields(grid, samples, rng)
    Sb = _sym(form.K) + beta * form.M
    eu = np.einsum("ij,ij->i", U, (Sb @ U.T).T)
    ev = np.einsum("ij,ij->i", V, (Sb @ V.T).T)
    if eu.min() <= 0 or ev.min() <= 0:
        raise DiagnosticFailure(f"beta below index: E_beta(u, u) <= 0 for beta={beta}")
    cross = np.einsum("ij,ij->i", V, (form.K @ U.T).T)
    return float(np.max(np.abs(cross) / np.sqrt(eu * ev)))


def norm_equivalence(form, beta, samples=200, seed=0):
    """Equivalence constants of ``E_beta`` against ``||.||_{H^1}^2``.

    Returns ``(kappa1, kappa2, sampled_min, sampled_max)``: the exact
    discrete extremes of the Rayleigh quotient, and its range over a seeded
    basket (which must lie inside ``[kappa1, kappa2]``).
    """
    grid = form.grid
    H = grid.h1_matrix
    S = _sym(form.K) + beta * form.M
    k1 = extreme_generalized_eigenpair(S, H, "min")[0]
    k2 = extreme_generalized_eigenpair(S, H, "max")[0]
    fields = random_fields(grid, samples, np.random.default_rng(seed))
    q = (np.einsum("ij,ij->i", fields, (S @ fields.T).T)
         / np.einsum("ij,ij->i", fields, (H @ fields.T).T))
    return k1, k2, float(q.min()), float(q.max())


@dataclass(frozen=True)
class FormDiagnostics:
    beta0: float
    beta: float
    kappa1: float
    kappa2: float
    sector: float
    sector_sampled: float
    poincare: float
    seed: int
    mode: str

    def as_dict(self):
        return asdict(self)


def diagnose(grid, coeff, delta, mode=None, samples=200, seed=0):
    """Index, equivalence constants (at ``beta = beta0 + 1``) and sector constant.

    ``sector`` is ``max(1, sector_sampled)``, the smallest admissible
    constant consistent with the sampled pairs.
    """
    mode = mode or default_mode(coeff)
    beta0 = form_index(coeff, mode, delta=delta, seed=seed) if coeff.has_drift else 0.0
    beta = beta0 + 1.0
    form = assemble_delta_form(grid, coeff, delta, 0.0)
    k1, k2, _, _ = norm_equivalence(form, beta, samples, seed)
    K_hat = check_sector(form, beta, samples, seed)
    return FormDiagnostics(beta0, beta, k1, k2, max(1.0, K_hat), K_hat, POINCARE_CONSTANT, seed, mode)


# ---------------------------------------------------------------------------
# unit contraction

@dataclass(frozen=True)
class UnitContractionResult:
    applicable: bool
    value: Optional[float] = None
    direct_value: Optional[float] = None
    terms: dict = field(default_factory=dict)

    @property
    def status(self):
        return "ok" if self.applicable else "not applicable"


def _refined_rule(refine, order=3):
    pts, wts = gauss_rule(order)
    sub = (np.arange(refine)[:, None] + pts[None, :]).ravel() / refine
    sw = np.tile(wts, refine) / refine
    qs, qt = np.meshgrid(sub, sub, indexing="xy")
    return np.column_stack([qs.ravel(), qt.ravel()]), np.outer(sw, sw).ravel()


def check_unit_contraction(grid, coeff, delta, u, refine=4):
    """Evaluate ``E(Uu, u - Uu)`` for the unit contraction ``Uu = (0 v u) ^ 1``.

    ``u`` is the bilinear interpolant of a DOF vector.  The truncation is
    applied pointwise; then wherever ``grad Uu`` is nonzero ``u - Uu``
    vanishes, so the ``A`` and ``B`` integrands are identically zero and

        E(Uu, u - Uu) = int_{u > 1} C . grad u + int_{u > 1} (u - 1) k.

    ``direct_value`` integrates the four integrands by refined quadrature.
    ``value`` replaces the ``C`` part by the equivalent
    ``-int div C^delta (u - 1)^+`` (zero trace of ``(u - 1)^+``), which is
    free of the kink in the truncated gradient.  Presets that do not
    declare the contraction condition are reported as not applicable.
    """
    if not coeff.satisfies_A3:
        return UnitContractionResult(False)
    vals = getattr(u, "values", u)
    local, lw = _refined_rule(refine)
    N, dN = reference_shape(local)
    ev = grid.element_values(vals)
    uq = ev @ N.T
    gq = np.einsum("ea,pad->epd", ev, dN) / grid.h
    xq = grid.element_origin[:, None, :] + grid.h * local[None, :, :]
    w = lw * grid.h**2
    cv = evaluate_delta(coeff, delta, xq)

    Uu = np.clip(uq, 0.0, 1.0)
    mid = (uq >= 0.0) & (uq <= 1.0)
    gU = gq * mid[..., None]
    rest = uq - Uu
    grest = gq * (~mid)[..., None]
    tA = np.einsum("epi,epij,epj->ep", grest, cv.A, gU)
    tB = np.einsum("epi,epi->ep", cv.B, gU) * rest
    tC = Uu * np.einsum("epi,epi->ep", cv.C, grest)
    tk = Uu * rest * cv.k
    terms = {name: float(np.sum(t * w)) for name, t in (("A", tA), ("B", tB), ("C", tC), ("k", tk))}
    direct = sum(terms.values())
    if coeff.div_C is None:
        return UnitContractionResult(True, direct, direct, terms)
    ys = xq / delta
    dx, dy = coeff.div_C(xq, ys - np.floor(ys))
    div = dx + dy / delta
    excess = np.maximum(uq - 1.0, 0.0)
    c_ibp = float(np.sum(-div * excess * w))
    terms["C_by_parts"] = c_ibp
    value = terms["A"] + terms["B"] + c_ibp + terms["k"]
    return UnitContractionResult(True, value, direct, terms)
