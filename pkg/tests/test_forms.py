import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twoscale.coeffs import make_preset
from twoscale.errors import ConfigurationError, DiagnosticFailure, UnsupportedModeError
from twoscale.forms import (POINCARE_CONSTANT, assemble_delta_form, assemble_matrix,
                            check_garding, check_sector, check_unit_contraction, diagnose,
                            estimate_beta0, estimate_beta0_details, form_index,
                            lower_order_requirements, norm_equivalence)
from twoscale.grid import DIRICHLET, PERIODIC, ScalarField, build_grid, h1_seminorm, l2_norm
from twoscale.sampling import random_fields

import oracles


@pytest.fixture(scope="module")
def g16():
    return build_grid(DIRICHLET, 16)


def _const(A=np.eye(2), B=(0.0, 0.0), C=(0.0, 0.0), k=0.0):
    return make_preset("constant", A=A, B=B, C=C, k=k)


@pytest.mark.parametrize("A,B,C,k", [
    (np.eye(2), (0, 0), (0, 0), 0.0),
    (np.array([[2.0, 0.3], [-0.1, 1.0]]), (1.0, -0.5), (0.25, 2.0), 0.7),
])
def test_matches_loop_assembly(A, B, C, k):
    n = 6
    g = build_grid(DIRICHLET, n)
    form = assemble_delta_form(g, _const(A, B, C, k), 0.25, 0.0)
    ref = oracles.loop_assemble(n, np.asarray(A, float), np.asarray(B, float),
                                np.asarray(C, float), k)
    assert np.allclose(form.K.toarray(), ref, atol=1e-13)


def test_stiffness_identity(g16):
    form = assemble_delta_form(g16, _const(), 0.5, 0.0)
    for u in random_fields(g16, 10, 0):
        assert form.energy(u) == pytest.approx(h1_seminorm(ScalarField(g16, u)) ** 2, rel=1e-12)


def test_constant_drift_annihilates_on_the_diagonal(g16):
    form = assemble_delta_form(g16, _const(B=(1.0, 0.0)), 0.5, 0.0)
    for u in random_fields(g16, 10, 1):
        assert form.energy(u) == pytest.approx(h1_seminorm(ScalarField(g16, u)) ** 2, rel=1e-10)


def test_lambda_adds_mass(g16):
    form = assemble_delta_form(g16, make_preset("layered"), 0.25, 1.0)
    u = random_fields(g16, 1, 2)[0]
    assert form.energy(u) - form.energy(u, shift=0.0) == pytest.approx(
        l2_norm(ScalarField(g16, u)) ** 2, rel=1e-12)
    assert np.allclose(form.matrix.toarray(), (form.K + form.M).toarray())


def test_effective_form_requires_dirichlet():
    with pytest.raises(ConfigurationError):
        assemble_delta_form(build_grid(PERIODIC, 4), _const(), 0.5, 0.0)
    with pytest.raises(ConfigurationError):
        assemble_delta_form(build_grid(DIRICHLET, 4), _const(), 0.0, 0.0)


def test_adjoint_swaps_drift_roles(g16):
    c = make_preset("bounded-drift")
    cv = assemble_delta_form(g16, c, 0.25, 0.0).coefficients
    K1 = assemble_matrix(g16, cv.A, cv.B, cv.C, cv.k)
    K2 = assemble_matrix(g16, cv.A, cv.C, cv.B, cv.k)
    assert abs(K1 - K2.T).max() <= 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2**31 - 1))
def test_poincare_on_interior_fields(n, seed):
    g = build_grid(DIRICHLET, n)
    u = ScalarField(g, np.random.default_rng(seed).normal(size=g.n_dofs))
    assert l2_norm(u) <= POINCARE_CONSTANT * h1_seminorm(u)


def test_poincare_constant_is_sharp():
    from twoscale.forms import extreme_generalized_eigenpair
    g = build_grid(DIRICHLET, 32)
    mu, _ = extreme_generalized_eigenpair(g.laplace_matrix, g.mass_matrix, "min")
    assert mu == pytest.approx(2 * math.pi**2, rel=5e-3)
    assert mu >= 2 * math.pi**2  # conforming elements overestimate eigenvalues


# ---------------------------------------------------------------------------
# index estimates

def test_beta0_zero_without_lower_order_terms():
    assert estimate_beta0(make_preset("layered"), 1.0) == 0.0
    assert estimate_beta0(make_preset("layered"), 1.0, "empirical", samples=20) == 0.0


def test_beta0_analytic_plug_in():
    c = _const(B=(2.0, -1.0))
    assert estimate_beta0(c, 1.0, terms=("B",)) == pytest.approx(oracles.analytic_beta0_symbolic(2, 1))


def test_beta0_analytic_refuses_unbounded():
    with pytest.raises(UnsupportedModeError):
        estimate_beta0(make_preset("singular-drift"), 1.0)


@pytest.mark.parametrize("lam", [0.0, -1.0])
def test_beta0_needs_positive_lambda(lam):
    with pytest.raises(ConfigurationError):
        estimate_beta0(make_preset("bounded-drift"), lam)


def test_beta0_bad_mode_and_term():
    with pytest.raises(ConfigurationError):
        estimate_beta0(make_preset("bounded-drift"), 1.0, "guess")
    with pytest.raises(ConfigurationError):
        estimate_beta0(make_preset("bounded-drift"), 1.0, terms=("Q",))


@pytest.mark.parametrize("lam", [1.0, 0.1])
def test_singular_beta0_holds_on_fresh_basket(lam):
    c = make_preset("singular-drift")
    g = build_grid(DIRICHLET, 32)
    est = estimate_beta0_details(c, lam, "empirical", grid=g, seed=0)
    fresh = random_fields(g, 500, 12345)
    form = assemble_delta_form(g, c, 0.25, 0.0)
    from twoscale.forms import _term_matrix
    for t in ("B", "k"):
        S = _term_matrix(g, form.coefficients, t)
        req = lower_order_requirements(S, g.laplace_matrix, g.mass_matrix, lam, fresh)
        assert np.all(req <= est.per_term[t])
    if lam < 1:
        assert est.beta0 > 0


def test_empirical_dominates_exact_discrete_sup():
    est = estimate_beta0_details(make_preset("bounded-drift", b_amp=5.0), 0.1, "empirical", samples=30)
    for t in ("B", "k"):
        assert est.per_term[t] >= est.discrete_sup[t] >= est.basket_requirement[t] - 1e-9


def test_form_index_makes_form_nonnegative(g16):
    for name in ("bounded-drift", "gradient-drift"):
        c = make_preset(name)
        form = assemble_delta_form(g16, c, 0.25, 0.0)
        res = check_garding(form, form_index(c))
        assert res.passed, (name, res.worst_margin)


# ---------------------------------------------------------------------------
# structure checks

def test_garding_symmetric_passes(g16):
    form = assemble_delta_form(g16, _const(), 0.5, 0.0)
    assert check_garding(form, 0.0).passed


def test_garding_with_beta0_passes(g16):
    c = make_preset("bounded-drift")
    form = assemble_delta_form(g16, c, 0.25, 0.0)
    assert check_garding(form, estimate_beta0(c, 1.0)).passed


def test_garding_fails_with_witness():
    g = build_grid(DIRICHLET, 16)
    c = make_preset("bounded-drift", b_amp=60.0, c_amp=0.0, k_amp=0.0)
    form = assemble_delta_form(g, c, 0.25, 0.0)
    res = check_garding(form, -1.0)
    assert not res.passed and res.worst_margin < 0
    w = res.witness
    assert form.energy(w, shift=-1.0) < 0


def test_sector_symmetric(g16):
    form = assemble_delta_form(g16, make_preset("layered"), 0.25, 0.0)
    assert check_sector(form, 1.0) <= 1 + 1e-8


def test_sector_drift_finite(g16):
    c = make_preset("bounded-drift", b_amp=4.0)
    form = assemble_delta_form(g16, c, 0.25, 0.0)
    d = diagnose(g16, c, 0.25, samples=100)
    assert d.sector >= 1 and math.isfinite(d.sector)
    assert math.isfinite(check_sector(form, d.beta))


def test_sector_below_index_raises():
    g = build_grid(DIRICHLET, 8)
    form = assemble_delta_form(g, _const(), 0.5, 0.0)
    with pytest.raises(DiagnosticFailure, match="beta below index"):
        check_sector(form, -1000.0)


def test_norm_equivalence_brackets_samples(g16):
    c = make_preset("bounded-drift")
    form = assemble_delta_form(g16, c, 0.25, 0.0)
    beta = form_index(c) + 1.0
    k1, k2, lo, hi = norm_equivalence(form, beta)
    assert 0 < k1 <= lo + 1e-12 and hi <= k2 + 1e-12


def test_diagnose_constant():
    d = diagnose(build_grid(DIRICHLET, 8), _const(), 0.5, samples=50)
    assert d.beta0 == 0 and d.sector == 1.0 and d.sector_sampled <= 1 + 1e-8
    assert d.kappa1 > 0 and set(d.as_dict()) >= {"beta0", "kappa1", "kappa2", "seed"}


# ---------------------------------------------------------------------------
# unit contraction

@pytest.fixture(scope="module")
def a3():
    return make_preset("concave-drift", eta=1.0)


def test_contraction_range_in_unit_interval(g16, a3):
    u = np.clip(random_fields(g16, 1, 4)[0], 0.0, None)
    u = 0.9 * u / u.max()
    r = check_unit_contraction(g16, a3, 0.25, u)
    assert r.value == 0.0 and r.direct_value == 0.0


def test_contraction_nonpositive_field(g16, a3):
    u = -np.abs(random_fields(g16, 1, 5)[0])
    r = check_unit_contraction(g16, a3, 0.25, u)
    assert r.value == 0.0


def test_contraction_not_applicable(g16):
    r = check_unit_contraction(g16, make_preset("gradient-drift"), 0.25, np.ones(g16.n_dofs))
    assert not r.applicable and r.status == "not applicable"


def test_contraction_nonnegative_and_paths_agree(g16, a3):
    for u in random_fields(g16, 12, 6):
        u = 3.0 * u / np.abs(u).max()
        r = check_unit_contraction(g16, a3, 0.25, u, refine=8)
        h1 = float(u @ (g16.h1_matrix @ u))
        assert r.value >= -1e-8 * h1
        assert r.direct_value == pytest.approx(r.value, rel=0.05, abs=1e-3 * h1)
        assert r.terms["A"] == 0.0 and r.terms["B"] == 0.0
