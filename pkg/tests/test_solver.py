import numpy as np
import pytest

from twoscale.coeffs import make_preset
from twoscale.errors import ConfigurationError
from twoscale.forms import assemble_delta_form, estimate_beta0, norm_equivalence
from twoscale.grid import DIRICHLET, ScalarField, build_grid
from twoscale.sampling import random_fields
from twoscale.solver import (ResolventOperator, check_apriori, check_resolvent_identity,
                             coercivity_constant, duality_gap, is_m_matrix, load_vector,
                             markov_report, solve_variational)

PI = np.pi


def _eigen(p):
    return 2 * PI**2 * np.sin(PI * p[..., 0]) * np.sin(PI * p[..., 1])


def _exact(p):
    return np.sin(PI * p[..., 0]) * np.sin(PI * p[..., 1])


def _manufactured_error(n, method="auto"):
    g = build_grid(DIRICHLET, n, quad_order=3)
    form = assemble_delta_form(g, make_preset("constant"), 1.0, 0.0)
    u = ScalarField(g, ResolventOperator(form, method=method).solve_vector(load_vector(g, _eigen)))
    diff = u.at_quad() - _exact(g.quad_points)
    return float(np.sqrt(np.sum(diff**2 * g.weights)))


def test_manufactured_solution():
    e64, e128 = _manufactured_error(64), _manufactured_error(128)
    assert e64 <= 2e-3
    assert 3.6 <= e64 / e128 <= 4.4


def test_iterative_path_agrees_with_direct():
    assert _manufactured_error(24, "iterative") == pytest.approx(_manufactured_error(24, "direct"),
                                                                 rel=1e-6)


def test_zero_data_zero_solution():
    g = build_grid(DIRICHLET, 8)
    form = assemble_delta_form(g, make_preset("bounded-drift"), 0.25, 20.0)
    u = solve_variational(form, f=np.zeros(g.n_dofs))
    assert np.array_equal(u.values, np.zeros(g.n_dofs))


def test_refuses_lambda_below_index():
    g = build_grid(DIRICHLET, 8)
    c = make_preset("bounded-drift")
    b0 = estimate_beta0(c, 1.0)
    with pytest.raises(ConfigurationError, match="must exceed the index"):
        solve_variational(assemble_delta_form(g, c, 0.25, b0), f=_eigen, beta0=b0)


def test_exactly_one_datum():
    g = build_grid(DIRICHLET, 4)
    form = assemble_delta_form(g, make_preset("constant"), 1.0, 0.0)
    with pytest.raises(ConfigurationError):
        solve_variational(form)
    with pytest.raises(ConfigurationError):
        ResolventOperator(form, method="magic")


def test_load_vector_paths_agree_for_nodal_data():
    g = build_grid(DIRICHLET, 8)
    f = random_fields(g, 1, 0)[0]
    a = load_vector(g, ScalarField(g, f))
    b = load_vector(g, f)
    c = load_vector(g, lambda p: g.evaluate(f, p.reshape(-1, 2)).reshape(p.shape[:-1]))
    assert np.allclose(a, b) and np.allclose(a, c, atol=1e-14)


def test_apriori_layered():
    g = build_grid(DIRICHLET, 32)
    c = make_preset("layered")
    form = assemble_delta_form(g, c, 0.25, 1.0)
    f = g.interpolate(_eigen)
    u = solve_variational(form, f=f)
    k1 = coercivity_constant(form)
    res = check_apriori(u, f, k1)
    assert res.passed and res.slack > 0
    assert not check_apriori(10 * u, f, k1).passed
    z = check_apriori(g.zeros(), g.zeros(), k1)
    assert z.passed and z.lhs == 0.0 and z.bound == 0.0


def test_apriori_with_diagnostic_constant():
    g = build_grid(DIRICHLET, 24)
    c = make_preset("bounded-drift")
    b0 = estimate_beta0(c, 1.0)
    form = assemble_delta_form(g, c, 0.25, b0 + 1)
    k1, *_ = norm_equivalence(form.with_lambda(0.0), b0 + 1)
    f = g.interpolate(_eigen)
    assert check_apriori(solve_variational(form, f=f), f, k1).passed


def test_resolvent_identity_same_lambda():
    g = build_grid(DIRICHLET, 16)
    form = assemble_delta_form(g, make_preset("layered"), 0.25, 0.0)
    assert check_resolvent_identity(form, 2.0, 2.0, random_fields(g, 1, 3)[0]) <= 1e-12


def test_resolvent_identity_symmetric():
    g = build_grid(DIRICHLET, 32)
    form = assemble_delta_form(g, make_preset("layered"), 0.25, 0.0)
    for f in random_fields(g, 5, 4):
        assert check_resolvent_identity(form, 2.0, 5.0, f) <= 1e-8


def test_duality():
    g = build_grid(DIRICHLET, 24)
    c = make_preset("bounded-drift")
    form = assemble_delta_form(g, c, 0.25, estimate_beta0(c, 1.0) + 1)
    G = ResolventOperator(form)
    F = random_fields(g, 6, 5)
    for f, h in zip(F[:3], F[3:]):
        assert duality_gap(G, f, h) <= 1e-10


def test_markov_asserted_on_m_matrix():
    g = build_grid(DIRICHLET, 16)
    c = make_preset("concave-drift", gamma=0.0, b_amp=0.0)
    form = assemble_delta_form(g, c, 0.25, 1.0)
    rep = markov_report(ResolventOperator(form), c)
    assert rep.m_matrix and is_m_matrix(form.matrix)
    assert rep.asserted and rep.passed
    assert rep.min_value >= -1e-8 and rep.max_value <= 1 + 1e-8


def test_markov_reported_otherwise():
    g = build_grid(DIRICHLET, 12)
    c = make_preset("gradient-drift")
    form = assemble_delta_form(g, c, 0.25, 100.0)
    rep = markov_report(ResolventOperator(form), c)
    assert not rep.asserted and rep.passed is None
