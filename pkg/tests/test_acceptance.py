"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion."""

import math
import time

import numpy as np
import pytest

from twoscale.cell import solve_correctors
from twoscale.coeffs import make_preset
from twoscale.effective import assemble_effective, check_effective_ellipticity
from twoscale.forms import (assemble_delta_form, assemble_matrix, check_unit_contraction,
                            estimate_beta0, lower_order_requirements)
from twoscale.grid import DIRICHLET, PERIODIC, ScalarField, build_grid, l2_norm
from twoscale.sampling import random_fields
from twoscale.solver import (ResolventOperator, check_resolvent_identity, duality_gap,
                             load_vector)
from twoscale.study import StudyConfig, is_decreasing, run_convergence, run_resolvent_convergence
from twoscale.unfold import build_partition, check_integral_identity, is_aligned, unfold

import oracles

PI = np.pi
FRESH_SEED = 20261014  # distinct from the calibration seed 0


def _fmt(values):
    return "[" + ", ".join(f"{v:.3e}" for v in values) + "]"


@pytest.fixture(scope="module")
def layered_study():
    t = time.perf_counter()
    rep = run_convergence(StudyConfig(preset="layered", deltas=(0.25, 0.125, 0.0625), n=256, m=128))
    return rep, time.perf_counter() - t


def test_acc01_layered_effective_tensor(record_acceptance):
    t = time.perf_counter()
    c = make_preset("layered")
    eff = assemble_effective(c, solve_correctors(c, build_grid(PERIODIC, 128)))
    dt = time.perf_counter() - t
    ref = np.diag([oracles.harmonic_mean_closed_form(), 2.0])
    err = float(np.abs(eff.A[0] - ref).max())
    ok = err <= 1e-3 and dt < 5
    record_acceptance("ACC 1", ok, f"max|A_eff - diag(sqrt3, 2)| = {err:.2e}, {dt:.2f} s")
    assert ok


def _manufactured(n):
    g = build_grid(DIRICHLET, n, quad_order=3)
    form = assemble_delta_form(g, make_preset("constant"), 1.0, 0.0)
    f = lambda p: 2 * PI**2 * np.sin(PI * p[..., 0]) * np.sin(PI * p[..., 1])
    u = ScalarField(g, ResolventOperator(form).solve_vector(load_vector(g, f)))
    diff = u.at_quad() - np.sin(PI * g.quad_points[..., 0]) * np.sin(PI * g.quad_points[..., 1])
    return float(np.sqrt(np.sum(diff**2 * g.weights)))


def test_acc02_manufactured_solution(record_acceptance):
    t = time.perf_counter()
    e64, e128 = _manufactured(64), _manufactured(128)
    dt = time.perf_counter() - t
    ratio = e64 / e128
    ok = e64 <= 2e-3 and 3.6 <= ratio <= 4.4 and dt < 10
    record_acceptance("ACC 2", ok, f"L2 error n=64 {e64:.3e}, ratio {ratio:.3f}, {dt:.2f} s")
    assert ok


def test_acc03_homogenization_l2(layered_study, record_acceptance):
    rep, dt = layered_study
    e = rep.column("l2_error")
    ok = is_decreasing(e) and e[-1] < e[0] / 2 and dt < 180
    record_acceptance("ACC 3", ok, f"||u_d - u0|| = {_fmt(e)}, {dt:.1f} s")
    assert ok


def test_acc04_two_scale_gradient(layered_study, record_acceptance):
    rep, _ = layered_study
    e = rep.column("two_scale_error")
    ok = bool(np.all(np.isfinite(e))) and is_decreasing(e, last_slack=0.05)
    record_acceptance("ACC 4", ok, f"two-scale gradient error = {_fmt(e)}")
    assert ok


def test_acc05_energy(layered_study, record_acceptance):
    rep, _ = layered_study
    e = rep.column("energy_gap")
    ok = is_decreasing(e)
    record_acceptance("ACC 5", ok, f"energy gap = {_fmt(e)}")
    assert ok


def test_acc06_unfolding_exactness(record_acceptance):
    t = time.perf_counter()
    g, y = build_grid(DIRICHLET, 32), build_grid(PERIODIC, 8)
    part = build_partition(0.25)
    assert is_aligned(part, g, y)
    fields = [ScalarField(g, v) for v in random_fields(g, 20, FRESH_SEED)]
    ident, mult, contr = 0.0, True, 0.0
    for u, w in zip(fields, fields[1:] + fields[:1]):
        ident = max(ident, check_integral_identity(u, part, y))
        Tu, Tw = unfold(u, part, y), unfold(w, part, y)
        Tuw = unfold(lambda p: u(p) * w(p), part, y)
        mult &= bool(np.array_equal(Tuw.values, (Tu * Tw).values))
        contr = max(contr, Tu.l2_norm() - l2_norm(u))
    dt = time.perf_counter() - t
    ok = ident <= 1e-12 and mult and contr <= 1e-10 and dt < 1
    record_acceptance("ACC 6", ok, f"identity {ident:.1e}, multiplicative {mult}, "
                                   f"contraction excess {contr:.1e}, {dt:.2f} s")
    assert ok


def _lower_order_violations(name, lam, mode):
    g = build_grid(DIRICHLET, 32)
    c = make_preset(name)
    kw = {} if mode == "analytic" else {"grid": g, "seed": 0}
    cv = assemble_delta_form(g, c, 0.25, 0.0).coefficients
    fields = random_fields(g, 500, FRESH_SEED)
    out = {}
    for term, S in (("B", assemble_matrix(g, B=cv.B)), ("k", assemble_matrix(g, k=cv.k))):
        S = 0.5 * (S + S.T)
        beta0 = estimate_beta0(c, lam, mode, terms=(term,), **kw)
        req = lower_order_requirements(S, g.laplace_matrix, g.mass_matrix, lam, fields)
        out[term] = (int(np.sum(req > beta0)), beta0)
    return out


def test_acc07_lower_order_estimates(record_acceptance):
    t = time.perf_counter()
    details, bad = [], 0
    for name, mode in (("bounded-drift", "analytic"), ("singular-drift", "empirical")):
        for lam in (1.0, 0.1):
            for term, (v, b0) in _lower_order_violations(name, lam, mode).items():
                bad += v
                details.append(f"{name}/{term}/lam={lam}: beta0={b0:.3g} viol={v}")
    dt = time.perf_counter() - t
    ok = bad == 0 and dt < 10
    record_acceptance("ACC 7", ok, "; ".join(details) + f", {dt:.2f} s")
    assert ok


def test_acc08_resolvent_identity_and_duality(record_acceptance):
    g = build_grid(DIRICHLET, 64)
    c = make_preset("bounded-drift")
    b0 = estimate_beta0(c, 1.0)
    form = assemble_delta_form(g, c, 0.25, b0 + 1)
    F = random_fields(g, 10, FRESH_SEED)
    res = [check_resolvent_identity(form, b0 + 1, b0 + 4, f) for f in F]
    G = ResolventOperator(form)
    gaps = [duality_gap(G, f, h) for f, h in zip(F, np.roll(F, 1, axis=0))]
    ok = max(res) <= 1e-8 and max(gaps) <= 1e-10
    record_acceptance("ACC 8", ok, f"beta0={b0:.3g}, max resolvent residual {max(res):.1e}, "
                                   f"max duality gap {max(gaps):.1e}")
    assert ok


def test_acc09_unit_contraction(record_acceptance):
    g = build_grid(DIRICHLET, 16)
    c = make_preset("concave-drift", eta=1.0)
    assert c.satisfies_A3
    worst, best = math.inf, -math.inf
    for u in random_fields(g, 100, FRESH_SEED):
        u = 3.0 * u / np.abs(u).max()
        r = check_unit_contraction(g, c, 0.25, u)
        rel = r.value / float(u @ (g.h1_matrix @ u))
        worst, best = min(worst, rel), max(best, rel)
    ok = worst >= -1e-8
    record_acceptance("ACC 9", ok, f"E(Uu, u - Uu) / ||u||_H1^2 in [{worst:.3e}, {best:.3e}]")
    assert ok


def test_acc10_effective_ellipticity(record_acceptance):
    y = build_grid(PERIODIC, 128)
    details, ok = [], True
    for name in ("layered", "gradient-drift"):
        c = make_preset(name)
        eff = assemble_effective(c, solve_correctors(c, y))
        r = check_effective_ellipticity(eff, c.alpha, c.beta, raise_on_fail=False)
        ok &= r.passed
        details.append(f"{name}: [{r.alpha_eff:.4f}, {r.beta_eff:.4f}] in "
                       f"[{c.alpha}, {c.beta}(1+{r.M:.3f})]")
    record_acceptance("ACC 10", ok, "; ".join(details))
    assert ok


def test_acc11_resolvent_convergence(record_acceptance):
    t = time.perf_counter()
    rep = run_resolvent_convergence(StudyConfig(preset="layered", deltas=(0.25, 0.125, 0.0625),
                                                n=256, m=128))
    dt = time.perf_counter() - t
    d = rep.column("resolvent_distance")
    ok = is_decreasing(d)
    record_acceptance("ACC 11", ok, f"||G_d f_d - G_0 f|| = {_fmt(d)}, {dt:.1f} s")
    assert ok
