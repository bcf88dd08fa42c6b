"""The reference values themselves, cross-checked two ways each."""

import math

import numpy as np
import pytest

import oracles


def test_harmonic_mean_quadrature_matches_closed_form():
    assert oracles.harmonic_mean_layered() == pytest.approx(math.sqrt(3.0), abs=1e-12)
    assert oracles.harmonic_mean_layered(3.0, 2.0) == pytest.approx(math.sqrt(5.0), abs=1e-12)


def test_corrector_derivative_has_zero_mean():
    y = (np.arange(20000) + 0.5) / 20000
    assert abs(np.mean(oracles.layered_corrector_derivative(y))) < 1e-10


def test_analytic_beta0_plug_in():
    # M = 2, d = 2, lam = 1: eps = 1/2, beta0 = 1 * 2 / (1/2)
    assert oracles.analytic_beta0_symbolic(2, 1) == pytest.approx(4.0)


@pytest.mark.parametrize("delta,count", [(0.25, 16), (1 / 3, 9), (0.3, 9), (1.0, 1), (0.55, 1)])
def test_lattice_enumeration(delta, count):
    assert len(oracles.lattice_cells(delta)) == count


def test_reference_element_matrices_match_loop_assembly():
    K = oracles.loop_assemble(2, np.eye(2), np.zeros(2), np.zeros(2), 0.0)
    # single interior node: four elements, each contributing the diagonal 4/6
    assert K[0, 0] == pytest.approx(4 * 4 / 6)
    M = oracles.loop_assemble(2, np.zeros((2, 2)), np.zeros(2), np.zeros(2), 1.0)
    assert M[0, 0] == pytest.approx(4 * oracles.q1_reference_mass(0.5)[0, 0])


def test_dirichlet_eigenvalue_gives_poincare_constant():
    # smallest eigenvalue of -Laplace on the unit square is 2 pi^2
    assert 1 / math.sqrt(2 * math.pi**2) == pytest.approx(1 / (math.sqrt(2) * math.pi))
