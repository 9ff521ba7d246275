import math

import numpy as np
import pytest

from nonlocal_kit import functions as F
from nonlocal_kit.dirichlet import (BallInterpolant, DirichletSpec, monomial_source_solution, multiplicity_basis,
                                    rhs_of_exterior_part, solve_divergent, solve_standard)
from nonlocal_kit.errors import NotInUkError, ParameterError, TailDivergenceError
from nonlocal_kit.kernels import FracParams, getoor_constant, psi_bound
from nonlocal_kit.operator import chebyshev_grid, divergent_flap, mod_poly_distance, tail_integral
from nonlocal_kit.polynomials import Polynomial

INNER = {1: np.array([[-0.6], [-0.2], [0.0], [0.35], [0.7]]),
         2: np.array([[0.0, 0.0], [0.3, -0.2], [-0.5, 0.4], [0.1, 0.6], [-0.3, -0.3]])}


def test_zero_data_gives_zero():
    fld = solve_standard(1.0, None, None, FracParams(2, 0.4))
    assert np.all(fld(INNER[2]) == 0.0)
    fld = solve_divergent(DirichletSpec(1.0, None, None, k=2), FracParams(1, 0.4))
    assert np.all(fld(INNER[1]) == 0.0)


@pytest.mark.parametrize("n,s", [(1, 0.5), (1, 0.25), (2, 0.5), (3, 0.7)])
def test_constant_source_matches_closed_form(n, s):
    p = FracParams(n, s, normalized=True)
    fld = solve_standard(1.0, F.constant(n), None, p)
    X = INNER[min(n, 2)] if n < 3 else np.array([[0.0, 0.0, 0.0], [0.3, -0.2, 0.1]])
    expect = (1 - np.sum(X * X, -1)) ** s / getoor_constant(n, s)
    vals, errs, low = fld.evaluate(X)
    np.testing.assert_allclose(vals, expect, rtol=1e-6)
    assert not np.any(low)


def test_unnormalised_source_is_rescaled():
    """The unnormalised operator of the field equals the unnormalised source."""
    p = FracParams(1, 0.5, normalized=False)
    fld = solve_standard(1.0, F.constant(1), None, p)
    # (-Delta)^s u = 1 unnormalised means c * (-Delta)^s u = c, so u = c * (1 - x^2)^{1/2} / lambda
    c = 1 / math.pi
    assert fld(np.array([[0.0]]))[0] == pytest.approx(c, rel=1e-8)


def test_annulus_datum_matches_poisson_mass(golden):
    for row in golden["annulus_mass_1d"]:
        p = FracParams(1, row["s"])
        fld = solve_standard(1.0, None, F.annulus_indicator(1, 1.0, 2.0), p)
        assert fld(np.array([[0.0]]))[0] == pytest.approx(float(row["value"]), rel=1e-7)


def test_linearity():
    """Exact for data sharing break radii, since the quadrature rule is then identical."""
    p = FracParams(2, 0.45)
    f1, f2 = F.gaussian_bump(2, [0.2, 0.1], 0.4), F.constant(2, 0.7)
    g1, g2 = F.annulus_indicator(2, 1.0, 2.0), F.gaussian_bump(2, [0.0, 0.0], 1.0)
    both = solve_standard(1.0, f1 + f2, g1 + g2, p)(INNER[2])
    parts = solve_standard(1.0, f1, g1, p)(INNER[2]) + solve_standard(1.0, f2, g2, p)(INNER[2])
    np.testing.assert_allclose(both, parts, rtol=1e-10, atol=1e-14)


def test_linearity_across_break_sets():
    p = FracParams(2, 0.45)
    g1, g2 = F.annulus_indicator(2, 1.0, 2.0), F.compact_bump(2, [0.0, 2.0], 0.8)
    b, eb, _ = solve_standard(1.0, None, g1 + g2, p).evaluate(INNER[2])
    v1, e1, _ = solve_standard(1.0, None, g1, p).evaluate(INNER[2])
    v2, e2, _ = solve_standard(1.0, None, g2, p).evaluate(INNER[2])
    assert np.all(np.abs(b - v1 - v2) <= 3 * (eb + e1 + e2) + 1e-12)


def test_maximum_principle():
    p = FracParams(2, 0.3)
    fld = solve_standard(1.0, None, F.annulus_indicator(2, 1.5, 3.0), p)
    X = chebyshev_grid(2, 9)
    vals, errs, _ = fld.evaluate(X)
    assert np.all(vals >= -errs - 1e-14)


def test_exterior_values_pass_through():
    p = FracParams(1, 0.5)
    g = F.annulus_indicator(1, 1.0, 2.0)
    fld = solve_standard(1.0, F.constant(1), g, p)
    X = np.array([[1.5], [-1.2], [3.0]])
    np.testing.assert_array_equal(fld(X), g(X))


def test_standard_rejects_growing_exterior():
    with pytest.raises(TailDivergenceError, match="solve_divergent"):
        solve_standard(1.0, None, F.monomial((1,)), FracParams(1, 0.5))
    with pytest.raises(NotInUkError):
        solve_divergent(DirichletSpec(1.0, None, F.monomial((2,)), k=1), FracParams(1, 0.5))


def test_odd_source_gives_odd_field():
    p = FracParams(1, 0.5, 2)
    fld = monomial_source_solution(Polynomial.monomial((1,)), p)
    x = np.array([[0.1], [0.4], [0.8]])
    np.testing.assert_allclose(fld(x), -fld(-x), atol=1e-10)
    with pytest.raises(ParameterError):
        monomial_source_solution(Polynomial.monomial((2,)), p)
    zero = monomial_source_solution(Polynomial.zero(1), p)
    assert np.all(zero(x) == 0.0)


def test_unit_source_basis_element():
    p = FracParams(1, 0.5, 1, normalized=True)
    fld = monomial_source_solution(Polynomial.monomial((0,)), p)
    x = np.array([[0.0], [0.5]])
    np.testing.assert_allclose(fld(x), np.sqrt(1 - x[:, 0] ** 2), rtol=1e-8)


@pytest.mark.parametrize("n,k,rank", [(1, 0, 0), (1, 3, 3), (2, 2, 3)])
def test_multiplicity_rank(n, k, rank):
    mb = multiplicity_basis(FracParams(n, 0.5, k))
    assert mb.rank == rank == mb.expected == len(mb.fields)


def test_exterior_part_vanishes_for_near_data():
    p = FracParams(1, 0.5, 2)
    f1 = rhs_of_exterior_part(F.annulus_indicator(1, 1.0, 2.0), p)
    assert np.all(f1(chebyshev_grid(1)) == 0.0)


def test_divergent_reduces_to_standard_for_near_data():
    p = FracParams(1, 0.4, 2)
    g = F.annulus_indicator(1, 1.2, 1.8)
    a = solve_divergent(DirichletSpec(1.0, F.constant(1), g, k=2), p)(INNER[1])
    b = solve_standard(1.0, F.constant(1), g, p.with_k(2))(INNER[1])
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_exterior_part_bounded_by_tail():
    p = FracParams(1, 0.5, 1)
    g = p.k + p.s - 0.1
    u0 = F.FunctionHandle(1, lambda X: np.abs(X[..., 0]) ** g, tail_exponent=g, name="power")
    f1 = rhs_of_exterior_part(u0, p)
    X = chebyshev_grid(1)
    vals = f1(X)
    assert np.all(np.isfinite(vals))
    u1 = F.restrict(u0, 2.0)
    assert np.max(np.abs(vals)) <= psi_bound(p) * tail_integral(u1, 2.0, p)


def test_interpolant_reproduces_polynomials():
    P = Polynomial(2, {(0, 0): 1.0, (2, 1): -0.5, (0, 3): 2.0})
    I = BallInterpolant.fit(lambda X: P(X), 2, 1.0, 4)
    X = chebyshev_grid(2, 7, 0.9)
    np.testing.assert_allclose(I(X), P(X), atol=1e-11)


@pytest.mark.slow
def test_solution_space_is_closed_under_multiplicity_shifts():
    p = FracParams(1, 0.5, 2)
    u = solve_divergent(DirichletSpec(1.0, None, F.monomial((2,)), k=2), p)
    uP = monomial_source_solution(Polynomial.monomial((1,)), p)
    X = chebyshev_grid(1, 17, 0.5)
    for h in (u.as_function(), F.add(u.as_function(), uP.as_function())):
        f = divergent_flap(h, X, p).value
        resid, _ = mod_poly_distance(X, f, np.zeros(len(X)), p.admissible_degree)
        assert resid <= 5e-3
