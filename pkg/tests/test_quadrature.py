import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import gamma

from nonlocal_kit import functions as F
from nonlocal_kit.errors import ParameterError, PreconditionError
from nonlocal_kit.polynomials import multi_indices
from nonlocal_kit.quadrature import (QuadratureConfig, direction_rule, gk_batch, graded_rule, integrate_ball,
                                     integrate_exterior, pv_second_difference)


def ball_moment(alpha):
    """Integral of x^alpha over the unit ball (Beta-function formula)."""
    if any(a % 2 for a in alpha):
        return 0.0
    b = [(a + 1) / 2 for a in alpha]
    return 2 * math.prod(gamma(bi) for bi in b) / gamma(sum(b)) / (sum(alpha) + len(alpha))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_ball_moments_up_to_degree_five(n):
    cfg = QuadratureConfig()
    for a in multi_indices(n, 5):
        res = integrate_ball(lambda y, a=a: a.monomial(y), np.zeros(n), 1.0, cfg)
        assert res.value == pytest.approx(ball_moment(a.components), abs=1e-12)


def test_volumes_and_weak_singularity():
    assert integrate_ball(lambda y: np.ones(y.shape[:-1]), [0.0, 0.0], 1.0).value == pytest.approx(math.pi, rel=1e-12)
    res = integrate_ball(lambda y: np.abs(y[..., 0]) ** -0.5, [0.0], 1.0)
    assert res.value == pytest.approx(4.0, rel=1e-8)


def test_exterior_power_tails():
    res = integrate_exterior(lambda y: np.sum(y * y, -1) ** -1.0, 1.0, n=1, decay=1.0)
    assert res.value == pytest.approx(2.0, rel=1e-8)
    res = integrate_exterior(lambda y: np.sum(y * y, -1) ** -1.5, 1.0, n=2, decay=1.0)
    assert res.value == pytest.approx(2 * math.pi, rel=1e-8)


def test_exterior_rejects_non_integrable_tail():
    with pytest.raises(PreconditionError):
        integrate_exterior(lambda y: np.ones(y.shape[:-1]), 1.0, n=1, decay=-1.0)
    with pytest.raises(PreconditionError):
        integrate_exterior(lambda y: np.ones(y.shape[:-1]), 1.0, n=2, decay=0.0)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_exterior_matches_inverted_ball(n):
    """int_{|y|>R} f = int_{|t|<1/R} f(t/|t|^2) |t|^{-2n} dt."""
    R = 1.5

    def f(y):
        r = np.sqrt(np.sum(y * y, -1))
        return np.exp(-r) * (1.0 + 0.5 * y[..., 0] / r) ** 2

    def g(t):
        r2 = np.sum(t * t, -1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = f(t / r2[..., None]) * r2 ** (-n)
        return np.nan_to_num(out)

    direct = integrate_exterior(f, R, n=n, decay=1.0).value
    inverted = integrate_ball(g, np.zeros(n), 1.0 / R).value
    assert direct == pytest.approx(inverted, rel=1e-8)


def test_gk_batch_endpoint_singularities():
    res = gk_batch(lambda ids, x: x ** -0.5, [0.0], [1.0], rel_tol=1e-12, abs_tol=1e-14)
    assert res.value[0] == pytest.approx(2.0, rel=1e-10)
    loose = gk_batch(lambda ids, x: x ** -0.5, [0.0], [1.0])
    assert abs(loose.value[0] - 2.0) <= loose.error[0]
    res = gk_batch(lambda ids, x: np.log(x), [0.0, 0.0], [1.0, 2.0], rel_tol=1e-12, abs_tol=1e-14)
    np.testing.assert_allclose(res.value, [-1.0, 2 * math.log(2) - 2], rtol=1e-9)
    assert np.all(res.converged)


def test_graded_rule_integrates_power():
    t, w = graded_rule(levels=20, ratio=0.15, order=12)
    assert np.sum(w * t**-0.3) == pytest.approx(1 / 0.7, rel=1e-10)


@pytest.mark.parametrize("n", [2, 3])
def test_direction_rule_is_normalised(n):
    dirs, w = direction_rule(n, 1)
    area = 2 * math.pi ** (n / 2) / gamma(n / 2)
    assert np.sum(w) == pytest.approx(area, rel=1e-12)
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0)


def test_config_roundtrip_and_validation():
    cfg = QuadratureConfig(rel_tol=1e-6)
    assert QuadratureConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ParameterError):
        QuadratureConfig.from_dict({"rel_tol": 1e-6, "bogus": 1})
    with pytest.raises(ParameterError):
        QuadratureConfig(rel_tol=-1.0)


def test_pv_of_quadratic():
    cfg = QuadratureConfig(split_radius=0.5)
    u = F.monomial((2,))
    res = pv_second_difference(u, np.array([[0.3]]), 0.5, cfg)
    # -(1/2) int_{|z|<1/2} 2 z^2 |z|^{-2} dz = -1
    assert res.value[0] == pytest.approx(-1.0, rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 3), s=st.floats(0.05, 0.95), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_pv_of_affine_vanishes(n, s, a, b):
    u = F.add(F.constant(n, a), F.scale(F.monomial(tuple([1] + [0] * (n - 1))), b))
    x = np.full((1, n), 0.2)
    res = pv_second_difference(u, x, s, QuadratureConfig(split_radius=0.3))
    assert abs(res.value[0]) <= 1e-10 * (1 + abs(a) + abs(b))


@settings(max_examples=15, deadline=None)
@given(scale=st.floats(0.5, 3.0), n=st.integers(1, 2))
def test_ball_integral_scales(scale, n):
    """int_{B_r} |y|^2 = r^{n+2} int_{B_1} |y|^2."""
    f = lambda y: np.sum(y * y, -1)
    one = integrate_ball(f, np.zeros(n), 1.0).value
    r = integrate_ball(f, np.zeros(n), scale).value
    assert r == pytest.approx(scale ** (n + 2) * one, rel=1e-10)


def test_non_finite_sample_reports_point():
    from nonlocal_kit.errors import EvaluationError
    with pytest.raises(EvaluationError) as info:
        integrate_ball(lambda y: np.where(y[..., 0] > 0.5, np.nan, 1.0), [0.0], 1.0)
    assert info.value.point is not None


def test_exterior_of_compact_support_is_zero():
    res = integrate_exterior(lambda y: np.ones(y.shape[:-1]), 3.0, n=2, support_radius=2.0)
    assert res.value == 0.0 and res.converged


def test_pv_near_unit_radius():
    cfg = QuadratureConfig(split_radius=0.99)
    res = pv_second_difference(F.monomial((2,)), np.array([[0.0]]), 0.5, cfg)
    assert res.value[0] == pytest.approx(-2 * 0.99, rel=1e-9)


@pytest.mark.parametrize("n", [1, 2])
def test_refinement_stays_within_estimate(n):
    f = lambda y: np.exp(-np.sum(y * y, -1)) * np.sum(y * y, -1) ** -0.25
    loose = integrate_ball(f, np.zeros(n), 1.0, QuadratureConfig(rel_tol=1e-5, abs_tol=1e-7))
    tight = integrate_ball(f, np.zeros(n), 1.0, QuadratureConfig(rel_tol=5e-6, abs_tol=5e-8))
    assert abs(tight.value - loose.value) <= loose.error + 1e-15
