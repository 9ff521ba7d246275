import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nonlocal_kit import functions as F
from nonlocal_kit.approx import (Dictionary, Target, derivative_pack, estimate_lipschitz, fit_sharmonic,
                                 nonlinear_shadow, pack_size, prepare_shadow, shadow_harmonic)
from nonlocal_kit.errors import IllConditionedError, ParameterError, PreconditionError
from nonlocal_kit.kernels import FracParams
from nonlocal_kit.operator import chebyshev_grid


def zero_function(n):
    return F.FunctionHandle(n, lambda X: np.zeros(X.shape[:-1]), tail_exponent=-math.inf, m_avail=10**6,
                            support_radius=0.0, name="zero")


def test_dictionary_is_nested_and_distinct():
    p = FracParams(2, 0.5)
    big = Dictionary.log_spaced(p, 64)
    small = Dictionary.log_spaced(p, 16)
    np.testing.assert_array_equal(big.poles[:16], small.poles)
    r = np.linalg.norm(big.poles, axis=1)
    assert np.all((r > 1) & (r < 8))
    assert len({tuple(np.round(q, 12)) for q in big.poles}) == 64
    with pytest.raises(ParameterError):
        Dictionary.log_spaced(p, 10**6)


@pytest.mark.parametrize("n", [1, 2])
def test_entry_recovery_without_ridge(n):
    p = FracParams(n, 0.5)
    d = Dictionary.log_spaced(p, 4)
    X = chebyshev_grid(n)
    target = Target(X, 0, {(0,) * n: d.matrix(X)[:, 2]})
    w, err = fit_sharmonic(target, d, 0.0)
    assert err <= 1e-8
    np.testing.assert_allclose(w, [0, 0, 1, 0], atol=1e-6)


def test_zero_target_gives_zero_weights():
    p = FracParams(1, 0.3)
    d = Dictionary.log_spaced(p, 16)
    X = chebyshev_grid(1)
    w, err = fit_sharmonic(Target(X, 1, {(0,): np.zeros(33), (1,): np.zeros(33)}), d, 1e-6)
    assert np.all(w == 0) and err == 0


def test_rank_deficiency_needs_ridge():
    p = FracParams(1, 0.5)
    d = Dictionary(p, np.array([[2.0], [2.0], [-3.0]]), 8.0)
    X = chebyshev_grid(1)
    with pytest.raises(IllConditionedError, match="ridge"):
        fit_sharmonic(Target(X, 0, {(0,): X[:, 0] ** 2}), d, 0.0)
    fit_sharmonic(Target(X, 0, {(0,): X[:, 0] ** 2}), d, 1e-8)


def test_fit_error_decreases_with_pole_count():
    p = FracParams(1, 0.5)
    X = chebyshev_grid(1)
    target = Target.from_function(F.monomial((2,)), X, 0)
    errs = [fit_sharmonic(target, Dictionary.log_spaced(p, J), 1e-10)[1] for J in (16, 32, 64)]
    assert errs[0] > errs[1] > errs[2]


def test_dictionary_derivatives_are_exact():
    p = FracParams(2, 0.4)
    d = Dictionary.log_spaced(p, 5)
    v = d.function(np.arange(1.0, 6.0))
    x = np.array([[0.2, -0.3]])
    h = 1e-6
    fd = (v(x + [h, 0]) - v(x - [h, 0])) / (2 * h)
    assert v.derivative((1, 0), x)[0] == pytest.approx(fd[0], rel=1e-6)


@pytest.mark.parametrize("n,m,size", [(1, 0, 2), (1, 1, 3), (2, 1, 5), (2, 2, 9), (3, 1, 7)])
def test_pack_size(n, m, size):
    assert pack_size(n, m) == size
    u = F.gaussian_bump(n)
    assert derivative_pack(u, np.zeros((4, n)), m).shape == (4, size)


def test_pack_contents():
    u = F.monomial((2,))
    P = derivative_pack(u, np.array([[0.5]]), 1)
    np.testing.assert_allclose(P, [[0.5, 0.25, 1.0]])


def test_lipschitz_estimate_of_sine():
    L = estimate_lipschitz(lambda P: np.sin(P[..., 1]), 1, 0, 3.0)
    assert 0.99 < L <= 1.0 + 1e-6


def test_shadow_of_zero():
    p = FracParams(1, 0.5, 1)
    rep = shadow_harmonic(zero_function(1), 0, 0.1, p, poles=8)
    assert np.all(rep.weights == 0) and rep.w is None
    assert rep.achieved_cm_error == 0.0
    assert rep.u_eps(np.array([[0.3], [20.0]])).tolist() == [0.0, 0.0]


def test_shadow_fixed_point():
    """A glued Poisson entry is reproduced by the pipeline."""
    p = FracParams(1, 0.5, 1)
    d = Dictionary.log_spaced(p, 8)
    weights = np.zeros(8)
    weights[3] = 1.0
    u = d.function(weights, name="entry")
    rep = shadow_harmonic(u, 1, 0.1, p, dictionary=d, ridge=0.0)
    assert rep.w is None
    np.testing.assert_allclose(rep.weights, weights, atol=1e-7)
    assert rep.achieved_cm_error <= 1e-7
    assert rep.harmonicity_residual <= 1e-6


def test_shadow_pinning_and_assembly():
    p = FracParams(1, 0.5, 1)
    u = F.power_tail(1, 1.2)
    rep = shadow_harmonic(u, 0, 0.1, p, poles=16, check_harmonicity=False)
    far = rep.R_eps * np.array([1.01, -1.2, 1.5, -2.0, 3.0, -5.0, 10.0, -20.0, 50.0, -100.0])[:, None]
    assert np.all(rep.u_eps(far) == u(far))
    X = np.concatenate([chebyshev_grid(1), far, np.array([[1.5], [-40.0]])])
    parts = rep.v(X) + rep.u_tilde(X) - rep.w(X)
    assert np.all(rep.u_eps(X) - parts == 0.0)
    assert rep.achieved_cm_error >= 0 and rep.fit_error >= 0


def test_shadow_preconditions():
    p = FracParams(1, 0.5, 1)
    with pytest.raises(ParameterError):
        shadow_harmonic(F.gaussian_bump(1), 0, 0.0, p)
    with pytest.raises(PreconditionError):
        shadow_harmonic(F.monomial((2,)), 0, 0.1, p)


def test_more_poles_never_hurt():
    p = FracParams(1, 0.5, 1)
    u = F.power_tail(1, 1.2)
    stages = prepare_shadow(u, 0.1, p)
    errs = [shadow_harmonic(u, 0, 0.1, p, poles=J, prepared=stages, check_harmonicity=False).achieved_cm_error
            for J in (8, 16, 32)]
    assert errs[0] >= errs[1] >= errs[2]


def test_nonlinear_with_zero_map_is_linear_shadow():
    p = FracParams(1, 0.5, 2)
    u = F.monomial((2,))
    nl = nonlinear_shadow(u, lambda P: np.zeros(P.shape[:-1]), 0, 0.1, p, lipschitz=0.0,
                          check_harmonicity=False)
    lin = shadow_harmonic(u, 0, 0.1, p, check_harmonicity=False)
    X = chebyshev_grid(1)
    assert np.max(np.abs(nl.v_field(X))) == 0.0
    np.testing.assert_allclose(nl.u_eps(X), lin.u_eps(X), atol=1e-12)
    assert nl.eta_sup == 0.0


def test_nonlinear_constant_map_source_solution():
    p = FracParams(1, 0.5, 0, normalized=True)
    nl = nonlinear_shadow(F.gaussian_bump(1), lambda P: np.ones(P.shape[:-1]), 0, 0.1, p,
                          check_harmonicity=False, poles=16)
    x = np.array([[0.0], [0.6], [-1.2]])
    # radius 3/2 Getoor profile: (r^2 - x^2)^{1/2}
    np.testing.assert_allclose(nl.v_field(x), np.sqrt(2.25 - x[:, 0] ** 2), rtol=1e-7)
    assert nl.eta_sup <= 1e-12


def test_nonlinear_sine_bound():
    p = FracParams(1, 0.5, 2)
    nl = nonlinear_shadow(F.monomial((2,)), lambda P: np.sin(P[..., 1]), 0, 0.1, p, check_harmonicity=False)
    assert 0.99 < nl.lipschitz <= 1.0 + 1e-6
    assert nl.bound_factor == 1
    assert nl.holds and nl.eta_sup <= nl.bound


def test_nonlinear_rejects_bad_extension():
    with pytest.raises(ParameterError):
        nonlinear_shadow(F.gaussian_bump(1), lambda P: P[..., 1], 0, 0.1, FracParams(1, 0.5), h=1.5)
