import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from gapptrack.dynamics import (
    ClassDynamics,
    IllConditionedGramWarning,
    IseClassParams,
    gram,
    growing_transition,
    ise_cov,
    mature_transition,
    se_cov,
    xi,
)
from oracles import gp_conditional, quad_ise_cov

UNIT = IseClassParams(1.0, 1.0, window=2, step=1.0)


def test_se_cov_examples():
    assert se_cov(3.0, 3.0, IseClassParams(2.5, 1.0)) == 2.5
    assert se_cov(0.0, 1.0, UNIT) == pytest.approx(0.606531, abs=1e-6)
    assert se_cov(1.3, -0.2, UNIT) == se_cov(-0.2, 1.3, UNIT)


def test_xi_at_centre_and_far_right():
    b = 1.7
    assert xi(2.0, 2.0, b) == pytest.approx(b / math.sqrt(2 * math.pi), rel=1e-14)
    assert xi(2.0 + 60.0, 2.0, b) == pytest.approx(60.0, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(x=st.floats(-10, 10), a=st.floats(-5, 5), b=st.floats(0.1, 5))
def test_xi_derivative_is_normal_cdf(x, a, b):
    h = 1e-5
    fd = (xi(x + h, a, b) - xi(x - h, a, b)) / (2 * h)
    assert fd == pytest.approx(stats.norm.cdf((x - a) / b), abs=1e-6)


def test_ise_cov_zero_time_and_symmetry():
    p = IseClassParams(10.0, 1.0)
    assert ise_cov(0.0, 4.0, p) == 0.0
    assert ise_cov(4.0, 0.0, p) == pytest.approx(0.0, abs=1e-12)
    assert ise_cov(1.0, 2.0, p) == pytest.approx(ise_cov(2.0, 1.0, p), rel=1e-14)


def test_ise_cov_unit_matches_quadrature():
    assert ise_cov(1.0, 1.0, UNIT) == pytest.approx(quad_ise_cov(1.0, 1.0, 1.0, 1.0), abs=1e-6)


@pytest.mark.parametrize("sigma2,ell", [(1.0, 0.5), (10.0, 1.0), (100.0, 4.0)])
def test_ise_cov_matches_quadrature_on_sample_pairs(sigma2, ell):
    p = IseClassParams(sigma2, ell)
    for t, t2 in [(0.5, 3.0), (2.0, 2.0), (7.5, 10.0)]:
        assert ise_cov(t, t2, p) == pytest.approx(quad_ise_cov(t, t2, sigma2, ell), abs=1e-6)


@pytest.mark.parametrize("sigma2,ell", [(1.0, 0.5), (10.0, 1.0), (100.0, 4.0)])
def test_gram_is_symmetric_psd(sigma2, ell):
    times = np.arange(1, 16, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g = gram(times, IseClassParams(sigma2, ell))
    np.testing.assert_array_equal(g, g.T)
    assert np.linalg.eigvalsh(g).min() >= -1e-8 * np.trace(g)


def test_window_two_mature_matches_gp_regression():
    tr = mature_transition(UNIT)
    coef = ise_cov(1.0, 2.0, UNIT) / ise_cov(1.0, 1.0, UNIT)
    assert tr.coeffs[0] == pytest.approx(coef, rel=1e-12)
    np.testing.assert_allclose(tr.f_matrix, [[coef, 1 - coef], [1.0, 0.0]], rtol=1e-12)
    oracle_coef, oracle_var = gp_conditional(lambda a, b: float(ise_cov(a, b, UNIT)), [1.0], 2.0)
    assert tr.coeffs[0] == pytest.approx(oracle_coef[0], abs=1e-9)
    assert tr.noise_var == pytest.approx(oracle_var, abs=1e-9)


def test_transition_rows_sum_to_one():
    p = IseClassParams(10.0, 1.0, window=6)
    for tr in [mature_transition(p)] + [growing_transition(p, a) for a in range(1, 6)]:
        np.testing.assert_allclose(tr.f_matrix.sum(axis=1), 1.0, rtol=0, atol=1e-12)


def test_growing_age_one_shape():
    tr = growing_transition(IseClassParams(10.0, 1.0, window=4), 1)
    assert tr.f_matrix.shape == (2, 1)
    np.testing.assert_allclose(tr.f_matrix, [[1.0], [1.0]], atol=1e-12)


def test_growing_rejects_bad_age():
    with pytest.raises(ValueError):
        growing_transition(IseClassParams(1.0, 1.0, window=3), 3)
    with pytest.raises(ValueError):
        growing_transition(IseClassParams(1.0, 1.0, window=3), 0)


def test_last_growing_step_agrees_with_mature_predictive():
    p = IseClassParams(10.0, 1.0, window=5)
    last = growing_transition(p, 4)
    mature = mature_transition(p)
    np.testing.assert_allclose(last.coeffs, mature.coeffs, rtol=1e-12)
    assert last.noise_var == pytest.approx(mature.noise_var, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    sigma2=st.floats(0.1, 200),
    ell=st.floats(0.3, 6),
    window=st.integers(2, 10),
    step=st.floats(0.2, 2),
)
def test_transition_noise_is_nonnegative(sigma2, ell, window, step):
    p = IseClassParams(sigma2, ell, window, step)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditionedGramWarning)
        assert mature_transition(p).noise_var >= 0.0
        for age in range(1, window):
            assert growing_transition(p, age).noise_var >= 0.0


def test_ill_conditioned_gram_warns_and_regularizes():
    with pytest.warns(IllConditionedGramWarning):
        tr = mature_transition(IseClassParams(100.0, 40.0, window=12))
    assert tr.regularized


def test_transitions_are_deterministic():
    p = IseClassParams(10.0, 1.0, window=7)
    a, b = mature_transition(p), mature_transition(p)
    assert a.f_matrix.tobytes() == b.f_matrix.tobytes() and a.noise_var == b.noise_var


def test_predict_keeps_covariance_symmetric_and_grows_state():
    dyn = ClassDynamics(IseClassParams(10.0, 1.0, window=3))
    mean, cov = dyn.predict(np.array([[1.0, 2.0]]), np.array([[0.5]]))
    assert mean.shape == (2, 2) and cov.shape == (2, 2)
    np.testing.assert_array_equal(cov, cov.T)
    for _ in range(4):
        mean, cov = dyn.predict(mean, cov)
    assert cov.shape == (3, 3)


@pytest.mark.parametrize("bad", [dict(sigma2=0.0, ell=1.0), dict(sigma2=1.0, ell=-1.0), dict(sigma2=1.0, ell=1.0, window=0)])
def test_invalid_params_rejected(bad):
    with pytest.raises(ValueError):
        IseClassParams(**bad)
