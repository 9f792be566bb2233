import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import gammaln

from cohortlearn.errors import DomainError, SingularStateError
from cohortlearn.learning import (GainFamily, GainSpec, Plm, PlmConfig, RlsBeliefState,
                                  ScalarBeliefState, Timing, forecast_panel, forecast_panels,
                                  forecast_scalar, gain, rls_update, update_scalar, weights_kappa)

B, CV = GainFamily.BASELINE, GainFamily.CODE_VARIANT


def iterate_scalar(gamma, ys, family=B):
    st_ = ScalarBeliefState(0.0)
    spec = GainSpec(family, gamma)
    for y in ys:
        st_ = update_scalar(st_, y, spec)
    return st_.a


# gains -----------------------------------------------------------------------

@pytest.mark.parametrize("family,gamma,age,expected", [
    (B, 3, 10, 0.3), (B, 3, 2, 1.0), (CV, 3, 5, 0.5), (CV, 3, 7, 3 / 7), (B, 3, 3, 1.0)])
def test_gain_examples(family, gamma, age, expected):
    assert gain(GainSpec(family, gamma), age) == pytest.approx(expected, abs=0)


def test_gain_rejects_nonpositive_age():
    with pytest.raises(DomainError):
        gain(GainSpec(B, 3), 0)


@given(st.sampled_from([B, CV]), st.floats(0.01, 20), st.integers(1, 10_000))
def test_gain_in_unit_interval(family, gamma, age):
    g = gain(GainSpec(family, gamma), age)
    assert 0 < g <= 1
    if family is CV:
        assert g <= 0.5


# scalar updates --------------------------------------------------------------

def test_update_scalar_examples():
    spec = GainSpec(B, 3)
    assert update_scalar(ScalarBeliefState(0.0, 0), 5.0, spec) == ScalarBeliefState(5.0, 1)
    assert update_scalar(ScalarBeliefState(0.0, 9), 1.0, spec).a == pytest.approx(0.3, abs=1e-15)


@given(st.floats(-1e3, 1e3), st.integers(0, 500), st.floats(0.1, 10), st.sampled_from([B, CV]))
def test_update_scalar_fixed_point(c, age, gamma, family):
    new = update_scalar(ScalarBeliefState(c, age), c, GainSpec(family, gamma))
    assert new.a == pytest.approx(c, abs=1e-12 * (1 + abs(c)))
    assert new.age == age + 1


# weights ---------------------------------------------------------------------

def test_weights_examples():
    np.testing.assert_allclose(weights_kappa(1, 4).kappa, [0.25] * 4, atol=1e-15)
    w = weights_kappa(3, 3)
    assert w.j.tolist() == [3] and w.kappa.tolist() == [1.0]
    w = weights_kappa(3, 4)
    assert w.j.tolist() == [3, 4]
    np.testing.assert_allclose(w.kappa, [0.25, 0.75], atol=1e-15)


def test_weights_too_young():
    with pytest.raises(DomainError):
        weights_kappa(3.5, 2)


def test_weight_normalization_grid():
    for gamma in np.linspace(0.67, 10, 200):
        for s in range(int(math.floor(gamma)), 401):
            k = weights_kappa(gamma, s).kappa
            assert abs(k.sum() - 1) < 1e-12
            assert k.min() >= 0


@given(st.floats(0.67, 10).filter(lambda g: abs(g - round(g)) > 1e-3), st.integers(11, 400))
def test_gamma_function_identity(gamma, s):
    w = weights_kappa(gamma, s)
    j = w.j[1:].astype(float)
    ref = gamma / j * np.exp(gammaln(j + 1) - gammaln(s + 1) + gammaln(s + 1 - gamma) - gammaln(j + 1 - gamma))
    np.testing.assert_allclose(w.kappa[1:], ref, rtol=1e-9)


def test_gamma_identity_exhaustive_small():
    for gamma in (0.7, 1.5, 2.5, 3.3, 9.9):
        for s in (10, 57, 400):
            test_gamma_function_identity.hypothesis.inner_test(gamma, s)


# closed form vs recursion ----------------------------------------------------

def test_forecast_scalar_examples():
    assert forecast_scalar(1.0, [1, 2, 3, 4]) == pytest.approx(2.5, abs=1e-15)
    assert forecast_scalar(2.7, [4.2] * 30) == pytest.approx(4.2, abs=1e-13)
    with pytest.raises(DomainError):
        forecast_scalar(2.0, [])


@given(st.floats(0.67, 10), st.integers(0, 200), st.integers(0, 2 ** 32 - 1))
def test_recursion_matches_closed_form(gamma, extra, seed):
    j0 = int(math.floor(gamma))
    s = max(j0, 1) + extra
    ys = np.random.default_rng(seed).standard_normal(s)
    closed = forecast_scalar(gamma, ys[j0 - 1:] if j0 >= 1 else np.concatenate([[0.0], ys]))
    assert abs(closed - iterate_scalar(gamma, ys)) < 1e-10


def test_recursion_matches_closed_form_1000_draws():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        gamma = rng.uniform(1.0, 10)
        s = int(math.floor(gamma)) + int(rng.integers(0, 150))
        ys = rng.standard_normal(s) * 3 + 1
        j0 = int(math.floor(gamma))
        assert abs(forecast_scalar(gamma, ys[j0 - 1:]) - iterate_scalar(gamma, ys)) < 1e-10


def test_left_continuity_at_integers():
    rng = np.random.default_rng(5)
    for g0 in (1, 2, 3):
        for _ in range(5):
            ys = rng.standard_normal(120)
            scale = np.abs(ys).max()
            ref = iterate_scalar(g0, ys)
            assert abs(iterate_scalar(g0 - 1e-4, ys) - ref) < 1e-2 * scale
            assert abs(iterate_scalar(g0 - 1e-6, ys) - ref) < 1e-4 * scale


@given(st.floats(1.0, 10), st.floats(-50, 50), st.floats(-50, 50), st.integers(0, 2 ** 32 - 1))
def test_initial_value_irrelevance(gamma, a1, a2, seed):
    spec = GainSpec(B, gamma)
    ys = np.random.default_rng(seed).standard_normal(40)
    s1, s2 = ScalarBeliefState(a1), ScalarBeliefState(a2)
    for age, y in enumerate(ys, start=1):
        s1, s2 = update_scalar(s1, y, spec), update_scalar(s2, y, spec)
        if age >= max(1, math.floor(gamma)):
            assert s1.a == s2.a


# RLS -------------------------------------------------------------------------

def test_rls_examples():
    st1 = rls_update(RlsBeliefState(np.array([0.0]), np.array([[1.0]]), 0), [1.0], 2.0, GainSpec(B, 3))
    assert st1.R[0, 0] == 1.0 and st1.phi[0] == 2.0
    st0 = RlsBeliefState(np.array([0.3, -1.0]), np.array([[2.0, 0.5], [0.5, 1.0]]), 9)
    st2 = rls_update(st0, [0.0, 0.0], 4.0, GainSpec(B, 3))
    np.testing.assert_allclose(st2.R, 0.7 * st0.R, rtol=1e-15)
    np.testing.assert_array_equal(st2.phi, st0.phi)


def test_rls_singular_state_reports_cohort():
    st0 = RlsBeliefState(np.zeros(2), np.zeros((2, 2)), 0)
    with pytest.raises(SingularStateError) as info:
        rls_update(st0, [1.0, 1.0], 1.0, GainSpec(B, 3), cohort=4, t=9)
    assert info.value.cohort == 4 and info.value.t == 9


def test_rls_dimension_mismatch():
    with pytest.raises(DomainError):
        rls_update(RlsBeliefState.initial(2), [1.0], 1.0, GainSpec(B, 3))


@pytest.mark.parametrize("family", [B, CV])
def test_rls_scalar_equivalence_100_paths(family):
    rng = np.random.default_rng(11)
    for _ in range(100):
        gamma = rng.uniform(1.0, 8)
        spec = GainSpec(family, gamma)
        ys = rng.standard_normal(int(rng.integers(5, 60)))
        rls = RlsBeliefState(np.array([0.0]), np.array([[1.0]]), 0)
        sc = ScalarBeliefState(0.0)
        for y in ys:
            rls = rls_update(rls, [1.0], y, spec)
            sc = update_scalar(sc, y, spec)
            assert rls.phi[0] == pytest.approx(sc.a, abs=1e-12)


# panels ------------------------------------------------------------------------

@pytest.fixture
def series():
    rng = np.random.default_rng(3)
    return rng.standard_normal(80), rng.standard_normal(81)


def test_constant_panel_of_constant_series():
    y = np.full(60, 2.5)
    for family in (B, CV):
        a = forecast_panel(y, None, GainSpec(family, 2.3), 5, 30, Plm.CONSTANT)
        np.testing.assert_allclose(a, 2.5, atol=1e-13)


@pytest.mark.parametrize("timing", list(Timing))
def test_constant_panel_cellwise_oracle(series, timing):
    y, _ = series
    l, u, gamma = 4, 30, 2.6
    a = forecast_panel(y, None, GainSpec(B, gamma), l, u, Plm.CONSTANT, timing)
    shift = 1 if timing is Timing.ONE_STEP else 0
    for i, t in enumerate(range(u + 1, y.size + 1)):
        for j, age in enumerate(range(l, u + 1)):
            b = t - age
            last = t - shift  # last observation entering the forecast
            ys = y[b:last]  # y_{b+1} .. y_last, one update per year of age
            j0 = int(math.floor(gamma))
            assert abs(a[i, j] - forecast_scalar(gamma, ys[j0 - 1:])) < 1e-10
            assert abs(a[i, j] - iterate_scalar(gamma, ys)) < 1e-10


@pytest.mark.parametrize("timing", list(Timing))
def test_closed_and_recursive_routes_agree(series, timing):
    y, _ = series
    cfg = PlmConfig(Plm.CONSTANT, B, timing)
    gammas = [0.8, 1.0, 2.5, 3.0, 7.7]
    c = forecast_panels(y, None, gammas, 3, 25, cfg, method="closed")
    r = forecast_panels(y, None, gammas, 3, 25, cfg, method="recursive")
    np.testing.assert_allclose(c, r, atol=1e-12)


def test_closed_form_refused_for_code_variant(series):
    with pytest.raises(DomainError):
        forecast_panels(series[0], None, [2.0], 3, 25, PlmConfig(Plm.CONSTANT, CV), method="closed")


def test_regression_x_one_matches_constant(series):
    # with a unit first gain the RLS prior is forgotten, as is the constant-PLM prior
    y, _ = series
    x = np.ones(y.size)
    for gamma in (1.0, 2.5, 4.2):
        reg = forecast_panel(y, x, GainSpec(B, gamma), 10, 40, Plm.REGRESSION)
        con = forecast_panel(y, None, GainSpec(B, gamma), 10, 40, Plm.CONSTANT, method="recursive")
        np.testing.assert_allclose(reg, con, atol=1e-9)


def test_regression_cellwise_against_rls_update(series):
    y, x = series
    l, u, gamma = 6, 30, 2.4
    spec = GainSpec(CV, gamma)
    a = forecast_panel(y, x[:y.size], spec, l, u, Plm.REGRESSION, Timing.ONE_STEP)
    for b in (1, 20, 47):
        state = RlsBeliefState.initial(1)
        for t in range(b + 1, y.size + 1):
            age = t - b
            if t > u and l <= age <= u:
                assert a[t - u - 1, age - l] == pytest.approx(float(state.phi @ [x[t - 1]]), abs=1e-10)
            state = rls_update(state, [x[t - 1]], y[t - 1], spec)


def test_ar1_end_of_period(series):
    y, _ = series
    a = forecast_panel(y, None, GainSpec(CV, 3.0), 10, 40, Plm.AR1, Timing.END_OF_PERIOD)
    assert a.shape == (y.size - 40, 31) and np.all(np.isfinite(a))
    b, t = 15, 50
    state = RlsBeliefState.initial(2)
    for tt in range(b + 1, t + 1):
        state = rls_update(state, [1.0, y[tt - 2]], y[tt - 1], GainSpec(CV, 3.0))
    assert a[t - 41, t - b - 10] == pytest.approx(float(state.phi @ [1.0, y[t - 1]]), abs=1e-9)


def test_insufficient_history():
    with pytest.raises(DomainError):
        forecast_panel(np.zeros(10), None, GainSpec(B, 2), 3, 12)
