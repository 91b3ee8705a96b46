import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special as sps

from heston_mdp.errors import AccuracyError, DomainError
from heston_mdp.special import (
    Tolerance,
    bessel_i_series,
    hyp1f1,
    log_bessel_i,
    log_gamma,
    sample_noncentral_chisq,
)


@pytest.mark.parametrize("order", [0.0, 0.5, 1.0, 1.3, 2.0, 7.5])
@pytest.mark.parametrize("x", [1e-6, 0.1, 1.0, 5.0, 29.9, 30.0, 45.0, 200.0])
def test_log_bessel_matches_scipy(order, x):
    expected = math.log(sps.ive(order, x)) + x
    assert log_bessel_i(order, x) == pytest.approx(expected, rel=1e-11, abs=1e-11)


@pytest.mark.parametrize("order, x", [(1.0, 35.0), (40.0, 60.0), (150.0, 80.0), (3.0, 1e4)])
def test_log_bessel_matches_mpmath(order, x):
    expected = float(mpmath.log(mpmath.besseli(order, x)))
    assert log_bessel_i(order, x) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("x", [0.3, 2.0, 12.0, 50.0])
def test_half_integer_closed_form(x):
    # I_{1/2}(x) = sqrt(2 / (pi x)) sinh(x)
    expected = 0.5 * math.log(2.0 / (math.pi * x)) + math.log(math.sinh(x))
    assert log_bessel_i(0.5, x) == pytest.approx(expected, rel=1e-12)


def test_bessel_at_zero():
    assert log_bessel_i(0.0, 0.0) == 0.0
    assert log_bessel_i(1.5, 0.0) == -math.inf


def test_bessel_series_is_continuous_across_cutoff():
    below = log_bessel_i(2.0, 30.0 - 1e-9)
    above = log_bessel_i(2.0, 30.0)
    assert abs(below - above) < 1e-8


def test_bessel_series_relative_sum():
    # I_0(2) = sum 1 / (k!)^2
    expected = sum(1.0 / math.factorial(k) ** 2 for k in range(40))
    assert bessel_i_series(0.0, 2.0) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("order, x", [(-1.0, 1.0), (1.0, -0.5), (math.nan, 1.0), (1.0, math.inf)])
def test_bessel_domain(order, x):
    with pytest.raises(DomainError):
        log_bessel_i(order, x)


def test_bessel_term_budget():
    with pytest.raises(AccuracyError):
        log_bessel_i(1.0, 20.0, Tolerance(max_terms=3))


@given(
    order=st.floats(min_value=0.0, max_value=20.0),
    x=st.floats(min_value=1e-3, max_value=500.0),
)
@settings(max_examples=200, deadline=None)
def test_bessel_recurrence(order, x):
    # I_{v-1}(x) - I_{v+1}(x) = (2v/x) I_v(x), checked in scaled form.
    v = order + 1.0
    lo, mid, hi = (log_bessel_i(v - 1.0, x), log_bessel_i(v, x), log_bessel_i(v + 1.0, x))
    lhs = math.exp(lo - mid) - math.exp(hi - mid)
    assert lhs == pytest.approx(2.0 * v / x, rel=1e-8)


@pytest.mark.parametrize(
    "p, q, x",
    [
        (1.0, 2.0, 0.5),
        (0.5, 1.5, 3.0),
        (2.0, 3.0, -4.0),
        (1.5, 2.5, -30.0),
        (3.0, 1.2, 10.0),
        (-3.0, 2.0, 1.7),
        (0.7, 4.0, -0.2),
    ],
)
def test_hyp1f1_matches_mpmath(p, q, x):
    expected = float(mpmath.hyp1f1(p, q, x))
    assert hyp1f1(p, q, x) == pytest.approx(expected, rel=1e-10)


def test_hyp1f1_special_cases():
    # 1F1(a; a; x) = e^x and 1F1(1; 2; x) = (e^x - 1) / x
    assert hyp1f1(2.3, 2.3, -1.4) == pytest.approx(math.exp(-1.4), rel=1e-13)
    assert hyp1f1(1.0, 2.0, 2.5) == pytest.approx(math.expm1(2.5) / 2.5, rel=1e-13)
    assert hyp1f1(1.0, 3.0, 0.0) == 1.0


@given(
    p=st.floats(min_value=0.1, max_value=5.0),
    q=st.floats(min_value=0.2, max_value=6.0),
    x=st.floats(min_value=-20.0, max_value=20.0),
)
@settings(max_examples=150, deadline=None)
def test_hyp1f1_kummer_transform(p, q, x):
    lhs = hyp1f1(p, q, x)
    rhs = math.exp(x) * hyp1f1(q - p, q, -x) if q - p > 0 else None
    if rhs is not None:
        assert lhs == pytest.approx(rhs, rel=1e-9)
    assert lhs == pytest.approx(float(mpmath.hyp1f1(p, q, x)), rel=1e-8)


@pytest.mark.parametrize("q", [0.0, -1.0, -4.0])
def test_hyp1f1_pole(q):
    with pytest.raises(DomainError):
        hyp1f1(1.0, q, 1.0)


def test_log_gamma():
    assert log_gamma(5.0) == pytest.approx(math.log(24.0), rel=1e-15)
    assert log_gamma(0.5) == pytest.approx(0.5 * math.log(math.pi), rel=1e-15)
    for bad in (0.0, -2.0, math.nan):
        with pytest.raises(DomainError):
            log_gamma(bad)


@pytest.mark.parametrize("kw", [{"rel_eps": 0.0}, {"abs_eps": -1.0}, {"max_terms": 0}, {"max_terms": 2.5}])
def test_tolerance_validation(kw):
    with pytest.raises(DomainError):
        Tolerance(**kw)


@pytest.mark.parametrize("df, nc", [(4.0, 0.0), (4.0, 2.5), (2.3, 10.0), (8.0, 0.31)])
def test_noncentral_chisq_moments(df, nc):
    rng = np.random.default_rng(11)
    n = 200_000
    x = sample_noncentral_chisq(df, nc, rng, size=n)
    mean, var = df + nc, 2.0 * (df + 2.0 * nc)
    assert abs(x.mean() - mean) < 4.0 * math.sqrt(var / n)
    # Var of the sample variance uses the fourth central moment.
    m4 = 12.0 * (df + 4.0 * nc) + 3.0 * var**2
    assert abs(x.var() - var) < 4.0 * math.sqrt((m4 - var**2) / n)


def test_noncentral_chisq_matches_scipy_quantiles():
    rng = np.random.default_rng(3)
    x = sample_noncentral_chisq(4.0, 3.0, rng, size=100_000)
    probs = np.array([0.1, 0.5, 0.9])
    emp = np.mean(x[:, None] <= sps.chndtrix(probs, 4.0, 3.0)[None, :], axis=0)
    assert np.all(np.abs(emp - probs) < 0.005)


def test_noncentral_chisq_broadcast_and_scalar():
    rng = np.random.default_rng(0)
    assert isinstance(sample_noncentral_chisq(3.0, 1.0, rng), float)
    out = sample_noncentral_chisq(3.0, np.array([0.0, 1.0, 2.0]), rng)
    assert out.shape == (3,)


@pytest.mark.parametrize("df, nc", [(0.0, 1.0), (-1.0, 1.0), (2.0, -0.1), (math.nan, 1.0)])
def test_noncentral_chisq_domain(df, nc):
    with pytest.raises(DomainError):
        sample_noncentral_chisq(df, nc, np.random.default_rng(0))
