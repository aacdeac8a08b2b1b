import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from laserguard.errors import DegenerateData, EmptyArray, NonFiniteInput, TooFewSamples
from laserguard.stats import FitKind, fit_distribution, moments
from oracles import moments_direct

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)
vectors = arrays(np.float64, st.integers(2, 200), elements=finite, fill=st.nothing())


def test_constant_is_degenerate():
    assert moments([3.3, 3.3, 3.3]).as_tuple() == (0.0, 0.0, 0.0)
    assert moments([0.1] * 1000).as_tuple() == (0.0, 0.0, 0.0)


def test_two_point():
    m = moments([-1.0, 1.0])
    assert m.variance == 1.0 and m.skew == 0.0 and m.kurtosis == -2.0


def test_normal_stream():
    xs = np.random.default_rng(12345).standard_normal(10**6)
    m = moments(xs)
    assert abs(m.skew) < 0.01 and abs(m.kurtosis) < 0.02
    ref = moments_direct(xs)
    assert np.allclose(m.as_tuple(), ref, rtol=0, atol=1e-10)


def test_extreme_magnitudes_stay_finite():
    base = moments([1.0, 0.0, 0.0, 3.0])
    for a in (1e-150, 1e150):
        m = moments(np.array([1.0, 0.0, 0.0, 3.0]) * a)
        assert m.variance == pytest.approx(base.variance * a * a, rel=1e-12)
        assert m.skew == pytest.approx(base.skew, abs=1e-12)
        assert m.kurtosis == pytest.approx(base.kurtosis, abs=1e-12)
    tiny = moments([8.9e-117, 0.0])
    assert (tiny.skew, tiny.kurtosis) == (0.0, -2.0)


def test_errors():
    with pytest.raises(EmptyArray):
        moments([])
    with pytest.raises(NonFiniteInput):
        moments([1.0, np.inf])


@settings(max_examples=200, deadline=None)
@given(vectors)
def test_matches_direct_oracle(xs):
    assume(np.ptp(xs) > 1e-3)
    ours = moments(xs).as_tuple()
    ref = moments_direct(xs)
    assert np.allclose(ours, ref, rtol=1e-9, atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(vectors, st.floats(-100, 100))
def test_translation_invariance(xs, c):
    base = moments(xs)
    assume(base.variance > 1e-2)
    shifted = moments(xs + c)
    assert shifted.variance == pytest.approx(base.variance, rel=1e-10)
    assert abs(shifted.skew - base.skew) < 1e-10
    assert abs(shifted.kurtosis - base.kurtosis) < 1e-10


@settings(max_examples=100, deadline=None)
@given(vectors, st.floats(0.01, 100))
def test_scale_property(xs, a):
    base = moments(xs)
    assume(base.variance > 1e-2)
    scaled = moments(xs * a)
    assert scaled.variance == pytest.approx(base.variance * a * a, rel=1e-10)
    assert abs(scaled.skew - base.skew) < 1e-10
    assert abs(scaled.kurtosis - base.kurtosis) < 1e-10


def test_cauchy_fit_large_sample():
    xs = np.random.default_rng(7).standard_cauchy(10**5)
    fit = fit_distribution(xs, FitKind.CAUCHY)
    q1, med, q3 = np.quantile(xs, [0.25, 0.5, 0.75])
    assert fit.params["loc"] == pytest.approx(med, abs=1e-12)
    assert fit.params["scale"] == pytest.approx((q3 - q1) / 2, abs=1e-12)
    assert -0.05 <= fit.params["loc"] <= 0.05
    assert 0.95 <= fit.params["scale"] <= 1.05
    assert 0 <= fit.goodness < 0.01


def test_cauchy_fit_symmetric_array():
    # the fit needs at least 8 points; a symmetric set has its median at 0
    fit = fit_distribution([-4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0], "cauchy")
    assert fit.params["loc"] == 0.0
    with pytest.raises(TooFewSamples):
        fit_distribution([-2.0, -1.0, 0.0, 1.0, 2.0], "cauchy")


def test_degenerate_fits():
    with pytest.raises(DegenerateData):
        fit_distribution(np.full(20, 1.5), "cauchy")
    with pytest.raises(DegenerateData):
        fit_distribution(np.full(20, -1.5), "lognormal")
    with pytest.raises(NonFiniteInput):
        fit_distribution([np.nan] * 10, "cauchy")


def test_lognormal_fit_on_magnitudes():
    rng = np.random.default_rng(3)
    mags = rng.lognormal(mean=-1.0, sigma=0.5, size=50000)
    signed = mags * rng.choice([-1.0, 1.0], size=mags.size)
    fit = fit_distribution(signed, FitKind.LOGNORMAL)
    assert fit.params["mu"] == pytest.approx(-1.0, abs=0.02)
    assert fit.params["sigma"] == pytest.approx(0.5, abs=0.02)
    assert 0 <= fit.goodness < 0.01
    assert fit.cdf(np.exp(-1.0)) == pytest.approx(0.5, abs=0.01)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(8, 100), elements=st.floats(-10, 10), unique=True),
       st.floats(-50, 50), st.floats(0.1, 10))
def test_cauchy_equivariance(xs, c, a):
    q1, q3 = np.quantile(xs, [0.25, 0.75])
    assume(q3 - q1 > 1e-3)
    base = fit_distribution(xs, "cauchy")
    moved = fit_distribution(a * xs + c, "cauchy")
    assert moved.params["loc"] == pytest.approx(a * base.params["loc"] + c, abs=1e-9)
    assert moved.params["scale"] == pytest.approx(a * base.params["scale"], rel=1e-9)
    assert 0 <= moved.goodness <= 1
