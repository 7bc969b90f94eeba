import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal as sps

from carefulkin.errors import PaddingOverflowError, ParameterError
from carefulkin.signal import (
    UniformSeries,
    butterworth_coefficients,
    butterworth_lowpass,
    downsample,
    median_and_mad,
    resample_fixed,
    zero_pad,
)
from scenes import steady_amplitude


def analytic_gain(rate, freq, order, cutoff):
    # pre-warped analog Butterworth magnitude
    ratio = np.tan(np.pi * freq / rate) / np.tan(np.pi * cutoff / rate)
    return 1.0 / np.sqrt(1.0 + ratio ** (2 * order))


def test_dc_gain_is_one():
    x = UniformSeries(100.0, np.full(300, 3.7))
    np.testing.assert_allclose(butterworth_lowpass(x, 2, 10.0).data, 3.7, rtol=1e-12)
    np.testing.assert_allclose(butterworth_lowpass(x, 4, 5.0).data, 3.7, rtol=1e-12)


@pytest.mark.parametrize("order", [2, 4])
@pytest.mark.parametrize("rate,cutoff", [(100.0, 10.0), (100.0, 5.0), (22.0, 4.0)])
def test_amplitude_at_cutoff(order, rate, cutoff):
    assert steady_amplitude(rate, cutoff, order, cutoff) == pytest.approx(0.7071, abs=0.02)


def test_rolloff_two_octaves():
    amp = steady_amplitude(100.0, 40.0, 2, 10.0)
    assert amp <= 0.08
    assert amp == pytest.approx(analytic_gain(100.0, 40.0, 2, 10.0), abs=0.01)


@pytest.mark.parametrize("order,cutoff,rate", [(2, 10.0, 100.0), (4, 5.0, 100.0), (2, 4.0, 22.0)])
def test_coefficients_match_reference_design(order, cutoff, rate):
    b, a = butterworth_coefficients(order, cutoff, rate)
    b_ref, a_ref = sps.butter(order, cutoff, fs=rate)
    np.testing.assert_allclose(b, b_ref, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(a, a_ref, rtol=1e-10, atol=1e-14)


def test_cutoff_at_nyquist_rejected():
    x = UniformSeries(22.0, np.zeros(50))
    with pytest.raises(ParameterError):
        butterworth_lowpass(x, 2, 11.0)


def test_output_length_preserved():
    x = UniformSeries(100.0, np.random.default_rng(0).normal(size=(137, 3)))
    assert butterworth_lowpass(x, 4, 5.0).data.shape == (137, 3)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 1000))
def test_filter_is_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 120))
    f = lambda s: butterworth_lowpass(UniformSeries(100.0, s), 2, 10.0).data
    lhs = f(a * x + b * y)
    rhs = a * f(x) + b * f(y)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9 * (abs(a) + abs(b) + 1))


def test_zero_phase_no_lag():
    rate = 100.0
    t = np.arange(400) / rate
    x = np.sin(2 * np.pi * 1.3 * t) + 0.5 * np.sin(2 * np.pi * 2.1 * t + 0.4)
    y = butterworth_lowpass(UniformSeries(rate, x), 2, 10.0).data[:, 0]
    lags = np.arange(-20, 21)
    xc = [np.dot(x[50:-50], np.roll(y, k)[50:-50]) for k in lags]
    assert lags[int(np.argmax(xc))] == 0


def test_downsample_ramp_exact():
    rate = 100.0
    t = np.arange(201) / rate
    out = downsample(UniformSeries(rate, t), 22.0)
    np.testing.assert_allclose(out.data[:, 0], np.arange(out.frames) / 22.0, rtol=0, atol=1e-12)


def test_downsample_identity_and_count():
    x = UniformSeries(100.0, np.arange(101.0))
    assert downsample(x, 100.0) == x
    # k / 22 <= 1.0 for k = 0..22
    assert downsample(x, 22.0).frames == 23


def test_downsample_rejects_bad_rate():
    with pytest.raises(ParameterError):
        downsample(UniformSeries(100.0, np.zeros(5)), 0.0)


def test_resample_identity_and_ramp():
    x = UniformSeries(22.0, np.random.default_rng(1).normal(size=(32, 4)))
    np.testing.assert_array_equal(resample_fixed(x, 32).data, x.data)
    ramp = UniformSeries(22.0, np.linspace(3.0, 9.0, 57))
    out = resample_fixed(ramp, 32)
    np.testing.assert_allclose(out.data[:, 0], np.linspace(3.0, 9.0, 32), atol=1e-12)
    assert out.data[0, 0] == 3.0 and out.data[-1, 0] == 9.0


def test_resample_sine_against_direct_sampling():
    src = np.sin(2 * np.pi * np.linspace(0, 1, 64))
    direct = np.sin(2 * np.pi * np.linspace(0, 1, 32))
    out = resample_fixed(UniformSeries(22.0, src), 32).data[:, 0]
    assert np.abs(out - direct).max() < 0.01


def test_resample_rejects_short_target():
    with pytest.raises(ParameterError):
        resample_fixed(UniformSeries(22.0, np.zeros(10)), 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 140), st.integers(2, 64), st.integers(0, 99))
def test_resample_endpoints_and_order(n_in, n_out, seed):
    x = np.random.default_rng(seed).normal(size=(n_in, 2))
    out = resample_fixed(UniformSeries(1.0, x), n_out).data
    np.testing.assert_array_equal(out[0], x[0])
    np.testing.assert_array_equal(out[-1], x[-1])
    # a monotone time ramp stays monotone
    ramp = resample_fixed(UniformSeries(1.0, np.arange(n_in, dtype=float)), n_out).data[:, 0]
    assert np.all(np.diff(ramp) > 0)


def test_zero_pad_shapes():
    x = UniformSeries(22.0, np.ones((32, 4)))
    p = zero_pad(x, 132)
    assert p.data.shape == (132, 4)
    assert p.mask.sum() == 32
    assert np.all(p.data[32:] == 0.0)
    assert zero_pad(UniformSeries(22.0, np.ones((132, 4))), 132).mask.all()


def test_zero_pad_overflow_names_trial():
    with pytest.raises(PaddingOverflowError, match="s01_t002"):
        zero_pad(UniformSeries(22.0, np.ones((140, 4))), 132, name="s01_t002")


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 132), st.integers(0, 99))
def test_zero_pad_round_trip(n, seed):
    x = np.random.default_rng(seed).normal(size=(n, 4))
    p = zero_pad(UniformSeries(22.0, x), 132)
    np.testing.assert_array_equal(p.unpadded(), x)
    assert p.mask[:n].all() and not p.mask[n:].any()


def test_median_and_mad_examples():
    assert median_and_mad([1, 2, 3]) == (2.0, 1.0)
    assert median_and_mad([2.04, 2.04]) == (2.04, 0.0)
    assert median_and_mad([4, 1, 3, 2]) == (2.5, 1.0)
    with pytest.raises(ParameterError):
        median_and_mad([])


def _sort_median(values):
    s = sorted(values)
    n = len(s)
    return s[n // 2] if n % 2 else 0.5 * (s[n // 2 - 1] + s[n // 2])


def test_median_and_mad_against_sort_oracle():
    from carefulkin.experiment.synth import SynthConfig, draw_transport_duration

    cfg = SynthConfig()
    rng = np.random.default_rng(5)
    durations = [draw_transport_duration(code, rng, cfg, 1, 1.0) for code in ("W1C1", "W1C2") * 240]
    med, mad = median_and_mad(durations)
    assert med == _sort_median(durations)
    assert mad == _sort_median([abs(d - med) for d in durations])
