import numpy as np
import pytest

from relab import (
    InsufficientData,
    Measurement,
    Path,
    dispersion,
    fit_regime,
    predict,
)


def meas(n, t, blocks, m=2**20, path=Path.ROW, times=None):
    return Measurement(
        n=n, m=m, path=path, wall_times=tuple(times or [t]), temp_blocks=blocks
    )


def synthetic(a, c, n_star, ns, m=2**20, path=Path.ROW):
    ms = []
    for n in ns:
        t = a * n + (c * (n - n_star) ** 2 if n > n_star else 0.0)
        ms.append(meas(n, t, blocks=1 if n > n_star else 0, m=m, path=path))
    return ms


def test_tensor_measurements_fit_is_purely_linear():
    ms = [
        meas(n, 1e-7 * n + 0.001, blocks=0, path=Path.TENSOR)
        for n in (1000, 5000, 10_000, 50_000)
    ]
    fit = fit_regime(ms)
    assert fit.alpha_curve == ()
    assert fit.spill_threshold_rows is None
    assert fit.linear_coeff == pytest.approx(1e-7, rel=1e-9)
    assert fit.intercept == pytest.approx(0.001, rel=1e-6)


def test_synthetic_quadratic_recovered_within_5pct():
    a, c, n_star = 2e-7, 3e-12, 10_000
    ns = [1000, 4000, 8000, 10_000, 20_000, 50_000, 100_000]
    fit = fit_regime(synthetic(a, c, n_star, ns))
    assert fit.spill_threshold_rows == 20_000
    for n, alpha in fit.alpha_curve:
        injected = c * (n - n_star) ** 2
        assert alpha == pytest.approx(injected, rel=0.05)


def test_noise_free_identifiability():
    a, intercept = 5e-7, 0.004
    ms = [meas(n, a * n + intercept, 0) for n in (100, 1000, 10_000, 100_000)]
    fit = fit_regime(ms)
    assert fit.linear_coeff == pytest.approx(a, rel=1e-9)
    assert fit.intercept == pytest.approx(intercept, rel=1e-9)


def test_fit_requires_three_zero_spill_points():
    ms = [meas(1000, 0.1, 0), meas(2000, 0.2, 0), meas(5000, 1.0, 10)]
    with pytest.raises(InsufficientData):
        fit_regime(ms)


def test_fit_rejects_mixed_budgets():
    ms = [meas(1000, 0.1, 0), meas(2000, 0.2, 0, m=2**21), meas(3000, 0.3, 0)]
    with pytest.raises(ValueError):
        fit_regime(ms)


def test_fit_uses_median_of_repetitions():
    ms = [
        meas(1000, None, 0, times=[0.1, 0.3, 0.2]),
        meas(2000, None, 0, times=[0.4, 0.4, 0.4]),
        meas(3000, None, 0, times=[0.6, 0.5, 0.7]),
    ]
    fit = fit_regime(ms)
    assert fit.linear_coeff == pytest.approx(0.2 / 1000, rel=1e-9)


def test_predict_below_threshold_is_linear():
    fit = fit_regime(synthetic(1e-7, 1e-12, 5000, [1000, 2000, 5000, 10_000, 20_000]))
    assert predict(fit, 3000) == pytest.approx(1e-7 * 3000, rel=1e-9)


def test_predict_interpolation_identity_at_measured_points():
    ms = synthetic(1e-7, 1e-12, 5000, [1000, 2000, 5000, 10_000, 20_000, 40_000])
    fit = fit_regime(ms)
    for m in ms:
        assert predict(fit, m.n) == pytest.approx(m.median, rel=1e-9)


def test_predict_extrapolates_last_slope():
    a, c, n_star = 1e-6, 1e-9, 10
    ms = synthetic(a, c, n_star, [1, 2, 3, 1000, 2000])
    fit = fit_regime(ms)
    alpha_1k = c * (1000 - n_star) ** 2
    alpha_2k = c * (2000 - n_star) ** 2
    tail_slope = (alpha_2k - alpha_1k) / 1000
    expected = a * 3000 + alpha_2k + tail_slope * 1000
    assert predict(fit, 3000) == pytest.approx(expected, rel=1e-6)


def test_alpha_noise_floor_validated():
    # a wildly negative spilling point contradicts the linear baseline
    ms = [
        meas(1000, 0.1, 0),
        meas(2000, 0.2, 0),
        meas(3000, 0.3, 0),
        meas(10_000, 0.2, 5),
    ]
    with pytest.raises(ValueError):
        fit_regime(ms)


def test_dispersion_constant_samples():
    m = meas(10, None, 0, times=[0.5] * 25)
    assert dispersion(m) == 1.0


def test_dispersion_needs_20_samples():
    with pytest.raises(InsufficientData):
        dispersion(meas(10, None, 0, times=[0.5] * 19))


def test_dispersion_1_to_100():
    m = meas(10, None, 0, times=[float(i) for i in range(1, 101)])
    assert dispersion(m) == pytest.approx(99.0 / 50.0)
