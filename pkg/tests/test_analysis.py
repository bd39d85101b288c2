import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import curve_fit

from cavmux.analysis import (
    FitConvergenceError,
    FitError,
    FitResult,
    G2Error,
    background_fraction_for,
    compute_g2,
    deconvolved_fwhm,
    fit_bunching,
    fit_exponential_decay,
    fit_line,
    fit_rabi,
    levenberg_marquardt,
    rescale_g2,
)
from cavmux.analysis.fitting import gaussian, lorentzian, rabi_damped
from cavmux.protocols import ideal_stream, poisson_stream
from cavmux.rng import stream


def _gauss_data(seed, n=41, sigma_y=0.02):
    rng = stream(seed, "gauss")
    x = np.linspace(-1.0, 1.0, n)
    y = gaussian(x, 0.1, 0.4, 1.0, 0.05) + rng.normal(0, sigma_y, n)
    return x, y, np.full(n, sigma_y)


@pytest.mark.parametrize("seed", range(5))
def test_fit_line_matches_curve_fit(seed):
    x, y, e = _gauss_data(seed)
    res = fit_line(x, y, e)
    lo, hi = res.flags["window"]
    w = (x >= lo) & (x <= hi)
    popt, pcov = curve_fit(gaussian, x[w], y[w], p0=[0.0, 0.5, 1.0, 0.0], sigma=e[w], absolute_sigma=True)
    for i, name in enumerate(["center", "fwhm", "amplitude", "offset"]):
        assert res[name] == pytest.approx(popt[i], rel=1e-4, abs=1e-6)
        assert res.error(name) == pytest.approx(math.sqrt(pcov[i, i]), rel=0.05)


def test_lorentzian_fit_matches_curve_fit():
    rng = stream(3, "lor")
    x = np.linspace(-1.0, 1.0, 61)
    y = lorentzian(x, -0.2, 0.3, 2.0, 0.1) + rng.normal(0, 0.03, x.size)
    res = fit_line(x, y, np.full(x.size, 0.03), model="lorentzian")
    lo, hi = res.flags["window"]
    w = (x >= lo) & (x <= hi)
    popt, _ = curve_fit(lorentzian, x[w], y[w], p0=[0.0, 0.4, 1.0, 0.0], sigma=np.full(w.sum(), 0.03))
    assert res["center"] == pytest.approx(popt[0], abs=1e-5)
    assert res["fwhm"] == pytest.approx(abs(popt[1]), rel=1e-4)


def test_gaussian_fit_pulls_have_unit_variance():
    truth = {"center": 0.1, "fwhm": 0.4}
    pulls = {k: [] for k in truth}
    for seed in range(300):
        x, y, e = _gauss_data(seed, sigma_y=0.05)
        res = fit_line(x, y, e)
        for k, v in truth.items():
            pulls[k].append((res[k] - v) / res.error(k))
    for k, p in pulls.items():
        p = np.asarray(p)
        assert abs(p.mean()) < 0.2, k
        assert np.std(p, ddof=1) == pytest.approx(1.0, abs=0.2), k


def test_exponential_fit_pulls_have_unit_variance():
    t = np.linspace(0.0, 0.3e-3, 13)
    pulls = []
    for seed in range(300):
        rng = stream(seed, "exp")
        e = np.full(t.size, 0.01)
        y = 0.9 * np.exp(-t / 0.115e-3) + rng.normal(0, 0.01, t.size)
        keep = y > 0
        res = fit_exponential_decay(t[keep], y[keep], e[keep])
        pulls.append((res["rate"] - 1 / 0.115e-3) / res.error("rate"))
    assert np.std(pulls, ddof=1) == pytest.approx(1.0, abs=0.2)


def test_exponential_fit_flags_zero_rate():
    t = np.linspace(0, 1, 10)
    rng = stream(0, "flat")
    y = 1.0 + rng.normal(0, 0.01, t.size)
    res = fit_exponential_decay(t, y, np.full(t.size, 0.01))
    if not res.flags["identifiable"]:
        assert res["tau"] > 1.0 or math.isinf(res["tau"])
    with pytest.raises(FitError):
        fit_exponential_decay(t, -y)


def test_rabi_fit_recovers_parameters():
    n = np.linspace(0, 250, 101)
    y = rabi_damped(n, 0.0, 0.0012, 0.9, 8.3, 0.05)
    res = fit_rabi(n, y, np.full(n.size, 1e-3))
    assert res["n_pi"] == pytest.approx(8.3, rel=1e-4)
    assert res["slope"] == pytest.approx(0.0012, rel=1e-3)


def test_fit_errors():
    with pytest.raises(FitError):
        fit_line([0, 1, 2], [0, 1, 0])
    with pytest.raises(FitError):
        fit_line(np.arange(10.0), np.ones(10))


def test_lm_reports_start_point_on_failure():
    with pytest.raises(FitConvergenceError) as exc:
        levenberg_marquardt(lambda p: np.array([np.nan]), lambda p: np.ones((1, 1)), [1.0])
    assert exc.value.initial == [1.0]


def test_fit_result_round_trip():
    x, y, e = _gauss_data(0)
    res = fit_line(x, y, e)
    back = FitResult.from_dict(res.to_dict())
    assert back["center"] == res["center"]
    assert back.goodness == res.goodness


def test_rescale_fixed_point_and_inverse():
    assert rescale_g2(1.0, 0.3) == 1.0
    assert rescale_g2(0.5, 0.0) == 0.5
    with pytest.raises(G2Error):
        rescale_g2(0.7, 1.0)


@given(st.floats(0.0, 0.45), st.floats(0.2, 0.99))
def test_background_fraction_inverts_rescale(r, raw):
    corrected = rescale_g2(raw, r)
    assert background_fraction_for(raw, corrected) == pytest.approx(r, abs=1e-9)


def test_deconvolved_width():
    assert deconvolved_fwhm(5.0, 3.0) == pytest.approx(4.0)
    assert deconvolved_fwhm(1.0, 3.0) == 0.0


def test_g2_of_ideal_single_emitter_is_zero():
    s = ideal_stream(200_000, 1e-3, 0.9, 0.15e-3, 0.05, seed=0)
    h = compute_g2(s, max_lag=50)
    # only photons delayed past the next pulse (exp(-1 ms / tau)) can pair up
    assert h.g0 < 0.02
    assert np.mean(h.values[1:]) == pytest.approx(1.0, abs=0.05)


def test_g2_of_poisson_light_is_one():
    s = poisson_stream(400_000, 1e-3, 0.05, seed=1)
    h = compute_g2(s, max_lag=50)
    assert h.g0 == pytest.approx(1.0, abs=3 * h.errors[0])


def test_g2_rejects_short_streams():
    s = poisson_stream(100, 1e-3, 0.05, seed=1)
    with pytest.raises(G2Error):
        compute_g2(s, max_lag=100)


def test_fit_bunching_recovers_decay():
    from cavmux.analysis import G2Histogram

    lags = np.concatenate([[0.0], np.arange(5, 1000, 10, dtype=float)])
    t = lags * 1e-3
    vals = 1.0 + 0.1 * np.exp(-t / 0.08)
    vals[0] = 0.5
    h = G2Histogram(lags, vals, np.full(lags.size, 1e-3), np.ones(lags.size), 1e-3)
    res = fit_bunching(h)
    assert res["tau_d"] == pytest.approx(0.08, rel=1e-4)
    assert res["amplitude"] == pytest.approx(0.1, rel=1e-4)
