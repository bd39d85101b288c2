"""Pulsed second-order correlation from a single-detector click stream."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ..detection import ClickStream, TICK
from .fitting import FitConvergenceError, FitError, FitResult, fit_model


class G2Error(ValueError):
    pass


@dataclass
class G2Histogram:
    lags: np.ndarray  # pulse lags (bin centers); lags[0] == 0 is the same-pulse bin
    values: np.ndarray
    errors: np.ndarray
    counts: np.ndarray
    period: float
    clicks_per_pulse: float = float("nan")
    dark_fraction: float = float("nan")

    @property
    def g0(self) -> float:
        return float(self.values[0])

    @property
    def lag_times(self) -> np.ndarray:
        return self.lags * self.period

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lag_pulses", "lag_s", "g2", "error", "coincidences"])
            for lag, v, e, c in zip(self.lags, self.values, self.errors, self.counts):
                w.writerow([repr(float(lag)), repr(float(lag * self.period)), repr(float(v)), repr(float(e)), int(c)])


def _pulse_counts(stream: ClickStream, period: float):
    t0 = int(round(stream.t0 / TICK))
    per = int(round(period / TICK))
    idx = (stream.times - t0) // per
    return np.unique(idx, return_counts=True)


def lag_coincidences(idx: np.ndarray, cnt: np.ndarray, max_lag: int) -> np.ndarray:
    """``C[k] = sum_i n_i n_{i+k}`` for ``k = 1..max_lag`` from sparse per-pulse counts."""
    out = np.zeros(max_lag + 1)
    j = 1
    while j < idx.size:
        d = idx[j:] - idx[:-j]
        near = d <= max_lag
        if not near.any():
            break
        out += np.bincount(d[near], weights=(cnt[j:] * cnt[:-j])[near], minlength=max_lag + 1)
        j += 1
    return out[1:]


def compute_g2(
    stream: ClickStream,
    period: float | None = None,
    max_lag: int = 100,
    *,
    lag_bin: int = 1,
    norm_lags: tuple[int, int] | None = None,
    n_pulses: int | None = None,
    min_counts: int = 20,
) -> G2Histogram:
    """Normalized coincidence histogram versus pulse lag.

    Bin 0 holds ordered same-pulse pairs ``sum n_i (n_i - 1)``; the other
    bins hold ``sum n_i n_{i+k}`` summed over ``lag_bin`` consecutive lags.
    Everything is divided by the mean rate over ``norm_lags`` (default: the
    upper half of the lag range), so a Poissonian stream gives 1.
    """
    period = period or stream.period
    if period is None:
        raise G2Error("pulse period required")
    if n_pulses is None:
        n_pulses = stream.n_pulses or int(round(stream.duration / period))
    if n_pulses <= 2 * max_lag:
        raise G2Error("stream too short for the requested lag range")
    idx, cnt = _pulse_counts(stream, period)
    cnt = cnt.astype(float)
    c0 = float(np.sum(cnt * (cnt - 1.0)))
    ck = lag_coincidences(idx, cnt, max_lag)
    ks = np.arange(1, max_lag + 1)
    exposure = (n_pulses - ks).astype(float)

    nb = max_lag // lag_bin
    ck_b = ck[: nb * lag_bin].reshape(nb, lag_bin).sum(axis=1)
    ex_b = exposure[: nb * lag_bin].reshape(nb, lag_bin).sum(axis=1)
    lag_b = ks[: nb * lag_bin].reshape(nb, lag_bin).mean(axis=1)

    if norm_lags is None:
        norm_lags = (max_lag // 2 + 1, max_lag)
    lo, hi = norm_lags
    sel = (ks >= lo) & (ks <= hi)
    norm_counts = ck[sel].sum()
    if norm_counts < min_counts:
        raise G2Error(f"too few clicks to normalize: {int(norm_counts)} coincidences at long lags, "
                      f"need at least {min_counts}")
    rate = norm_counts / exposure[sel].sum()

    counts = np.concatenate([[c0], ck_b])
    expo = np.concatenate([[float(n_pulses)], ex_b])
    values = counts / expo / rate
    errors = np.sqrt(np.maximum(counts, 1.0)) / expo / rate
    lags = np.concatenate([[0.0], lag_b])
    clicks = len(stream) / n_pulses
    dark = stream.dark_rate * period / clicks if clicks > 0 else float("nan")
    return G2Histogram(lags, values, errors, counts, period, clicks, dark)


def rescale_g2(raw: float, background_fraction: float) -> float:
    """Remove an uncorrelated Poissonian background from g2(0)."""
    r = background_fraction
    if not 0.0 <= r < 1.0:
        raise G2Error("background fraction must lie in [0, 1)")
    # (raw - 2r(1-r) - r^2) / (1-r)^2, arranged so raw = 1 maps to 1 exactly
    return 1.0 + (raw - 1.0) / (1.0 - r) ** 2


def background_fraction_for(raw: float, corrected: float) -> float:
    """Background fraction that maps ``raw`` onto ``corrected`` (smaller root)."""
    # (1 - corrected) r^2 - 2 (1 - corrected) r + (raw - corrected) = 0
    a = 1.0 - corrected
    if a == 0:
        raise G2Error("corrected value 1 leaves the fraction undetermined")
    disc = a * a - a * (raw - corrected)
    if disc < 0:
        raise G2Error("no background fraction maps raw onto corrected")
    return (a - math.sqrt(disc)) / a


def fit_bunching(g2: G2Histogram, *, tau_guess: float | None = None) -> FitResult:
    """Fit ``1 + A exp(-tau / tau_d)`` to the non-zero lags."""
    sel = g2.lags > 0
    t = g2.lags[sel] * g2.period
    y = g2.values[sel]
    e = g2.errors[sel]
    if t.size < 3:
        raise FitError("need at least 3 non-zero lag bins")
    w = 1.0 / e**2
    if tau_guess is None:
        # profile the amplitude out linearly on a log grid of decay times
        best = None
        for tau in np.geomspace(t[0], 10.0 * t[-1], 80):
            ex = np.exp(-t / tau)
            a = float(np.sum(w * ex * (y - 1.0)) / np.sum(w * ex * ex))
            chi2 = float(np.sum(w * (1.0 + a * ex - y) ** 2))
            if best is None or chi2 < best[0]:
                best = (chi2, a, tau)
        _, a0, tau_guess = best
    else:
        ex = np.exp(-t / tau_guess)
        a0 = float(np.sum(w * ex * (y - 1.0)) / np.sum(w * ex * ex))
    p0 = [float(a0), float(tau_guess)]
    # decay times outside this range are not constrained by the lag window
    tau_lo, tau_hi = 0.1 * t[0], 10.0 * t[-1]

    def f(x, p):
        return 1.0 + p[0] * np.exp(-x / p[1])

    def jac(x, p):
        ex = np.exp(-x / p[1])
        return np.column_stack([ex, p[0] * x / p[1] ** 2 * ex])

    try:
        res = fit_model("exp-bunching", f, jac, ["amplitude", "tau_d"], t, y, e, p0,
                        valid=lambda p: tau_lo <= p[1] <= tau_hi, atol=1e-6)
    except FitConvergenceError as exc:
        raise FitConvergenceError(f"bunching fit failed: {exc}", p0, exc.trace) from exc
    tau = res["tau_d"]
    res.flags["at_bound"] = bool(tau < 1.01 * tau_lo or tau > 0.99 * tau_hi)
    return res
