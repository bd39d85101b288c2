"""Weighted nonlinear least squares for the handful of line shapes we need.

The solver is a plain Levenberg-Marquardt loop with Marquardt's diagonal
scaling and analytic Jacobians supplied per model.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

FOUR_LN2 = 4.0 * math.log(2.0)
MAX_ITER = 200
RTOL = 1e-10


class FitError(ValueError):
    """Input data cannot support the requested fit."""


class FitConvergenceError(RuntimeError):
    def __init__(self, message, initial=None, trace=None):
        super().__init__(message)
        self.initial = initial
        self.trace = trace or []


@dataclass
class FitResult:
    model: str
    params: dict  # name -> (estimate, standard error)
    goodness: float  # reduced chi-square
    covariance: np.ndarray | None = field(default=None, repr=False)
    n_iter: int = 0
    flags: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.params[name][0]

    def error(self, name):
        return self.params[name][1]

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": {k: {"value": _num(v), "error": _num(e)} for k, (v, e) in self.params.items()},
            "goodness": _num(self.goodness),
            "n_iter": self.n_iter,
            "flags": self.flags,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        params = {k: (_unnum(v["value"]), _unnum(v["error"])) for k, v in d["params"].items()}
        return cls(d["model"], params, _unnum(d["goodness"]), None, d.get("n_iter", 0), d.get("flags", {}))


def _num(x):
    x = float(x)
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else ("-inf" if x < 0 else "nan")


def _unnum(x):
    return float(x)


def levenberg_marquardt(residuals, jacobian, p0, *, max_iter=MAX_ITER, rtol=RTOL, atol=0.0, valid=None):
    """Minimise ``sum(residuals(p)**2)``.

    Stops when the step or the relative chi-square gain falls below
    ``rtol``, or the absolute gain below ``atol``.

    Returns ``(p, jacobian_at_p, chi2, n_iter)``. Raises
    :class:`FitConvergenceError` carrying the start point and the
    per-iteration trace when the tolerance is not met.
    """
    p = np.array(p0, dtype=float)
    r = residuals(p)
    if not np.all(np.isfinite(r)):
        raise FitConvergenceError("residuals not finite at the initial guess", p0, [])
    chi2 = float(r @ r)
    lam = 1e-3
    trace = [(0, chi2, lam, p.copy())]
    for it in range(1, max_iter + 1):
        J = jacobian(p)
        A = J.T @ J
        g = J.T @ r
        d = np.diag(A).copy()
        d[d <= 0] = 1e-30
        improved = False
        while lam < 1e20:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = p + step
            if valid is None or valid(trial):
                r_new = residuals(trial)
                chi2_new = float(r_new @ r_new)
                if np.isfinite(chi2_new) and chi2_new <= chi2:
                    improved = True
                    break
            lam *= 10.0
        trace.append((it, chi2, lam, p.copy()))
        if not improved:
            # no downhill step exists at any damping: we sit at the minimum
            return p, J, chi2, it
        small_step = np.all(np.abs(step) <= rtol * (np.abs(p) + rtol))
        small_gain = chi2 - chi2_new <= rtol * chi2 + max(atol, 1e-300)
        p, r, chi2_prev, chi2 = trial, r_new, chi2, chi2_new
        lam = max(lam / 10.0, 1e-12)
        if small_step or (small_gain and chi2_prev > 0):
            return p, jacobian(p), chi2, it
    raise FitConvergenceError(f"no convergence in {max_iter} iterations", p0, trace)


def _covariance(J, chi2, dof, scale):
    # equilibrate the columns first; parameters can differ by many decades in scale
    d = np.linalg.norm(J, axis=0)
    d[d == 0] = 1.0
    Js = J / d
    cov = np.linalg.pinv(Js.T @ Js) / np.outer(d, d)
    if scale and dof > 0:
        cov = cov * (chi2 / dof)
    return cov


def _weights(y, err):
    if err is None:
        return np.ones_like(y), True
    err = np.asarray(err, dtype=float)
    if np.any(err <= 0):
        raise FitError("standard errors must be positive")
    return 1.0 / err, False


def fit_model(model: str, f, jac, names, x, y, err, p0, valid=None, transform=None, atol=0.0):
    """Generic weighted fit; ``transform`` maps internal params to reported ones
    and returns their Jacobian for error propagation."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w, scale = _weights(y, err)

    def res(p):
        return (f(x, p) - y) * w

    def jw(p):
        return jac(x, p) * w[:, None]

    p, J, chi2, it = levenberg_marquardt(res, jw, p0, valid=valid, atol=atol)
    dof = y.size - len(p)
    cov = _covariance(J, chi2, dof, scale)
    if transform is not None:
        p_out, T = transform(p)
        cov = T @ cov @ T.T
    else:
        p_out = p
    errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    params = {n: (float(v), float(e)) for n, v, e in zip(names, p_out, errs)}
    goodness = chi2 / dof if dof > 0 else float("nan")
    return FitResult(model, params, goodness, cov, it)


# --- line shapes -----------------------------------------------------------

def gaussian(x, center, fwhm, amplitude, offset=0.0):
    return offset + amplitude * np.exp(-FOUR_LN2 * ((x - center) / fwhm) ** 2)


def lorentzian(x, center, fwhm, amplitude, offset=0.0):
    return offset + amplitude / (1.0 + 4.0 * ((x - center) / fwhm) ** 2)


def _line_funcs(model):
    if model == "gaussian":
        def f(x, p):
            c, wd, a, o = p
            return o + a * np.exp(-FOUR_LN2 * ((x - c) / wd) ** 2)

        def jac(x, p):
            c, wd, a, o = p
            u = (x - c) / wd
            e = np.exp(-FOUR_LN2 * u * u)
            return np.column_stack([
                a * e * 2.0 * FOUR_LN2 * u / wd,
                a * e * 2.0 * FOUR_LN2 * u * u / wd,
                e,
                np.ones_like(x),
            ])
    elif model == "lorentzian":
        def f(x, p):
            c, wd, a, o = p
            return o + a / (1.0 + 4.0 * ((x - c) / wd) ** 2)

        def jac(x, p):
            c, wd, a, o = p
            u = (x - c) / wd
            q = 1.0 / (1.0 + 4.0 * u * u)
            return np.column_stack([
                a * q * q * 8.0 * u / wd,
                a * q * q * 8.0 * u * u / wd,
                q,
                np.ones_like(x),
            ])
    else:
        raise FitError(f"unknown line model {model!r}")
    return f, jac


def _smooth(y, k=3):
    if y.size < k:
        return y
    pad = k // 2
    yp = np.pad(y, pad, mode="edge")
    return np.convolve(yp, np.ones(k) / k, mode="valid")


def _line_window(x, y):
    """Indices of the points around the global maximum plus initial moments."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    ysm = _smooth(ys)
    base = float(np.percentile(ysm, 10))
    ipk = int(np.argmax(ysm))
    peak = float(ysm[ipk])
    if not peak > base:
        raise FitError("degenerate data: no peak above the baseline")
    half = base + 0.5 * (peak - base)
    lo = ipk
    while lo > 0 and ysm[lo - 1] > half:
        lo -= 1
    hi = ipk
    while hi < xs.size - 1 and ysm[hi + 1] > half:
        hi += 1
    spacing = np.median(np.diff(xs)) if xs.size > 1 else 0.0
    hw = max(0.5 * (xs[hi] - xs[lo]), spacing, 1e-300)
    xpk = float(xs[ipk])
    reach = 4.0 * hw
    sel = np.abs(xs - xpk) <= reach
    while sel.sum() < 5 and reach < (xs[-1] - xs[0]) * 2:
        reach *= 2.0
        sel = np.abs(xs - xpk) <= reach
    idx = order[sel]
    wts = np.clip(ysm[sel] - base, 0.0, None)
    xw = xs[sel]
    if wts.sum() > 0:
        c0 = float(np.sum(wts * xw) / wts.sum())
        sd = float(np.sqrt(np.sum(wts * (xw - c0) ** 2) / wts.sum()))
    else:
        c0, sd = xpk, hw
    fwhm0 = max(2.0 * hw, min(2.3548 * sd, 4.0 * hw))
    return idx, xpk, c0, fwhm0, peak - base, base


def fit_line(x, y, err=None, model: str = "gaussian") -> FitResult:
    """Fit one peak (center, FWHM, amplitude, offset).

    With several peaks present, only the window around the global maximum
    is fitted.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 5:
        raise FitError("need at least 5 points to fit a line")
    if np.ptp(y) == 0:
        raise FitError("degenerate data: signal is flat")
    f, jac = _line_funcs(model)
    idx, xref, c0, w0, a0, o0 = _line_window(x, y)
    xs = x[idx] - xref
    ys = y[idx]
    es = None if err is None else np.asarray(err, dtype=float)[idx]
    p0 = [c0 - xref, w0, a0, o0]

    # a line much wider than the fitted window is indistinguishable from the baseline
    max_width = 2.0 * max(float(np.ptp(xs)), 1e-300)

    def valid(p):
        return 0 < p[1] <= max_width

    def transform(p):
        return np.array([p[0] + xref, p[1], p[2], p[3]]), np.eye(4)

    res = fit_model(model, f, jac, ["center", "fwhm", "amplitude", "offset"], xs, ys, es, p0, valid, transform)
    res.flags["window"] = [float(x[idx].min()), float(x[idx].max())]
    res.flags["n_points"] = int(idx.size)
    return res


def deconvolved_fwhm(fwhm: float, probe_fwhm: float) -> float:
    """Quadrature removal of a Gaussian probe width."""
    return math.sqrt(max(fwhm * fwhm - probe_fwhm * probe_fwhm, 0.0))


def fit_exponential_decay(t, y, err=None) -> FitResult:
    """Fit ``amplitude * exp(-t / tau)``.

    Internally fits the rate; a rate consistent with zero is reported as
    ``tau = inf`` with ``flags['identifiable'] = False``.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 4:
        raise FitError("need at least 4 points for an exponential fit")
    if np.any(y <= 0):
        raise FitError("exponential fit needs positive ordinates")
    wts = None if err is None else (y / np.asarray(err, dtype=float)) ** 2
    slope, icpt = np.polyfit(t, np.log(y), 1, w=None if wts is None else np.sqrt(wts))
    p0 = [math.exp(icpt), max(-slope, 0.0)]

    def f(x, p):
        return p[0] * np.exp(-p[1] * x)

    def jac(x, p):
        e = np.exp(-p[1] * x)
        return np.column_stack([e, -p[0] * x * e])

    res = fit_model("exponential", f, jac, ["amplitude", "rate"], t, y, err, p0)
    k, ke = res.params["rate"]
    identifiable = k > 0 and k > ke
    tau = 1.0 / k if k > 0 else math.inf
    tau_err = ke / (k * k) if k > 0 else math.inf
    res.params["tau"] = (tau, tau_err)
    res.flags["identifiable"] = bool(identifiable)
    return res


def rabi_damped(n, offset, slope, amplitude, n_pi, damping):
    theta = math.pi * np.sqrt(np.asarray(n, dtype=float) / n_pi)
    return offset + slope * n + 0.5 * amplitude * (1.0 - np.exp(-0.5 * (damping * theta) ** 2) * np.cos(theta))


def fit_rabi(n, signal, err=None) -> FitResult:
    """Damped Rabi oscillation on a linear background versus photon number.

    The damping term is the Gaussian visibility loss of a pulse area with
    relative spread ``damping``.
    """
    n = np.asarray(n, dtype=float)
    s = np.asarray(signal, dtype=float)
    if n.size < 8:
        raise FitError("need at least 8 points for a Rabi fit")

    def f(x, p):
        return rabi_damped(x, *p)

    def jac(x, p):
        o, b, a, npi, eps = p
        th = math.pi * np.sqrt(x / npi)
        e = np.exp(-0.5 * (eps * th) ** 2)
        c, sn = np.cos(th), np.sin(th)
        dth_dnpi = -0.5 * th / npi
        # d/dtheta of 0.5 a (1 - e cos th)
        dth = 0.5 * a * (eps * eps * th * e * c + e * sn)
        return np.column_stack([
            np.ones_like(x),
            x,
            0.5 * (1.0 - e * c),
            dth * dth_dnpi,
            0.5 * a * eps * th * th * e * c,
        ])

    # coarse grid over (n_pi, damping); the rest is linear
    best = None
    positive = n[n > 0]
    lo = positive.min() if positive.size else 1.0
    for npi in np.geomspace(max(lo, n.max() / 400.0), n.max(), 120):
        for eps in (0.0, 0.03, 0.06, 0.1, 0.15, 0.2, 0.3):
            th = math.pi * np.sqrt(n / npi)
            basis = np.column_stack([np.ones_like(n), n, 0.5 * (1 - np.exp(-0.5 * (eps * th) ** 2) * np.cos(th))])
            coef, *_ = np.linalg.lstsq(basis, s, rcond=None)
            r = basis @ coef - s
            cost = float(r @ r)
            if best is None or cost < best[0]:
                best = (cost, [coef[0], coef[1], coef[2], npi, eps])
    p0 = best[1]
    p0[4] = max(p0[4], 1e-3)
    return fit_model("rabi-damped", f, jac, ["offset", "slope", "amplitude", "n_pi", "damping"], n, s, err, p0,
                     valid=lambda p: p[3] > 0)
