"""Long-term alternating interrogation of resolved dopants, with feed-forward.

Time is cut into substeps (default 10 ms). Within each interval the laser
sweeps a grid around every target in turn (one full sweep per block,
blocks alternate between targets); each substep collects Poisson counts
from the pulses fired during it. Per interval and target the summed counts
are fitted with a Gaussian; the aggregates pool all intervals either at the
fixed laser frequency (raw) or after shifting each interval by the center
fitted in the previous one (feed-forward).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from ..analysis import FitConvergenceError, FitError, FitResult, deconvolved_fwhm, fit_line
from ..cavity import FWHM_PER_SIGMA
from ..dynamics import Pulse, excitation_probability
from ..emitters import Emitter
from ..noise import FrequencyTrace, NoiseParams
from ..rng import stream
from .setup import Setup
from .switch import CavityController

FF_MODES = ("off", "post", "live")
MAX_FAILS = 3
WIDEN = 4.0


class InterrogationError(ValueError):
    pass


@dataclass(frozen=True)
class InterrogationPlan:
    targets: tuple[float, ...]
    interval: float = 360.0
    total: float = 21600.0
    probe: Pulse = field(default_factory=lambda: Pulse.from_bandwidth(0.02e6))
    feed_forward: str = "post"
    grid_points: int = 21
    grid_half_span: float = 0.4e6
    dwell: float = 0.1
    substep: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(float(t) for t in self.targets))
        if not self.targets:
            raise InterrogationError("need at least one target")
        if self.feed_forward not in FF_MODES:
            raise InterrogationError(f"feed_forward must be one of {FF_MODES}")
        ratio = self.total / self.interval
        if self.interval <= 0 or abs(ratio - round(ratio)) > 1e-9:
            raise InterrogationError("interval must divide the total duration")
        if self.grid_points < 5:
            raise InterrogationError("need at least 5 grid points per sweep")
        steps = self.dwell / self.substep
        if self.substep <= 0 or abs(steps - round(steps)) > 1e-9:
            raise InterrogationError("substep must divide the dwell time")
        if self.sweep_time > self.interval:
            raise InterrogationError("one sweep does not fit in an interval")
        t = np.sort(self.targets)
        if t.size > 1 and np.min(np.diff(t)) <= 10.0 * self.probe.bandwidth_fwhm:
            raise InterrogationError("targets closer than 10 probe bandwidths")

    @property
    def n_intervals(self) -> int:
        return int(round(self.total / self.interval))

    @property
    def sub_per_dwell(self) -> int:
        return int(round(self.dwell / self.substep))

    @property
    def sub_per_interval(self) -> int:
        return int(round(self.interval / self.substep))

    @property
    def sweep_time(self) -> float:
        return self.grid_points * self.dwell

    def offsets(self, widen: float = 1.0) -> np.ndarray:
        return np.linspace(-self.grid_half_span, self.grid_half_span, self.grid_points) * widen

    def schedule(self) -> tuple[np.ndarray, np.ndarray]:
        """Target index and grid index of every substep in one interval (-1: idle)."""
        q = np.arange(self.sub_per_interval)
        per_sweep = self.grid_points * self.sub_per_dwell
        block = q // per_sweep
        n_blocks = self.sub_per_interval // per_sweep
        target = np.where(block < n_blocks, block % len(self.targets), -1)
        point = np.where(target >= 0, (q // self.sub_per_dwell) % self.grid_points, -1)
        return target, point


@dataclass
class IntervalRecord:
    interval: int
    target: int
    emitter_id: int
    center: float
    center_err: float
    fwhm: float
    fwhm_err: float
    grid_center: float
    widen: float
    ok: bool
    lost: bool = False

    FIELDS = ("interval", "target", "emitter_id", "center", "center_err", "fwhm", "fwhm_err",
              "grid_center", "widen", "ok", "lost")


@dataclass
class AggregateLine:
    target: int
    mode: str  # "raw" or "ff"
    x: np.ndarray  # detuning from the reference, Hz
    rate: np.ndarray  # clicks per pulse
    error: np.ndarray
    fit: FitResult | None
    probe_fwhm: float

    @property
    def fwhm(self) -> float:
        return self.fit["fwhm"] if self.fit is not None else math.nan

    @property
    def fwhm_err(self) -> float:
        return self.fit.error("fwhm") if self.fit is not None else math.nan

    @property
    def deconvolved(self) -> float:
        return deconvolved_fwhm(self.fwhm, self.probe_fwhm) if self.fit is not None else math.nan


@dataclass
class InterrogationResult:
    plan: InterrogationPlan
    records: list[IntervalRecord]
    aggregates: list[AggregateLine]
    retunes: int
    truth: np.ndarray | None = None  # per-interval mean emitter offset, shape (intervals, targets)

    def centers(self, target: int) -> np.ndarray:
        return np.array([r.center for r in self.records if r.target == target])

    def center_series(self) -> np.ndarray:
        """Fitted centers relative to each nominal target, shape (intervals, targets)."""
        out = np.full((self.plan.n_intervals, len(self.plan.targets)), np.nan)
        for r in self.records:
            if r.ok:
                out[r.interval, r.target] = r.center - self.plan.targets[r.target]
        return out

    def aggregate(self, target: int, mode: str) -> AggregateLine:
        for a in self.aggregates:
            if a.target == target and a.mode == mode:
                return a
        raise KeyError((target, mode))

    def intervals_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(IntervalRecord.FIELDS)
            for r in self.records:
                row = []
                for k in IntervalRecord.FIELDS:
                    v = getattr(r, k)
                    row.append(repr(float(v)) if isinstance(v, float) else int(v))
                w.writerow(row)

    def aggregate_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["target", "mode", "detuning_hz", "rate", "stderr"])
            for a in self.aggregates:
                for x, y, e in zip(a.x, a.rate, a.error):
                    w.writerow([a.target, a.mode, repr(float(x)), repr(float(y)), repr(float(e))])

    def summary(self) -> dict:
        out = {"retunes": self.retunes, "lost_intervals": sum(r.lost for r in self.records), "targets": []}
        for k, f0 in enumerate(self.plan.targets):
            c = self.center_series()[:, k]
            entry = {"target": k, "frequency": f0, "center_std": float(np.nanstd(c, ddof=1))}
            for a in self.aggregates:
                if a.target == k:
                    entry[f"{a.mode}_fwhm"] = a.fwhm
                    entry[f"{a.mode}_fwhm_err"] = a.fwhm_err
                    entry[f"{a.mode}_fwhm_deconvolved"] = a.deconvolved
            out["targets"].append(entry)
        return out


class _ProbeResponse:
    """Excitation probability versus detuning, averaged over cavity jitter."""

    def __init__(self, pulse: Pulse, drive_offset: float, setup: Setup, decay, n_jitter: int = 48, n_det: int = 801):
        self.span = 6.0 * pulse.bandwidth_fwhm + 0.5e6
        self.det = np.linspace(-self.span, self.span, n_det)
        sigma = setup.noise.jitter_fwhm / FWHM_PER_SIGMA
        if sigma > 0:
            # equal-weight normal quantiles stand in for the jitter distribution
            u = (np.arange(n_jitter) + 0.5) / n_jitter
            cav = ndtri(u) * sigma
        else:
            cav = np.zeros(1)
        scale = np.sqrt(setup.transmission(drive_offset + cav))
        p = excitation_probability(pulse, self.det[None, :], decay, scale[:, None])
        self.values = np.asarray(p).mean(axis=0)

    def __call__(self, detuning):
        return np.interp(detuning, self.det, self.values, left=0.0, right=0.0)


def _fit_interval(x, counts, n_sub, pulses_per_sub):
    expo = n_sub * pulses_per_sub
    seen = n_sub > 0
    rate = counts[seen] / expo[seen]
    err = np.sqrt(np.maximum(counts[seen], 1.0)) / expo[seen]
    return fit_line(x[seen], rate, err, "gaussian")


def _accept(fit: FitResult, lo: float, hi: float) -> bool:
    c, w, a = fit["center"], fit["fwhm"], fit["amplitude"]
    return lo <= c <= hi and 0 < w < (hi - lo) and a > 0 and math.isfinite(fit.error("center"))


def _aggregate(target, mode, xs, counts, n_sub, pulses_per_sub, bin_width, probe_fwhm) -> AggregateLine:
    xs = np.concatenate(xs)
    counts = np.concatenate(counts)
    n_sub = np.concatenate(n_sub)
    if xs.size == 0:
        return AggregateLine(target, mode, np.empty(0), np.empty(0), np.empty(0), None, probe_fwhm)
    idx = np.round(xs / bin_width).astype(np.int64)
    keys, inv = np.unique(idx, return_inverse=True)
    c = np.bincount(inv, weights=counts)
    n = np.bincount(inv, weights=n_sub)
    # re-referenced data leaves a few sparsely sampled bins at the edges; their
    # rates are too noisy to locate or shape the line
    keep = n >= 0.1 * np.median(n[n > 0])
    x = keys[keep] * bin_width
    expo = n[keep] * pulses_per_sub
    rate = c[keep] / expo
    err = np.sqrt(np.maximum(c[keep], 1.0)) / expo
    try:
        fit = fit_line(x, rate, err, "gaussian")
    except (FitError, FitConvergenceError):
        fit = None
    return AggregateLine(target, mode, x, rate, err, fit, probe_fwhm)


def run_interrogation(
    emitters: list[Emitter],
    plan: InterrogationPlan,
    setup: Setup,
    seed: int,
    *,
    noise: NoiseParams | None = None,
) -> InterrogationResult:
    """Alternating narrow-band interrogation of ``emitters`` (one per plan target).

    ``plan.targets`` are the nominal laser frequencies; the emitters'
    ``freq0`` normally equal them. With ``feed_forward='live'`` each new
    sweep grid is centered on the previous interval's fit; otherwise the
    grid stays at the nominal frequency and feed-forward is applied to the
    pooled data afterwards. Both aggregates are always reported.
    """
    if len(emitters) != len(plan.targets):
        raise InterrogationError("one emitter per target required")
    noise = setup.noise if noise is None else noise
    setup = setup.with_noise(noise)
    n_t = len(plan.targets)
    cavity = CavityController(float(np.mean(plan.targets)), setup.tuning_range, setup.settle_time)
    half_kappa = 0.5 * setup.cavity.fwhm_linewidth

    pulses_per_sub = plan.substep * setup.repetition_rate
    floor = setup.dark_per_pulse() + setup.background_per_pulse(plan.probe)
    responses, etas = [], []
    for e, f0 in zip(emitters, plan.targets):
        cavity.ensure(f0, half_kappa)
        offset = f0 - cavity.frequency
        responses.append(_ProbeResponse(plan.probe, offset, setup, (e.lifetime, e.t2)))
        p_eff = e.purcell * float(setup.transmission(e.freq0 - cavity.frequency))
        etas.append(setup.chain(p_eff).total)
    traces = [FrequencyTrace(noise, seed, e.id, plan.substep) for e in emitters]
    rng = stream(seed, "interrogation-counts")
    sched_t, sched_k = plan.schedule()

    records: list[IntervalRecord] = []
    last_center = list(plan.targets)
    fails = [0] * n_t
    raw_x = [[] for _ in range(n_t)]
    ff_x = [[] for _ in range(n_t)]
    pool_c = [[] for _ in range(n_t)]
    pool_n = [[] for _ in range(n_t)]
    ff_c = [[] for _ in range(n_t)]
    ff_n = [[] for _ in range(n_t)]
    truth = np.zeros((plan.n_intervals, n_t))

    for i in range(plan.n_intervals):
        widen = [WIDEN if fails[k] > MAX_FAILS else 1.0 for k in range(n_t)]
        if plan.feed_forward == "live":
            centers = [last_center[k] for k in range(n_t)]
        else:
            centers = [last_center[k] if widen[k] > 1 else plan.targets[k] for k in range(n_t)]
        grids = [centers[k] + plan.offsets(widen[k]) for k in range(n_t)]
        for k in range(n_t):
            sel = sched_t == k
            off = traces[k].next(plan.sub_per_interval)
            truth[i, k] = off[sel].mean() if sel.any() else math.nan
            laser = grids[k][sched_k[sel]]
            det = emitters[k].freq0 + off[sel] - laser
            mean = pulses_per_sub * (etas[k] * responses[k](det) + floor)
            counts = rng.poisson(mean).astype(float)
            c = np.bincount(sched_k[sel], weights=counts, minlength=plan.grid_points)
            n = np.bincount(sched_k[sel], minlength=plan.grid_points).astype(float)
            x = grids[k]
            ok = True
            try:
                fit = _fit_interval(x, c, n, pulses_per_sub)
                ok = _accept(fit, x[0], x[-1])
            except (FitError, FitConvergenceError):
                fit, ok = None, False
            if ok:
                fails[k] = 0
                rec = IntervalRecord(i, k, emitters[k].id, fit["center"], fit.error("center"), fit["fwhm"],
                                     fit.error("fwhm"), centers[k], widen[k], True)
            else:
                fails[k] += 1
                rec = IntervalRecord(i, k, emitters[k].id, math.nan, math.nan, math.nan, math.nan, centers[k],
                                     widen[k], False, lost=fails[k] > MAX_FAILS)
            records.append(rec)
            if widen[k] == 1.0:
                raw_x[k].append(x - plan.targets[k])
                pool_c[k].append(c)
                pool_n[k].append(n)
                if i > 0:
                    # feed-forward reference: the last good center before this interval
                    ff_x[k].append(x - last_center[k])
                    ff_c[k].append(c)
                    ff_n[k].append(n)
            if ok:
                last_center[k] = fit["center"]

    spacing = 2.0 * plan.grid_half_span / (plan.grid_points - 1)
    probe = plan.probe.bandwidth_fwhm
    aggregates = []
    for k in range(n_t):
        aggregates.append(_aggregate(k, "raw", raw_x[k], pool_c[k], pool_n[k], pulses_per_sub, spacing / 2.0, probe))
        aggregates.append(_aggregate(k, "ff", ff_x[k], ff_c[k], ff_n[k], pulses_per_sub, spacing / 2.0, probe))
    return InterrogationResult(plan, records, aggregates, cavity.retunes, truth)


def pair_emitters(setup: Setup, base: float, separation: float, purcell: float) -> list[Emitter]:
    """Two well-coupled dopants ``separation`` apart, as in the long-term run."""
    return [setup.emitter(0, base, purcell), setup.emitter(1, base + separation, purcell)]
