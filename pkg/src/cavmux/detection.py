"""From excitations to detector clicks.

Timestamps are integer nanosecond ticks. A single detector is modelled:
clicks closer than the dead time to the previous registered click are
dropped.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TICK = 1e-9

SIGNAL, DARK, BACKGROUND = 0, 1, 2
ORIGIN_NAMES = {SIGNAL: "signal", DARK: "dark", BACKGROUND: "background"}
ORIGIN_CODES = {v: k for k, v in ORIGIN_NAMES.items()}


@dataclass(frozen=True)
class EfficiencyChain:
    eta_channel: float
    eta_out: float
    eta_fiber: float = 0.63
    eta_rest: float = 0.1136

    def __post_init__(self):
        for name in ("eta_channel", "eta_out", "eta_fiber", "eta_rest"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def total(self) -> float:
        return total_efficiency(self)

    @property
    def after_cavity(self) -> float:
        """Detection probability for a photon already in the cavity mode."""
        return self.eta_out * self.eta_fiber * self.eta_rest


def total_efficiency(chain: EfficiencyChain) -> float:
    return chain.eta_channel * chain.eta_out * chain.eta_fiber * chain.eta_rest


@dataclass
class ClickStream:
    """Registered clicks; ``origin`` is kept for tests and never read by estimators."""

    times: np.ndarray  # int64 ns ticks, strictly increasing
    origin: np.ndarray | None
    duration: float
    dark_rate: float
    t0: float = 0.0
    period: float | None = None
    channel: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def seconds(self) -> np.ndarray:
        return self.times * TICK

    @property
    def n_pulses(self) -> int | None:
        if self.period is None:
            return None
        return int(round(self.duration / self.period))

    def shifted(self, dt: float) -> "ClickStream":
        ticks = int(round(dt / TICK))
        return ClickStream(self.times + ticks, self.origin, self.duration, self.dark_rate,
                           self.t0 + ticks * TICK, self.period, self.channel, dict(self.meta))

    def blind(self) -> "ClickStream":
        return ClickStream(self.times, None, self.duration, self.dark_rate, self.t0, self.period, self.channel, dict(self.meta))

    def to_csv(self, path, strip_origin: bool = False) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if strip_origin or self.origin is None:
                w.writerow(["timestamp_ns"])
                w.writerows([int(t)] for t in self.times)
            else:
                w.writerow(["timestamp_ns", "origin"])
                w.writerows([int(t), ORIGIN_NAMES[int(o)]] for t, o in zip(self.times, self.origin))

    @classmethod
    def from_csv(cls, path, duration: float, dark_rate: float, t0: float = 0.0, period: float | None = None) -> "ClickStream":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        times = np.array([int(r[0]) for r in body], dtype=np.int64)
        origin = None
        if len(header) > 1:
            origin = np.array([ORIGIN_CODES[r[1]] for r in body], dtype=np.int8)
        return cls(times, origin, duration, dark_rate, t0, period)


def photon_times(times, p_excited, lifetime, efficiency, rng: np.random.Generator):
    """Detected emission times for one excitation attempt per entry of ``times``.

    Each attempt succeeds with ``p_excited``; the photon leaves after an
    exponential delay with mean ``lifetime`` and is detected with
    ``efficiency``. Returns seconds, unsorted.
    """
    times = np.asarray(times, dtype=float)
    p = np.broadcast_to(np.asarray(p_excited, dtype=float) * efficiency, times.shape)
    hit = rng.random(times.size) < p
    t = times[hit]
    life = np.broadcast_to(np.asarray(lifetime, dtype=float), times.shape)[hit]
    return t + rng.exponential(1.0, t.size) * life


def background_times(pulse_times, mean_per_pulse, lifetime, rng: np.random.Generator):
    """Poissonian background photons (already including detection efficiency)."""
    pulse_times = np.asarray(pulse_times, dtype=float)
    k = rng.poisson(mean_per_pulse, pulse_times.size)
    t = np.repeat(pulse_times, k)
    return t + rng.exponential(lifetime, t.size)


def dark_times(start: float, stop: float, rate: float, rng: np.random.Generator):
    n = rng.poisson(rate * (stop - start)) if rate > 0 else 0
    return np.sort(rng.uniform(start, stop, n))


def apply_dead_time(ticks: np.ndarray, dead_ticks: int) -> np.ndarray:
    """Boolean mask of clicks registered by a detector with the given dead time (ticks)."""
    keep = np.ones(ticks.size, dtype=bool)
    if ticks.size < 2:
        return keep
    gap = np.diff(ticks)
    close = np.flatnonzero(gap < dead_ticks) + 1
    if close.size == 0:
        return keep
    # close pairs are rare, so resolve them sequentially
    for i in close:
        prev = i - 1
        while not keep[prev]:
            prev -= 1
        if ticks[i] - ticks[prev] < dead_ticks:
            keep[i] = False
    return keep


def merge(parts, duration: float, dark_rate: float, *, dead_time: float = 50e-9, t0: float = 0.0,
          period: float | None = None) -> ClickStream:
    """Merge ``(seconds, origin_code)`` parts into one sorted, dead-time filtered stream."""
    times = []
    origins = []
    for secs, code in parts:
        secs = np.asarray(secs, dtype=float)
        secs = secs[(secs >= t0) & (secs <= t0 + duration)]
        times.append(np.floor(secs / TICK).astype(np.int64))
        origins.append(np.full(secs.size, code, dtype=np.int8))
    ticks = np.concatenate(times) if times else np.empty(0, np.int64)
    origin = np.concatenate(origins) if origins else np.empty(0, np.int8)
    order = np.lexsort((origin, ticks))
    ticks, origin = ticks[order], origin[order]
    keep = apply_dead_time(ticks, max(1, int(round(dead_time / TICK))))
    return ClickStream(ticks[keep], origin[keep], duration, dark_rate, t0, period)


def emit_clicks(
    excitations,
    chain: EfficiencyChain,
    dark_rate: float,
    rng: np.random.Generator,
    *,
    lifetime,
    duration: float,
    dead_time: float = 50e-9,
    period: float | None = None,
) -> ClickStream:
    """Click stream for a list of ``(time, emitter, p_excited)`` excitations.

    ``lifetime`` is a scalar or a mapping from emitter to lifetime; the chain
    efficiency applies to every emitter.
    """
    exc = list(excitations)
    if exc:
        t = np.array([e[0] for e in exc], dtype=float)
        if np.any(np.diff(t) < 0):
            raise ValueError("excitation times must be sorted")
        p = np.array([e[2] for e in exc], dtype=float)
        if isinstance(lifetime, dict):
            life = np.array([lifetime[e[1]] for e in exc], dtype=float)
        else:
            life = lifetime
        sig = photon_times(t, p, life, chain.total, rng)
    else:
        sig = np.empty(0)
    dark = dark_times(0.0, duration, dark_rate, rng)
    return merge([(sig, SIGNAL), (dark, DARK)], duration, dark_rate, dead_time=dead_time, period=period)
