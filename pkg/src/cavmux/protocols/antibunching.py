"""Pulsed antibunching run: excitation, clicks and the correlation histogram."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..analysis import G2Histogram, compute_g2, rescale_g2
from ..detection import BACKGROUND, DARK, SIGNAL, ClickStream, background_times, dark_times, merge, photon_times
from ..dynamics import ExcitationTable, Pulse
from ..emitters import Emitter
from ..noise import FrequencyTrace, NoiseParams
from ..rng import stream
from .setup import Setup

# pulses sit this far into each period so that the whole pulse fits in its bin
PULSE_OFFSET = 20e-6


@dataclass
class G2Run:
    histogram: G2Histogram
    stream: ClickStream | None
    n_pulses: int
    bandwidth: float
    background_per_pulse: float
    mean_excitation: float

    @property
    def raw_g0(self) -> float:
        return self.histogram.g0

    @property
    def rescaled_g0(self) -> float:
        return rescale_g2(self.histogram.g0, self.histogram.dark_fraction)


def _chunk_stream(t_pulse, p_exc, emitter, setup, bg_mean, t0, duration, rng) -> ClickStream:
    chain = setup.chain(emitter.purcell)
    sig = photon_times(t_pulse, p_exc, emitter.lifetime, chain.total, rng)
    bg = background_times(t_pulse, bg_mean, setup.background_lifetime, rng)
    dark = dark_times(t0, t0 + duration, setup.dark_rate, rng)
    return merge([(sig, SIGNAL), (bg, BACKGROUND), (dark, DARK)], duration, setup.dark_rate,
                 dead_time=setup.dead_time, t0=t0, period=setup.period)


def run_g2_experiment(
    emitter: Emitter,
    bandwidth: float,
    pulses: int,
    seed: int,
    setup: Setup | None = None,
    *,
    max_lag: int = 1000,
    lag_bin: int = 10,
    chunk: int = 1_000_000,
    noise: NoiseParams | None = None,
    keep_stream: bool = False,
) -> G2Run:
    """Drive one emitter with resonant Gaussian pi pulses and histogram the clicks.

    The laser sits at the emitter's unperturbed frequency and the cavity on
    resonance; spectral diffusion moves the emitter away from the laser
    from pulse to pulse, which modulates the excitation probability. Weakly
    coupled dopants add Poissonian background whose size grows with the
    pulse energy. The run is generated in chunks of ``chunk`` pulses so
    long runs stay within memory; output is deterministic for a given seed
    and chunk size.
    """
    setup = setup or Setup()
    noise = setup.noise if noise is None else noise
    pulse = Pulse.from_bandwidth(bandwidth)
    table = ExcitationTable(pulse, decay=(emitter.lifetime, emitter.t2), span=10.0 * bandwidth + 20.0 * noise.total_sigma)
    bg_mean = setup.background_per_pulse(pulse)
    period = setup.period
    trace = FrequencyTrace(noise, seed, emitter.id, period)
    exc_rng = stream(seed, "g2-clicks", emitter.id)

    ticks = []
    origins = []
    p_sum = 0.0
    for start in range(0, pulses, chunk):
        n = min(chunk, pulses - start)
        offset = trace.next(n)
        p_exc = table(offset)
        p_sum += float(p_exc.sum())
        t0 = start * period
        t_pulse = t0 + PULSE_OFFSET + period * np.arange(n)
        part = _chunk_stream(t_pulse, p_exc, emitter, setup, bg_mean, t0, n * period, exc_rng)
        ticks.append(part.times)
        origins.append(part.origin)
    duration = pulses * period
    full = ClickStream(np.concatenate(ticks), np.concatenate(origins), duration, setup.dark_rate, 0.0, period)
    hist = compute_g2(full, period, max_lag, lag_bin=lag_bin, n_pulses=pulses)
    return G2Run(hist, full if keep_stream else None, pulses, bandwidth, bg_mean, p_sum / pulses)


def ideal_stream(n_pulses: int, period: float, p: float, lifetime: float, efficiency: float, seed: int) -> ClickStream:
    """Single emitter without background or darks; useful as a baseline."""
    rng = stream(seed, "ideal")
    t = PULSE_OFFSET + period * np.arange(n_pulses)
    sig = photon_times(t, p, lifetime, efficiency, rng)
    return merge([(sig, SIGNAL)], n_pulses * period, 0.0, period=period)


def poisson_stream(n_pulses: int, period: float, mean: float, seed: int) -> ClickStream:
    """Coherent-light baseline: Poissonian clicks per pulse."""
    rng = stream(seed, "poisson")
    t = PULSE_OFFSET + period * np.arange(n_pulses)
    ph = background_times(t, mean, 1e-6, rng)
    return merge([(ph, BACKGROUND)], n_pulses * period, 0.0, period=period)


__all__ = ["G2Run", "PULSE_OFFSET", "ideal_stream", "poisson_stream", "run_g2_experiment"]
