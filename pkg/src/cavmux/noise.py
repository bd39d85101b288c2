"""Stochastic processes behind spectral diffusion and cavity jitter.

An emitter's transition frequency is its nominal value plus two
Ornstein-Uhlenbeck components (a fast one on the ~100 ms scale and a slow
wander on the ~hour scale) plus the telegraph shifts of a few proximal
nuclear spins. Each process draws from its own named random stream, so
traces are reproducible from (seed, emitter id, step index) alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from .cavity import FWHM_PER_SIGMA
from .rng import stream

HOUR = 3600.0


@dataclass(frozen=True)
class OUProcess:
    sigma: float
    tau_c: float
    value: float = 0.0

    def __post_init__(self):
        if self.sigma < 0 or self.tau_c <= 0:
            raise ValueError("OU process needs sigma >= 0 and tau_c > 0")

    @property
    def fwhm(self) -> float:
        return FWHM_PER_SIGMA * self.sigma


@dataclass(frozen=True)
class TelegraphSpin:
    coupling: float
    flip_rate: float
    state: int = 1

    def __post_init__(self):
        if self.flip_rate < 0:
            raise ValueError("flip rate must be >= 0")
        if self.state not in (-1, 1):
            raise ValueError("spin state must be +1 or -1")

    @property
    def shift(self) -> float:
        return 0.5 * self.coupling * self.state


@dataclass(frozen=True)
class CavityJitter:
    """Gaussian cavity-resonance detuning; i.i.d. per shot unless ``correlation_time`` is set."""

    fwhm: float = 6e6
    correlation_time: float | None = None

    def __post_init__(self):
        if self.fwhm < 0:
            raise ValueError("jitter FWHM must be >= 0")

    @property
    def sigma(self) -> float:
        return self.fwhm / FWHM_PER_SIGMA


@dataclass(frozen=True)
class NoiseParams:
    """One noise preset. Amplitudes are standard deviations in Hz."""

    fast_sigma: float = 40.75e3
    fast_tau_c: float = 0.080
    slow_sigma: float = 50.0e3
    slow_tau_c: float = 0.5 * HOUR
    mean_spins: float = 0.3
    max_coupling: float = 0.36e6
    flip_rate_min: float = 1.0 / (48 * HOUR)
    flip_rate_max: float = 1.0 / (6 * HOUR)
    jitter_fwhm: float = 6e6
    jitter_correlation_time: float | None = None

    @property
    def total_sigma(self) -> float:
        return math.hypot(self.fast_sigma, self.slow_sigma)

    @property
    def jitter(self) -> CavityJitter:
        return CavityJitter(self.jitter_fwhm, self.jitter_correlation_time)

    def disabled(self) -> "NoiseParams":
        return replace(self, fast_sigma=0.0, slow_sigma=0.0, mean_spins=0.0, jitter_fwhm=0.0)


def ou_step(process: OUProcess, dt: float, rng: np.random.Generator) -> OUProcess:
    """Advance exactly by ``dt`` (no discretization error)."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if dt == 0:
        return process
    a = math.exp(-dt / process.tau_c)
    sd = process.sigma * math.sqrt(-math.expm1(-2.0 * dt / process.tau_c))
    return replace(process, value=process.value * a + sd * rng.standard_normal())


def ou_path(
    sigma: float,
    tau_c: float,
    dt: float,
    n: int,
    rng: np.random.Generator,
    x0: float | None = None,
) -> np.ndarray:
    """Values at ``t = dt, 2 dt, ..., n dt`` starting from ``x0`` at ``t = 0``.

    ``x0=None`` draws the start from the stationary distribution.
    """
    if x0 is None:
        x0 = sigma * rng.standard_normal()
    if n == 0:
        return np.empty(0)
    a = math.exp(-dt / tau_c)
    sd = sigma * math.sqrt(-math.expm1(-2.0 * dt / tau_c))
    kicks = sd * rng.standard_normal(n)
    out, _ = lfilter([1.0], [1.0, -a], kicks, zi=[a * x0])
    return out


def telegraph_step(spin: TelegraphSpin, dt: float, rng: np.random.Generator) -> TelegraphSpin:
    """Flip if an odd number of Poisson flip events fall in ``dt``."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if spin.flip_rate == 0 or dt == 0:
        return spin
    p_odd = 0.5 * -math.expm1(-2.0 * spin.flip_rate * dt)
    if rng.random() < p_odd:
        return replace(spin, state=-spin.state)
    return spin


def telegraph_path(spin: TelegraphSpin, dt: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Spin states (+1/-1) at ``t = dt, ..., n dt``."""
    if spin.flip_rate == 0:
        return np.full(n, spin.state, dtype=np.int8)
    p_odd = 0.5 * -math.expm1(-2.0 * spin.flip_rate * dt)
    flips = rng.random(n) < p_odd
    parity = np.cumsum(flips) % 2
    return np.where(parity == 1, -spin.state, spin.state).astype(np.int8)


def cavity_detuning_sample(j: CavityJitter, rng: np.random.Generator, size=None):
    """Per-shot cavity resonance detuning in Hz."""
    if j.fwhm == 0:
        return 0.0 if size is None else np.zeros(size)
    return j.sigma * rng.standard_normal(size)


def jitter_path(j: CavityJitter, shot_period: float, n: int, rng: np.random.Generator) -> np.ndarray:
    if j.correlation_time is None or j.fwhm == 0:
        return np.asarray(cavity_detuning_sample(j, rng, n), dtype=float)
    return ou_path(j.sigma, j.correlation_time, shot_period, n, rng)


def sample_spins(params: NoiseParams, seed: int, emitter_id: int) -> list[TelegraphSpin]:
    """Proximal nuclear spins of one emitter, drawn once per run."""
    if params.mean_spins <= 0:
        return []
    rng = stream(seed, "spins", emitter_id)
    k = int(rng.poisson(params.mean_spins))
    spins = []
    for _ in range(k):
        coupling = rng.uniform(0.0, params.max_coupling)
        log_rate = rng.uniform(math.log(params.flip_rate_min), math.log(params.flip_rate_max))
        state = 1 if rng.random() < 0.5 else -1
        spins.append(TelegraphSpin(coupling, math.exp(log_rate), state))
    return spins


@dataclass
class NoiseProcess:
    """Mutable noise state owned by one emitter within one run."""

    fast: OUProcess
    slow: OUProcess
    spins: list[TelegraphSpin]
    t: float = 0.0
    rng: np.random.Generator = field(default=None, repr=False)

    @classmethod
    def create(cls, params: NoiseParams, seed: int, emitter_id: int) -> "NoiseProcess":
        rng = stream(seed, "noise-state", emitter_id)
        fast = OUProcess(params.fast_sigma, params.fast_tau_c, params.fast_sigma * rng.standard_normal())
        slow = OUProcess(params.slow_sigma, params.slow_tau_c, params.slow_sigma * rng.standard_normal())
        return cls(fast, slow, sample_spins(params, seed, emitter_id), 0.0, rng)

    @property
    def offset(self) -> float:
        return self.fast.value + self.slow.value + sum(s.shift for s in self.spins)

    def advance_to(self, t: float) -> None:
        dt = t - self.t
        if dt < 0:
            raise ValueError("noise state cannot move backwards in time")
        self.fast = ou_step(self.fast, dt, self.rng)
        self.slow = ou_step(self.slow, dt, self.rng)
        self.spins = [telegraph_step(s, dt, self.rng) for s in self.spins]
        self.t = t


def emitter_frequency(e, t: float) -> float:
    """Instantaneous transition frequency; ``e.noise`` is advanced to ``t``."""
    if e.noise is None:
        return e.freq0
    e.noise.advance_to(t)
    return e.freq0 + e.noise.offset


class FrequencyTrace:
    """Chunked generator of an emitter's frequency offset on a uniform grid.

    Each component consumes its own stream, so the concatenation of chunks
    is identical whatever the chunk size.
    """

    def __init__(self, params: NoiseParams, seed: int, emitter_id: int, dt: float):
        self.params = params
        self.dt = dt
        self._fast_rng = stream(seed, "ou-fast", emitter_id)
        self._slow_rng = stream(seed, "ou-slow", emitter_id)
        self.spins = sample_spins(params, seed, emitter_id)
        self._spin_rngs = [stream(seed, "telegraph", emitter_id, i) for i in range(len(self.spins))]
        self._fast = params.fast_sigma * self._fast_rng.standard_normal()
        self._slow = params.slow_sigma * self._slow_rng.standard_normal()

    def next(self, n: int) -> np.ndarray:
        p = self.params
        out = np.zeros(n)
        if p.fast_sigma > 0:
            x = ou_path(p.fast_sigma, p.fast_tau_c, self.dt, n, self._fast_rng, self._fast)
            self._fast = x[-1] if n else self._fast
            out += x
        if p.slow_sigma > 0:
            x = ou_path(p.slow_sigma, p.slow_tau_c, self.dt, n, self._slow_rng, self._slow)
            self._slow = x[-1] if n else self._slow
            out += x
        for i, (spin, rng) in enumerate(zip(self.spins, self._spin_rngs)):
            states = telegraph_path(spin, self.dt, n, rng)
            if n:
                self.spins[i] = replace(spin, state=int(states[-1]))
            out += 0.5 * spin.coupling * states
        return out


def frequency_trace(params: NoiseParams, seed: int, emitter_id: int, dt: float, n: int) -> np.ndarray:
    return FrequencyTrace(params, seed, emitter_id, dt).next(n)
