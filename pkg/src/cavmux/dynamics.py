"""Optical Bloch dynamics of a single two-level emitter under shaped pulses.

Conventions: the Bloch vector ``(u, v, w)`` obeys ``dr/dt = W x r`` with
``W = (Omega cos(phase), Omega sin(phase), 2 pi Delta)`` and ``Delta`` the
laser-minus-emitter detuning in Hz. The ground state is ``(0, 0, -1)``.
All functions broadcast over array-valued detunings and amplitude scales,
which is how Monte-Carlo shots are batched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import erf

TWO_PI = 2.0 * math.pi
# intensity FWHM duration x intensity-spectrum FWHM for a Gaussian pulse
TIME_BANDWIDTH = 2.0 * math.log(2.0) / math.pi
# pulses are integrated over +/- this many FWHM durations
WINDOW_FWHM = 2.5
SQRT3 = math.sqrt(3.0)


class DynamicsError(RuntimeError):
    pass


@dataclass(frozen=True)
class Pulse:
    """Gaussian (optionally linearly chirped) pulse.

    ``duration_fwhm`` is the FWHM of the intensity envelope. ``area`` is the
    pulse area for an emitter at the mode maximum; ``chirp_span`` is the
    frequency swept during one FWHM duration.
    """

    duration_fwhm: float
    shape: str = "gaussian"
    center_detuning: float = 0.0
    chirp_span: float = 0.0
    area: float = math.pi
    phase: float = 0.0

    def __post_init__(self):
        if self.duration_fwhm <= 0:
            raise ValueError("pulse duration must be positive")
        if self.shape not in ("gaussian", "chirped-gaussian"):
            raise ValueError(f"unknown pulse shape {self.shape!r}")
        if self.chirp_span < 0:
            raise ValueError("chirp span must be >= 0")

    @classmethod
    def from_bandwidth(cls, bandwidth_fwhm: float, **kw) -> "Pulse":
        """Transform-limited Gaussian with the given intensity-spectrum FWHM."""
        return cls(duration_fwhm=TIME_BANDWIDTH / bandwidth_fwhm, **kw)

    @classmethod
    def chirped(cls, span: float, duration_fwhm: float, **kw) -> "Pulse":
        return cls(duration_fwhm=duration_fwhm, shape="chirped-gaussian", chirp_span=span, **kw)

    @property
    def bandwidth_fwhm(self) -> float:
        if self.shape == "chirped-gaussian":
            return max(self.chirp_span, TIME_BANDWIDTH / self.duration_fwhm)
        return TIME_BANDWIDTH / self.duration_fwhm

    @property
    def window(self) -> float:
        return 2.0 * WINDOW_FWHM * self.duration_fwhm

    def peak_rabi(self) -> float:
        """Peak Rabi frequency (rad/s) giving exactly ``area`` over the window."""
        # field envelope exp(-2 ln2 t^2 / T^2)
        a = math.sqrt(2.0 * math.log(2.0)) / self.duration_fwhm
        half = WINDOW_FWHM * self.duration_fwhm
        integral = math.sqrt(math.pi) / a * erf(a * half)
        return self.area / integral

    def rabi(self, t):
        t = np.asarray(t, dtype=float)
        return self.peak_rabi() * np.exp(-2.0 * math.log(2.0) * (t / self.duration_fwhm) ** 2)

    def sweep(self, t):
        """Instantaneous laser frequency offset (Hz) of the chirp."""
        if self.shape != "chirped-gaussian":
            return np.zeros_like(np.asarray(t, dtype=float))
        return self.chirp_span * np.asarray(t, dtype=float) / self.duration_fwhm


@dataclass(frozen=True)
class BlochState:
    u: np.ndarray | float
    v: np.ndarray | float
    w: np.ndarray | float

    @classmethod
    def ground(cls, shape=()) -> "BlochState":
        return cls(np.zeros(shape), np.zeros(shape), -np.ones(shape))

    @property
    def norm(self):
        return np.sqrt(self.u**2 + self.v**2 + self.w**2)

    @property
    def excited(self):
        return 0.5 * (1.0 + np.asarray(self.w))


@dataclass(frozen=True)
class EchoSequence:
    t_seq: float
    phases: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.t_seq < 0:
            raise ValueError("t_seq must be >= 0")


def _rotate(u, v, w, mx, my, mz):
    """Rodrigues rotation of (u, v, w) by the rotation vector m."""
    theta = np.sqrt(mx * mx + my * my + mz * mz)
    safe = np.where(theta > 0, theta, 1.0)
    kx, ky, kz = mx / safe, my / safe, mz / safe
    c = np.cos(theta)
    s = np.sin(theta)
    dot = (kx * u + ky * v + kz * w) * (1.0 - c)
    cu = ky * w - kz * v
    cv = kz * u - kx * w
    cw = kx * v - ky * u
    return (
        u * c + cu * s + kx * dot,
        v * c + cv * s + ky * dot,
        w * c + cw * s + kz * dot,
    )


def _relax(u, v, w, dt, decay):
    if decay is None:
        return u, v, w
    lifetime, t2 = decay
    fc = math.exp(-dt / t2) if math.isfinite(t2) else 1.0
    fp = math.exp(-dt / lifetime) if math.isfinite(lifetime) else 1.0
    return u * fc, v * fc, -1.0 + (w + 1.0) * fp


def evolve_pulse(
    state: BlochState,
    pulse: Pulse,
    detuning=0.0,
    decay: tuple[float, float] | None = None,
    amplitude_scale=1.0,
    steps_per_fwhm: int = 200,
) -> BlochState:
    """Propagate ``state`` through ``pulse``.

    Uses a fixed-step fourth-order Magnus propagator (two Gauss-Legendre
    nodes per step, each step an exact rotation), with relaxation applied
    by exact half-step splitting. Without decay the Bloch norm is conserved
    to rounding error.

    ``detuning`` (Hz) adds to the pulse's own center detuning;
    ``amplitude_scale`` multiplies the Rabi frequency. Both broadcast.
    """
    if steps_per_fwhm < 1:
        raise DynamicsError("need at least one step per FWHM")
    h = pulse.duration_fwhm / steps_per_fwhm
    if not h > 1e-15:
        raise DynamicsError(f"integration step {h!r} s underflows")
    n = int(math.ceil(pulse.window / h))
    h = pulse.window / n
    t0 = -0.5 * pulse.window

    delta = TWO_PI * (pulse.center_detuning + np.asarray(detuning, dtype=float))
    scale = np.asarray(amplitude_scale, dtype=float)
    shape = np.broadcast_shapes(np.shape(state.u), delta.shape, scale.shape)
    u = np.broadcast_to(state.u, shape).astype(float)
    v = np.broadcast_to(state.v, shape).astype(float)
    w = np.broadcast_to(state.w, shape).astype(float)

    mids = t0 + h * (np.arange(n) + 0.5)
    off = SQRT3 / 6.0 * h
    t1, t2_ = mids - off, mids + off
    om1, om2 = pulse.rabi(t1), pulse.rabi(t2_)
    sw1, sw2 = TWO_PI * pulse.sweep(t1), TWO_PI * pulse.sweep(t2_)
    cphi, sphi = math.cos(pulse.phase), math.sin(pulse.phase)
    chirped = pulse.shape == "chirped-gaussian"
    k2 = SQRT3 / 12.0 * h * h

    for i in range(n):
        u, v, w = _relax(u, v, w, 0.5 * h, decay)
        a1 = scale * om1[i]
        a2 = scale * om2[i]
        z1 = delta + sw1[i] if chirped else delta
        z2 = delta + sw2[i] if chirped else delta
        # W1 = (a1 c, a1 s, z1), W2 = (a2 c, a2 s, z2); m = h/2 (W1+W2) + k2 (W2 x W1)
        mx = 0.5 * h * (a1 + a2) * cphi
        my = 0.5 * h * (a1 + a2) * sphi
        mz = 0.5 * h * (z1 + z2)
        cross = a2 * z1 - a1 * z2
        mx = mx + k2 * sphi * cross
        my = my - k2 * cphi * cross
        u, v, w = _rotate(u, v, w, mx, my, mz)
        u, v, w = _relax(u, v, w, 0.5 * h, decay)
    return BlochState(u, v, w)


def free_evolution(state: BlochState, detuning, duration: float, decay=None, coherence_factor=None) -> BlochState:
    """Exact precession about z for ``duration`` seconds.

    ``coherence_factor`` overrides the exponential T2 decay of (u, v), e.g.
    for a stretched-exponential model.
    """
    phi = TWO_PI * np.asarray(detuning, dtype=float) * duration
    c, s = np.cos(phi), np.sin(phi)
    # rotation about +z by phi: W = (0, 0, 2 pi Delta)
    u = state.u * c - state.v * s
    v = state.u * s + state.v * c
    w = np.broadcast_to(state.w, np.shape(u)).astype(float)
    if decay is not None:
        lifetime, t2 = decay
        if coherence_factor is None:
            coherence_factor = math.exp(-duration / t2) if math.isfinite(t2) else 1.0
        w = -1.0 + (w + 1.0) * math.exp(-duration / lifetime)
    if coherence_factor is not None:
        u, v = u * coherence_factor, v * coherence_factor
    return BlochState(u, v, w)


def hard_pulse(state: BlochState, area, phase: float = 0.0) -> BlochState:
    """Instantaneous rotation by ``area`` about the equatorial axis at ``phase``."""
    area = np.asarray(area, dtype=float)
    u, v, w = _rotate(state.u, state.v, state.w, area * math.cos(phase), area * math.sin(phase), 0.0 * area)
    return BlochState(u, v, w)


def excitation_probability(pulse: Pulse, emitter_detuning=0.0, decay=None, amplitude_scale=1.0):
    """Excited population after ``pulse`` starting from the ground state."""
    out = evolve_pulse(BlochState.ground(), pulse, emitter_detuning, decay, amplitude_scale).excited
    return float(out) if np.ndim(out) == 0 else out


class ExcitationTable:
    """Tabulated ``excitation_probability`` versus detuning for fast lookup.

    Values outside the tabulated span are taken as zero.
    """

    def __init__(self, pulse: Pulse, amplitude_scale: float = 1.0, decay=None, span: float | None = None, points: int = 1601):
        if span is None:
            span = 10.0 * pulse.bandwidth_fwhm + (2.0 * WINDOW_FWHM * pulse.chirp_span)
        self.pulse = pulse
        self.span = span
        self.grid = np.linspace(-span, span, points)
        self.values = np.asarray(excitation_probability(pulse, self.grid, decay, amplitude_scale))

    def __call__(self, detuning):
        return np.interp(detuning, self.grid, self.values, left=0.0, right=0.0)


def rabi_area(photon_number, n_pi: float):
    """Pulse area for a mean intracavity photon number, given the pi-pulse calibration."""
    return math.pi * np.sqrt(np.asarray(photon_number, dtype=float) / n_pi)


def rabi_scan(
    photon_numbers,
    *,
    pulse: Pulse,
    n_pi: float,
    cavity_linewidth: float,
    jitter_sigma: float = 0.0,
    background_slope: float = 0.0,
    detuning_sigma: float = 0.0,
    decay=None,
    shots: int = 400,
    rng: np.random.Generator,
):
    """Mean fluorescence signal for each mean intracavity photon number.

    Each shot draws a cavity detuning (Gaussian, ``jitter_sigma``) that
    scales the intracavity intensity by the Lorentzian transmission, and
    an emitter detuning (Gaussian, ``detuning_sigma``). The signal is the
    mean excited population plus ``background_slope * N``.

    Returns ``(signal, stderr)`` arrays.
    """
    n = np.asarray(photon_numbers, dtype=float)
    if np.any(n < 0):
        raise ValueError("photon numbers must be >= 0")
    cav = rng.standard_normal((n.size, shots)) * jitter_sigma
    det = rng.standard_normal((n.size, shots)) * detuning_sigma
    transmission = 1.0 / (1.0 + (2.0 * cav / cavity_linewidth) ** 2)
    scale = np.sqrt(n / n_pi)[:, None] * np.sqrt(transmission)
    unit = replace(pulse, area=math.pi)
    pop = evolve_pulse(BlochState.ground(), unit, det, decay, scale).excited
    signal = pop.mean(axis=1) + background_slope * n
    err = pop.std(axis=1, ddof=1) / math.sqrt(shots) if shots > 1 else np.zeros(n.size)
    return signal, err


def echo_populations(
    seq: EchoSequence,
    pulse: Pulse,
    detuning=0.0,
    amplitude_scale=1.0,
    decay=None,
    stretch: float = 1.0,
    hard: bool = False,
):
    """Excited population after the pi/2 - pi - pi/2 sequence for both first-pulse phases.

    Returns ``(unchanged, inverted)``. ``pulse`` sets the pi/2 shape; the
    pi pulse has the same shape and twice the area. Free evolution lasts
    ``t_seq / 2`` on each side of the pi pulse.
    """
    p1, p2, p3 = seq.phases
    half = 0.5 * seq.t_seq
    coherence = None
    free_decay = decay
    if decay is not None and stretch != 1.0:
        lifetime, t2 = decay
        coherence = math.exp(-0.5 * (seq.t_seq / t2) ** stretch)
    out = []
    for first in (p1, p1 + math.pi):
        s = BlochState.ground()
        if hard:
            s = hard_pulse(s, 0.5 * math.pi * np.asarray(amplitude_scale), first)
        else:
            s = evolve_pulse(s, replace(pulse, area=0.5 * math.pi, phase=first), detuning, decay, amplitude_scale)
        s = free_evolution(s, detuning, half, free_decay, coherence)
        if hard:
            s = hard_pulse(s, math.pi * np.asarray(amplitude_scale), p2)
        else:
            s = evolve_pulse(s, replace(pulse, area=math.pi, phase=p2), detuning, decay, amplitude_scale)
        s = free_evolution(s, detuning, half, free_decay, coherence)
        if hard:
            s = hard_pulse(s, 0.5 * math.pi * np.asarray(amplitude_scale), p3)
        else:
            s = evolve_pulse(s, replace(pulse, area=0.5 * math.pi, phase=p3), detuning, decay, amplitude_scale)
        out.append(s.excited)
    return out[0], out[1]


def echo_contrast(
    seq: EchoSequence,
    pulse: Pulse,
    *,
    t2: float,
    lifetime: float,
    detuning_sigma: float = 0.0,
    amplitude_sigma: float = 0.0,
    jitter_sigma: float = 0.0,
    cavity_linewidth: float | None = None,
    stretch: float = 1.0,
    shots: int = 200,
    clicks: int | None = None,
    efficiency: float = 1.0,
    decay: bool = True,
    rng: np.random.Generator,
):
    """Normalized echo difference signal.

    ``shots`` Monte-Carlo realizations each carry a static emitter detuning
    and a pulse-amplitude error, which the echo refocuses. The amplitude
    error is a Gaussian relative spread ``amplitude_sigma`` and/or a cavity
    detuning (``jitter_sigma``) filtered by the cavity Lorentzian. With
    ``clicks`` set, detector counts for that many repetitions of each phase
    are drawn as binomials from the mean populations times ``efficiency``
    and the contrast is the count difference per repetition and per unit
    efficiency. Returns ``(contrast, stderr)``.
    """
    det = rng.standard_normal(shots) * detuning_sigma
    scale = np.clip(1.0 + rng.standard_normal(shots) * amplitude_sigma, 0.0, None)
    if jitter_sigma > 0:
        if cavity_linewidth is None:
            raise DynamicsError("cavity jitter needs the cavity linewidth")
        cav = rng.standard_normal(shots) * jitter_sigma
        scale = scale / np.sqrt(1.0 + (2.0 * cav / cavity_linewidth) ** 2)
    relax = (lifetime, t2) if decay else None
    unchanged, inverted = echo_populations(seq, pulse, det, scale, relax, stretch)
    if clicks is None:
        diff = inverted - unchanged
        err = diff.std(ddof=1) / math.sqrt(shots) if shots > 1 else 0.0
        return float(diff.mean()), float(err)
    p_inv = efficiency * float(np.mean(inverted))
    p_unc = efficiency * float(np.mean(unchanged))
    c_inv = rng.binomial(clicks, min(p_inv, 1.0))
    c_unc = rng.binomial(clicks, min(p_unc, 1.0))
    norm = efficiency * clicks
    err = math.sqrt(max(c_inv + c_unc, 1)) / norm
    return float((c_inv - c_unc) / norm), float(err)
