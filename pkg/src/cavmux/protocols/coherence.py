"""Rabi-oscillation and optical spin-echo runs on one emitter."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..analysis import FitResult, fit_exponential_decay, fit_rabi
from ..cavity import FWHM_PER_SIGMA
from ..dynamics import EchoSequence, Pulse, echo_contrast, rabi_scan
from ..emitters import Emitter
from ..rng import stream
from .setup import Setup


@dataclass
class ScanRecord:
    """One scan: abscissa, mean signal, standard error, shots per point."""

    x: np.ndarray
    signal: np.ndarray
    error: np.ndarray
    shots: int
    x_name: str
    fit: FitResult | None = None
    meta: dict | None = None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([self.x_name, "signal", "stderr", "shots"])
            for x, s, e in zip(self.x, self.signal, self.error):
                w.writerow([repr(float(x)), repr(float(s)), repr(float(e)), self.shots])


def run_rabi(
    emitter: Emitter,
    setup: Setup,
    seed: int,
    *,
    duration: float = 1e-6,
    max_photons: float = 250.0,
    points: int = 101,
    shots: int = 400,
    fit: bool = True,
) -> ScanRecord:
    """Fluorescence after a resonant Gaussian pulse versus mean intracavity photon number.

    The pi-pulse photon number follows from the emitter's coupling; each
    shot draws a cavity detuning (which filters the drive intensity) and an
    emitter detuning from the spectral-diffusion spread. Weakly coupled
    dopants add a background linear in photon number.
    """
    pulse = Pulse(duration)
    n_pi = setup.n_pi(emitter.purcell, pulse)
    n = np.linspace(0.0, max_photons, points)
    rng = stream(seed, "rabi", emitter.id)
    signal, err = rabi_scan(
        n,
        pulse=pulse,
        n_pi=n_pi,
        cavity_linewidth=setup.cavity.fwhm_linewidth,
        jitter_sigma=setup.noise.jitter_fwhm / FWHM_PER_SIGMA,
        background_slope=setup.rabi_background_slope,
        detuning_sigma=setup.noise.total_sigma,
        decay=(emitter.lifetime, emitter.t2),
        shots=shots,
        rng=rng,
    )
    err = np.maximum(err, 1e-4)
    result = None
    if fit:
        result = fit_rabi(n, signal, err)
    return ScanRecord(n, signal, err, shots, "photon_number", result, {"n_pi": n_pi})


def echo_times(t_max: float, points: int) -> np.ndarray:
    return np.linspace(0.0, t_max, points)


def run_echo(
    emitter: Emitter,
    setup: Setup,
    seed: int,
    *,
    duration: float = 1e-6,
    t_max: float = 0.3e-3,
    points: int = 13,
    shots: int = 1_000_000,
    mc_shots: int = 2000,
    stretch: float = 1.0,
    fit: bool = True,
) -> ScanRecord:
    """Echo contrast versus total sequence time with an exponential fit.

    ``shots`` is the number of detected-click trials per phase setting;
    ``mc_shots`` realizations of the static detuning and cavity jitter set
    the mean populations.
    """
    pulse = Pulse(duration)
    chain = setup.chain(emitter.purcell)
    t = echo_times(t_max, points)
    rng = stream(seed, "echo", emitter.id)
    sig = np.empty(points)
    err = np.empty(points)
    for i, ts in enumerate(t):
        sig[i], err[i] = echo_contrast(
            EchoSequence(float(ts)),
            pulse,
            t2=emitter.t2,
            lifetime=emitter.lifetime,
            detuning_sigma=setup.noise.total_sigma,
            jitter_sigma=setup.noise.jitter_fwhm / FWHM_PER_SIGMA,
            cavity_linewidth=setup.cavity.fwhm_linewidth,
            stretch=stretch,
            shots=mc_shots,
            clicks=shots,
            efficiency=chain.total,
            rng=rng,
        )
    result = None
    if fit:
        keep = sig > 0
        result = fit_exponential_decay(t[keep], sig[keep], err[keep])
    return ScanRecord(t, sig, err, shots, "t_seq_s", result, {"t2_configured": emitter.t2})
