"""Static properties of a plano-concave Fabry-Perot resonator.

All functions are pure; frequencies are in Hz and lengths in meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


class CavityError(ValueError):
    """Invalid resonator parameters."""


@dataclass(frozen=True)
class MirrorSet:
    """Round-trip loss budget, as fractions (22 ppm -> 22e-6)."""

    t_out: float
    t_back: float
    loss: float

    def __post_init__(self):
        for name in ("t_out", "t_back", "loss"):
            if getattr(self, name) < 0:
                raise CavityError(f"{name} must be >= 0")

    @property
    def total(self) -> float:
        return self.t_out + self.t_back + self.loss


@dataclass(frozen=True)
class CavityGeometry:
    roc: float = 155e-6
    l_opt: float = 128e-6
    wavelength: float = 1536.5e-9
    n_host: float = 1.78
    membrane_thickness: float = 19e-6

    def __post_init__(self):
        if not 0 < self.l_opt < self.roc:
            raise CavityError("plano-concave resonator needs 0 < l_opt < roc")
        if self.wavelength <= 0:
            raise CavityError("wavelength must be > 0")

    @property
    def waist(self) -> float:
        """Gaussian mode waist at the flat mirror."""
        w0_sq = (self.wavelength / math.pi) * math.sqrt(self.l_opt * (self.roc - self.l_opt))
        return math.sqrt(w0_sq)

    @property
    def mode_volume(self) -> float:
        return 0.25 * math.pi * self.waist**2 * self.l_opt

    @property
    def rayleigh_range(self) -> float:
        # inside the host, where the emitters sit
        return math.pi * self.waist**2 * self.n_host / self.wavelength

    @property
    def frequency(self) -> float:
        return SPEED_OF_LIGHT / self.wavelength

    def beam_radius(self, z):
        return self.waist * np.sqrt(1.0 + (np.asarray(z, dtype=float) / self.rayleigh_range) ** 2)


@dataclass(frozen=True)
class CavityDerived:
    finesse: float
    fwhm_linewidth: float
    fsr: float
    quality_factor: float
    waist: float
    mode_volume: float
    p_tl: float
    p_branched: float
    eta_out: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def compute_finesse(mirrors: MirrorSet) -> float:
    """Finesse as 2*pi over the total fractional round-trip loss."""
    total = mirrors.total
    if total == 0:
        raise CavityError("infinite finesse: total round-trip loss is zero")
    if total > 2 * math.pi:
        raise CavityError("total loss fraction must not exceed 2*pi")
    return 2 * math.pi / total


def free_spectral_range(l_opt: float) -> float:
    return SPEED_OF_LIGHT / (2.0 * l_opt)


def compute_linewidth(finesse: float, l_opt: float) -> float:
    """FWHM cavity linewidth in Hz."""
    if finesse <= 0 or l_opt <= 0:
        raise CavityError("finesse and l_opt must be positive")
    return free_spectral_range(l_opt) / finesse


def compute_purcell_tl(quality: float, mode_volume: float, wavelength: float, n_host: float) -> float:
    """Two-level Purcell factor at the field maximum."""
    if min(quality, mode_volume, wavelength, n_host) <= 0:
        raise CavityError("all Purcell inputs must be positive")
    return 3.0 / (4.0 * math.pi**2) * (wavelength / n_host) ** 3 * quality / mode_volume


def apply_branching(p_tl: float, beta: float) -> float:
    if not 0.0 <= beta <= 1.0:
        raise CavityError("branching ratio must lie in [0, 1]")
    return beta * p_tl


def outcoupling_efficiency(mirrors: MirrorSet) -> float:
    """Probability that an intracavity photon leaves through the flat mirror."""
    if mirrors.total <= 0:
        raise CavityError("total loss must be positive")
    return mirrors.t_out / mirrors.total


def loss_channels(mirrors: MirrorSet) -> tuple[float, float, float]:
    """Escape probabilities (outcoupler, back mirror, absorption+scatter); they sum to 1."""
    total = mirrors.total
    if total <= 0:
        raise CavityError("total loss must be positive")
    out = mirrors.t_out / total
    back = mirrors.t_back / total
    return out, back, 1.0 - out - back


def mode_coupling(position, geometry: CavityGeometry):
    """Relative field intensity at ``position = (r, z)``.

    ``r`` is the radial offset from the cavity axis and ``z`` the axial
    distance from a standing-wave antinode located at the waist. Accepts
    scalars or arrays.
    """
    r, z = position
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    w = geometry.beam_radius(z)
    k = 2.0 * math.pi * geometry.n_host / geometry.wavelength
    out = np.exp(-2.0 * r**2 / w**2) * np.cos(k * z) ** 2
    return float(out) if out.ndim == 0 else out


def node_offset(geometry: CavityGeometry) -> float:
    """Axial distance from an antinode to the adjacent node."""
    return geometry.wavelength / (4.0 * geometry.n_host)


def derive(
    mirrors: MirrorSet,
    geometry: CavityGeometry,
    beta: float = 0.204,
    p_tl_override: float | None = None,
) -> CavityDerived:
    """Collect every derived resonator quantity in one record."""
    finesse = compute_finesse(mirrors)
    kappa = compute_linewidth(finesse, geometry.l_opt)
    fsr = free_spectral_range(geometry.l_opt)
    quality = geometry.frequency / kappa
    p_tl = p_tl_override
    if p_tl is None:
        p_tl = compute_purcell_tl(quality, geometry.mode_volume, geometry.wavelength, geometry.n_host)
    return CavityDerived(
        finesse=finesse,
        fwhm_linewidth=kappa,
        fsr=fsr,
        quality_factor=quality,
        waist=geometry.waist,
        mode_volume=geometry.mode_volume,
        p_tl=p_tl,
        p_branched=apply_branching(p_tl, beta),
        eta_out=outcoupling_efficiency(mirrors),
    )


def cavity_transmission(detuning, linewidth: float):
    """Lorentzian intracavity intensity relative to resonance."""
    x = 2.0 * np.asarray(detuning, dtype=float) / linewidth
    return 1.0 / (1.0 + x**2)
