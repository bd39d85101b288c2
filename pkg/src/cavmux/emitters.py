"""Ensemble of emitters drawn from the inhomogeneous line."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cavity import CavityGeometry, mode_coupling
from .rng import stream


class EnsembleError(ValueError):
    pass


@dataclass(frozen=True)
class InhomogeneousLine:
    """Lorentzian line; ``areal_density`` is emitters per Hz at the line center."""

    center: float = 0.0
    fwhm: float = 414e6
    areal_density: float = 2.6e-5

    def __post_init__(self):
        if self.fwhm <= 0:
            raise EnsembleError("inhomogeneous FWHM must be positive")
        if self.areal_density < 0 or not math.isfinite(self.areal_density):
            raise EnsembleError("density must be finite and >= 0")

    def density(self, f):
        hw = 0.5 * self.fwhm
        x = np.asarray(f, dtype=float) - self.center
        return self.areal_density * hw**2 / (x**2 + hw**2)

    def _cdf_angle(self, f):
        return np.arctan((np.asarray(f, dtype=float) - self.center) / (0.5 * self.fwhm))

    def expected_count(self, window: tuple[float, float]) -> float:
        lo, hi = window
        hw = 0.5 * self.fwhm
        return float(self.areal_density * hw * (self._cdf_angle(hi) - self._cdf_angle(lo)))

    def sample(self, window: tuple[float, float], n: int, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF draw from the Lorentzian truncated to ``window``."""
        a, b = self._cdf_angle(window[0]), self._cdf_angle(window[1])
        u = rng.uniform(a, b, size=n)
        return self.center + 0.5 * self.fwhm * np.tan(u)


@dataclass
class Emitter:
    id: int
    freq0: float
    position: tuple[float, float]
    purcell: float
    lifetime: float
    t2: float
    noise: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.lifetime <= 0:
            raise EnsembleError("lifetime must be positive")
        if self.purcell < 0:
            raise EnsembleError("Purcell factor must be >= 0")
        if self.t2 > 2 * self.lifetime * (1 + 1e-12):
            raise EnsembleError("t2 cannot exceed twice the lifetime")

    @property
    def homogeneous_fwhm(self) -> float:
        return homogeneous_fwhm(self.t2)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("noise")
        d["position"] = list(self.position)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Emitter":
        d = dict(d)
        d["position"] = tuple(d["position"])
        return cls(**d)


@dataclass(frozen=True)
class ExperimentConfig:
    b_field: float = 6.8
    temperature_note: bool = True
    detuning_window: tuple[float, float] = (5e9, 9e9)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.detuning_window
        if not hi > lo:
            raise EnsembleError("detuning window is empty")


def purcell_lifetime(p: float, tau0: float) -> float:
    """Excited-state lifetime with the decay rate enhanced by ``1 + p``."""
    if p < 0 or tau0 <= 0:
        raise EnsembleError("need p >= 0 and tau0 > 0")
    return tau0 / (1.0 + p)


def channeling_efficiency(p):
    """Fraction of the emission that goes into the cavity mode."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise EnsembleError("Purcell factor must be >= 0")
    out = np.where(np.isinf(p), 1.0, p / (1.0 + np.where(np.isinf(p), 0.0, p)))
    return float(out) if out.ndim == 0 else out


def radiative_fwhm(lifetime: float) -> float:
    if lifetime <= 0:
        raise EnsembleError("lifetime must be positive")
    return 1.0 / (2.0 * math.pi * lifetime)


def homogeneous_fwhm(t2: float) -> float:
    """Linewidth 1/(pi T2). Note this gives 2.77 kHz for T2 = 0.115 ms."""
    return 1.0 / (math.pi * t2)


def sample_ensemble(
    line: InhomogeneousLine,
    window: tuple[float, float],
    geometry: CavityGeometry,
    seed: int,
    *,
    p_max: float = 74.0,
    tau0: float = 11.4e-3,
    t2: float = 0.115e-3,
    mode_radius: float | None = None,
    orientation: float = 1.0,
) -> list[Emitter]:
    """Draw emitters in ``window`` and place them in the cavity mode.

    The count is Poisson with mean equal to the integrated line density.
    Positions are uniform over a cylinder of radius ``mode_radius``
    (default: the mode waist) spanning the membrane thickness.
    """
    lo, hi = window
    if not hi > lo:
        raise EnsembleError("detuning window is empty")
    rng = stream(seed, "ensemble")
    mean = line.expected_count(window)
    n = int(rng.poisson(mean)) if mean > 0 else 0
    if n == 0:
        return []
    freqs = np.sort(line.sample(window, n, rng))
    radius = geometry.waist if mode_radius is None else mode_radius
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, size=n))
    z = rng.uniform(0.0, geometry.membrane_thickness, size=n)
    coupling = np.atleast_1d(mode_coupling((r, z), geometry))
    purcell = p_max * coupling * orientation
    out = []
    for i in range(n):
        life = purcell_lifetime(float(purcell[i]), tau0)
        out.append(
            Emitter(
                id=i,
                freq0=float(freqs[i]),
                position=(float(r[i]), float(z[i])),
                purcell=float(purcell[i]),
                lifetime=life,
                t2=min(t2, 2.0 * life),
            )
        )
    return out


def make_emitter(
    id: int, freq0: float, purcell: float, *, tau0: float = 11.4e-3, t2: float = 0.115e-3
) -> Emitter:
    """A hand-placed emitter at the mode maximum, for targeted experiments."""
    life = purcell_lifetime(purcell, tau0)
    return Emitter(id=id, freq0=freq0, position=(0.0, 0.0), purcell=purcell, lifetime=life, t2=min(t2, 2 * life))


def save_ensemble(emitters: list[Emitter], path) -> None:
    doc = {"emitters": [e.to_dict() for e in emitters]}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_ensemble(path) -> list[Emitter]:
    doc = json.loads(Path(path).read_text())
    return [Emitter.from_dict(d) for d in doc["emitters"]]
