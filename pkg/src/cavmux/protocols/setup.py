"""Everything a protocol needs to know about the apparatus, in one place."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from ..cavity import CavityDerived, CavityGeometry, MirrorSet, cavity_transmission, derive
from ..detection import EfficiencyChain
from ..dynamics import Pulse
from ..emitters import Emitter, InhomogeneousLine, channeling_efficiency, make_emitter
from ..noise import NoiseParams


@dataclass(frozen=True)
class Setup:
    mirrors: MirrorSet = MirrorSet(22e-6, 20e-6, 27e-6)
    geometry: CavityGeometry = CavityGeometry()
    beta: float = 0.204
    p_tl_override: float | None = 362.0
    orientation: float = 1.0
    tau0: float = 11.4e-3
    t2: float = 0.115e-3
    heated: bool = True
    line: InhomogeneousLine = InhomogeneousLine()
    window: tuple[float, float] = (5e9, 9e9)
    mode_radius: float | None = None
    eta_fiber: float = 0.63
    eta_rest: float = 0.1136
    dark_rate: float = 9.1
    dead_time: float = 50e-9
    repetition_rate: float = 1000.0
    background_per_mhz: float = 0.55
    background_lifetime: float = 1.0e-3
    rabi_background_slope: float = 0.0012
    noise: NoiseParams = field(default_factory=NoiseParams)
    tuning_range: tuple[float, float] = (-20e9, 20e9)
    settle_time: float = 0.5e-3

    @property
    def cavity(self) -> CavityDerived:
        return derive(self.mirrors, self.geometry, self.beta, self.p_tl_override)

    @property
    def period(self) -> float:
        return 1.0 / self.repetition_rate

    @property
    def after_cavity(self) -> float:
        return self.cavity.eta_out * self.eta_fiber * self.eta_rest

    def chain(self, purcell: float) -> EfficiencyChain:
        return EfficiencyChain(channeling_efficiency(purcell), self.cavity.eta_out, self.eta_fiber, self.eta_rest)

    def emitter_t2(self, lifetime: float) -> float:
        return min(self.t2, 2.0 * lifetime) if self.heated else 2.0 * lifetime

    def emitter(self, id: int, freq0: float, purcell: float) -> Emitter:
        e = make_emitter(id, freq0, purcell, tau0=self.tau0, t2=self.t2)
        return replace(e, t2=self.emitter_t2(e.lifetime))

    def background_per_pulse(self, pulse: Pulse) -> float:
        """Detected weak-dopant background per pulse; scales with pulse energy."""
        energy = (pulse.bandwidth_fwhm / 1e6) * (pulse.area / math.pi) ** 2
        return self.background_per_mhz * energy * self.after_cavity

    def dark_per_pulse(self) -> float:
        return self.dark_rate * self.period

    def n_pi(self, purcell: float, pulse: Pulse) -> float:
        """Mean intracavity photon number of a pi pulse with this envelope.

        Uses ``P = 4 g^2 / (kappa gamma0)`` with the free-space decay rate
        ``gamma0 = 1 / tau0`` and Rabi frequency ``2 g sqrt(N)``.
        """
        if purcell <= 0:
            return math.inf
        kappa = 2.0 * math.pi * self.cavity.fwhm_linewidth
        g = math.sqrt(purcell * kappa / self.tau0 / 4.0)
        unit = replace(pulse, area=1.0)
        envelope_integral = 1.0 / unit.peak_rabi()
        return (math.pi / (2.0 * g * envelope_integral)) ** 2

    def transmission(self, detuning):
        return cavity_transmission(detuning, self.cavity.fwhm_linewidth)

    def with_noise(self, noise: NoiseParams) -> "Setup":
        return replace(self, noise=noise)

    @classmethod
    def from_config(cls, cfg) -> "Setup":
        c, e, d, b = cfg.cavity, cfg.emitters, cfg.detection, cfg.background
        preset = cfg.noise.active
        return cls(
            mirrors=MirrorSet(c.t_out, c.t_back, c.loss),
            geometry=CavityGeometry(c.roc, c.l_opt, c.wavelength, c.n_host, c.membrane_thickness),
            beta=c.beta,
            p_tl_override=c.p_tl_override,
            orientation=c.orientation,
            tau0=e.tau0,
            t2=e.t2,
            heated=e.heated,
            line=InhomogeneousLine(e.line_center, e.inhomogeneous_fwhm, e.areal_density),
            window=tuple(e.window),
            mode_radius=e.mode_radius,
            eta_fiber=d.eta_fiber,
            eta_rest=d.eta_rest,
            dark_rate=d.dark_rate,
            dead_time=d.dead_time,
            repetition_rate=d.repetition_rate,
            background_per_mhz=b.per_mhz,
            background_lifetime=b.lifetime,
            rabi_background_slope=b.rabi_slope,
            noise=NoiseParams(**preset.model_dump()),
            tuning_range=tuple(c.tuning_range),
            settle_time=c.settle_time,
        )
