"""Run configuration: strict TOML schema with defaults for the measured apparatus."""

from __future__ import annotations

import hashlib
import json
import logging
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

import tomli
import tomli_w
from pydantic import BaseModel, ConfigDict, PositiveInt, ValidationError, model_validator

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def preset_key(b_field: float) -> str:
    return f"{float(b_field):.1f}"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CavitySection(_Strict):
    t_out: float = 22e-6
    t_back: float = 20e-6
    loss: float = 27e-6
    roc: float = 155e-6
    l_opt: float = 128e-6
    wavelength: float = 1536.5e-9
    n_host: float = 1.78
    membrane_thickness: float = 19e-6
    p_tl_override: Optional[float] = 362.0
    beta: float = 0.204
    orientation: float = 1.0
    tuning_range: tuple[float, float] = (-20e9, 20e9)
    settle_time: float = 0.5e-3


class EmittersSection(_Strict):
    line_center: float = 0.0
    inhomogeneous_fwhm: float = 414e6
    areal_density: float = 2.6e-5
    window: tuple[float, float] = (5e9, 9e9)
    tau0: float = 11.4e-3
    t2: float = 0.115e-3
    # the stabilization laser warms the sample; without it T2 is lifetime limited
    heated: bool = True
    mode_radius: Optional[float] = None


class DetectionSection(_Strict):
    eta_fiber: float = 0.63
    eta_rest: float = 0.1136
    dark_rate: float = 9.1
    dead_time: float = 50e-9
    repetition_rate: float = 1000.0


class BackgroundSection(_Strict):
    # weakly coupled dopants: cavity photons per pulse, per MHz of pulse bandwidth, at pi area
    per_mhz: float = 0.55
    lifetime: float = 1.0e-3
    rabi_slope: float = 0.0012


class NoisePreset(_Strict):
    fast_sigma: float = 40.75e3
    fast_tau_c: float = 0.080
    slow_sigma: float = 50.0e3
    slow_tau_c: float = 1800.0
    mean_spins: float = 0.3
    max_coupling: float = 0.36e6
    flip_rate_min: float = 1.0 / (48 * 3600.0)
    flip_rate_max: float = 1.0 / (6 * 3600.0)
    jitter_fwhm: float = 6e6
    jitter_correlation_time: Optional[float] = None


def _default_presets() -> dict:
    return {"2.0": NoisePreset(), "6.8": NoisePreset()}


class NoiseSection(_Strict):
    b_field: float = 6.8
    presets: dict[str, NoisePreset] = _default_presets()

    @model_validator(mode="after")
    def _preset_exists(self):
        if preset_key(self.b_field) not in self.presets:
            raise ValueError(
                f"no noise preset for b_field={self.b_field}; available presets: {sorted(self.presets)}"
            )
        return self

    @property
    def active(self) -> NoisePreset:
        return self.presets[preset_key(self.b_field)]


class ScanSection(_Strict):
    start: float = 5e9
    stop: float = 9e9
    step: float = 0.25e6
    chirp_span: float = 0.5e6
    duration: float = 10e-6
    area: float = 9.42477796076938  # 3 pi
    shots: PositiveInt = 200
    co_tune_cavity: bool = True


class G2Section(_Strict):
    bandwidth: float = 0.55e6
    pulses: PositiveInt = 100_000
    max_lag: PositiveInt = 1000
    lag_bin: PositiveInt = 10
    emitter_purcell: float = 74.0
    chunk: PositiveInt = 1_000_000


class RabiSection(_Strict):
    duration: float = 1e-6
    max_photons: float = 250.0
    points: PositiveInt = 101
    shots: PositiveInt = 400
    emitter_purcell: float = 74.0


class EchoSection(_Strict):
    duration: float = 1e-6
    t_max: float = 0.3e-3
    points: PositiveInt = 13
    shots: PositiveInt = 1_000_000
    mc_shots: PositiveInt = 2000
    stretch: float = 1.0
    emitter_purcell: float = 74.0


class InterrogateSection(_Strict):
    base_frequency: float = 7e9
    pair_separation: float = 5.3e6
    emitter_purcell: float = 60.0
    interval: float = 360.0
    total: float = 21600.0
    probe_bandwidth: float = 0.02e6
    grid_points: PositiveInt = 21
    grid_half_span: float = 0.4e6
    dwell: float = 0.1
    substep: float = 0.01
    feed_forward: Literal["off", "post", "live"] = "post"


class ExperimentSection(_Strict):
    scan: ScanSection = ScanSection()
    g2: G2Section = G2Section()
    rabi: RabiSection = RabiSection()
    echo: EchoSection = EchoSection()
    interrogate: InterrogateSection = InterrogateSection()


class RunConfig(_Strict):
    schema_version: int
    seed: Optional[int] = None
    output_dir: str = "runs/default"
    cavity: CavitySection = CavitySection()
    emitters: EmittersSection = EmittersSection()
    detection: DetectionSection = DetectionSection()
    background: BackgroundSection = BackgroundSection()
    noise: NoiseSection = NoiseSection()
    experiment: ExperimentSection = ExperimentSection()

    @model_validator(mode="after")
    def _version(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}, expected {SCHEMA_VERSION}")
        return self

    def content_hash(self) -> str:
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        key = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{key}: {err['msg']} (got {err.get('input')!r})")
    return "; ".join(lines)


def parse_config(data: dict) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None
    if cfg.seed is None:
        log.warning("config has no seed; using deterministic default seed 0")
        cfg = cfg.model_copy(update={"seed": 0})
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomli.loads(path.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data)


def dump_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(cfg.model_dump(mode="json", exclude_none=True))


def write_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(dump_config(cfg))


def default_config_path() -> Path:
    return Path(str(resources.files("cavmux") / "data" / "paper_defaults.toml"))


def paper_defaults() -> RunConfig:
    return load_config(default_config_path())
