"""``simtool``: run one experiment from a config file and write a self-describing output directory."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .analysis import FitConvergenceError, FitError, fit_bunching
from .config import ConfigError, default_config_path, load_config, write_config
from .dynamics import Pulse
from .emitters import purcell_lifetime, sample_ensemble, save_ensemble
from .io import binned, write_json, write_manifest, write_plot
from .protocols import InterrogationPlan, ScanPlan, Setup, pair_emitters, run_echo, run_g2_experiment
from .protocols import run_interrogation, run_rabi, run_spectral_scan

log = logging.getLogger("cavmux")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_FIT = 4

SUBCOMMANDS = ("scan", "g2", "rabi", "echo", "interrogate", "derive-cavity")


def _scaled(n: int, scale: float, minimum: int = 1) -> int:
    return max(minimum, int(round(n * scale)))


def cavity_table(setup: Setup) -> list[tuple[str, float, str]]:
    c = setup.cavity
    chain = setup.chain(c.p_branched)
    return [
        ("finesse", c.finesse, ""),
        ("fsr", c.fsr, "Hz"),
        ("kappa_fwhm", c.fwhm_linewidth, "Hz"),
        ("quality_factor", c.quality_factor, ""),
        ("waist", c.waist, "m"),
        ("mode_volume", c.mode_volume, "m^3"),
        ("purcell_two_level", c.p_tl, ""),
        ("purcell", c.p_branched, ""),
        ("lifetime", purcell_lifetime(c.p_branched, setup.tau0), "s"),
        ("eta_channel", chain.eta_channel, ""),
        ("eta_out", chain.eta_out, ""),
        ("eta_fiber", chain.eta_fiber, ""),
        ("eta_rest", chain.eta_rest, ""),
        ("eta_total", chain.total, ""),
    ]


def _derive(setup: Setup, out=None) -> None:
    out = out or sys.stdout
    rows = cavity_table(setup)
    width = max(len(r[0]) for r in rows)
    for name, value, unit in rows:
        out.write(f"{name:<{width}}  {value:.6g} {unit}".rstrip() + "\n")


def _scan(cfg, setup, seed, args, out: Path) -> list[str]:
    sc = cfg.experiment.scan
    emitters = sample_ensemble(setup.line, setup.window, setup.geometry, seed, p_max=setup.cavity.p_branched,
                               tau0=setup.tau0, t2=setup.t2 if setup.heated else math.inf, mode_radius=setup.mode_radius,
                               orientation=setup.orientation)
    pulse = Pulse.chirped(sc.chirp_span, sc.duration, area=sc.area)
    cavity_f = None if sc.co_tune_cavity else 0.5 * (sc.start + sc.stop)
    plan = ScanPlan.from_range(sc.start, sc.stop, sc.step, pulse, shots=_scaled(sc.shots, args.shots_scale),
                               co_tune_cavity=sc.co_tune_cavity, cavity_frequency=cavity_f)
    spec = run_spectral_scan(emitters, plan, setup, seed)
    spec.to_csv(out / "spectrum.csv")
    save_ensemble(emitters, out / "ensemble.json")
    x, y = binned(spec.frequency, spec.signal, min(2000, spec.frequency.size))
    write_plot(out / "plot_spectrum.json", "fluorescence versus laser frequency",
               {"frequency_hz": x, "signal": y}, {"x": "frequency (Hz)", "y": "clicks per shot"})
    return ["spectrum.csv", "ensemble.json", "plot_spectrum.json"]


def _g2(cfg, setup, seed, args, out: Path) -> list[str]:
    g = cfg.experiment.g2
    bandwidth = args.bandwidth if args.bandwidth is not None else g.bandwidth
    pulses = args.pulses if args.pulses is not None else g.pulses
    pulses = _scaled(pulses, args.shots_scale, minimum=2 * g.max_lag + 1)
    emitter = setup.emitter(0, 0.0, g.emitter_purcell)
    run = run_g2_experiment(emitter, bandwidth, pulses, seed, setup, max_lag=g.max_lag, lag_bin=g.lag_bin,
                            chunk=g.chunk, keep_stream=True)
    h = run.histogram
    h.to_csv(out / "g2.csv")
    run.stream.to_csv(out / "clicks.csv", strip_origin=args.strip_origin)
    record = {
        "bandwidth": bandwidth,
        "pulses": pulses,
        "raw_g0": h.g0,
        "raw_g0_err": float(h.errors[0]),
        "dark_fraction": h.dark_fraction,
        "rescaled_g0": run.rescaled_g0,
        "clicks_per_pulse": h.clicks_per_pulse,
        "background_per_pulse": run.background_per_pulse,
        "mean_excitation": run.mean_excitation,
    }
    files = ["g2.csv", "clicks.csv", "g2_fit.json", "plot_g2.json"]
    try:
        fit = fit_bunching(h)
        record["bunching"] = fit.to_dict()
    except FitConvergenceError:
        write_json(out / "g2_fit.json", record)
        raise
    except FitError as exc:
        # too few correlated clicks for the bunching fit; g2(0) is still reported
        record["bunching"] = None
        record["bunching_error"] = str(exc)
    write_json(out / "g2_fit.json", record)
    write_plot(out / "plot_g2.json", "pulsed photon autocorrelation",
               {"lag_s": h.lag_times, "g2": h.values, "error": h.errors,
                "dark_level": [2.0 * h.dark_fraction - h.dark_fraction**2] * 2,
                "dark_level_lag_s": [0.0, float(h.lag_times[-1])]},
               {"x": "delay (s)", "y": "g2"})
    return files


def _rabi(cfg, setup, seed, args, out: Path) -> list[str]:
    r = cfg.experiment.rabi
    emitter = setup.emitter(0, 0.0, r.emitter_purcell)
    rec = run_rabi(emitter, setup, seed, duration=r.duration, max_photons=r.max_photons, points=r.points,
                   shots=_scaled(r.shots, args.shots_scale, minimum=2))
    rec.to_csv(out / "rabi.csv")
    doc = rec.fit.to_dict()
    doc["n_pi_configured"] = rec.meta["n_pi"]
    write_json(out / "rabi_fit.json", doc)
    model = np.asarray([rec.fit["offset"] + rec.fit["slope"] * n for n in rec.x])
    write_plot(out / "plot_rabi.json", "Rabi oscillation versus intracavity photon number",
               {"photon_number": rec.x, "signal": rec.signal, "error": rec.error, "background": model},
               {"x": "mean intracavity photon number", "y": "excited population"})
    return ["rabi.csv", "rabi_fit.json", "plot_rabi.json"]


def _echo(cfg, setup, seed, args, out: Path) -> list[str]:
    e = cfg.experiment.echo
    emitter = setup.emitter(0, 0.0, e.emitter_purcell)
    rec = run_echo(emitter, setup, seed, duration=e.duration, t_max=e.t_max, points=e.points,
                   shots=_scaled(e.shots, args.shots_scale), mc_shots=_scaled(e.mc_shots, args.shots_scale, 2),
                   stretch=e.stretch)
    rec.to_csv(out / "echo.csv")
    doc = rec.fit.to_dict()
    doc["t2_configured"] = emitter.t2
    write_json(out / "echo_fit.json", doc)
    t = np.linspace(0.0, float(rec.x[-1]), 200)
    write_plot(out / "plot_echo.json", "optical spin-echo contrast",
               {"t_seq_s": rec.x, "contrast": rec.signal, "error": rec.error,
                "fit_t_s": t, "fit": rec.fit["amplitude"] * np.exp(-t / rec.fit["tau"])},
               {"x": "sequence time (s)", "y": "contrast"})
    return ["echo.csv", "echo_fit.json", "plot_echo.json"]


def _interrogate(cfg, setup, seed, args, out: Path) -> list[str]:
    it = cfg.experiment.interrogate
    mode = args.feed_forward or it.feed_forward
    emitters = pair_emitters(setup, it.base_frequency, it.pair_separation, it.emitter_purcell)
    plan = InterrogationPlan(
        targets=tuple(e.freq0 for e in emitters),
        interval=it.interval,
        total=it.total,
        probe=Pulse.from_bandwidth(it.probe_bandwidth),
        feed_forward=mode,
        grid_points=it.grid_points,
        grid_half_span=it.grid_half_span,
        dwell=it.dwell,
        substep=it.substep,
    )
    res = run_interrogation(emitters, plan, setup, seed)
    res.intervals_to_csv(out / "intervals.csv")
    res.aggregate_to_csv(out / "aggregate.csv")
    summary = res.summary()
    summary["feed_forward"] = mode
    summary["fits"] = [{"target": a.target, "mode": a.mode, "fit": a.fit.to_dict() if a.fit else None}
                       for a in res.aggregates]
    write_json(out / "aggregate_fit.json", summary)
    series = {"interval_time_s": np.arange(plan.n_intervals) * plan.interval}
    cs = res.center_series()
    for k in range(cs.shape[1]):
        series[f"center_offset_{k}"] = cs[:, k]
    for a in res.aggregates:
        series[f"{a.mode}_{a.target}_detuning_hz"] = a.x
        series[f"{a.mode}_{a.target}_rate"] = a.rate
    write_plot(out / "plot_interrogation.json", "long-term line centers and aggregate lines", series,
               {"x": "time (s) / detuning (Hz)", "y": "center offset (Hz) / clicks per pulse"})
    return ["intervals.csv", "aggregate.csv", "aggregate_fit.json", "plot_interrogation.json"]


RUNNERS = {"scan": _scan, "g2": _g2, "rabi": _rabi, "echo": _echo, "interrogate": _interrogate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simtool", description=__doc__)
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, default=None, help="TOML run config (default: bundled defaults)")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--out", type=Path, default=None, help="output directory (default: config output_dir)")
        s.add_argument("--shots-scale", type=float, default=1.0, help="scale every Monte-Carlo count")
        s.add_argument("--strip-origin", action="store_true", help="omit the origin column from click streams")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "g2":
            s.add_argument("--bandwidth", type=float, default=None, help="pulse FWHM bandwidth in Hz")
            s.add_argument("--pulses", type=int, default=None)
        if name == "interrogate":
            s.add_argument("--feed-forward", choices=("off", "post", "live"), default=None)
    return p


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.shots_scale <= 0 or not math.isfinite(args.shots_scale):
        return _fail(EXIT_CONFIG, "ConfigError", "--shots-scale must be a positive number")
    try:
        cfg = load_config(args.config or default_config_path())
        setup = Setup.from_config(cfg)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "ConfigError", str(exc))
    except (ValueError, TypeError) as exc:
        return _fail(EXIT_CONFIG, "ConfigError", str(exc))

    if args.subcommand == "derive-cavity":
        _derive(setup)
        return EXIT_OK

    seed = args.seed if args.seed is not None else cfg.seed
    cfg = cfg.model_copy(update={"seed": seed})
    out = args.out or Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = RUNNERS[args.subcommand](cfg, setup, seed, args, out)
        write_config(cfg, out / "config.toml")
        files.append("config.toml")
        extra = {"shots_scale": args.shots_scale, "strip_origin": bool(args.strip_origin)}
        write_manifest(out, subcommand=args.subcommand, cfg=cfg, seed=seed,
                       cavity=setup.cavity.as_dict(), files=files, extra=extra)
    except FitConvergenceError as exc:
        return _fail(EXIT_FIT, "FitConvergenceError", f"{exc} (initial guess {exc.initial})")
    except Exception as exc:  # any module failure becomes a structured runtime error
        log.debug("run failed", exc_info=True)
        return _fail(EXIT_RUNTIME, type(exc).__name__, str(exc))
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
