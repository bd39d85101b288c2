"""Run directories: manifest, fit records and plot-data files."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import __version__


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def write_manifest(out: Path, *, subcommand: str, cfg, seed: int, cavity: dict, files: list[str], extra: dict | None = None) -> Path:
    doc = {
        "package_version": __version__,
        "subcommand": subcommand,
        "config_hash": cfg.content_hash(),
        "schema_version": cfg.schema_version,
        "seed": seed,
        "cavity": cavity,
        "files": sorted(files),
    }
    if extra:
        doc.update(extra)
    path = Path(out) / "manifest.json"
    write_json(path, doc)
    return path


def binned(x, y, bins: int):
    """Mean of ``y`` in ``bins`` equal-width bins of ``x``; empty bins dropped."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0:
        return np.empty(0), np.empty(0)
    edges = np.linspace(x.min(), x.max(), bins + 1)
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, bins - 1)
    n = np.bincount(idx, minlength=bins)
    s = np.bincount(idx, weights=y, minlength=bins)
    keep = n > 0
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers[keep], s[keep] / n[keep]


def write_plot(path, title: str, series: dict, labels: dict | None = None) -> None:
    """Pre-binned series for one figure analog, ready for any plotting tool."""
    write_json(path, {"title": title, "labels": labels or {}, "series": series})
