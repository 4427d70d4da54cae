"""Run configuration files (JSON).

Example::

    {
      "scene": "scene.json",
      "impulse": "scene.nlir",
      "output_dir": "out",
      "wave": {"wavelength": 0.25},
      "grid": {"center": [0, 0.65, 0], "counts": [16, 8, 16], "pitch": 0.1},
      "epsilon": {"relative": 0.05},
      "bands": [[0, 0.3], [0.3, 0.8], [0.8, null]],
      "gate": "two-bounce",
      "sources": "all",
      "n_jobs": 1
    }

Relative paths resolve against the config file's directory. ``null`` as an
upper band edge means infinity.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from typing import Optional, Tuple, Union

from .engine import GATE_KINDS, VoxelGrid


class ConfigError(ValueError):
    pass


_TOP_KEYS = {"scene", "impulse", "output_dir", "wave", "grid", "epsilon", "bands", "gate",
             "sources", "n_jobs", "projection_axis"}


@dataclass(frozen=True)
class RunConfig:
    scene: Optional[str] = None
    impulse: Optional[str] = None
    output_dir: str = "."
    wavelength: Optional[float] = None
    gate_sigma: Optional[float] = None
    grid: Optional[VoxelGrid] = None
    epsilon: Optional[float] = None
    relative_epsilon: float = 0.05
    bands: Tuple[Tuple[float, float], ...] = ()
    gate: str = "two-bounce"
    sources: Union[str, Tuple[int, ...]] = "all"
    n_jobs: int = 1
    projection_axis: int = 1

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object")
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def _number(value, key, positive=False, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{key!r} must be a finite number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{key!r} must be > 0, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{key!r} must be >= {minimum}, got {value!r}")
    return float(value)


def _vector(value, key, n=3, integer=False):
    if not isinstance(value, list) or len(value) != n:
        raise ConfigError(f"{key!r} must be a list of {n} numbers, got {value!r}")
    if integer:
        if not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in value):
            raise ConfigError(f"{key!r} must hold integers >= 1, got {value!r}")
        return tuple(value)
    return tuple(_number(v, key) for v in value)


def parse_grid(obj, where="grid") -> VoxelGrid:
    _check_keys(obj, {"center", "origin", "counts", "pitch"}, where)
    if ("center" in obj) == ("origin" in obj):
        raise ConfigError(f"{where} needs exactly one of 'center' or 'origin'")
    for key in ("counts", "pitch"):
        if key not in obj:
            raise ConfigError(f"{where} is missing key {key!r}")
    counts = _vector(obj["counts"], "counts", integer=True)
    pitch = _number(obj["pitch"], "pitch", positive=True)
    if "center" in obj:
        return VoxelGrid.centered(_vector(obj["center"], "center"), counts, pitch)
    return VoxelGrid(_vector(obj["origin"], "origin"), counts, pitch)


def parse_intervals(items, key="bands") -> Tuple[Tuple[float, float], ...]:
    if not isinstance(items, list):
        raise ConfigError(f"{key!r} must be a list of [lo, hi] pairs")
    out = []
    for item in items:
        if not isinstance(item, list) or len(item) != 2:
            raise ConfigError(f"{key!r} entries must be [lo, hi] pairs, got {item!r}")
        lo = _number(item[0], key, minimum=0.0)
        hi = math.inf if item[1] is None else _number(item[1], key)
        if not hi > lo:
            raise ConfigError(f"{key!r} interval [{lo}, {hi}) is empty")
        out.append((lo, hi))
    ordered = sorted(out)
    for (_, hi0), (lo1, _) in zip(ordered, ordered[1:]):
        if lo1 < hi0:
            raise ConfigError(f"{key!r} intervals overlap")
    return tuple(out)


def parse_interval_text(text: str) -> Tuple[Tuple[float, float], ...]:
    """Parse ``"0:0.3,0.3:0.8,0.8:inf"``."""
    pairs = []
    for part in text.split(","):
        bits = part.split(":")
        if len(bits) != 2:
            raise ConfigError(f"'intervals' entry {part!r} is not of the form lo:hi")
        try:
            lo, hi = float(bits[0]), float(bits[1])
        except ValueError:
            raise ConfigError(f"'intervals' entry {part!r} is not numeric") from None
        pairs.append([lo, None if math.isinf(hi) else hi])
    return parse_intervals(pairs, "intervals")


def config_from_dict(obj: dict, base_dir: str = ".") -> RunConfig:
    _check_keys(obj, _TOP_KEYS, "config")

    def path(key):
        value = obj.get(key)
        if value is None:
            return None
        if not isinstance(value, str) or not value:
            raise ConfigError(f"{key!r} must be a non-empty path string")
        return os.path.normpath(os.path.join(base_dir, value))

    kw = {"scene": path("scene"), "impulse": path("impulse")}
    if "output_dir" in obj:
        kw["output_dir"] = path("output_dir")
    else:
        kw["output_dir"] = os.path.normpath(base_dir)

    wave = obj.get("wave", {})
    _check_keys(wave, {"wavelength", "gate_sigma"}, "wave")
    if wave.get("wavelength") is not None:
        kw["wavelength"] = _number(wave["wavelength"], "wavelength", positive=True)
    if wave.get("gate_sigma") is not None:
        kw["gate_sigma"] = _number(wave["gate_sigma"], "gate_sigma", positive=True)

    if "grid" in obj:
        kw["grid"] = parse_grid(obj["grid"])

    eps = obj.get("epsilon", {})
    _check_keys(eps, {"relative", "absolute"}, "epsilon")
    if len(eps) > 1:
        raise ConfigError("'epsilon' takes one of 'relative' or 'absolute'")
    if "absolute" in eps:
        kw["epsilon"] = _number(eps["absolute"], "absolute", minimum=0.0)
    if "relative" in eps:
        kw["relative_epsilon"] = _number(eps["relative"], "relative", minimum=0.0)

    if "bands" in obj:
        kw["bands"] = parse_intervals(obj["bands"])
    if "gate" in obj:
        if obj["gate"] not in GATE_KINDS:
            raise ConfigError(f"'gate' must be one of {sorted(GATE_KINDS)}, got {obj['gate']!r}")
        kw["gate"] = obj["gate"]
    if "sources" in obj:
        src = obj["sources"]
        if src == "all":
            kw["sources"] = "all"
        elif isinstance(src, list) and src and all(
                isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in src):
            kw["sources"] = tuple(src)
        else:
            raise ConfigError(f"'sources' must be \"all\" or a non-empty list of voxel indices, got {src!r}")
    if "n_jobs" in obj:
        n = obj["n_jobs"]
        if isinstance(n, bool) or not isinstance(n, int) or n == 0 or n < -1:
            raise ConfigError(f"'n_jobs' must be a positive integer or -1, got {n!r}")
        kw["n_jobs"] = n
    if "projection_axis" in obj:
        if obj["projection_axis"] not in (0, 1, 2):
            raise ConfigError(f"'projection_axis' must be 0, 1 or 2, got {obj['projection_axis']!r}")
        kw["projection_axis"] = obj["projection_axis"]
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {os.fspath(path)!r}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{os.fspath(path)}: invalid JSON ({exc})") from exc
    return config_from_dict(obj, os.path.dirname(os.path.abspath(path)))
