"""Scene, relay-wall topology and impulse-response containers.

Coordinates are meters, times are seconds. The relay wall defaults to the
plane ``y = 0`` with normal ``+y``; the hidden scene lives at ``y > 0``, so
``x`` is horizontal, ``y`` is depth and ``z`` is vertical.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

SPEED_OF_LIGHT = 299792458.0
DEFAULT_BIN_WIDTH = 85e-12
DEFAULT_WALL_NORMAL = (0.0, 1.0, 0.0)

_UNIT_TOL = 1e-9
_PLANE_TOL = 1e-9


class SceneError(ValueError):
    """Invalid scene, topology or time axis."""


def _vec3(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise SceneError(f"{name} must be a finite 3-vector, got {value!r}")
    return arr


@dataclass(frozen=True)
class Lambertian:
    pass


@dataclass(frozen=True)
class Phong:
    exponent: float

    def __post_init__(self):
        if not self.exponent >= 0:
            raise SceneError(f"Phong exponent must be >= 0, got {self.exponent}")


Material = Union[Lambertian, Phong]


@dataclass(frozen=True, eq=False)
class Patch:
    """Point-like planar scatterer carrying an area weight.

    For visibility tests the patch is a disk of the same area centered at
    ``center`` and perpendicular to ``normal``.
    """

    center: np.ndarray
    normal: np.ndarray
    area: float
    albedo: float = 1.0
    material: Material = field(default_factory=Lambertian)

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center, "center"))
        normal = _vec3(self.normal, "normal")
        if abs(np.linalg.norm(normal) - 1.0) > _UNIT_TOL:
            raise SceneError(f"patch normal must have unit length, got |n|={np.linalg.norm(normal)!r}")
        object.__setattr__(self, "normal", normal)
        if not self.area > 0:
            raise SceneError(f"patch area must be > 0, got {self.area}")
        if not 0.0 <= self.albedo <= 1.0:
            raise SceneError(f"patch albedo must be in [0, 1], got {self.albedo}")

    @property
    def radius(self) -> float:
        return float(np.sqrt(self.area / np.pi))

    @classmethod
    def facing(cls, center, target, area, albedo=1.0, material=None) -> "Patch":
        """Patch at ``center`` whose normal points at ``target``."""
        center = np.asarray(center, dtype=float)
        n = np.asarray(target, dtype=float) - center
        n = n / np.linalg.norm(n)
        return cls(center, n, area, albedo, material or Lambertian())


@dataclass(frozen=True, eq=False)
class TimeAxis:
    """Uniform histogram axis.

    Bin ``m`` collects arrivals in ``[origin + m*dt, origin + (m+1)*dt)`` and is
    sampled at its center, so flooring an arrival time is the same as
    snapping it to the nearest bin center.
    """

    bin_width: float = DEFAULT_BIN_WIDTH
    bin_count: int = 512
    origin: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.bin_width) and self.bin_width > 0):
            raise SceneError(f"bin_width must be > 0, got {self.bin_width}")
        if int(self.bin_count) != self.bin_count or self.bin_count < 1:
            raise SceneError(f"bin_count must be an integer >= 1, got {self.bin_count}")
        object.__setattr__(self, "bin_count", int(self.bin_count))
        if not np.isfinite(self.origin):
            raise SceneError("origin must be finite")

    @property
    def centers(self) -> np.ndarray:
        return self.origin + (np.arange(self.bin_count) + 0.5) * self.bin_width

    def bin_index(self, t):
        """Bin holding arrival time ``t`` (may fall outside ``[0, bin_count)``)."""
        return np.floor((np.asarray(t) - self.origin) / self.bin_width).astype(np.int64)

    def __eq__(self, other):
        if not isinstance(other, TimeAxis):
            return NotImplemented
        return (self.bin_width, self.bin_count, self.origin) == (
            other.bin_width, other.bin_count, other.origin)


def _in_plane_basis(normal: np.ndarray):
    helper = np.array([0.0, 0.0, 1.0]) if abs(normal[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(helper, normal)
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    return u, v


def _grid_pitch(coords: np.ndarray) -> Optional[float]:
    values = np.unique(np.round(coords, 12))
    if values.size < 2:
        return None
    return float((values[-1] - values[0]) / (values.size - 1))


@dataclass(frozen=True, eq=False)
class RelayTopology:
    laser_points: np.ndarray
    spad_points: np.ndarray
    wall_normal: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_WALL_NORMAL))

    def __post_init__(self):
        lasers = np.asarray(self.laser_points, dtype=float).reshape(-1, 3)
        spads = np.asarray(self.spad_points, dtype=float).reshape(-1, 3)
        normal = _vec3(self.wall_normal, "wall_normal")
        if len(lasers) < 1 or len(spads) < 1:
            raise SceneError("topology needs at least one laser point and one SPAD point")
        if not (np.all(np.isfinite(lasers)) and np.all(np.isfinite(spads))):
            raise SceneError("relay points must be finite")
        if abs(np.linalg.norm(normal) - 1.0) > _UNIT_TOL:
            raise SceneError("wall_normal must have unit length")
        offsets = np.concatenate([lasers, spads]) @ normal
        if np.ptp(offsets) > _PLANE_TOL:
            raise SceneError(f"relay points are not coplanar (spread {np.ptp(offsets):.3g} m)")
        object.__setattr__(self, "laser_points", lasers)
        object.__setattr__(self, "spad_points", spads)
        object.__setattr__(self, "wall_normal", normal)

    @property
    def n_lasers(self) -> int:
        return len(self.laser_points)

    @property
    def n_spads(self) -> int:
        return len(self.spad_points)

    @property
    def wall_offset(self) -> float:
        return float(self.laser_points[0] @ self.wall_normal)

    def signed_distance(self, points) -> np.ndarray:
        """Height of ``points`` above the wall plane along its normal."""
        return np.asarray(points, dtype=float) @ self.wall_normal - self.wall_offset

    def cell_area(self, which: str) -> float:
        """Riemann weight of one sample of the laser or SPAD grid.

        Estimated from the spacing of the distinct in-plane coordinates; a
        1D row uses its pitch squared and a single point gets unit weight.
        """
        pts = self.laser_points if which == "laser" else self.spad_points
        u, v = _in_plane_basis(self.wall_normal)
        pu, pv = _grid_pitch(pts @ u), _grid_pitch(pts @ v)
        if pu is None and pv is None:
            return 1.0
        pu = pv if pu is None else pu
        pv = pu if pv is None else pv
        return pu * pv

    def __eq__(self, other):
        if not isinstance(other, RelayTopology):
            return NotImplemented
        return (np.array_equal(self.laser_points, other.laser_points)
                and np.array_equal(self.spad_points, other.spad_points)
                and np.array_equal(self.wall_normal, other.wall_normal))


def grid_points(center, size, count, normal=DEFAULT_WALL_NORMAL) -> np.ndarray:
    """Cell-centered ``count[0] x count[1]`` grid of wall points.

    ``size`` is the full width/height covered by the cells, so a 32x32 grid
    over 2x2 m has a 6.25 cm pitch.
    """
    center = _vec3(center, "center")
    normal = _vec3(normal, "normal")
    nu, nv = (int(c) for c in count)
    su, sv = (float(s) for s in size)
    if nu < 1 or nv < 1:
        raise SceneError(f"grid counts must be >= 1, got {count}")
    u, v = _in_plane_basis(normal)
    if abs(normal[1]) > 0.9:
        # wall facing +-y: keep u along x and v along z for readable layouts
        u, v = np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0])
    cu = ((np.arange(nu) + 0.5) / nu - 0.5) * su
    cv = ((np.arange(nv) + 0.5) / nv - 0.5) * sv
    uu, vv = np.meshgrid(cu, cv, indexing="ij")
    return center + uu.reshape(-1, 1) * u + vv.reshape(-1, 1) * v


def grid_topology(laser_count=(32, 32), laser_size=(2.0, 2.0), spad_count=(32, 32),
                  spad_size=(2.0, 2.0), center=(0.0, 0.0, 0.0),
                  normal=DEFAULT_WALL_NORMAL) -> RelayTopology:
    """Co-centered laser and SPAD grids on one wall (defaults: 32x32 over 2x2 m)."""
    return RelayTopology(grid_points(center, laser_size, laser_count, normal),
                         grid_points(center, spad_size, spad_count, normal),
                         np.asarray(normal, dtype=float))


@dataclass(frozen=True)
class NoiseSpec:
    scale: float
    seed: int = 0


@dataclass(frozen=True, eq=False)
class SceneDescription:
    patches: Sequence[Patch]
    relay: RelayTopology
    time_axis: TimeAxis = field(default_factory=TimeAxis)
    max_bounces: int = 3
    noise: Optional[NoiseSpec] = None

    def __post_init__(self):
        object.__setattr__(self, "patches", tuple(self.patches))
        if int(self.max_bounces) != self.max_bounces or self.max_bounces < 1:
            raise SceneError(f"max_bounces must be an integer >= 1, got {self.max_bounces}")


@dataclass(eq=False)
class ImpulseResponse:
    """Histogram tensor ``H(x_l, x_s, t)`` of shape ``(K_p, K_i, bin_count)``.

    ``n_truncated`` counts simulated paths that arrived outside the time axis
    and were dropped; it is not persisted.
    """

    topology: RelayTopology
    time_axis: TimeAxis
    data: np.ndarray
    n_truncated: int = 0

    def __post_init__(self):
        data = np.asarray(self.data)
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(float)
        expected = (self.topology.n_lasers, self.topology.n_spads, self.time_axis.bin_count)
        if data.shape != expected:
            raise SceneError(f"impulse data has shape {data.shape}, expected {expected}")
        if not np.all(np.isfinite(data)):
            raise SceneError("impulse data contains non-finite values")
        if np.any(data < 0):
            raise SceneError("impulse data contains negative values")
        self.data = data

    @property
    def shape(self):
        return self.data.shape

    def scaled(self, factor: float) -> "ImpulseResponse":
        return ImpulseResponse(self.topology, self.time_axis, self.data * factor)

    def delayed(self, n_bins: int) -> "ImpulseResponse":
        """Same axis, histogram contents moved ``n_bins`` later (tail dropped)."""
        out = np.zeros_like(self.data)
        if n_bins < self.time_axis.bin_count:
            out[..., n_bins:] = self.data[..., :self.time_axis.bin_count - n_bins]
        return ImpulseResponse(self.topology, self.time_axis, out)

    def __add__(self, other: "ImpulseResponse") -> "ImpulseResponse":
        if self.topology != other.topology or self.time_axis != other.time_axis:
            raise SceneError("cannot add impulse responses with different geometry")
        return ImpulseResponse(self.topology, self.time_axis, self.data + other.data,
                               self.n_truncated + other.n_truncated)


# --- JSON scene files -------------------------------------------------------

def _material_from_json(spec) -> Material:
    if spec is None or spec == "lambertian":
        return Lambertian()
    if isinstance(spec, dict) and set(spec) == {"phong"}:
        return Phong(float(spec["phong"]))
    raise SceneError(f"unknown material {spec!r}; use \"lambertian\" or {{\"phong\": exponent}}")


def _material_to_json(material: Material):
    if isinstance(material, Phong):
        return {"phong": material.exponent}
    return "lambertian"


def _check_keys(obj: dict, allowed: set, where: str):
    if not isinstance(obj, dict):
        raise SceneError(f"{where} must be an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise SceneError(f"unknown key {unknown[0]!r} in {where}")


def _points_from_json(relay: dict, prefix: str, normal) -> np.ndarray:
    points_key, grid_key = f"{prefix}_points", f"{prefix}_grid"
    if (points_key in relay) == (grid_key in relay):
        raise SceneError(f"relay needs exactly one of {points_key!r} or {grid_key!r}")
    if points_key in relay:
        return np.asarray(relay[points_key], dtype=float).reshape(-1, 3)
    grid = relay[grid_key]
    _check_keys(grid, {"center", "size", "count"}, grid_key)
    return grid_points(grid.get("center", (0.0, 0.0, 0.0)), grid["size"], grid["count"], normal)


def scene_from_dict(obj: dict) -> SceneDescription:
    """Build a scene from the JSON structure documented in the README."""
    try:
        return _scene_from_dict(obj)
    except KeyError as exc:
        raise SceneError(f"scene is missing required key {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SceneError):
            raise
        raise SceneError(f"malformed scene: {exc}") from exc


def _scene_from_dict(obj: dict) -> SceneDescription:
    _check_keys(obj, {"patches", "relay", "time_axis", "max_bounces", "noise"}, "scene")
    relay = obj.get("relay")
    if relay is None:
        raise SceneError("scene is missing 'relay'")
    _check_keys(relay, {"laser_points", "laser_grid", "spad_points", "spad_grid", "wall_normal"}, "relay")
    normal = relay.get("wall_normal", DEFAULT_WALL_NORMAL)
    topology = RelayTopology(_points_from_json(relay, "laser", normal),
                             _points_from_json(relay, "spad", normal), normal)
    patches = []
    for i, p in enumerate(obj.get("patches", [])):
        _check_keys(p, {"center", "normal", "area", "albedo", "material"}, f"patches[{i}]")
        patches.append(Patch(p["center"], p["normal"], float(p["area"]),
                             float(p.get("albedo", 1.0)), _material_from_json(p.get("material"))))
    ta = obj.get("time_axis", {})
    _check_keys(ta, {"bin_width", "bin_count", "origin"}, "time_axis")
    time_axis = TimeAxis(float(ta.get("bin_width", DEFAULT_BIN_WIDTH)),
                         ta.get("bin_count", 512), float(ta.get("origin", 0.0)))
    noise = None
    if obj.get("noise") is not None:
        _check_keys(obj["noise"], {"scale", "seed"}, "noise")
        noise = NoiseSpec(float(obj["noise"]["scale"]), int(obj["noise"].get("seed", 0)))
    return SceneDescription(patches, topology, time_axis, obj.get("max_bounces", 3), noise)


def scene_to_dict(scene: SceneDescription) -> dict:
    out = {
        "patches": [
            {"center": p.center.tolist(), "normal": p.normal.tolist(), "area": p.area,
             "albedo": p.albedo, "material": _material_to_json(p.material)}
            for p in scene.patches
        ],
        "relay": {
            "laser_points": scene.relay.laser_points.tolist(),
            "spad_points": scene.relay.spad_points.tolist(),
            "wall_normal": scene.relay.wall_normal.tolist(),
        },
        "time_axis": {"bin_width": scene.time_axis.bin_width,
                      "bin_count": scene.time_axis.bin_count,
                      "origin": scene.time_axis.origin},
        "max_bounces": scene.max_bounces,
    }
    if scene.noise is not None:
        out["noise"] = {"scale": scene.noise.scale, "seed": scene.noise.seed}
    return out


def load_scene(path) -> SceneDescription:
    with open(Path(path)) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SceneError(f"{path}: invalid JSON ({exc})") from exc
    return scene_from_dict(obj)


def save_scene(scene: SceneDescription, path) -> None:
    with open(Path(path), "w") as fh:
        json.dump(scene_to_dict(scene), fh, indent=2)
