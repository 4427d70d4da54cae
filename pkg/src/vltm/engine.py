"""Virtual light transport matrix: direct image, columns, masks, bands.

Every matrix entry is one confocal-style imaging evaluation: illumination
focused at a source voxel ``x_a``, camera focused at a target voxel ``x_b`` and
a gate centered at the time of flight ``<x_l, x_a, x_b, x_s>``. The diagonal
(``a == b``) degenerates to the 3-vertex direct gate.

The kernel here evaluates exactly the same sum as
:func:`vltm.phasor.image_value`, but only over nonzero histogram bins and
without materializing illumination signals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import sparse

from .phasor import GAUSSIAN, HIGHER_ORDER, WaveParams, gate_values
from .scene import SPEED_OF_LIGHT, ImpulseResponse, RelayTopology

GATE_KINDS = {"two-bounce": GAUSSIAN, "higher": HIGHER_ORDER, "none": "none"}
MATRIX_KINDS = ("naive", "gated_2bounce", "gated_higher", "masked")

# complex elements per kernel block; bounds memory, not results
_BLOCK_ELEMENTS = 1 << 21


@dataclass(frozen=True)
class VoxelGrid:
    """Axis-aligned voxel grid; ``origin`` is the minimum corner.

    Flat indices run in C order over ``(nx, ny, nz)``.
    """

    origin: Tuple[float, float, float]
    counts: Tuple[int, int, int]
    pitch: float

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        counts = tuple(int(v) for v in self.counts)
        if len(origin) != 3 or len(counts) != 3:
            raise ValueError("voxel grid origin and counts must have three entries")
        if min(counts) < 1:
            raise ValueError(f"voxel counts must be >= 1, got {counts}")
        if not self.pitch > 0:
            raise ValueError(f"voxel pitch must be > 0, got {self.pitch}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "pitch", float(self.pitch))

    @classmethod
    def centered(cls, center, counts, pitch) -> "VoxelGrid":
        counts = tuple(int(c) for c in counts)
        origin = np.asarray(center, float) - 0.5 * pitch * np.asarray(counts)
        return cls(tuple(origin), counts, pitch)

    @property
    def size(self) -> int:
        nx, ny, nz = self.counts
        return nx * ny * nz

    def index(self, ix, iy, iz) -> int:
        for i, n in zip((ix, iy, iz), self.counts):
            if not 0 <= i < n:
                raise IndexError(f"voxel ({ix}, {iy}, {iz}) outside grid {self.counts}")
        return int(np.ravel_multi_index((ix, iy, iz), self.counts))

    def unravel(self, flat) -> Tuple[int, int, int]:
        return tuple(int(v) for v in np.unravel_index(flat, self.counts))

    def center(self, flat) -> np.ndarray:
        return np.asarray(self.origin) + (np.asarray(self.unravel(flat)) + 0.5) * self.pitch

    @property
    def centers(self) -> np.ndarray:
        idx = np.indices(self.counts).reshape(3, -1).T
        return np.asarray(self.origin) + (idx + 0.5) * self.pitch

    def locate(self, point) -> int:
        """Flat index of the voxel containing ``point``, or -1 if outside."""
        rel = (np.asarray(point, float) - np.asarray(self.origin)) / self.pitch
        ijk = np.floor(rel).astype(int)
        if np.any(ijk < 0) or np.any(ijk >= np.asarray(self.counts)):
            return -1
        return int(np.ravel_multi_index(tuple(ijk), self.counts))


@dataclass
class DirectImage:
    grid: VoxelGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.size,):
            raise ValueError(f"direct image has {self.values.shape} values, grid has {self.grid.size}")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("direct image values must be finite and >= 0")

    @property
    def volume(self) -> np.ndarray:
        return self.values.reshape(self.grid.counts)

    def argmax(self) -> int:
        return int(np.argmax(self.values))


@dataclass
class OccupancyMask:
    grid: VoxelGrid
    bits: np.ndarray
    epsilon: float

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.shape != (self.grid.size,):
            raise ValueError("mask length does not match the voxel grid")

    @property
    def occupied(self) -> np.ndarray:
        return np.flatnonzero(self.bits)


@dataclass
class TransportMatrix:
    """``K_v x K_v`` matrix stored as dense columns keyed by source voxel.

    ``T[a, b]`` is the light imaged at ``b`` when illumination focuses at ``a``;
    columns that were never computed read as zero.
    """

    grid: VoxelGrid
    columns: Dict[int, np.ndarray] = field(default_factory=dict)
    kind: str = "gated_2bounce"

    def __post_init__(self):
        if self.kind not in MATRIX_KINDS:
            raise ValueError(f"unknown matrix kind {self.kind!r}")
        cols = {}
        for a in sorted(self.columns):
            col = np.asarray(self.columns[a], dtype=float)
            if col.shape != (self.grid.size,):
                raise ValueError(f"column {a} has shape {col.shape}")
            if not np.all(np.isfinite(col)) or np.any(col < 0):
                raise ValueError(f"column {a} has negative or non-finite entries")
            cols[int(a)] = col
        self.columns = cols

    @property
    def sources(self) -> List[int]:
        return sorted(self.columns)

    def __getitem__(self, ab) -> float:
        a, b = ab
        col = self.columns.get(int(a))
        return 0.0 if col is None else float(col[b])

    def to_dense(self) -> np.ndarray:
        """Dense array indexed ``[a, b]``."""
        out = np.zeros((self.grid.size, self.grid.size))
        for a, col in self.columns.items():
            out[a] = col
        return out

    def entries(self):
        """Nonzero ``(a, b, value)`` triples in ascending ``(a, b)`` order."""
        for a in self.sources:
            col = self.columns[a]
            for b in np.flatnonzero(col):
                yield a, int(b), float(col[b])

    def total_energy(self) -> float:
        return float(sum(col.sum() for col in self.columns.values()))

    def masked(self, mask: OccupancyMask) -> "TransportMatrix":
        """Copy with every entry outside ``mask (x) mask`` set to zero."""
        cols = {a: np.where(mask.bits, col, 0.0) if mask.bits[a] else np.zeros_like(col)
                for a, col in self.columns.items()}
        return TransportMatrix(self.grid, cols, "masked")


# --- imaging kernel -----------------------------------------------------------

@dataclass(frozen=True)
class _Events:
    laser: np.ndarray
    spad: np.ndarray
    time: np.ndarray
    weight: np.ndarray  # H * exp(i w t)


def _events(h: ImpulseResponse, params: WaveParams) -> _Events:
    li, si, mi = np.nonzero(h.data)
    t = h.time_axis.centers[mi]
    return _Events(li, si, t, h.data[li, si, mi] * np.exp(1j * params.omega * t))


def _distances(points, relay_points):
    diff = points[:, None, :] - relay_points[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _lens(r, params):
    phase = params.k * r
    return (np.cos(phase) - 1j * np.sin(phase)) / r


def _focused_values(events: _Events, topology: RelayTopology, src, dst, params: WaveParams,
                    gate: str, gate_shift: float = 0.0) -> np.ndarray:
    """Image intensities for rows of (source, target) focus pairs.

    ``src`` and ``dst`` are ``(K, 3)`` arrays (``src`` may be a single point).
    Rows are independent, so blocking does not change any value.
    """
    dst = np.atleast_2d(np.asarray(dst, float))
    src = np.atleast_2d(np.asarray(src, float))
    src = np.broadcast_to(src, dst.shape)
    n = len(dst)
    out = np.zeros(n)
    n_events = len(events.time)
    if n_events == 0 or n == 0:
        return out
    weight = topology.cell_area("laser") * topology.cell_area("spad")
    rows = max(1, _BLOCK_ELEMENTS // n_events)
    ev_chunk = n_events if n_events <= _BLOCK_ELEMENTS else _BLOCK_ELEMENTS
    for start in range(0, n, rows):
        sl = slice(start, min(n, start + rows))
        r_l = _distances(src[sl], topology.laser_points)
        r_s = _distances(dst[sl], topology.spad_points)
        d = np.sqrt(np.sum((dst[sl] - src[sl]) ** 2, axis=-1))
        lens_l, lens_s = _lens(r_l, params), _lens(r_s, params)
        total = np.zeros(len(r_l), dtype=complex)
        for e0 in range(0, n_events, ev_chunk):
            es = slice(e0, e0 + ev_chunk)
            li, si = events.laser[es], events.spad[es]
            center = (r_l[:, li] + d[:, None] + r_s[:, si]) / SPEED_OF_LIGHT + gate_shift
            g = gate_values(gate, center, params.gate_sigma, events.time[es])
            total += np.sum(g * events.weight[es] * lens_l[:, li] * lens_s[:, si], axis=-1)
        out[sl] = np.abs(weight * total) ** 2
    return out


def _gate(gate_kind: str) -> str:
    try:
        return GATE_KINDS[gate_kind]
    except KeyError:
        raise ValueError(f"unknown gate kind {gate_kind!r}; "
                         f"expected one of {sorted(GATE_KINDS)}") from None


def _check_grid(grid: VoxelGrid, topology: RelayTopology):
    if np.any(topology.signed_distance(grid.centers) <= 0):
        raise ValueError("voxel grid must lie in front of the relay wall")


def _parallel_rows(fn, chunks, n_jobs):
    if n_jobs in (None, 1) or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(fn)(c) for c in chunks)


# --- operations -------------------------------------------------------------

def compute_direct(h: ImpulseResponse, grid: VoxelGrid, params: WaveParams,
                   gate_shift: float = 0.0, n_jobs: Optional[int] = None,
                   _events_cache: Optional[_Events] = None) -> DirectImage:
    """Diagonal of the LTM: illumination and camera focused at each voxel.

    Each voxel is imaged with a Gaussian gate at its 3-vertex time of flight,
    delayed by ``gate_shift`` seconds.
    """
    _check_grid(grid, h.topology)
    events = _events_cache or _events(h, params)
    centers = grid.centers
    chunks = np.array_split(np.arange(grid.size), max(1, min(grid.size, 4 * (n_jobs or 1))))
    parts = _parallel_rows(
        lambda idx: _focused_values(events, h.topology, centers[idx], centers[idx], params,
                                    GAUSSIAN, gate_shift),
        chunks, n_jobs)
    return DirectImage(grid, np.concatenate(parts))


def compute_column(h: ImpulseResponse, grid: VoxelGrid, params: WaveParams, source: int,
                   gate_kind: str = "two-bounce", targets: Optional[Sequence[int]] = None,
                   gate_shift: float = 0.0, _events_cache: Optional[_Events] = None) -> np.ndarray:
    """Column ``T[source, :]``: light imaged at every voxel when focusing at ``source``.

    ``gate_kind`` is 'two-bounce' (Gaussian at the 4-vertex time), 'higher'
    (complement gate) or 'none' (ungated). Only ``targets`` are evaluated
    when given; other entries stay zero.
    """
    if not 0 <= source < grid.size:
        raise IndexError(f"source voxel {source} outside grid of {grid.size}")
    _check_grid(grid, h.topology)
    gate = _gate(gate_kind)
    events = _events_cache or _events(h, params)
    centers = grid.centers
    idx = np.arange(grid.size) if targets is None else np.asarray(targets, dtype=int)
    col = np.zeros(grid.size)
    col[idx] = _focused_values(events, h.topology, centers[source], centers[idx], params,
                               gate, gate_shift)
    return col


def occupancy_from_direct(img: DirectImage, epsilon: Optional[float] = None,
                          relative: float = 0.05) -> OccupancyMask:
    """Voxels whose direct value strictly exceeds the threshold.

    The threshold is ``epsilon`` when given, else ``relative * max(values)``.
    """
    if epsilon is None:
        if relative < 0:
            raise ValueError("relative threshold must be >= 0")
        epsilon = relative * float(img.values.max(initial=0.0))
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    return OccupancyMask(img.grid, img.values > epsilon, float(epsilon))


def mask_outer(mask: OccupancyMask) -> sparse.csr_array:
    """Boolean ``K_v x K_v`` outer product of the mask with itself."""
    m = sparse.csr_array(mask.bits.reshape(-1, 1))
    return (m @ m.T).astype(bool)


def accumulate_in_focus_indirect(h: ImpulseResponse, grid: VoxelGrid, params: WaveParams,
                                 mask: OccupancyMask, gate_kind: str = "two-bounce",
                                 n_jobs: Optional[int] = None) -> np.ndarray:
    """Indirect light at each occupied voxel summed over all other occupied sources.

    Non-occupied voxels are exactly 0. Sources are summed in ascending index
    order.
    """
    occupied = mask.occupied
    out = np.zeros(grid.size)
    if len(occupied) < 2:
        return out
    events = _events(h, params)
    cols = _parallel_rows(
        lambda a: compute_column(h, grid, params, int(a), gate_kind, occupied,
                                 _events_cache=events),
        list(occupied), n_jobs)
    for a, col in zip(occupied, cols):
        contrib = col.copy()
        contrib[a] = 0.0
        out += contrib
    return out


def assemble_ltm(h: ImpulseResponse, grid: VoxelGrid, params: WaveParams,
                 sources: Iterable[int] | str = "all", gate_kind: str = "two-bounce",
                 mask: Optional[OccupancyMask] = None, n_jobs: Optional[int] = None) -> TransportMatrix:
    """Compute the requested columns of the virtual LTM.

    With ``mask``, unoccupied sources are skipped and unoccupied targets are
    never imaged. The diagonal comes from :func:`compute_direct` for gated
    two-bounce and naive matrices; higher-order matrices hold off-diagonal
    entries only.
    """
    gate = _gate(gate_kind)
    source_list = list(range(grid.size)) if isinstance(sources, str) and sources == "all" \
        else sorted({int(s) for s in sources})
    if not source_list:
        raise ValueError("assemble_ltm needs at least one source")
    for s in source_list:
        if not 0 <= s < grid.size:
            raise IndexError(f"source voxel {s} outside grid of {grid.size}")
    targets = None
    if mask is not None:
        source_list = [s for s in source_list if mask.bits[s]]
        targets = mask.occupied
    kind = {"gaussian": "gated_2bounce", "higher": "gated_higher", "none": "naive"}[gate]
    if mask is not None:
        kind = "masked"

    events = _events(h, params)
    cols = _parallel_rows(
        lambda a: compute_column(h, grid, params, a, gate_kind, targets, _events_cache=events),
        source_list, n_jobs)
    columns = dict(zip(source_list, cols))
    if source_list:
        centers = grid.centers[source_list]
        if gate == HIGHER_ORDER:
            diag = np.zeros(len(source_list))
        else:
            diag = _focused_values(events, h.topology, centers, centers, params,
                                   GAUSSIAN if gate == GAUSSIAN else "none")
        for a, v in zip(source_list, diag):
            columns[a][a] = v
    return TransportMatrix(grid, columns, kind)


def _check_intervals(intervals):
    iv = [(float(lo), float(hi)) for lo, hi in intervals]
    for lo, hi in iv:
        if not (lo >= 0 and hi > lo):
            raise ValueError(f"invalid band interval [{lo}, {hi})")
    ordered = sorted(iv)
    for (lo0, hi0), (lo1, _) in zip(ordered, ordered[1:]):
        if lo1 < hi0:
            raise ValueError(f"band intervals [{lo0}, {hi0}) and [{lo1}, ...) overlap")
    return iv


def band_decompose(t: TransportMatrix, intervals) -> List[TransportMatrix]:
    """Split ``t`` by source-target distance into one matrix per interval.

    Each ``[d_min, d_max)`` interval (meters) keeps the entries whose voxel
    centers are that far apart; entries outside all intervals are dropped.
    """
    iv = _check_intervals(intervals)
    centers = t.grid.centers
    bands = [dict() for _ in iv]
    for a in t.sources:
        col = t.columns[a]
        dist = np.sqrt(np.sum((centers - centers[a]) ** 2, axis=-1))
        for k, (lo, hi) in enumerate(iv):
            bands[k][a] = np.where((dist >= lo) & (dist < hi), col, 0.0)
    return [TransportMatrix(t.grid, cols, t.kind) for cols in bands]


def default_wavelength(topology: RelayTopology) -> float:
    """Four times the laser grid pitch."""
    return 4.0 * math.sqrt(topology.cell_area("laser"))
