"""Input checks shared by the estimator and the CLI."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .engine import GATE_KINDS, VoxelGrid
from .phasor import WaveParams
from .scene import ImpulseResponse


def check_impulse(h) -> ImpulseResponse:
    if not isinstance(h, ImpulseResponse):
        raise TypeError(f"expected an ImpulseResponse, got {type(h).__name__}")
    return h


def check_grid(grid, h: Optional[ImpulseResponse] = None) -> VoxelGrid:
    if not isinstance(grid, VoxelGrid):
        raise TypeError(f"expected a VoxelGrid, got {type(grid).__name__}")
    if h is not None and np.any(h.topology.signed_distance(grid.centers) <= 0):
        raise ValueError("voxel grid must lie in front of the relay wall")
    return grid


def check_voxel(grid: VoxelGrid, voxel) -> int:
    """Flat index from a flat int or an ``(ix, iy, iz)`` triple."""
    if np.ndim(voxel) == 1:
        return grid.index(*(int(v) for v in voxel))
    v = int(voxel)
    if not 0 <= v < grid.size:
        raise IndexError(f"voxel {v} outside grid of {grid.size}")
    return v


def check_gate_kind(kind: str) -> str:
    if kind not in GATE_KINDS:
        raise ValueError(f"unknown gate kind {kind!r}; expected one of {sorted(GATE_KINDS)}")
    return kind


def check_wave(wavelength, gate_sigma=None) -> WaveParams:
    return WaveParams(float(wavelength), None if gate_sigma is None else float(gate_sigma))
