"""Desk-scale setups and small oracle scenes.

The desk setup is an 8x8 laser grid and an 8x8 SPAD grid over a 1x1 m wall,
a 16x8x16 voxel grid (x, depth, z) with 10 cm voxels, and a 25 cm virtual
wavelength (twice the laser pitch).
"""
from __future__ import annotations

import numpy as np

from .engine import VoxelGrid
from .phasor import WaveParams
from .scene import (Lambertian, Patch, RelayTopology, SceneDescription, TimeAxis,
                    grid_topology)

DESK_BINS = 512


def desk_topology() -> RelayTopology:
    return grid_topology((8, 8), (1.0, 1.0), (8, 8), (1.0, 1.0))


def desk_grid() -> VoxelGrid:
    return VoxelGrid.centered((0.0, 0.65, 0.0), (16, 8, 16), 0.1)


def desk_params() -> WaveParams:
    return WaveParams(0.25)


def desk_time_axis() -> TimeAxis:
    return TimeAxis(85e-12, DESK_BINS, 0.0)


def single_patch_scene(point, area=0.01, topology=None, time_axis=None) -> SceneDescription:
    """One Lambertian patch at ``point`` facing the wall center."""
    patch = Patch.facing(point, (0.0, 0.0, 0.0), area)
    return SceneDescription([patch], topology or desk_topology(),
                            time_axis or desk_time_axis(), max_bounces=1)


def reflector_target_scene(material=None, grid=None, max_bounces=2):
    """Reflector patch turned toward a target patch 40 cm to its right.

    The reflector is tilted 75 degrees away from the wall so most of the
    light it receives is sent toward the target. Returns ``(scene,
    reflector_voxel, target_voxel)``.
    """
    grid = grid or desk_grid()
    reflector_voxel = grid.locate((-0.2, 0.55, 0.0))
    reflector_at = grid.center(reflector_voxel)
    target_at = reflector_at + np.array([0.4, 0.0, 0.0])
    tilt = np.radians(75.0)
    reflector = Patch(reflector_at, (np.sin(tilt), -np.cos(tilt), 0.0), 0.04, 1.0,
                      material or Lambertian())
    target = Patch(target_at, np.array([-1.0, -1.0, 0.0]) / np.sqrt(2.0), 0.04)
    scene = SceneDescription([reflector, target], desk_topology(), desk_time_axis(), max_bounces)
    return scene, reflector_voxel, grid.locate(target_at)
