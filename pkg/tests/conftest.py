import pytest

from vltm import simulate_impulse_response
from vltm.presets import (desk_grid, desk_params, desk_topology, reflector_target_scene,
                          single_patch_scene)


@pytest.fixture(scope="session")
def grid():
    return desk_grid()


@pytest.fixture(scope="session")
def params():
    return desk_params()


@pytest.fixture(scope="session")
def topology():
    return desk_topology()


@pytest.fixture(scope="session")
def single_patch(grid):
    """Impulse response of one patch at a known voxel, and that voxel."""
    voxel = grid.index(7, 3, 9)
    h = simulate_impulse_response(single_patch_scene(grid.center(voxel)))
    return h, voxel


@pytest.fixture(scope="session")
def reflector_target(grid):
    """``(h, reflector_voxel, target_voxel)`` for the two-patch indirect scene."""
    scene, a, b = reflector_target_scene(grid=grid)
    return simulate_impulse_response(scene), a, b


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[number])
