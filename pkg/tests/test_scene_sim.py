import json
import math

import numpy as np
import pytest

from oracles import C, arrival_bin, one_bounce_throughput, two_bounce_throughput, unit
from vltm import (ImpulseResponse, Lambertian, NoiseSpec, Patch, Phong, RelayTopology,
                  SceneDescription, SceneError, TimeAxis, apply_noise, brdf_eval,
                  simulate_impulse_response)
from vltm.scene import grid_topology, load_scene, save_scene, scene_from_dict, scene_to_dict

AXIS = TimeAxis(85e-12, 512)


def one_pair(x_l, x_s):
    return RelayTopology([x_l], [x_s])


# --- types ---------------------------------------------------------------

def test_patch_rejects_non_unit_normal():
    with pytest.raises(SceneError):
        Patch((0, 1, 0), (0, -1.001, 0), 0.01)


@pytest.mark.parametrize("albedo", [-0.1, 1.5])
def test_patch_rejects_albedo_outside_unit_interval(albedo):
    with pytest.raises(SceneError):
        Patch((0, 1, 0), (0, -1, 0), 0.01, albedo)


def test_patch_rejects_nonpositive_area():
    with pytest.raises(SceneError):
        Patch((0, 1, 0), (0, -1, 0), 0.0)


def test_phong_rejects_negative_exponent():
    with pytest.raises(SceneError):
        Phong(-1.0)


def test_max_bounces_must_be_positive():
    with pytest.raises(SceneError):
        SceneDescription([], one_pair((0, 0, 0), (0, 0, 0)), AXIS, max_bounces=0)


def test_topology_rejects_non_coplanar_points():
    with pytest.raises(SceneError):
        RelayTopology([(0, 0, 0), (1, 1e-6, 0)], [(0, 0, 0)])


def test_topology_needs_points():
    with pytest.raises(SceneError):
        RelayTopology(np.zeros((0, 3)), [(0, 0, 0)])


def test_time_axis_validation():
    with pytest.raises(SceneError):
        TimeAxis(0.0, 4)
    with pytest.raises(SceneError):
        TimeAxis(1e-12, 0)


def test_impulse_response_rejects_negative_or_nonfinite():
    topo = one_pair((0, 0, 0), (0, 0, 0))
    ax = TimeAxis(1e-12, 2)
    with pytest.raises(SceneError):
        ImpulseResponse(topo, ax, np.array([[[0.0, -1.0]]]))
    with pytest.raises(SceneError):
        ImpulseResponse(topo, ax, np.array([[[0.0, np.nan]]]))
    with pytest.raises(SceneError):
        ImpulseResponse(topo, ax, np.zeros((1, 1, 3)))


def test_default_grid_topology_is_32_by_32_over_two_meters():
    topo = grid_topology()
    assert topo.n_lasers == topo.n_spads == 1024
    assert np.ptp(topo.laser_points[:, 0]) == pytest.approx(2.0 - 2.0 / 32)
    assert topo.cell_area("laser") == pytest.approx((2.0 / 32) ** 2)


def test_default_bin_width_is_85_ps():
    assert TimeAxis(85e-12).bin_width == 85e-12
    from vltm.scene import DEFAULT_BIN_WIDTH
    assert DEFAULT_BIN_WIDTH == 85e-12


# --- simulate_impulse_response --------------------------------------------

def test_empty_scene_gives_zero_tensor():
    topo = grid_topology((2, 2), (1, 1), (3, 1), (1, 0.1))
    h = simulate_impulse_response(SceneDescription([], topo, AXIS))
    assert h.shape == (4, 3, 512)
    assert not h.data.any()


def test_single_patch_single_bin_closed_form():
    x_l, x_s, x_v = (-0.3, 0.0, 0.1), (0.4, 0.0, -0.2), (0.05, 0.8, 0.15)
    n_v = unit([-0.2, -1.0, 0.1])
    patch = Patch(x_v, n_v, 0.02, 0.7)
    h = simulate_impulse_response(SceneDescription([patch], one_pair(x_l, x_s), AXIS, 1))
    length = math.dist(x_l, x_v) + math.dist(x_v, x_s)
    k = arrival_bin(length, 85e-12)
    nz = np.flatnonzero(h.data[0, 0])
    assert nz.tolist() == [k]
    expected = one_bounce_throughput(x_l, x_v, n_v, x_s, 0.02, 0.7)
    assert h.data[0, 0, k] == pytest.approx(expected, rel=1e-12)


def test_single_patch_bin_respects_origin():
    x_l = x_s = (0.0, 0.0, 0.0)
    patch = Patch((0, 1, 0), (0, -1, 0), 0.01)
    axis = TimeAxis(85e-12, 64, origin=5e-9)
    h = simulate_impulse_response(SceneDescription([patch], one_pair(x_l, x_s), axis, 1))
    assert np.flatnonzero(h.data[0, 0]).tolist() == [arrival_bin(2.0, 85e-12, 5e-9)]
    # unit distances and normal incidence: throughput is area / pi
    assert h.data.sum() == pytest.approx(0.01 / math.pi, rel=1e-12)


def _facing_pair(with_occluder):
    s2 = math.sqrt(0.5)
    a = Patch((-0.5, 1.0, 0.0), (s2, -s2, 0.0), 0.01)
    b = Patch((0.5, 1.0, 0.0), (-s2, -s2, 0.0), 0.02)
    patches = [a, b]
    if with_occluder:
        patches.append(Patch((0.0, 1.0, 0.0), (-1.0, 0.0, 0.0), 0.04))
    topo = one_pair((-0.5, 0.0, 0.0), (0.5, 0.0, 0.0))
    return SceneDescription(patches, topo, AXIS, max_bounces=2)


def test_two_bounce_bin_matches_hand_summed_path():
    h = simulate_impulse_response(_facing_pair(False))
    k = arrival_bin(3.0, 85e-12)
    s2 = math.sqrt(0.5)
    expected = two_bounce_throughput((-0.5, 0, 0), (-0.5, 1, 0), (s2, -s2, 0), 0.01,
                                     (0.5, 1, 0), (-s2, -s2, 0), 0.02, (0.5, 0, 0))
    # every cosine is 1/sqrt(2) or 1 and every segment is 1 m long
    assert expected == pytest.approx(0.01 * 0.02 / (4 * math.pi ** 2), rel=1e-12)
    assert h.data[0, 0, k] == pytest.approx(expected, rel=1e-12)


def test_occluder_between_patches_zeroes_two_bounce_bin():
    h = simulate_impulse_response(_facing_pair(True))
    assert h.data[0, 0, arrival_bin(3.0, 85e-12)] == 0.0
    # the 1-bounce arrivals are still there
    assert h.data[0, 0, arrival_bin(1.0 + math.sqrt(2.0), 85e-12)] > 0


def test_patch_behind_wall_is_rejected():
    patch = Patch((0, -0.5, 0), (0, 1, 0), 0.01)
    with pytest.raises(SceneError, match="not in front"):
        simulate_impulse_response(SceneDescription([patch], one_pair((0, 0, 0), (0, 0, 0)), AXIS))


def test_late_paths_are_dropped_and_counted():
    patch = Patch((0, 1, 0), (0, -1, 0), 0.01)
    axis = TimeAxis(85e-12, 10)
    topo = grid_topology((2, 2), (1, 1), (2, 1), (1, 0.1))
    h = simulate_impulse_response(SceneDescription([patch], topo, axis, 1))
    assert not h.data.any()
    assert h.n_truncated == 8


def test_simulation_is_deterministic(single_patch):
    h, voxel = single_patch
    from vltm.presets import desk_grid, single_patch_scene
    again = simulate_impulse_response(single_patch_scene(desk_grid().center(voxel)))
    assert np.array_equal(h.data, again.data)


# --- brdf_eval ------------------------------------------------------------

N = np.array([0.0, 0.0, 1.0])


def test_lambertian_brdf_is_one_over_pi():
    wi, wo = unit([0.3, 0.1, 1.0]), unit([-0.5, 0.2, 0.4])
    assert brdf_eval(Lambertian(), wi, wo, N) == pytest.approx(1 / math.pi, rel=1e-15)


def test_phong_zero_matches_lambertian_peak():
    wi = unit([0.3, 0.0, 1.0])
    mirror = [-wi[0], -wi[1], wi[2]]
    assert brdf_eval(Phong(0.0), wi, mirror, N) == pytest.approx(1 / math.pi, rel=1e-15)


def test_phong_vanishes_perpendicular_to_mirror():
    wi = unit([1.0, 0.0, 1.0])
    # mirror direction is (-1, 0, 1)/sqrt(2); (1, 0, 1)/sqrt(2) is perpendicular to it
    assert brdf_eval(Phong(10.0), wi, unit([1.0, 0.0, 1.0]), N) == pytest.approx(0.0, abs=1e-30)


def test_phong_peak_normalization():
    wi = unit([0.0, 0.5, 1.0])
    mirror = [0.0, -wi[1], wi[2]]
    assert brdf_eval(Phong(10.0), wi, mirror, N, albedo=0.5) == pytest.approx(0.5 * 12 / (2 * math.pi))


def test_brdf_zero_below_hemisphere():
    assert brdf_eval(Lambertian(), unit([0, 0, -1]), unit([0, 0, 1]), N) == 0.0
    assert brdf_eval(Phong(2.0), unit([0, 0, 1]), unit([1, 0, -0.1]), N) == 0.0


# --- apply_noise ----------------------------------------------------------

def _unit_bins():
    topo = one_pair((0, 0, 0), (0, 0, 0))
    return ImpulseResponse(topo, TimeAxis(1e-12, 8), np.ones((1, 1, 8)))


def test_noise_converges_at_large_scale():
    h = _unit_bins()
    noisy = apply_noise(h, NoiseSpec(1e12, seed=3))
    np.testing.assert_allclose(noisy.data, h.data, rtol=1e-4)


def test_noise_of_zero_is_zero():
    h = ImpulseResponse(one_pair((0, 0, 0), (0, 0, 0)), TimeAxis(1e-12, 5), np.zeros((1, 1, 5)))
    assert not apply_noise(h, NoiseSpec(10.0, 1)).data.any()


def test_noise_is_deterministic_for_fixed_seed():
    topo = one_pair((0, 0, 0), (0, 0, 0))
    h = ImpulseResponse(topo, TimeAxis(1e-12, 1), np.ones((1, 1, 1)))
    a = apply_noise(h, NoiseSpec(10.0, seed=42))
    b = apply_noise(h, NoiseSpec(10.0, seed=42))
    assert np.array_equal(a.data, b.data)


@pytest.mark.parametrize("scale", [0.0, -1.0])
def test_noise_rejects_nonpositive_scale(scale):
    with pytest.raises(SceneError):
        apply_noise(_unit_bins(), NoiseSpec(scale, 0))


def test_scene_noise_is_applied_by_simulator():
    patch = Patch((0, 1, 0), (0, -1, 0), 0.01)
    topo = one_pair((0, 0, 0), (0, 0, 0))
    clean = simulate_impulse_response(SceneDescription([patch], topo, AXIS, 1))
    noisy = simulate_impulse_response(SceneDescription([patch], topo, AXIS, 1, NoiseSpec(1e4, 7)))
    k = arrival_bin(2.0, 85e-12)
    assert noisy.data[0, 0, k] == pytest.approx(clean.data[0, 0, k], rel=0.5)
    assert float(noisy.data[0, 0, k] * 1e4).is_integer()


# --- scene JSON ------------------------------------------------------------

def test_scene_json_round_trip(tmp_path):
    from vltm.presets import reflector_target_scene
    scene, _, _ = reflector_target_scene(Phong(10.0))
    path = tmp_path / "scene.json"
    save_scene(scene, path)
    back = load_scene(path)
    assert scene_to_dict(back) == scene_to_dict(scene)


def test_scene_json_grid_shorthand():
    scene = scene_from_dict({
        "patches": [{"center": [0, 1, 0], "normal": [0, -1, 0], "area": 0.01,
                     "material": {"phong": 5}}],
        "relay": {"laser_grid": {"size": [1, 1], "count": [2, 2]},
                  "spad_points": [[0, 0, 0]]},
        "time_axis": {"bin_count": 64},
        "noise": {"scale": 100, "seed": 1},
    })
    assert scene.relay.n_lasers == 4 and scene.relay.n_spads == 1
    assert scene.patches[0].material == Phong(5.0)
    assert scene.max_bounces == 3
    assert scene.time_axis.bin_width == 85e-12


@pytest.mark.parametrize("bad, key", [
    ({"relay": {"laser_points": [[0, 0, 0]], "spad_points": [[0, 0, 0]]}, "colour": 1}, "colour"),
    ({"relay": {"laser_points": [[0, 0, 0]], "spad_points": [[0, 0, 0]], "wal_normal": [0, 1, 0]}},
     "wal_normal"),
    ({"relay": {"laser_points": [[0, 0, 0]], "spad_points": [[0, 0, 0]]},
      "patches": [{"center": [0, 1, 0], "normal": [0, -1, 0]}]}, "area"),
])
def test_scene_json_errors_name_the_key(bad, key):
    with pytest.raises(SceneError, match=key):
        scene_from_dict(bad)


def test_scene_json_rejects_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(SceneError):
        load_scene(path)


def test_scene_dict_is_json_serializable(tmp_path):
    from vltm.presets import single_patch_scene
    json.dumps(scene_to_dict(single_patch_scene((0, 0.5, 0))))


def test_coincident_patches_do_not_exchange_light():
    p = Patch((0.0, 1.0, 0.0), (0.0, -1.0, 0.0), 0.01)
    topo = one_pair((0.1, 0.0, 0.0), (-0.1, 0.0, 0.0))
    one = simulate_impulse_response(SceneDescription([p], topo, AXIS, 1))
    two = simulate_impulse_response(SceneDescription([p, p], topo, AXIS, 3))
    assert np.array_equal(two.data, 2 * one.data)
