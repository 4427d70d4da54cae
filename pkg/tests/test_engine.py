import numpy as np
import pytest
from scipy.ndimage import maximum_filter

from vltm import (DirectImage, OccupancyMask, Patch, SceneDescription, TransportMatrix, VoxelGrid,
                  accumulate_in_focus_indirect, assemble_ltm, band_decompose, compute_column,
                  compute_direct, default_wavelength, mask_outer, occupancy_from_direct,
                  simulate_impulse_response)
from vltm.presets import desk_time_axis, desk_topology


# --- voxel grid -------------------------------------------------------------

def test_voxel_grid_index_center_bijection():
    g = VoxelGrid((-1.0, 0.2, 0.5), (3, 4, 5), 0.25)
    assert g.size == 60
    for flat in range(g.size):
        assert g.index(*g.unravel(flat)) == flat
        assert g.locate(g.center(flat)) == flat
    np.testing.assert_allclose(g.centers[7], g.center(7))


def test_voxel_grid_validation():
    with pytest.raises(ValueError):
        VoxelGrid((0, 0, 0), (0, 1, 1), 0.1)
    with pytest.raises(ValueError):
        VoxelGrid((0, 0, 0), (1, 1, 1), 0.0)
    g = VoxelGrid((0, 0, 0), (2, 2, 2), 1.0)
    with pytest.raises(IndexError):
        g.index(2, 0, 0)
    assert g.locate((5, 0, 0)) == -1


def test_default_wavelength_is_four_laser_pitches():
    assert default_wavelength(desk_topology()) == pytest.approx(0.5)
    from vltm.scene import grid_topology
    assert default_wavelength(grid_topology()) == pytest.approx(0.25)


# --- direct image -----------------------------------------------------------

def _empty_h():
    return simulate_impulse_response(SceneDescription([], desk_topology(), desk_time_axis()))


def test_direct_of_empty_scene_is_zero(grid, params):
    assert not compute_direct(_empty_h(), grid, params).values.any()


def test_direct_argmax_is_patch_voxel(single_patch, grid, params):
    h, voxel = single_patch
    assert compute_direct(h, grid, params).argmax() == voxel


def test_direct_two_depths(grid, params):
    voxels = [grid.index(4, 1, 10), grid.index(11, 6, 5)]
    patches = [Patch.facing(grid.center(v), (0, 0, 0), 0.01) for v in voxels]
    h = simulate_impulse_response(SceneDescription(patches, desk_topology(), desk_time_axis(), 1))
    img = compute_direct(h, grid, params)
    vol = img.volume
    local_max = (vol == maximum_filter(vol, size=3)).ravel()
    median = np.median(img.values)
    ratios = [img.values[v] / median for v in voxels]
    assert all(local_max[v] for v in voxels)
    assert min(ratios) > 5
    # regression values measured once on this scene
    assert ratios[0] == pytest.approx(4.666120e6, rel=1e-4)
    assert ratios[1] == pytest.approx(1.983449e4, rel=1e-4)


def test_direct_rejects_grid_behind_wall(params):
    grid = VoxelGrid((-0.1, -0.5, -0.1), (2, 2, 2), 0.1)
    with pytest.raises(ValueError):
        compute_direct(_empty_h(), grid, params)


def test_direct_parallel_matches_serial(single_patch, grid, params):
    h, _ = single_patch
    small = VoxelGrid(grid.origin, (8, 4, 4), grid.pitch)
    a = compute_direct(h, small, params, n_jobs=1).values
    b = compute_direct(h, small, params, n_jobs=3).values
    assert np.array_equal(a, b)


def test_direct_image_validation(grid):
    with pytest.raises(ValueError):
        DirectImage(grid, np.zeros(3))
    with pytest.raises(ValueError):
        DirectImage(grid, -np.ones(grid.size))


# --- columns --------------------------------------------------------------

def test_column_diagonal_matches_direct(reflector_target, grid, params):
    h, a, b = reflector_target
    direct = compute_direct(h, grid, params)
    for v in (a, b, grid.index(3, 5, 12)):
        col = compute_column(h, grid, params, v, targets=[v])
        assert col[v] == pytest.approx(direct.values[v], rel=1e-6)


def test_column_sees_target_from_reflector(reflector_target, grid, params):
    h, a, b = reflector_target
    col = compute_column(h, grid, params, a)
    assert col[b] > 0
    far = grid.index(15, 7, 0)
    assert col[far] < 0.1 * col[b]


def test_column_of_zero_response_is_zero(grid, params):
    assert not compute_column(_empty_h(), grid, params, 5).any()


def test_column_rejects_bad_source_and_gate(reflector_target, grid, params):
    h, _, _ = reflector_target
    with pytest.raises(IndexError):
        compute_column(h, grid, params, grid.size)
    with pytest.raises(ValueError):
        compute_column(h, grid, params, 0, gate_kind="three-bounce")


def test_higher_order_column_is_nonnegative(reflector_target, grid, params):
    h, a, b = reflector_target
    col = compute_column(h, grid, params, a, "higher", targets=[a, b])
    assert np.all(col >= 0) and col[b] > 0


# --- occupancy & masks --------------------------------------------------------

def test_zero_image_gives_empty_mask(grid):
    img = DirectImage(grid, np.zeros(grid.size))
    assert not occupancy_from_direct(img, 0.0).bits.any()
    assert not occupancy_from_direct(img).bits.any()


def test_relative_mask_contains_true_voxel(single_patch, grid, params):
    h, voxel = single_patch
    mask = occupancy_from_direct(compute_direct(h, grid, params))
    assert mask.bits[voxel]
    assert mask.epsilon > 0


def test_threshold_above_max_gives_empty_mask(single_patch, grid, params):
    h, _ = single_patch
    img = compute_direct(h, grid, params)
    assert not occupancy_from_direct(img, float(img.values.max()) * 1.01).bits.any()
    # strict inequality: the max itself is not above epsilon = max
    assert not occupancy_from_direct(img, float(img.values.max())).bits.any()


def test_negative_epsilon_rejected(grid):
    with pytest.raises(ValueError):
        occupancy_from_direct(DirectImage(grid, np.zeros(grid.size)), -1.0)


def _mask(bits):
    bits = np.asarray(bits, bool)
    return OccupancyMask(VoxelGrid((0, 1, 0), (len(bits), 1, 1), 1.0), bits, 0.0)


def test_mask_outer_by_hand():
    m = mask_outer(_mask([1, 0, 1])).toarray()
    assert m.tolist() == [[True, False, True], [False, False, False], [True, False, True]]


def test_mask_outer_all_true_and_empty():
    assert mask_outer(_mask([1, 1, 1, 1])).toarray().all()
    assert not mask_outer(_mask([0, 0, 0])).toarray().any()


# --- in-focus indirect ---------------------------------------------------------

def test_accumulate_with_empty_or_single_mask_is_zero(reflector_target, grid, params):
    h, a, _ = reflector_target
    empty = OccupancyMask(grid, np.zeros(grid.size, bool), 0.0)
    assert not accumulate_in_focus_indirect(h, grid, params, empty).any()
    bits = np.zeros(grid.size, bool)
    bits[a] = True
    assert not accumulate_in_focus_indirect(h, grid, params, OccupancyMask(grid, bits, 0.0)).any()


@pytest.fixture(scope="module")
def reflector_indirect(reflector_target, grid, params):
    h, a, b = reflector_target
    mask = occupancy_from_direct(compute_direct(h, grid, params))
    return accumulate_in_focus_indirect(h, grid, params, mask), mask, a, b


def test_accumulate_is_zero_off_mask(reflector_indirect):
    ii, mask, a, b = reflector_indirect
    assert mask.bits[a] and mask.bits[b]
    assert np.all(ii[~mask.bits] == 0.0)
    assert np.all(ii[mask.bits] >= 0)


def test_accumulate_matches_column_sum(reflector_target, reflector_indirect, grid, params):
    h, _, _ = reflector_target
    ii, mask, _, b = reflector_indirect
    occ = mask.occupied
    expected = 0.0
    for a in occ:
        if a != b:
            expected += compute_column(h, grid, params, a, targets=[b])[b]
    assert ii[b] == pytest.approx(expected, rel=1e-12)


def test_accumulate_peaks_next_to_target(reflector_indirect, grid):
    ii, _, _, b = reflector_indirect
    peak = np.array(grid.unravel(int(np.argmax(ii))))
    assert np.max(np.abs(peak - np.array(grid.unravel(b)))) <= 1


@pytest.mark.xfail(strict=True, reason="at desk scale the peak sits one voxel nearer the wall "
                                       "than the target; see the decisions ledger")
def test_accumulate_peaks_exactly_on_target(reflector_indirect):
    ii, _, _, b = reflector_indirect
    assert int(np.argmax(ii)) == b


# --- assembly ---------------------------------------------------------------

def test_assemble_empty_scene_small_grid_is_zero(params):
    grid = VoxelGrid((-0.15, 0.5, 0.0), (3, 3, 1), 0.1)
    t = assemble_ltm(_empty_h(), grid, params, "all")
    assert t.sources == list(range(9))
    assert not t.to_dense().any()


@pytest.fixture(scope="module")
def reflector_matrices(reflector_target, grid, params):
    h, a, b = reflector_target
    mask = occupancy_from_direct(compute_direct(h, grid, params))
    masked = assemble_ltm(h, grid, params, mask.occupied, mask=mask)
    unmasked = assemble_ltm(h, grid, params, mask.occupied)
    return masked, unmasked, mask


def test_masked_nonzeros_have_occupied_endpoints(reflector_matrices):
    masked, _, mask = reflector_matrices
    assert masked.kind == "masked"
    entries = list(masked.entries())
    assert entries
    for a, b, _ in entries:
        assert mask.bits[a] and mask.bits[b]


def test_masked_energy_not_above_unmasked(reflector_matrices):
    masked, unmasked, _ = reflector_matrices
    assert masked.total_energy() <= unmasked.total_energy()


def test_masked_equals_unmasked_restricted(reflector_matrices):
    masked, unmasked, mask = reflector_matrices
    restricted = unmasked.masked(mask)
    for a in masked.sources:
        np.testing.assert_allclose(masked.columns[a], restricted.columns[a], rtol=1e-12, atol=0)


def test_assembled_diagonal_matches_direct(reflector_target, reflector_matrices, grid, params):
    h, _, _ = reflector_target
    _, unmasked, _ = reflector_matrices
    direct = compute_direct(h, grid, params).values
    for a in unmasked.sources:
        assert unmasked[a, a] == pytest.approx(direct[a], rel=1e-9)


def test_higher_order_matrix_is_separate_with_zero_diagonal(reflector_target, grid, params):
    h, a, b = reflector_target
    t = assemble_ltm(h, grid, params, [a, b], gate_kind="higher")
    assert t.kind == "gated_higher"
    assert t[a, a] == 0.0 and t[b, b] == 0.0
    assert t[a, b] > 0


def test_naive_matrix_kind(reflector_target, grid, params):
    h, a, _ = reflector_target
    assert assemble_ltm(h, grid, params, [a], gate_kind="none").kind == "naive"


def test_assemble_rejects_empty_sources(reflector_target, grid, params):
    h, _, _ = reflector_target
    with pytest.raises(ValueError):
        assemble_ltm(h, grid, params, [])


def test_assemble_parallel_is_bit_identical(reflector_target, grid, params):
    h, a, b = reflector_target
    t1 = assemble_ltm(h, grid, params, [a, b, 3], n_jobs=1)
    t2 = assemble_ltm(h, grid, params, [a, b, 3], n_jobs=3)
    assert np.array_equal(t1.to_dense(), t2.to_dense())


# --- transport matrix & bands --------------------------------------------------

def _random_matrix(seed=0, n_sources=6):
    rng = np.random.default_rng(seed)
    grid = VoxelGrid((0, 0.5, 0), (4, 3, 2), 0.2)
    cols = {int(a): rng.random(grid.size) * (rng.random(grid.size) > 0.3)
            for a in rng.choice(grid.size, n_sources, replace=False)}
    return TransportMatrix(grid, cols)


def test_transport_matrix_validation():
    grid = VoxelGrid((0, 0.5, 0), (2, 1, 1), 0.2)
    with pytest.raises(ValueError):
        TransportMatrix(grid, {0: np.array([1.0, -1.0])})
    with pytest.raises(ValueError):
        TransportMatrix(grid, {0: np.array([1.0])})
    with pytest.raises(ValueError):
        TransportMatrix(grid, {}, kind="dense")


def test_entries_are_sorted_and_nonzero():
    t = _random_matrix()
    entries = list(t.entries())
    assert entries == sorted(entries)
    assert all(v > 0 for _, _, v in entries)


def test_single_unbounded_band_is_identity():
    t = _random_matrix()
    (band,) = band_decompose(t, [(0.0, np.inf)])
    assert np.array_equal(band.to_dense(), t.to_dense())


def test_half_pitch_band_keeps_diagonal_only():
    t = _random_matrix()
    (band,) = band_decompose(t, [(0.0, t.grid.pitch / 2)])
    dense, orig = band.to_dense(), t.to_dense()
    assert np.array_equal(np.diag(dense), np.diag(orig))
    assert not (dense - np.diag(np.diag(dense))).any()


def test_complementary_bands_sum_exactly():
    t = _random_matrix(3)
    near, far = band_decompose(t, [(0.0, 0.35), (0.35, np.inf)])
    assert np.array_equal(near.to_dense() + far.to_dense(), t.to_dense())


def test_overlapping_bands_rejected():
    with pytest.raises(ValueError, match="overlap"):
        band_decompose(_random_matrix(), [(0.0, 0.5), (0.4, 1.0)])


def test_band_gap_drops_entries():
    t = _random_matrix(4)
    (band,) = band_decompose(t, [(0.25, 0.45)])
    assert band.total_energy() < t.total_energy()
