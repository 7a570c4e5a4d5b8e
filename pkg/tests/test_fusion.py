import numpy as np
import pytest

from foveasim.cellgrid import FoveaSpec, make_foveated_grid, make_uniform_grid, shift_fovea
from foveasim.detector import DetectorConfig, acquire
from foveasim.fusion import (
    MotionMask,
    apply_motion_mask,
    linear_constraints,
    psf_probe,
    weighted_average,
    _stack_constraints,
)
from foveasim.guidance import DifferenceMapStack
from foveasim.hadamard import build_basis
from foveasim.reconstruct import SubFrame, reconstruct_subframe
from foveasim.scene import DynamicScene, make_static_scene


def measure_subframes(scene_field, grids, t0=0.0):
    scene = DynamicScene(scene_field)
    cfg = DetectorConfig()
    out = []
    t = t0
    for g in grids:
        rec = acquire(scene, g, build_basis(g.n_cells), cfg, t)
        t = rec.t_end + g.n_cells * cfg.pair_overhead
        out.append(reconstruct_subframe(rec))
    return out


def constant_subframe(grid, value, t_start=0.0, t_end=0.1):
    cells = np.full(grid.n_cells, float(value)) * grid.cell_area
    hr = np.full(grid.shape, float(value))
    return SubFrame(grid=grid, cell_values=cells, hr_image=hr, t_start=t_start, t_end=t_end)


def shifted_grids(base, count):
    return [shift_fovea(base, k % 4, variant=k) for k in range(count)]


SMALL_FOVEA = make_foveated_grid(64, 64, 256, [FoveaSpec((32, 32), 8, 2)], seed=13)


# ---------------------------------------------------------------- weighted average

def test_single_subframe_identity():
    sf = constant_subframe(make_uniform_grid(8, 8, 4), 0.3)
    out = weighted_average([sf])
    assert np.array_equal(out.hr_image, sf.hr_image)
    assert np.all(out.contributing_frames == 1)


def test_weighted_mean_mixed_areas():
    # value 10 from a 4-pixel cell and 20 from a 16-pixel cell fuse to
    # (10/4 + 20/16) / (1/4 + 1/16) = 12
    a = constant_subframe(make_uniform_grid(8, 8, 4), 10.0, 0.0, 0.1)
    b = constant_subframe(make_uniform_grid(8, 8, 2), 20.0, 0.1, 0.2)
    out = weighted_average([a, b])
    assert np.allclose(out.hr_image, 12.0)
    assert np.all(out.contributing_frames == 2)
    assert np.allclose(out.exposure_map, 0.2)


def test_equal_weights_inside_fovea():
    scene = make_static_scene(64, 64, seed=1).background
    subs = measure_subframes(scene, shifted_grids(SMALL_FOVEA, 4))
    out = weighted_average(subs)
    # interior pixels where every sub-frame has a full 2x2 cell
    inner = (slice(26, 38), slice(26, 38))
    stack = np.stack([s.hr_image[inner] for s in subs])
    assert np.allclose(out.hr_image[inner], stack.mean(axis=0), atol=1e-12)


def test_conservation_constant_scene():
    subs = [
        constant_subframe(make_uniform_grid(8, 8, 4), 0.7, 0.0, 0.1),
        constant_subframe(make_uniform_grid(8, 8, 2), 0.7, 0.1, 0.2),
    ]
    for mode in ("area-inverse", "newest-biased", "best-resolution"):
        out = weighted_average(subs, mode)
        assert np.allclose(out.hr_image, 0.7, atol=1e-12)


def test_best_resolution_keeps_smallest_cells():
    a = constant_subframe(make_uniform_grid(8, 8, 4), 10.0, 0.0, 0.1)  # area 4
    b = constant_subframe(make_uniform_grid(8, 8, 2), 20.0, 0.1, 0.2)  # area 16
    out = weighted_average([a, b], "best-resolution")
    assert np.allclose(out.hr_image, 10.0)


def test_newest_biased_downweights_old():
    a = constant_subframe(make_uniform_grid(8, 8, 4), 0.0, 0.0, 0.1)
    b = constant_subframe(make_uniform_grid(8, 8, 4), 1.0, 0.2, 0.3)  # newest
    out = weighted_average([a, b], "newest-biased", recency=0.5)
    # weights 1.0 (new) and 0.5 (old): (1*1 + 0*0.5)/1.5
    assert np.allclose(out.hr_image, 1.0 / 1.5)


def test_weighted_average_validates_input():
    with pytest.raises(ValueError):
        weighted_average([])
    with pytest.raises(ValueError):
        weighted_average([
            constant_subframe(make_uniform_grid(8, 8, 4), 1.0),
            constant_subframe(make_uniform_grid(16, 16, 4), 1.0),
        ])
    with pytest.raises(ValueError):
        weighted_average([constant_subframe(make_uniform_grid(8, 8, 4), 1.0)], "median")


def test_exposure_at_least_one_frame_everywhere():
    scene = make_static_scene(64, 64, seed=2).background
    subs = measure_subframes(scene, shifted_grids(SMALL_FOVEA, 8))
    out = weighted_average(subs)
    assert out.exposure_map.min() >= subs[0].t_end - subs[0].t_start


# ---------------------------------------------------------------- linear constraints

def test_single_subframe_lambda_zero_returns_subframe():
    scene = make_static_scene(64, 64, seed=3).background
    subs = measure_subframes(scene, [SMALL_FOVEA])
    out = linear_constraints(subs, smoothing_weight=0.0)
    assert out.rank_flagged  # 256 constraints, 4096 unknowns
    assert np.max(np.abs(out.hr_image - subs[0].hr_image)) < 1e-6


def test_resolution_doubling_matches_pinv_oracle():
    scene = make_static_scene(64, 64, seed=4).background
    subs = measure_subframes(scene, shifted_grids(SMALL_FOVEA, 4))
    opts = {"tol": 1e-12, "iter_lim": 40000}
    out = linear_constraints(subs, smoothing_weight=0.0, solver_options=opts)
    a, rhs = _stack_constraints(subs, [np.zeros(s.grid.n_cells, bool) for s in subs])
    oracle = np.linalg.lstsq(a.toarray(), rhs, rcond=None)[0].reshape(64, 64)
    rmse_vs_oracle = np.sqrt(np.mean((out.hr_image - oracle) ** 2))
    assert rmse_vs_oracle < 1e-6
    # fovea interior recovered exactly: four half-cell-shifted lattices
    # jointly pin every hr-pixel of the fovea
    f = SMALL_FOVEA.fovea[0]
    x0, y0, x1, y1 = f.rect()
    inner = (slice(y0 + 2, y1 - 2), slice(x0 + 2, x1 - 2))
    rmse_fovea = np.sqrt(np.mean((out.hr_image[inner] - scene[inner]) ** 2))
    assert rmse_fovea < 1e-6


def test_lambda_limit_converges_to_weighted_average():
    scene = make_static_scene(32, 32, seed=5).background
    grid = make_foveated_grid(32, 32, 64, [FoveaSpec((16, 16), 4, 2)], seed=2)
    subs = measure_subframes(scene, [shift_fovea(grid, k, variant=k) for k in range(4)])
    wa = weighted_average(subs)
    out = linear_constraints(subs, smoothing_weight=1e6, solver_options={"tol": 1e-14, "iter_lim": 20000})
    assert np.max(np.abs(out.hr_image - wa.hr_image)) < 1e-6


def test_consistent_residuals_below_tolerance():
    scene = make_static_scene(64, 64, seed=6).background
    subs = measure_subframes(scene, shifted_grids(SMALL_FOVEA, 6))
    out = linear_constraints(subs, smoothing_weight=0.0, solver_options={"tol": 1e-12, "iter_lim": 20000})
    a, rhs = _stack_constraints(subs, [np.zeros(s.grid.n_cells, bool) for s in subs])
    res = a @ out.hr_image.reshape(-1) - rhs
    assert np.max(np.abs(res)) < 1e-6


def test_monotone_improvement_and_beats_weighted_average():
    scene = make_static_scene(64, 64, seed=7).background
    grids = shifted_grids(SMALL_FOVEA, 36)
    subs = measure_subframes(scene, grids)
    opts = {"tol": 1e-10, "iter_lim": 20000}
    counts = [4, 12, 20, 36]
    lc_rmse = []
    for c in counts:
        out = linear_constraints(subs[:c], smoothing_weight=0.0, solver_options=opts)
        lc_rmse.append(np.sqrt(np.mean((out.hr_image - scene) ** 2)))
        wa = weighted_average(subs[:c])
        wa_rmse = np.sqrt(np.mean((wa.hr_image - scene) ** 2))
        assert lc_rmse[-1] <= wa_rmse + 1e-9
    for a_, b_ in zip(lc_rmse, lc_rmse[1:]):
        assert b_ <= a_ * (1 + 1e-6) + 1e-12


def test_solver_matches_pinv_on_small_system():
    # <= 4096 unknowns: iterative minimum-norm solution vs dense pseudo-inverse
    scene = make_static_scene(32, 32, seed=8).background
    grid = make_foveated_grid(32, 32, 64, [FoveaSpec((16, 16), 4, 2)], seed=3)
    subs = measure_subframes(scene, [shift_fovea(grid, k, variant=k) for k in range(3)])
    out = linear_constraints(subs, smoothing_weight=0.0, solver_options={"tol": 1e-13, "iter_lim": 40000})
    a, rhs = _stack_constraints(subs, [np.zeros(s.grid.n_cells, bool) for s in subs])
    oracle = np.linalg.pinv(a.toarray()) @ rhs
    rmse = np.sqrt(np.mean((out.hr_image.reshape(-1) - oracle) ** 2))
    assert rmse < 1e-6


def test_flagged_rows_have_zero_influence_bitwise():
    scene = make_static_scene(32, 32, seed=9).background
    grid = make_foveated_grid(32, 32, 64, [FoveaSpec((16, 16), 4, 2)], seed=4)
    subs = measure_subframes(scene, [shift_fovea(grid, k, variant=k) for k in range(4)])
    flags = [np.zeros(64, dtype=bool) for _ in subs]
    flags[1][10:20] = True
    mask = MotionMask(flags=tuple(flags))
    out1 = linear_constraints(subs, mask, smoothing_weight=0.1)
    # perturb the flagged cells' values arbitrarily
    sf = subs[1]
    cells = sf.cell_values.copy()
    cells[10:20] += 123.456
    hacked = SubFrame(
        grid=sf.grid, cell_values=cells,
        hr_image=(cells / sf.grid.cell_area)[sf.grid.assignment_flat].reshape(sf.grid.shape),
        t_start=sf.t_start, t_end=sf.t_end,
    )
    subs2 = [subs[0], hacked, subs[2], subs[3]]
    out2 = linear_constraints(subs2, mask, smoothing_weight=0.1)
    assert out1.hr_image.tobytes() == out2.hr_image.tobytes()
    wa1 = weighted_average(subs, motion_mask=mask)
    wa2 = weighted_average(subs2, motion_mask=mask)
    assert wa1.hr_image.tobytes() == wa2.hr_image.tobytes()


def test_all_rows_deleted_rejected():
    sf = constant_subframe(make_uniform_grid(8, 8, 4), 1.0)
    mask = MotionMask(flags=(np.ones(16, dtype=bool),))
    with pytest.raises(ValueError):
        linear_constraints([sf], mask)


# ---------------------------------------------------------------- motion mask

def synthetic_subframes(n, period=0.125, blip_gap=0.03125, duration=0.1024):
    grid = make_uniform_grid(32, 32, 4)
    subs = []
    t = 0.0
    for k in range(n):
        if k and k % 4 == 0:
            t += blip_gap
        subs.append(constant_subframe(grid, 0.5, t, t + duration))
        t += period
    return subs


def test_no_changes_no_flags():
    stack = DifferenceMapStack((16, 16))
    subs = synthetic_subframes(8)
    mask = apply_motion_mask(stack, subs, max_exposure=4.0)
    assert not mask.flagged_any()


def test_change_flags_older_overlapping_cells():
    stack = DifferenceMapStack((16, 16))
    diff = np.zeros((16, 16), dtype=bool)
    diff[0, 0] = True  # blip pixel covering the field's top-left corner
    subs = synthetic_subframes(8)
    t_change = subs[4].t_start + 1e-6
    stack.update(diff, t_change)
    mask = apply_motion_mask(stack, subs, max_exposure=4.0)
    grid = subs[0].grid
    corner_cell = grid.assignment[0, 0]
    for k, sf in enumerate(subs):
        expect = sf.t_start < t_change
        assert mask.flags[k][corner_cell] == expect
        others = np.delete(mask.flags[k], corner_cell)
        assert not others.any()


def test_exposure_cap_keeps_newest_32():
    stack = DifferenceMapStack((16, 16))
    subs = synthetic_subframes(40)
    mask = apply_motion_mask(stack, subs, max_exposure=4.0)
    fully_flagged = [k for k, f in enumerate(mask.flags) if f.all()]
    assert fully_flagged == list(range(8))  # all but the newest 32


# ---------------------------------------------------------------- PSF probe

def test_psf_impulse_in_fovea_recovered_point():
    grid = make_foveated_grid(64, 64, 256, [FoveaSpec((32, 32), 8, 2)], seed=21)
    grids = [shift_fovea(grid, k, variant=k) for k in range(4)]
    out = psf_probe(grids, "linear", impulse_spacing=8,
                    solver_options={"tol": 1e-12, "iter_lim": 40000})
    # the impulse at (28, 28) sits in the interior of the fovea rect [24, 40);
    # inside the fovea the 4-shift system pins every pixel, so the recovered
    # impulse occupies a single hr-pixel
    img = out.hr_image
    assert img[28, 28] > 1 - 1e-6
    patch = img[25:32, 25:32].copy()
    patch[3, 3] = 0.0
    assert np.max(np.abs(patch)) < 1e-6


def test_psf_weighted_average_spreads_over_cell():
    grid = make_foveated_grid(64, 64, 256, [FoveaSpec((32, 32), 8, 2)], seed=22)
    grids = [shift_fovea(grid, k, variant=k) for k in range(4)]
    out = psf_probe(grids, "weighted", impulse_spacing=16)
    img = out.hr_image
    # far-periphery impulse smeared: its energy spreads beyond a single pixel
    y, x = 56, 8
    patch = img[y - 4:y + 5, x - 1:x + 8]
    assert patch.max() < 0.9
    assert (patch > patch.max() * 0.25).sum() >= 4


def test_psf_probe_validates():
    with pytest.raises(ValueError):
        psf_probe([], "linear")
    with pytest.raises(ValueError):
        psf_probe([make_uniform_grid(16, 16, 4)], "sharpen")
