import numpy as np
import pytest

from foveasim.cellgrid import FoveaSpec, StretchTransform, make_foveated_grid, make_uniform_grid
from foveasim.detector import DetectorConfig, acquire
from foveasim.hadamard import build_basis, fwht
from foveasim.reconstruct import (
    reconstruct_blip,
    reconstruct_subframe,
    reconstruct_uniform,
    write_pgm,
)
from foveasim.scene import DynamicScene
from util import dense_A_diag, dense_T, forge_grid


def measure(scene_field, grid, t0=0.0, config=None):
    scene = DynamicScene(scene_field)
    basis = build_basis(grid.n_cells)
    return acquire(scene, grid, basis, config or DetectorConfig(), t0)


def test_constant_scene_recovers_value():
    grid = make_uniform_grid(16, 16, 4)
    rec = measure(np.full((16, 16), 0.375), grid)
    out = reconstruct_uniform(rec)
    assert np.max(np.abs(out - 0.375)) < 1e-12


def test_critically_sampled_uniform_recovers_scene():
    rng = np.random.default_rng(0)
    scene = rng.uniform(0, 1, size=(32, 32))
    grid = make_uniform_grid(32, 32, 32)
    out = reconstruct_uniform(measure(scene, grid))
    assert np.max(np.abs(out - scene)) < 1e-10


def test_subframe_equals_per_cell_mean_brute_force():
    # oracle: A^-1 T T^T o evaluated with dense matrices on a forged partition
    grid = forge_grid(8, 8, 16, seed=3)
    rng = np.random.default_rng(1)
    scene = rng.uniform(0, 1, size=(8, 8))
    sub = reconstruct_subframe(measure(scene, grid))
    t = dense_T(grid)
    oracle = (t @ t.T @ scene.reshape(-1)) / dense_A_diag(grid)
    assert np.max(np.abs(sub.hr_image.reshape(-1) - oracle)) < 1e-12
    # hr image is constant within every cell
    for cid in range(grid.n_cells):
        vals = sub.hr_image.reshape(-1)[grid.assignment_flat == cid]
        assert np.max(np.abs(vals - vals[0])) == 0.0


def test_cell_constant_scene_recovered_exactly():
    grid = make_foveated_grid(32, 32, 64, [FoveaSpec((16, 16), 4, 2)], seed=1)
    rng = np.random.default_rng(2)
    cell_vals = rng.uniform(0, 1, size=64)
    scene = cell_vals[grid.assignment_flat].reshape(32, 32)
    sub = reconstruct_subframe(measure(scene, grid))
    assert np.max(np.abs(sub.hr_image - scene)) < 1e-12


def test_blip_reconstruction_is_block_means():
    rng = np.random.default_rng(5)
    scene = rng.uniform(0, 1, size=(128, 128))
    grid = make_uniform_grid(128, 128, 16)
    blip = reconstruct_blip(measure(scene, grid))
    oracle = scene.reshape(16, 8, 16, 8).mean(axis=(1, 3))
    assert np.max(np.abs(blip.field - oracle)) < 1e-10


def test_reconstruct_uniform_rejects_foveated_record():
    grid = make_foveated_grid(32, 32, 64, [FoveaSpec((16, 16), 4, 2)])
    rec = measure(np.zeros((32, 32)), grid)
    with pytest.raises(ValueError):
        reconstruct_uniform(rec)


def test_basis_order_mismatch_rejected():
    grid = make_uniform_grid(16, 16, 4)
    rec = measure(np.zeros((16, 16)), grid)
    with pytest.raises(ValueError):
        reconstruct_subframe(rec, build_basis(64))


def test_dual_basis_biorthogonality_exhaustive_64():
    grid = make_foveated_grid(32, 32, 64, [FoveaSpec((16, 16), 4, 2)], seed=9)
    basis = build_basis(64)
    t = dense_T(grid)
    h = basis.matrix().astype(float)
    s = t @ h.T  # column n is s_n
    gram = s.T @ (s / dense_A_diag(grid)[:, None])
    assert np.max(np.abs(gram - 64 * np.eye(64))) < 1e-9


def test_residual_orthogonal_to_all_masks():
    grid = make_foveated_grid(64, 64, 256, [FoveaSpec((32, 32), 8, 2)], seed=4)
    transform = StretchTransform(grid)
    rng = np.random.default_rng(7)
    o = rng.uniform(0, 1, size=grid.n_pixels)
    eps = o - transform.pixel_projection(o)
    # s_n^T eps for every n, via the fast transform of the cell sums
    coeffs = fwht(transform.reduce_sum(eps))
    assert np.max(np.abs(coeffs)) < 1e-9


def test_cell_space_equals_direct_dual_basis_sum():
    grid = forge_grid(8, 8, 8, seed=11)
    rng = np.random.default_rng(3)
    scene = rng.uniform(0, 1, size=(8, 8))
    rec = measure(scene, grid)
    sub = reconstruct_subframe(rec)
    basis = build_basis(8)
    t = dense_T(grid)
    acc = np.zeros(64)
    for n in range(8):
        s_n = t @ basis.row(n).astype(float)
        acc += rec.coefficients[n] * s_n
    direct = acc / 8 / dense_A_diag(grid)
    assert np.max(np.abs(sub.hr_image.reshape(-1) - direct)) < 1e-10


def test_noise_variance_scales_inverse_area_squared():
    # coefficient noise var 2 sigma^2 -> cell-mean variance 2 sigma^2/(N area^2)
    grid = make_foveated_grid(32, 32, 64, [FoveaSpec((16, 16), 4, 2)], seed=6)
    n = grid.n_cells
    sigma_abs = 3.0
    rng = np.random.default_rng(8)
    trials = 10_000
    noise = rng.normal(0.0, np.sqrt(2) * sigma_abs, size=(trials, n))
    means = fwht(noise) / n / grid.cell_area
    var = means.var(axis=0)
    expected = 2 * sigma_abs**2 / n / grid.cell_area.astype(float) ** 2
    assert np.max(np.abs(var / expected - 1)) < 0.10


def test_pgm_writer_16bit(tmp_path):
    p = tmp_path / "img.pgm"
    write_pgm(p, np.array([[0.0, 1.0], [0.5, 0.25]]))
    data = p.read_bytes()
    assert data.startswith(b"P5\n2 2\n65535\n")
    vals = np.frombuffer(data.split(b"65535\n", 1)[1], dtype=">u2")
    assert vals.tolist() == [0, 65535, 32768, 16384]


def test_export_subframe_sidecar(tmp_path):
    import json

    from foveasim.reconstruct import export_subframe

    grid = make_uniform_grid(16, 16, 4)
    rec = measure(np.full((16, 16), 0.5), grid, t0=2.0)
    sub = reconstruct_subframe(rec)
    export_subframe(sub, rec, tmp_path / "frame")
    assert (tmp_path / "frame.pgm").read_bytes().startswith(b"P5\n16 16\n")
    doc = json.loads((tmp_path / "frame.json").read_text())
    assert doc["t_start"] == 2.0 and doc["pattern_count"] == 32
    assert doc["grid"]["cell_count"] == 16
