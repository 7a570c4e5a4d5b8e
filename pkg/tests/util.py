"""Shared oracle helpers for the test suite.

Everything here is deliberately independent of the library's fast paths:
dense matrices, literal mask application, brute-force geometry.
"""

import numpy as np

from foveasim.cellgrid import CellGrid


def dense_T(grid: CellGrid) -> np.ndarray:
    """The M x N binary stretch matrix, built entry by entry."""
    t = np.zeros((grid.n_pixels, grid.n_cells))
    t[np.arange(grid.n_pixels), grid.assignment_flat] = 1.0
    return t


def dense_A_diag(grid: CellGrid) -> np.ndarray:
    """Diagonal of the per-pixel cell-area matrix."""
    return grid.cell_area[grid.assignment_flat].astype(np.float64)


def dyadic_field(shape, seed, denom=256):
    """Random field of exact binary fractions so float sums are exact."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, denom + 1, size=shape).astype(np.float64) / denom


def forge_grid(width, height, n_cells, seed):
    """Arbitrary (non-contiguous) valid partition, for algebra oracles."""
    rng = np.random.default_rng(seed)
    m = width * height
    flat = rng.integers(0, n_cells, size=m)
    # guarantee every cell non-empty
    anchors = rng.permutation(m)[:n_cells]
    flat[anchors] = np.arange(n_cells)
    assignment = flat.reshape(height, width).astype(np.int32)
    areas = np.bincount(flat, minlength=n_cells).astype(np.int64)
    grid = CellGrid(width=width, height=height, assignment=assignment, cell_area=areas)
    grid.validate()
    return grid


def partitions_equal(a: np.ndarray, b: np.ndarray, mask=None) -> bool:
    """True when two label maps induce the same partition (up to relabeling)."""
    af = a.reshape(-1) if mask is None else a[mask]
    bf = b.reshape(-1) if mask is None else b[mask]
    pair = af.astype(np.int64) * (bf.max() + 1) + bf
    # bijective iff each a-label maps to exactly one b-label and vice versa
    return (
        np.unique(pair).size == np.unique(af).size == np.unique(bf).size
    )
