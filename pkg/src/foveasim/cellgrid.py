"""Space-variant cell grids and their stretch transforms.

A grid partitions the width x height field of hr-pixels into N cells.  Fovea
regions are tiled by small axis-aligned squares on a regular lattice; the
periphery is split into concentric rings (geometrically growing radial width)
of roughly square ring/sector cells around a jittered polar center.  Because
the Hadamard order must equal the cell count exactly, rasterized grids are
repaired: surplus cells are merged (smallest periphery cell into its smallest
neighbor) and deficits are split (largest periphery cell along its longer
axis).  Fovea cells are never touched by the repair.

Half-cell fovea shifts rebuild the lattice translated by cell_size/2 in x
and/or y.  Part-cells clipped at the fovea edge are kept as independent thin
cells: the boundary constraints they contribute are required for exact
super-sampled recovery of the whole fovea, so they must not be absorbed into
periphery cells (their pixel sums would then mix with ring pixels).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

GRID_SCHEMA = 1

# Lattice translations for the four half-cell shift indices, in units of
# half a fovea cell: (0,0), (x), (y), (x and y).
SHIFT_STEPS = ((0, 0), (1, 0), (0, 1), (1, 1))

_SHIFT_STREAM = 0x5C  # spawn-key tag for the periphery re-randomization stream


@dataclass(frozen=True)
class FoveaSpec:
    """One fovea: a square region tiled with cell_size x cell_size cells."""

    center: tuple[int, int]  # (x, y) in hr-pixels
    half_extent: int         # rect spans [c - h, c + h) on both axes
    cell_size: int           # hr-pixels per cell side

    def rect(self) -> tuple[int, int, int, int]:
        cx, cy = self.center
        h = self.half_extent
        return (cx - h, cy - h, cx + h, cy + h)


@dataclass(frozen=True, eq=False)
class CellGrid:
    width: int
    height: int
    assignment: np.ndarray                      # (height, width) int32, cell id per hr-pixel
    cell_area: np.ndarray                       # (N,) int64, hr-pixels per cell
    fovea: tuple[FoveaSpec, ...] = ()
    seed: int = 0
    azimuth_offset: float = 0.0
    polar_center: tuple[float, float] | None = None
    uniform_cells_per_side: int | None = None
    shift_index: int = 0
    variant: int = 0

    def __post_init__(self):
        self.assignment.flags.writeable = False
        self.cell_area.flags.writeable = False

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    @property
    def n_cells(self) -> int:
        return int(self.cell_area.size)

    @cached_property
    def assignment_flat(self) -> np.ndarray:
        return self.assignment.reshape(-1)

    def validate(self) -> None:
        """Check the partition invariants; raises ValueError on violation."""
        a = self.assignment
        if a.shape != (self.height, self.width):
            raise ValueError("assignment shape mismatch")
        n = self.n_cells
        if a.min() < 0 or a.max() >= n:
            raise ValueError("cell index out of range")
        counts = np.bincount(self.assignment_flat, minlength=n)
        if (counts == 0).any():
            raise ValueError("empty cell in partition")
        if not np.array_equal(counts, self.cell_area):
            raise ValueError("cell_area inconsistent with assignment")
        if int(counts.sum()) != self.n_pixels:
            raise ValueError("areas do not sum to pixel count")

    def fovea_pixel_mask(self) -> np.ndarray:
        """(H, W) bool mask of hr-pixels inside any fovea rectangle."""
        mask = np.zeros(self.shape, dtype=bool)
        for f in self.fovea:
            x0, y0, x1, y1 = f.rect()
            mask[y0:y1, x0:x1] = True
        return mask

    def fovea_cell_mask(self) -> np.ndarray:
        """(N,) bool mask of cells lying inside a fovea rectangle."""
        mask = np.zeros(self.n_cells, dtype=bool)
        for f in self.fovea:
            x0, y0, x1, y1 = f.rect()
            mask[np.unique(self.assignment[y0:y1, x0:x1])] = True
        return mask

    def boundary_map(self) -> np.ndarray:
        """(H, W) uint8 mask of cell boundaries (pixel differs from left/top)."""
        a = self.assignment
        b = np.zeros(self.shape, dtype=np.uint8)
        b[:, 1:] |= (a[:, 1:] != a[:, :-1]).astype(np.uint8)
        b[1:, :] |= (a[1:, :] != a[:-1, :]).astype(np.uint8)
        return b

    def to_json(self) -> dict:
        return {
            "schema": GRID_SCHEMA,
            "width": self.width,
            "height": self.height,
            "cell_count": self.n_cells,
            "assignment": self.assignment_flat.tolist(),
            "fovea": [
                {
                    "center": list(f.center),
                    "half_extent": f.half_extent,
                    "cell_size": f.cell_size,
                }
                for f in self.fovea
            ],
            "seed": self.seed,
            "azimuth_offset": self.azimuth_offset,
            "polar_center": list(self.polar_center) if self.polar_center else None,
            "uniform_cells_per_side": self.uniform_cells_per_side,
            "shift_index": self.shift_index,
            "variant": self.variant,
        }

    @staticmethod
    def from_json(doc: dict) -> "CellGrid":
        w, h = doc["width"], doc["height"]
        assignment = np.asarray(doc["assignment"], dtype=np.int32).reshape(h, w)
        areas = np.bincount(assignment.reshape(-1), minlength=doc["cell_count"]).astype(np.int64)
        grid = CellGrid(
            width=w,
            height=h,
            assignment=assignment,
            cell_area=areas,
            fovea=tuple(
                FoveaSpec(tuple(f["center"]), f["half_extent"], f["cell_size"])
                for f in doc.get("fovea", [])
            ),
            seed=doc.get("seed", 0),
            azimuth_offset=doc.get("azimuth_offset", 0.0),
            polar_center=tuple(doc["polar_center"]) if doc.get("polar_center") else None,
            uniform_cells_per_side=doc.get("uniform_cells_per_side"),
            shift_index=doc.get("shift_index", 0),
            variant=doc.get("variant", 0),
        )
        grid.validate()
        return grid


@dataclass(frozen=True, eq=False)
class StretchTransform:
    """The cell-space <-> hr-pixel maps of one grid.

    Logically T is the M x N binary matrix with one 1 per row (the pixel's
    cell) and A the diagonal matrix of cell areas per pixel.  Both are stored
    through the assignment; expand/reduce are the only operations needed.
    """

    grid: CellGrid

    @cached_property
    def area_per_pixel(self) -> np.ndarray:
        """Diagonal of A as a flat (M,) float vector."""
        return self.grid.cell_area[self.grid.assignment_flat].astype(np.float64)

    def expand(self, cell_values: np.ndarray) -> np.ndarray:
        """T @ c: each hr-pixel takes its cell's value.  Returns flat (M,)."""
        c = np.asarray(cell_values)
        if c.shape != (self.grid.n_cells,):
            raise ValueError(
                f"expected {self.grid.n_cells} cell values, got shape {c.shape}"
            )
        return c[self.grid.assignment_flat]

    def reduce_sum(self, hr_values: np.ndarray) -> np.ndarray:
        """T.T @ o: per-cell sums of a flat (M,) hr vector."""
        v = np.asarray(hr_values, dtype=np.float64).reshape(-1)
        if v.size != self.grid.n_pixels:
            raise ValueError(f"expected {self.grid.n_pixels} hr values, got {v.size}")
        return np.bincount(self.grid.assignment_flat, weights=v, minlength=self.grid.n_cells)

    def reduce_mean(self, hr_values: np.ndarray) -> np.ndarray:
        """T.T A^-1 applied to an hr vector: per-cell means."""
        return self.reduce_sum(hr_values) / self.grid.cell_area

    def cell_roundtrip(self, cell_values: np.ndarray) -> np.ndarray:
        """T.T A^-1 T @ c -- the lossless direction, equals c."""
        return self.reduce_mean(self.expand(cell_values))

    def pixel_projection(self, hr_values: np.ndarray) -> np.ndarray:
        """A^-1 T T.T @ o -- the lossy direction (per-cell mean, re-expanded)."""
        return self.expand(self.reduce_mean(hr_values))

    def sparse_T(self):
        """T as a scipy CSR matrix (M x N); built on demand for solvers."""
        from scipy.sparse import csr_matrix

        m, n = self.grid.n_pixels, self.grid.n_cells
        rows = np.arange(m)
        cols = self.grid.assignment_flat
        data = np.ones(m)
        return csr_matrix((data, (rows, cols)), shape=(m, n))


def stretch(grid: CellGrid) -> StretchTransform:
    return StretchTransform(grid)


def expand(transform: StretchTransform, cell_values: np.ndarray) -> np.ndarray:
    return transform.expand(cell_values)


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def make_uniform_grid(width: int, height: int, cells_per_side: int) -> CellGrid:
    """Regular Cartesian grid of cells_per_side x cells_per_side equal cells."""
    if cells_per_side < 1:
        raise ValueError("cells_per_side must be positive")
    if width % cells_per_side or height % cells_per_side:
        raise ValueError(
            f"{width}x{height} field not divisible into {cells_per_side} cells per side"
        )
    n = cells_per_side * cells_per_side
    if not _is_power_of_two(n):
        raise ValueError(f"cell count {n} is not a power of two")
    cw = width // cells_per_side
    ch = height // cells_per_side
    ys, xs = np.indices((height, width))
    assignment = ((ys // ch) * cells_per_side + xs // cw).astype(np.int32)
    areas = np.full(n, cw * ch, dtype=np.int64)
    return CellGrid(
        width=width,
        height=height,
        assignment=assignment,
        cell_area=areas,
        uniform_cells_per_side=cells_per_side,
    )


def _validate_fovea(width, height, fovea, shifted):
    rects = []
    for f in fovea:
        if f.cell_size < 1 or f.half_extent < 1:
            raise ValueError("fovea cell_size and half_extent must be positive")
        x0, y0, x1, y1 = f.rect()
        if x0 < 0 or y0 < 0 or x1 > width or y1 > height:
            raise ValueError(f"fovea rect {f.rect()} outside {width}x{height} field")
        if not shifted and (2 * f.half_extent) % f.cell_size:
            raise ValueError("fovea extent must be divisible by cell_size")
        for r in rects:
            if x0 < r[2] and r[0] < x1 and y0 < r[3] and r[1] < y1:
                raise ValueError("fovea rectangles overlap")
        rects.append((x0, y0, x1, y1))


def _paint_fovea(label: np.ndarray, fovea, offsets) -> int:
    """Tile each fovea rect with its (possibly translated) cell lattice.

    Returns the number of cells painted.  With a nonzero offset the rect edge
    cells are clipped part-cells; they stay as cells of their own.
    """
    next_id = 0
    for f, (dx, dy) in zip(fovea, offsets):
        x0, y0, x1, y1 = f.rect()
        s = f.cell_size
        col = (np.arange(x0, x1) - x0 - dx) // s
        row = (np.arange(y0, y1) - y0 - dy) // s
        col -= col.min()
        row -= row.min()
        ncols = int(col.max()) + 1
        nrows = int(row.max()) + 1
        label[y0:y1, x0:x1] = next_id + row[:, None] * ncols + col[None, :]
        next_id += nrows * ncols
    return next_id


def _periphery_geometry(width, height, fovea, polar_center):
    """Radial distance and azimuth for every pixel center.

    Single fovea: plain distance from the polar center.  Multiple fovea:
    distance to the nearest fovea rectangle, so rings hug all fovea.
    """
    ys, xs = np.indices((height, width))
    px = xs + 0.5
    py = ys + 0.5
    cx, cy = polar_center
    theta = np.arctan2(py - cy, px - cx)
    if len(fovea) <= 1:
        r = np.hypot(px - cx, py - cy)
    else:
        r = np.full((height, width), np.inf)
        for f in fovea:
            x0, y0, x1, y1 = f.rect()
            dx = np.maximum(np.maximum(x0 - px, px - x1), 0.0)
            dy = np.maximum(np.maximum(y0 - py, py - y1), 0.0)
            r = np.minimum(r, np.hypot(dx, dy))
    return r, theta


def _ring_sector_codes(r, theta, azimuth_offset, n_rings):
    """Cell code per pixel for a given ring count (vectorized)."""
    rmin = max(float(r.min()), 0.25)
    rmax = float(r.max()) * (1.0 + 1e-12) + 1e-9
    rho = (rmax / rmin) ** (1.0 / n_rings)
    edges = rmin * rho ** np.arange(n_rings + 1)
    ring = np.clip(np.searchsorted(edges, r, side="right") - 1, 0, n_rings - 1)
    widths = edges[1:] - edges[:-1]
    mids = 0.5 * (edges[1:] + edges[:-1])
    n_sect = np.maximum(1, np.rint(2.0 * np.pi * mids / widths)).astype(np.int64)
    frac = ((theta - azimuth_offset) / (2.0 * np.pi)) % 1.0
    sector = np.minimum((frac * n_sect[ring]).astype(np.int64), n_sect[ring] - 1)
    offsets = np.concatenate(([0], np.cumsum(n_sect)))
    return offsets[ring] + sector


def _paint_periphery(label, next_id, target, fovea, polar_center, azimuth_offset):
    """Partition the unassigned pixels into about `target` ring/sector cells."""
    periph = label < 0
    r_all, theta_all = _periphery_geometry(label.shape[1], label.shape[0], fovea, polar_center)
    r = r_all[periph]
    theta = theta_all[periph]

    def realized(k):
        codes = _ring_sector_codes(r, theta, azimuth_offset, k)
        return codes, np.unique(codes).size

    # The realized cell count grows with the ring count; binary search, then
    # keep the closest evaluated candidate.  The exact count is restored later
    # by the repair pass.
    lo, hi = 1, max(2, int(2.5 * math.sqrt(target)) + 8)
    best = None
    _, count_hi = realized(hi)
    while count_hi < target and hi < 4 * target:
        hi *= 2
        _, count_hi = realized(hi)
    evaluated = {}
    while lo <= hi:
        mid = (lo + hi) // 2
        codes, count = realized(mid)
        evaluated[mid] = (codes, count)
        if count < target:
            lo = mid + 1
        elif count > target:
            hi = mid - 1
        else:
            break
    best_k = min(evaluated, key=lambda k: (abs(evaluated[k][1] - target), k))
    codes = evaluated[best_k][0]
    _, inverse = np.unique(codes, return_inverse=True)
    label[periph] = next_id + inverse


def _cell_neighbors(label, cell_mask):
    """Ids of cells 4-adjacent to the masked region (excluding itself)."""
    h, w = label.shape
    out = []
    for axis, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
        shifted = np.roll(cell_mask, shift, axis=axis)
        if axis == 0:
            if shift == 1:
                shifted[0, :] = False
            else:
                shifted[-1, :] = False
        else:
            if shift == 1:
                shifted[:, 0] = False
            else:
                shifted[:, -1] = False
        out.append(label[shifted & ~cell_mask])
    if not out:
        return np.array([], dtype=label.dtype)
    return np.unique(np.concatenate(out))


def _repair_to_count(label, n_protected, target):
    """Merge/split periphery cells until the cell count equals target.

    Fovea cells (ids < n_protected) are never merged or split.  Merging takes
    the smallest periphery cell into its smallest periphery neighbor;
    splitting cuts the largest periphery cell along its longer bbox axis.
    """
    flat = label.reshape(-1)
    n = int(flat.max()) + 1
    areas = np.bincount(flat, minlength=n).astype(np.int64)
    alive = areas > 0

    def live_count():
        return int(alive.sum())

    while live_count() > target:
        candidates = np.flatnonzero(alive[n_protected:]) + n_protected
        if candidates.size == 0:
            raise ValueError("cannot reach cell count: no periphery cells to merge")
        order = candidates[np.lexsort((candidates, areas[candidates]))]
        merged = False
        for c in order:
            mask = label == c
            nbs = _cell_neighbors(label, mask)
            nbs = nbs[(nbs >= n_protected) & (nbs != c)]
            if nbs.size == 0:
                continue
            nb = nbs[np.lexsort((nbs, areas[nbs]))][0]
            label[mask] = nb
            areas[nb] += areas[c]
            areas[c] = 0
            alive[c] = False
            merged = True
            break
        if not merged:
            raise ValueError("cannot reach cell count: merge candidates exhausted")

    while live_count() < target:
        candidates = np.flatnonzero(alive[n_protected:]) + n_protected
        candidates = candidates[areas[candidates] >= 2]
        if candidates.size == 0:
            raise ValueError("cannot reach cell count: nothing left to split")
        order = candidates[np.lexsort((candidates, -areas[candidates]))]
        split = False
        for c in order:
            ys, xs = np.nonzero(label == c)
            bw = xs.max() - xs.min() + 1
            bh = ys.max() - ys.min() + 1
            axes = [xs, ys] if bw >= bh else [ys, xs]
            for coords in axes:
                uniq = np.unique(coords)
                if uniq.size < 2:
                    continue
                thresh = uniq[uniq.size // 2]
                upper = coords >= thresh
                new_id = areas.size
                areas = np.append(areas, 0)
                alive = np.append(alive, True)
                label[ys[upper], xs[upper]] = new_id
                areas[new_id] = int(upper.sum())
                areas[c] -= areas[new_id]
                split = True
                break
            if split:
                break
        if not split:
            raise ValueError("cannot reach cell count: split candidates exhausted")


def _canonical_relabel(label):
    """Compact ids ordered by first (row-major) pixel occurrence."""
    flat = label.reshape(-1)
    ids, first = np.unique(flat, return_index=True)
    order = np.argsort(first, kind="stable")
    lut = np.empty(int(ids.max()) + 1, dtype=np.int32)
    lut[ids[order]] = np.arange(ids.size, dtype=np.int32)
    label[...] = lut[flat].reshape(label.shape)
    return ids.size


def _build_foveated(
    width,
    height,
    target_cells,
    fovea,
    azimuth_offset,
    polar_center_jitter,
    seed,
    offsets,
    shift_index,
    variant,
):
    fovea = tuple(
        f if isinstance(f, FoveaSpec) else FoveaSpec(tuple(f[0]), int(f[1]), int(f[2]))
        for f in fovea
    )
    if not fovea:
        raise ValueError("at least one fovea is required")
    if not _is_power_of_two(target_cells):
        raise ValueError(f"cell count {target_cells} is not a power of two")
    shifted = any(o != (0, 0) for o in offsets)
    _validate_fovea(width, height, fovea, shifted)

    label = np.full((height, width), -1, dtype=np.int32)
    n_fovea_cells = _paint_fovea(label, fovea, offsets)

    periph_pixels = int((label < 0).sum())
    if periph_pixels == 0:
        if n_fovea_cells != target_cells:
            raise ValueError(
                f"fovea tiling yields {n_fovea_cells} cells but {target_cells} requested"
            )
        polar_center = None
    else:
        if n_fovea_cells >= target_cells:
            raise ValueError(
                f"infeasible: {n_fovea_cells} fovea cells leave no budget for the "
                f"{periph_pixels}-pixel periphery (target {target_cells})"
            )
        cx = float(np.mean([f.center[0] for f in fovea])) + polar_center_jitter[0]
        cy = float(np.mean([f.center[1] for f in fovea])) + polar_center_jitter[1]
        polar_center = (cx, cy)
        _paint_periphery(
            label, n_fovea_cells, target_cells - n_fovea_cells, fovea, polar_center, azimuth_offset
        )
        _repair_to_count(label, n_fovea_cells, target_cells)

    n = _canonical_relabel(label)
    if n != target_cells:
        raise ValueError(f"grid construction produced {n} cells, wanted {target_cells}")
    areas = np.bincount(label.reshape(-1), minlength=n).astype(np.int64)
    return CellGrid(
        width=width,
        height=height,
        assignment=label,
        cell_area=areas,
        fovea=fovea,
        seed=seed,
        azimuth_offset=float(azimuth_offset),
        polar_center=polar_center,
        shift_index=shift_index,
        variant=variant,
    )


def make_foveated_grid(
    width: int,
    height: int,
    target_cells: int,
    fovea,
    azimuth_offset: float = 0.0,
    polar_center_jitter: tuple[int, int] = (0, 0),
    seed: int = 0,
) -> CellGrid:
    """Construct a space-variant grid with exactly target_cells cells.

    `fovea` is a list of FoveaSpec (or (center, half_extent, cell_size)
    tuples).  The azimuth offset rotates the periphery sector boundaries; the
    polar-center jitter displaces the periphery's polar origin.  Identical
    arguments yield a bit-identical grid.
    """
    offsets = [(0, 0)] * len(list(fovea))
    return _build_foveated(
        width, height, target_cells, fovea, azimuth_offset, polar_center_jitter,
        seed, offsets, shift_index=0, variant=0,
    )


def shift_fovea(grid: CellGrid, shift_index: int, variant: int | None = None) -> CellGrid:
    """Translate the fovea lattice by half a cell in x and/or y.

    shift_index selects (0,0), (s/2,0), (0,s/2) or (s/2,s/2).  The periphery
    is re-randomized (fresh azimuth offset and polar-center jitter) from the
    grid's seeded stream; passing distinct `variant` values yields distinct
    periphery realizations for the same shift.  Cell count and the fovea
    footprint rectangles are preserved.
    """
    if not grid.fovea:
        raise ValueError("grid has no fovea to shift")
    if not 0 <= shift_index <= 3:
        raise ValueError("shift_index must be 0..3")
    for f in grid.fovea:
        if f.cell_size % 2:
            raise ValueError("half-cell shifts need an even fovea cell_size")
    if variant is None:
        variant = shift_index
    sx, sy = SHIFT_STEPS[shift_index]
    offsets = [(sx * f.cell_size // 2, sy * f.cell_size // 2) for f in grid.fovea]
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=grid.seed, spawn_key=(_SHIFT_STREAM, variant))
    )
    azimuth = float(rng.uniform(0.0, 2.0 * np.pi))
    jitter = tuple(int(j) for j in rng.integers(-2, 3, size=2))
    return _build_foveated(
        grid.width, grid.height, grid.n_cells, grid.fovea, azimuth, jitter,
        grid.seed, offsets, shift_index=shift_index, variant=variant,
    )


def grid_to_json_str(grid: CellGrid) -> str:
    return json.dumps(grid.to_json(), sort_keys=True, separators=(",", ":"))


def grid_from_json_str(text: str) -> CellGrid:
    return CellGrid.from_json(json.loads(text))
