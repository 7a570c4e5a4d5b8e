"""Fusing sub-frames into super-sampled composites.

Two strategies: a real-time weighted average (per-pixel weights inversely
proportional to the contributing cell's area) and an offline weighted least
squares over the stacked cell-mean constraints of all contributing
sub-frames.  Cells flagged by the motion mask are deleted from the system so
stale data has no influence.  The least-squares smoothing term pulls the
solution toward the weighted-average composite with tunable strength; it is
solved in shifted form (unknown = deviation from the weighted average) so
the smoothing rows become a plain damping term.

Every hr-pixel of a composite also carries an effective exposure-time (span
from the oldest contributing sub-frame's start to the newest end) and the
count of contributing sub-frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import lsqr

from .cellgrid import StretchTransform
from .detector import DetectorConfig, acquire
from .hadamard import build_basis
from .reconstruct import reconstruct_subframe

WEIGHTED_MODES = ("area-inverse", "newest-biased", "best-resolution")
RECENCY_FACTOR_DEFAULT = 0.8   # geometric down-weighting per frame of age
SOLVER_DEFAULTS = {"tol": 1e-8, "iter_lim": 2000}


@dataclass(frozen=True)
class CompositeImage:
    hr_image: np.ndarray            # (H, W) fused mean intensities
    exposure_map: np.ndarray        # (H, W) seconds spanned by contributing data
    contributing_frames: np.ndarray  # (H, W) number of unflagged contributors
    method: str = "weighted-average"
    rank_flagged: bool = False      # least squares was (possibly) underdetermined
    iterations: int = 0
    residual: float = 0.0

    def __post_init__(self):
        self.hr_image.flags.writeable = False
        self.exposure_map.flags.writeable = False
        self.contributing_frames.flags.writeable = False


@dataclass(frozen=True)
class MotionMask:
    """Per-sub-frame, per-cell staleness flags (True = deleted from fusion)."""

    flags: tuple  # tuple of (N_k,) bool arrays, aligned with the sub-frame list

    def flagged_any(self) -> bool:
        return any(f.any() for f in self.flags)


def _check_subframes(subframes):
    if not subframes:
        raise ValueError("fusion needs at least one sub-frame")
    shape = subframes[0].grid.shape
    for sf in subframes:
        if sf.grid.shape != shape:
            raise ValueError("sub-frames span different field dimensions")
    return shape


def _flags_for(subframes, motion_mask):
    if motion_mask is None:
        return [np.zeros(sf.grid.n_cells, dtype=bool) for sf in subframes]
    if len(motion_mask.flags) != len(subframes):
        raise ValueError("motion mask does not align with the sub-frame list")
    return list(motion_mask.flags)


def _coverage(subframes, pixel_valid):
    """Exposure span and contributor count per pixel; newest-frame fallback."""
    t_start = np.array([sf.t_start for sf in subframes])
    t_end = np.array([sf.t_end for sf in subframes])
    count = pixel_valid.sum(axis=0)
    start = np.where(pixel_valid, t_start[:, None], np.inf).min(axis=0)
    end = np.where(pixel_valid, t_end[:, None], -np.inf).max(axis=0)
    newest = int(np.argmax(t_start))
    uncovered = count == 0
    start[uncovered] = subframes[newest].t_start
    end[uncovered] = subframes[newest].t_end
    return end - start, count, newest, uncovered


def weighted_average(
    subframes,
    mode: str = "area-inverse",
    motion_mask: MotionMask | None = None,
    recency: float = RECENCY_FACTOR_DEFAULT,
) -> CompositeImage:
    """Per-pixel weighted mean of sub-frame reconstructions.

    area-inverse weights each contribution by 1/cell-area; newest-biased
    additionally multiplies by recency**age (age 0 = newest frame);
    best-resolution keeps only the smallest-area contributors, equally
    weighted.
    """
    shape = _check_subframes(subframes)
    if mode not in WEIGHTED_MODES:
        raise ValueError(f"unknown weighting mode '{mode}' (have {WEIGHTED_MODES})")
    flags = _flags_for(subframes, motion_mask)
    m = shape[0] * shape[1]
    f = len(subframes)
    values = np.empty((f, m))
    areas = np.empty((f, m))
    valid = np.empty((f, m), dtype=bool)
    for k, sf in enumerate(subframes):
        values[k] = sf.hr_image.reshape(-1)
        areas[k] = StretchTransform(sf.grid).area_per_pixel
        valid[k] = ~flags[k][sf.grid.assignment_flat]

    weights = np.where(valid, 1.0 / areas, 0.0)
    if mode == "newest-biased":
        order = np.argsort([-sf.t_start for sf in subframes], kind="stable")
        age = np.empty(f)
        age[order] = np.arange(f)
        weights *= recency ** age[:, None]
    elif mode == "best-resolution":
        masked_areas = np.where(valid, areas, np.inf)
        best = masked_areas.min(axis=0)
        weights = ((masked_areas == best) & valid).astype(float)

    den = weights.sum(axis=0)
    num = (weights * values).sum(axis=0)
    exposure, count, newest, uncovered = _coverage(subframes, valid)
    out = np.where(den > 0, num / np.where(den > 0, den, 1.0), values[newest])
    return CompositeImage(
        hr_image=out.reshape(shape),
        exposure_map=exposure.reshape(shape),
        contributing_frames=count.reshape(shape).astype(np.int32),
        method=f"weighted-average/{mode}",
    )


def _stack_constraints(subframes, flags):
    """Sparse cell-mean constraint system over the unflagged cells."""
    shape = subframes[0].grid.shape
    m = shape[0] * shape[1]
    rows, cols, vals, rhs = [], [], [], []
    row_base = 0
    pix = np.arange(m)
    for sf, flag in zip(subframes, flags):
        grid = sf.grid
        keep = ~flag
        n_keep = int(keep.sum())
        if n_keep == 0:
            continue
        row_of_cell = np.full(grid.n_cells, -1, dtype=np.int64)
        row_of_cell[keep] = np.arange(n_keep)
        pix_rows = row_of_cell[grid.assignment_flat]
        inside = pix_rows >= 0
        rows.append(pix_rows[inside] + row_base)
        cols.append(pix[inside])
        vals.append(1.0 / StretchTransform(grid).area_per_pixel[inside])
        rhs.append((sf.cell_values / grid.cell_area)[keep])
        row_base += n_keep
    if row_base == 0:
        raise ValueError("motion mask deleted every constraint row")
    a = coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(row_base, m),
    ).tocsr()
    return a, np.concatenate(rhs)


def linear_constraints(
    subframes,
    motion_mask: MotionMask | None = None,
    smoothing_weight: float = 0.1,
    solver_options: dict | None = None,
) -> CompositeImage:
    """Weighted least-squares fusion of the stacked cell-mean constraints.

    Each unflagged cell contributes one row (its mean over the member
    hr-pixels equals the reconstructed cell mean).  smoothing_weight adds
    rows pulling every hr-pixel toward the weighted-average composite.  With
    smoothing_weight = 0 and an underdetermined system the minimum-norm
    solution is returned and rank_flagged is set.
    """
    shape = _check_subframes(subframes)
    if smoothing_weight < 0:
        raise ValueError("smoothing weight must be non-negative")
    opts = dict(SOLVER_DEFAULTS)
    opts.update(solver_options or {})
    flags = _flags_for(subframes, motion_mask)
    a, rhs = _stack_constraints(subframes, flags)
    m = shape[0] * shape[1]

    valid = np.empty((len(subframes), m), dtype=bool)
    for k, sf in enumerate(subframes):
        valid[k] = ~flags[k][sf.grid.assignment_flat]
    exposure, count, newest, uncovered = _coverage(subframes, valid)

    tol = float(opts["tol"])
    iter_lim = int(opts["iter_lim"])
    if smoothing_weight == 0.0:
        result = lsqr(a, rhs, atol=tol, btol=tol, iter_lim=iter_lim)
        x = result[0]
        rank_flagged = a.shape[0] < m or bool(uncovered.any())
    else:
        wa = weighted_average(subframes, "area-inverse", motion_mask)
        base = wa.hr_image.reshape(-1)
        shifted = rhs - a @ base
        result = lsqr(a, shifted, damp=smoothing_weight, atol=tol, btol=tol, iter_lim=iter_lim)
        x = base + result[0]
        rank_flagged = False
    return CompositeImage(
        hr_image=x.reshape(shape),
        exposure_map=exposure.reshape(shape),
        contributing_frames=count.reshape(shape).astype(np.int32),
        method="linear-constraints",
        rank_flagged=rank_flagged,
        iterations=int(result[2]),
        residual=float(result[3]),
    )


def infer_subframe_period(subframes) -> float:
    """Typical start-to-start spacing; robust to blip gaps between fixations."""
    starts = np.sort([sf.t_start for sf in subframes])
    diffs = np.diff(starts)
    diffs = diffs[diffs > 0]
    if diffs.size == 0:
        return max(sf.t_end - sf.t_start for sf in subframes)
    return float(np.median(diffs))


def apply_motion_mask(stack, subframes, max_exposure: float = 4.0) -> MotionMask:
    """Flag cells whose data is stale.

    A cell of sub-frame k is flagged when a blip-pixel overlapping it changed
    after the sub-frame started, or when the sub-frame falls outside the
    newest max_exposure/period sub-frames (the exposure cap expressed as a
    frame count, e.g. 4 s at 8 Hz keeps 32 frames).
    """
    if not subframes:
        return MotionMask(flags=())
    period = infer_subframe_period(subframes)
    cap = max(1, int(round(max_exposure / period)))
    order = np.argsort([-sf.t_start for sf in subframes], kind="stable")
    too_old = np.zeros(len(subframes), dtype=bool)
    too_old[order[cap:]] = True

    shape = subframes[0].grid.shape
    change_hr = stack.last_change_field(*shape).reshape(-1)
    flags = []
    for k, sf in enumerate(subframes):
        grid = sf.grid
        if too_old[k]:
            flags.append(np.ones(grid.n_cells, dtype=bool))
            continue
        changed = (change_hr > sf.t_start).astype(np.float64)
        hits = np.bincount(grid.assignment_flat, weights=changed, minlength=grid.n_cells)
        flags.append(hits > 0)
    return MotionMask(flags=tuple(flags))


def psf_probe(
    grid_sequence,
    fusion_method: str = "linear",
    impulse_spacing: int = 16,
    config: DetectorConfig | None = None,
    smoothing_weight: float = 0.0,
    solver_options: dict | None = None,
) -> CompositeImage:
    """Image a uniform lattice of single-pixel impulses through the pipeline.

    The composite of the fused reconstructions exposes the spatially-varying
    point spread of the chosen fusion method.
    """
    grids = list(grid_sequence)
    if not grids:
        raise ValueError("need at least one grid")
    h, w = grids[0].shape
    scene_field = np.zeros((h, w))
    half = impulse_spacing // 2
    scene_field[half::impulse_spacing, half::impulse_spacing] = 1.0
    from .scene import DynamicScene

    scene = DynamicScene(scene_field)
    cfg = config or DetectorConfig()
    subframes = []
    t = 0.0
    for g in grids:
        basis = build_basis(g.n_cells)
        rec = acquire(scene, g, basis, cfg, t)
        t = rec.t_end + (rec.pattern_count // 2) * cfg.pair_overhead
        subframes.append(reconstruct_subframe(rec))
    if fusion_method == "linear":
        return linear_constraints(
            subframes, smoothing_weight=smoothing_weight, solver_options=solver_options
        )
    if fusion_method == "weighted":
        return weighted_average(subframes)
    raise ValueError(f"unknown fusion method '{fusion_method}'")


def export_composite_png(composite: CompositeImage, path, max_exposure: float) -> None:
    """False-color export: grayscale image with exposure in the red channel."""
    from PIL import Image

    img = np.clip(composite.hr_image, 0.0, 1.0)
    exp = np.clip(composite.exposure_map / max_exposure, 0.0, 1.0)
    rgb = np.stack([np.maximum(img, exp), img, img], axis=-1)
    Image.fromarray((rgb * 255).astype(np.uint8), mode="RGB").save(path)
