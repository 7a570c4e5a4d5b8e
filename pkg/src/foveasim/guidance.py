"""Fovea steering: motion detection, wavelet detail, stochastic jumps, clicks.

Blip-frames are compared pairwise; the thresholded difference is filled to
its discrete convex hull and dilated by one blip-pixel so the highlighted
region accommodates the moving object.  The per-blip-pixel time of last
detected change (the difference-map stack) drives motion-aware fusion.

When the scene is quiet, a one-level Haar transform of the blip locates
detail, and the fovea walks a greedy trajectory over the candidate-position
lattice: most detail first, nearest unused position, detail under a visited
footprint marked as sampled.

Decision priority: manual click > stochastic jump (probability p) > motion
centroid > wavelet head > hold.  All decisions snap to the candidate lattice.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_dilation

DECISION_REASONS = ("manual", "stochastic", "motion", "wavelet", "hold")
TAU_DEFAULT = 0.1          # blip-difference threshold, fraction of full scale
P_JUMP_DEFAULT = 0.2
VISITED_WINDOW = 4         # "not recently accessed" = not among the last 4
STACK_DEPTH = 64


@dataclass(frozen=True)
class FoveaDecision:
    center: tuple[int, int]   # hr-pixels, snapped to the candidate lattice
    reason: str
    decided_at: float

    def to_json(self) -> dict:
        return {"t": self.decided_at, "center": list(self.center), "reason": self.reason}


@dataclass(frozen=True)
class CandidateLattice:
    """Discrete fovea positions; adjacent footprints overlap."""

    centers: tuple[tuple[int, int], ...]
    spacing: float  # largest step between adjacent centers

    def snap(self, x: float, y: float) -> tuple[int, tuple[int, int]]:
        pts = np.asarray(self.centers, dtype=float)
        d2 = (pts[:, 0] - x) ** 2 + (pts[:, 1] - y) ** 2
        idx = int(np.argmin(d2))
        return idx, self.centers[idx]

    def index_of(self, center: tuple[int, int]) -> int:
        return self.centers.index(tuple(center))


def build_candidate_lattice(
    width: int, height: int, fovea_half_extent: int, per_side: int = 8
) -> CandidateLattice:
    xs = np.rint(np.linspace(fovea_half_extent, width - fovea_half_extent, per_side)).astype(int)
    ys = np.rint(np.linspace(fovea_half_extent, height - fovea_half_extent, per_side)).astype(int)
    centers = tuple((int(x), int(y)) for y in ys for x in xs)
    spacing = float(max(np.diff(xs).max(), np.diff(ys).max()))
    return CandidateLattice(centers=centers, spacing=spacing)


# ---------------------------------------------------------------- difference maps

class DifferenceMapStack:
    """Ring buffer of binary difference maps plus per-pixel last-change times."""

    def __init__(self, blip_shape: tuple[int, int], depth: int = STACK_DEPTH):
        self.blip_shape = blip_shape
        self.last_change = np.full(blip_shape, -np.inf)
        self.history: deque = deque(maxlen=depth)

    def update(self, diff_map: np.ndarray, t: float) -> None:
        if diff_map.shape != self.blip_shape:
            raise ValueError("difference map shape mismatch")
        self.last_change = np.where(diff_map, t, self.last_change)
        self.history.append((diff_map.copy(), t))

    def last_change_field(self, height: int, width: int) -> np.ndarray:
        """Last-change times expanded to the hr grid."""
        bh, bw = self.blip_shape
        return np.repeat(np.repeat(self.last_change, height // bh, 0), width // bw, 1)


def _convex_hull(points):
    """Monotone-chain hull of integer lattice points (collinear sets collapse)."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _hull_fill(mask: np.ndarray) -> np.ndarray:
    """Pixels whose centers lie inside the convex hull of the true pixels."""
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return mask.copy()
    hull = _convex_hull(list(zip(xs.tolist(), ys.tolist())))
    out = np.zeros_like(mask)
    eps = 1e-9
    y0 = min(p[1] for p in hull)
    y1 = max(p[1] for p in hull)
    edges = list(zip(hull, hull[1:] + hull[:1])) if len(hull) > 1 else []
    for y in range(y0, y1 + 1):
        xs_here = [p[0] for p in hull if p[1] == y]
        for (px, py), (qx, qy) in edges:
            if py == qy:
                if py == y:
                    xs_here += [px, qx]
            elif min(py, qy) <= y <= max(py, qy):
                xs_here.append(px + (y - py) * (qx - px) / (qy - py))
        if xs_here:
            lo = int(np.ceil(min(xs_here) - eps))
            hi = int(np.floor(max(xs_here) + eps))
            out[y, lo:hi + 1] = True
    return out


def difference_map(blip_prev: np.ndarray, blip_curr: np.ndarray, tau: float = TAU_DEFAULT) -> np.ndarray:
    """Threshold |curr - prev|, fill to the convex hull, dilate by one pixel."""
    if blip_prev.shape != blip_curr.shape:
        raise ValueError("blip frames differ in shape")
    raw = np.abs(blip_curr - blip_prev) > tau
    if not raw.any():
        return raw
    filled = _hull_fill(raw)
    return binary_dilation(filled, structure=np.ones((3, 3), dtype=bool))


def motion_target(
    diff_map: np.ndarray,
    field_shape: tuple[int, int],
    lattice: CandidateLattice,
    decided_at: float = 0.0,
) -> FoveaDecision | None:
    """Centroid of the changed region, scaled to hr-pixels and snapped."""
    ys, xs = np.nonzero(diff_map)
    if ys.size == 0:
        return None
    bh, bw = diff_map.shape
    h, w = field_shape
    cx = (xs.mean() + 0.5) * (w / bw)
    cy = (ys.mean() + 0.5) * (h / bh)
    _, center = lattice.snap(cx, cy)
    return FoveaDecision(center=center, reason="motion", decided_at=decided_at)


# ---------------------------------------------------------------- wavelet detail

def haar_level1(field: np.ndarray):
    """One-level orthonormal Haar transform: (smooth, horiz, vert, diag)."""
    h, w = field.shape
    if h % 2 or w % 2:
        raise ValueError("Haar transform needs even dimensions")
    a = field[0::2, 0::2]
    b = field[0::2, 1::2]
    c = field[1::2, 0::2]
    d = field[1::2, 1::2]
    ll = (a + b + c + d) / 2.0
    lh = (a - b + c - d) / 2.0   # vertical-edge contrast
    hl = (a + b - c - d) / 2.0   # horizontal-edge contrast
    hh = (a - b - c + d) / 2.0   # diagonal contrast
    return ll, lh, hl, hh


def detail_map(field: np.ndarray) -> np.ndarray:
    """Quadratic sum of the three edge quadrants, per 2x2 block."""
    _, lh, hl, hh = haar_level1(field)
    return np.sqrt(lh**2 + hl**2 + hh**2)


def _block_centers(block_shape, field_shape):
    bh, bw = block_shape
    h, w = field_shape
    ys = (np.arange(bh) + 0.5) * (h / bh)
    xs = (np.arange(bw) + 0.5) * (w / bw)
    return xs, ys


def wavelet_trajectory(
    blip: np.ndarray,
    n_positions: int,
    lattice: CandidateLattice,
    fovea_half_extent: int,
    field_shape: tuple[int, int],
    visited=(),
    decided_at: float = 0.0,
) -> list[FoveaDecision]:
    """Greedy detail-first tour of the candidate lattice.

    Repeatedly pick the 2x2 block with the highest un-sampled detail, assign
    the nearest unused candidate position, and mark the detail under that
    fovea footprint as sampled.  With no detail left the tour continues in
    raster order over the unused candidates.
    """
    d = detail_map(blip).copy()
    xs, ys = _block_centers(d.shape, field_shape)
    bx, by = np.meshgrid(xs, ys)
    available = [i for i in range(len(lattice.centers)) if i not in set(visited)]
    if n_positions > len(available):
        warnings.warn(
            f"requested {n_positions} fovea positions but only {len(available)} "
            "unused candidates remain; trajectory truncated",
            stacklevel=2,
        )
        n_positions = len(available)
    decisions = []
    for _ in range(n_positions):
        if d.max() > 1e-12:
            i, j = np.unravel_index(int(np.argmax(d)), d.shape)
            tx, ty = xs[j], ys[i]
            pts = np.asarray([lattice.centers[k] for k in available], dtype=float)
            k = int(np.argmin((pts[:, 0] - tx) ** 2 + (pts[:, 1] - ty) ** 2))
            cand = available[k]
        else:
            cand = available[0]
        center = lattice.centers[cand]
        inside = (
            (np.abs(bx - center[0]) <= fovea_half_extent)
            & (np.abs(by - center[1]) <= fovea_half_extent)
        )
        d[inside] = 0.0
        available.remove(cand)
        decisions.append(FoveaDecision(center=center, reason="wavelet", decided_at=decided_at))
    return decisions


# ---------------------------------------------------------------- the decision chain

@dataclass
class GuidanceState:
    """Mutable steering state owned by the scheduler thread of control."""

    lattice: CandidateLattice
    field_shape: tuple[int, int]
    fovea_half_extent: int
    current_index: int
    stack: DifferenceMapStack
    recent: deque = field(default_factory=lambda: deque(maxlen=VISITED_WINDOW))
    pass_visited: set = field(default_factory=set)
    last_diff: np.ndarray | None = None
    last_blip: np.ndarray | None = None

    @property
    def current_center(self) -> tuple[int, int]:
        return self.lattice.centers[self.current_index]

    def observe_blip(self, blip_field: np.ndarray, t: float, tau: float) -> None:
        if self.last_blip is not None:
            diff = difference_map(self.last_blip, blip_field, tau)
            self.stack.update(diff, t)
            self.last_diff = diff
        self.last_blip = blip_field

    def note_decision(self, decision: FoveaDecision) -> None:
        idx = self.lattice.index_of(decision.center)
        self.current_index = idx
        self.recent.append(idx)
        self.pass_visited.add(idx)
        if len(self.pass_visited) >= len(self.lattice.centers):
            self.pass_visited.clear()


def make_guidance_state(width, height, fovea_half_extent, blip_side=16, per_side=8) -> GuidanceState:
    lattice = build_candidate_lattice(width, height, fovea_half_extent, per_side)
    _, start = lattice.snap(width / 2, height / 2)
    return GuidanceState(
        lattice=lattice,
        field_shape=(height, width),
        fovea_half_extent=fovea_half_extent,
        current_index=lattice.index_of(start),
        stack=DifferenceMapStack((blip_side, blip_side)),
    )


def next_decision(
    state: GuidanceState,
    t: float,
    rng: np.random.Generator,
    manual_click: tuple[int, int] | None = None,
    p_jump: float = P_JUMP_DEFAULT,
    use_motion: bool = True,
    use_wavelet: bool = True,
) -> FoveaDecision:
    """One steering decision; the caller applies it via state.note_decision."""
    if not 0.0 <= p_jump <= 1.0:
        raise ValueError("p_jump must be a probability")
    if manual_click is not None:
        _, center = state.lattice.snap(*manual_click)
        return FoveaDecision(center=center, reason="manual", decided_at=t)
    if p_jump > 0.0 and rng.random() < p_jump:
        recent = set(state.recent)
        pool = [i for i in range(len(state.lattice.centers)) if i not in recent]
        idx = pool[int(rng.integers(len(pool)))]
        return FoveaDecision(center=state.lattice.centers[idx], reason="stochastic", decided_at=t)
    if use_motion and state.last_diff is not None:
        hit = motion_target(state.last_diff, state.field_shape, state.lattice, decided_at=t)
        if hit is not None:
            return hit
    if use_wavelet and state.last_blip is not None:
        head = wavelet_trajectory(
            state.last_blip, 1, state.lattice, state.fovea_half_extent,
            state.field_shape, visited=state.pass_visited, decided_at=t,
        )
        if head:
            return head[0]
    return FoveaDecision(center=state.current_center, reason="hold", decided_at=t)
