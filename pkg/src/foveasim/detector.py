"""Simulated single-pixel detector.

Each +-1 mask is displayed as a positive/negative {1,0} pair on a mask clock
(default 2e4 patterns/s).  The scene is sampled at every pattern tick, so a
scene that moves mid-acquisition yields inconsistent coefficients (pattern
multiplexing noise).  Readings may carry additive Gaussian noise and optional
Poisson shot noise.  A fixed dead time per pattern pair is appended to the
session clock after each record; the record itself spans pure display time,
t_end - t_start = pattern_count / mask_rate.

For speed the positive/negative readings of a momentarily-static scene are
derived algebraically: with total = sum(o) and b_n = s_n^T o (computed for the
whole basis at once via the fast transform of the cell-reduced scene),
i_pos = (total + b_n) / 2 and i_neg = (total - b_n) / 2, exactly as if the
{1,0} masks had been applied pixel by pixel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cellgrid import CellGrid, StretchTransform
from .hadamard import HadamardBasis, fwht

MASK_RATE_DEFAULT = 2.0e4
# Dead time per pattern pair.  At 2e4 masks/s this makes a 1024-pair
# sub-frame last exactly 0.125 s and a 256-pair blip-frame 31.25 ms.
PAIR_OVERHEAD_DEFAULT = (0.125 - 2048 / MASK_RATE_DEFAULT) / 1024

RECORD_SCHEMA = 1


@dataclass(frozen=True)
class DetectorConfig:
    mask_rate: float = MASK_RATE_DEFAULT
    noise_sigma: float = 0.0        # Gaussian std per reading, fraction of full scale (M)
    shot_noise: bool = False
    photon_budget: float = 1.0e6    # photons at a full-scale reading when shot noise is on
    pair_overhead: float = PAIR_OVERHEAD_DEFAULT
    seed: int = 0

    def __post_init__(self):
        if self.mask_rate <= 0:
            raise ValueError("mask_rate must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


@dataclass(frozen=True)
class MeasurementRecord:
    coefficients: np.ndarray   # (N,) differential correlation coefficients
    grid: CellGrid
    t_start: float
    t_end: float
    pattern_count: int

    def __post_init__(self):
        self.coefficients.flags.writeable = False

    def duration(self) -> float:
        return self.t_end - self.t_start

    def to_json(self) -> dict:
        return {
            "schema": RECORD_SCHEMA,
            "coefficients": self.coefficients.tolist(),
            "grid": self.grid.to_json(),
            "t_start": self.t_start,
            "t_end": self.t_end,
            "pattern_count": self.pattern_count,
        }

    @staticmethod
    def from_json(doc: dict) -> "MeasurementRecord":
        return MeasurementRecord(
            coefficients=np.asarray(doc["coefficients"], dtype=np.float64),
            grid=CellGrid.from_json(doc["grid"]),
            t_start=float(doc["t_start"]),
            t_end=float(doc["t_end"]),
            pattern_count=int(doc["pattern_count"]),
        )


def _clean_readings(scene, grid, config, t_start) -> np.ndarray:
    """Noise-free positive/negative intensities for all 2N pattern ticks."""
    n = grid.n_cells
    tick = 1.0 / config.mask_rate
    transform = StretchTransform(grid)
    readings = np.empty(2 * n)
    times = t_start + np.arange(2 * n) * tick
    ids = scene.state_ids(times)
    bounds = np.concatenate(([0], np.flatnonzero(np.diff(ids)) + 1, [2 * n]))
    for i, j in zip(bounds[:-1], bounds[1:]):
        o = scene.evaluate_flat(times[i])
        b_clean = fwht(transform.reduce_sum(o))
        total = b_clean[0]  # all-ones row
        idx = np.arange(i, j)
        pair = idx // 2
        sign = np.where(idx % 2 == 0, 1.0, -1.0)
        readings[i:j] = 0.5 * (total + sign * b_clean[pair])
    return readings


def acquire(
    scene,
    grid: CellGrid,
    basis: HadamardBasis,
    config: DetectorConfig,
    t_start: float,
    rng: np.random.Generator | None = None,
) -> MeasurementRecord:
    """Measure one full pattern set against the scene starting at t_start."""
    if basis.order != grid.n_cells:
        raise ValueError(
            f"basis order {basis.order} does not match grid cell count {grid.n_cells}"
        )
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n = grid.n_cells
    readings = _clean_readings(scene, grid, config, t_start)
    full_scale = float(grid.n_pixels)
    if config.shot_noise:
        lam = np.clip(readings, 0.0, None) * (config.photon_budget / full_scale)
        readings = rng.poisson(lam) * (full_scale / config.photon_budget)
    if config.noise_sigma > 0:
        readings = readings + rng.normal(0.0, config.noise_sigma * full_scale, size=2 * n)
    b = readings[0::2] - readings[1::2]
    return MeasurementRecord(
        coefficients=b,
        grid=grid,
        t_start=t_start,
        t_end=t_start + 2 * n / config.mask_rate,
        pattern_count=2 * n,
    )


def acquire_blip(
    scene,
    blip_grid: CellGrid,
    basis: HadamardBasis,
    config: DetectorConfig,
    t_start: float,
    rng: np.random.Generator | None = None,
) -> MeasurementRecord:
    """As acquire(), for the uniform low-resolution blip grid."""
    if blip_grid.uniform_cells_per_side is None:
        raise ValueError("blip grid must be uniform")
    return acquire(scene, blip_grid, basis, config, t_start, rng)


class DetectorSession:
    """Owns the mask clock and the noise RNG; acquisitions are serialized.

    Successive records never overlap: after each acquisition the clock
    advances past the record end by the accumulated pair dead time.
    """

    def __init__(self, config: DetectorConfig, start_time: float = 0.0):
        self.config = config
        self.clock = start_time
        self.rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed))

    def acquire(self, scene, grid: CellGrid, basis: HadamardBasis) -> MeasurementRecord:
        record = acquire(scene, grid, basis, self.config, self.clock, self.rng)
        self.clock = record.t_end + (record.pattern_count // 2) * self.config.pair_overhead
        return record

    def acquire_blip(self, scene, blip_grid: CellGrid, basis: HadamardBasis) -> MeasurementRecord:
        if blip_grid.uniform_cells_per_side is None:
            raise ValueError("blip grid must be uniform")
        return self.acquire(scene, blip_grid, basis)

    def period(self, grid: CellGrid) -> float:
        """Start-to-start spacing of back-to-back acquisitions on this grid."""
        pairs = grid.n_cells
        return 2 * pairs / self.config.mask_rate + pairs * self.config.pair_overhead


def subframe_period(n_cells: int, config: DetectorConfig) -> float:
    """Display time plus dead time for one n_cells-pattern-pair acquisition."""
    return 2 * n_cells / config.mask_rate + n_cells * config.pair_overhead
