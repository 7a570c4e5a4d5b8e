"""Reconstruction of uniform frames, space-variant sub-frames, and blip-frames.

The cell-space route: the fast transform of the coefficient vector divided by
N gives c, the per-cell sums of the scene; dividing by cell areas and
expanding onto the hr grid yields the space-variant image.  Values are mean
intensities in [0, 1] regardless of grid, so sub-frames from different grids
fuse coherently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cellgrid import CellGrid
from .detector import MeasurementRecord
from .hadamard import HadamardBasis, fwht


@dataclass(frozen=True)
class SubFrame:
    grid: CellGrid
    cell_values: np.ndarray   # (N,) per-cell sums of the scene estimate
    hr_image: np.ndarray      # (H, W) cell means expanded to hr-pixels
    t_start: float
    t_end: float

    def __post_init__(self):
        self.cell_values.flags.writeable = False
        self.hr_image.flags.writeable = False

    @property
    def cell_means(self) -> np.ndarray:
        return self.cell_values / self.grid.cell_area


@dataclass(frozen=True)
class BlipFrame:
    field: np.ndarray         # (cells_per_side, cells_per_side) mean intensities
    t_start: float
    t_end: float

    def __post_init__(self):
        self.field.flags.writeable = False


def _check(record: MeasurementRecord, basis: HadamardBasis | None):
    n = record.grid.n_cells
    if record.coefficients.shape != (n,):
        raise ValueError(
            f"record carries {record.coefficients.shape} coefficients for {n} cells"
        )
    if basis is not None and basis.order != n:
        raise ValueError(f"basis order {basis.order} does not match record cell count {n}")


def reconstruct_subframe(record: MeasurementRecord, basis: HadamardBasis | None = None) -> SubFrame:
    """Cell-space reconstruction of one space-variant acquisition."""
    _check(record, basis)
    grid = record.grid
    c = fwht(record.coefficients) / grid.n_cells
    means = c / grid.cell_area
    hr = means[grid.assignment_flat].reshape(grid.shape)
    return SubFrame(
        grid=grid, cell_values=c, hr_image=hr, t_start=record.t_start, t_end=record.t_end
    )


def reconstruct_uniform(record: MeasurementRecord, basis: HadamardBasis | None = None) -> np.ndarray:
    """Uniform-grid reconstruction, returned at cell resolution (side x side)."""
    _check(record, basis)
    grid = record.grid
    side = grid.uniform_cells_per_side
    if side is None:
        raise ValueError("reconstruct_uniform needs a uniform-grid record")
    c = fwht(record.coefficients) / grid.n_cells
    means = c / grid.cell_area
    return means.reshape(side, side)


def reconstruct_blip(record: MeasurementRecord, basis: HadamardBasis | None = None) -> BlipFrame:
    field = reconstruct_uniform(record, basis)
    return BlipFrame(field=field, t_start=record.t_start, t_end=record.t_end)


# ---------------------------------------------------------------------------
# PGM + sidecar export

def write_pgm(path, image: np.ndarray, maxval: int = 65535) -> None:
    """16-bit binary PGM; intensities clipped to [0, 1]."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    q = np.rint(img * maxval).astype(">u2" if maxval > 255 else np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode()
    Path(path).write_bytes(header + q.tobytes())


def pgm_bytes(image: np.ndarray, maxval: int = 65535) -> bytes:
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    q = np.rint(img * maxval).astype(">u2" if maxval > 255 else np.uint8)
    return f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode() + q.tobytes()


def dump_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def export_subframe(subframe: SubFrame, record: MeasurementRecord, stem: Path) -> None:
    """stem.pgm (image) + stem.json (grid, timestamps, raw coefficients)."""
    write_pgm(stem.with_suffix(".pgm"), subframe.hr_image)
    dump_json(stem.with_suffix(".json"), record.to_json())
