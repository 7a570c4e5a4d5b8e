"""The acquisition loop: blip, decide, fixate, fuse, persist.

One session cycle acquires a blip-frame, makes a steering decision, then
records a fixation of four half-cell-shifted sub-frames at the decided fovea.
A live weighted-average composite is refreshed after every sub-frame; the
linear-constraints composite is recomputed per fixation (configurable).  All
timing derives from the simulated mask clock, so identical plans, scenes and
seeds produce byte-identical outputs whether the session runs headless or
streamed.

The engine is a generator of events so the gateway can interleave control
messages (clicks, mode switches, parameter changes) between events; offline
runs simply drain it.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cellgrid import FoveaSpec, make_foveated_grid, make_uniform_grid, shift_fovea
from .detector import DetectorConfig, DetectorSession, MeasurementRecord, subframe_period
from .fusion import (
    CompositeImage,
    apply_motion_mask,
    linear_constraints,
    weighted_average,
)
from .guidance import P_JUMP_DEFAULT, TAU_DEFAULT, make_guidance_state, next_decision
from .hadamard import build_basis
from .reconstruct import dump_json, reconstruct_blip, reconstruct_subframe, write_pgm

SESSION_SCHEMA = 1
MODES = ("motion", "wavelet", "manual", "uniform-baseline")
CADENCES = ("fixation", "final", "none")
_GUIDANCE_STREAM = 0x6D


@dataclass(frozen=True)
class GridTemplate:
    width: int = 128
    height: int = 128
    cell_count: int = 1024
    fovea_half_extent: int = 16
    fovea_cell_size: int = 2
    blip_cells_per_side: int = 16
    uniform_cells_per_side: int = 32
    candidate_per_side: int = 8

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class AcquisitionPlan:
    mode: str = "motion"
    fixation_length: int = 4          # one sub-frame per distinct fovea shift
    blip_every: int = 1               # blip before every k-th fixation; 0 = never
    p_jump: float = P_JUMP_DEFAULT
    tau: float = TAU_DEFAULT
    smoothing_weight: float = 0.1
    max_exposure: float = 4.0
    composite_cadence: str = "fixation"
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    grid: GridTemplate = field(default_factory=GridTemplate)
    seed: int = 0
    scripted_clicks: tuple = ()       # ((t, x, y), ...) consumed at decision points
    solver_options: dict | None = None

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode '{self.mode}' (have {MODES})")
        if self.composite_cadence not in CADENCES:
            raise ValueError(f"unknown composite cadence '{self.composite_cadence}'")
        if self.fixation_length != 4:
            raise ValueError("fixation_length must equal the 4 fovea shift indices")
        if not 0.0 <= self.p_jump <= 1.0:
            raise ValueError("p_jump must be a probability")
        if self.blip_every < 0:
            raise ValueError("blip_every must be >= 0")
        g = self.grid
        if self.mode != "uniform-baseline":
            # probe-build the fovea grid at the field center: catches an
            # oversized fovea or an infeasible cell budget before starting
            cx, cy = g.width // 2, g.height // 2
            make_foveated_grid(
                g.width, g.height, g.cell_count,
                [FoveaSpec((cx, cy), g.fovea_half_extent, g.fovea_cell_size)],
                seed=self.seed,
            )
            if g.width % g.blip_cells_per_side or g.height % g.blip_cells_per_side:
                raise ValueError("blip grid does not divide returned field")
        else:
            make_uniform_grid(g.width, g.height, g.uniform_cells_per_side)

    def to_json(self) -> dict:
        return {
            "schema": SESSION_SCHEMA,
            "mode": self.mode,
            "fixation_length": self.fixation_length,
            "blip_every": self.blip_every,
            "p_jump": self.p_jump,
            "tau": self.tau,
            "smoothing_weight": self.smoothing_weight,
            "max_exposure": self.max_exposure,
            "composite_cadence": self.composite_cadence,
            "detector": {
                "mask_rate": self.detector.mask_rate,
                "noise_sigma": self.detector.noise_sigma,
                "shot_noise": self.detector.shot_noise,
                "photon_budget": self.detector.photon_budget,
                "pair_overhead": self.detector.pair_overhead,
                "seed": self.detector.seed,
            },
            "grid": self.grid.to_json(),
            "seed": self.seed,
            "scripted_clicks": [list(c) for c in self.scripted_clicks],
        }


@dataclass
class SessionEvent:
    kind: str        # hello | blip | decision | subframe | composite | end
    payload: dict


@dataclass
class SessionControls:
    """Live-adjustable knobs, applied at the next decision/fixation boundary."""

    mode: str
    tau: float
    smoothing_weight: float
    p_jump: float
    _click: tuple | None = None

    def submit_click(self, x: int, y: int) -> None:
        self._click = (int(x), int(y))  # newest click wins

    def take_click(self):
        click, self._click = self._click, None
        return click


@dataclass
class CompositeEntry:
    kind: str                    # "weighted" | "linear"
    after_subframe: int          # index of the newest contributing sub-frame
    contributing: tuple          # global sub-frame indices fused
    composite: CompositeImage


@dataclass
class SessionOutput:
    plan: AcquisitionPlan
    duration: float
    subframes: list = field(default_factory=list)
    subframe_records: list = field(default_factory=list)
    blips: list = field(default_factory=list)
    blip_records: list = field(default_factory=list)
    decisions: list = field(default_factory=list)
    composites: list = field(default_factory=list)
    weighted_final: CompositeImage | None = None

    def persist(self, out_dir) -> Path:
        out = Path(out_dir)
        (out / "subframes").mkdir(parents=True, exist_ok=True)
        (out / "blips").mkdir(exist_ok=True)
        (out / "composites").mkdir(exist_ok=True)
        for i, (sf, rec) in enumerate(zip(self.subframes, self.subframe_records)):
            write_pgm(out / "subframes" / f"{i:04d}.pgm", sf.hr_image)
            doc = rec.to_json()
            doc["index"] = i
            dump_json(out / "subframes" / f"{i:04d}.json", doc)
        for i, (bf, rec) in enumerate(zip(self.blips, self.blip_records)):
            write_pgm(out / "blips" / f"{i:04d}.pgm", bf.field)
            doc = rec.to_json()
            doc["index"] = i
            dump_json(out / "blips" / f"{i:04d}.json", doc)
        for i, entry in enumerate(self.composites):
            write_pgm(out / "composites" / f"{i:04d}.pgm", entry.composite.hr_image)
            write_pgm(
                out / "composites" / f"{i:04d}_exposure.pgm",
                entry.composite.exposure_map / self.plan.max_exposure,
            )
            dump_json(
                out / "composites" / f"{i:04d}.json",
                {
                    "schema": SESSION_SCHEMA,
                    "kind": entry.kind,
                    "after_subframe": entry.after_subframe,
                    "contributing": list(entry.contributing),
                    "exposure_scale_s": self.plan.max_exposure,
                },
            )
        with open(out / "decisions.jsonl", "w") as fh:
            for d in self.decisions:
                fh.write(json.dumps(d.to_json(), sort_keys=True, separators=(",", ":")) + "\n")
        dump_json(out / "timing.json", timing_report(self))
        dump_json(
            out / "session.json",
            {
                "schema": SESSION_SCHEMA,
                "plan": self.plan.to_json(),
                "duration": self.duration,
                "subframes": len(self.subframes),
                "blips": len(self.blips),
                "decisions": len(self.decisions),
                "composites": len(self.composites),
            },
        )
        return out


class SessionEngine:
    """Generator-based session loop; the gateway interleaves control input."""

    def __init__(self, plan: AcquisitionPlan, scene, duration: float):
        plan.validate()
        if duration < 0:
            raise ValueError("duration must be non-negative")
        g = plan.grid
        if (scene.height, scene.width) != (g.height, g.width):
            raise ValueError(
                f"scene is {scene.width}x{scene.height}, plan expects {g.width}x{g.height}"
            )
        self.plan = plan
        self.scene = scene
        self.duration = duration
        self.controls = SessionControls(
            mode=plan.mode, tau=plan.tau,
            smoothing_weight=plan.smoothing_weight, p_jump=plan.p_jump,
        )
        self.session = DetectorSession(plan.detector)
        self.guidance = make_guidance_state(
            g.width, g.height, g.fovea_half_extent,
            blip_side=g.blip_cells_per_side, per_side=g.candidate_per_side,
        )
        self.rng = np.random.default_rng(
            np.random.SeedSequence(entropy=plan.seed, spawn_key=(_GUIDANCE_STREAM,))
        )
        self.basis = build_basis(g.cell_count)
        self.blip_grid = make_uniform_grid(g.width, g.height, g.blip_cells_per_side)
        self.blip_basis = build_basis(self.blip_grid.n_cells)
        self._base_grids: dict = {}
        self._clicks = sorted(plan.scripted_clicks)
        self._click_idx = 0
        self.output = SessionOutput(plan=plan, duration=duration)

    # ------------------------------------------------------------ helpers

    def _base_grid(self, center):
        if center not in self._base_grids:
            g = self.plan.grid
            self._base_grids[center] = make_foveated_grid(
                g.width, g.height, g.cell_count,
                [FoveaSpec(center, g.fovea_half_extent, g.fovea_cell_size)],
                seed=self.plan.seed,
            )
        return self._base_grids[center]

    def _due_click(self, t):
        """Newest scripted click due by t; a live click (if any) wins."""
        due = None
        while self._click_idx < len(self._clicks) and self._clicks[self._click_idx][0] <= t:
            due = self._clicks[self._click_idx][1:]
            self._click_idx += 1
        live = self.controls.take_click()
        return live if live is not None else due

    def _fusion_window(self):
        """Newest sub-frames worth fusing (exposure cap plus a small margin)."""
        subs = self.output.subframes
        period = subframe_period(self.plan.grid.cell_count, self.plan.detector)
        cap = max(1, int(round(self.plan.max_exposure / period))) + 8
        if len(subs) <= cap:
            idx = list(range(len(subs)))
        else:
            idx = list(range(len(subs) - cap, len(subs)))
        return idx, [subs[i] for i in idx]

    def _fuse(self, kind):
        idx, subs = self._fusion_window()
        mask = apply_motion_mask(self.guidance.stack, subs, self.plan.max_exposure)
        if kind == "weighted":
            comp = weighted_average(subs, "area-inverse", mask)
        else:
            comp = linear_constraints(
                subs, mask,
                smoothing_weight=self.controls.smoothing_weight,
                solver_options=self.plan.solver_options,
            )
        return CompositeEntry(
            kind=kind, after_subframe=idx[-1], contributing=tuple(idx), composite=comp
        )

    # ------------------------------------------------------------ the loop

    def events(self):
        plan = self.plan
        yield SessionEvent("hello", {
            "width": plan.grid.width, "height": plan.grid.height,
            "mode": self.controls.mode, "duration": self.duration,
            "tau": self.controls.tau, "lambda": self.controls.smoothing_weight,
        })
        if plan.mode == "uniform-baseline":
            yield from self._uniform_loop()
            return
        cycle = 0
        while self.session.clock < self.duration:
            if plan.blip_every and cycle % plan.blip_every == 0:
                rec = self.session.acquire_blip(self.scene, self.blip_grid, self.blip_basis)
                blip = reconstruct_blip(rec)
                self.guidance.observe_blip(blip.field, rec.t_end, self.controls.tau)
                self.output.blips.append(blip)
                self.output.blip_records.append(rec)
                yield SessionEvent("blip", {"index": len(self.output.blips) - 1, "frame": blip})

            t = self.session.clock
            mode = self.controls.mode
            decision = next_decision(
                self.guidance, t, self.rng,
                manual_click=self._due_click(t),
                p_jump=0.0 if mode == "manual" else self.controls.p_jump,
                use_motion=mode == "motion",
                use_wavelet=mode == "wavelet",
            )
            self.guidance.note_decision(decision)
            self.output.decisions.append(decision)
            yield SessionEvent("decision", {"decision": decision})

            base = self._base_grid(decision.center)
            for i in range(plan.fixation_length):
                variant = len(self.output.subframes)
                grid = shift_fovea(base, i, variant=variant)
                rec = self.session.acquire(self.scene, grid, self.basis)
                sub = reconstruct_subframe(rec)
                self.output.subframes.append(sub)
                self.output.subframe_records.append(rec)
                yield SessionEvent("subframe", {"index": variant, "frame": sub})
                entry = self._fuse("weighted")
                self.output.weighted_final = entry.composite
                yield SessionEvent("composite", {"entry": entry, "persisted": False})
            if plan.composite_cadence == "fixation":
                entry = self._fuse("linear")
                self.output.composites.append(entry)
                yield SessionEvent("composite", {"entry": entry, "persisted": True})
            cycle += 1
        if plan.composite_cadence == "final" and self.output.subframes:
            entry = self._fuse("linear")
            self.output.composites.append(entry)
            yield SessionEvent("composite", {"entry": entry, "persisted": True})
        yield SessionEvent("end", {"output": self.output, "timing": timing_report(self.output)})

    def _uniform_loop(self):
        g = self.plan.grid
        grid = make_uniform_grid(g.width, g.height, g.uniform_cells_per_side)
        basis = build_basis(grid.n_cells)
        while self.session.clock < self.duration:
            rec = self.session.acquire(self.scene, grid, basis)
            sub = reconstruct_subframe(rec)
            self.output.subframes.append(sub)
            self.output.subframe_records.append(rec)
            yield SessionEvent(
                "subframe", {"index": len(self.output.subframes) - 1, "frame": sub}
            )
        yield SessionEvent("end", {"output": self.output, "timing": timing_report(self.output)})


def run_session(plan: AcquisitionPlan, scene, duration: float) -> SessionOutput:
    """Drain the engine headlessly and return the collected outputs."""
    engine = SessionEngine(plan, scene, duration)
    for event in engine.events():
        pass
    return engine.output


# ---------------------------------------------------------------- timing

def timing_report(output: SessionOutput) -> dict:
    """Rates and pattern accounting of a session."""
    plan = output.plan
    cfg = plan.detector

    def period(rec):
        return rec.duration() + (rec.pattern_count // 2) * cfg.pair_overhead

    sub_periods = [period(r) for r in output.subframe_records]
    blip_periods = [period(r) for r in output.blip_records]
    sub_patterns = sum(r.pattern_count for r in output.subframe_records)
    blip_patterns = sum(r.pattern_count for r in output.blip_records)
    report = {
        "schema": SESSION_SCHEMA,
        "mode": plan.mode,
        "subframe_count": len(output.subframe_records),
        "blip_count": len(output.blip_records),
        "pattern_count_total": sub_patterns + blip_patterns,
        "decision_counts": dict(sorted(Counter(d.reason for d in output.decisions).items())),
    }
    if sub_periods:
        rate = 1.0 / (sum(sub_periods) / len(sub_periods))
        report["subframe_rate_hz"] = rate
        report["fovea_update_hz"] = (
            rate / plan.fixation_length if plan.mode != "uniform-baseline" else None
        )
    total_time = sum(sub_periods) + sum(blip_periods)
    report["blip_overhead_fraction"] = (
        sum(blip_periods) / total_time if total_time > 0 else 0.0
    )
    return report


# ---------------------------------------------------------------- replay

def replay(out_dir):
    """Rebuild sub-frames from persisted records; verify stored images match.

    Returns (subframes, mismatches): reconstruction re-run from raw
    coefficients, and the indices whose stored PGM bytes differ from the
    recomputation.
    """
    out = Path(out_dir)
    subframes = []
    mismatches = []
    for rec_path in sorted((out / "subframes").glob("*.json")):
        doc = json.loads(rec_path.read_text())
        rec = MeasurementRecord.from_json(doc)
        sub = reconstruct_subframe(rec)
        subframes.append(sub)
        stored = rec_path.with_suffix(".pgm").read_bytes()
        from .reconstruct import pgm_bytes

        if stored != pgm_bytes(sub.hr_image):
            mismatches.append(doc.get("index", len(subframes) - 1))
    return subframes, mismatches
