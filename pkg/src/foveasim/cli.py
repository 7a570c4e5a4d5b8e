"""Command-line interface.

  foveasim run     simulate a session and persist its outputs
  foveasim replay  rebuild reconstructions from persisted raw records
  foveasim psf     image an impulse lattice through the fusion pipeline
  foveasim serve   stream a live session to the browser console
"""

from __future__ import annotations

import argparse
import sys

from .detector import DetectorConfig
from .runtime import AcquisitionPlan, GridTemplate, run_session, timing_report


def _add_plan_args(p: argparse.ArgumentParser):
    p.add_argument("--scene", default="builtin:moving-square",
                   help="builtin:<name> or path to a scene script JSON")
    p.add_argument("--mode", default="motion", choices=["motion", "wavelet", "manual"])
    p.add_argument("--duration", type=float, default=15.0, help="simulated seconds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sigma", type=float, default=0.0,
                   help="detector reading noise as a fraction of the full-scale "
                        "reading (values around 1e-4 are clearly visible)")
    p.add_argument("--lambda", dest="smoothing", type=float, default=0.1,
                   help="smoothing weight of the linear-constraints fusion")
    p.add_argument("--tau", type=float, default=0.1, help="blip difference threshold")
    p.add_argument("--p-jump", type=float, default=0.2, help="stochastic saccade probability")
    p.add_argument("--max-exposure", type=float, default=4.0,
                   help="seconds of sub-frame history a composite may use")
    p.add_argument("--uniform-baseline", action="store_true",
                   help="conventional uniform 32x32 frames instead of foveated sampling")
    p.add_argument("--cadence", default="fixation", choices=["fixation", "final", "none"],
                   help="when to compute linear-constraints composites")


def _plan_from(args) -> AcquisitionPlan:
    return AcquisitionPlan(
        mode="uniform-baseline" if args.uniform_baseline else args.mode,
        p_jump=args.p_jump,
        tau=args.tau,
        smoothing_weight=args.smoothing,
        max_exposure=args.max_exposure,
        composite_cadence=args.cadence,
        detector=DetectorConfig(noise_sigma=args.noise_sigma, seed=args.seed),
        seed=args.seed,
    )


def _scene_from(args):
    from .scene import resolve_scene

    return resolve_scene(args.scene)


def cmd_run(args) -> int:
    plan = _plan_from(args)
    scene = _scene_from(args)
    output = run_session(plan, scene, args.duration)
    root = output.persist(args.out_dir)
    if args.overlay_png and output.composites:
        from .fusion import export_composite_png

        for i, entry in enumerate(output.composites):
            export_composite_png(
                entry.composite, root / "composites" / f"{i:04d}_overlay.png",
                plan.max_exposure,
            )
    rep = timing_report(output)
    print(f"session written to {root}")
    print(f"  sub-frames: {rep['subframe_count']}  blips: {rep['blip_count']}")
    if "subframe_rate_hz" in rep:
        print(f"  sub-frame rate: {rep['subframe_rate_hz']:.2f} Hz"
              f"  blip overhead: {100 * rep['blip_overhead_fraction']:.1f}%")
    return 0


def cmd_replay(args) -> int:
    from .runtime import replay

    subframes, mismatches = replay(args.in_dir)
    print(f"replayed {len(subframes)} sub-frames from {args.in_dir}")
    if mismatches:
        print(f"MISMATCH: stored images differ at indices {mismatches}")
        return 1
    print("all stored images match the re-reconstruction")
    return 0


def cmd_psf(args) -> int:
    from .cellgrid import FoveaSpec, make_foveated_grid, shift_fovea
    from .fusion import psf_probe
    from .reconstruct import write_pgm

    g = GridTemplate()
    base = make_foveated_grid(
        g.width, g.height, g.cell_count,
        [FoveaSpec((g.width // 2, g.height // 2), g.fovea_half_extent, g.fovea_cell_size)],
        seed=args.seed,
    )
    grids = [shift_fovea(base, k % 4, variant=k) for k in range(args.frames)]
    comp = psf_probe(grids, args.method, impulse_spacing=args.spacing,
                     smoothing_weight=0.0 if args.method == "linear" else 0.0)
    write_pgm(args.out, comp.hr_image)
    print(f"{args.method} PSF probe from {args.frames} sub-frames written to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .gateway import build_app

    app = build_app(_plan_from(args), _scene_from(args), args.duration, realtime=args.realtime)
    print(f"gateway on ws://{args.host}:{args.port}/ws")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="foveasim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a session and persist outputs")
    _add_plan_args(p_run)
    p_run.add_argument("--out-dir", required=True)
    p_run.add_argument("--overlay-png", action="store_true",
                       help="also export false-color composites (exposure in red)")
    p_run.set_defaults(fn=cmd_run)

    p_rep = sub.add_parser("replay", help="reconstruct from persisted records")
    p_rep.add_argument("--in-dir", required=True)
    p_rep.set_defaults(fn=cmd_replay)

    p_psf = sub.add_parser("psf", help="impulse-lattice probe of the fusion PSF")
    p_psf.add_argument("--out", required=True, help="output PGM path")
    p_psf.add_argument("--frames", type=int, default=36)
    p_psf.add_argument("--method", default="linear", choices=["linear", "weighted"])
    p_psf.add_argument("--spacing", type=int, default=16)
    p_psf.add_argument("--seed", type=int, default=0)
    p_psf.set_defaults(fn=cmd_psf)

    p_srv = sub.add_parser("serve", help="stream a live session over a websocket")
    _add_plan_args(p_srv)
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8765)
    p_srv.add_argument("--realtime", action="store_true",
                       help="pace the stream to the simulated clock")
    p_srv.set_defaults(fn=cmd_serve)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
