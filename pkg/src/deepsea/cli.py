"""Command line entry point: ``deepsea <command> ...``.

Every failure prints a single ``error: <cause>`` line on stderr and exits 1;
bad usage exits 2.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from . import io
from .backscatter import LUTError, backscatter_profile, build_lut, load_lut, save_lut, slab_thicknesses
from .bench import run_bench
from .pipeline import render_fog, render_frame, render_sequence
from .scene import SceneError


def _threads_default() -> int:
    try:
        return max(1, int(os.environ.get("DEEPSEA_THREADS", "1")))
    except ValueError:
        return 1


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gain", type=float)
    p.add_argument("--n", dest="n_slabs", type=int, help="number of slabs")
    p.add_argument("--dmax", dest="d_max", type=float, help="table depth, m")
    p.add_argument("--downsample", dest="lut_downsample", type=int)
    p.add_argument("--fs-coeff", dest="fs_coeff", type=float, help="forward-scatter blur, px per m")


def _overrides(args) -> dict:
    keys = ("gain", "n_slabs", "d_max", "lut_downsample", "fs_coeff")
    return {k: getattr(args, k, None) for k in keys if getattr(args, k, None) is not None}


def _scene(args):
    return io.load_scene_config(args.scene, _overrides(args))


def _lut_for(scene, cache: str | None, threads: int):
    """Reuse a cached table when it matches the scene, else build (and cache) one."""
    if cache and Path(cache).exists():
        try:
            lut = load_lut(cache, scene)
            if lut.sampling.n_slabs == scene.settings.n_slabs and lut.sampling.d_max == scene.settings.d_max:
                return lut
        except LUTError:
            pass
    lut = build_lut(scene, threads=threads)
    if cache:
        save_lut(lut, cache)
    return lut


def cmd_render(args) -> int:
    scene = _scene(args)
    frame = io.load_rgbd(args.albedo, args.depth, io.DepthEncoding.for_path(args.depth, args.depth_scale))
    lut = _lut_for(scene, args.lut, args.threads)
    out = render_frame(frame, scene, lut, debug=args.debug, threads=args.threads)
    io.save_image(out.output, args.out, out.components)
    print(f"wrote {args.out} (overexposed {out.overexposed:.3%})")
    return 0


def cmd_fog(args) -> int:
    scene = _scene(args)
    frame = io.load_rgbd(args.albedo, args.depth, io.DepthEncoding.for_path(args.depth, args.depth_scale))
    s = scene.settings
    out = render_fog(frame, scene.camera, scene.water.eta, s.fog_background, s.gain)
    io.save_image(out.output, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_sequence(args) -> int:
    job = io.load_manifest(args.manifest)
    threads = args.threads if args.threads_given else job.workers
    scene = io.load_scene_config(job.scene, job.overrides)
    out_dir = Path(args.out) if args.out else job.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    overexposed = {}

    def loader(a, d):
        return lambda: io.load_rgbd(a, d, io.DepthEncoding.for_path(d, job.depth_scale))

    def write(i, rendered):
        path = out_dir / f"frame_{i:05d}.png"
        io.save_image(rendered.output, path, rendered.components)
        overexposed[i] = rendered.overexposed

    report = render_sequence(
        [loader(a, d) for a, d in job.inputs],
        scene,
        threads=threads,
        debug=args.debug,
        on_frame=write,
        keep_frames=False,
    )
    with open(out_dir / "timing.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["frame", "phase", "ms", "overexposed_fraction"])
        w.writerow(["-", "precompute", f"{report.precompute_seconds * 1e3:.3f}", ""])
        for i, secs in enumerate(report.frame_seconds):
            if secs is not None:
                w.writerow([i, "render", f"{secs * 1e3:.3f}", f"{overexposed[i]:.6f}"])
    for i, err in report.errors:
        print(f"frame {i}: {err}", file=sys.stderr)
    ok = len(job.inputs) - len(report.errors)
    print(f"rendered {ok}/{len(job.inputs)} frames to {out_dir} (lut builds: {report.lut_builds})")
    return 0 if not report.errors else 1


def cmd_lut_build(args) -> int:
    scene = _scene(args)
    lut = build_lut(scene, threads=args.threads)
    save_lut(lut, args.out)
    print(f"wrote {args.out}: {lut.cell_w}x{lut.cell_h}x{lut.sampling.n_slabs} cells, {lut.nbytes / 2**20:.1f} MiB")
    return 0


def cmd_lut_info(args) -> int:
    lut = load_lut(args.lut)
    print(f"image {lut.width}x{lut.height}, downsample {lut.downsample}")
    print(f"cells {lut.cell_w}x{lut.cell_h}, slabs {lut.sampling.n_slabs}, d_max {lut.sampling.d_max} m")
    print(f"extent {lut.sampling.extent:.4f} m, scene {lut.scene_hash[:16]}")
    if args.scene:
        scene = _scene(args)
        print("scene match: " + ("yes" if scene.fingerprint() == lut.scene_hash else "no"))
    return 0


def cmd_profile(args) -> int:
    scene = _scene(args)
    sampling = slab_thicknesses(scene.settings.n_slabs, scene.settings.d_max)
    prof = backscatter_profile(scene, sampling)
    if args.out:
        io.write_profile_csv(args.out, prof)
    else:
        io.write_profile_csv(sys.stdout, prof)
    return 0


def cmd_bench(args) -> int:
    scene = _scene(args)
    w, h = args.size
    res = run_bench(scene, w, h, args.frames, args.threads)
    for line in res.lines():
        print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deepsea", description="Deep-sea RGB-D image simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, scene=True):
        if scene:
            p.add_argument("--scene", required=True, help="JSON scene config")
            _add_overrides(p)
        p.add_argument("--threads", type=int, default=None, help="worker threads (env DEEPSEA_THREADS)")
        p.add_argument("--seed-free", action="store_true", help="accepted for compatibility; always deterministic")

    p = sub.add_parser("render", help="render one RGB-D pair")
    common(p)
    p.add_argument("--albedo", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--depth-scale", type=float, default=0.001, help="meters per unit for 16-bit PNG depth")
    p.add_argument("--out", required=True)
    p.add_argument("--lut", help="LUT cache file (reused when it matches the scene)")
    p.add_argument("--debug", action="store_true", help="also write component PFMs")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("fog", help="fog-model baseline")
    common(p)
    p.add_argument("--albedo", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--depth-scale", type=float, default=0.001)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fog)

    p = sub.add_parser("sequence", help="render a manifest of frames")
    common(p, scene=False)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="output directory (defaults to the manifest's)")
    p.add_argument("--debug", action="store_true")
    p.set_defaults(func=cmd_sequence)

    p = sub.add_parser("lut", help="precompute or inspect backscatter tables")
    lsub = p.add_subparsers(dest="lut_command", required=True)
    q = lsub.add_parser("build")
    common(q)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_lut_build)
    q = lsub.add_parser("info")
    q.add_argument("--lut", required=True)
    q.add_argument("--scene", help="also report whether the table matches this scene")
    q.add_argument("--threads", type=int, default=None)
    _add_overrides(q)
    q.set_defaults(func=cmd_lut_info)

    p = sub.add_parser("profile", help="normalized backscatter along the optical axis (CSV)")
    common(p)
    p.add_argument("--out", help="CSV path (stdout if omitted)")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("bench", help="time table build, frame render and brute force")
    common(p)
    p.add_argument("--size", type=_size, default=(640, 480))
    p.add_argument("--frames", type=int, default=20)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.threads_given = args.threads is not None
    if args.threads is None:
        args.threads = _threads_default()
    try:
        return args.func(args)
    except (SceneError, LUTError, io.ImageFormatError, ValueError, OSError) as e:
        msg = str(e).replace("\n", " ")
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
