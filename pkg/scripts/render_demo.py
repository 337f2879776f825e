"""Render a synthetic seafloor under the two-light rig, with the fog baseline for comparison.

    python scripts/render_demo.py --out demo/
"""

import argparse
from pathlib import Path

from deepsea import io
from deepsea.backscatter import build_lut
from deepsea.bench import synthetic_frame
from deepsea.pipeline import render_fog, render_frame


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scene", default="configs/two_light_45deg.json")
    ap.add_argument("--out", default="demo")
    ap.add_argument("--gain", type=float, default=None)
    ap.add_argument("--fs-coeff", type=float, default=0.5)
    args = ap.parse_args()

    overrides = {"fs_coeff": args.fs_coeff}
    if args.gain is not None:
        overrides["gain"] = args.gain
    scene = io.load_scene_config(args.scene, overrides)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    frame = synthetic_frame(scene.camera.width, scene.camera.height)
    io.write_albedo_png(out / "albedo.png", frame.albedo)
    io.write_depth_png16(out / "depth.png", frame.depth)

    lut = build_lut(scene)
    rendered = render_frame(frame, scene, lut, debug=True)
    io.save_image(rendered.output, out / "underwater.png", rendered.components)
    fog = render_fog(frame, scene.camera, scene.water.eta, scene.settings.fog_background, 1.0)
    io.save_image(fog.output, out / "fog.png")
    print(f"wrote {out}/ (overexposed {rendered.overexposed:.2%})")


if __name__ == "__main__":
    main()
