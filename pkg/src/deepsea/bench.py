"""Timing harness: table build, per-frame render, and the brute-force comparator."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .backscatter import backscatter_bruteforce, build_lut, default_sampling
from .pipeline import render_frame
from .scene import FrameInput, Scene, validate_scene


def resize_scene(scene: Scene, width: int, height: int) -> Scene:
    """Same rig with the camera resampled to ``width x height`` (intrinsics scaled)."""
    c = scene.camera
    sx, sy = width / c.width, height / c.height
    cam = replace(c, width=width, height=height, fx=c.fx * sx, fy=c.fy * sy, cx=c.cx * sx, cy=c.cy * sy)
    return validate_scene(cam, scene.lights, scene.water, scene.settings)


def synthetic_frame(width: int, height: int, seed: int = 0) -> FrameInput:
    """Sandy seafloor seen obliquely: depth grows toward the top of the image."""
    rng = np.random.default_rng(seed)
    rows = np.linspace(1.0, 0.0, height)[:, None]
    depth = np.broadcast_to(1.5 + 3.5 * rows, (height, width)).copy()
    depth += 0.05 * rng.standard_normal((height, width))
    grain = 0.08 * rng.standard_normal((height, width, 1))
    albedo = np.clip(np.array([0.55, 0.5, 0.4]) + grain, 0.0, 1.0)
    return FrameInput(albedo, depth)


@dataclass
class BenchResult:
    width: int
    height: int
    n_slabs: int
    precompute_s: float
    frame_ms: list[float]
    brute_step_m: float
    brute_ms_per_frame: float

    @property
    def mean_ms(self) -> float:
        return float(np.mean(self.frame_ms))

    @property
    def p95_ms(self) -> float:
        return float(np.percentile(self.frame_ms, 95))

    @property
    def speedup(self) -> float:
        return self.brute_ms_per_frame / self.mean_ms

    def lines(self) -> list[str]:
        return [
            f"size {self.width}x{self.height}, N={self.n_slabs}",
            f"precompute_s {self.precompute_s:.3f}",
            f"render_ms_mean {self.mean_ms:.2f}",
            f"render_ms_p95 {self.p95_ms:.2f}",
            f"bruteforce_step_m {self.brute_step_m:.3e}",
            f"bruteforce_ms_per_frame_est {self.brute_ms_per_frame:.3e}",
            f"speedup {self.speedup:.3e}",
        ]


def brute_force_frame_ms(scene: Scene, step: float, probe_steps: int = 1 << 15, probes: int = 2) -> float:
    """Estimated ms for marching every pixel of a frame to d_max at ``step``.

    Marching cost is linear in the number of steps, so a few pixels are timed
    at ``probe_steps`` steps and scaled up; matched-accuracy steps are often
    far too small to run in full.
    """
    cam = scene.camera
    d_max = scene.settings.d_max
    per_step = []
    for k in range(probes):
        u = (k + 1) * cam.width // (probes + 1)
        v = (k + 1) * cam.height // (probes + 1)
        t0 = time.perf_counter()
        backscatter_bruteforce(scene, u, v, 0.0, d_max / probe_steps)
        per_step.append((time.perf_counter() - t0) / probe_steps)
    steps_per_pixel = d_max / step
    return float(np.mean(per_step)) * steps_per_pixel * cam.width * cam.height * 1e3


def run_bench(scene: Scene, width: int, height: int, frames: int, threads: int = 1) -> BenchResult:
    scene = resize_scene(scene, width, height)
    sampling = default_sampling(scene)
    t0 = time.perf_counter()
    lut = build_lut(scene, sampling, threads=threads)
    precompute = time.perf_counter() - t0
    frame = synthetic_frame(width, height)
    times = []
    for _ in range(frames):
        t0 = time.perf_counter()
        render_frame(frame, scene, lut, threads=threads)
        times.append((time.perf_counter() - t0) * 1e3)
    step = sampling.thicknesses[0]
    return BenchResult(width, height, sampling.n_slabs, precompute, times, step, brute_force_frame_ms(scene, step))
