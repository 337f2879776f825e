"""Frame composition: direct signal + forward scatter + backscatter, fog baseline, tone mapping."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .backscatter import BackscatterLUT, LUTError, StaleLUTError, build_lut, sample_lut
from .filters import masked_gaussian
from .radiometry import direct_signal_map, normals_from_depth, unproject_depth
from .scene import CameraModel, FrameInput, Scene, SceneError, Spectrum

# row block size for chunked per-pixel work; fixed so output never depends on worker count
ROW_BLOCK = 64


@dataclass(frozen=True, eq=False)
class RenderedFrame:
    linear: np.ndarray  # (H, W, 3) float64, pre tone-map
    output: np.ndarray  # (H, W, 3) uint8
    overexposed: float  # fraction of pixels with any channel clipped
    components: dict[str, np.ndarray] | None = None


def _check_dims(frame: FrameInput, camera: CameraModel) -> None:
    if frame.shape != (camera.height, camera.width):
        raise SceneError(
            "frame",
            f"frame is {frame.shape[1]}x{frame.shape[0]}, camera expects {camera.width}x{camera.height}",
        )


def _row_blocks(h: int):
    return [slice(r, min(r + ROW_BLOCK, h)) for r in range(0, h, ROW_BLOCK)]


def _map_blocks(fn, h: int, threads: int) -> None:
    blocks = _row_blocks(h)
    if threads <= 1:
        for b in blocks:
            fn(b)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(fn, blocks))


def render_direct(frame: FrameInput, scene: Scene, *, threads: int = 1) -> np.ndarray:
    """Attenuated Lambertian signal from all lights; pixels without depth stay 0."""
    _check_dims(frame, scene.camera)
    points = unproject_depth(scene.camera, frame.depth)
    normals = normals_from_depth(scene.camera, frame.depth)
    d2 = np.linalg.norm(points, axis=-1)
    valid = frame.valid
    out = np.zeros(points.shape)

    def block(rows: slice):
        m = valid[rows]
        if not m.any():
            return
        e = direct_signal_map(
            points[rows][m],
            normals[rows][m],
            frame.albedo[rows][m],
            d2[rows][m],
            scene.lights,
            scene.water.eta,
            scene.settings.min_light_distance,
        )
        out[rows][m] = e

    _map_blocks(block, out.shape[0], threads)
    return out


def _sigma_levels(max_sigma: float) -> np.ndarray:
    fine = np.arange(0.0, 2.0 + 1e-9, 0.25)
    if max_sigma <= fine[-1]:
        return fine[: int(np.searchsorted(fine, max_sigma, side="left")) + 1]
    n = int(np.ceil(np.log(max_sigma / 2.0) / np.log(1.1)))
    return np.concatenate([fine, 2.0 * 1.1 ** np.arange(1, n + 1)])


def forward_scatter(direct: np.ndarray, ray_len: np.ndarray, fs_coeff: float) -> np.ndarray:
    """Depth-dependent Gaussian blur of the direct signal.

    Each pixel's kernel has ``sigma = fs_coeff * ray_len`` pixels, truncated at
    3 sigma and renormalized over pixels with valid depth. The blur is
    evaluated exactly on a ladder of sigma values (0.25 px steps up to 2 px,
    then 10% steps) and linearly interpolated between the two levels
    bracketing each pixel's sigma.
    """
    out = np.zeros_like(direct, dtype=np.float64)
    if fs_coeff <= 0:
        return out
    valid = ray_len > 0
    if not valid.any():
        return out
    sigma = np.where(valid, fs_coeff * ray_len, 0.0)
    levels = _sigma_levels(float(sigma.max()))
    hi = np.clip(np.searchsorted(levels, sigma, side="left"), 0, len(levels) - 1)
    lo = np.maximum(hi - 1, 0)
    span = levels[hi] - levels[lo]
    w = np.where(span > 0, (sigma - levels[lo]) / np.where(span > 0, span, 1.0), 1.0)
    for k, level in enumerate(levels):
        as_lo = valid & (lo == k) & (w < 1.0)
        as_hi = valid & (hi == k)
        if not (as_lo.any() or as_hi.any()):
            continue
        blurred = masked_gaussian(direct, valid, level)
        out[as_lo] += (1.0 - w[as_lo])[:, None] * blurred[as_lo]
        out[as_hi] += w[as_hi][:, None] * blurred[as_hi]
    return out


def tone_map(linear: np.ndarray, gain: float) -> tuple[np.ndarray, float]:
    """8-bit image ``round(255 * clip(gain * x, 0, 1))`` and the clipped-pixel fraction."""
    if not gain > 0:
        raise ValueError("gain must be > 0")
    scaled = gain * np.asarray(linear, dtype=np.float64)
    over = np.any(scaled > 1.0, axis=-1)
    img = np.round(255.0 * np.clip(scaled, 0.0, 1.0)).astype(np.uint8)
    return img, float(over.mean()) if over.size else 0.0


def render_frame(
    frame: FrameInput,
    scene: Scene,
    lut: BackscatterLUT,
    *,
    debug: bool = False,
    threads: int = 1,
) -> RenderedFrame:
    _check_dims(frame, scene.camera)
    if lut.scene_hash != scene.fingerprint():
        raise StaleLUTError("lookup table was built for a different scene; rebuild it")
    if (lut.width, lut.height) != (scene.camera.width, scene.camera.height):
        raise LUTError(f"LUT built for {lut.width}x{lut.height}, camera is {scene.camera.width}x{scene.camera.height}")
    ray_len = np.linalg.norm(unproject_depth(scene.camera, frame.depth), axis=-1)
    direct = render_direct(frame, scene, threads=threads)
    forward = forward_scatter(direct, ray_len, scene.settings.fs_coeff)
    back = np.empty_like(direct)

    cols = np.arange(ray_len.shape[1])

    def block(rows: slice):
        rr, cc = np.meshgrid(np.arange(ray_len.shape[0])[rows], cols, indexing="ij")
        back[rows] = sample_lut(lut, cc, rr, ray_len[rows])

    _map_blocks(block, back.shape[0], threads)
    linear = direct + forward + back
    output, over = tone_map(linear, scene.settings.gain)
    comps = {"direct": direct, "forward": forward, "backscatter": back} if debug else None
    return RenderedFrame(linear, output, over, comps)


def render_fog(
    frame: FrameInput,
    camera: CameraModel,
    eta: Spectrum,
    background: Spectrum,
    gain: float,
) -> RenderedFrame:
    """Shallow-water baseline ``I = J e^{-eta d} + B (1 - e^{-eta d})`` with d the ray length."""
    _check_dims(frame, camera)
    d = np.linalg.norm(unproject_depth(camera, frame.depth), axis=-1)
    t = np.exp(-d[..., None] * eta.array)
    linear = frame.albedo * t + background.array * (1.0 - t)
    linear[~frame.valid] = background.array
    output, over = tone_map(linear, gain)
    return RenderedFrame(linear, output, over)


# -- sequences ----------------------------------------------------------------


@dataclass
class SequenceReport:
    frames: list[RenderedFrame | None]
    frame_seconds: list[float | None]
    precompute_seconds: float
    lut_builds: int
    errors: list[tuple[int, str]] = field(default_factory=list)


FrameSource = FrameInput | Callable[[], FrameInput]


def render_sequence(
    frames: Iterable[FrameSource],
    scene: Scene,
    *,
    lut: BackscatterLUT | None = None,
    threads: int = 1,
    debug: bool = False,
    on_frame: Callable[[int, RenderedFrame], None] | None = None,
    keep_frames: bool = True,
) -> SequenceReport:
    """Render frames against one shared table.

    ``frames`` may hold ready :class:`FrameInput` objects or zero-argument
    loaders; a frame that fails to load or render is recorded in
    ``errors`` and the sequence carries on. The table is built at most once,
    and its build time is reported apart from per-frame times. With
    ``keep_frames=False`` only ``on_frame`` sees the rendered images.
    """
    sources: Sequence[FrameSource] = list(frames)
    builds = 0
    t0 = time.perf_counter()
    if lut is None:
        lut = build_lut(scene, threads=threads)
        builds = 1
    precompute = time.perf_counter() - t0

    def one(i: int):
        try:
            src = sources[i]
            frame = src() if callable(src) else src
            start = time.perf_counter()
            rendered = render_frame(frame, scene, lut, debug=debug)
            secs = time.perf_counter() - start
            if on_frame is not None:
                on_frame(i, rendered)
            return (rendered if keep_frames else None), secs, None
        except Exception as e:  # noqa: BLE001 - reported per frame
            return None, None, f"{type(e).__name__}: {e}"

    results: list = [None] * len(sources)
    if threads <= 1:
        results = [one(i) for i in range(len(sources))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(len(sources))))

    report = SequenceReport([], [], precompute, builds)
    for i, (rendered, secs, err) in enumerate(results):
        report.frames.append(rendered)
        report.frame_seconds.append(secs)
        if err is not None:
            report.errors.append((i, err))
    return report
