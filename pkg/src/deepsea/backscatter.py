"""Single-scattering backscatter: adaptive slabs, per-voxel irradiance and the lookup table.

The volume in front of the camera is cut into ``N`` slabs whose thickness
grows like the terms of the Taylor series of ``e^N``. For every LUT cell the
slab contributions are accumulated along the cell's viewing ray, so a pixel
at any depth only needs one interpolation between two stored partial sums.

Slabs are measured along each viewing ray (distance from the camera center),
which is the same parametrisation that pixels use when they look up their
ray length.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .filters import kernel_radius, masked_gaussian
from .radiometry import emission_angle, pixel_center_rays, ray_directions, rid_factor
from .scene import Scene, SlabSampling, SpotLight, Spectrum, WaterBody

SLAB_SCALE = 2.2
LUT_MAGIC = b"DSLUT1"
_HEADER = struct.Struct("<6sIIIIIIId64s")
# slabs are evaluated in fixed-size groups so results never depend on worker count
_SLAB_BATCH = 4


class LUTError(RuntimeError):
    pass


class StaleLUTError(LUTError):
    """The LUT was built for a different scene, camera or settings."""


def slab_thicknesses(n: int, d_max: float) -> SlabSampling:
    """Slab thicknesses ``s * N**(i-1) / (i-1)!`` with ``s = 2.2 * d_max / e**N``.

    Evaluated in log space so large ``N`` does not overflow.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"slab count must be an integer >= 1, got {n!r}")
    if not d_max > 0 or not math.isfinite(d_max):
        raise ValueError(f"d_max must be > 0, got {d_max!r}")
    n = int(n)
    log_s = math.log(SLAB_SCALE * d_max) - n
    dz = tuple(math.exp(log_s + k * math.log(n) - math.lgamma(k + 1)) for k in range(n))
    edges = np.concatenate([[0.0], np.cumsum(dz)])
    centers = tuple(float(e + 0.5 * t) for e, t in zip(edges[:-1], dz))
    return SlabSampling(n, float(d_max), dz, centers)


def vsf_table(water: WaterBody) -> tuple[np.ndarray, np.ndarray]:
    angles, values = np.array(water.vsf, dtype=np.float64).T
    return angles, values


def vsf_eval(water: WaterBody, scatter_angle: float) -> float:
    """Piecewise-linear VSF value at a scattering angle in radians."""
    if not 0.0 <= scatter_angle <= math.pi:
        raise ValueError(f"scattering angle must lie in [0, pi], got {scatter_angle}")
    angles, values = vsf_table(water)
    return float(np.interp(scatter_angle, angles, values))


@dataclass(frozen=True)
class ScatterGeometry:
    d1p: float  # voxel -> light
    d2p: float  # voxel -> camera
    psi: float  # angle at the voxel between the directions to the light and to the camera
    phi: float  # viewing ray vs optical axis
    theta: float  # emission angle at the light


def scatter_geometry(point, light: SpotLight) -> ScatterGeometry:
    """Geometry of a voxel at camera-frame ``point`` lit by ``light``."""
    p = np.asarray(point, dtype=np.float64)
    to_voxel = p - np.asarray(light.position)
    d1 = float(np.linalg.norm(to_voxel))
    d2 = float(np.linalg.norm(p))
    if d1 <= 0 or d2 <= 0:
        raise ValueError("voxel must not coincide with the light or the camera")
    cos_psi = float(np.dot(-to_voxel, -p)) / (d1 * d2)
    theta = float(emission_angle(light, to_voxel, d1))
    return ScatterGeometry(
        d1p=d1,
        d2p=d2,
        psi=math.acos(max(-1.0, min(1.0, cos_psi))),
        phi=math.acos(max(-1.0, min(1.0, p[2] / d2))),
        theta=theta,
    )


def voxel_irradiance(geom: ScatterGeometry, light: SpotLight, water: WaterBody, min_d: float = 0.05) -> Spectrum:
    rid = float(rid_factor(light.rid, geom.theta))
    e = light.intensity_i0.array * rid * np.exp(-water.eta.array * (geom.d1p + geom.d2p)) / max(geom.d1p, min_d) ** 2
    return Spectrum(*e)


def _light_terms(
    rays: np.ndarray, t: float, light: SpotLight, water: WaterBody, min_d: float
) -> tuple[np.ndarray, np.ndarray]:
    """Voxel irradiance E' (..., 3) and VSF weight beta(pi - psi) (...) at distance t along rays."""
    to_voxel = t * rays - np.asarray(light.position)
    d1 = np.linalg.norm(to_voxel, axis=-1)
    d1_safe = np.where(d1 > 0, d1, 1.0)
    theta = emission_angle(light, to_voxel, d1_safe)
    e = (
        rid_factor(light.rid, theta)[..., None]
        * light.intensity_i0.array
        * np.exp(-np.multiply.outer(d1 + t, water.eta.array))
        / np.maximum(d1, min_d)[..., None] ** 2
    )
    # psi is between voxel->light and voxel->camera, i.e. between -to_voxel and -ray
    cos_psi = np.einsum("...c,...c->...", to_voxel, rays) / d1_safe
    psi = np.arccos(np.clip(cos_psi, -1.0, 1.0))
    angles, values = vsf_table(water)
    beta = np.interp(math.pi - psi, angles, values)
    return e, beta


def slab_contribution(
    scene: Scene,
    rays: np.ndarray,
    center: float,
    thickness: float,
    lights: Sequence[SpotLight] | None = None,
) -> np.ndarray:
    """Backscatter added by one slab for a grid of unit cell rays (h, w, 3) -> (h, w, 3)."""
    s = scene.settings
    lights = scene.lights if lights is None else lights
    cos_phi = rays[..., 2]
    total = np.zeros(rays.shape[:-1] + (3,))
    sigma = s.fs_coeff * center / s.lut_downsample
    for light in lights:
        e, beta = _light_terms(rays, center, light, scene.water, s.min_light_distance)
        if s.fs_coeff > 0:
            e = e + masked_gaussian(e, np.ones(e.shape[:2], dtype=bool), sigma)
        total += beta[..., None] * e
    return total * (thickness * cos_phi)[..., None]


@dataclass(frozen=True, eq=False)
class BackscatterLUT:
    """Cumulative backscatter per cell: ``cells[v, u, i]`` sums slabs 0..i along cell ``(u, v)``."""

    width: int
    height: int
    downsample: int
    sampling: SlabSampling
    cells: np.ndarray  # (cell_h, cell_w, N, 3) float32
    scene_hash: str

    @property
    def cell_w(self) -> int:
        return self.cells.shape[1]

    @property
    def cell_h(self) -> int:
        return self.cells.shape[0]

    @property
    def nbytes(self) -> int:
        return self.cells.nbytes

    def save(self, path) -> None:
        save_lut(self, path)


def lut_bytes(scene: Scene, sampling: SlabSampling) -> int:
    k = scene.settings.lut_downsample
    cw = math.ceil(scene.camera.width / k)
    ch = math.ceil(scene.camera.height / k)
    return cw * ch * sampling.n_slabs * 3 * 4


def default_sampling(scene: Scene) -> SlabSampling:
    return slab_thicknesses(scene.settings.n_slabs, scene.settings.d_max)


def build_lut(
    scene: Scene,
    sampling: SlabSampling | None = None,
    *,
    threads: int = 1,
    lights: Sequence[SpotLight] | None = None,
) -> BackscatterLUT:
    """Precompute the cumulative backscatter table for the scene's camera and light rig.

    ``lights`` restricts the sum to a subset of the rig (the table still
    carries the full scene's hash). Each cell is accumulated strictly in slab
    order, so the result is bit-identical for any ``threads``.
    """
    sampling = default_sampling(scene) if sampling is None else sampling
    need = lut_bytes(scene, sampling)
    if need > scene.settings.lut_memory_cap:
        raise LUTError(
            f"LUT needs {need / 2**20:.1f} MiB, above the {scene.settings.lut_memory_cap / 2**20:.1f} MiB cap;"
            " raise lut_downsample"
        )
    rays = pixel_center_rays(scene.camera, scene.settings.lut_downsample)
    cells = np.empty(rays.shape[:2] + (sampling.n_slabs, 3), dtype=np.float32)
    running = np.zeros(rays.shape[:2] + (3,))

    def one(i: int) -> np.ndarray:
        return slab_contribution(scene, rays, sampling.centers[i], sampling.thicknesses[i], lights)

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        for start in range(0, sampling.n_slabs, _SLAB_BATCH):
            idx = range(start, min(start + _SLAB_BATCH, sampling.n_slabs))
            for i, contrib in zip(idx, pool.map(one, idx)):
                running += contrib
                cells[:, :, i] = running
    cells.setflags(write=False)
    return BackscatterLUT(
        scene.camera.width, scene.camera.height, scene.settings.lut_downsample, sampling, cells, scene.fingerprint()
    )


# -- lookup -------------------------------------------------------------------


def _depth_weights(knots: np.ndarray, depth: np.ndarray):
    """Indices (lo, hi) and weights (a, b) so that value = a*cells[lo] + b*cells[hi].

    ``knots[i]`` is the far edge of slab i, where the partial sum ``cells[i]``
    is exact; in front of the first knot the value ramps linearly from 0.
    Depth 0 (no surface) and anything past the last knot take the full sum.
    """
    n = len(knots)
    depth = np.asarray(depth, dtype=np.float64)
    lo = np.clip(np.searchsorted(knots, depth, side="right") - 1, 0, n - 1)
    hi = np.minimum(lo + 1, n - 1)
    gap = knots[hi] - knots[lo]
    b = np.where(gap > 0, (depth - knots[lo]) / np.where(gap > 0, gap, 1.0), 0.0)
    a = 1.0 - b
    first = depth < knots[0]
    a = np.where(first, depth / knots[0], a)
    b = np.where(first, 0.0, b)
    last = (depth >= knots[-1]) | (depth <= 0)
    lo = np.where(last, n - 1, lo)
    hi = np.where(last, n - 1, hi)
    a = np.where(last, 1.0, a)
    b = np.where(last, 0.0, b)
    return lo, hi, a, b


def _cell_axis(pixel: np.ndarray, k: int, n_cells: int):
    """Bilinear neighbours and weight along one axis for pixel indices."""
    if k == 1:
        idx = np.asarray(pixel)
        return idx, idx, np.zeros(np.shape(idx))
    x = np.clip((np.asarray(pixel, dtype=np.float64) + 0.5) / k - 0.5, 0.0, n_cells - 1)
    i0 = np.floor(x).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_cells - 1)
    return i0, i1, x - i0


def sample_lut(lut: BackscatterLUT, cols: np.ndarray, rows: np.ndarray, depth: np.ndarray) -> np.ndarray:
    """Vectorized lookup: integer pixel indices and ray-length depths -> (..., 3)."""
    lo, hi, a, b = _depth_weights(np.asarray(lut.sampling.far_edges), depth)
    u0, u1, wu = _cell_axis(cols, lut.downsample, lut.cell_w)
    v0, v1, wv = _cell_axis(rows, lut.downsample, lut.cell_h)
    cells = lut.cells

    def along_depth(v, u):
        return a[..., None] * cells[v, u, lo] + b[..., None] * cells[v, u, hi]

    if lut.downsample == 1:
        return along_depth(v0, u0)
    top = (1 - wu)[..., None] * along_depth(v0, u0) + wu[..., None] * along_depth(v0, u1)
    bottom = (1 - wu)[..., None] * along_depth(v1, u0) + wu[..., None] * along_depth(v1, u1)
    return (1 - wv)[..., None] * top + wv[..., None] * bottom


def backscatter_image(lut: BackscatterLUT, ray_len: np.ndarray) -> np.ndarray:
    """Backscatter for a whole frame given per-pixel ray length (0 = no surface)."""
    h, w = ray_len.shape
    if (w, h) != (lut.width, lut.height):
        raise LUTError(f"LUT built for {lut.width}x{lut.height}, frame is {w}x{h}")
    rows, cols = np.indices((h, w))
    return sample_lut(lut, cols, rows, ray_len)


def backscatter_at(lut: BackscatterLUT, u: int, v: int, depth_along_ray: float) -> Spectrum:
    """Backscatter seen by pixel ``(u, v)`` (column, row) whose surface is ``depth_along_ray`` away."""
    if not (0 <= u < lut.width and 0 <= v < lut.height):
        raise ValueError(f"pixel ({u}, {v}) outside {lut.width}x{lut.height} image")
    if depth_along_ray < 0:
        raise ValueError("depth must be >= 0")
    val = sample_lut(lut, np.array(int(u)), np.array(int(v)), np.array(float(depth_along_ray)))
    return Spectrum(*val)


# -- brute-force oracle -------------------------------------------------------


def _forward_stencil(scene: Scene, col: int, row: int, sigma: float):
    """Neighbour rays and normalized Gaussian weights for the matching forward-scatter blur."""
    cam = scene.camera
    r = kernel_radius(sigma)
    offs = np.arange(-r, r + 1)
    g = np.exp(-0.5 * (offs / sigma) ** 2)
    g /= g.sum()
    cc, rr = np.meshgrid(col + offs, row + offs)
    weight = np.outer(g, g)
    inside = (cc >= 0) & (cc < cam.width) & (rr >= 0) & (rr < cam.height)
    dirs = ray_directions(cam, cc[inside] + 0.5, rr[inside] + 0.5)
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    w = weight[inside]
    return dirs, w / w.sum()


def backscatter_bruteforce(
    scene: Scene,
    u: int,
    v: int,
    depth_along_ray: float,
    step: float = 0.005,
    *,
    include_forward: bool = False,
    chunk: int = 1 << 16,
) -> Spectrum:
    """Midpoint-rule march along pixel ``(u, v)``'s ray, no lookup table involved.

    Integrates ``beta(pi - psi) * E' * cos(phi)`` from the camera to
    ``min(depth, d_max)``; depth 0 means no surface, i.e. march to ``d_max``.
    With ``include_forward`` the per-voxel irradiance also gets the
    Gaussian-blurred copy over neighbouring pixel rays (pixel-resolution
    tables only).
    """
    if not step > 0:
        raise ValueError("step must be > 0")
    cam = scene.camera
    s = scene.settings
    ray = ray_directions(cam, u + 0.5, v + 0.5)
    ray = ray / np.linalg.norm(ray)
    length = s.d_max if depth_along_ray <= 0 else min(depth_along_ray, s.d_max)
    n = max(1, round(length / step))
    h = length / n
    total = np.zeros(3)
    for start in range(0, n, chunk):
        ts = (np.arange(start, min(start + chunk, n)) + 0.5) * h
        for light in scene.lights:
            e, beta = _light_terms_along(ray, ts, light, scene.water, s.min_light_distance)
            if include_forward and s.fs_coeff > 0:
                e = e + _forward_terms(scene, u, v, ts, light)
            total += np.sum(beta[:, None] * e, axis=0)
    return Spectrum(*(total * h * ray[2]))


def _light_terms_along(ray, ts, light, water, min_d):
    # (n, 3) rays of the same direction at distances ts
    pts_rays = np.broadcast_to(ray, (len(ts), 3))
    to_voxel = ts[:, None] * ray - np.asarray(light.position)
    d1 = np.linalg.norm(to_voxel, axis=-1)
    d1_safe = np.where(d1 > 0, d1, 1.0)
    theta = emission_angle(light, to_voxel, d1_safe)
    e = (
        rid_factor(light.rid, theta)[:, None]
        * light.intensity_i0.array
        * np.exp(-np.multiply.outer(d1 + ts, water.eta.array))
        / np.maximum(d1, min_d)[:, None] ** 2
    )
    cos_psi = np.einsum("nc,nc->n", to_voxel, pts_rays) / d1_safe
    angles, values = vsf_table(water)
    beta = np.interp(math.pi - np.arccos(np.clip(cos_psi, -1.0, 1.0)), angles, values)
    return e, beta


def _forward_terms(scene: Scene, u: int, v: int, ts: np.ndarray, light: SpotLight) -> np.ndarray:
    s = scene.settings
    out = np.empty((len(ts), 3))
    for j, t in enumerate(ts):
        sigma = s.fs_coeff * t
        if sigma <= 0:
            out[j] = 0.0
            continue
        dirs, w = _forward_stencil(scene, u, v, sigma)
        to_voxel = t * dirs - np.asarray(light.position)
        d1 = np.linalg.norm(to_voxel, axis=-1)
        theta = emission_angle(light, to_voxel, np.where(d1 > 0, d1, 1.0))
        e = (
            rid_factor(light.rid, theta)[:, None]
            * light.intensity_i0.array
            * np.exp(-np.multiply.outer(d1 + t, scene.water.eta.array))
            / np.maximum(d1, s.min_light_distance)[:, None] ** 2
        )
        out[j] = w @ e
    return out


# -- profile ------------------------------------------------------------------


def backscatter_profile(scene: Scene, sampling: SlabSampling | None = None) -> np.ndarray:
    """Normalized cumulative backscatter on the optical axis after each slab.

    Returns an (N, 4) array of ``depth_m, r, g, b`` where depth is the slab's
    far edge; the last row is 1 for every channel that receives any
    backscatter.
    """
    sampling = default_sampling(scene) if sampling is None else sampling
    cam = scene.camera
    if scene.settings.fs_coeff > 0:
        # the blur couples neighbouring rays, so go through a full table
        lut = build_lut(scene, sampling)
        k = lut.downsample
        x = min(max(cam.cx / k - 0.5, 0.0), lut.cell_w - 1)
        y = min(max(cam.cy / k - 0.5, 0.0), lut.cell_h - 1)
        x0, y0 = int(x), int(y)
        x1, y1 = min(x0 + 1, lut.cell_w - 1), min(y0 + 1, lut.cell_h - 1)
        wx, wy = x - x0, y - y0
        c = lut.cells.astype(np.float64)
        cum = (1 - wy) * ((1 - wx) * c[y0, x0] + wx * c[y0, x1]) + wy * ((1 - wx) * c[y1, x0] + wx * c[y1, x1])
    else:
        axis = np.array([[[0.0, 0.0, 1.0]]])
        contrib = [
            slab_contribution(scene, axis, c, t, None)[0, 0] for c, t in zip(sampling.centers, sampling.thicknesses)
        ]
        cum = np.cumsum(contrib, axis=0)
    total = cum[-1]
    norm = np.divide(cum, total, out=np.zeros_like(cum), where=total > 0)
    return np.column_stack([np.asarray(sampling.far_edges), norm])


# -- cache file ---------------------------------------------------------------


def save_lut(lut: BackscatterLUT, path) -> None:
    header = _HEADER.pack(
        LUT_MAGIC,
        lut.width,
        lut.height,
        lut.cell_w,
        lut.cell_h,
        lut.sampling.n_slabs,
        3,
        lut.downsample,
        lut.sampling.d_max,
        lut.scene_hash.encode("ascii"),
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(lut.cells, dtype="<f4").tobytes())


def load_lut(path, scene: Scene | None = None) -> BackscatterLUT:
    """Read a cached table; with ``scene`` given, refuse one built for anything else."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or data[:6] != LUT_MAGIC:
        raise LUTError(f"{path}: not a DSLUT1 lookup table")
    magic, width, height, cw, ch, n, channels, k, d_max, digest = _HEADER.unpack_from(data)
    expected = cw * ch * n * channels * 4
    if channels != 3 or len(data) - _HEADER.size != expected:
        raise LUTError(f"{path}: truncated or corrupt lookup table")
    scene_hash = digest.decode("ascii")
    if scene is not None and scene_hash != scene.fingerprint():
        raise StaleLUTError(f"{path}: lookup table was built for a different scene")
    cells = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(ch, cw, n, channels)
    return BackscatterLUT(width, height, k, slab_thicknesses(n, d_max), cells.astype(np.float32), scene_hash)
