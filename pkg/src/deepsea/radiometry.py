"""Viewing-ray geometry, spotlight fall-off and the direct (light -> surface -> camera) signal.

Pixel coordinates are continuous: pixel ``(col, row)`` covers
``[col, col+1) x [row, row+1)`` and its center sits at ``(col+0.5, row+0.5)``.
Image y grows downward, camera frame is x right, y down, z forward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scene import CameraModel, GaussianRID, RIDModel, SpotLight, Spectrum, TableRID, WaterBody


@dataclass(frozen=True)
class SurfaceSample:
    point: tuple[float, float, float]
    normal: tuple[float, float, float]
    albedo: Spectrum

    def __post_init__(self):
        n = math.sqrt(sum(c * c for c in self.normal))
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"surface normal not unit (|n| = {n:.6g})")
        if not self.point[2] > 0:
            raise ValueError("surface point must lie in front of the camera (z > 0)")


def _normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def pixel_ray(camera: CameraModel, u: float, v: float) -> np.ndarray:
    """Unit viewing ray through continuous image coordinate ``(u, v)``."""
    if not (0 <= u < camera.width and 0 <= v < camera.height):
        raise ValueError(f"pixel ({u}, {v}) outside {camera.width}x{camera.height} image")
    d = np.array([(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0])
    return d / np.linalg.norm(d)


def ray_directions(camera: CameraModel, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """Unnormalized rays (x, y, 1) for arrays of continuous coordinates; no range check."""
    us, vs = np.broadcast_arrays(np.asarray(us, dtype=np.float64), np.asarray(vs, dtype=np.float64))
    return np.stack([(us - camera.cx) / camera.fx, (vs - camera.cy) / camera.fy, np.ones_like(us)], axis=-1)


def pixel_center_rays(camera: CameraModel, step: int = 1) -> np.ndarray:
    """Unit rays of shape (ceil(H/step), ceil(W/step), 3) through the centers of step x step blocks."""
    cols = (np.arange(math.ceil(camera.width / step)) + 0.5) * step
    rows = (np.arange(math.ceil(camera.height / step)) + 0.5) * step
    return _normalize(ray_directions(camera, cols[None, :], rows[:, None]))


def unproject(camera: CameraModel, u: float, v: float, z_depth: float) -> np.ndarray:
    """3D point on the ray through ``(u, v)`` whose z-component equals ``z_depth``."""
    if not z_depth > 0:
        raise ValueError(f"z_depth must be > 0, got {z_depth}")
    ray = pixel_ray(camera, u, v)
    return ray * (z_depth / ray[2])


def unproject_depth(camera: CameraModel, depth: np.ndarray) -> np.ndarray:
    """Camera-frame points (H, W, 3) for a z-depth image sampled at pixel centers."""
    h, w = depth.shape
    cols = np.arange(w) + 0.5
    rows = np.arange(h) + 0.5
    return ray_directions(camera, cols[None, :], rows[:, None]) * depth[..., None]


def ray_length(camera: CameraModel, depth: np.ndarray) -> np.ndarray:
    """Convert z-depth to distance along the viewing ray; invalid (0) stays 0."""
    return np.linalg.norm(unproject_depth(camera, depth), axis=-1)


def _tangent(points: np.ndarray, valid: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    # central difference where both neighbours exist, else one-sided
    n = points.shape[axis]
    fwd = np.zeros_like(points)
    bwd = np.zeros_like(points)
    fwd_ok = np.zeros(valid.shape, dtype=bool)
    bwd_ok = np.zeros(valid.shape, dtype=bool)

    def sl(a, b):
        idx = [slice(None), slice(None)]
        idx[axis] = slice(a, b)
        return tuple(idx)

    if n > 1:
        fwd[sl(0, n - 1)] = points[sl(1, n)] - points[sl(0, n - 1)]
        fwd_ok[sl(0, n - 1)] = valid[sl(1, n)] & valid[sl(0, n - 1)]
        bwd[sl(1, n)] = points[sl(1, n)] - points[sl(0, n - 1)]
        bwd_ok[sl(1, n)] = fwd_ok[sl(0, n - 1)]
    both = fwd_ok & bwd_ok
    t = np.where(both[..., None], fwd + bwd, np.where(fwd_ok[..., None], fwd, bwd))
    return t, fwd_ok | bwd_ok


def normals_from_depth(camera: CameraModel, depth: np.ndarray) -> np.ndarray:
    """Camera-facing unit normals (H, W, 3) from a z-depth image.

    Pixels that are invalid, or have no valid neighbour along either image
    axis, get (0, 0, -1).
    """
    depth = np.asarray(depth, dtype=np.float64)
    points = unproject_depth(camera, depth)
    valid = depth > 0
    tu, ok_u = _tangent(points, valid, axis=1)
    tv, ok_v = _tangent(points, valid, axis=0)
    n = np.cross(tu, tv)
    length = np.linalg.norm(n, axis=-1)
    good = valid & ok_u & ok_v & (length > 0)
    out = np.zeros_like(points)
    out[..., 2] = -1.0
    out[good] = n[good] / length[good][:, None]
    # orient against the viewing ray
    flip = np.einsum("hwc,hwc->hw", out, points) > 0
    out[flip & good] *= -1.0
    return out


def rid_factor(rid: RIDModel, theta: np.ndarray) -> np.ndarray:
    """Vectorized relative emission for angles in radians (no range check)."""
    theta = np.asarray(theta, dtype=np.float64)
    if isinstance(rid, GaussianRID):
        return np.exp(-0.5 * (theta / rid.sigma) ** 2)
    angles, values = np.array(rid.samples).T
    return np.interp(theta, angles, values, right=0.0)


def evaluate_rid(rid: RIDModel, theta: float) -> float:
    if not 0.0 <= theta <= math.pi:
        raise ValueError(f"theta must lie in [0, pi], got {theta}")
    if isinstance(rid, GaussianRID):
        return math.exp(-0.5 * (theta / rid.sigma) ** 2)
    if isinstance(rid, TableRID):
        return float(rid_factor(rid, theta))
    raise TypeError(f"unknown RID model {rid!r}")


def emission_angle(light: SpotLight, to_point: np.ndarray, dist: np.ndarray) -> np.ndarray:
    """Angle between the light's central axis and the light -> point vectors."""
    cos_t = (to_point @ np.asarray(light.direction)) / dist
    return np.arccos(np.clip(cos_t, -1.0, 1.0))


def direct_signal_map(
    points: np.ndarray,
    normals: np.ndarray,
    albedo: np.ndarray,
    d2: np.ndarray,
    lights: Sequence[SpotLight],
    eta: Spectrum,
    min_d: float,
) -> np.ndarray:
    """Direct irradiance for arrays of surface samples; trailing axis is xyz / rgb."""
    eta = eta.array
    out = np.zeros(points.shape[:-1] + (3,))
    for light in lights:
        to_point = points - np.asarray(light.position)
        d1 = np.linalg.norm(to_point, axis=-1)
        safe = np.maximum(d1, min_d)
        theta = emission_angle(light, to_point, np.where(d1 > 0, d1, 1.0))
        # normal . (unit vector toward the light)
        cos_a = -np.einsum("...c,...c->...", normals, to_point) / np.where(d1 > 0, d1, 1.0)
        scalar = rid_factor(light.rid, theta) * np.maximum(cos_a, 0.0) / safe**2
        atten = np.exp(-(d1 + d2)[..., None] * eta)
        out += albedo * light.intensity_i0.array * atten * scalar[..., None]
    return out


def direct_signal(
    sample: SurfaceSample,
    lights: Sequence[SpotLight],
    water: WaterBody,
    d2: float,
    min_d: float = 0.05,
) -> Spectrum:
    if not d2 > 0:
        raise ValueError(f"d2 must be > 0, got {d2}")
    e = direct_signal_map(
        np.array([sample.point], dtype=np.float64),
        np.array([sample.normal], dtype=np.float64),
        sample.albedo.array[None, :],
        np.array([d2], dtype=np.float64),
        lights,
        water.eta,
        min_d,
    )[0]
    return Spectrum(*e)
