"""Domain types for the camera/light rig, the water body and render settings.

Everything here is a frozen dataclass holding tuples, so a validated
:class:`Scene` can be shared between render workers without copying.
Angles are stored in radians; the config layer converts from degrees.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class SceneError(ValueError):
    """An invariant of the scene description is violated.

    ``path`` names the offending field, e.g. ``lights[1].direction``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class Spectrum:
    r: float
    g: float
    b: float

    @classmethod
    def of(cls, values) -> "Spectrum":
        if isinstance(values, Spectrum):
            return values
        if isinstance(values, (int, float)):
            return cls(float(values), float(values), float(values))
        r, g, b = values
        return cls(float(r), float(g), float(b))

    @property
    def array(self) -> np.ndarray:
        return np.array([self.r, self.g, self.b], dtype=np.float64)

    def __iter__(self):
        return iter((self.r, self.g, self.b))


@dataclass(frozen=True)
class CameraModel:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float


@dataclass(frozen=True)
class GaussianRID:
    sigma: float  # radians


@dataclass(frozen=True)
class TableRID:
    # (angle radians, relative intensity), angles strictly increasing from 0
    samples: tuple[tuple[float, float], ...]


RIDModel = GaussianRID | TableRID


@dataclass(frozen=True)
class SpotLight:
    position: tuple[float, float, float]
    direction: tuple[float, float, float]
    rid: RIDModel
    intensity_i0: Spectrum


@dataclass(frozen=True)
class WaterBody:
    eta: Spectrum
    # (scattering angle radians, value per sr per m), shared by all channels
    vsf: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class SlabSampling:
    n_slabs: int
    d_max: float
    thicknesses: tuple[float, ...]
    centers: tuple[float, ...]

    @property
    def extent(self) -> float:
        """Distance covered by all slabs together (close to, not equal to, d_max)."""
        return self.far_edges[-1]

    @property
    def far_edges(self) -> tuple[float, ...]:
        """Distance from the camera to the far boundary of each slab."""
        return tuple(float(e) for e in np.cumsum(self.thicknesses))


@dataclass(frozen=True)
class RenderSettings:
    gain: float = 1.0
    fs_coeff: float = 0.0
    lut_downsample: int = 1
    min_light_distance: float = 0.05
    fog_background: Spectrum = field(default_factory=lambda: Spectrum(0.0, 0.0, 0.0))
    n_slabs: int = 16
    d_max: float = 10.0
    lut_memory_cap: int = 1 << 30  # bytes


@dataclass(frozen=True)
class FrameInput:
    """One RGB-D frame. ``albedo`` is (H, W, 3) linear, ``depth`` is (H, W) z-depth in meters."""

    albedo: np.ndarray
    depth: np.ndarray

    def __post_init__(self):
        albedo = np.asarray(self.albedo, dtype=np.float64)
        depth = np.asarray(self.depth, dtype=np.float64)
        if albedo.ndim != 3 or albedo.shape[2] != 3:
            raise SceneError("frame.albedo", f"expected (H, W, 3) image, got shape {albedo.shape}")
        if depth.shape != albedo.shape[:2]:
            raise SceneError("frame.depth", f"shape {depth.shape} does not match albedo {albedo.shape[:2]}")
        if not np.all(np.isfinite(depth)) or np.any(depth < 0):
            raise SceneError("frame.depth", "depth must be finite and >= 0 (0 marks invalid)")
        if not np.all(np.isfinite(albedo)) or np.any(albedo < 0) or np.any(albedo > 1):
            raise SceneError("frame.albedo", "albedo components must lie in [0, 1]")
        albedo.setflags(write=False)
        depth.setflags(write=False)
        object.__setattr__(self, "albedo", albedo)
        object.__setattr__(self, "depth", depth)

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape

    @property
    def valid(self) -> np.ndarray:
        return self.depth > 0


@dataclass(frozen=True)
class Scene:
    """Validated, immutable aggregate. Build it with :func:`validate_scene`."""

    camera: CameraModel
    lights: tuple[SpotLight, ...]
    water: WaterBody
    settings: RenderSettings

    def with_lights(self, lights: Sequence[SpotLight]) -> "Scene":
        return validate_scene(self.camera, lights, self.water, self.settings)

    def with_water(self, water: WaterBody) -> "Scene":
        return validate_scene(self.camera, self.lights, water, self.settings)

    def with_settings(self, **changes) -> "Scene":
        from dataclasses import replace

        return validate_scene(self.camera, self.lights, self.water, replace(self.settings, **changes))

    def fingerprint(self) -> str:
        """Hash of everything that shapes the backscatter field (gain excluded)."""
        s = self.settings
        payload = {
            "camera": _camera_dict(self.camera),
            "lights": [_light_dict(light) for light in self.lights],
            "water": {"eta": list(self.water.eta), "vsf": [list(p) for p in self.water.vsf]},
            "fs_coeff": s.fs_coeff,
            "lut_downsample": s.lut_downsample,
            "min_light_distance": s.min_light_distance,
        }
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=repr)
        return hashlib.sha256(text.encode()).hexdigest()


def _camera_dict(c: CameraModel) -> dict:
    return {"width": c.width, "height": c.height, "fx": c.fx, "fy": c.fy, "cx": c.cx, "cy": c.cy}


def _light_dict(light: SpotLight) -> dict:
    if isinstance(light.rid, GaussianRID):
        rid = {"type": "gaussian", "sigma": light.rid.sigma}
    else:
        rid = {"type": "table", "samples": [list(p) for p in light.rid.samples]}
    return {
        "position": list(light.position),
        "direction": list(light.direction),
        "rid": rid,
        "intensity": list(light.intensity_i0),
    }


# -- validation ---------------------------------------------------------------


def _real(path: str, value) -> float:
    if isinstance(value, bool):
        raise SceneError(path, "expected a real number, got bool")
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise SceneError(path, f"expected a real number, got {value!r}") from None
    if not math.isfinite(x):
        raise SceneError(path, "must be finite")
    return x


def _integer(path: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise SceneError(path, f"expected an integer, got {value!r}")
    return int(value)


def _vector(path: str, value, n: int = 3) -> tuple[float, ...]:
    try:
        items = list(value)
    except TypeError:
        raise SceneError(path, f"expected a {n}-vector, got {value!r}") from None
    if len(items) != n:
        raise SceneError(path, f"expected {n} components, got {len(items)}")
    return tuple(_real(f"{path}[{i}]", v) for i, v in enumerate(items))


def _spectrum(path: str, value) -> Spectrum:
    if isinstance(value, Spectrum):
        value = (value.r, value.g, value.b)
    rgb = _vector(path, value)
    if any(c < 0 for c in rgb):
        raise SceneError(path, "spectrum components must be >= 0")
    return Spectrum(*rgb)


def _table(path: str, value, lo: float | None, hi: float | None, what: str) -> tuple[tuple[float, float], ...]:
    try:
        rows = list(value)
    except TypeError:
        raise SceneError(path, f"expected a list of (angle, value) pairs, got {value!r}") from None
    if len(rows) < 2:
        raise SceneError(path, f"{what} table needs at least two samples")
    out = []
    for i, row in enumerate(rows):
        out.append(_vector(f"{path}[{i}]", row, 2))
    angles = [a for a, _ in out]
    if any(b <= a for a, b in zip(angles, angles[1:])):
        raise SceneError(path, f"{what} angles not strictly increasing")
    if lo is not None and abs(angles[0] - lo) > 1e-12:
        raise SceneError(path, f"{what} angles must start at {lo}")
    if hi is not None and abs(angles[-1] - hi) > 1e-9:
        raise SceneError(path, f"{what} angles must end at {hi}")
    if angles[-1] > math.pi + 1e-9:
        raise SceneError(path, f"{what} angles exceed 180 degrees")
    return tuple(out)


def _validate_rid(path: str, rid) -> RIDModel:
    if isinstance(rid, GaussianRID):
        sigma = _real(f"{path}.sigma", rid.sigma)
        if sigma <= 0:
            raise SceneError(f"{path}.sigma", "sigma must be > 0")
        return GaussianRID(sigma)
    if isinstance(rid, TableRID):
        samples = _table(f"{path}.samples", rid.samples, 0.0, None, "rid")
        if abs(samples[0][1] - 1.0) > 1e-12:
            raise SceneError(f"{path}.samples", "rid table must be normalized to 1.0 at angle 0")
        if any(not 0.0 <= v <= 1.0 for _, v in samples):
            raise SceneError(f"{path}.samples", "rid table values must lie in [0, 1]")
        return TableRID(samples)
    raise SceneError(path, f"unknown RID model {rid!r}")


def _validate_light(path: str, light) -> SpotLight:
    if not isinstance(light, SpotLight):
        raise SceneError(path, f"expected a SpotLight, got {type(light).__name__}")
    position = _vector(f"{path}.position", light.position)
    direction = _vector(f"{path}.direction", light.direction)
    norm = math.sqrt(sum(c * c for c in direction))
    if abs(norm - 1.0) > 1e-9:
        raise SceneError(f"{path}.direction", f"direction not unit (|d| = {norm:.6g})")
    rid = _validate_rid(f"{path}.rid", light.rid)
    i0 = _spectrum(f"{path}.intensity_i0", light.intensity_i0)
    return SpotLight(position, direction, rid, i0)


def _validate_camera(camera) -> CameraModel:
    if not isinstance(camera, CameraModel):
        raise SceneError("camera", f"expected a CameraModel, got {type(camera).__name__}")
    width = _integer("camera.width", camera.width)
    height = _integer("camera.height", camera.height)
    if width < 1:
        raise SceneError("camera.width", "must be >= 1")
    if height < 1:
        raise SceneError("camera.height", "must be >= 1")
    fx, fy = _real("camera.fx", camera.fx), _real("camera.fy", camera.fy)
    if fx <= 0:
        raise SceneError("camera.fx", "must be > 0")
    if fy <= 0:
        raise SceneError("camera.fy", "must be > 0")
    cx, cy = _real("camera.cx", camera.cx), _real("camera.cy", camera.cy)
    if not 0 <= cx < width:
        raise SceneError("camera.cx", f"principal point must lie in [0, {width})")
    if not 0 <= cy < height:
        raise SceneError("camera.cy", f"principal point must lie in [0, {height})")
    return CameraModel(width, height, fx, fy, cx, cy)


def _validate_water(water) -> WaterBody:
    if not isinstance(water, WaterBody):
        raise SceneError("water", f"expected a WaterBody, got {type(water).__name__}")
    eta = _spectrum("water.eta", water.eta)
    vsf = _table("water.vsf", water.vsf, 0.0, math.pi, "vsf")
    if any(v < 0 for _, v in vsf):
        raise SceneError("water.vsf", "vsf values must be >= 0")
    return WaterBody(eta, vsf)


def _validate_settings(settings) -> RenderSettings:
    if not isinstance(settings, RenderSettings):
        raise SceneError("settings", f"expected RenderSettings, got {type(settings).__name__}")
    gain = _real("settings.gain", settings.gain)
    if gain <= 0:
        raise SceneError("settings.gain", "must be > 0")
    fs = _real("settings.fs_coeff", settings.fs_coeff)
    if fs < 0:
        raise SceneError("settings.fs_coeff", "must be >= 0")
    ds = _integer("settings.lut_downsample", settings.lut_downsample)
    if ds < 1:
        raise SceneError("settings.lut_downsample", "must be >= 1")
    min_d = _real("settings.min_light_distance", settings.min_light_distance)
    if min_d <= 0:
        raise SceneError("settings.min_light_distance", "must be > 0")
    bg = _spectrum("settings.fog_background", settings.fog_background)
    n = _integer("settings.n_slabs", settings.n_slabs)
    if n < 1:
        raise SceneError("settings.n_slabs", "must be >= 1")
    d_max = _real("settings.d_max", settings.d_max)
    if d_max <= 0:
        raise SceneError("settings.d_max", "must be > 0")
    cap = _integer("settings.lut_memory_cap", settings.lut_memory_cap)
    if cap <= 0:
        raise SceneError("settings.lut_memory_cap", "must be > 0")
    return RenderSettings(gain, fs, ds, min_d, bg, n, d_max, cap)


def validate_scene(
    camera: CameraModel,
    lights: Sequence[SpotLight],
    water: WaterBody,
    settings: RenderSettings | None = None,
) -> Scene:
    """Check every invariant and return an immutable :class:`Scene`.

    Raises :class:`SceneError` for the first violation found; never anything else.
    """
    cam = _validate_camera(camera)
    try:
        light_list = list(lights)
    except TypeError:
        raise SceneError("lights", "expected a list of SpotLight") from None
    checked = tuple(_validate_light(f"lights[{i}]", light) for i, light in enumerate(light_list))
    w = _validate_water(water)
    s = _validate_settings(settings if settings is not None else RenderSettings())
    return Scene(cam, checked, w, s)
