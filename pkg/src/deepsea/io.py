"""Scene config files, image codecs (PNG / PFM) and CSV writers."""

from __future__ import annotations

import csv
import glob as globlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .scene import (
    CameraModel,
    FrameInput,
    GaussianRID,
    RenderSettings,
    Scene,
    SceneError,
    SpotLight,
    Spectrum,
    TableRID,
    WaterBody,
    validate_scene,
)


class ConfigError(SceneError):
    """Malformed or incomplete config file; ``path`` is the key path."""


class ImageFormatError(ValueError):
    pass


# -- degrees <-> radians that survive a round trip ----------------------------


def _deg(rad: float) -> float:
    """Degree value that converts back to exactly ``rad``."""
    d = math.degrees(rad)
    if math.radians(d) == rad:
        return d
    for direction in (math.inf, -math.inf):
        x = d
        for _ in range(8):
            x = math.nextafter(x, direction)
            if math.radians(x) == rad:
                return x
    return d


# -- scene config -------------------------------------------------------------


def _get(obj: dict, key: str, where: str, default=...):
    if not isinstance(obj, dict):
        raise ConfigError(where or "<root>", "expected an object")
    if key not in obj:
        if default is ...:
            raise ConfigError(f"{where}.{key}" if where else key, "missing required key")
        return default
    return obj[key]


def _rotation(value, where: str) -> np.ndarray:
    try:
        r = np.array(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise ConfigError(where, "rotation must be a 3x3 matrix") from None
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        raise ConfigError(where, "rotation must be a 3x3 matrix")
    if not np.allclose(r @ r.T, np.eye(3), atol=1e-6) or np.linalg.det(r) < 0:
        raise ConfigError(where, "rotation must be orthonormal and right-handed")
    return r


def _parse_rid(obj, where: str):
    model = _get(obj, "model", where)
    if model == "gaussian":
        sigma = _get(obj, "sigma_deg", where)
        if isinstance(sigma, bool) or not isinstance(sigma, (int, float)):
            raise ConfigError(f"{where}.sigma_deg", "expected a number")
        return GaussianRID(math.radians(sigma))
    if model == "table":
        rows = _get(obj, "samples_deg", where)
        try:
            return TableRID(tuple((math.radians(float(a)), float(v)) for a, v in rows))
        except (TypeError, ValueError):
            raise ConfigError(f"{where}.samples_deg", "expected [[angle_deg, value], ...]") from None
    raise ConfigError(f"{where}.model", f"unknown RID model {model!r} (gaussian | table)")


def read_vsf_csv(path) -> tuple[tuple[float, float], ...]:
    """VSF table from a two-column CSV (degrees, value) with a header row."""
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        next(reader, None)
        for line in reader:
            if line:
                rows.append((math.radians(float(line[0])), float(line[1])))
    return tuple(rows)


def scene_from_dict(cfg: dict, base_dir: Path | None = None) -> Scene:
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    cam = _get(cfg, "camera", "")
    camera = CameraModel(
        width=_get(cam, "width", "camera"),
        height=_get(cam, "height", "camera"),
        fx=_get(cam, "fx", "camera"),
        fy=_get(cam, "fy", "camera"),
        cx=_get(cam, "cx", "camera"),
        cy=_get(cam, "cy", "camera"),
    )
    pose = _get(cam, "pose", "camera", None)
    if pose is not None:
        cam_pos = np.array(_get(pose, "position_m", "camera.pose"), dtype=np.float64)
        cam_rot = _rotation(_get(pose, "rotation", "camera.pose"), "camera.pose.rotation")

    lights = []
    raw_lights = _get(cfg, "lights", "")
    if not isinstance(raw_lights, list):
        raise ConfigError("lights", "expected a list")
    for i, lt in enumerate(raw_lights):
        where = f"lights[{i}]"
        position = _get(lt, "position_m", where)
        direction = _get(lt, "direction", where)
        frame = _get(lt, "frame", where, "camera")
        if frame == "world":
            if pose is None:
                raise ConfigError(f"{where}.frame", "world-frame light needs camera.pose")
            try:
                # rotation maps camera axes to world axes
                position = tuple(cam_rot.T @ (np.asarray(position, dtype=np.float64) - cam_pos))
                direction = tuple(cam_rot.T @ np.asarray(direction, dtype=np.float64))
            except (TypeError, ValueError):
                raise ConfigError(where, "position_m and direction must be 3-vectors") from None
        elif frame != "camera":
            raise ConfigError(f"{where}.frame", f"expected 'camera' or 'world', got {frame!r}")
        lights.append(
            SpotLight(
                position=position,
                direction=direction,
                rid=_parse_rid(_get(lt, "rid", where), f"{where}.rid"),
                intensity_i0=_get(lt, "intensity", where, (1.0, 1.0, 1.0)),
            )
        )

    w = _get(cfg, "water", "")
    eta = _get(w, "eta_per_m", "water")
    if "vsf_file" in w:
        vsf_path = base_dir / w["vsf_file"]
        try:
            vsf = read_vsf_csv(vsf_path)
        except (OSError, ValueError, IndexError) as e:
            raise ConfigError("water.vsf_file", f"cannot read {vsf_path}: {e}") from None
    else:
        rows = _get(w, "vsf_deg", "water")
        try:
            vsf = tuple((math.radians(float(a)), float(v)) for a, v in rows)
        except (TypeError, ValueError):
            raise ConfigError("water.vsf_deg", "expected [[angle_deg, value], ...]") from None
    water = WaterBody(eta=eta, vsf=vsf)

    st = _get(cfg, "settings", "", {})
    defaults = RenderSettings()
    settings = RenderSettings(
        gain=_get(st, "gain", "settings", defaults.gain),
        fs_coeff=_get(st, "fs_coeff_px_per_m", "settings", defaults.fs_coeff),
        lut_downsample=_get(st, "lut_downsample", "settings", defaults.lut_downsample),
        min_light_distance=_get(st, "min_light_distance_m", "settings", defaults.min_light_distance),
        fog_background=_get(st, "fog_background", "settings", defaults.fog_background),
        n_slabs=_get(st, "n_slabs", "settings", defaults.n_slabs),
        d_max=_get(st, "d_max_m", "settings", defaults.d_max),
        lut_memory_cap=_get(st, "lut_memory_cap_bytes", "settings", defaults.lut_memory_cap),
    )
    return validate_scene(camera, lights, water, settings)


def scene_to_dict(scene: Scene) -> dict:
    """Config-file form of a scene (camera-frame lights, degrees, inline VSF)."""
    c, s = scene.camera, scene.settings
    lights = []
    for light in scene.lights:
        if isinstance(light.rid, GaussianRID):
            rid = {"model": "gaussian", "sigma_deg": _deg(light.rid.sigma)}
        else:
            rid = {"model": "table", "samples_deg": [[_deg(a), v] for a, v in light.rid.samples]}
        lights.append(
            {
                "position_m": list(light.position),
                "direction": list(light.direction),
                "frame": "camera",
                "rid": rid,
                "intensity": list(light.intensity_i0),
            }
        )
    return {
        "camera": {"width": c.width, "height": c.height, "fx": c.fx, "fy": c.fy, "cx": c.cx, "cy": c.cy},
        "lights": lights,
        "water": {
            "eta_per_m": list(scene.water.eta),
            "vsf_deg": [[_deg(a), v] for a, v in scene.water.vsf],
        },
        "settings": {
            "gain": s.gain,
            "fs_coeff_px_per_m": s.fs_coeff,
            "lut_downsample": s.lut_downsample,
            "min_light_distance_m": s.min_light_distance,
            "fog_background": list(s.fog_background),
            "n_slabs": s.n_slabs,
            "d_max_m": s.d_max,
            "lut_memory_cap_bytes": s.lut_memory_cap,
        },
    }


def dumps_scene(scene: Scene) -> str:
    return json.dumps(scene_to_dict(scene), indent=2)


def loads_scene(text: str, base_dir: Path | None = None, source: str = "<string>") -> Scene:
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}:{e.lineno}:{e.colno}", e.msg) from None
    return scene_from_dict(cfg, base_dir)


def load_scene_config(path, overrides: dict | None = None) -> Scene:
    """Parse and validate a JSON scene file; ``overrides`` replace settings fields."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(str(path), f"cannot read config: {e.strerror}") from None
    scene = loads_scene(text, path.parent, str(path))
    if overrides:
        scene = scene.with_settings(**{k: v for k, v in overrides.items() if v is not None})
    return scene


# -- images -------------------------------------------------------------------


def srgb_to_linear(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def read_pfm(path) -> np.ndarray:
    """PFM image as float32 (H, W) or (H, W, 3), top row first."""
    with open(path, "rb") as f:
        kind = f.readline().strip()
        if kind not in (b"PF", b"Pf"):
            raise ImageFormatError(f"{path}: not a PFM file")
        dims = f.readline()
        while dims.startswith(b"#"):
            dims = f.readline()
        m = re.match(rb"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise ImageFormatError(f"{path}: malformed PFM header")
        width, height = int(m.group(1)), int(m.group(2))
        scale = float(f.readline().strip())
        endian = "<" if scale < 0 else ">"
        channels = 3 if kind == b"PF" else 1
        data = np.fromfile(f, dtype=endian + "f4")
    if data.size != width * height * channels:
        raise ImageFormatError(f"{path}: expected {width * height * channels} samples, got {data.size}")
    shape = (height, width, 3) if channels == 3 else (height, width)
    return np.flipud(data.reshape(shape)).astype(np.float32)


def write_pfm(path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 3 and image.shape[2] == 3:
        kind = b"PF"
    elif image.ndim == 2:
        kind = b"Pf"
    else:
        raise ImageFormatError(f"cannot write shape {image.shape} as PFM")
    h, w = image.shape[:2]
    with open(path, "wb") as f:
        f.write(kind + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n")
        f.write(np.ascontiguousarray(np.flipud(image), dtype="<f4").tobytes())


@dataclass(frozen=True)
class DepthEncoding:
    format: str = "png16"  # "png16" or "pfm"
    scale: float = 0.001  # meters per unit, png16 only

    def __post_init__(self):
        if self.format not in ("png16", "pfm"):
            raise ValueError(f"unknown depth format {self.format!r}")
        if self.format == "png16" and not self.scale > 0:
            raise ValueError("depth scale must be > 0")

    @classmethod
    def for_path(cls, path, scale: float = 0.001) -> "DepthEncoding":
        return cls("pfm", 1.0) if str(path).lower().endswith(".pfm") else cls("png16", scale)


def read_depth(path, encoding: DepthEncoding | None = None) -> np.ndarray:
    encoding = encoding or DepthEncoding.for_path(path)
    if encoding.format == "pfm":
        depth = read_pfm(path).astype(np.float64)
        if depth.ndim != 2:
            raise ImageFormatError(f"{path}: depth PFM must have one channel")
        return np.where(np.isfinite(depth) & (depth > 0), depth, 0.0)
    with Image.open(path) as im:
        if im.mode not in ("I;16", "I;16B", "I;16L", "I"):
            raise ImageFormatError(f"{path}: depth PNG must be 16-bit grayscale, got mode {im.mode}")
        raw = np.asarray(im).astype(np.float64)
    return raw * encoding.scale


def read_albedo(path) -> np.ndarray:
    """8-bit sRGB image -> linear (H, W, 3) in [0, 1]."""
    with Image.open(path) as im:
        if im.mode not in ("RGB", "RGBA", "L", "P"):
            raise ImageFormatError(f"{path}: unsupported albedo mode {im.mode} (need 8-bit)")
        rgb = np.asarray(im.convert("RGB"))
    return srgb_to_linear(rgb / 255.0)


def load_rgbd(albedo_path, depth_path, encoding: DepthEncoding | None = None) -> FrameInput:
    albedo = read_albedo(albedo_path)
    depth = read_depth(depth_path, encoding)
    if albedo.shape[:2] != depth.shape:
        raise ImageFormatError(
            f"albedo {albedo_path} is {albedo.shape[1]}x{albedo.shape[0]},"
            f" depth {depth_path} is {depth.shape[1]}x{depth.shape[0]}"
        )
    return FrameInput(albedo, depth)


def write_depth_png16(path, depth_m: np.ndarray, scale: float = 0.001) -> None:
    raw = np.round(np.asarray(depth_m) / scale)
    if raw.max(initial=0) > 65535:
        raise ImageFormatError("depth exceeds 16-bit range at this scale")
    Image.fromarray(raw.astype(np.uint16)).save(path)


def write_albedo_png(path, linear: np.ndarray) -> None:
    x = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0)
    srgb = np.where(x <= 0.0031308, 12.92 * x, 1.055 * x ** (1 / 2.4) - 0.055)
    Image.fromarray(np.round(srgb * 255).astype(np.uint8), "RGB").save(path)


def save_image(image: np.ndarray, path, components: dict | None = None) -> list[Path]:
    """Write an 8-bit RGB PNG, plus ``<stem>_<name>.pfm`` for each linear debug component."""
    path = Path(path)
    image = np.asarray(image)
    if image.dtype != np.uint8 or image.ndim != 3 or image.shape[2] != 3:
        raise ImageFormatError("save_image expects an (H, W, 3) uint8 image")
    Image.fromarray(image, "RGB").save(path)
    written = [path]
    for name, comp in (components or {}).items():
        p = path.with_name(f"{path.stem}_{name}.pfm")
        write_pfm(p, comp)
        written.append(p)
    return written


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


# -- tables -------------------------------------------------------------------


def write_profile_csv(path_or_file, profile: np.ndarray) -> None:
    def emit(f):
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["depth_m", "r", "g", "b"])
        for row in profile:
            w.writerow([f"{x:.9g}" for x in row])

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as f:
            emit(f)


# -- job manifest -------------------------------------------------------------


@dataclass
class JobManifest:
    scene: Path
    inputs: list[tuple[Path, Path]]
    output_dir: Path
    overrides: dict = field(default_factory=dict)
    workers: int = 1
    depth_scale: float = 0.001


_OVERRIDE_KEYS = {
    "gain": "gain",
    "n_slabs": "n_slabs",
    "d_max_m": "d_max",
    "lut_downsample": "lut_downsample",
    "fs_coeff_px_per_m": "fs_coeff",
}


def load_manifest(path) -> JobManifest:
    """Sequence job file.

    Inputs are either ``"inputs": [{"albedo": ..., "depth": ...}, ...]`` or
    ``"glob": {"albedo": "frames/*_rgb.png", "depth": "frames/*_depth.png"}``
    (both globs sorted, paired in order). Relative paths resolve against the
    manifest's directory.
    """
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except OSError as e:
        raise ConfigError(str(path), f"cannot read manifest: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}", e.msg) from None
    base = path.parent
    scene = base / _get(cfg, "scene", "")
    if "inputs" in cfg:
        inputs = [
            (base / _get(item, "albedo", f"inputs[{i}]"), base / _get(item, "depth", f"inputs[{i}]"))
            for i, item in enumerate(cfg["inputs"])
        ]
    else:
        pattern = _get(cfg, "glob", "")
        albedos = sorted(globlib.glob(str(base / _get(pattern, "albedo", "glob"))))
        depths = sorted(globlib.glob(str(base / _get(pattern, "depth", "glob"))))
        if len(albedos) != len(depths):
            raise ConfigError("glob", f"{len(albedos)} albedo files but {len(depths)} depth files")
        inputs = [(Path(a), Path(d)) for a, d in zip(albedos, depths)]
    for a, d in inputs:
        for p in (a, d):
            if not p.exists():
                raise ConfigError("inputs", f"{p} does not exist")
    raw = _get(cfg, "overrides", "", {})
    unknown = set(raw) - set(_OVERRIDE_KEYS)
    if unknown:
        raise ConfigError("overrides", f"unknown keys {sorted(unknown)}")
    overrides = {_OVERRIDE_KEYS[k]: v for k, v in raw.items()}
    workers = _get(cfg, "workers", "", 1)
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers", "must be an integer >= 1")
    return JobManifest(
        scene=scene,
        inputs=inputs,
        output_dir=base / _get(cfg, "output_dir", ""),
        overrides=overrides,
        workers=workers,
        depth_scale=float(_get(cfg, "depth_scale_m", "", 0.001)),
    )
