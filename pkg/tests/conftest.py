import math
from pathlib import Path

import numpy as np
import pytest

from deepsea.io import read_vsf_csv
from deepsea.scene import (
    CameraModel,
    GaussianRID,
    RenderSettings,
    SpotLight,
    Spectrum,
    WaterBody,
    validate_scene,
)

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
JERLOV_IB = Spectrum(0.37, 0.044, 0.035)
S45 = math.sqrt(0.5)


def flat_vsf(value):
    return ((0.0, value), (math.pi, value))


def gaussian_light(position, direction=(0.0, 0.0, 1.0), sigma_deg=35.0, i0=(1.0, 1.0, 1.0)):
    return SpotLight(tuple(position), tuple(direction), GaussianRID(math.radians(sigma_deg)), Spectrum(*i0))


def uniform_light(position, direction=(0.0, 0.0, 1.0), i0=(1.0, 1.0, 1.0)):
    # a very wide Gaussian is not exactly 1, so use a flat table instead
    from deepsea.scene import TableRID

    return SpotLight(tuple(position), tuple(direction), TableRID(((0.0, 1.0), (math.pi, 1.0))), Spectrum(*i0))


@pytest.fixture(scope="session")
def petzold():
    return read_vsf_csv(CONFIGS / "petzold_vsf.csv")


@pytest.fixture(scope="session")
def corner_light_scene(petzold):
    """Single light at (1, 1, 0) m looking along +z, 64x64 camera with the principal point on pixel (31, 31)."""
    cam = CameraModel(64, 64, 45.0, 45.0, 31.5, 31.5)
    water = WaterBody(JERLOV_IB, petzold)
    return validate_scene(cam, [gaussian_light((1.0, 1.0, 0.0))], water, RenderSettings(n_slabs=64, d_max=10.0))


@pytest.fixture(scope="session")
def two_light_scene(petzold):
    """Two lights 1 m left/right of a 48x40 camera, both tilted 45 degrees inward."""
    cam = CameraModel(48, 40, 40.0, 40.0, 24.0, 20.0)
    lights = [gaussian_light((-1.0, 0.0, 0.0), (S45, 0.0, S45)), gaussian_light((1.0, 0.0, 0.0), (-S45, 0.0, S45))]
    return validate_scene(cam, lights, WaterBody(JERLOV_IB, petzold), RenderSettings(n_slabs=16, d_max=10.0))


def plane_frame(camera, z, albedo=1.0):
    from deepsea.scene import FrameInput

    depth = np.full((camera.height, camera.width), float(z))
    return FrameInput(np.full(depth.shape + (3,), float(albedo)), depth)
