"""Deep-sea image simulation from in-air RGB-D frames under co-moving spotlights."""

from .backscatter import (
    BackscatterLUT,
    LUTError,
    StaleLUTError,
    backscatter_at,
    backscatter_bruteforce,
    backscatter_profile,
    build_lut,
    load_lut,
    save_lut,
    slab_thicknesses,
    vsf_eval,
    voxel_irradiance,
)
from .io import load_rgbd, load_scene_config, save_image
from .pipeline import (
    RenderedFrame,
    forward_scatter,
    render_direct,
    render_fog,
    render_frame,
    render_sequence,
    tone_map,
)
from .radiometry import direct_signal, evaluate_rid, normals_from_depth, pixel_ray, unproject
from .scene import (
    CameraModel,
    FrameInput,
    GaussianRID,
    RenderSettings,
    Scene,
    SceneError,
    SlabSampling,
    Spectrum,
    SpotLight,
    TableRID,
    WaterBody,
    validate_scene,
)

__version__ = "0.1.0"
