import json
import math
import os
import stat

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from conftest import CONFIGS, S45
from deepsea import io
from deepsea.io import ConfigError, DepthEncoding, ImageFormatError


def minimal_cfg():
    return {
        "camera": {"width": 8, "height": 6, "fx": 10.0, "fy": 10.0, "cx": 4.0, "cy": 3.0},
        "lights": [{"position_m": [0, 0, 0], "direction": [0, 0, 1], "rid": {"model": "gaussian", "sigma_deg": 35}}],
        "water": {"eta_per_m": [0.37, 0.044, 0.035], "vsf_deg": [[0, 1.0], [90, 0.01], [180, 0.001]]},
    }


class TestSceneConfig:
    def test_two_light_rig(self):
        scene = io.load_scene_config(CONFIGS / "two_light_45deg.json")
        left, right = scene.lights
        assert left.position == (-1.0, 0.0, 0.0) and right.position == (1.0, 0.0, 0.0)
        assert left.direction == pytest.approx((S45, 0, S45))
        assert right.direction == pytest.approx((-S45, 0, S45))
        # 45 degrees off the optical axis, toward the image centre
        assert math.degrees(math.acos(left.direction[2])) == pytest.approx(45.0)
        assert tuple(scene.water.eta) == (0.37, 0.044, 0.035)
        assert left.rid.sigma == pytest.approx(math.radians(35))

    def test_single_light_rig(self):
        scene = io.load_scene_config(CONFIGS / "fig6_single_light.json")
        (light,) = scene.lights
        assert light.position == (1.0, 1.0, 0.0)
        assert light.direction == (0.0, 0.0, 1.0)
        assert light.rid.sigma == pytest.approx(math.radians(35))

    def test_missing_eta(self):
        cfg = minimal_cfg()
        del cfg["water"]["eta_per_m"]
        with pytest.raises(ConfigError) as err:
            io.scene_from_dict(cfg)
        assert err.value.path == "water.eta_per_m"

    def test_parse_error_has_line_context(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "camera": {\n    "width": 8,,\n  }\n}\n')
        with pytest.raises(ConfigError) as err:
            io.load_scene_config(p)
        assert err.value.path.startswith(f"{p}:3:")

    def test_validation_errors_pass_through(self):
        cfg = minimal_cfg()
        cfg["lights"][0]["direction"] = [0, 0, 0]
        with pytest.raises(io.SceneError, match="direction not unit"):
            io.scene_from_dict(cfg)

    def test_degrees_to_radians(self):
        scene = io.scene_from_dict(minimal_cfg())
        assert [a for a, _ in scene.water.vsf] == pytest.approx([0, math.pi / 2, math.pi])

    def test_world_frame_light(self):
        cfg = minimal_cfg()
        # camera at (0, 0, 5) looking down world -z: camera x = world x, camera y = world -y, camera z = world -z
        cfg["camera"]["pose"] = {"position_m": [0, 0, 5], "rotation": [[1, 0, 0], [0, -1, 0], [0, 0, -1]]}
        cfg["lights"][0].update({"position_m": [1, 2, 5], "direction": [0, 0, -1], "frame": "world"})
        (light,) = io.scene_from_dict(cfg).lights
        assert light.position == pytest.approx((1, -2, 0))
        assert light.direction == pytest.approx((0, 0, 1))

    def test_world_frame_needs_pose(self):
        cfg = minimal_cfg()
        cfg["lights"][0]["frame"] = "world"
        with pytest.raises(ConfigError, match="pose"):
            io.scene_from_dict(cfg)

    def test_overrides(self):
        scene = io.load_scene_config(CONFIGS / "fig6_single_light.json", {"n_slabs": 16, "d_max": 5.0, "gain": 2.0})
        assert (scene.settings.n_slabs, scene.settings.d_max, scene.settings.gain) == (16, 5.0, 2.0)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            io.load_scene_config(tmp_path / "nope.json")

    def test_shipped_round_trip(self):
        scene = io.load_scene_config(CONFIGS / "two_light_45deg.json")
        again = io.loads_scene(io.dumps_scene(scene))
        assert again == scene
        assert again.fingerprint() == scene.fingerprint()


angles = st.lists(st.floats(1.0, 179.0), min_size=0, max_size=5, unique=True).map(sorted)
unit = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.1, 1)).map(
    lambda v: tuple(x / math.sqrt(sum(c * c for c in v)) for x in v)
)


@settings(max_examples=80, deadline=None)
@given(
    sigma=st.floats(1.0, 90.0),
    pos=st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3)),
    direction=unit,
    eta=st.tuples(st.floats(0, 2), st.floats(0, 2), st.floats(0, 2)),
    mids=angles,
    gain=st.floats(0.01, 100),
    n=st.integers(1, 64),
)
def test_config_round_trip(sigma, pos, direction, eta, mids, gain, n):
    cfg = minimal_cfg()
    cfg["lights"][0].update({"position_m": list(pos), "direction": list(direction), "rid": {"model": "gaussian", "sigma_deg": sigma}})
    cfg["lights"].append(
        {
            "position_m": [0.1, 0.0, 0.0],
            "direction": [0, 0, 1],
            "rid": {"model": "table", "samples_deg": [[0, 1.0]] + [[a, 0.5] for a in mids] + [[180, 0.0]]},
        }
    )
    cfg["water"] = {"eta_per_m": list(eta), "vsf_deg": [[0, 1.0]] + [[a, 0.1] for a in mids] + [[180, 0.001]]}
    cfg["settings"] = {"gain": gain, "n_slabs": n}
    scene = io.scene_from_dict(cfg)
    assert io.loads_scene(io.dumps_scene(scene)) == scene


class TestDepthAndAlbedo:
    def test_png16_scale_and_sentinel(self, tmp_path):
        raw = np.array([[1000, 0], [65535, 1]], dtype=np.uint16)
        Image.fromarray(raw).save(tmp_path / "d.png")
        depth = io.read_depth(tmp_path / "d.png", DepthEncoding("png16", 0.001))
        assert depth[0, 0] == pytest.approx(1.0)
        assert depth[0, 1] == 0.0
        assert depth[1, 0] == pytest.approx(65.535)

    def test_pfm_depth_is_raw_metres(self, tmp_path):
        d = np.array([[1.25, 0.0], [np.nan, 7.5]], dtype=np.float32)
        io.write_pfm(tmp_path / "d.pfm", d)
        depth = io.read_depth(tmp_path / "d.pfm")
        np.testing.assert_array_equal(depth, [[1.25, 0.0], [0.0, 7.5]])

    def test_eight_bit_depth_rejected(self, tmp_path):
        Image.fromarray(np.zeros((2, 2), np.uint8)).save(tmp_path / "d.png")
        with pytest.raises(ImageFormatError, match="16-bit"):
            io.read_depth(tmp_path / "d.png")

    def test_albedo_endpoints(self, tmp_path):
        rgb = np.array([[[255, 255, 255], [0, 0, 0]]], dtype=np.uint8)
        Image.fromarray(rgb).save(tmp_path / "a.png")
        alb = io.read_albedo(tmp_path / "a.png")
        np.testing.assert_array_equal(alb, [[[1.0] * 3, [0.0] * 3]])

    def test_albedo_is_srgb_decoded(self, tmp_path):
        Image.fromarray(np.full((1, 1, 3), 128, np.uint8)).save(tmp_path / "a.png")
        assert io.read_albedo(tmp_path / "a.png")[0, 0, 0] == pytest.approx(0.2158605, abs=1e-6)

    def test_sixteen_bit_albedo_rejected(self, tmp_path):
        Image.fromarray(np.zeros((2, 2), np.uint16)).save(tmp_path / "a.png")
        with pytest.raises(ImageFormatError):
            io.read_albedo(tmp_path / "a.png")

    def test_load_rgbd(self, tmp_path):
        io.write_albedo_png(tmp_path / "a.png", np.full((3, 4, 3), 0.5))
        io.write_depth_png16(tmp_path / "d.png", np.full((3, 4), 2.0))
        frame = io.load_rgbd(tmp_path / "a.png", tmp_path / "d.png")
        assert frame.shape == (3, 4)
        np.testing.assert_allclose(frame.depth, 2.0)
        np.testing.assert_allclose(frame.albedo, 0.5, atol=3e-3)

    def test_load_rgbd_dim_mismatch(self, tmp_path):
        io.write_albedo_png(tmp_path / "a.png", np.zeros((3, 4, 3)))
        io.write_depth_png16(tmp_path / "d.png", np.ones((4, 4)))
        with pytest.raises(ImageFormatError, match="4x3"):
            io.load_rgbd(tmp_path / "a.png", tmp_path / "d.png")

    def test_depth_encoding_checks(self):
        with pytest.raises(ValueError):
            DepthEncoding("png16", 0.0)
        with pytest.raises(ValueError):
            DepthEncoding("exr")


class TestSaveImage:
    def test_png_lossless(self, tmp_path):
        img = np.random.default_rng(0).integers(0, 256, (7, 9, 3), dtype=np.uint8)
        io.save_image(img, tmp_path / "x.png")
        np.testing.assert_array_equal(io.load_image(tmp_path / "x.png"), img)

    @pytest.mark.skipif(hasattr(os, "geteuid") and os.geteuid() == 0, reason="root ignores directory permissions")
    def test_read_only_dir(self, tmp_path):
        ro = tmp_path / "ro"
        ro.mkdir()
        ro.chmod(stat.S_IRUSR | stat.S_IXUSR)
        try:
            with pytest.raises(OSError):
                io.save_image(np.zeros((2, 2, 3), np.uint8), ro / "x.png")
        finally:
            ro.chmod(stat.S_IRWXU)

    @pytest.mark.skipif(not os.path.isdir("/proc/self"), reason="needs procfs")
    def test_read_only_filesystem(self):
        # procfs refuses new files even for root
        with pytest.raises(OSError):
            io.save_image(np.zeros((2, 2, 3), np.uint8), "/proc/deepsea_out.png")

    def test_missing_dir(self, tmp_path):
        with pytest.raises(OSError):
            io.save_image(np.zeros((2, 2, 3), np.uint8), tmp_path / "nope" / "x.png")

    def test_debug_companions(self, tmp_path):
        comps = {name: np.full((2, 3, 3), k, np.float64) for k, name in enumerate(["direct", "forward", "backscatter"])}
        written = io.save_image(np.zeros((2, 3, 3), np.uint8), tmp_path / "f.png", comps)
        assert sorted(p.name for p in written) == ["f.png", "f_backscatter.pfm", "f_direct.pfm", "f_forward.pfm"]
        np.testing.assert_array_equal(io.read_pfm(tmp_path / "f_backscatter.pfm"), 2.0)

    def test_rejects_float_image(self, tmp_path):
        with pytest.raises(ImageFormatError):
            io.save_image(np.zeros((2, 2, 3)), tmp_path / "x.png")


@settings(max_examples=40, deadline=None)
@given(h=st.integers(1, 6), w=st.integers(1, 6), colour=st.booleans(), seed=st.integers(0, 2**16))
def test_pfm_round_trip(tmp_path_factory, h, w, colour, seed):
    shape = (h, w, 3) if colour else (h, w)
    img = np.random.default_rng(seed).standard_normal(shape).astype(np.float32)
    p = tmp_path_factory.mktemp("pfm") / "x.pfm"
    io.write_pfm(p, img)
    back = io.read_pfm(p)
    assert back.shape == shape
    np.testing.assert_array_equal(back, img)


def test_pfm_big_endian(tmp_path):
    data = np.array([[1.0, 2.0]], dtype=">f4")
    (tmp_path / "x.pfm").write_bytes(b"Pf\n2 1\n1.0\n" + data.tobytes())
    np.testing.assert_array_equal(io.read_pfm(tmp_path / "x.pfm"), [[1.0, 2.0]])


def test_pfm_truncated(tmp_path):
    (tmp_path / "x.pfm").write_bytes(b"PF\n2 2\n-1.0\n" + b"\0" * 8)
    with pytest.raises(ImageFormatError):
        io.read_pfm(tmp_path / "x.pfm")


def test_vsf_csv(petzold):
    assert petzold[0][0] == 0.0 and petzold[-1][0] == pytest.approx(math.pi)
    assert all(b > 0 for _, b in petzold)
    # strongly forward peaked
    assert petzold[0][1] > 100 * petzold[-1][1]


def test_profile_csv(tmp_path):
    io.write_profile_csv(tmp_path / "p.csv", np.array([[1.0, 0.5, 0.25, 0.125], [2.0, 1.0, 1.0, 1.0]]))
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines == ["depth_m,r,g,b", "1,0.5,0.25,0.125", "2,1,1,1"]


class TestManifest:
    def _frames(self, tmp_path, n=2):
        for i in range(n):
            io.write_albedo_png(tmp_path / f"f{i}_rgb.png", np.zeros((2, 2, 3)))
            io.write_depth_png16(tmp_path / f"f{i}_depth.png", np.ones((2, 2)))

    def test_inputs_list(self, tmp_path):
        self._frames(tmp_path)
        m = {
            "scene": str(CONFIGS / "fig6_single_light.json"),
            "inputs": [{"albedo": "f0_rgb.png", "depth": "f0_depth.png"}],
            "output_dir": "out",
            "overrides": {"gain": 2.0, "n_slabs": 8, "d_max_m": 5.0},
            "workers": 3,
        }
        (tmp_path / "job.json").write_text(json.dumps(m))
        job = io.load_manifest(tmp_path / "job.json")
        assert job.inputs == [(tmp_path / "f0_rgb.png", tmp_path / "f0_depth.png")]
        assert job.output_dir == tmp_path / "out"
        assert job.overrides == {"gain": 2.0, "n_slabs": 8, "d_max": 5.0}
        assert job.workers == 3

    def test_glob_pairs_sorted(self, tmp_path):
        self._frames(tmp_path, 3)
        m = {"scene": "s.json", "glob": {"albedo": "*_rgb.png", "depth": "*_depth.png"}, "output_dir": "o"}
        (tmp_path / "job.json").write_text(json.dumps(m))
        job = io.load_manifest(tmp_path / "job.json")
        assert [a.name for a, _ in job.inputs] == ["f0_rgb.png", "f1_rgb.png", "f2_rgb.png"]
        assert [d.name for _, d in job.inputs] == ["f0_depth.png", "f1_depth.png", "f2_depth.png"]

    @pytest.mark.parametrize(
        "patch, match",
        [
            ({"overrides": {"colour": 1}}, "unknown"),
            ({"workers": 0}, "workers"),
            ({"inputs": [{"albedo": "missing.png", "depth": "f0_depth.png"}]}, "does not exist"),
        ],
    )
    def test_rejects(self, tmp_path, patch, match):
        self._frames(tmp_path, 1)
        m = {"scene": "s.json", "inputs": [{"albedo": "f0_rgb.png", "depth": "f0_depth.png"}], "output_dir": "o"}
        m.update(patch)
        (tmp_path / "job.json").write_text(json.dumps(m))
        with pytest.raises(ConfigError, match=match):
            io.load_manifest(tmp_path / "job.json")
