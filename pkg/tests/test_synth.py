# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

import numpy as np
import pytest

from omnialign.synth import formats, scenes
from omnialign.synth.scenes import SceneConfig, generate_scene
from omnialign.utilities import (
    ConfigInvalid,
    DataMissing,
    MagicMismatch,
    MalformedHeader,
    TruncatedPayload,
    VersionUnsupported,
)

SMALL = SceneConfig(height=16, width=16)


class TestScenes:
    def test_deterministic(self):
        a = generate_scene(SMALL, 3)
        b = generate_scene(SMALL, 3)
        np.testing.assert_array_equal(a.rgb, b.rgb)
        np.testing.assert_array_equal(a.depth, b.depth)
        np.testing.assert_array_equal(a.seg, b.seg)
        assert a.n_objects == b.n_objects

    def test_seed_changes_scene(self):
        a = generate_scene(SMALL, 3)
        b = generate_scene(SceneConfig(height=16, width=16, seed=8), 3)
        assert not np.array_equal(a.rgb, b.rgb)

    def test_single_object(self):
        cfg = SceneConfig(height=16, width=16, n_objects_min=1, n_objects_max=1)
        for index in range(10):
            scene = generate_scene(cfg, index)
            assert scene.n_objects == 1 and scene.label == 0
            assert set(np.unique(scene.seg).tolist()) <= {0.0, 1.0}
            assert 1.0 in scene.seg

    def test_seg_and_depth_agree(self):
        for index in range(20):
            scene = generate_scene(SMALL, index)
            k = scene.n_objects
            assert SMALL.n_objects_min <= k <= SMALL.n_objects_max
            assert scene.label == k - SMALL.n_objects_min
            depths = {obj.object_id: obj.depth for obj in scene.objects}
            assert len(set(depths.values())) == k
            background = scene.seg == 0
            np.testing.assert_array_equal(scene.depth[background], k + 2.0)
            for object_id, depth in depths.items():
                np.testing.assert_array_equal(scene.depth[scene.seg == object_id], depth)

    def test_nearest_object_wins(self):
        scene = generate_scene(SMALL, 5)
        for obj in scene.objects:
            m = obj.mask(SMALL.height, SMALL.width)
            # every covered pixel shows this object or one nearer to the camera
            assert np.all(scene.depth[m] <= obj.depth)

    def test_rgb_on_byte_grid(self):
        rgb = generate_scene(SMALL, 1).rgb
        assert rgb.min() >= 0.0 and rgb.max() <= 1.0
        np.testing.assert_array_equal(np.round(rgb * 255) / 255.0, rgb)

    def test_distinct_scenes(self):
        cfg = SceneConfig(height=32, width=32)
        seen = {generate_scene(cfg, i).rgb.tobytes() for i in range(100)}
        assert len(seen) == 100

    def test_bad_config(self):
        with pytest.raises(ConfigInvalid):
            SceneConfig(n_objects_min=3, n_objects_max=2)
        with pytest.raises(ConfigInvalid):
            SceneConfig(background_palette=((1.5, 0.0, 0.0),))

    def test_write_and_read_scene(self, tmp_path):
        scene = generate_scene(SMALL, 2)
        path = scenes.scene_dir(str(tmp_path), 2)
        written = scenes.write_scene(path, scene)
        assert len(written) == 3
        back = scenes.read_scene(path)
        np.testing.assert_array_equal(back.rgb, scene.rgb)
        np.testing.assert_array_equal(back.depth, scene.depth)
        np.testing.assert_array_equal(back.seg, scene.seg)
        assert back.n_objects <= scene.n_objects

    def test_missing_scene(self, tmp_path):
        with pytest.raises(DataMissing):
            scenes.read_scene(str(tmp_path / "scene_00000"))
        path = scenes.scene_dir(str(tmp_path), 0)
        scenes.write_scene(path, generate_scene(SMALL, 0))
        (tmp_path / "scene_00000" / scenes.SEG_FILE).unlink()
        with pytest.raises(DataMissing):
            scenes.read_scene(path)


class TestNetpbm:
    def test_white_pixel_bytes(self):
        assert formats.encode_ppm(np.ones((1, 1, 3))) == b"P6\n1 1\n255\n\xff\xff\xff"

    def test_ppm_round_trip(self, tmp_path):
        img = formats.quantize(generate_scene(SMALL, 0).rgb) / 255.0
        path = str(tmp_path / "img.ppm")
        formats.write_ppm(path, img)
        np.testing.assert_array_equal(formats.read_ppm(path), img)

    def test_quantize_clamps(self):
        np.testing.assert_array_equal(
            formats.quantize([-0.5, 0.0, 1.0, 2.0]), [0.0, 0.0, 255.0, 255.0]
        )

    def test_pgm_ids(self, tmp_path):
        seg = np.array([[0, 1, 2], [5, 5, 0]], dtype=float)
        path = str(tmp_path / "seg.pgm")
        formats.write_pgm(path, seg, scale=1)
        np.testing.assert_array_equal(formats.read_pgm(path, scale=1), seg)
        np.testing.assert_array_equal(formats.read_pgm(path), seg / 255.0)

    def test_header_comment(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\x07")
        np.testing.assert_array_equal(formats.read_pgm(str(path), scale=1), [[0.0, 7.0]])

    def test_truncated(self, tmp_path):
        path = tmp_path / "t.ppm"
        path.write_bytes(formats.encode_ppm(np.ones((2, 2, 3)))[:-1])
        with pytest.raises(TruncatedPayload):
            formats.read_ppm(str(path))

    def test_malformed(self, tmp_path):
        path = tmp_path / "m.ppm"
        path.write_bytes(b"P6\n1 x\n255\n\x00\x00\x00")
        with pytest.raises(MalformedHeader):
            formats.read_ppm(str(path))
        path.write_bytes(b"P5\n1 1\n255\n\x00")
        with pytest.raises(MalformedHeader):
            formats.read_ppm(str(path))


class TestBinaryFormats:
    def test_f32raw_bit_exact(self, tmp_path):
        values = np.float32(np.linspace(-3.0, 7.0, 12)).astype(np.float64).reshape(3, 4)
        path = str(tmp_path / "d.f32")
        formats.write_f32raw(path, values)
        back = formats.read_f32raw(path)
        assert back.shape == (3, 4)
        np.testing.assert_array_equal(back, values)

    def test_f32raw_errors(self, tmp_path):
        path = tmp_path / "d.f32"
        formats.write_f32raw(str(path), np.ones((2, 2)))
        data = path.read_bytes()
        path.write_bytes(data[:-2])
        with pytest.raises(TruncatedPayload):
            formats.read_f32raw(str(path))
        path.write_bytes(b"XXXX" + data[4:])
        with pytest.raises(MagicMismatch):
            formats.read_f32raw(str(path))
        path.write_bytes(data[:4] + b"\x09\x00\x00\x00" + data[8:])
        with pytest.raises(VersionUnsupported):
            formats.read_f32raw(str(path))

    def test_features_round_trip(self, tmp_path):
        feats = np.arange(15, dtype=np.float64).reshape(5, 3) / 7.0
        path = str(tmp_path / "f.bin")
        formats.write_features(path, formats.FeatureSetFile(feats, modality=2))
        back = formats.read_features(path)
        assert back.modality == 2 and back.n_items == 5 and back.dim == 3
        np.testing.assert_array_equal(back.features, feats.astype(np.float32))

    def test_features_header_layout(self, tmp_path):
        path = tmp_path / "f.bin"
        formats.write_features(str(path), formats.FeatureSetFile(np.ones((2, 3)), 1))
        data = path.read_bytes()
        assert data[:8] == b"OMNIFEAT"
        assert len(data) == 8 + 4 + 4 + 4 + 1 + 2 * 3 * 4

    def test_empty_feature_set(self, tmp_path):
        path = str(tmp_path / "empty.bin")
        formats.write_features(path, formats.FeatureSetFile(np.zeros((0, 4))))
        back = formats.read_features(path)
        assert back.features.shape == (0, 4)

    def test_features_magic(self, tmp_path):
        path = tmp_path / "f.bin"
        formats.write_features(str(path), formats.FeatureSetFile(np.ones((1, 2))))
        path.write_bytes(b"NOTFEATS" + path.read_bytes()[8:])
        with pytest.raises(MagicMismatch):
            formats.read_features(str(path))
