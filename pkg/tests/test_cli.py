# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

import hashlib
import json
import os
import sys

import numpy as np
import pandas as pd
import pytest

import omnialign
from omnialign import evalkit, evaluate, gen_data, model, reporting, sweep, tools, train
from omnialign import main as dispatcher
from omnialign.objective import LossBreakdown
from omnialign.synth import formats, scenes
from omnialign.synth.scenes import SceneConfig, generate_scene


@pytest.fixture
def checkpoint(tmp_path, tiny_config_file):
    path = str(tmp_path / "run" / "model.ckpt")
    code = train.main(
        [
            "--config", tiny_config_file,
            "--out-checkpoint", path,
            "--log", str(tmp_path / "run" / "log.jsonl"),
        ]
    )
    assert code == 0
    return path


@pytest.fixture
def dataset(tmp_path, tiny_config_file):
    out = str(tmp_path / "data")
    assert gen_data.main(["--config", tiny_config_file, "--out", out]) == 0
    return out


class TestGenData:
    def test_manifest(self, dataset, tiny_config):
        with open(os.path.join(dataset, "manifest.json")) as f:
            manifest = json.load(f)
        assert manifest["n_train"] == 8 and manifest["n_eval"] == 6
        assert len(manifest["scenes"]) == 14
        assert [s["split"] for s in manifest["scenes"]] == ["train"] * 8 + ["eval"] * 6
        assert manifest["config"] == tiny_config.to_text()
        first = manifest["scenes"][0]
        assert set(first["files"]) == {
            "scene_00000/rgb.ppm", "scene_00000/depth.f32", "scene_00000/seg.pgm"
        }
        expected = generate_scene(tiny_config.scene_config(), 0)
        assert first["n_objects"] == expected.n_objects

    def test_rerun_with_force_is_identical(self, dataset, tiny_config_file):
        with open(os.path.join(dataset, "manifest.json"), "rb") as f:
            before = f.read()
        assert gen_data.main(["--config", tiny_config_file, "--out", dataset, "--force"]) == 0
        with open(os.path.join(dataset, "manifest.json"), "rb") as f:
            assert f.read() == before

    def test_refuses_non_empty_directory(self, dataset, tiny_config_file, capsys):
        assert gen_data.main(["--config", tiny_config_file, "--out", dataset]) == 3
        assert "--force" in capsys.readouterr().err

    def test_bad_config(self, tmp_path, tiny_config_file):
        out = str(tmp_path / "bad")
        code = gen_data.main(
            ["--config", tiny_config_file, "--out", out, "--data.n_eval", "1"]
        )
        assert code == 2
        assert gen_data.main(["--config", str(tmp_path / "nope.conf"), "--out", out]) == 2


class TestColorize:
    def write_inputs(self, tmp_path):
        scene = generate_scene(SceneConfig(height=16, width=16), 0)
        paths = scenes.write_scene(str(tmp_path / "scene"), scene)
        return scene, paths

    def test_writes_image(self, tmp_path):
        scene, (rgb, depth, seg) = self.write_inputs(tmp_path)
        out = str(tmp_path / "out.ppm")
        assert tools.colorize_main(["--rgb", rgb, "--raw", depth, "--out", out]) == 0
        img = formats.read_ppm(out)
        assert img.shape == (16, 16, 3)
        expected = formats.quantize(
            omnialign.imaging.natural_colorize(scene.depth, scene.rgb)
        ) / 255.0
        np.testing.assert_array_equal(img, expected)
        out2 = str(tmp_path / "jet.ppm")
        assert tools.colorize_main(
            ["--rgb", rgb, "--raw", seg, "--out", out2, "--colormap", "jet", "--bins", "8"]
        ) == 0

    def test_size_mismatch(self, tmp_path):
        _, (rgb, _, _) = self.write_inputs(tmp_path)
        raw = str(tmp_path / "small.f32")
        formats.write_f32raw(raw, np.ones((8, 8)))
        code = tools.colorize_main(["--rgb", rgb, "--raw", raw, "--out", str(tmp_path / "o.ppm")])
        assert code == 2

    def test_missing_input(self, tmp_path):
        _, (rgb, _, _) = self.write_inputs(tmp_path)
        code = tools.colorize_main(
            ["--rgb", rgb, "--raw", str(tmp_path / "none.f32"), "--out", str(tmp_path / "o.ppm")]
        )
        assert code == 3


class TestTrain:
    def test_writes_checkpoint_and_log(self, tmp_path, tiny_config_file, capsys):
        ckpt = str(tmp_path / "model.ckpt")
        log = str(tmp_path / "log.jsonl")
        code = train.main(
            ["--config", tiny_config_file, "--out-checkpoint", ckpt, "--log", log, "-v"]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "Finished 3 steps" in out
        assert "step      3" in out
        with open(log) as f:
            assert len(f.read().splitlines()) == 3
        assert os.path.exists(ckpt)

    def test_non_finite_loss(self, tmp_path, tiny_config_file, monkeypatch, capsys):
        def exploding(stack, batch, cfg, log_taus):
            nan = float("nan")
            return LossBreakdown(nan, nan, nan, cfg.lambda_anchor), None

        monkeypatch.setattr(train, "backward", exploding)
        code = train.main(
            [
                "--config", tiny_config_file,
                "--out-checkpoint", str(tmp_path / "m.ckpt"),
                "--log", str(tmp_path / "l.jsonl"),
            ]
        )
        assert code == 4
        assert "Non-finite loss" in capsys.readouterr().err


class TestEval:
    def run_eval(self, checkpoint, report, *extra):
        assert evaluate.main(["--checkpoint", checkpoint, "--report", report] + list(extra)) == 0
        with open(report) as f:
            return json.load(f)

    def test_full_report(self, checkpoint, tmp_path):
        report = self.run_eval(checkpoint, str(tmp_path / "r.json"))
        assert report["step"] == 3 and report["n_eval"] == 6
        assert report["sections"] == ["retrieval", "diagnostics", "knn", "pck"]
        for head in ("student", "teacher"):
            section = report[head]
            assert set(section) == {"retrieval", "diagnostics", "knn", "pck"}
            assert len(section["retrieval"]["pairs"]) == 6
            assert set(section["knn"]) == {"rgb", "depth", "seg"}
            assert set(section["knn"]["rgb"]["soft"]["accuracy"]) == {"1", "3"}
            assert len(section["pck"]["layers"]) == 2
            assert "rgb_gray" in section["diagnostics"]
        assert -1.0 <= report["teacher_similarity"] <= 1.0
        assert os.path.exists(str(tmp_path / "r.txt"))

    def test_stable_bytes(self, checkpoint, tmp_path):
        self.run_eval(checkpoint, str(tmp_path / "a.json"))
        self.run_eval(checkpoint, str(tmp_path / "b.json"))
        with open(str(tmp_path / "a.json"), "rb") as a, open(str(tmp_path / "b.json"), "rb") as b:
            assert a.read() == b.read()

    def test_selected_sections(self, checkpoint, tmp_path):
        report = self.run_eval(checkpoint, str(tmp_path / "r.json"), "--which", "retrieval")
        assert set(report["student"]) == {"retrieval"}

    def test_dataset_matches_generated_scenes(self, checkpoint, dataset, tmp_path):
        memory = self.run_eval(checkpoint, str(tmp_path / "m.json"))
        disk = self.run_eval(checkpoint, str(tmp_path / "d.json"), "--data", dataset)
        assert disk["student"] == memory["student"]
        assert disk["teacher"] == memory["teacher"]

    def test_missing_checkpoint(self, tmp_path):
        code = evaluate.main(["--checkpoint", str(tmp_path / "none.ckpt")])
        assert code == 3

    def test_partial_config_keeps_trained_data_settings(self, checkpoint, tmp_path):
        path = tmp_path / "batch.conf"
        path.write_text("[eval]\nbatch = 7\n")
        parser = evaluate._ArgumentParser(raise_errors=True)
        evaluate.define_arguments(parser)
        options = parser.parse_args(["--checkpoint", checkpoint, "--config", str(path)])
        cfg = evaluate.eval_config(model.load_checkpoint(checkpoint), options)
        assert cfg["eval.batch"] == 7
        assert cfg["data.n_train"] == 8 and cfg["data.n_eval"] == 6
        assert cfg["data.height"] == 16
        assert cfg.eval_indices.tolist() == list(range(8, 14))

        plain = self.run_eval(checkpoint, str(tmp_path / "a.json"))
        batched = self.run_eval(
            checkpoint, str(tmp_path / "b.json"), "--config", str(path)
        )
        assert batched["n_eval"] == 6
        assert batched["student"] == plain["student"]
        assert batched["teacher"] == plain["teacher"]

    def test_report_independent_of_checkpoint_location(self, checkpoint, tmp_path):
        moved = tmp_path / "elsewhere" / "model.ckpt"
        moved.parent.mkdir()
        with open(checkpoint, "rb") as f:
            data = f.read()
        moved.write_bytes(data)
        self.run_eval(checkpoint, str(tmp_path / "a.json"))
        report = self.run_eval(str(moved), str(tmp_path / "b.json"))
        assert report["checkpoint"] == "model.ckpt"
        assert report["checkpoint_sha256"] == hashlib.sha256(data).hexdigest()
        for name in ("a.json", "a.txt"):
            with open(str(tmp_path / name), "rb") as a:
                with open(str(tmp_path / name.replace("a.", "b.")), "rb") as b:
                    assert a.read() == b.read()


class TestEvalFeatures:
    def write_features(self, directory, features, modalities=(0, 1, 2)):
        os.makedirs(directory, exist_ok=True)
        for feats, m, name in zip(features, modalities, ("rgb", "depth", "seg")):
            formats.write_features(
                os.path.join(directory, name + ".feat"),
                formats.FeatureSetFile(feats, modality=m),
            )

    def test_matches_in_memory_evaluation(self, tmp_path, capsys):
        rng = np.random.RandomState(3)
        # float32-exact values, so the files hold exactly these features
        features = [rng.randn(10, 6).astype(np.float32).astype(np.float64) for _ in range(3)]
        features[1] = features[0] + 0.1 * features[1]
        directory = str(tmp_path / "feats")
        self.write_features(directory, features)
        report_path = str(tmp_path / "r.json")
        assert evaluate.main(["--features", directory, "--report", report_path]) == 0
        assert "skipping knn, pck" in capsys.readouterr().err
        with open(report_path) as f:
            report = json.load(f)
        assert report["n_eval"] == 10
        assert report["sections"] == ["retrieval", "diagnostics"]
        expected = evalkit.directed_pair_average(features, ("rgb", "depth", "seg"))
        assert report["external"]["retrieval"] == json.loads(
            reporting.dumps(expected.as_dict())
        )
        assert report["external"]["diagnostics"]["rgb_depth"] == pytest.approx(
            evalkit.diagnostics(features).rgb_depth
        )

    def test_export_then_evaluate(self, checkpoint, tmp_path):
        directory = str(tmp_path / "exported")
        assert evaluate.main(
            [
                "--checkpoint", checkpoint,
                "--report", str(tmp_path / "r.json"),
                "--which", "retrieval",
                "--export-features", directory,
            ]
        ) == 0
        features = evaluate.read_feature_dir(directory)
        assert [f.shape for f in features] == [(6, 8)] * 3
        np.testing.assert_allclose(np.linalg.norm(features[0], axis=1), 1.0, atol=1e-6)
        assert evaluate.main(
            ["--features", directory, "--report", str(tmp_path / "f.json")]
        ) == 0

    def test_wrong_modality_tag(self, tmp_path):
        features = [np.eye(4)] * 3
        directory = str(tmp_path / "feats")
        self.write_features(directory, features, modalities=(0, 2, 1))
        code = evaluate.main(["--features", directory, "--report", str(tmp_path / "r.json")])
        assert code == 3

    def test_missing_file(self, tmp_path):
        code = evaluate.main(
            ["--features", str(tmp_path / "none"), "--report", str(tmp_path / "r.json")]
        )
        assert code == 3

    def test_needs_checkpoint_or_features(self):
        with pytest.raises(SystemExit):
            evaluate.main(["--report", "r.json"])


class TestPCA:
    def test_six_images(self, checkpoint, dataset, tmp_path):
        prefix = str(tmp_path / "pca" / "scene")
        code = tools.pca_main(
            [
                "--checkpoint", checkpoint,
                "--scene", scenes.scene_dir(dataset, 9),
                "--out-prefix", prefix,
            ]
        )
        assert code == 0
        for kind in ("frozen", "adapted"):
            for name in ("rgb", "depth", "seg"):
                img = formats.read_ppm("{}_{}_{}.ppm".format(prefix, kind, name))
                assert img.shape == (16, 16, 3)

    def test_missing_scene(self, checkpoint, tmp_path):
        code = tools.pca_main(
            [
                "--checkpoint", checkpoint,
                "--scene", str(tmp_path / "scene_99999"),
                "--out-prefix", str(tmp_path / "x"),
            ]
        )
        assert code == 3


class TestSweep:
    def test_frontier_and_rerun(self, tmp_path, tiny_config_file, capsys):
        out = str(tmp_path / "sweep")
        args = [
            "--config", tiny_config_file,
            "--param", "lambda_anchor",
            "--values", "0,10",
            "--out", out,
            "--job-id", "test",
        ]
        assert sweep.main(args) == 0
        frontier = pd.read_csv(os.path.join(out, "frontier.csv"))
        assert frontier["value"].tolist() == [0.0, 10.0]
        assert "alignment" in frontier.columns and "discernibility" in frontier.columns
        assert os.path.exists(os.path.join(out, "lambda_anchor=0", "checkpoint.ckpt"))
        assert not os.path.exists(os.path.join(out, "queue", "test_running.txt"))
        capsys.readouterr()

        assert sweep.main(args) == 0
        assert "Running 0 of 2 sweep points" in capsys.readouterr().out

    def test_duplicate_values(self, tmp_path, tiny_config_file):
        code = sweep.main(
            [
                "--config", tiny_config_file,
                "--param", "lambda_anchor",
                "--values", "1,1.0",
                "--out", str(tmp_path / "s"),
            ]
        )
        assert code == 2

    def test_unknown_param(self, tmp_path, tiny_config_file):
        code = sweep.main(
            [
                "--config", tiny_config_file,
                "--param", "colorfulness",
                "--values", "1",
                "--out", str(tmp_path / "s"),
            ]
        )
        assert code == 2

    def test_resolve_param(self):
        assert sweep.resolve_param("alpha_max") == "train.alpha_max"
        assert sweep.resolve_param("loss.tau_init") == "loss.tau_init"
        assert sweep.run_name("loss.lambda_anchor", " 10 ") == "lambda_anchor=10"


class TestDispatcher:
    def test_version(self, monkeypatch, capsys):
        monkeypatch.setattr(sys, "argv", ["omnialign", "--version"])
        assert dispatcher.main() == 0
        assert omnialign.__version__ in capsys.readouterr().out

    def test_usage(self, monkeypatch, capsys):
        monkeypatch.setattr(sys, "argv", ["omnialign", "frobnicate"])
        assert dispatcher.main() == 2
        assert "gen-data" in capsys.readouterr().out
