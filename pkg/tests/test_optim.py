# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

import json
import os

import numpy as np
import pytest

from omnialign import model, optim
from omnialign.evaluate import embed_split, evaluate_head
from omnialign.pipeline import SceneSource
from omnialign.train import checkpoint_path, train
from omnialign.utilities import ConfigInvalid, LengthMismatch


class TestAdamW:
    def test_first_step_moves_by_lr(self):
        state = optim.AdamWState(size=3, lr=0.01, weight_decay=0.0)
        params = np.array([1.0, -2.0, 0.5])
        new = optim.adamw_step(state, params, np.array([3.0, -0.5, 1e-3]))
        np.testing.assert_allclose(new, params - 0.01 * np.array([1.0, -1.0, 1.0]), atol=1e-6)
        assert state.t == 1

    def test_decay_skips_temperatures(self):
        state = optim.AdamWState.for_parameters(2, 1, lr=0.1, weight_decay=0.5)
        params = np.array([2.0, -4.0, np.log(0.07)])
        new = optim.adamw_step(state, params, np.zeros(3))
        np.testing.assert_allclose(new, [2.0 * 0.95, -4.0 * 0.95, np.log(0.07)])

    def test_length_mismatch(self):
        state = optim.AdamWState(size=3)
        with pytest.raises(LengthMismatch):
            optim.adamw_step(state, np.zeros(2), np.zeros(2))

    def test_bad_hyperparameters(self):
        with pytest.raises(ConfigInvalid):
            optim.AdamWState(size=1, beta1=1.0)
        with pytest.raises(ConfigInvalid):
            optim.AdamWState(size=1, lr=-1.0)

    def test_clip_log_taus(self):
        clipped = optim.clip_log_taus(np.log([1e-5, 0.5, 1e5]), 1e-3, 100.0)
        np.testing.assert_allclose(np.exp(clipped), [1e-3, 0.5, 100.0])


class TestTrain:
    def test_deterministic(self, tiny_config):
        a = train(tiny_config)
        b = train(tiny_config)
        assert a.log == b.log
        assert model.encode_checkpoint(a.checkpoint) == model.encode_checkpoint(
            b.checkpoint
        )

    def test_log_and_frozen_weights(self, tiny_config):
        result = train(tiny_config)
        assert [r["step"] for r in result.log] == [0, 1, 2]
        for record in result.log:
            assert np.isfinite(record["total"])
            assert record["total"] == pytest.approx(
                record["align"] + 10.0 * record["anchor"]
            )
        assert result.log[0]["anchor"] == pytest.approx(0.0, abs=1e-12)
        assert result.log[0]["tau"] == pytest.approx(0.07)
        fresh = model.init_stack(tiny_config.model_config())
        assert model.frozen_digest(result.checkpoint.stack) == model.frozen_digest(fresh)
        assert not np.array_equal(
            model.trainable_parameters(result.checkpoint.stack),
            model.trainable_parameters(fresh),
        )

    def test_worker_count_does_not_change_run(self, tiny_config):
        one = train(tiny_config)
        two = train(tiny_config.with_value("train.workers", 2))
        assert one.log == two.log
        np.testing.assert_array_equal(
            model.trainable_parameters(one.checkpoint.stack),
            model.trainable_parameters(two.checkpoint.stack),
        )

    def test_anchor_weight_changes_run(self, tiny_config):
        free = train(tiny_config.with_value("loss.lambda_anchor", 0.0))
        anchored = train(tiny_config.with_value("loss.lambda_anchor", 10.0))
        assert not np.array_equal(
            model.trainable_parameters(free.checkpoint.stack),
            model.trainable_parameters(anchored.checkpoint.stack),
        )

    def test_separate_dense_temperature(self, tiny_config):
        result = train(tiny_config.with_value("loss.shared_tau", False))
        assert len(result.checkpoint.log_taus) == 2
        assert "tau_dense" in result.log[-1]

    def test_files(self, tiny_config, tmp_path):
        cfg = tiny_config.with_value("train.checkpoint_every", 1)
        out = str(tmp_path / "run" / "model.ckpt")
        os.makedirs(os.path.dirname(out))
        log_path = str(tmp_path / "run" / "log.jsonl")
        result = train(cfg, out, log_path)
        with open(log_path) as f:
            lines = [json.loads(line) for line in f]
        assert lines == result.log
        assert os.path.exists(checkpoint_path(out, 1))
        assert os.path.exists(checkpoint_path(out, 2))
        assert not os.path.exists(checkpoint_path(out, 3))
        back = model.load_checkpoint(out)
        assert back.step == 3
        assert back.config_text == cfg.to_text()
        assert model.encode_checkpoint(back) == model.encode_checkpoint(result.checkpoint)


class TestShortRun:
    """A few full-batch steps on the training scenes, small enough for every run."""

    SETTINGS = {
        "train.steps": 40,
        "train.batch_size": 8,
        "train.lr": 3e-3,
        "train.weight_decay": 0.0,
        "train.alpha_max": 0.0,
        "train.photometric": False,
        "loss.lambda_anchor": 0.0,
        "loss.pooled_weight": 1.0,
    }

    def test_alignment_improves_over_frozen_head(self, tiny_config):
        cfg = tiny_config.copy()
        for dotted, value in self.SETTINGS.items():
            cfg[dotted] = value
        result = train(cfg)

        align = [r["align"] for r in result.log]
        assert np.mean(align[-5:]) < np.mean(align[:5])

        stack = result.checkpoint.stack
        source = SceneSource.from_run_config(cfg)
        split = embed_split(stack, cfg, source, np.arange(cfg["data.n_train"]))
        which = ("retrieval", "diagnostics")
        student = evaluate_head(stack, cfg, split, "student", which)
        teacher = evaluate_head(stack, cfg, split, "teacher", which)
        assert (
            student["retrieval"]["average"]["R@1"]
            >= teacher["retrieval"]["average"]["R@1"]
        )
        assert (
            student["diagnostics"]["alignment"] > teacher["diagnostics"]["alignment"]
        )
