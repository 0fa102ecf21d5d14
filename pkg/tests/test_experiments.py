# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Full-size runs with the default configuration. These take minutes, so
they only run with OMNIALIGN_EXTENDED=1.
"""
import pytest

from omnialign import model
from omnialign.config import RunConfig
from omnialign.evaluate import evaluate
from omnialign.sweep import run_sweep
from omnialign.train import train

pytestmark = pytest.mark.extended


def ordered_within(values, increasing, tol=0.02):
    """True if values are monotone apart from at most one small adjacent inversion."""
    steps = [b - a if increasing else a - b for a, b in zip(values, values[1:])]
    inversions = [s for s in steps if s < 0]
    return len(inversions) <= 1 and all(-s <= tol for s in inversions)


def test_ordered_within():
    assert ordered_within([0.1, 0.2, 0.19, 0.4], increasing=True)
    assert not ordered_within([0.1, 0.2, 0.1, 0.4], increasing=True)
    assert ordered_within([0.9, 0.5, 0.2], increasing=False)


def test_alignment_improves_over_frozen_head():
    cfg = RunConfig().validate()
    which = ("retrieval", "diagnostics")
    stack = model.init_stack(cfg.model_config())
    untrained = model.Checkpoint(
        stack, cfg.loss_config().initial_log_taus(), 0, cfg.to_text()
    )
    before = evaluate(untrained, cfg, which)["student"]
    after = evaluate(train(cfg).checkpoint, cfg, which)["student"]

    gain = after["retrieval"]["average"]["R@1"] - before["retrieval"]["average"]["R@1"]
    assert gain >= 30.0
    d_before, d_after = before["diagnostics"], after["diagnostics"]
    assert d_after["alignment"] - d_before["alignment"] >= 0.2
    assert d_after["rgb_rgb_mismatched"] - d_before["rgb_rgb_mismatched"] <= 0.15


def test_anchor_weight_frontier(tmp_path):
    frontier = run_sweep(
        RunConfig(), "lambda_anchor", ["0", "1", "10", "100"], str(tmp_path), job_id="x"
    )
    assert frontier.index.tolist() == [0.0, 1.0, 10.0, 100.0]
    assert ordered_within(frontier["teacher_similarity"].tolist(), increasing=True)
    assert ordered_within(frontier["alignment"].tolist(), increasing=False)
