# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

import os

import pytest

from omnialign.config import RunConfig

TINY_SETTINGS = {
    "model.patch": 4,
    "model.embed_dim": 8,
    "model.frozen_layers": 2,
    "model.adapter_layers": 2,
    "model.image_size": 16,
    "train.steps": 3,
    "train.batch_size": 4,
    "train.lr": 1e-3,
    "train.log_every": 1,
    "loss.n_dense": 4,
    "data.height": 16,
    "data.width": 16,
    "data.n_train": 8,
    "data.n_eval": 6,
    "data.bins": 16,
    "data.kernel": 3,
    "eval.knn_k": (1, 3),
    "eval.probe_size": 4,
}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "extended: long-running experiment, needs OMNIALIGN_EXTENDED=1"
    )


def pytest_collection_modifyitems(config, items):
    if os.environ.get("OMNIALIGN_EXTENDED") == "1":
        return
    skip = pytest.mark.skip(reason="set OMNIALIGN_EXTENDED=1 to run")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def tiny_config():
    """A run configuration small enough to train in well under a second."""
    return RunConfig(TINY_SETTINGS)


@pytest.fixture
def tiny_config_file(tmp_path, tiny_config):
    path = tmp_path / "tiny.conf"
    tiny_config.write(str(path))
    return str(path)
