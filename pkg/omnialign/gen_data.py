#!/usr/bin/env python
# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
The `omnialign gen-data` command: write the synthetic dataset (training
scenes followed by held-out scenes) in the scene directory layout, plus a
manifest.json with the sha256 of every file and the canonical run
configuration. Rerunning with the same configuration writes the same
manifest.
"""
from __future__ import print_function

import hashlib
import os
import sys

from omnialign import config, reporting
from omnialign.pipeline import MANIFEST_FILE, map_ordered
from omnialign.synth import scenes
from omnialign.utilities import (
    DataError,
    StepTimer,
    _ArgumentParser,
    add_standard_args,
    run_command,
)


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def split_of(cfg, index):
    return "train" if index < cfg["data.n_train"] else "eval"


def generate_dataset(cfg, out, force=False, verbose=False):
    """Write every scene under `out`; returns the manifest dict."""
    if os.path.isdir(out) and os.listdir(out) and not force:
        raise DataError(
            "output directory {} is not empty; use --force to overwrite".format(out)
        )
    os.makedirs(out, exist_ok=True)
    timer = StepTimer()
    scene_cfg = cfg.scene_config()
    n_total = cfg["data.n_train"] + cfg["data.n_eval"]

    def write_one(index):
        scene = scenes.generate_scene(scene_cfg, index)
        path = scenes.scene_dir(out, index)
        files = scenes.write_scene(path, scene)
        return {
            "index": index,
            "n_objects": scene.n_objects,
            "split": split_of(cfg, index),
            "files": {
                os.path.relpath(p, out).replace(os.sep, "/"): file_sha256(p)
                for p in files
            },
        }

    entries = map_ordered(write_one, list(range(n_total)), cfg["train.workers"])
    config_text = cfg.to_text()
    manifest = {
        "n_train": cfg["data.n_train"],
        "n_eval": cfg["data.n_eval"],
        "config_sha256": hashlib.sha256(config_text.encode("utf-8")).hexdigest(),
        "config": config_text,
        "scenes": entries,
    }
    reporting.write_json(os.path.join(out, MANIFEST_FILE), manifest)
    if verbose:
        print("Wrote {} scenes to {} in {:.2f} s.".format(n_total, out, timer.step_time()))
    return manifest


def define_arguments(argparser):
    add_standard_args(argparser)
    config.define_arguments(argparser)
    argparser.add_argument("--out", required=True, help="Dataset directory to write")
    argparser.add_argument(
        "--force",
        default=False,
        action="store_true",
        help="Write into the output directory even if it is not empty",
    )


def main(args=None):
    if args is None:
        args = sys.argv[1:]
    parser = _ArgumentParser(
        prog="omnialign gen-data", description="Write the synthetic scene dataset."
    )
    define_arguments(parser)
    options = parser.parse_args(args)

    def body(options):
        cfg = config.run_config_from_options(options)
        manifest = generate_dataset(cfg, options.out, options.force, options.verbose)
        print(reporting.dumps(manifest), end="")

    return run_command(body, options)


if __name__ == "__main__":
    sys.exit(main())
