#!/usr/bin/env python
# Copyright (c) 2015-2019 The Switch Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

# Modifications copyright (c) 2025 The OmniAlign Authors. All rights reserved.

"""
Training: the deterministic optimization loop and the `omnialign train`
command.

Each step samples batch_size distinct training scenes from a stream
seeded by (train.seed, step); each batch item then gets its own stream
seeded by (train.seed, step, slot) for augmentation, mixup alphas and
dense token indices. Items may be processed on several threads; results
are gathered in slot order, so the run is bit-identical for any worker
count.
"""
from __future__ import print_function

import json
import os
import sys
from dataclasses import dataclass, field
from typing import List

import numpy as np

import omnialign
from omnialign import config, model, optim
from omnialign.numerics import derive_seed, seeded_rng
from omnialign.objective import TrainingBatch, backward, sample_dense_indices
from omnialign.pipeline import (
    SceneSource,
    ViewSettings,
    backbone_features,
    map_ordered,
    scene_views,
)
from omnialign.utilities import (
    NonFiniteLoss,
    OmniAlignError,
    StepTimer,
    _ArgumentParser,
    add_standard_args,
    get_option_file_args,
    run_command,
)

# stream purposes for derive_seed
BATCH_STREAM = 1
ITEM_STREAM = 2


@dataclass
class TrainResult:
    checkpoint: model.Checkpoint
    log: List[dict] = field(default_factory=list)


def build_step_batch(stack, cfg, source, settings, step, workers=1):
    """Pipeline outputs for one training step, as a TrainingBatch."""
    seed = cfg["train.seed"]
    step_rng = seeded_rng(derive_seed(seed, BATCH_STREAM, step))
    chosen = step_rng.sample_without_replacement(
        cfg["data.n_train"], cfg["train.batch_size"]
    )
    n_tokens = stack.cfg.n_tokens
    n_dense = cfg["loss.n_dense"]

    def item(slot_index):
        slot, index = slot_index
        rng = seeded_rng(derive_seed(seed, ITEM_STREAM, step, slot))
        views, _ = scene_views(source[index], settings, rng)
        z = backbone_features(stack, views)
        return z, sample_dense_indices(rng, n_tokens, n_dense)

    results = map_ordered(item, list(enumerate(chosen)), workers)
    return TrainingBatch(
        z=np.stack([z for z, _ in results]),
        indices=np.stack([ix for _, ix in results]),
    )


def log_record(step, losses, log_taus):
    record = {
        "step": step,
        "total": losses.total,
        "align": losses.align,
        "anchor": losses.anchor,
        "tau": float(np.exp(log_taus[0])),
    }
    if len(log_taus) > 1:
        record["tau_dense"] = float(np.exp(log_taus[-1]))
    return record


def checkpoint_path(base, step):
    root, ext = os.path.splitext(base)
    return "{}-step{:06d}{}".format(root, step, ext)


def train(cfg, out_checkpoint=None, log_path=None, verbose=False, source=None):
    """
    Train the student head. Writes the metrics log (one JSON object per
    step) and checkpoints when paths are given; returns a TrainResult.
    """
    cfg.validate()
    timer = StepTimer()
    loss_cfg = cfg.loss_config()
    stack = model.init_stack(cfg.model_config())
    frozen_before = model.frozen_digest(stack)
    log_taus = loss_cfg.initial_log_taus()
    n_params = model.n_trainable(stack)
    state = optim.AdamWState.for_parameters(n_params, len(log_taus), **cfg.adam_hyper())
    source = source or SceneSource.from_run_config(cfg)
    settings = ViewSettings(cfg, training=True)
    steps = cfg["train.steps"]
    every = cfg["train.checkpoint_every"]
    config_text = cfg.to_text()

    print(
        "Training {} steps, batch {}, lr {:g}, weight decay {:g}, lambda_anchor {:g}, "
        "alpha_max {:g}.".format(
            steps,
            cfg["train.batch_size"],
            cfg["train.lr"],
            cfg["train.weight_decay"],
            loss_cfg.lambda_anchor,
            cfg["train.alpha_max"],
        )
    )
    if verbose:
        print("Trainable parameters: {} (+{} temperature)".format(n_params, len(log_taus)))

    records = []
    log_file = open(log_path, "w") if log_path else None
    try:
        for step in range(steps):
            batch = build_step_batch(
                stack, cfg, source, settings, step, cfg["train.workers"]
            )
            losses, grads = backward(stack, batch, loss_cfg, log_taus)
            if not np.isfinite(losses.total):
                raise NonFiniteLoss(step, losses.total)
            record = log_record(step, losses, log_taus)
            records.append(record)
            if log_file:
                log_file.write(json.dumps(record) + "\n")

            flat = np.concatenate([model.trainable_parameters(stack), log_taus])
            flat = optim.adamw_step(state, flat, grads.flat())
            model.set_trainable_parameters(stack, flat[:n_params])
            log_taus = optim.clip_log_taus(
                flat[n_params:], loss_cfg.tau_min, loss_cfg.tau_max
            )

            if out_checkpoint and every and (step + 1) % every == 0 and step + 1 < steps:
                model.save_checkpoint(
                    checkpoint_path(out_checkpoint, step + 1),
                    model.Checkpoint(stack.copy(), log_taus.copy(), step + 1, config_text),
                )
            log_every = cfg["train.log_every"]
            if verbose and log_every and (step + 1) % log_every == 0:
                print(
                    "step {:>6d}  total {:.5f}  align {:.5f}  anchor {:.5f}  "
                    "tau {:.4f}  ({:.2f} s)".format(
                        step + 1,
                        losses.total,
                        losses.align,
                        losses.anchor,
                        record["tau"],
                        timer.step_time(),
                    )
                )
    finally:
        if log_file:
            log_file.close()

    if model.frozen_digest(stack) != frozen_before:
        raise OmniAlignError("frozen parameters changed during training")
    ckpt = model.Checkpoint(stack, log_taus, steps, config_text)
    if out_checkpoint:
        model.save_checkpoint(out_checkpoint, ckpt)
        if verbose:
            print("Saved checkpoint to {}.".format(out_checkpoint))
    return TrainResult(ckpt, records)


def define_arguments(argparser):
    add_standard_args(argparser)
    config.define_arguments(argparser)
    argparser.add_argument(
        "--out-checkpoint",
        default="checkpoint.ckpt",
        help="Where to write the final checkpoint (default: checkpoint.ckpt)",
    )
    argparser.add_argument(
        "--log",
        dest="log_path",
        default="train_log.jsonl",
        help="Metrics log, one JSON object per step (default: train_log.jsonl)",
    )


def main(args=None):
    if args is None:
        # combine default arguments read from options.txt file with
        # additional arguments specified on the command line
        args = get_option_file_args(extra_args=sys.argv[1:])
    parser = _ArgumentParser(
        prog="omnialign train", description="Train the student head."
    )
    define_arguments(parser)
    options = parser.parse_args(args)

    def body(options):
        cfg = config.run_config_from_options(options)
        if options.verbose:
            print("OmniAlign {}".format(omnialign.__version__))
            print(cfg.to_text())
        for path in (options.out_checkpoint, options.log_path):
            parent = os.path.dirname(path)
            if parent:
                os.makedirs(parent, exist_ok=True)
        result = train(cfg, options.out_checkpoint, options.log_path, options.verbose)
        last = result.log[-1]
        print(
            "Finished {} steps: total {:.5f}, align {:.5f}, anchor {:.5f}, tau {:.4f}.".format(
                len(result.log), last["total"], last["align"], last["anchor"], last["tau"]
            )
        )

    return run_command(body, options)


if __name__ == "__main__":
    sys.exit(main())
