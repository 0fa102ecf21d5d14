#!/usr/bin/env python
# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
The `omnialign eval` command: embed the held-out scenes with a trained
checkpoint and run the evaluation battery on both the adapted (student)
head and the frozen (teacher) head.

Held-out scenes go through the pipeline without photometric augmentation
and with both mixup alphas at 0. Reports name the checkpoint by file name
and content digest and contain no timestamps, so the same checkpoint and
settings always produce the same bytes.

`--features DIR` evaluates externally computed pooled features instead
(rgb.feat, depth.feat, seg.feat in OMNIFEAT format, rows in scene order);
`--export-features DIR` writes the student head's features in that form.
"""
from __future__ import print_function

import hashlib
import os
import sys
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from omnialign import config, evalkit, imaging, model, reporting
from omnialign.numerics import derive_seed, seeded_rng
from omnialign.pipeline import (
    SceneSource,
    ViewSettings,
    backbone_features,
    map_ordered,
    scene_views,
)
from omnialign.synth import formats
from omnialign.utilities import (
    ConfigInvalid,
    DataError,
    DataMissing,
    ShapeMismatch,
    StepTimer,
    _ArgumentParser,
    add_standard_args,
    get_option_file_args,
    run_command,
    warn,
)

# stream purpose for derive_seed; eval views draw nothing that matters,
# but each scene still gets its own stream
EVAL_STREAM = 3

SECTIONS = ("retrieval", "diagnostics", "knn", "pck")
HEADS = ("student", "teacher")
MODALITY_NAMES = ("rgb", "depth", "seg")
FEATURE_SUFFIX = ".feat"


@dataclass
class EmbeddedSplit:
    indices: np.ndarray
    labels: np.ndarray
    z: np.ndarray  # N x 3 x T x D backbone features
    pooled: dict  # head -> N x 3 x D
    dense: dict  # head -> N x 3 x T x D
    gray: dict  # head -> N x D, pooled embedding of the grayscale rgb


def embed_split(stack, cfg, source, indices, workers=1):
    settings = ViewSettings(cfg, training=False)
    seed = cfg["train.seed"]

    def item(index):
        rng = seeded_rng(derive_seed(seed, EVAL_STREAM, index))
        views, images = scene_views(source[index], settings, rng)
        z = backbone_features(stack, views)
        gray = imaging.normalize_imagenet(imaging.to_grayscale(images[0]))
        return z, model.heads_forward(stack, z), model.embed(stack, gray)

    results = map_ordered(item, [int(i) for i in indices], workers)
    return EmbeddedSplit(
        indices=np.asarray(indices),
        labels=np.array([source.label(i) for i in indices], dtype=np.int64),
        z=np.stack([r[0] for r in results]),
        pooled={
            "student": np.stack([r[1].pooled_student for r in results]),
            "teacher": np.stack([r[1].pooled_teacher for r in results]),
        },
        dense={
            "student": np.stack([r[1].dense_student for r in results]),
            "teacher": np.stack([r[1].dense_teacher for r in results]),
        },
        gray={
            "student": np.stack([r[2].pooled_student for r in results]),
            "teacher": np.stack([r[2].pooled_teacher for r in results]),
        },
    )


def modality_features(pooled):
    return [pooled[:, m] for m in range(pooled.shape[1])]


def pck_section(stack, split, head):
    """PCK@0 per modality pair on the head's output, plus per head layer."""
    dense = split.dense[head]
    pairs = {}
    for a, b in combinations(range(3), 2):
        result = evalkit.mean_pck((scene[a], scene[b]) for scene in dense)
        pairs["{}-{}".format(MODALITY_NAMES[a], MODALITY_NAMES[b])] = result.as_dict()
    raw = model.student_raw if head == "student" else model.teacher_raw
    per_scene = [raw(stack, z, keep_all=True) for z in split.z]
    layers = []
    for layer in range(len(per_scene[0]) if per_scene else 0):
        result = evalkit.mean_pck(
            (outs[layer][a], outs[layer][b])
            for outs in per_scene
            for a, b in combinations(range(3), 2)
        )
        layers.append(result.as_dict())
    average = {
        key: float(np.mean([p[key] for p in pairs.values()]))
        for key in ("forward", "backward", "average")
    }
    return {"pairs": pairs, "average": average, "layers": layers}


def knn_section(cfg, train_split, eval_split, head):
    out = {}
    for m, name in enumerate(MODALITY_NAMES):
        soft = evalkit.knn_soft_vote(
            train_split.pooled[head][:, m],
            train_split.labels,
            eval_split.pooled[head][:, m],
            eval_split.labels,
            ks=cfg["eval.knn_k"],
            tau=cfg["eval.knn_tau"],
        )
        hard = evalkit.knn_hard(
            eval_split.pooled[head][:, m], eval_split.labels, exclude_self=True
        )
        out[name] = {"soft": soft.as_dict(), "hard": hard}
    return out


def evaluate_head(stack, cfg, eval_split, head, which, train_split=None, workers=1):
    features = modality_features(eval_split.pooled[head])
    section = {}
    if "retrieval" in which:
        section["retrieval"] = evalkit.directed_pair_average(
            features, MODALITY_NAMES, cfg["eval.batch"], cfg["eval.tie_eps"], workers
        ).as_dict()
    if "diagnostics" in which:
        section["diagnostics"] = evalkit.diagnostics(
            features, cfg["eval.pairing_seed"], gray=eval_split.gray[head]
        ).as_dict()
    if "knn" in which:
        section["knn"] = knn_section(cfg, train_split, eval_split, head)
    if "pck" in which:
        section["pck"] = pck_section(stack, eval_split, head)
    return section


def teacher_similarity(split, n_scenes):
    """Mean cosine between student and teacher pooled embeddings of the first n_scenes scenes."""
    s = split.pooled["student"][:n_scenes]
    t = split.pooled["teacher"][:n_scenes]
    return float(np.mean(np.sum(s * t, axis=-1)))


def evaluate(
    ckpt, cfg, which=SECTIONS, source=None, verbose=False, label="", digest="",
    export_dir=None,
):
    """
    Run the selected evaluations; returns the report as a dict. With
    export_dir, the student head's held-out pooled features are also
    written there as OMNIFEAT files.
    """
    timer = StepTimer()
    stack = ckpt.stack
    source = source or SceneSource.from_run_config(cfg)
    workers = cfg["train.workers"]
    eval_split = embed_split(stack, cfg, source, cfg.eval_indices, workers)
    train_split = None
    if "knn" in which:
        train_split = embed_split(
            stack, cfg, source, np.arange(cfg["data.n_train"]), workers
        )
    if verbose:
        print("Embedded scenes in {:.2f} s.".format(timer.step_time()))
    if export_dir:
        export_features(export_dir, eval_split)
        if verbose:
            print("Wrote student features to {}.".format(export_dir))
    config_text = cfg.to_text()
    report = {
        "checkpoint": label,
        "checkpoint_sha256": digest,
        "step": ckpt.step,
        "config_sha256": hashlib.sha256(config_text.encode("utf-8")).hexdigest(),
        "n_eval": int(len(eval_split.indices)),
        "sections": [s for s in SECTIONS if s in which],
        "teacher_similarity": teacher_similarity(eval_split, cfg["eval.probe_size"]),
    }
    for head in HEADS:
        report[head] = evaluate_head(
            stack, cfg, eval_split, head, which, train_split, workers
        )
        if verbose:
            print("Evaluated {} head in {:.2f} s.".format(head, timer.step_time()))
    return report


def report_text(report):
    if "features" in report:
        parts = [
            "features {}, {} scenes".format(report["features"], report["n_eval"]),
            reporting.section_tables(report["external"]),
        ]
        return "\n\n".join(parts) + "\n"
    digest = report["checkpoint_sha256"]
    parts = [
        "checkpoint {} (step {}{}), {} held-out scenes".format(
            report["checkpoint"],
            report["step"],
            ", sha256 " + digest[:12] if digest else "",
            report["n_eval"],
        ),
        "Teacher similarity: {:.4f}".format(report["teacher_similarity"]),
    ]
    for head in HEADS:
        title = "{} head".format("Adapted (student)" if head == "student" else "Frozen (teacher)")
        parts.append("=" * len(title) + "\n" + title + "\n" + "=" * len(title))
        parts.append(reporting.section_tables(report[head]))
    return "\n\n".join(parts) + "\n"


###############
# externally computed features


def feature_paths(feature_dir):
    return [os.path.join(feature_dir, name + FEATURE_SUFFIX) for name in MODALITY_NAMES]


def export_features(feature_dir, split, head="student"):
    """Write the pooled embeddings of one head as rgb/depth/seg OMNIFEAT files."""
    os.makedirs(feature_dir, exist_ok=True)
    paths = feature_paths(feature_dir)
    for m, path in enumerate(paths):
        formats.write_features(
            path, formats.FeatureSetFile(split.pooled[head][:, m], modality=m)
        )
    return paths


def read_feature_dir(feature_dir):
    """The rgb, depth and seg feature sets of a directory, rows in scene order."""
    features = []
    for m, path in enumerate(feature_paths(feature_dir)):
        if not os.path.exists(path):
            raise DataMissing("feature file {} does not exist".format(path))
        feature_set = formats.read_features(path)
        if feature_set.modality != m:
            raise DataError(
                "{} holds modality {}, expected {} ({})".format(
                    path, feature_set.modality, m, MODALITY_NAMES[m]
                )
            )
        features.append(feature_set.features.astype(np.float64))
    if len({f.shape for f in features}) != 1:
        raise ShapeMismatch(
            "feature sets differ in shape: {}".format([f.shape for f in features])
        )
    return features


def evaluate_features(features, cfg, which=SECTIONS, label=""):
    """
    Retrieval and diagnostics on externally computed pooled features.
    k-NN and PCK@0 need scene labels and dense tokens, which feature
    files do not carry.
    """
    skipped = [s for s in which if s in ("knn", "pck")]
    if skipped:
        warn("skipping {} for feature files".format(", ".join(skipped)))
    which = tuple(s for s in which if s not in skipped)
    section = {}
    if "retrieval" in which:
        section["retrieval"] = evalkit.directed_pair_average(
            features, MODALITY_NAMES, cfg["eval.batch"], cfg["eval.tie_eps"],
            cfg["train.workers"],
        ).as_dict()
    if "diagnostics" in which:
        section["diagnostics"] = evalkit.diagnostics(
            features, cfg["eval.pairing_seed"]
        ).as_dict()
    return {
        "features": label,
        "n_eval": int(features[0].shape[0]),
        "sections": [s for s in SECTIONS if s in which],
        "external": section,
    }


def checkpoint_identity(path):
    """(file name, sha256 of the file contents) of a checkpoint."""
    with open(path, "rb") as f:
        digest = hashlib.sha256(f.read()).hexdigest()
    return os.path.basename(path), digest


def eval_config(ckpt, options):
    """
    The checkpoint's run configuration with [data] and [eval] settings
    taken from --config and --<section>.<key> flags.
    """
    if not ckpt.config_text:
        raise ConfigInvalid("checkpoint carries no run configuration")
    cfg = config.RunConfig.from_text(ckpt.config_text, source="checkpoint")
    if options.config:
        # only the keys the file sets; the rest stay as trained
        override = config.RunConfig.from_file(options.config)
        for dotted in sorted(override.given):
            if dotted.split(".", 1)[0] in ("data", "eval"):
                cfg.values[dotted] = override[dotted]
    config.apply_overrides(cfg, options, sections=("data", "eval"))
    if options.data is not None:
        cfg["data.dataset"] = options.data
    return cfg.validate()


def define_arguments(argparser):
    add_standard_args(argparser)
    config.define_arguments(argparser)
    source = argparser.add_mutually_exclusive_group(required=True)
    source.add_argument(
        "--checkpoint", default=None, help="Checkpoint written by `omnialign train`"
    )
    source.add_argument(
        "--features",
        default=None,
        help="Directory of externally computed pooled features (rgb.feat, "
        "depth.feat, seg.feat); runs retrieval and diagnostics only",
    )
    argparser.add_argument(
        "--data",
        default=None,
        help="Dataset directory written by `omnialign gen-data` "
        "(default: the checkpoint's data.dataset)",
    )
    argparser.add_argument(
        "--report", default="eval_report.json", help="JSON report to write"
    )
    argparser.add_argument(
        "--export-features",
        default=None,
        help="Also write the student head's held-out pooled features to this directory",
    )
    argparser.add_argument(
        "--which",
        choices=SECTIONS + ("all",),
        nargs="+",
        default=["all"],
        help="Evaluations to run (default: all)",
    )


def main(args=None):
    if args is None:
        args = get_option_file_args(extra_args=sys.argv[1:])
    parser = _ArgumentParser(
        prog="omnialign eval", description="Evaluate a trained checkpoint."
    )
    define_arguments(parser)
    options = parser.parse_args(args)

    def body(options):
        which = SECTIONS if "all" in options.which else tuple(options.which)
        if options.features:
            cfg = config.run_config_from_options(options)
            report = evaluate_features(
                read_feature_dir(options.features),
                cfg,
                which,
                label=os.path.basename(os.path.normpath(options.features)),
            )
        else:
            ckpt = model.load_checkpoint(options.checkpoint)
            cfg = eval_config(ckpt, options)
            name, digest = checkpoint_identity(options.checkpoint)
            report = evaluate(
                ckpt, cfg, which, verbose=options.verbose, label=name, digest=digest,
                export_dir=options.export_features,
            )
        parent = os.path.dirname(options.report)
        if parent:
            os.makedirs(parent, exist_ok=True)
        reporting.write_json(options.report, report)
        text = report_text(report)
        with open(os.path.splitext(options.report)[0] + ".txt", "w") as f:
            f.write(text)
        print(text, end="")

    return run_command(body, options)


if __name__ == "__main__":
    sys.exit(main())
