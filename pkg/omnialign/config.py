# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Run configuration: a plain `key = value` file with [model], [train],
[loss], [data] and [eval] sections. Lines starting with # are comments.
Unknown sections and keys are errors.

Every key is also a command-line flag `--<section>.<key>`, which takes
precedence over the file. RunConfig.to_text() writes every key in schema
order with canonical formatting, so parsing and serializing round-trips
and the text can be hashed for reproducibility manifests.
"""
import os
from collections import OrderedDict

import numpy as np

from omnialign.imaging.colorization import COLORIZATIONS
from omnialign.imaging.photometric import AugmentConfig
from omnialign.model import ModelConfig
from omnialign.objective.losses import LossConfig
from omnialign.synth.scenes import DEFAULT_BACKGROUND_PALETTE, SceneConfig
from omnialign.utilities import ConfigInvalid, InputError

SECTIONS = ("model", "train", "loss", "data", "eval")


def _format_float(x):
    return repr(float(x))


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true or false")


def _parse_floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _parse_ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _parse_colors(text):
    colors = []
    for chunk in text.split(";"):
        if chunk.strip():
            rgb = tuple(float(v) for v in chunk.split())
            if len(rgb) != 3:
                raise ValueError("colors are three numbers separated by spaces")
            colors.append(rgb)
    return tuple(colors)


# name: (parse, format)
VALUE_TYPES = {
    "int": (int, str),
    "float": (float, _format_float),
    "bool": (_parse_bool, lambda v: "true" if v else "false"),
    "str": (lambda s: s.strip(), str),
    "floats": (_parse_floats, lambda v: ", ".join(_format_float(x) for x in v)),
    "ints": (_parse_ints, lambda v: ", ".join(str(x) for x in v)),
    "colors": (
        _parse_colors,
        lambda v: "; ".join(" ".join(_format_float(x) for x in c) for c in v),
    ),
}


# section -> [(key, type, default, help)]
SCHEMA = OrderedDict(
    [
        (
            "model",
            [
                ("patch", "int", 8, "patch size in pixels"),
                ("embed_dim", "int", 32, "token dimension D"),
                ("frozen_layers", "int", 4, "number of frozen backbone blocks"),
                ("adapter_layers", "int", 2, "number of head / adapter blocks"),
                ("seed", "int", 0, "seed for the frozen weights"),
                ("image_size", "int", 64, "side of the square model input"),
                (
                    "adapter_on_top",
                    "bool",
                    False,
                    "train zero-initialized layers after the teacher head",
                ),
            ],
        ),
        (
            "train",
            [
                ("steps", "int", 2000, "optimization steps"),
                ("batch_size", "int", 16, "scenes per step"),
                ("seed", "int", 42, "seed for batch sampling and the data pipeline"),
                ("lr", "float", 1e-4, "AdamW learning rate"),
                ("beta1", "float", 0.9, "AdamW first-moment decay"),
                ("beta2", "float", 0.999, "AdamW second-moment decay"),
                ("adam_eps", "float", 1e-8, "AdamW epsilon"),
                ("weight_decay", "float", 0.01, "decoupled weight decay"),
                ("alpha_max", "float", 0.5, "upper bound of the mixup alphas"),
                ("photometric", "bool", True, "apply photometric augmentation"),
                ("checkpoint_every", "int", 0, "steps between checkpoints (0: end only)"),
                ("log_every", "int", 100, "steps between console progress lines"),
                ("workers", "int", 1, "threads for the per-scene data pipeline"),
            ],
        ),
        (
            "loss",
            [
                ("lambda_anchor", "float", 10.0, "weight of the anchoring loss"),
                ("tau_init", "float", 0.07, "initial temperature"),
                ("tau_min", "float", 1e-3, "lower temperature clip"),
                ("tau_max", "float", 100.0, "upper temperature clip"),
                ("n_dense", "int", 64, "dense tokens sampled per image"),
                ("pooled_weight", "float", 0.5, "weight of pooled vs dense losses"),
                ("shared_tau", "bool", True, "one temperature for pooled and dense"),
                ("dense_mask", "bool", True, "exclude same-scene dense negatives"),
            ],
        ),
        (
            "data",
            [
                ("dataset", "str", "", "dataset directory (empty: generate in memory)"),
                ("height", "int", 64, "scene height"),
                ("width", "int", 64, "scene width"),
                ("n_objects_min", "int", 1, "fewest objects per scene"),
                ("n_objects_max", "int", 4, "most objects per scene"),
                ("seed", "int", 7, "scene generator seed"),
                ("n_train", "int", 256, "training scenes (indices 0..n_train-1)"),
                ("n_eval", "int", 64, "held-out scenes following the training ones"),
                ("colorization", "str", "natural", "natural, grayscale or jet"),
                ("bins", "int", 64, "colorization bins B"),
                ("kernel", "int", 5, "colorization smoothing kernel K"),
                ("brightness_delta", "floats", (-0.1, 0.1), "brightness delta range"),
                ("saturation", "floats", (0.8, 1.2), "saturation scale range"),
                ("hue_delta", "floats", (-0.03, 0.03), "hue delta range"),
                ("contrast", "floats", (0.8, 1.2), "contrast scale range"),
                (
                    "background_palette",
                    "colors",
                    DEFAULT_BACKGROUND_PALETTE,
                    "background colors, 'r g b; r g b; ...'",
                ),
            ],
        ),
        (
            "eval",
            [
                ("batch", "int", 2048, "query rows per similarity batch"),
                ("tie_eps", "float", 1e-6, "tie threshold for ranks"),
                ("knn_tau", "float", 0.07, "soft k-NN temperature"),
                ("knn_k", "ints", (5, 10, 20, 50, 100), "k values for soft k-NN"),
                ("pairing_seed", "int", 0, "seed for mismatched-scene pairs"),
                ("probe_size", "int", 16, "held-out scenes in the teacher probe"),
            ],
        ),
    ]
)

KEY_TYPES = {
    "{}.{}".format(section, key): vtype
    for section, keys in SCHEMA.items()
    for key, vtype, _, _ in keys
}


def parse_value(dotted, text):
    try:
        vtype = KEY_TYPES[dotted]
    except KeyError:
        raise ConfigInvalid("unknown config key {}".format(dotted))
    try:
        return VALUE_TYPES[vtype][0](text)
    except ValueError as e:
        raise ConfigInvalid("bad value {!r} for {}: {}".format(text, dotted, e))


def format_value(dotted, value):
    return VALUE_TYPES[KEY_TYPES[dotted]][1](value)


class RunConfig(object):
    """All settings for one run, addressed as cfg["section.key"]."""

    def __init__(self, values=None):
        self.values = OrderedDict(
            ("{}.{}".format(section, key), default)
            for section, keys in SCHEMA.items()
            for key, _, default, _ in keys
        )
        # keys set explicitly by the text this config was parsed from
        self.given = set()
        for dotted, value in (values or {}).items():
            self[dotted] = value

    def __getitem__(self, dotted):
        try:
            return self.values[dotted]
        except KeyError:
            raise ConfigInvalid("unknown config key {}".format(dotted))

    def __setitem__(self, dotted, value):
        if dotted not in self.values:
            raise ConfigInvalid("unknown config key {}".format(dotted))
        # normalize through the text form so every value has its canonical type
        if isinstance(value, str):
            value = parse_value(dotted, value)
        else:
            value = parse_value(dotted, format_value(dotted, value))
        self.values[dotted] = value

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.to_text() == other.to_text()

    def copy(self):
        return RunConfig(self.values)

    def with_value(self, dotted, value):
        cfg = self.copy()
        cfg[dotted] = value
        return cfg

    @classmethod
    def from_text(cls, text, source="<config>"):
        cfg = cls()
        section = None
        seen = set()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            where = "{}:{}".format(source, lineno)
            if line.startswith("["):
                if not line.endswith("]"):
                    raise ConfigInvalid("{}: malformed section header".format(where))
                section = line[1:-1].strip()
                if section not in SCHEMA:
                    raise ConfigInvalid(
                        "{}: unknown section [{}]".format(where, section)
                    )
                continue
            if "=" not in line:
                raise ConfigInvalid("{}: expected 'key = value'".format(where))
            if section is None:
                raise ConfigInvalid("{}: key outside of a section".format(where))
            key, value = (part.strip() for part in line.split("=", 1))
            dotted = "{}.{}".format(section, key)
            if dotted not in KEY_TYPES:
                raise ConfigInvalid("{}: unknown key {}".format(where, dotted))
            if dotted in seen:
                raise ConfigInvalid("{}: duplicate key {}".format(where, dotted))
            seen.add(dotted)
            cfg.values[dotted] = parse_value(dotted, value)
        cfg.given = seen
        return cfg

    @classmethod
    def from_file(cls, path):
        if not os.path.exists(path):
            raise InputError("config file {} does not exist".format(path))
        with open(path) as f:
            return cls.from_text(f.read(), source=path)

    def to_text(self):
        lines = []
        for section, keys in SCHEMA.items():
            if lines:
                lines.append("")
            lines.append("[{}]".format(section))
            for key, _, _, _ in keys:
                dotted = "{}.{}".format(section, key)
                lines.append("{} = {}".format(key, format_value(dotted, self[dotted])))
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w") as f:
            f.write(self.to_text())

    ###############
    # typed views

    def model_config(self):
        return ModelConfig(
            patch=self["model.patch"],
            embed_dim=self["model.embed_dim"],
            frozen_layers=self["model.frozen_layers"],
            adapter_layers=self["model.adapter_layers"],
            seed=self["model.seed"],
            image_size=self["model.image_size"],
            adapter_on_top=self["model.adapter_on_top"],
        )

    def loss_config(self):
        return LossConfig(
            lambda_anchor=self["loss.lambda_anchor"],
            tau_init=self["loss.tau_init"],
            tau_min=self["loss.tau_min"],
            tau_max=self["loss.tau_max"],
            n_dense=self["loss.n_dense"],
            pooled_weight=self["loss.pooled_weight"],
            shared_tau=self["loss.shared_tau"],
            dense_mask=self["loss.dense_mask"],
        )

    def scene_config(self):
        return SceneConfig(
            height=self["data.height"],
            width=self["data.width"],
            n_objects_min=self["data.n_objects_min"],
            n_objects_max=self["data.n_objects_max"],
            background_palette=self["data.background_palette"],
            seed=self["data.seed"],
        )

    def augment_config(self):
        ranges = []
        for key in ("brightness_delta", "saturation", "hue_delta", "contrast"):
            value = self["data." + key]
            if len(value) != 2:
                raise ConfigInvalid("data.{} needs two values (min, max)".format(key))
            ranges.append(tuple(value))
        return AugmentConfig(*ranges)

    def adam_hyper(self):
        return dict(
            lr=self["train.lr"],
            beta1=self["train.beta1"],
            beta2=self["train.beta2"],
            eps=self["train.adam_eps"],
            weight_decay=self["train.weight_decay"],
        )

    def validate(self):
        """Raise ConfigInvalid for any inconsistent setting; returns self."""
        model_cfg = self.model_config()
        loss_cfg = self.loss_config()
        self.scene_config()
        self.augment_config()
        if self["train.steps"] < 1:
            raise ConfigInvalid("train.steps must be at least 1")
        if self["train.batch_size"] < 2:
            raise ConfigInvalid("train.batch_size must be at least 2")
        if not (0.0 <= self["train.alpha_max"] <= 1.0):
            raise ConfigInvalid("train.alpha_max must be in [0, 1]")
        if self["train.checkpoint_every"] < 0 or self["train.log_every"] < 0:
            raise ConfigInvalid("cadences must be nonnegative")
        if self["train.workers"] < 1:
            raise ConfigInvalid("train.workers must be at least 1")
        if self["data.n_train"] < self["train.batch_size"]:
            raise ConfigInvalid("data.n_train must be at least train.batch_size")
        if self["data.n_eval"] < 2:
            raise ConfigInvalid("data.n_eval must be at least 2")
        if self["data.colorization"] not in COLORIZATIONS:
            raise ConfigInvalid(
                "data.colorization must be one of {}".format(", ".join(COLORIZATIONS))
            )
        if self["data.bins"] < 1 or self["data.kernel"] < 1:
            raise ConfigInvalid("data.bins and data.kernel must be positive")
        if loss_cfg.n_dense > model_cfg.n_tokens:
            raise ConfigInvalid(
                "loss.n_dense {} exceeds the {} tokens per image".format(
                    loss_cfg.n_dense, model_cfg.n_tokens
                )
            )
        if self["eval.batch"] < 1 or self["eval.tie_eps"] <= 0:
            raise ConfigInvalid("eval.batch must be >= 1 and eval.tie_eps > 0")
        if self["eval.knn_tau"] <= 0 or not self["eval.knn_k"]:
            raise ConfigInvalid("eval.knn_tau must be > 0 and eval.knn_k non-empty")
        if min(self["eval.knn_k"]) < 1:
            raise ConfigInvalid("eval.knn_k values must be positive")
        if self["eval.probe_size"] < 1:
            raise ConfigInvalid("eval.probe_size must be positive")
        return self

    @property
    def eval_indices(self):
        start = self["data.n_train"]
        return np.arange(start, start + self["data.n_eval"])


def define_arguments(argparser):
    """Register --config and one --<section>.<key> flag per config key."""
    argparser.add_argument(
        "--config",
        default=None,
        help="Run configuration file (key = value lines with [section] headers)",
    )
    for section, keys in SCHEMA.items():
        group = argparser.add_argument_group("[{}] settings".format(section))
        for key, vtype, default, help_text in keys:
            dotted = "{}.{}".format(section, key)
            group.add_argument(
                "--" + dotted,
                dest="cfg__" + dotted.replace(".", "__"),
                default=None,
                metavar=vtype.upper(),
                help="{} (default: {})".format(
                    help_text, format_value(dotted, default) or '""'
                ),
            )


def apply_overrides(cfg, options, sections=SECTIONS):
    """Apply the --<section>.<key> flags given on the command line to cfg."""
    for dotted in KEY_TYPES:
        if dotted.split(".", 1)[0] not in sections:
            continue
        text = getattr(options, "cfg__" + dotted.replace(".", "__"), None)
        if text is not None:
            cfg.values[dotted] = parse_value(dotted, text)
    return cfg


def run_config_from_options(options):
    """Build the RunConfig from --config plus any --<section>.<key> overrides."""
    cfg = RunConfig.from_file(options.config) if options.config else RunConfig()
    return apply_overrides(cfg, options).validate()
