# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
The encoder stack: a frozen backbone, a frozen teacher head and a
trainable student head that starts as an exact copy of the teacher head.

    image -> patches -> patch_proj + pos_enc -> frozen blocks -> z
    z -> teacher head -> dense_teacher (rows L2-normalized), pooled_teacher
    z -> student head -> dense_student (rows L2-normalized), pooled_student

Every block is residual: h <- tanh(h W + b) + h. The pooled token is the
L2-normalized mean of the dense outputs before normalization.

With adapter_on_top, the student path is the teacher head followed by
zero-initialized adapter layers, and only the adapter layers train.

Checkpoint file layout (all integers little-endian):

    b"OMNICKPT", u32 version,
    u32 length + utf-8 model metadata ("key = value" lines),
    u32 length + utf-8 run configuration text,
    u32 group count, then per group:
        u16 name length, name, u32 rows, u32 cols, rows*cols f64 values
"""
import hashlib
import struct
from dataclasses import dataclass, field, fields
from typing import List

import numpy as np

from omnialign.numerics import normalize_rows, seeded_rng
from omnialign.utilities import (
    ConfigInvalid,
    DimensionMismatch,
    LengthMismatch,
    MagicMismatch,
    MalformedHeader,
    TruncatedPayload,
    VersionUnsupported,
)

CHECKPOINT_MAGIC = b"OMNICKPT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    patch: int = 8
    embed_dim: int = 32
    frozen_layers: int = 4
    adapter_layers: int = 2
    seed: int = 0
    image_size: int = 64
    adapter_on_top: bool = False

    def __post_init__(self):
        if self.patch < 1 or self.embed_dim < 1:
            raise ConfigInvalid("patch and embed_dim must be positive")
        if self.frozen_layers < 1 or self.adapter_layers < 1:
            raise ConfigInvalid("frozen_layers and adapter_layers must be at least 1")
        if self.image_size < self.patch or self.image_size % self.patch:
            raise ConfigInvalid(
                "image_size {} must be a positive multiple of patch {}".format(
                    self.image_size, self.patch
                )
            )

    @property
    def patch_dim(self):
        return 3 * self.patch * self.patch

    @property
    def n_tokens(self):
        return (self.image_size // self.patch) ** 2


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray

    def copy(self):
        return Layer(self.W.copy(), self.b.copy())

    def forward(self, h):
        return np.tanh(h.dot(self.W) + self.b) + h


@dataclass
class EmbeddingSet:
    dense_student: np.ndarray  # T x D
    dense_teacher: np.ndarray  # T x D
    pooled_student: np.ndarray  # D
    pooled_teacher: np.ndarray  # D


@dataclass
class EncoderStack:
    cfg: ModelConfig
    patch_proj: np.ndarray  # patch_dim x D
    patch_bias: np.ndarray  # D
    frozen_blocks: List[Layer]
    teacher_head: List[Layer]
    student_head: List[Layer]
    _pos_cache: dict = field(default_factory=dict, repr=False)

    @property
    def trainable_layers(self):
        return self.student_head

    def pos_enc(self, n_tokens):
        if n_tokens not in self._pos_cache:
            self._pos_cache[n_tokens] = sinusoidal_table(n_tokens, self.cfg.embed_dim)
        return self._pos_cache[n_tokens]

    def copy(self):
        return EncoderStack(
            self.cfg,
            self.patch_proj.copy(),
            self.patch_bias.copy(),
            [l.copy() for l in self.frozen_blocks],
            [l.copy() for l in self.teacher_head],
            [l.copy() for l in self.student_head],
        )


def sinusoidal_table(n_tokens, dim):
    """
    Fixed sinusoidal position table (n_tokens x dim).

    >>> sinusoidal_table(2, 2).tolist()
    [[0.0, 1.0], [0.8414709848078965, 0.5403023058681398]]
    """
    pos = np.arange(n_tokens, dtype=np.float64)[:, None]
    i = np.arange(dim)
    rates = 1.0 / np.power(10000.0, (i - i % 2) / float(dim))
    angles = pos * rates[None, :]
    return np.where(i % 2 == 0, np.sin(angles), np.cos(angles))


def _gaussian_layer(rng, fan_in, fan_out):
    std = 1.0 / np.sqrt(fan_in)
    W = rng.normal(fan_in * fan_out, std).reshape(fan_in, fan_out)
    b = rng.normal(fan_out, std)
    return Layer(W, b)


def init_stack(cfg):
    """Draw all weights from Gaussian(0, 1/sqrt(fan_in)), seeded by cfg.seed."""
    if not isinstance(cfg, ModelConfig):
        raise ConfigInvalid("init_stack needs a ModelConfig")
    rng = seeded_rng(cfg.seed)
    D = cfg.embed_dim
    proj = _gaussian_layer(rng, cfg.patch_dim, D)
    frozen = [_gaussian_layer(rng, D, D) for _ in range(cfg.frozen_layers)]
    teacher = [_gaussian_layer(rng, D, D) for _ in range(cfg.adapter_layers)]
    if cfg.adapter_on_top:
        # identity adapter: tanh(0) + h == h exactly
        student = [
            Layer(np.zeros((D, D)), np.zeros(D)) for _ in range(cfg.adapter_layers)
        ]
    else:
        student = [l.copy() for l in teacher]
    return EncoderStack(cfg, proj.W, proj.b, frozen, teacher, student)


def patchify(img, patch):
    """Split H x W x C into non-overlapping patches, flattened (py, px, c)."""
    H, W, C = img.shape
    if H % patch or W % patch:
        raise DimensionMismatch(
            "image {}x{} is not divisible by patch {}".format(H, W, patch)
        )
    gh, gw = H // patch, W // patch
    blocks = img.reshape(gh, patch, gw, patch, C).transpose(0, 2, 1, 3, 4)
    return blocks.reshape(gh * gw, patch * patch * C)


def apply_layers(layers, h, keep_all=False):
    outputs = []
    for layer in layers:
        h = layer.forward(h)
        if keep_all:
            outputs.append(h)
    return outputs if keep_all else h


def frozen_forward(stack, img_normalized):
    """Backbone features z (T x D) of one normalized H x W x 3 image."""
    img = np.asarray(img_normalized, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionMismatch(
            "expected an H x W x 3 image, got shape {}".format(img.shape)
        )
    patches = patchify(img, stack.cfg.patch)
    tokens = patches.dot(stack.patch_proj) + stack.patch_bias
    tokens = tokens + stack.pos_enc(tokens.shape[0])
    return apply_layers(stack.frozen_blocks, tokens)


def trainable_input(stack, z):
    """Input to the trainable layers: z itself, or the teacher output on top."""
    if stack.cfg.adapter_on_top:
        return apply_layers(stack.teacher_head, z)
    return z


def student_raw(stack, z, keep_all=False):
    return apply_layers(stack.student_head, trainable_input(stack, z), keep_all)


def teacher_raw(stack, z, keep_all=False):
    return apply_layers(stack.teacher_head, z, keep_all)


def _normalize_last(x):
    shape = x.shape
    rows, _ = normalize_rows(x.reshape(-1, shape[-1]))
    return rows.reshape(shape)


def pool(raw):
    """L2-normalized mean over the token axis (axis -2)."""
    return _normalize_last(raw.mean(axis=-2))


def heads_forward(stack, z):
    s = student_raw(stack, z)
    t = teacher_raw(stack, z)
    return EmbeddingSet(
        dense_student=_normalize_last(s),
        dense_teacher=_normalize_last(t),
        pooled_student=pool(s),
        pooled_teacher=pool(t),
    )


def embed(stack, img_normalized):
    return heads_forward(stack, frozen_forward(stack, img_normalized))


###############
# Parameter flats


def n_trainable(stack):
    D = stack.cfg.embed_dim
    return len(stack.trainable_layers) * (D * D + D)


def trainable_parameters(stack):
    """Trainable layers as one flat vector: per layer, W row-major then b."""
    parts = []
    for layer in stack.trainable_layers:
        parts.append(layer.W.ravel())
        parts.append(layer.b)
    return np.concatenate(parts).copy()


def set_trainable_parameters(stack, flat):
    flat = np.asarray(flat, dtype=np.float64)
    if flat.shape != (n_trainable(stack),):
        raise LengthMismatch(
            "expected {} trainable values, got {}".format(
                n_trainable(stack), flat.shape
            )
        )
    D = stack.cfg.embed_dim
    pos = 0
    for layer in stack.trainable_layers:
        layer.W[...] = flat[pos : pos + D * D].reshape(D, D)
        pos += D * D
        layer.b[...] = flat[pos : pos + D]
        pos += D


def frozen_groups(stack):
    groups = [("patch_proj.W", stack.patch_proj), ("patch_proj.b", stack.patch_bias)]
    for i, layer in enumerate(stack.frozen_blocks):
        groups += [("frozen.{}.W".format(i), layer.W), ("frozen.{}.b".format(i), layer.b)]
    for i, layer in enumerate(stack.teacher_head):
        groups += [
            ("teacher.{}.W".format(i), layer.W),
            ("teacher.{}.b".format(i), layer.b),
        ]
    return groups


def parameter_groups(stack):
    prefix = "adapter" if stack.cfg.adapter_on_top else "student"
    groups = frozen_groups(stack)
    for i, layer in enumerate(stack.student_head):
        groups += [
            ("{}.{}.W".format(prefix, i), layer.W),
            ("{}.{}.b".format(prefix, i), layer.b),
        ]
    return groups


def frozen_digest(stack):
    """sha256 over every frozen parameter group."""
    h = hashlib.sha256()
    for name, values in frozen_groups(stack):
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(values, dtype="<f8").tobytes())
    return h.hexdigest()


###############
# Checkpoints


@dataclass
class Checkpoint:
    stack: EncoderStack
    log_taus: np.ndarray
    step: int = 0
    config_text: str = ""


def _model_metadata(cfg, step):
    lines = ["{} = {}".format(f.name, getattr(cfg, f.name)) for f in fields(cfg)]
    lines.append("step = {}".format(step))
    return "\n".join(lines) + "\n"


def _parse_model_metadata(text):
    values = {}
    for line in text.splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    kwargs = {}
    for f in fields(ModelConfig):
        if f.name not in values:
            raise MalformedHeader("checkpoint metadata lacks {}".format(f.name))
        raw = values[f.name]
        kwargs[f.name] = raw == "True" if f.type in (bool, "bool") else int(raw)
    return ModelConfig(**kwargs), int(values.get("step", 0))


def encode_checkpoint(ckpt):
    out = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    for text in (_model_metadata(ckpt.stack.cfg, ckpt.step), ckpt.config_text):
        raw = text.encode("utf-8")
        out += [struct.pack("<I", len(raw)), raw]
    groups = parameter_groups(ckpt.stack) + [
        ("log_tau", np.asarray(ckpt.log_taus, dtype=np.float64))
    ]
    out.append(struct.pack("<I", len(groups)))
    for name, values in groups:
        values = np.asarray(values)
        if values.ndim != 2:
            values = values.reshape(1, -1)
        raw_name = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw_name)))
        out.append(raw_name)
        out.append(struct.pack("<II", values.shape[0], values.shape[1]))
        out.append(np.ascontiguousarray(values, dtype="<f8").tobytes())
    return b"".join(out)


def save_checkpoint(path, ckpt):
    with open(path, "wb") as f:
        f.write(encode_checkpoint(ckpt))


class _Reader(object):
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n):
        chunk = self.data[self.pos : self.pos + n]
        if len(chunk) < n:
            raise TruncatedPayload("{}: checkpoint ends early".format(self.path))
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path):
    with open(path, "rb") as f:
        data = f.read()
    r = _Reader(data, path)
    if data[:8] != CHECKPOINT_MAGIC:
        raise MagicMismatch("{} is not a checkpoint file".format(path))
    r.take(8)
    (version,) = r.unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise VersionUnsupported("{}: checkpoint version {}".format(path, version))
    (n,) = r.unpack("<I")
    cfg, step = _parse_model_metadata(r.take(n).decode("utf-8"))
    (n,) = r.unpack("<I")
    config_text = r.take(n).decode("utf-8")
    (n_groups,) = r.unpack("<I")
    groups = {}
    for _ in range(n_groups):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        rows, cols = r.unpack("<II")
        values = np.frombuffer(r.take(rows * cols * 8), dtype="<f8")
        groups[name] = values.reshape(rows, cols).astype(np.float64)

    def layer(prefix, i):
        key = "{}.{}".format(prefix, i)
        try:
            return Layer(groups[key + ".W"], groups[key + ".b"].ravel())
        except KeyError:
            raise MalformedHeader("{}: missing parameter group {}".format(path, key))

    student_prefix = "adapter" if cfg.adapter_on_top else "student"
    try:
        stack = EncoderStack(
            cfg,
            groups["patch_proj.W"],
            groups["patch_proj.b"].ravel(),
            [layer("frozen", i) for i in range(cfg.frozen_layers)],
            [layer("teacher", i) for i in range(cfg.adapter_layers)],
            [layer(student_prefix, i) for i in range(cfg.adapter_layers)],
        )
        log_taus = groups["log_tau"].ravel()
    except KeyError as e:
        raise MalformedHeader("{}: missing parameter group {}".format(path, e))
    return Checkpoint(stack, log_taus, step, config_text)
