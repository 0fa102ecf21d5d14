# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Bit-exact file formats:

- PPM (P6) and PGM (P5) with maxval 255. Floats are quantized as
  round(v * 255) (round half to even) after clamping to [0, 1]. PGM can
  take a different scale, e.g. scale=1 stores integer segmentation ids.
- f32raw: 16-byte header (magic b"F32R", u32 version, u32 rows, u32 cols),
  then little-endian float32 values in row-major order.
- OMNIFEAT feature sets: magic b"OMNIFEAT", u32 version, u32 n_items,
  u32 dim, u8 modality tag (0 rgb, 1 depth, 2 seg), then little-endian
  float32 values in row-major order.
"""
import struct
from dataclasses import dataclass

import numpy as np

from omnialign.utilities import (
    InputError,
    MagicMismatch,
    MalformedHeader,
    TruncatedPayload,
    VersionUnsupported,
)

F32RAW_MAGIC = b"F32R"
F32RAW_VERSION = 1
FEATURES_MAGIC = b"OMNIFEAT"
FEATURES_VERSION = 1

MODALITIES = ("rgb", "depth", "seg")
MODALITY_TAGS = {name: i for i, name in enumerate(MODALITIES)}

_WHITESPACE = b" \t\n\r\v\f"


def quantize(values, scale=255):
    return np.round(np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * scale)


def _read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def _parse_netpbm_header(data, magic, path):
    """
    Parse "<magic> <width> <height> <maxval>" with optional # comments.
    Returns (width, height, maxval, offset of the first payload byte).
    """
    if not data.startswith(magic):
        raise MalformedHeader(
            "{}: expected {} header".format(path, magic.decode("ascii"))
        )
    pos = len(magic)
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise MalformedHeader("{}: header ends early".format(path))
        ch = data[pos : pos + 1]
        if ch in _WHITESPACE:
            pos += 1
        elif ch == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise MalformedHeader("{}: unterminated comment".format(path))
            pos = end + 1
        else:
            start = pos
            while pos < len(data) and data[pos : pos + 1] not in _WHITESPACE:
                pos += 1
            token = data[start:pos]
            if not token.isdigit():
                raise MalformedHeader(
                    "{}: bad header field {!r}".format(path, token)
                )
            fields.append(int(token))
    # exactly one whitespace byte separates maxval from the payload
    if pos >= len(data) or data[pos : pos + 1] not in _WHITESPACE:
        raise MalformedHeader("{}: missing separator after maxval".format(path))
    width, height, maxval = fields
    if width < 1 or height < 1 or not (1 <= maxval <= 255):
        raise MalformedHeader(
            "{}: unsupported size {}x{} or maxval {}".format(path, width, height, maxval)
        )
    return width, height, maxval, pos + 1


def _netpbm_payload(data, offset, n_bytes, path):
    payload = data[offset : offset + n_bytes]
    if len(payload) < n_bytes:
        raise TruncatedPayload(
            "{}: expected {} payload bytes, found {}".format(path, n_bytes, len(payload))
        )
    return np.frombuffer(payload, dtype=np.uint8)


def encode_ppm(img):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InputError("PPM needs an H x W x 3 image, got {}".format(img.shape))
    h, w = img.shape[:2]
    header = "P6\n{} {}\n255\n".format(w, h).encode("ascii")
    return header + quantize(img).astype(np.uint8).tobytes()


def write_ppm(path, img):
    with open(path, "wb") as f:
        f.write(encode_ppm(img))


def read_ppm(path):
    data = _read_bytes(path)
    width, height, maxval, offset = _parse_netpbm_header(data, b"P6", path)
    pixels = _netpbm_payload(data, offset, width * height * 3, path)
    return pixels.reshape(height, width, 3).astype(np.float64) / maxval


def encode_pgm(values, scale=255):
    values = np.asarray(values)
    if values.ndim != 2:
        raise InputError("PGM needs an H x W map, got {}".format(values.shape))
    h, w = values.shape
    header = "P5\n{} {}\n255\n".format(w, h).encode("ascii")
    if scale == 255:
        body = quantize(values)
    else:
        body = np.round(np.asarray(values, dtype=np.float64) * scale)
        if body.min(initial=0) < 0 or body.max(initial=0) > 255:
            raise InputError("PGM values out of range 0..255 after scaling")
    return header + body.astype(np.uint8).tobytes()


def write_pgm(path, values, scale=255):
    with open(path, "wb") as f:
        f.write(encode_pgm(values, scale))


def read_pgm(path, scale=None):
    """Read a P5 file; values are divided by `scale` (default: maxval)."""
    data = _read_bytes(path)
    width, height, maxval, offset = _parse_netpbm_header(data, b"P5", path)
    pixels = _netpbm_payload(data, offset, width * height, path)
    return pixels.reshape(height, width).astype(np.float64) / (scale or maxval)


def write_f32raw(path, values):
    values = np.asarray(values)
    if values.ndim != 2:
        raise InputError("f32raw needs a 2-D array, got {}".format(values.shape))
    rows, cols = values.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<4sIII", F32RAW_MAGIC, F32RAW_VERSION, rows, cols))
        f.write(values.astype("<f4").tobytes())


def read_f32raw(path):
    data = _read_bytes(path)
    if len(data) < 16:
        raise MalformedHeader("{}: f32raw header is 16 bytes".format(path))
    magic, version, rows, cols = struct.unpack("<4sIII", data[:16])
    if magic != F32RAW_MAGIC:
        raise MagicMismatch("{}: bad f32raw magic {!r}".format(path, magic))
    if version != F32RAW_VERSION:
        raise VersionUnsupported("{}: f32raw version {}".format(path, version))
    n_bytes = rows * cols * 4
    if len(data) - 16 < n_bytes:
        raise TruncatedPayload(
            "{}: expected {} payload bytes, found {}".format(path, n_bytes, len(data) - 16)
        )
    values = np.frombuffer(data[16 : 16 + n_bytes], dtype="<f4")
    return values.reshape(rows, cols).astype(np.float64)


@dataclass
class FeatureSetFile:
    features: np.ndarray  # n_items x dim
    modality: int = 0
    version: int = FEATURES_VERSION

    @property
    def n_items(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]


_FEATURES_HEADER = struct.Struct("<8sIIIB")


def write_features(path, feature_set):
    feats = np.asarray(feature_set.features)
    if feats.ndim != 2:
        raise InputError("features must be n_items x dim, got {}".format(feats.shape))
    if not np.all(np.isfinite(feats)):
        raise InputError("features contain non-finite values")
    with open(path, "wb") as f:
        f.write(
            _FEATURES_HEADER.pack(
                FEATURES_MAGIC,
                FEATURES_VERSION,
                feats.shape[0],
                feats.shape[1],
                int(feature_set.modality),
            )
        )
        f.write(feats.astype("<f4").tobytes())


def read_features(path):
    data = _read_bytes(path)
    if len(data) < _FEATURES_HEADER.size:
        raise MalformedHeader("{}: feature header is incomplete".format(path))
    magic, version, n_items, dim, modality = _FEATURES_HEADER.unpack(
        data[: _FEATURES_HEADER.size]
    )
    if magic != FEATURES_MAGIC:
        raise MagicMismatch("{}: bad feature-set magic {!r}".format(path, magic))
    if version != FEATURES_VERSION:
        raise VersionUnsupported("{}: feature-set version {}".format(path, version))
    n_bytes = n_items * dim * 4
    payload = data[_FEATURES_HEADER.size : _FEATURES_HEADER.size + n_bytes]
    if len(payload) < n_bytes:
        raise TruncatedPayload(
            "{}: expected {} payload bytes, found {}".format(path, n_bytes, len(payload))
        )
    feats = np.frombuffer(payload, dtype="<f4").reshape(n_items, dim).copy()
    return FeatureSetFile(feats, modality, version)
