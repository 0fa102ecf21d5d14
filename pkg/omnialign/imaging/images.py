# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Basic image operations: validation, ImageNet normalization, center crop,
nearest and bilinear resizing, grayscale rendering and modality mixup.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from omnialign.utilities import AlphaOutOfRange, DimensionMismatch, InputError


@dataclass(frozen=True)
class NormalizationConstants:
    mean: Tuple[float, float, float] = (0.485, 0.456, 0.406)
    std: Tuple[float, float, float] = (0.229, 0.224, 0.225)

    def __post_init__(self):
        if min(self.std) <= 0:
            raise InputError("normalization std components must be positive")


IMAGENET = NormalizationConstants()

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def check_rgb(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise DimensionMismatch(
            "expected an H x W x 3 image, got shape {}".format(img.shape)
        )
    return img


def check_scalar_map(raw):
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] < 1 or raw.shape[1] < 1:
        raise DimensionMismatch(
            "expected an H x W scalar map, got shape {}".format(raw.shape)
        )
    if not np.all(np.isfinite(raw)):
        raise InputError("scalar map contains non-finite values")
    return raw


def luminance(img):
    r, g, b = LUMA_WEIGHTS
    return r * img[..., 0] + g * img[..., 1] + b * img[..., 2]


def to_grayscale(img):
    """Luminance replicated into three channels."""
    img = check_rgb(img)
    y = np.clip(luminance(img), 0.0, 1.0)
    return np.repeat(y[:, :, None], 3, axis=2)


def normalize_imagenet(img, c=IMAGENET):
    """Per-channel (value - mean) / std. The result is not clamped."""
    img = check_rgb(img)
    return (img - np.array(c.mean)) / np.array(c.std)


def denormalize_imagenet(x, c=IMAGENET):
    return np.asarray(x) * np.array(c.std) + np.array(c.mean)


def center_crop_square(img):
    """
    Crop the central square of an H x W (x C) array.

    >>> center_crop_square(np.arange(24).reshape(4, 6))[0].tolist()
    [1, 2, 3, 4]
    """
    img = np.asarray(img)
    h, w = img.shape[:2]
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    return img[top : top + side, left : left + side].copy()


def _nearest_index(n_out, n_in):
    # floor((i + 0.5) * n_in / n_out) in exact integer arithmetic
    i = np.arange(n_out)
    return np.minimum(((2 * i + 1) * n_in) // (2 * n_out), n_in - 1)


def resize_nearest(img, height, width):
    if height < 1 or width < 1:
        raise InputError("target size must be at least 1x1")
    img = np.asarray(img)
    rows = _nearest_index(height, img.shape[0])
    cols = _nearest_index(width, img.shape[1])
    return img[rows][:, cols].copy()


def _bilinear_weights(n_out, n_in):
    # half-pixel centers, clamped at the edges
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear(img, height, width):
    if height < 1 or width < 1:
        raise InputError("target size must be at least 1x1")
    img = np.asarray(img, dtype=np.float64)
    lo, hi, f = _bilinear_weights(height, img.shape[0])
    shape = (-1,) + (1,) * (img.ndim - 1)
    f = f.reshape(shape)
    rows = img[lo] * (1.0 - f) + img[hi] * f
    lo, hi, f = _bilinear_weights(width, img.shape[1])
    shape = (1, -1) + (1,) * (img.ndim - 2)
    f = f.reshape(shape)
    return rows[:, lo] * (1.0 - f) + rows[:, hi] * f


def modality_mixup(x_m, x_rgb_aug, alpha):
    """Blend a colorized structural map with the augmented RGB image."""
    if not (0.0 <= alpha <= 1.0):
        raise AlphaOutOfRange("alpha must be in [0, 1], got {}".format(alpha))
    x_m = check_rgb(x_m)
    x_rgb_aug = check_rgb(x_rgb_aug)
    if x_m.shape != x_rgb_aug.shape:
        raise DimensionMismatch(
            "mixup inputs differ in shape: {} vs {}".format(x_m.shape, x_rgb_aug.shape)
        )
    return (1.0 - alpha) * x_m + alpha * x_rgb_aug


def sample_alpha(rng, alpha_max):
    """Uniform draw from [0, alpha_max]; always consumes one value from rng."""
    if not (0.0 <= alpha_max <= 1.0):
        raise AlphaOutOfRange(
            "alpha_max must be in [0, 1], got {}".format(alpha_max)
        )
    return alpha_max * rng.next_unit_float()
