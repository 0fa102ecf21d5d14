# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Photometric augmentation of RGB images: brightness, saturation, hue and
contrast, applied in that order. Hue and saturation are changed in
hexagonal HSV space; contrast pivots on the mean luminance of the image.
Values are clamped to [0, 1] after every stage.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from omnialign.imaging.images import check_rgb, luminance
from omnialign.utilities import ConfigInvalid


@dataclass(frozen=True)
class AugmentConfig:
    brightness_delta_range: Tuple[float, float] = (-0.1, 0.1)
    saturation_range: Tuple[float, float] = (0.8, 1.2)
    hue_delta_range: Tuple[float, float] = (-0.03, 0.03)
    contrast_range: Tuple[float, float] = (0.8, 1.2)

    def __post_init__(self):
        for name in (
            "brightness_delta_range",
            "saturation_range",
            "hue_delta_range",
            "contrast_range",
        ):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigInvalid("{}: min {} > max {}".format(name, lo, hi))

    @classmethod
    def identity(cls):
        return cls((0.0, 0.0), (1.0, 1.0), (0.0, 0.0), (1.0, 1.0))


def rgb_to_hsv(img):
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    v = img.max(axis=-1)
    c = v - img.min(axis=-1)
    safe_c = np.where(c > 0, c, 1.0)
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    h = np.where(
        v == r,
        np.mod((g - b) / safe_c, 6.0),
        np.where(v == g, (b - r) / safe_c + 2.0, (r - g) / safe_c + 4.0),
    )
    h = np.where(c > 0, h / 6.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv):
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    h6 = np.mod(h, 1.0) * 6.0
    sector = np.floor(h6)
    f = h6 - sector
    sector = sector.astype(int) % 6
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(sector, [v, q, p, p, t, v])
    g = np.choose(sector, [t, v, v, q, p, p])
    b = np.choose(sector, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def adjust_brightness(img, delta):
    return np.clip(img + delta, 0.0, 1.0)


def adjust_saturation(img, scale):
    hsv = rgb_to_hsv(img)
    hsv[..., 1] = np.clip(hsv[..., 1] * scale, 0.0, 1.0)
    return np.clip(hsv_to_rgb(hsv), 0.0, 1.0)


def adjust_hue(img, delta):
    hsv = rgb_to_hsv(img)
    hsv[..., 0] = np.mod(hsv[..., 0] + delta, 1.0)
    return np.clip(hsv_to_rgb(hsv), 0.0, 1.0)


def adjust_contrast(img, scale):
    pivot = float(np.mean(luminance(img)))
    return np.clip(pivot + scale * (img - pivot), 0.0, 1.0)


def photometric_augment(img, cfg, rng):
    """
    Apply brightness, saturation, hue and contrast distortions. The four
    scalars are drawn from rng once per image, in that order, before any
    stage runs. A stage whose draw is the identity is skipped, so
    collapsed ranges return the input unchanged.
    """
    img = check_rgb(img)
    delta_b = rng.uniform_range(*cfg.brightness_delta_range)
    sat = rng.uniform_range(*cfg.saturation_range)
    delta_h = rng.uniform_range(*cfg.hue_delta_range)
    contrast = rng.uniform_range(*cfg.contrast_range)

    out = img.copy()
    if delta_b != 0.0:
        out = adjust_brightness(out, delta_b)
    if sat != 1.0:
        out = adjust_saturation(out, sat)
    if delta_h != 0.0:
        out = adjust_hue(out, delta_h)
    if contrast != 1.0:
        out = adjust_contrast(out, contrast)
    return out
