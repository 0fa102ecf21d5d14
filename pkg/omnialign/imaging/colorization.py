# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Natural colorization of depth and segmentation maps.

The scalar map is normalized to [0, 1] and quantized into B bins. The RGB
pixels falling into each bin are summed (S) and counted (N), both are
smoothed along the bin axis with an all-ones kernel of length K (zero
padding at the ends), and each bin gets the color S~ / (N~ + eps). Every
pixel is then re-rendered with the color of its bin, so the result has
the color statistics of the scene photograph but only the structure of
the scalar map.

Grayscale and jet renderings go through the same bin lookup with a fixed
palette, for comparison with the natural palette.
"""
from dataclasses import dataclass

import numpy as np

from omnialign.imaging.images import check_rgb, check_scalar_map
from omnialign.utilities import ConfigInvalid, DimensionMismatch

COLORIZATIONS = ("natural", "grayscale", "jet")


@dataclass
class ColorPalette:
    sums: np.ndarray  # B x 3, smoothed
    counts: np.ndarray  # B, smoothed
    colors: np.ndarray  # B x 3
    bins: int = 64
    kernel: int = 5
    eps: float = 1e-6


def bin_indices(raw, bins, eps=1e-6):
    raw = check_scalar_map(raw)
    lo = raw.min()
    hi = raw.max()
    norm = (raw - lo) / (hi - lo + eps)
    return np.clip(np.floor(norm * bins), 0, bins - 1).astype(np.int64)


def smooth_bins(values, kernel):
    """
    Convolve along axis 0 with an all-ones kernel of length `kernel`,
    zero-padded. Offsets are summed in ascending order.
    """
    n = values.shape[0]
    out = np.zeros_like(values)
    for off in range(-(kernel // 2), kernel - kernel // 2):
        lo = max(0, -off)
        hi = min(n, n - off)
        if lo < hi:
            out[lo:hi] += values[lo + off : hi + off]
    return out


def _check_params(bins, kernel, eps):
    if bins < 1:
        raise ConfigInvalid("bins must be at least 1, got {}".format(bins))
    if kernel < 1:
        raise ConfigInvalid("kernel size must be at least 1, got {}".format(kernel))
    if eps <= 0:
        raise ConfigInvalid("eps must be positive, got {}".format(eps))


def _check_pair(raw, rgb):
    raw = check_scalar_map(raw)
    rgb = check_rgb(rgb)
    if raw.shape != rgb.shape[:2]:
        raise DimensionMismatch(
            "scalar map {} and image {} differ in size".format(
                raw.shape, rgb.shape[:2]
            )
        )
    return raw, rgb


def build_palette(raw, rgb, bins=64, kernel=5, eps=1e-6):
    _check_params(bins, kernel, eps)
    raw, rgb = _check_pair(raw, rgb)
    b = bin_indices(raw, bins, eps).ravel()
    pixels = rgb.reshape(-1, 3)
    # bincount adds weights in pixel order
    sums = np.stack(
        [np.bincount(b, weights=pixels[:, c], minlength=bins) for c in range(3)],
        axis=1,
    )
    counts = np.bincount(b, minlength=bins).astype(np.float64)
    sums = smooth_bins(sums, kernel)
    counts = smooth_bins(counts, kernel)
    colors = sums / (counts[:, None] + eps)
    return ColorPalette(sums, counts, colors, bins, kernel, eps)


def natural_colorize(raw, rgb, bins=64, kernel=5, eps=1e-6):
    palette = build_palette(raw, rgb, bins, kernel, eps)
    b = bin_indices(raw, bins, eps)
    return np.clip(palette.colors[b], 0.0, 1.0)


def colormap_palette(name, bins=64):
    """
    Fixed palette for the grayscale and jet baselines.

    >>> colormap_palette("grayscale", 2)[:, 0].tolist()
    [0.25, 0.75]
    """
    x = (np.arange(bins) + 0.5) / bins
    if name == "grayscale":
        return np.repeat(x[:, None], 3, axis=1)
    if name == "jet":
        return np.clip(
            np.stack(
                [
                    1.5 - np.abs(4.0 * x - 3.0),
                    1.5 - np.abs(4.0 * x - 2.0),
                    1.5 - np.abs(4.0 * x - 1.0),
                ],
                axis=1,
            ),
            0.0,
            1.0,
        )
    raise ConfigInvalid(
        "unknown colormap {!r}; use one of {}".format(name, ", ".join(COLORIZATIONS))
    )


def colorize(raw, rgb, method="natural", bins=64, kernel=5, eps=1e-6):
    """Render a scalar map as RGB with the chosen colorization method."""
    if method == "natural":
        return natural_colorize(raw, rgb, bins, kernel, eps)
    palette = colormap_palette(method, bins)
    raw, _ = _check_pair(raw, rgb)
    return palette[bin_indices(raw, bins, eps)]
