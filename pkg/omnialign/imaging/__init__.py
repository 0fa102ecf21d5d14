# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Image handling and the per-image data pipeline stages.

Images are numpy arrays: ImageRGB is H x W x 3 float64 in [0, 1] and
ScalarMap is H x W float64 (depth values, or segmentation ids cast to
float). The stages are:

    photometric_augment -> natural_colorize -> modality_mixup -> normalize_imagenet
"""
from omnialign.imaging.images import (
    IMAGENET,
    NormalizationConstants,
    center_crop_square,
    check_rgb,
    check_scalar_map,
    denormalize_imagenet,
    modality_mixup,
    normalize_imagenet,
    resize_bilinear,
    resize_nearest,
    sample_alpha,
    to_grayscale,
)
from omnialign.imaging.photometric import AugmentConfig, photometric_augment
from omnialign.imaging.colorization import (
    COLORIZATIONS,
    ColorPalette,
    bin_indices,
    build_palette,
    colorize,
    colormap_palette,
    natural_colorize,
)
