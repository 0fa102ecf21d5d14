# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
PCA rendering of dense features. One basis is fit on the tokens of all
modalities together and the color scale is shared, so equal colors in
different images mean equal features.
"""
import numpy as np

from omnialign.imaging import resize_nearest
from omnialign.numerics import pca_top_k
from omnialign.utilities import ShapeMismatch, warn

# eigenvalues below this fraction of the largest count as zero
RANK_TOL = 1e-12


def pca_visualize(dense, grid, upscale=1):
    """
    dense: one T x D array per modality; grid: (gh, gw) with gh*gw = T.
    Returns one (gh*upscale) x (gw*upscale) x 3 image in [0, 1] per input.
    """
    gh, gw = grid
    arrays = [np.asarray(x, dtype=np.float64) for x in dense]
    for x in arrays:
        if x.ndim != 2 or x.shape[0] != gh * gw or x.shape != arrays[0].shape:
            raise ShapeMismatch(
                "expected {} x D tokens per modality, got {}".format(
                    gh * gw, [a.shape for a in arrays]
                )
            )
    X = np.concatenate(arrays)
    k = min(3, X.shape[0], X.shape[1])
    pca = pca_top_k(X, k)
    proj = np.zeros((X.shape[0], 3))
    proj[:, :k] = pca.projections
    top = max(float(pca.eigenvalues[0]), 0.0)
    live = [c for c in range(k) if pca.eigenvalues[c] > RANK_TOL * max(top, 1.0)]
    if len(live) < 3:
        warn(
            "features have {} nonzero principal components; "
            "filling the remaining channels with zeros".format(len(live))
        )
    channels = np.zeros_like(proj)
    for c in live:
        lo, hi = proj[:, c].min(), proj[:, c].max()
        if hi > lo:
            channels[:, c] = (proj[:, c] - lo) / (hi - lo)
    images = []
    T = gh * gw
    for m in range(len(arrays)):
        img = channels[m * T : (m + 1) * T].reshape(gh, gw, 3)
        if upscale > 1:
            img = resize_nearest(img, gh * upscale, gw * upscale)
        images.append(img)
    return images
