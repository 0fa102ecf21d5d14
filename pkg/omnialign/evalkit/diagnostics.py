# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Alignment and discernibility diagnostics: mean cosine similarity between
modalities of the same scene, and between RGB embeddings of different
scenes.
"""
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from omnialign.numerics import as_tensor2, normalize_rows, seeded_rng
from omnialign.utilities import ShapeMismatch, TooFewScenes


@dataclass
class DiagnosticReport:
    rgb_depth: float
    rgb_seg: float
    depth_seg: float
    rgb_rgb_mismatched: float
    rgb_gray: Optional[float] = None

    @property
    def alignment(self):
        """Mean matched-scene cross-modal similarity."""
        return (self.rgb_depth + self.rgb_seg + self.depth_seg) / 3.0

    @property
    def discernibility(self):
        return 1.0 - self.rgb_rgb_mismatched

    def as_dict(self):
        d = asdict(self)
        if d["rgb_gray"] is None:
            del d["rgb_gray"]
        d["alignment"] = self.alignment
        d["discernibility"] = self.discernibility
        return d


def derangement(n, seed):
    """
    Random cyclic permutation of 0..n-1 with no fixed points (Sattolo).

    >>> d = derangement(5, 0)
    >>> bool((d != np.arange(5)).all())
    True
    """
    rng = seeded_rng(seed)
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.integer(i)
        perm[i], perm[j] = perm[j], perm[i]
    return np.array(perm, dtype=np.int64)


def matched_similarity(A, B):
    """Mean over i of cos(A[i], B[i])."""
    A = as_tensor2(A, "A")
    B = as_tensor2(B, "B")
    if A.shape != B.shape:
        raise ShapeMismatch("shapes differ: {} vs {}".format(A.shape, B.shape))
    An, _ = normalize_rows(A)
    Bn, _ = normalize_rows(B)
    sims = np.zeros(A.shape[0])
    for d in range(A.shape[1]):
        sims += An[:, d] * Bn[:, d]
    return float(sims.mean())


def diagnostics(features, pairing_seed=0, gray=None):
    """
    `features` holds the rgb, depth and seg embeddings (each N x D) of N
    scenes in matching order; `gray` optionally the embeddings of the
    grayscale renderings of the rgb images.
    """
    rgb, depth, seg = features
    n = as_tensor2(rgb, "rgb").shape[0]
    if n < 2:
        raise TooFewScenes("mismatched pairs need at least 2 scenes, got {}".format(n))
    partner = derangement(n, pairing_seed)
    rgb = np.asarray(rgb, dtype=np.float64)
    return DiagnosticReport(
        rgb_depth=matched_similarity(rgb, depth),
        rgb_seg=matched_similarity(rgb, seg),
        depth_seg=matched_similarity(depth, seg),
        rgb_rgb_mismatched=matched_similarity(rgb, rgb[partner]),
        rgb_gray=None if gray is None else matched_similarity(rgb, gray),
    )
