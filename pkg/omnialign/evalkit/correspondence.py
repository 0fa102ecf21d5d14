# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Dense correspondence at zero pixel tolerance. The modalities of a scene
are pixel-aligned, so token i of one must match token i of the other.
"""
from typing import NamedTuple

import numpy as np

from omnialign.numerics import as_tensor2, cosine_similarity_matrix
from omnialign.utilities import ShapeMismatch


class PCKResult(NamedTuple):
    forward: float
    backward: float

    @property
    def average(self):
        return (self.forward + self.backward) / 2.0

    def as_dict(self):
        return {"forward": self.forward, "backward": self.backward, "average": self.average}


def pck_at_zero(A, B):
    """
    Percent of tokens whose most similar token on the other side sits at
    the same index, A to B and B to A. argmax ties go to the lowest index.
    """
    A = as_tensor2(A, "A")
    B = as_tensor2(B, "B")
    if A.shape != B.shape:
        raise ShapeMismatch(
            "token grids differ: {} vs {}".format(A.shape, B.shape)
        )
    S = cosine_similarity_matrix(A, B)
    truth = np.arange(A.shape[0])
    forward = 100.0 * float(np.mean(np.argmax(S, axis=1) == truth))
    backward = 100.0 * float(np.mean(np.argmax(S.T, axis=1) == truth))
    return PCKResult(forward, backward)


def mean_pck(pairs):
    """Average PCKResult over (A, B) pairs, e.g. one pair per scene."""
    results = [pck_at_zero(a, b) for a, b in pairs]
    return PCKResult(
        float(np.mean([r.forward for r in results])),
        float(np.mean([r.backward for r in results])),
    )
