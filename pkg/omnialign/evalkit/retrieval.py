# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Cross-modal retrieval: query i in one modality should retrieve item i in
another. The rank of the true item counts every gallery item scoring at
least (truth - eps), the truth included, so the best possible rank is 1.
"""
from dataclasses import dataclass
from itertools import permutations

import numpy as np
import pandas as pd

from omnialign.numerics import as_tensor2, cosine_similarity_matrix
from omnialign.utilities import IndexOutOfRange, ShapeMismatch

METRICS = ("R@1", "R@5", "mAP", "MedR")


def rank_of_truth(sim_row, truth_index, eps=1e-6):
    """
    >>> rank_of_truth([0.5, 0.5], 0)
    2
    """
    sim_row = np.asarray(sim_row, dtype=np.float64)
    if not 0 <= truth_index < sim_row.shape[0]:
        raise IndexOutOfRange(
            "truth index {} outside 0..{}".format(truth_index, sim_row.shape[0] - 1)
        )
    return int(np.count_nonzero(sim_row >= sim_row[truth_index] - eps))


@dataclass
class RetrievalMetrics:
    r1: float
    r5: float
    mAP: float
    medr: float

    def as_dict(self):
        return {"R@1": self.r1, "R@5": self.r5, "mAP": self.mAP, "MedR": self.medr}


def truth_ranks(query, gallery, batch=2048, eps=1e-6, workers=1):
    """Rank of gallery[i] for every query[i], computed batch rows at a time."""
    query = as_tensor2(query, "query")
    gallery = as_tensor2(gallery, "gallery")
    if query.shape != gallery.shape:
        raise ShapeMismatch(
            "query and gallery must both be N x D, got {} and {}".format(
                query.shape, gallery.shape
            )
        )
    N = query.shape[0]
    ranks = np.zeros(N, dtype=np.int64)
    for start in range(0, N, max(1, int(batch))):
        stop = min(N, start + batch)
        S = cosine_similarity_matrix(query[start:stop], gallery, workers)
        truth = S[np.arange(stop - start), np.arange(start, stop)]
        ranks[start:stop] = np.count_nonzero(S >= (truth - eps)[:, None], axis=1)
    return ranks


def metrics_from_ranks(ranks):
    ranks = np.asarray(ranks)
    return RetrievalMetrics(
        r1=100.0 * float(np.mean(ranks <= 1)),
        r5=100.0 * float(np.mean(ranks <= 5)),
        mAP=float(np.mean(1.0 / ranks)),
        # np.median averages the two middle ranks for an even count
        medr=float(np.median(ranks)),
    )


def retrieval_eval(query, gallery, batch=2048, eps=1e-6, workers=1):
    """R@1 and R@5 (percent), mAP (= mean reciprocal rank) and median rank."""
    return metrics_from_ranks(truth_ranks(query, gallery, batch, eps, workers))


@dataclass
class RetrievalReport:
    # one row per directed pair, indexed by (source, target)
    pairs: pd.DataFrame

    @property
    def average(self):
        return {m: float(self.pairs[m].mean()) for m in METRICS}

    def as_dict(self):
        return {
            "pairs": [
                dict(source=src, target=tgt, **{m: float(row[m]) for m in METRICS})
                for (src, tgt), row in self.pairs.iterrows()
            ],
            "average": self.average,
        }


def directed_pair_average(features, names=None, batch=2048, eps=1e-6, workers=1):
    """
    Retrieval for every ordered pair of modalities (6 pairs for 3
    modalities) and the mean of each metric over the pairs.
    `features` is a sequence of N x D arrays, one per modality.
    """
    names = list(names or ("rgb", "depth", "seg")[: len(features)])
    rows = []
    for a, b in permutations(range(len(features)), 2):
        m = retrieval_eval(features[a], features[b], batch, eps, workers)
        rows.append(dict(source=names[a], target=names[b], **m.as_dict()))
    table = pd.DataFrame(rows, columns=["source", "target"] + list(METRICS))
    return RetrievalReport(table.set_index(["source", "target"]))
