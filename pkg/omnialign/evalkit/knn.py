# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
k-nearest-neighbor classification on cosine similarity. Neighbor ties
go to the lower index and class ties to the lower class id.
"""
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from omnialign.numerics import as_tensor2, cosine_similarity_matrix
from omnialign.utilities import EmptyIndex, LengthMismatch, ShapeMismatch, warn


@dataclass
class KnnReport:
    accuracy: Dict[int, float] = field(default_factory=dict)

    @property
    def best_k(self):
        # lowest k among equally good ones
        return max(sorted(self.accuracy), key=lambda k: self.accuracy[k])

    @property
    def best_accuracy(self):
        return self.accuracy[self.best_k]

    def as_dict(self):
        return {
            "accuracy": {str(k): v for k, v in self.accuracy.items()},
            "best_k": self.best_k,
            "best_accuracy": self.best_accuracy,
        }


def _check_index(feats, labels):
    feats = as_tensor2(feats, "index features")
    labels = np.asarray(labels, dtype=np.int64)
    if feats.shape[0] == 0:
        raise EmptyIndex("the k-NN index is empty")
    if labels.shape != (feats.shape[0],):
        raise LengthMismatch(
            "{} index rows but {} labels".format(feats.shape[0], labels.shape[0])
        )
    return feats, labels


def soft_vote_predict(sims, labels, k, tau=0.07, n_classes=None):
    """Class predictions from a query x index similarity matrix."""
    n_classes = n_classes or int(labels.max()) + 1
    order = np.argsort(-sims, axis=1, kind="stable")[:, :k]
    preds = np.zeros(sims.shape[0], dtype=np.int64)
    for q in range(sims.shape[0]):
        top = sims[q, order[q]] / tau
        w = np.exp(top - top.max())
        w /= w.sum()
        votes = np.bincount(labels[order[q]], weights=w, minlength=n_classes)
        preds[q] = int(np.argmax(votes))
    return preds


def knn_soft_vote(
    train_feats, train_labels, query_feats, query_labels, ks=(5, 10, 20, 50, 100),
    tau=0.07, workers=1,
):
    """
    Weighted k-NN: the k most similar index items vote for their class
    with weights softmax(sim / tau). Accuracy (percent) for each k that
    fits the index; k values larger than the index are skipped.
    """
    train_feats, train_labels = _check_index(train_feats, train_labels)
    query_feats = as_tensor2(query_feats, "query features")
    query_labels = np.asarray(query_labels, dtype=np.int64)
    if query_labels.shape != (query_feats.shape[0],):
        raise LengthMismatch("query labels do not match query rows")
    n_index = train_feats.shape[0]
    usable = [k for k in ks if k <= n_index]
    if len(usable) < len(ks):
        warn(
            "skipping k > {} (index size): {}".format(
                n_index, ", ".join(str(k) for k in ks if k > n_index)
            )
        )
    if not usable:
        usable = [n_index]
    sims = cosine_similarity_matrix(query_feats, train_feats, workers)
    n_classes = int(max(train_labels.max(), query_labels.max(initial=0))) + 1
    report = KnnReport()
    for k in usable:
        preds = soft_vote_predict(sims, train_labels, k, tau, n_classes)
        report.accuracy[int(k)] = 100.0 * float(np.mean(preds == query_labels))
    return report


def knn_hard(index_feats, index_labels, query_feats=None, query_labels=None,
             exclude_self=False, workers=1):
    """
    Nearest-neighbor accuracy (percent). With exclude_self the queries are
    the index itself and each query's own position is skipped.
    """
    index_feats, index_labels = _check_index(index_feats, index_labels)
    if query_feats is None:
        query_feats, query_labels = index_feats, index_labels
    query_feats = as_tensor2(query_feats, "query features")
    query_labels = np.asarray(
        index_labels if query_labels is None else query_labels, dtype=np.int64
    )
    if exclude_self:
        if query_feats.shape != index_feats.shape:
            raise ShapeMismatch("exclude_self needs the query set to be the index")
        if index_feats.shape[0] < 2:
            raise EmptyIndex("no neighbors left after excluding the query itself")
    sims = cosine_similarity_matrix(query_feats, index_feats, workers)
    if exclude_self:
        np.fill_diagonal(sims, -np.inf)
    nearest = np.argmax(sims, axis=1)
    return 100.0 * float(np.mean(index_labels[nearest] == query_labels))
