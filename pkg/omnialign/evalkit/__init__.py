# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Evaluation protocols: cross-modal retrieval, alignment diagnostics, k-NN
classification, dense correspondence and PCA visualization.
"""
from omnialign.evalkit.retrieval import (
    METRICS,
    RetrievalMetrics,
    RetrievalReport,
    directed_pair_average,
    metrics_from_ranks,
    rank_of_truth,
    retrieval_eval,
    truth_ranks,
)
from omnialign.evalkit.diagnostics import DiagnosticReport, derangement, diagnostics
from omnialign.evalkit.knn import KnnReport, knn_hard, knn_soft_vote
from omnialign.evalkit.correspondence import PCKResult, mean_pck, pck_at_zero
from omnialign.evalkit.visualize import pca_visualize
