# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Alignment and anchoring losses.

Modalities are indexed 0 = rgb, 1 = depth, 2 = seg. The alignment loss
averages symmetric InfoNCE over the pairs (rgb, seg), (seg, depth) and
(depth, rgb); the anchoring loss is the mean cosine distance between the
student and teacher embeddings of the same input. Both are computed for
the pooled token and for a random subset of dense tokens, then combined:

    align  = w * align_pooled  + (1 - w) * align_dense
    anchor = w * anchor_pooled + (1 - w) * anchor_dense
    total  = align + lambda_anchor * anchor
"""
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from omnialign.utilities import (
    BatchTooSmall,
    ConfigInvalid,
    DimensionMismatch,
    TauOutOfRange,
    TooFewTokens,
)

MODALITIES = ("rgb", "depth", "seg")
RGB, DEPTH, SEG = 0, 1, 2
PAIRS = ((RGB, SEG), (SEG, DEPTH), (DEPTH, RGB))

TAU_MIN = 1e-3
TAU_MAX = 100.0
# exp(log(tau)) can land an ulp outside the clip range
_TAU_SLACK = 1e-12


@dataclass(frozen=True)
class LossConfig:
    lambda_anchor: float = 10.0
    tau_init: float = 0.07
    tau_min: float = TAU_MIN
    tau_max: float = TAU_MAX
    n_dense: int = 64
    pooled_weight: float = 0.5
    shared_tau: bool = True
    dense_mask: bool = True

    def __post_init__(self):
        if self.lambda_anchor < 0:
            raise ConfigInvalid("lambda_anchor must be nonnegative")
        if not (0 < self.tau_min < self.tau_max):
            raise ConfigInvalid("need 0 < tau_min < tau_max")
        if not (self.tau_min <= self.tau_init <= self.tau_max):
            raise ConfigInvalid("tau_init must lie in [tau_min, tau_max]")
        if self.n_dense < 1:
            raise ConfigInvalid("n_dense must be at least 1")
        if not (0.0 <= self.pooled_weight <= 1.0):
            raise ConfigInvalid("pooled_weight must be in [0, 1]")

    @property
    def n_taus(self):
        return 1 if self.shared_tau else 2

    def initial_log_taus(self):
        return np.full(self.n_taus, np.log(self.tau_init))


def split_taus(log_taus):
    """(tau for pooled losses, tau for dense losses)."""
    taus = np.exp(np.asarray(log_taus, dtype=np.float64))
    return float(taus[0]), float(taus[-1])


@dataclass
class LossBreakdown:
    total: float
    align: float
    anchor: float
    lambda_anchor: float
    align_pooled: float = 0.0
    align_dense: float = 0.0
    anchor_pooled: float = 0.0
    anchor_dense: float = 0.0
    pair_pooled: Tuple[float, ...] = field(default_factory=tuple)
    pair_dense: Tuple[float, ...] = field(default_factory=tuple)

    def reassembled(self):
        return self.align + self.lambda_anchor * self.anchor

    def as_dict(self):
        return {
            "total": self.total,
            "align": self.align,
            "anchor": self.anchor,
            "align_pooled": self.align_pooled,
            "align_dense": self.align_dense,
            "anchor_pooled": self.anchor_pooled,
            "anchor_dense": self.anchor_dense,
        }


def check_tau(tau, tau_min=TAU_MIN, tau_max=TAU_MAX):
    if not (tau_min * (1 - _TAU_SLACK) <= tau <= tau_max * (1 + _TAU_SLACK)):
        raise TauOutOfRange(
            "tau {} outside [{}, {}]".format(tau, tau_min, tau_max)
        )


def nce_softmax(S, tau, allowed=None):
    """
    Row-wise InfoNCE on a similarity matrix whose diagonal holds the
    positives. Returns (loss, softmax probabilities over allowed entries).
    """
    logits = S / tau
    if allowed is not None:
        logits = np.where(allowed, logits, -np.inf)
    shift = logits.max(axis=1, keepdims=True)
    expd = np.exp(logits - shift)
    denom = expd.sum(axis=1, keepdims=True)
    lse = shift[:, 0] + np.log(denom[:, 0])
    loss = float(np.mean(lse - np.diag(logits)))
    return loss, expd / denom


def info_nce(H1, H2, tau, allowed=None, tau_min=TAU_MIN, tau_max=TAU_MAX):
    """
    -(1/N) sum_i log softmax_j(<H1_i, H2_j> / tau)[i], with row i of H2
    the positive for row i of H1. `allowed` (N x N bool) removes negatives.
    """
    H1 = np.asarray(H1, dtype=np.float64)
    H2 = np.asarray(H2, dtype=np.float64)
    if H1.shape != H2.shape:
        raise DimensionMismatch(
            "InfoNCE inputs differ in shape: {} vs {}".format(H1.shape, H2.shape)
        )
    if H1.shape[0] < 2:
        raise BatchTooSmall("InfoNCE needs at least 2 rows, got {}".format(H1.shape[0]))
    check_tau(tau, tau_min, tau_max)
    return nce_softmax(H1.dot(H2.T), tau, allowed)[0]


def symmetric_info_nce(H1, H2, tau, allowed=None, tau_min=TAU_MIN, tau_max=TAU_MAX):
    back = None if allowed is None else allowed.T
    return 0.5 * (
        info_nce(H1, H2, tau, allowed, tau_min, tau_max)
        + info_nce(H2, H1, tau, back, tau_min, tau_max)
    )


def align_loss(h_r, h_s, h_d, tau, tau_min=TAU_MIN, tau_max=TAU_MAX, with_terms=False):
    """
    Mean symmetric InfoNCE over (rgb, seg), (seg, depth), (depth, rgb).
    With with_terms, also returns the three pair terms in that order.
    """
    by_modality = {RGB: h_r, DEPTH: h_d, SEG: h_s}
    terms = tuple(
        symmetric_info_nce(by_modality[a], by_modality[b], tau, None, tau_min, tau_max)
        for a, b in PAIRS
    )
    loss = sum(terms) / 3.0
    return (loss, terms) if with_terms else loss


def anchor_loss(H_student, H_teacher):
    """Mean over rows of 1 - <h, h*>."""
    Hs = np.asarray(H_student, dtype=np.float64)
    Ht = np.asarray(H_teacher, dtype=np.float64)
    if Hs.shape != Ht.shape:
        raise DimensionMismatch(
            "anchor inputs differ in shape: {} vs {}".format(Hs.shape, Ht.shape)
        )
    Hs = Hs.reshape(-1, Hs.shape[-1])
    Ht = Ht.reshape(-1, Ht.shape[-1])
    return float(np.mean(1.0 - np.sum(Hs * Ht, axis=1)))


def sample_dense_indices(rng, n_tokens, n_dense):
    """n_dense distinct token indices, uniform without replacement."""
    if n_dense > n_tokens:
        raise TooFewTokens(
            "cannot sample {} dense tokens from {}".format(n_dense, n_tokens)
        )
    return rng.sample_without_replacement(n_tokens, n_dense)


def dense_allowed(n_scenes, n_per_scene, masked=True):
    """
    Which entries may appear in a dense InfoNCE denominator: the positive
    plus every token of another scene. Rows and columns are ordered
    scene-major. Without masking every entry is allowed.
    """
    n = n_scenes * n_per_scene
    if not masked:
        return np.ones((n, n), dtype=bool)
    scene = np.repeat(np.arange(n_scenes), n_per_scene)
    return (scene[:, None] != scene[None, :]) | np.eye(n, dtype=bool)


def gather_dense(dense, indices):
    """Pick tokens indices[b] from dense[b] for every modality: (B, M, n, D)."""
    indices = np.asarray(indices)
    return np.stack([dense[b][:, indices[b]] for b in range(dense.shape[0])])


def dense_align_loss(
    dense, indices, tau, masked=True, tau_min=TAU_MIN, tau_max=TAU_MAX
):
    """
    Masked dense InfoNCE. `dense` is (B, 3, T, D) with unit rows; the same
    indices[b] are used for all modalities of scene b, so the positive of
    token t is token t of the same scene in the other modality.
    """
    sampled = gather_dense(np.asarray(dense, dtype=np.float64), indices)
    return dense_align_sampled(sampled, tau, masked, tau_min, tau_max)[0]


def dense_align_sampled(sampled, tau, masked=True, tau_min=TAU_MIN, tau_max=TAU_MAX):
    B, _, n, D = sampled.shape
    allowed = dense_allowed(B, n, masked)
    terms = []
    for a, b in PAIRS:
        H1 = sampled[:, a].reshape(B * n, D)
        H2 = sampled[:, b].reshape(B * n, D)
        terms.append(symmetric_info_nce(H1, H2, tau, allowed, tau_min, tau_max))
    return sum(terms) / 3.0, tuple(terms)


@dataclass
class BatchEmbeddings:
    pooled_student: np.ndarray  # B x 3 x D
    pooled_teacher: np.ndarray  # B x 3 x D
    dense_student: np.ndarray  # B x 3 x n x D, sampled tokens only
    dense_teacher: np.ndarray  # B x 3 x n x D


def total_loss(emb, cfg, log_taus, check_range=True):
    """Loss breakdown for one batch of embeddings."""
    tau_p, tau_d = split_taus(log_taus)
    lo, hi = (cfg.tau_min, cfg.tau_max) if check_range else (0.0, np.inf)
    pooled = emb.pooled_student
    align_pooled, pooled_terms = align_loss(
        pooled[:, RGB], pooled[:, SEG], pooled[:, DEPTH], tau_p, lo, hi, with_terms=True
    )
    align_dense, dense_terms = dense_align_sampled(
        emb.dense_student, tau_d, cfg.dense_mask, lo, hi
    )
    anchor_pooled = (
        sum(
            anchor_loss(emb.pooled_student[:, m], emb.pooled_teacher[:, m])
            for m in range(3)
        )
        / 3.0
    )
    anchor_dense = (
        sum(
            anchor_loss(emb.dense_student[:, m], emb.dense_teacher[:, m])
            for m in range(3)
        )
        / 3.0
    )
    w = cfg.pooled_weight
    align = w * align_pooled + (1.0 - w) * align_dense
    anchor = w * anchor_pooled + (1.0 - w) * anchor_dense
    return LossBreakdown(
        total=align + cfg.lambda_anchor * anchor,
        align=align,
        anchor=anchor,
        lambda_anchor=cfg.lambda_anchor,
        align_pooled=align_pooled,
        align_dense=align_dense,
        anchor_pooled=anchor_pooled,
        anchor_dense=anchor_dense,
        pair_pooled=tuple(pooled_terms),
        pair_dense=dense_terms,
    )
