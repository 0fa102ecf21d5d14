# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Dense arithmetic used by every other module: a portable seeded random
stream, L2 normalization, cosine similarity matrices with a fixed
reduction order, and PCA by cyclic Jacobi eigendecomposition.

Feature matrices (Tensor2) are plain 2-D float64 numpy arrays.
"""
from __future__ import division

from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple

import numpy as np

from omnialign.utilities import (
    DimensionMismatch,
    RankDeficient,
    ZeroVector,
    worker_count,
)

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# smallest norm accepted by l2_normalize / normalize_rows
NORM_FLOOR = 1e-12
_UNIT_SLACK = 64 * np.finfo(np.float64).eps


def _mix64(z):
    """SplitMix64 finalizer on a python int."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z):
    # uint64 array arithmetic wraps modulo 2**64
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def derive_seed(*parts):
    """
    Combine integers into one 64-bit seed. Used to give every training
    step and every batch item its own stream.

    >>> derive_seed(1, 2) == derive_seed(1, 2)
    True
    >>> derive_seed(1, 2) == derive_seed(2, 1)
    False
    """
    x = 0x6A09E667F3BCC909
    for p in parts:
        x = _mix64((x ^ _mix64((int(p) + GOLDEN_GAMMA) & MASK64)) & MASK64)
    return x


class RngStream(object):
    """
    SplitMix64 generator. All sampling in the package goes through this
    class so sequences are identical across platforms and numpy versions.
    """

    def __init__(self, seed):
        self.state = int(seed) & MASK64

    def next_u64(self):
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return _mix64(self.state)

    def next_unit_float(self):
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def u64_array(self, n):
        """Next n outputs as a uint64 array (same sequence as next_u64)."""
        if n <= 0:
            return np.zeros(0, dtype=np.uint64)
        steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GOLDEN_GAMMA)
        z = steps + np.uint64(self.state)
        self.state = (self.state + n * GOLDEN_GAMMA) & MASK64
        return _mix64_array(z)

    def uniform(self, n):
        """n floats in [0, 1) with 53-bit resolution."""
        return (self.u64_array(n) >> np.uint64(11)).astype(np.float64) * (
            1.0 / (1 << 53)
        )

    def uniform_range(self, low, high):
        """One float drawn uniformly from [low, high]."""
        return low + (high - low) * self.next_unit_float()

    def integer(self, n):
        """One integer drawn uniformly from 0..n-1."""
        return min(int(self.next_unit_float() * n), n - 1)

    def normal(self, n, std=1.0):
        """n Gaussian draws (Box-Muller, cosine branch)."""
        u = self.uniform(2 * n)
        u1, u2 = u[0::2], u[1::2]
        return std * np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)

    def permutation(self, n):
        """Fisher-Yates shuffle of 0..n-1."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.integer(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return np.array(perm, dtype=np.int64)

    def sample_without_replacement(self, n, k):
        """k distinct values from 0..n-1 (partial Fisher-Yates)."""
        pool = list(range(n))
        for i in range(k):
            j = i + self.integer(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return np.array(pool[:k], dtype=np.int64)


def seeded_rng(seed):
    """
    Return a SplitMix64 stream for a 64-bit seed.

    >>> hex(seeded_rng(0).next_u64())
    '0xe220a8397b1dcdaf'
    """
    return RngStream(seed)


def as_tensor2(a, name="matrix"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatch(
            "{} must be 2-dimensional, got shape {}".format(name, a.shape)
        )
    return a


def _row_norms(A):
    # explicit left-to-right sum of squares, independent of row count
    acc = np.zeros(A.shape[0])
    for d in range(A.shape[1]):
        acc += A[:, d] * A[:, d]
    return np.sqrt(acc)


def l2_normalize(v):
    """
    Scale v to unit L2 norm. Idempotent: an already-normalized vector is
    returned unchanged.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.sqrt(np.sum(v * v)))
    if norm < NORM_FLOOR:
        raise ZeroVector("cannot normalize a vector with norm {:g}".format(norm))
    # already unit length up to rounding in the norm itself
    if abs(norm - 1.0) <= _UNIT_SLACK:
        return v.copy()
    return v / norm


def normalize_rows(A):
    """Normalize every row of A to unit length; returns (normalized, norms)."""
    A = as_tensor2(A)
    norms = _row_norms(A)
    if A.shape[0] and norms.min() < NORM_FLOOR:
        raise ZeroVector(
            "row {} has norm {:g}".format(int(np.argmin(norms)), norms.min())
        )
    return A / norms[:, None], norms


def _similarity_block(An, Bn):
    S = np.zeros((An.shape[0], Bn.shape[0]))
    for d in range(An.shape[1]):
        S += An[:, d, None] * Bn[None, :, d]
    return S


def cosine_similarity_matrix(A, B, workers=1):
    """
    Pairwise cosine similarity between the rows of A (N x D) and B (M x D).

    Each dot product is accumulated over the feature axis in a fixed
    left-to-right order, so any row of the result is bit-identical whether
    it is computed alone, in a batch, or on another worker thread.
    """
    A = as_tensor2(A, "A")
    B = as_tensor2(B, "B")
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(
            "feature dimensions differ: {} vs {}".format(A.shape[1], B.shape[1])
        )
    An, _ = normalize_rows(A)
    Bn, _ = normalize_rows(B)
    n_workers = worker_count(workers)
    if n_workers <= 1 or A.shape[0] < 2 * n_workers:
        return _similarity_block(An, Bn)
    bounds = np.linspace(0, A.shape[0], n_workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        parts = list(
            pool.map(
                lambda lo_hi: _similarity_block(An[lo_hi[0] : lo_hi[1]], Bn),
                zip(bounds[:-1], bounds[1:]),
            )
        )
    return np.vstack(parts)


def jacobi_eigh(C, tol=1e-15, max_sweeps=100):
    """
    Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
    Returns (eigenvalues, eigenvectors as columns), unsorted.
    """
    A = np.array(C, dtype=np.float64)
    n = A.shape[0]
    V = np.eye(n)
    scale = float(np.sqrt(np.sum(A * A)))
    for _ in range(max_sweeps):
        off = float(np.sqrt(np.sum((A - np.diag(np.diag(A))) ** 2)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                sign = 1.0 if theta >= 0 else -1.0
                t = sign / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p, row_q = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0
                v_p, v_q = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * v_p - s * v_q
                V[:, q] = s * v_p + c * v_q
    return np.diag(A).copy(), V


class PCAResult(NamedTuple):
    components: np.ndarray  # k x D, orthonormal rows
    projections: np.ndarray  # N x k
    mean: np.ndarray  # D
    eigenvalues: np.ndarray  # k, descending


def pca_top_k(X, k):
    """
    Top-k principal components of X (N x D).

    The covariance uses 1/N normalization, so the population variance of
    each projection column equals its eigenvalue. Each component is signed
    so its largest-magnitude entry is nonnegative (first such entry on ties).
    """
    X = as_tensor2(X, "X")
    N, D = X.shape
    if N < 2:
        raise DimensionMismatch("PCA needs at least 2 rows, got {}".format(N))
    if k < 1 or k > min(N, D):
        raise RankDeficient(
            "k={} must be between 1 and min(N, D)={}".format(k, min(N, D))
        )
    mean = X.mean(axis=0)
    Xc = X - mean
    C = Xc.T.dot(Xc) / N
    C = (C + C.T) / 2.0
    eigvals, eigvecs = jacobi_eigh(C)
    order = np.argsort(-eigvals, kind="stable")[:k]
    components = eigvecs[:, order].T.copy()
    for i in range(k):
        j = int(np.argmax(np.abs(components[i])))
        if components[i, j] < 0:
            components[i] = -components[i]
    projections = Xc.dot(components.T)
    return PCAResult(components, projections, mean, eigvals[order])
