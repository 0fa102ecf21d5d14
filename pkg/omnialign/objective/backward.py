# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Batched forward pass from backbone features to the loss, and the exact
reverse pass giving gradients for every trainable parameter and for each
log temperature.
"""
from dataclasses import dataclass
from typing import List

import numpy as np

from omnialign import model
from omnialign.numerics import normalize_rows
from omnialign.objective.losses import (
    PAIRS,
    BatchEmbeddings,
    dense_allowed,
    gather_dense,
    nce_softmax,
    split_taus,
    total_loss,
)


@dataclass
class TrainingBatch:
    z: np.ndarray  # B x 3 x T x D backbone features
    indices: np.ndarray  # B x n_dense token indices, shared by the 3 modalities


@dataclass
class GradientBuffer:
    params: np.ndarray  # aligned with model.trainable_parameters
    log_taus: np.ndarray

    def flat(self):
        return np.concatenate([self.params, self.log_taus])


@dataclass
class _ForwardCache:
    layer_inputs: List[np.ndarray]
    layer_tanh: List[np.ndarray]
    pooled_norms: np.ndarray  # B x 3
    dense_norms: np.ndarray  # B x 3 x n


def _normalize(x):
    flat, norms = normalize_rows(x.reshape(-1, x.shape[-1]))
    return flat.reshape(x.shape), norms.reshape(x.shape[:-1])


def forward_batch(stack, batch):
    """Embeddings for a batch plus the intermediates the reverse pass needs."""
    z = batch.z
    h = model.trainable_input(stack, z)
    inputs, tanhs = [], []
    for layer in stack.trainable_layers:
        inputs.append(h)
        k = np.tanh(h.dot(layer.W) + layer.b)
        tanhs.append(k)
        h = k + h
    s_raw = h
    t_raw = model.teacher_raw(stack, z)

    pooled_s, pooled_norms = _normalize(s_raw.mean(axis=2))
    pooled_t, _ = _normalize(t_raw.mean(axis=2))
    dense_s, dense_norms = _normalize(gather_dense(s_raw, batch.indices))
    dense_t, _ = _normalize(gather_dense(t_raw, batch.indices))
    emb = BatchEmbeddings(pooled_s, pooled_t, dense_s, dense_t)
    return emb, _ForwardCache(inputs, tanhs, pooled_norms, dense_norms)


def batch_loss(stack, batch, cfg, log_taus, check_range=True):
    emb, _ = forward_batch(stack, batch)
    return total_loss(emb, cfg, log_taus, check_range)


def _nce_grads(H1, H2, tau, allowed, coef):
    """Gradients of coef * info_nce(H1, H2, tau) w.r.t. H1, H2 and tau."""
    S = H1.dot(H2.T)
    _, P = nce_softmax(S, tau, allowed)
    G = coef * (P - np.eye(S.shape[0])) / S.shape[0]
    dH1 = G.dot(H2) / tau
    dH2 = G.T.dot(H1) / tau
    dtau = -float(np.sum(G * S)) / (tau * tau)
    return dH1, dH2, dtau


def _symmetric_grads(H1, H2, tau, allowed, coef, dH1, dH2):
    """Accumulate gradients of coef * symmetric InfoNCE into dH1, dH2."""
    back = None if allowed is None else allowed.T
    g1, g2, dt_a = _nce_grads(H1, H2, tau, allowed, 0.5 * coef)
    dH1 += g1
    dH2 += g2
    g2, g1, dt_b = _nce_grads(H2, H1, tau, back, 0.5 * coef)
    dH1 += g1
    dH2 += g2
    return dt_a + dt_b


def _normalize_backward(y, norms, dy):
    return (dy - y * np.sum(y * dy, axis=-1, keepdims=True)) / norms[..., None]


def backward(stack, batch, cfg, log_taus):
    """Loss breakdown and gradients of the total loss."""
    emb, cache = forward_batch(stack, batch)
    losses = total_loss(emb, cfg, log_taus)
    tau_p, tau_d = split_taus(log_taus)
    w = cfg.pooled_weight
    lam = cfg.lambda_anchor

    ps, pt = emb.pooled_student, emb.pooled_teacher
    ds, dt = emb.dense_student, emb.dense_teacher
    B, _, n, D = ds.shape
    d_ps = np.zeros_like(ps)
    d_ds = np.zeros_like(ds)

    dtau_p = 0.0
    for a, b in PAIRS:
        g_a, g_b = np.zeros((B, D)), np.zeros((B, D))
        dtau_p += _symmetric_grads(ps[:, a], ps[:, b], tau_p, None, w / 3.0, g_a, g_b)
        d_ps[:, a] += g_a
        d_ps[:, b] += g_b

    allowed = dense_allowed(B, n, cfg.dense_mask)
    dtau_d = 0.0
    for a, b in PAIRS:
        H1 = ds[:, a].reshape(B * n, D)
        H2 = ds[:, b].reshape(B * n, D)
        g_a, g_b = np.zeros_like(H1), np.zeros_like(H2)
        dtau_d += _symmetric_grads(H1, H2, tau_d, allowed, (1.0 - w) / 3.0, g_a, g_b)
        d_ds[:, a] += g_a.reshape(B, n, D)
        d_ds[:, b] += g_b.reshape(B, n, D)

    # anchor: d/dh (1 - <h, h*>) = -h*
    d_ps -= (lam * w / (3.0 * B)) * pt
    d_ds -= (lam * (1.0 - w) / (3.0 * B * n)) * dt

    d_pooled_raw = _normalize_backward(ps, cache.pooled_norms, d_ps)
    d_dense_raw = _normalize_backward(ds, cache.dense_norms, d_ds)

    s_shape = cache.layer_inputs[0].shape
    T = s_shape[2]
    dh = np.repeat(d_pooled_raw[:, :, None, :] / T, T, axis=2)
    for bi in range(B):
        # indices within a scene are distinct, so fancy += does not drop updates
        dh[bi][:, batch.indices[bi]] += d_dense_raw[bi]

    layer_grads = []
    for layer, h_in, k in zip(
        reversed(stack.trainable_layers),
        reversed(cache.layer_inputs),
        reversed(cache.layer_tanh),
    ):
        da = (dh * (1.0 - k * k)).reshape(-1, D)
        rows = h_in.reshape(-1, D)
        dW = rows.T.dot(da)
        db = da.sum(axis=0)
        dh = dh + da.dot(layer.W.T).reshape(dh.shape)
        layer_grads.append((dW, db))
    layer_grads.reverse()
    params = np.concatenate(
        [np.concatenate([dW.ravel(), db]) for dW, db in layer_grads]
    )

    d_log_taus = np.zeros(len(log_taus))
    d_log_taus[0] += tau_p * dtau_p
    d_log_taus[-1] += tau_d * dtau_d
    return losses, GradientBuffer(params, d_log_taus)
