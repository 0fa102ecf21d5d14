# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

import numpy as np
import pytest

from omnialign import model
from omnialign.model import ModelConfig
from omnialign.numerics import normalize_rows, seeded_rng
from omnialign.objective import (
    LossConfig,
    TrainingBatch,
    align_loss,
    anchor_loss,
    backward,
    batch_loss,
    dense_align_loss,
    grad_check,
    info_nce,
    sample_dense_indices,
    symmetric_info_nce,
    total_loss,
)
from omnialign.objective.losses import PAIRS, BatchEmbeddings
from omnialign.utilities import (
    BatchTooSmall,
    ConfigInvalid,
    DimensionMismatch,
    TauOutOfRange,
    TooFewTokens,
)


def unit_rows(seed, *shape):
    x = seeded_rng(seed).normal(int(np.prod(shape))).reshape(-1, shape[-1])
    return normalize_rows(x)[0].reshape(shape)


def brute_info_nce(H1, H2, tau, allowed=None):
    n = H1.shape[0]
    total = 0.0
    for i in range(n):
        denom = 0.0
        for j in range(n):
            if allowed is None or allowed[i, j]:
                denom += np.exp(np.dot(H1[i], H2[j]) / tau)
        total -= np.log(np.exp(np.dot(H1[i], H2[i]) / tau) / denom)
    return total / n


class TestInfoNCE:
    def test_equal_similarities(self):
        H = np.array([[1.0, 0.0], [1.0, 0.0]])
        assert info_nce(H, H, 1.0) == pytest.approx(np.log(2.0), abs=1e-12)

    def test_orthonormal_pair(self):
        H = np.eye(2)
        assert info_nce(H, H, 1.0) == pytest.approx(np.log1p(np.exp(-1.0)), abs=1e-12)

    def test_monotone_in_tau(self):
        H = np.eye(3)
        losses = [info_nce(H, H, tau) for tau in (0.05, 0.1, 0.5, 1.0, 5.0)]
        assert all(a < b for a, b in zip(losses, losses[1:]))

    def test_symmetric(self):
        A, B = unit_rows(1, 5, 4), unit_rows(2, 5, 4)
        assert symmetric_info_nce(A, B, 0.2) == symmetric_info_nce(B, A, 0.2)
        assert symmetric_info_nce(A, B, 0.2) == pytest.approx(
            0.5 * (info_nce(A, B, 0.2) + info_nce(B, A, 0.2))
        )

    def test_matches_brute_force(self):
        A, B = unit_rows(3, 3, 2), unit_rows(4, 3, 2)
        for tau in (0.07, 0.3, 2.0):
            assert info_nce(A, B, tau) == pytest.approx(
                brute_info_nce(A, B, tau), rel=1e-10
            )

    def test_large_logits_are_stable(self):
        H = np.eye(4)
        loss = info_nce(H, H, 1e-3)
        assert np.isfinite(loss) and loss < 1e-12

    def test_errors(self):
        A = unit_rows(5, 4, 3)
        with pytest.raises(DimensionMismatch):
            info_nce(A, A[:3], 0.1)
        with pytest.raises(BatchTooSmall):
            info_nce(A[:1], A[:1], 0.1)
        with pytest.raises(TauOutOfRange):
            info_nce(A, A, 1e-4)
        with pytest.raises(TauOutOfRange):
            info_nce(A, A, 1000.0)

    @pytest.mark.parametrize("tau", [1e-3, 0.07, 1.0, 100.0])
    def test_bounded_by_similarity_spread(self, tau):
        for seed in range(20):
            H1, H2 = unit_rows(seed, 6, 4), unit_rows(100 + seed, 6, 4)
            S = H1.dot(H2.T)
            loss = info_nce(H1, H2, tau)
            assert 0.0 <= loss <= np.log(6) + (S.max() - S.min()) / tau + 1e-9


def brute_align(h_r, h_s, h_d, tau):
    terms = [
        0.5 * (brute_info_nce(a, b, tau) + brute_info_nce(b, a, tau))
        for a, b in ((h_r, h_s), (h_s, h_d), (h_d, h_r))
    ]
    return (terms[0] + terms[1] + terms[2]) / 3.0


class TestAlignLoss:
    def test_identical_rows(self):
        h = np.tile([[0.6, 0.8, 0.0]], (4, 1))
        assert align_loss(h, h, h, 0.3) == pytest.approx(np.log(4), abs=1e-12)

    def test_any_modality_order(self):
        h = [unit_rows(seed, 5, 4) for seed in (1, 2, 3)]
        expected = align_loss(*h, 0.2)
        for order in [(0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]:
            got = align_loss(*[h[i] for i in order], 0.2)
            assert got == pytest.approx(expected, abs=1e-12)

    def test_matches_three_term_average(self):
        for seed in range(5):
            h_r, h_s, h_d = (unit_rows(10 * seed + k, 4, 3) for k in range(3))
            assert align_loss(h_r, h_s, h_d, 0.5) == pytest.approx(
                brute_align(h_r, h_s, h_d, 0.5), abs=1e-12
            )

    def test_rotation_invariant(self):
        h = [unit_rows(seed, 6, 5) for seed in (4, 5, 6)]
        Q, _ = np.linalg.qr(seeded_rng(9).normal(25).reshape(5, 5))
        assert align_loss(*[x.dot(Q) for x in h], 0.1) == pytest.approx(
            align_loss(*h, 0.1), abs=1e-12
        )

    def test_pair_terms(self):
        h = [unit_rows(seed, 4, 3) for seed in (7, 8, 9)]
        loss, terms = align_loss(*h, 0.5, with_terms=True)
        h_r, h_s, h_d = h
        assert terms[0] == symmetric_info_nce(h_r, h_s, 0.5)
        assert terms[1] == symmetric_info_nce(h_s, h_d, 0.5)
        assert terms[2] == symmetric_info_nce(h_d, h_r, 0.5)
        assert loss == align_loss(*h, 0.5)


class TestAnchor:
    def test_values(self):
        h = np.array([[1.0, 0.0]])
        assert anchor_loss(h, h) == 0.0
        assert anchor_loss(h, np.array([[0.0, 1.0]])) == 1.0
        assert anchor_loss(h, -h) == 2.0

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            anchor_loss(np.ones((2, 3)), np.ones((3, 3)))


class TestDense:
    def setup_method(self):
        self.B, self.T, self.n, self.D = 3, 6, 4, 8
        self.dense = unit_rows(6, self.B, 3, self.T, self.D)
        rng = seeded_rng(7)
        self.indices = np.stack(
            [sample_dense_indices(rng, self.T, self.n) for _ in range(self.B)]
        )

    def oracle(self, tau, masked=True):
        B, n = self.B, self.n
        scene = np.repeat(np.arange(B), n)
        allowed = (scene[:, None] != scene[None, :]) | np.eye(B * n, dtype=bool)
        if not masked:
            allowed = None
        tokens = [
            np.stack([self.dense[b, m, self.indices[b]] for b in range(B)]).reshape(
                B * n, self.D
            )
            for m in range(3)
        ]
        terms = []
        for a, b in PAIRS:
            back = None if allowed is None else allowed.T
            terms.append(
                0.5
                * (
                    brute_info_nce(tokens[a], tokens[b], tau, allowed)
                    + brute_info_nce(tokens[b], tokens[a], tau, back)
                )
            )
        return sum(terms) / 3.0

    def test_masked_matches_oracle(self):
        assert dense_align_loss(self.dense, self.indices, 0.1) == pytest.approx(
            self.oracle(0.1), abs=1e-10
        )

    def test_unmasked_matches_oracle(self):
        got = dense_align_loss(self.dense, self.indices, 0.1, masked=False)
        assert got == pytest.approx(self.oracle(0.1, masked=False), abs=1e-10)
        assert got != pytest.approx(self.oracle(0.1), abs=1e-6)

    def test_single_scene_masked_is_zero(self):
        assert dense_align_loss(self.dense[:1], self.indices[:1], 0.1) == 0.0

    def test_sample_dense_indices(self):
        ix = sample_dense_indices(seeded_rng(1), 16, 16)
        assert sorted(ix.tolist()) == list(range(16))
        with pytest.raises(TooFewTokens):
            sample_dense_indices(seeded_rng(1), 4, 5)


class TestTotalLoss:
    def test_reassembly(self):
        emb = BatchEmbeddings(
            pooled_student=unit_rows(1, 4, 3, 8),
            pooled_teacher=unit_rows(2, 4, 3, 8),
            dense_student=unit_rows(3, 4, 3, 5, 8),
            dense_teacher=unit_rows(4, 4, 3, 5, 8),
        )
        cfg = LossConfig(lambda_anchor=2.5, n_dense=5, pooled_weight=0.3)
        losses = total_loss(emb, cfg, cfg.initial_log_taus())
        assert losses.total == pytest.approx(losses.reassembled(), rel=1e-14)
        assert losses.align == pytest.approx(
            0.3 * losses.align_pooled + 0.7 * losses.align_dense
        )
        assert losses.anchor == pytest.approx(
            0.3 * losses.anchor_pooled + 0.7 * losses.anchor_dense
        )
        assert len(losses.pair_pooled) == 3 and len(losses.pair_dense) == 3
        assert set(losses.as_dict()) >= {"total", "align", "anchor"}
        ps = emb.pooled_student
        tau = float(np.exp(cfg.initial_log_taus()[0]))
        assert losses.align_pooled == align_loss(ps[:, 0], ps[:, 2], ps[:, 1], tau)

    def test_config_errors(self):
        with pytest.raises(ConfigInvalid):
            LossConfig(lambda_anchor=-1.0)
        with pytest.raises(ConfigInvalid):
            LossConfig(tau_init=1000.0)
        with pytest.raises(ConfigInvalid):
            LossConfig(pooled_weight=1.5)
        assert len(LossConfig(shared_tau=False).initial_log_taus()) == 2


def gradient_setup(adapter_on_top=False, perturb=True, **loss_kwargs):
    cfg = ModelConfig(
        patch=4,
        embed_dim=8,
        frozen_layers=2,
        adapter_layers=2,
        image_size=8,
        adapter_on_top=adapter_on_top,
    )
    stack = model.init_stack(cfg)
    if perturb:
        flat = model.trainable_parameters(stack)
        model.set_trainable_parameters(
            stack, flat + 0.2 * seeded_rng(11).normal(flat.size)
        )
    loss_cfg = LossConfig(n_dense=4, tau_init=0.5, **loss_kwargs)
    rng = seeded_rng(12)
    z = rng.normal(2 * 3 * cfg.n_tokens * 8).reshape(2, 3, cfg.n_tokens, 8)
    indices = np.stack([rng.permutation(cfg.n_tokens) for _ in range(2)])
    return stack, TrainingBatch(z, indices), loss_cfg


class TestGradients:
    @pytest.mark.parametrize(
        "adapter_on_top,loss_kwargs",
        [
            (False, {}),
            (False, {"shared_tau": False}),
            (False, {"dense_mask": False}),
            (False, {"pooled_weight": 0.2, "lambda_anchor": 1.0}),
            (True, {}),
        ],
    )
    def test_matches_finite_differences(self, adapter_on_top, loss_kwargs):
        stack, batch, cfg = gradient_setup(adapter_on_top, **loss_kwargs)
        log_taus = cfg.initial_log_taus() + np.array([0.1, -0.2][: cfg.n_taus])
        report = grad_check(stack, batch, cfg, log_taus)
        assert report.analytic.size == model.n_trainable(stack) + cfg.n_taus
        assert report.max_error < 1e-4, report.summary()

    def test_backward_reports_forward_loss(self):
        stack, batch, cfg = gradient_setup()
        log_taus = cfg.initial_log_taus()
        losses, _ = backward(stack, batch, cfg, log_taus)
        assert losses.total == batch_loss(stack, batch, cfg, log_taus).total

    def test_wrong_gradient_is_caught(self):
        stack, batch, cfg = gradient_setup()
        log_taus = cfg.initial_log_taus()
        _, grads = backward(stack, batch, cfg, log_taus)
        wrong = grads.flat().copy()
        wrong[3] += 1.0
        report = grad_check(stack, batch, cfg, log_taus, analytic=wrong)
        assert not report.passed
        assert 3 in report.failed_indices

    def anchor_gradient(self, stack, batch, lambda_anchor, **loss_kwargs):
        cfg = LossConfig(n_dense=4, tau_init=0.5, lambda_anchor=lambda_anchor, **loss_kwargs)
        _, grads = backward(stack, batch, cfg, cfg.initial_log_taus())
        return grads.flat()

    @pytest.mark.parametrize("adapter_on_top", [False, True])
    def test_anchor_gradient_vanishes_at_teacher(self, adapter_on_top):
        stack, batch, _ = gradient_setup(adapter_on_top, perturb=False)
        plain = self.anchor_gradient(stack, batch, 0.0)
        anchored = self.anchor_gradient(stack, batch, 10.0)
        np.testing.assert_allclose(anchored, plain, rtol=0, atol=1e-10)

    def test_anchor_gradient_linear_in_lambda(self):
        stack, batch, _ = gradient_setup(pooled_weight=0.3)
        g0 = self.anchor_gradient(stack, batch, 0.0, pooled_weight=0.3)
        g1 = self.anchor_gradient(stack, batch, 1.5, pooled_weight=0.3)
        g2 = self.anchor_gradient(stack, batch, 3.0, pooled_weight=0.3)
        assert np.abs(g1 - g0).max() > 1e-3
        np.testing.assert_allclose(g2 - g0, 2.0 * (g1 - g0), rtol=1e-8, atol=1e-10)

    def test_step_size_sweep(self):
        stack, batch, cfg = gradient_setup()
        log_taus = cfg.initial_log_taus()
        _, grads = backward(stack, batch, cfg, log_taus)
        errors = {
            h: grad_check(stack, batch, cfg, log_taus, h=h, analytic=grads.flat()).max_error
            for h in (1e-4, 1e-5, 1e-6)
        }
        assert errors[1e-5] <= errors[1e-4] + 1e-6, errors
        assert all(err < 1e-3 for err in errors.values()), errors
