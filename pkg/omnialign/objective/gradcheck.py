# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Central finite-difference check of the analytic gradients. Slots are
ordered like GradientBuffer.flat(): trainable parameters, then the log
temperatures.
"""
from dataclasses import dataclass

import numpy as np

from omnialign import model
from omnialign.objective.backward import backward, batch_loss

RELATIVE_FLOOR = 1e-4


@dataclass
class GradCheckReport:
    analytic: np.ndarray
    numeric: np.ndarray
    rel_errors: np.ndarray
    tolerance: float
    h: float

    @property
    def max_error(self):
        return float(self.rel_errors.max()) if self.rel_errors.size else 0.0

    @property
    def worst_index(self):
        return int(np.argmax(self.rel_errors))

    @property
    def failed_indices(self):
        return np.flatnonzero(self.rel_errors >= self.tolerance)

    @property
    def passed(self):
        return self.max_error < self.tolerance

    def summary(self):
        return "max relative error {:.3e} at slot {} ({}; tolerance {:g}, h {:g})".format(
            self.max_error,
            self.worst_index,
            "pass" if self.passed else "FAIL",
            self.tolerance,
            self.h,
        )


def relative_errors(analytic, numeric, floor=RELATIVE_FLOOR):
    """
    |a - n| / max(|a|, |n|, floor)

    >>> relative_errors(np.array([1.0, 0.0]), np.array([1.1, 0.0])).round(6).tolist()
    [0.090909, 0.0]
    """
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def numeric_gradient(stack, batch, cfg, log_taus, h=1e-5):
    stack = stack.copy()
    theta = model.trainable_parameters(stack)
    log_taus = np.array(log_taus, dtype=np.float64)
    n_params = theta.size

    def loss_at(i, delta):
        if i < n_params:
            shifted = theta.copy()
            shifted[i] += delta
            model.set_trainable_parameters(stack, shifted)
            taus = log_taus
        else:
            model.set_trainable_parameters(stack, theta)
            taus = log_taus.copy()
            taus[i - n_params] += delta
        return batch_loss(stack, batch, cfg, taus, check_range=False).total

    grads = np.zeros(n_params + log_taus.size)
    for i in range(grads.size):
        grads[i] = (loss_at(i, h) - loss_at(i, -h)) / (2.0 * h)
    return grads


def grad_check(stack, batch, cfg, log_taus, h=1e-5, tolerance=1e-4, analytic=None):
    """
    Compare analytic gradients (from backward, or the `analytic` vector
    when given) against central differences.
    """
    if analytic is None:
        _, grads = backward(stack, batch, cfg, log_taus)
        analytic = grads.flat()
    numeric = numeric_gradient(stack, batch, cfg, log_taus, h)
    return GradCheckReport(
        analytic=np.asarray(analytic, dtype=np.float64),
        numeric=numeric,
        rel_errors=relative_errors(analytic, numeric),
        tolerance=tolerance,
        h=h,
    )
