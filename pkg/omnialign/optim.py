# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
AdamW on a flat parameter vector.

The optimized vector is the trainable parameters followed by the log
temperature slots; weight decay is masked off for the temperatures.
"""
from dataclasses import dataclass, field

import numpy as np

from omnialign.utilities import ConfigInvalid, LengthMismatch


@dataclass
class AdamWState:
    """
    Arguments:
        lr: learning rate (default: 1e-4)
        beta1, beta2: running-average coefficients for the gradient and its
            square (default: 0.9, 0.999)
        eps: term added to the denominator for numerical stability
        weight_decay: decoupled weight decay coefficient (default: 0.01)
        decay_mask: 1.0 where weight decay applies, 0.0 where it does not
    """

    size: int
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    t: int = 0
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)
    decay_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.lr < 0 or self.weight_decay < 0 or self.eps <= 0:
            raise ConfigInvalid("lr and weight_decay must be >= 0 and eps > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigInvalid("beta1 and beta2 must be in [0, 1)")
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)
        if self.decay_mask is None:
            self.decay_mask = np.ones(self.size)

    @classmethod
    def for_parameters(cls, n_params, n_taus, **hyper):
        """State for n_params decayed parameters followed by n_taus exempt slots."""
        mask = np.concatenate([np.ones(n_params), np.zeros(n_taus)])
        return cls(size=n_params + n_taus, decay_mask=mask, **hyper)


def adamw_step(state, params, grads):
    """
    One AdamW update; returns the new parameter vector and advances state.

    >>> s = AdamWState(size=1, lr=0.1, weight_decay=0.0)
    >>> round(float(adamw_step(s, np.array([1.0]), np.array([1.0]))[0]), 6)
    0.9
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != (state.size,) or grads.shape != (state.size,):
        raise LengthMismatch(
            "optimizer holds {} slots, got params {} and grads {}".format(
                state.size, params.shape, grads.shape
            )
        )
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    return (
        params
        - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        - state.lr * state.weight_decay * state.decay_mask * params
    )


def clip_log_taus(log_taus, tau_min, tau_max):
    return np.clip(log_taus, np.log(tau_min), np.log(tau_max))
