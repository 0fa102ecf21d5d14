# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Training objective: InfoNCE alignment between modalities, anchoring to
the frozen teacher, the reverse pass, and a finite-difference checker.
"""
from omnialign.objective.losses import (
    LossBreakdown,
    LossConfig,
    align_loss,
    anchor_loss,
    dense_align_loss,
    info_nce,
    sample_dense_indices,
    symmetric_info_nce,
    total_loss,
)
from omnialign.objective.backward import (
    GradientBuffer,
    TrainingBatch,
    backward,
    batch_loss,
    forward_batch,
)
from omnialign.objective.gradcheck import GradCheckReport, grad_check
