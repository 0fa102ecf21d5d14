# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
OmniAlign aligns the embeddings of an image encoder across input
modalities (RGB, depth, segmentation) while anchoring them to the
frozen encoder's own embeddings.

The pieces, from the bottom up:

    numerics      seeded random streams, fixed-order cosine similarity, PCA
    imaging       crop/resize, photometric augmentation, colorization, mixup
    synth         procedural scenes and the image/feature file formats
    model         frozen backbone, frozen teacher head, trainable student head
    objective     InfoNCE alignment and anchoring losses and their gradients
    optim, train  AdamW and the deterministic training loop
    evalkit       retrieval, diagnostics, k-NN, PCK@0 and PCA visualization

The command-line tools (`omnialign gen-data|colorize|train|eval|sweep|pca`)
are dispatched by omnialign.main.
"""
from .version import __version__
