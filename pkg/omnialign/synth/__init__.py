# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Seeded synthetic scenes (paired RGB / depth / segmentation) and the file
formats used to store scenes, feature sets and dataset directories.
"""
