# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
This file should only include the version. Do not import any packages or
modules here because this file needs to be executed before OmniAlign is
installed and executed in environments that don't have any dependencies
installed.
"""
__version__ = "0.1.0"
