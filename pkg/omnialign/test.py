# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""The `omnialign test` command: run the test suite with pytest."""
import os
import sys


def main(args=None):
    import pytest

    if args is None:
        args = sys.argv[1:]
    tests_dir = os.path.join(os.path.dirname(os.path.dirname(__file__)), "tests")
    package_dir = os.path.dirname(__file__)
    return pytest.main(
        ["--doctest-modules", package_dir, tests_dir] + list(args)
    )


if __name__ == "__main__":
    sys.exit(main())
