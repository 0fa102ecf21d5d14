# Copyright (c) 2015-2019 The Switch Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

# Modifications copyright (c) 2025 The OmniAlign Authors. All rights reserved.

"""Script to handle omnialign <cmd> calls from the command line."""
from __future__ import print_function

import os
import sys

import omnialign


def main():
    cmds = ["gen-data", "colorize", "train", "eval", "sweep", "pca", "test", "--version"]
    if len(sys.argv) >= 2 and sys.argv[1] in cmds:
        # adjust the argument list to make it look like someone ran "python -m <module>" directly
        cmd = sys.argv[1]
        sys.argv[0] += " " + cmd
        del sys.argv[1]
        if cmd == "--version":
            print("OmniAlign version " + omnialign.__version__)
            return 0
        if cmd == "gen-data":
            from .gen_data import main
        elif cmd == "colorize":
            from .tools import colorize_main as main
        elif cmd == "train":
            from .train import main
        elif cmd == "eval":
            from .evaluate import main
        elif cmd == "sweep":
            from .sweep import main
        elif cmd == "pca":
            from .tools import pca_main as main
        elif cmd == "test":
            from .test import main
        return main()
    else:
        print(
            "Usage: {} {{{}}} ...".format(
                os.path.basename(sys.argv[0]), ", ".join(cmds)
            )
        )
        print("Use one of these commands with --help for more information.")
        return 2


if __name__ == "__main__":
    sys.exit(main())
