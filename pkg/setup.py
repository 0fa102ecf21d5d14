"""Setup script for OmniAlign.

Use "pip install --upgrade ." to install a copy in the site packages directory.

Use "pip install --upgrade --editable ." to install OmniAlign to be run from its
current location.

Optional dependencies can be added during the initial install or later by
running a command like this:
pip install --upgrade --editable .[dev]

Use "pip uninstall omnialign" to uninstall omnialign from your system.
"""

import os
from setuptools import setup, find_packages

# Get the version number. Strategy #3 from https://packaging.python.org/single_source_version/
version_path = os.path.join(os.path.dirname(__file__), "omnialign", "version.py")
version = {}
with open(version_path) as f:
    exec(f.read(), version)
__version__ = version["__version__"]


def read(*rnames):
    return open(os.path.join(os.path.dirname(__file__), *rnames)).read()


setup(
    name="omnialign",
    version=__version__,
    license="Apache License, Version 2.0",
    platforms=["any"],
    description="Cross-modal alignment of frozen image encoders at desk scale",
    long_description=read("README.md"),
    long_description_content_type="text/markdown",
    classifiers=[
        # from https://pypi.org/classifiers/
        "Development Status :: 3 - Alpha",
        "Environment :: Console",
        "Intended Audience :: Education",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: Apache Software License",
        "Natural Language :: English",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Topic :: Scientific/Engineering :: Image Recognition",
    ],
    packages=find_packages(include=["omnialign", "omnialign.*"]),
    keywords=[
        "contrastive learning",
        "InfoNCE",
        "cross-modal retrieval",
        "distillation",
        "depth",
        "segmentation",
    ],
    python_requires=">=3.7",
    install_requires=[
        "numpy",  # all array computation
        "pandas",  # report tables and the sweep frontier
    ],
    extras_require={
        # packages used for testing and debugging
        "dev": ["pytest", "ipdb"],
    },
    entry_points={"console_scripts": ["omnialign = omnialign.main:main"]},
)
