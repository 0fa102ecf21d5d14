#!/usr/bin/env python
# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Small file-to-file commands:

    omnialign colorize --rgb image.ppm --raw depth.f32 --out colorized.ppm
    omnialign pca --checkpoint ckpt --scene data/scene_00300 --out-prefix pca/scene

`pca` writes six images, <prefix>_{frozen,adapted}_{rgb,depth,seg}.ppm,
colored by the top three principal components of the frozen-head and
adapted-head dense features of the scene.
"""
from __future__ import print_function

import os
import sys

from omnialign import config, evalkit, imaging, model
from omnialign.imaging.colorization import COLORIZATIONS
from omnialign.numerics import seeded_rng
from omnialign.pipeline import ViewSettings, backbone_features, scene_views
from omnialign.synth import formats, scenes
from omnialign.utilities import (
    _ArgumentParser,
    add_standard_args,
    run_command,
)

MODALITY_NAMES = ("rgb", "depth", "seg")


def read_scalar_map(path):
    """A depth or segmentation map from .f32 (raw floats) or .pgm (raw levels)."""
    if path.endswith(".pgm"):
        return formats.read_pgm(path, scale=1)
    return formats.read_f32raw(path)


###############
# colorize


def define_colorize_arguments(argparser):
    add_standard_args(argparser)
    argparser.add_argument("--rgb", required=True, help="RGB image (PPM)")
    argparser.add_argument(
        "--raw", required=True, help="Depth or segmentation map (.f32 or .pgm)"
    )
    argparser.add_argument("--out", required=True, help="Output image (PPM)")
    argparser.add_argument("--bins", type=int, default=64, help="Number of bins (default: 64)")
    argparser.add_argument("--kernel", type=int, default=5, help="Smoothing kernel size (default: 5)")
    argparser.add_argument(
        "--colormap",
        choices=COLORIZATIONS,
        default="natural",
        help="Colorization method (default: natural)",
    )


def colorize_main(args=None):
    if args is None:
        args = sys.argv[1:]
    parser = _ArgumentParser(
        prog="omnialign colorize",
        description="Render a depth or segmentation map with the colors of its RGB image.",
    )
    define_colorize_arguments(parser)
    options = parser.parse_args(args)

    def body(options):
        rgb = formats.read_ppm(options.rgb)
        raw = read_scalar_map(options.raw)
        out = imaging.colorize(raw, rgb, options.colormap, options.bins, options.kernel)
        formats.write_ppm(options.out, out)
        if options.verbose:
            print("Wrote {}.".format(options.out))

    return run_command(body, options)


###############
# pca


def pca_images(ckpt, cfg, scene):
    """(frozen images, adapted images), one per modality."""
    stack = ckpt.stack
    settings = ViewSettings(cfg, training=False)
    views, _ = scene_views(scene, settings, seeded_rng(0))
    emb = model.heads_forward(stack, backbone_features(stack, views))
    side = stack.cfg.image_size // stack.cfg.patch
    grid = (side, side)
    upscale = stack.cfg.patch
    frozen = evalkit.pca_visualize(list(emb.dense_teacher), grid, upscale)
    adapted = evalkit.pca_visualize(list(emb.dense_student), grid, upscale)
    return frozen, adapted


def define_pca_arguments(argparser):
    add_standard_args(argparser)
    argparser.add_argument("--checkpoint", required=True, help="Trained checkpoint")
    argparser.add_argument(
        "--scene", required=True, help="Scene directory (rgb.ppm, depth.f32, seg.pgm)"
    )
    argparser.add_argument(
        "--out-prefix", required=True, help="Prefix for the six output PPM files"
    )


def pca_main(args=None):
    if args is None:
        args = sys.argv[1:]
    parser = _ArgumentParser(
        prog="omnialign pca",
        description="PCA images of frozen and adapted dense features for one scene.",
    )
    define_pca_arguments(parser)
    options = parser.parse_args(args)

    def body(options):
        ckpt = model.load_checkpoint(options.checkpoint)
        cfg = config.RunConfig.from_text(ckpt.config_text, source="checkpoint")
        scene = scenes.read_scene(options.scene, cfg["data.n_objects_min"])
        frozen, adapted = pca_images(ckpt, cfg, scene)
        parent = os.path.dirname(options.out_prefix)
        if parent:
            os.makedirs(parent, exist_ok=True)
        for kind, images in (("frozen", frozen), ("adapted", adapted)):
            for name, img in zip(MODALITY_NAMES, images):
                path = "{}_{}_{}.ppm".format(options.out_prefix, kind, name)
                formats.write_ppm(path, img)
                if options.verbose:
                    print("Wrote {}.".format(path))

    return run_command(body, options)
