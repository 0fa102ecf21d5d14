# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
Procedural scenes: axis-aligned rectangles and discs at distinct depths in
front of a textured background, rendered as a paired RGB image, depth map
and segmentation map.

Each scene is a pure function of (seed, index). RGB values are stored on
the 1/255 grid and depths are float32 values, so a scene written to disk
reads back identical to the generated one.
"""
import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from omnialign.numerics import derive_seed, seeded_rng
from omnialign.synth import formats
from omnialign.utilities import ConfigInvalid, DataMissing

DEFAULT_BACKGROUND_PALETTE = (
    (0.55, 0.50, 0.45),
    (0.35, 0.45, 0.55),
    (0.45, 0.55, 0.40),
    (0.60, 0.60, 0.62),
)

SCENE_DIR_FORMAT = "scene_{:05d}"
RGB_FILE = "rgb.ppm"
DEPTH_FILE = "depth.f32"
SEG_FILE = "seg.pgm"


@dataclass(frozen=True)
class SceneConfig:
    height: int = 64
    width: int = 64
    n_objects_min: int = 1
    n_objects_max: int = 4
    background_palette: Tuple[Tuple[float, float, float], ...] = (
        DEFAULT_BACKGROUND_PALETTE
    )
    seed: int = 7
    noise_std: float = 0.02

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ConfigInvalid("scene size must be at least 1x1")
        if self.n_objects_min < 1:
            raise ConfigInvalid("n_objects_min must be at least 1")
        if self.n_objects_max < self.n_objects_min:
            raise ConfigInvalid("n_objects_max must be >= n_objects_min")
        if self.n_objects_max > 255:
            raise ConfigInvalid("at most 255 objects fit in a segmentation map")
        if not self.background_palette:
            raise ConfigInvalid("background_palette must not be empty")
        for color in self.background_palette:
            if len(color) != 3 or min(color) < 0 or max(color) > 1:
                raise ConfigInvalid(
                    "background colors must be RGB triples in [0, 1], got {}".format(
                        color
                    )
                )
        if self.noise_std < 0:
            raise ConfigInvalid("noise_std must be nonnegative")

    @property
    def n_classes(self):
        return self.n_objects_max - self.n_objects_min + 1


@dataclass
class SceneObject:
    object_id: int
    shape: str  # "rect" or "disc"
    depth: float
    color: Tuple[float, float, float]
    # rect: (top, left, bottom, right) exclusive; disc: (center_y, center_x, radius)
    geometry: Tuple[float, ...]

    def mask(self, height, width):
        yy, xx = np.mgrid[0:height, 0:width]
        if self.shape == "rect":
            top, left, bottom, right = self.geometry
            return (yy >= top) & (yy < bottom) & (xx >= left) & (xx < right)
        cy, cx, r = self.geometry
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


@dataclass
class SceneTriplet:
    rgb: np.ndarray  # H x W x 3
    depth: np.ndarray  # H x W, smaller is nearer
    seg: np.ndarray  # H x W, object ids as floats, background 0
    n_objects: int = 0
    label: int = 0
    objects: Optional[List[SceneObject]] = field(default=None, repr=False)


def _draw_object(rng, object_id, depth, height, width):
    shape = "rect" if rng.next_unit_float() < 0.5 else "disc"
    color = tuple(0.05 + 0.9 * rng.uniform(3))
    side = min(height, width)
    if shape == "rect":
        h = max(1, int(round(rng.uniform_range(side / 8.0, side / 2.0))))
        w = max(1, int(round(rng.uniform_range(side / 8.0, side / 2.0))))
        top = rng.integer(height - min(h, height) + 1)
        left = rng.integer(width - min(w, width) + 1)
        geometry = (top, left, top + h, left + w)
    else:
        r = max(1.0, rng.uniform_range(side / 10.0, side / 4.0))
        cy = rng.integer(height)
        cx = rng.integer(width)
        geometry = (cy, cx, r)
    return SceneObject(object_id, shape, depth, color, geometry)


def _background(rng, cfg):
    color = np.array(cfg.background_palette[rng.integer(len(cfg.background_palette))])
    fy, fx = rng.uniform_range(1.0, 4.0), rng.uniform_range(1.0, 4.0)
    phase = rng.uniform_range(0.0, 2.0 * np.pi)
    yy, xx = np.mgrid[0 : cfg.height, 0 : cfg.width]
    stripes = 0.5 + 0.5 * np.sin(
        2.0 * np.pi * (fy * yy / cfg.height + fx * xx / cfg.width) + phase
    )
    return color[None, None, :] * (0.8 + 0.2 * stripes[:, :, None])


def generate_scene(cfg, index):
    """Render scene `index` of the dataset defined by cfg."""
    rng = seeded_rng(derive_seed(cfg.seed, index))
    span = cfg.n_objects_max - cfg.n_objects_min + 1
    k = cfg.n_objects_min + rng.integer(span)
    # distinct depths: a random ordering plus jitter smaller than the spacing
    order = rng.permutation(k)
    objects = []
    for j in range(k):
        depth = float(np.float32(1.0 + order[j] + 0.5 * rng.next_unit_float()))
        objects.append(_draw_object(rng, j + 1, depth, cfg.height, cfg.width))

    rgb = _background(rng, cfg)
    depth = np.full((cfg.height, cfg.width), float(np.float32(k + 2.0)))
    seg = np.zeros((cfg.height, cfg.width))
    for obj in sorted(objects, key=lambda o: -o.depth):
        m = obj.mask(cfg.height, cfg.width)
        rgb[m] = obj.color
        depth[m] = obj.depth
        seg[m] = obj.object_id

    noise = rng.normal(cfg.height * cfg.width * 3, cfg.noise_std)
    rgb = rgb + noise.reshape(cfg.height, cfg.width, 3)
    rgb = formats.quantize(rgb) / 255.0
    return SceneTriplet(rgb, depth, seg, k, k - cfg.n_objects_min, objects)


def scene_dir(root, index):
    return os.path.join(root, SCENE_DIR_FORMAT.format(index))


def write_scene(path, scene):
    """Write one scene in the dataset layout; returns the written file paths."""
    os.makedirs(path, exist_ok=True)
    paths = [
        os.path.join(path, RGB_FILE),
        os.path.join(path, DEPTH_FILE),
        os.path.join(path, SEG_FILE),
    ]
    formats.write_ppm(paths[0], scene.rgb)
    formats.write_f32raw(paths[1], scene.depth)
    formats.write_pgm(paths[2], scene.seg, scale=1)
    return paths


def read_scene(path, n_objects_min=1):
    if not os.path.isdir(path):
        raise DataMissing("scene directory {} does not exist".format(path))
    for name in (RGB_FILE, DEPTH_FILE, SEG_FILE):
        if not os.path.exists(os.path.join(path, name)):
            raise DataMissing("{} is missing {}".format(path, name))
    rgb = formats.read_ppm(os.path.join(path, RGB_FILE))
    depth = formats.read_f32raw(os.path.join(path, DEPTH_FILE))
    seg = formats.read_pgm(os.path.join(path, SEG_FILE), scale=1)
    n_objects = len(np.unique(seg[seg > 0]))
    # the object count comes from the manifest when one exists; visible ids
    # are a lower bound for scenes with fully hidden objects
    return SceneTriplet(rgb, depth, seg, n_objects, n_objects - n_objects_min)
