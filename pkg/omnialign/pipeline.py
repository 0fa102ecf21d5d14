# Copyright (c) 2025 The OmniAlign Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

"""
The per-scene data pipeline shared by training and evaluation.

For one scene, the model sees three inputs (rgb, depth, seg):

    rgb_aug = photometric_augment(rgb)              training only
    x_d     = colorize(depth, rgb_aug)
    x_s     = colorize(seg, rgb_aug)
    x_d     = mixup(x_d, rgb_aug, alpha_d)          alpha ~ U[0, alpha_max]
    x_s     = mixup(x_s, rgb_aug, alpha_s)
    inputs  = normalize_imagenet(rgb_aug, x_d, x_s)

Scenes are center-cropped and resized to the model input size first.
Random draws for one scene come from one stream, in this order: the four
augmentation scalars, alpha_s, alpha_d, then anything the caller draws
(dense token indices during training).
"""
import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from omnialign import imaging, model
from omnialign.synth import scenes
from omnialign.utilities import DataMissing, worker_count

MANIFEST_FILE = "manifest.json"


class SceneSource(object):
    """
    Scenes by index, either generated in memory or read from a dataset
    directory written by `omnialign gen-data`. Loaded scenes are cached.
    """

    def __init__(self, scene_cfg, dataset=""):
        self.scene_cfg = scene_cfg
        self.dataset = dataset
        self._cache = {}
        self._lock = threading.Lock()
        self._object_counts = None
        if dataset:
            if not os.path.isdir(dataset):
                raise DataMissing("dataset directory {} does not exist".format(dataset))
            manifest_path = os.path.join(dataset, MANIFEST_FILE)
            if os.path.exists(manifest_path):
                with open(manifest_path) as f:
                    manifest = json.load(f)
                self._object_counts = {
                    int(s["index"]): int(s["n_objects"]) for s in manifest["scenes"]
                }

    @classmethod
    def from_run_config(cls, cfg):
        return cls(cfg.scene_config(), cfg["data.dataset"])

    def _load(self, index):
        if not self.dataset:
            return scenes.generate_scene(self.scene_cfg, index)
        path = scenes.scene_dir(self.dataset, index)
        scene = scenes.read_scene(path, self.scene_cfg.n_objects_min)
        if self._object_counts is not None:
            if index not in self._object_counts:
                raise DataMissing("scene {} is not in the dataset manifest".format(index))
            scene.n_objects = self._object_counts[index]
            scene.label = scene.n_objects - self.scene_cfg.n_objects_min
        return scene

    def __getitem__(self, index):
        index = int(index)
        with self._lock:
            if index in self._cache:
                return self._cache[index]
        scene = self._load(index)
        with self._lock:
            self._cache[index] = scene
        return scene

    def label(self, index):
        return self[index].label


def prepare_scene(scene, image_size):
    """Center crop to a square, then resize to image_size (bilinear for rgb)."""
    rgb = imaging.center_crop_square(scene.rgb)
    depth = imaging.center_crop_square(scene.depth)
    seg = imaging.center_crop_square(scene.seg)
    if rgb.shape[0] != image_size:
        rgb = np.clip(imaging.resize_bilinear(rgb, image_size, image_size), 0.0, 1.0)
        depth = imaging.resize_nearest(depth, image_size, image_size)
        seg = imaging.resize_nearest(seg, image_size, image_size)
    return rgb, depth, seg


class ViewSettings(object):
    """Pipeline settings taken from a RunConfig."""

    def __init__(self, cfg, training=True):
        self.image_size = cfg["model.image_size"]
        self.colorization = cfg["data.colorization"]
        self.bins = cfg["data.bins"]
        self.kernel = cfg["data.kernel"]
        if training and cfg["train.photometric"]:
            self.augment = cfg.augment_config()
        else:
            self.augment = imaging.AugmentConfig.identity()
        self.alpha_max = cfg["train.alpha_max"] if training else 0.0


def scene_views(scene, settings, rng):
    """
    Normalized model inputs for one scene, shape (3, S, S, 3) in modality
    order rgb, depth, seg; also returns the unnormalized images.
    """
    rgb, depth, seg = prepare_scene(scene, settings.image_size)
    rgb_aug = imaging.photometric_augment(rgb, settings.augment, rng)
    alpha_s = imaging.sample_alpha(rng, settings.alpha_max)
    alpha_d = imaging.sample_alpha(rng, settings.alpha_max)
    x_d = imaging.colorize(
        depth, rgb_aug, settings.colorization, settings.bins, settings.kernel
    )
    x_s = imaging.colorize(
        seg, rgb_aug, settings.colorization, settings.bins, settings.kernel
    )
    x_d = imaging.modality_mixup(x_d, rgb_aug, alpha_d)
    x_s = imaging.modality_mixup(x_s, rgb_aug, alpha_s)
    images = np.stack([rgb_aug, x_d, x_s])
    normalized = np.stack([imaging.normalize_imagenet(x) for x in images])
    return normalized, images


def backbone_features(stack, views):
    """z for each of the three views: (3, T, D)."""
    return np.stack([model.frozen_forward(stack, v) for v in views])


def map_ordered(func, items, workers=1):
    """func over items on up to `workers` threads; results keep item order."""
    n = worker_count(workers)
    if n <= 1 or len(items) < 2:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))
