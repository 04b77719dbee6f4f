"""Label-preserving stochastic augmentations and materialized augmented sets."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dataset import IMAGE_SIZE, LabeledDataset, LabeledImage

ASPECT_RANGE = (3.0 / 4.0, 4.0 / 3.0)


@dataclass(frozen=True)
class AugmentationPolicy:
    """Random resized crop, horizontal flip and color jitter.

    Saturation and hue jitter are carried for completeness but act as the
    identity on single-channel images.
    """

    crop_min_area_fraction: float = 0.8
    hflip_probability: float = 0.5
    jitter_probability: float = 0.8
    jitter_brightness: float = 0.4
    jitter_contrast: float = 0.4
    jitter_saturation: float = 0.4
    jitter_hue: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.crop_min_area_fraction <= 1.0:
            raise ValueError("crop_min_area_fraction must lie in (0, 1]")
        for name in ("hflip_probability", "jitter_probability"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("jitter_brightness", "jitter_contrast", "jitter_saturation"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if not 0.0 <= self.jitter_hue <= 0.5:
            raise ValueError("jitter_hue must lie in [0, 0.5]")

    @classmethod
    def identity(cls) -> "AugmentationPolicy":
        return cls(crop_min_area_fraction=1.0, hflip_probability=0.0, jitter_probability=0.0)


@dataclass(frozen=True)
class AugmentationDraw:
    area_fraction: float
    aspect: float
    top: int
    left: int
    height: int
    width: int
    flip: bool
    jitter: bool
    brightness: float
    contrast: float

    @classmethod
    def identity(cls, size: int = IMAGE_SIZE) -> "AugmentationDraw":
        return cls(1.0, 1.0, 0, 0, size, size, False, False, 1.0, 1.0)


def _crop_box(area_fraction: float, aspect: float, size: int) -> tuple[int, int]:
    area = area_fraction * size * size
    w = int(round(math.sqrt(area * aspect)))
    h = int(round(math.sqrt(area / aspect)))
    if w > size:
        w = size
        h = int(round(area / size))
    if h > size:
        h = size
        w = int(round(area / size))
    return max(1, min(h, size)), max(1, min(w, size))


def draw(policy: AugmentationPolicy, rng: np.random.Generator, size: int = IMAGE_SIZE) -> AugmentationDraw:
    area_fraction = float(rng.uniform(policy.crop_min_area_fraction, 1.0))
    aspect = float(rng.uniform(*ASPECT_RANGE))
    h, w = _crop_box(area_fraction, aspect, size)
    top = int(rng.integers(0, size - h + 1))
    left = int(rng.integers(0, size - w + 1))
    flip = bool(rng.random() < policy.hflip_probability)
    jitter = bool(rng.random() < policy.jitter_probability)
    if jitter:
        brightness = float(rng.uniform(1.0 - policy.jitter_brightness, 1.0 + policy.jitter_brightness))
        contrast = float(rng.uniform(1.0 - policy.jitter_contrast, 1.0 + policy.jitter_contrast))
    else:
        brightness = contrast = 1.0
    return AugmentationDraw(area_fraction, aspect, top, left, h, w, flip, jitter, brightness, contrast)


def apply_pixels(pixels: np.ndarray, d: AugmentationDraw) -> np.ndarray:
    return _kernels.augment(pixels, d.top, d.left, d.height, d.width, d.flip, d.brightness, d.contrast)


def apply(image: LabeledImage, d: AugmentationDraw, new_id: str | None = None) -> LabeledImage:
    origin = image.origin_id if image.origin_id is not None else image.id
    return LabeledImage(apply_pixels(image.pixels, d), image.label, new_id or image.id, origin_id=origin)


def materialize(
    train: LabeledDataset, ratio: int, policy: AugmentationPolicy, seed: int
) -> LabeledDataset:
    """Expand ``train`` into ``ratio * len(train)`` augmented images.

    The draw for pass ``r`` over image ``i`` comes from a generator seeded with
    ``(seed, r, i)``, so output does not depend on evaluation order.
    """
    if int(ratio) != ratio or ratio < 1:
        raise ValueError(f"augmentation ratio must be a positive integer, got {ratio}")
    out = []
    for r in range(int(ratio)):
        for i, im in enumerate(train):
            rng = np.random.default_rng((seed, r, i))
            out.append(apply(im, draw(policy, rng), new_id=f"{im.id}#{r}"))
    return LabeledDataset(tuple(out), role=train.role, name=f"{train.name}x{ratio}")
