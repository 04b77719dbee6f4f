"""Grad-CAM class activation maps and annotated overlays."""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch.nn import functional as F

from .dataset import IMAGE_SIZE, NUM_CLASSES, EmotionLabel
from .nn import ClassifierModel, _as_image_batch

GREEN = np.array([0.0, 1.0, 0.0])
RED = np.array([1.0, 0.0, 0.0])
BLUE = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class ActivationMap:
    values: np.ndarray
    target_class: EmotionLabel
    predicted_class: EmotionLabel
    correct: bool
    degenerate: bool = False


def normalize_map(cam: np.ndarray) -> tuple[np.ndarray, bool]:
    """Max-normalize a non-negative map; an all-zero map stays zero and is flagged."""
    cam = np.maximum(np.asarray(cam, dtype=np.float64), 0.0)
    peak = cam.max()
    if not peak > 0.0:
        return np.zeros_like(cam), True
    return cam / peak, False


def feature_gradients(model: ClassifierModel, image, target_class: int) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Final conv-block maps ``A`` (C, h, w), ``d logit_target / dA`` and the logits."""
    x = _as_image_batch(image).to(next(model.parameters()).dtype)
    if x.shape[0] != 1:
        raise ValueError("grad_cam works on one image at a time")
    was_training = model.training
    model.eval()
    try:
        with torch.enable_grad():
            a = model.forward_features(x).detach().requires_grad_(True)
            logits = model.logits_from_features(a)
            (grad,) = torch.autograd.grad(logits[0, int(target_class)], a)
    finally:
        model.train(was_training)
    return a[0].detach(), grad[0], logits[0].detach()


def grad_cam(model: ClassifierModel, image, target_class) -> ActivationMap:
    """Gradient-weighted activation map for ``target_class`` at 48x48."""
    target = EmotionLabel(int(target_class))
    if not 0 <= int(target) < NUM_CLASSES:
        raise ValueError("invalid target class")
    a, grad, logits = feature_gradients(model, image, int(target))
    weights = grad.mean(dim=(1, 2))
    cam = torch.relu((weights[:, None, None] * a).sum(dim=0))
    up = F.interpolate(cam[None, None].double(), size=(IMAGE_SIZE, IMAGE_SIZE), mode="bilinear", align_corners=False)
    values, degenerate = normalize_map(up[0, 0].numpy())
    predicted = EmotionLabel(int(torch.argmax(logits)))
    return ActivationMap(values, target, predicted, predicted == target, degenerate)


def render_overlay(image, cam: ActivationMap | np.ndarray, correct: bool | None = None, scale: int = 1) -> np.ndarray:
    """Blue-to-red heat map over the grayscale image at 50% opacity.

    The outermost ``scale`` pixels form a border, green for a correct
    prediction and red otherwise. Returns an RGB float array in [0, 1].
    """
    if isinstance(cam, ActivationMap):
        values = cam.values
        correct = cam.correct if correct is None else correct
    else:
        values = np.asarray(cam, dtype=np.float64)
    gray = np.asarray(image, dtype=np.float64)
    if gray.shape != values.shape:
        raise ValueError("image and map differ in shape")
    m = np.clip(values, 0.0, 1.0)[..., None]
    heat = (1.0 - m) * BLUE + m * RED
    out = 0.5 * gray[..., None] + 0.5 * heat
    if scale > 1:
        out = out.repeat(scale, axis=0).repeat(scale, axis=1)
    if correct is not None:
        color = GREEN if correct else RED
        w = max(1, scale)
        out[:w, :] = color
        out[-w:, :] = color
        out[:, :w] = color
        out[:, -w:] = color
    return out


def overlay_filename(image_id: str, target: EmotionLabel, repetition: int) -> str:
    safe = re.sub(r"[^A-Za-z0-9._-]+", "_", str(image_id)).strip("_") or "image"
    return f"{safe}_{EmotionLabel(int(target)).label_name}_{repetition}.png"


def save_overlay(rgb: np.ndarray, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.rint(np.clip(rgb, 0.0, 1.0) * 255).astype(np.uint8), mode="RGB").save(path)
    return path
