"""Procedural 7-class glyph images in two visual styles.

Style ``"A"`` plays the scarce primary dataset: thin strokes, small glyphs,
dark clean background. Style ``"B"`` plays the abundant auxiliary dataset:
thick strokes, larger glyphs, brighter uneven background, blur and more
noise. Class identity is the glyph shape, shared by both styles.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import IMAGE_SIZE, NUM_CLASSES, EmotionLabel, LabeledDataset, LabeledImage, Role

# shapes in a [-1, 1] box, y pointing down
_SEGMENTS = {
    EmotionLabel.ANGER: [((-1, -1), (1, 1)), ((-1, 1), (1, -1))],
    EmotionLabel.DISGUST: [((-1, -0.45), (1, -0.45)), ((-1, 0.45), (1, 0.45))],
    EmotionLabel.NEUTRAL: [((-1, 0), (1, 0))],
    EmotionLabel.SURPRISE: [((0, -1), (0, 1)), ((-1, 0), (1, 0))],
}
# (center_y, radius, start angle, end angle); angles in radians, y down
_ARCS = {
    EmotionLabel.FEAR: (0.0, 0.85, -np.pi, np.pi),
    EmotionLabel.HAPPINESS: (-0.35, 0.95, 0.15 * np.pi, 0.85 * np.pi),
    EmotionLabel.SADNESS: (0.35, 0.95, -0.85 * np.pi, -0.15 * np.pi),
}


@dataclass(frozen=True)
class GlyphStyle:
    stroke: tuple[float, float]
    scale: tuple[float, float]
    shift: float
    rotation_deg: float
    background: tuple[float, float]
    foreground: tuple[float, float]
    gradient: float
    noise: float
    blur: float


STYLES = {
    "A": GlyphStyle(
        stroke=(1.6, 2.4), scale=(11.0, 14.0), shift=4.0, rotation_deg=15.0,
        background=(0.1, 0.25), foreground=(0.75, 0.95), gradient=0.0, noise=0.04, blur=0.0,
    ),
    "B": GlyphStyle(
        stroke=(3.0, 4.5), scale=(14.0, 18.0), shift=5.0, rotation_deg=15.0,
        background=(0.3, 0.5), foreground=(0.8, 1.0), gradient=0.2, noise=0.08, blur=1.0,
    ),
}


def _segment_distance(px, py, a, b):
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _arc_distance(px, py, cy, r, a0, a1):
    qy = py - cy
    ang = np.arctan2(qy, px)
    ring = np.abs(np.hypot(px, qy) - r)
    if a1 - a0 >= 2 * np.pi - 1e-9:
        return ring
    inside = (ang >= a0) & (ang <= a1)
    e0 = np.hypot(px - r * np.cos(a0), qy - r * np.sin(a0))
    e1 = np.hypot(px - r * np.cos(a1), qy - r * np.sin(a1))
    return np.where(inside, ring, np.minimum(e0, e1))


def _box_blur(img, radius):
    k = int(round(radius))
    if k <= 0:
        return img
    pad = np.pad(img, k, mode="edge")
    out = np.zeros_like(img)
    n = 2 * k + 1
    for dy in range(n):
        for dx in range(n):
            out += pad[dy : dy + img.shape[0], dx : dx + img.shape[1]]
    return out / (n * n)


def render_glyph(label: EmotionLabel, style: GlyphStyle, rng: np.random.Generator) -> np.ndarray:
    size = IMAGE_SIZE
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    scale = rng.uniform(*style.scale)
    theta = np.deg2rad(rng.uniform(-style.rotation_deg, style.rotation_deg))
    cx = (size - 1) / 2 + rng.uniform(-style.shift, style.shift)
    cy = (size - 1) / 2 + rng.uniform(-style.shift, style.shift)
    c, s = np.cos(theta), np.sin(theta)
    # pixel -> glyph coordinates
    u = (c * (xs - cx) + s * (ys - cy)) / scale
    v = (-s * (xs - cx) + c * (ys - cy)) / scale
    if label in _SEGMENTS:
        d = np.min([_segment_distance(u, v, a, b) for a, b in _SEGMENTS[label]], axis=0)
    else:
        d = _arc_distance(u, v, *_ARCS[label])
    half = rng.uniform(*style.stroke) / 2
    ink = np.clip(half - d * scale + 0.5, 0.0, 1.0)
    bg = rng.uniform(*style.background)
    if style.gradient:
        g = rng.uniform(-style.gradient, style.gradient, size=2)
        bg = bg + g[0] * (xs / (size - 1) - 0.5) + g[1] * (ys / (size - 1) - 0.5)
    fg = rng.uniform(*style.foreground)
    img = bg + (fg - bg) * ink
    img = _box_blur(img, style.blur)
    img = img + rng.normal(0.0, style.noise, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def make_glyph_dataset(
    n_per_class: int, style: str = "A", seed: int = 0, role: Role = Role.A, name: str | None = None
) -> LabeledDataset:
    st = STYLES[style] if isinstance(style, str) else style
    rng = np.random.default_rng(seed)
    images = []
    for k in range(n_per_class):
        for label in EmotionLabel:
            px = render_glyph(label, st, rng)
            images.append(LabeledImage(px, label, f"{label.label_name}/{style}{k:05d}"))
    return LabeledDataset(tuple(images), role=role, name=name or f"glyphs-{style}")


def make_glyph_pair(n_a: int = 280, n_b: int = 2800, seed: int = 0) -> tuple[LabeledDataset, LabeledDataset]:
    """Primary (style A) and auxiliary (style B) datasets of the given total sizes."""
    if n_a % NUM_CLASSES or n_b % NUM_CLASSES:
        raise ValueError("dataset sizes must be multiples of 7")
    a = make_glyph_dataset(n_a // NUM_CLASSES, "A", seed=seed, role=Role.A, name="glyphs-A")
    b = make_glyph_dataset(n_b // NUM_CLASSES, "B", seed=seed + 1, role=Role.B, name="glyphs-B")
    return a, b
