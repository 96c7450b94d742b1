"""Synthetic 3-class image generator for self-contained training checks.

Each class pairs a color with a shape (blue triangle, green square, red
circle) drawn on a dark noisy background, so the classes are separable
by color statistics alone and a small CNN learns them in a few epochs.
Images are written as PPM class trees compatible with the ingest path.
"""

import os

import numpy as np

from .data import write_ppm
from .errors import InvalidArgumentError
from .rng import STREAM_SYNTH, derive

CLASSES = ("blue_triangle", "green_square", "red_circle")

_BASE_COLORS = {
    "blue_triangle": (0.15, 0.25, 0.85),
    "green_square": (0.15, 0.80, 0.20),
    "red_circle": (0.85, 0.15, 0.15),
}


def _shape_mask(kind, size, cy, cx, r):
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    if kind == "circle":
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    if kind == "square":
        return (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r)
    # upward triangle: width grows linearly from apex to base
    rel = yy - (cy - r)
    return (rel >= 0) & (rel <= 2 * r) & (np.abs(xx - cx) <= rel / 2.0)


def render_sample(class_name, size, rng):
    """One H x W x 3 float image in [0,1] for the given class."""
    if class_name not in _BASE_COLORS:
        raise InvalidArgumentError(f"unknown synthetic class {class_name!r}")
    base = rng.uniform(0.05, 0.25)
    pixels = np.clip(base + rng.normal(0.0, 0.03, size=(size, size, 3)), 0.0, 1.0)
    cy = rng.uniform(0.30, 0.70) * size
    cx = rng.uniform(0.30, 0.70) * size
    r = rng.uniform(0.15, 0.30) * size
    shape = class_name.split("_")[1]
    mask = _shape_mask(shape, size, cy, cx, r)
    color = np.asarray(_BASE_COLORS[class_name])
    jitter = rng.uniform(-0.08, 0.08, size=3)
    pixels[mask] = np.clip(color + jitter, 0.0, 1.0)
    return pixels


def generate_synthetic_dataset(out_dir, per_class=100, size=224, seed=42):
    """Write per_class PPMs for each class under out_dir/<class>/."""
    if per_class < 1:
        raise InvalidArgumentError(f"per_class must be >= 1, got {per_class}")
    if size < 8:
        raise InvalidArgumentError(f"size must be >= 8, got {size}")
    for class_index, name in enumerate(CLASSES):
        class_dir = os.path.join(out_dir, name)
        os.makedirs(class_dir, exist_ok=True)
        for i in range(per_class):
            rng = derive(seed, STREAM_SYNTH, class_index, i)
            pixels = render_sample(name, size, rng)
            write_ppm(os.path.join(class_dir, f"img_{i:04d}.ppm"), pixels)
    return list(CLASSES)
