"""Training-time augmentation and the per-dataset transform profiles.

Every transform is a pure function of (pixels, parameters, rng state);
callers own the generator, so results are reproducible given a derived
stream. Profiles list their transforms in application order, and the
validation phase bypasses all of them.
"""

import math

import numpy as np

from .data import normalize, resize_bilinear
from .errors import InvalidArgumentError

TARGET_SIZE = 224

GRAY_WEIGHTS = (0.299, 0.587, 0.114)

# name -> ordered (op, params) list; applied top to bottom during training
PROFILES = {
    "paddy": (
        ("random_resized_crop", {"scale": (0.8, 1.0)}),
        ("horizontal_flip", {"p": 0.5}),
        ("rotate", {"max_deg": 10.0}),
        ("color_jitter", {"magnitude": 0.30}),
    ),
    "footpath": (
        ("horizontal_flip", {"p": 0.5}),
        ("rotate", {"max_deg": 8.0}),
        ("color_jitter", {"magnitude": 0.20}),
    ),
    "mango": (
        ("horizontal_flip", {"p": 0.5}),
    ),
    "rickshaw": (
        ("horizontal_flip", {"p": 0.5}),
        ("rotate", {"max_deg": 10.0}),
        ("color_jitter", {"magnitude": 0.20}),
    ),
    "roads": (
        ("horizontal_flip", {"p": 0.5}),
        ("rotate", {"max_deg": 10.0}),
        ("color_jitter", {"magnitude": 0.20}),
    ),
    "none": (),
}


def profiles_json():
    """Profiles in a JSON-dumpable form for audit output."""
    return {name: [{"op": op, **params} for op, params in ops]
            for name, ops in PROFILES.items()}


def horizontal_flip(pixels, p, rng):
    """Mirror columns with probability p."""
    if not 0.0 <= p <= 1.0:
        raise InvalidArgumentError(f"flip probability must be in [0,1], got {p}")
    if rng.random() < p:
        return pixels[:, ::-1].copy()
    return pixels


def rotate(pixels, max_deg, rng):
    """Rotate about the center by a uniform angle in [-max_deg, +max_deg].

    Bilinear resampling on an unchanged canvas; out-of-bounds reads fill
    with 0. Source coordinates within 1e-7 of a grid point snap to it, so
    0 and the axis-aligned angles reproduce inputs exactly.
    """
    if max_deg < 0:
        raise InvalidArgumentError(f"max_deg must be >= 0, got {max_deg}")
    angle = rng.uniform(-max_deg, max_deg)
    if angle == 0.0:
        return pixels
    h, w = pixels.shape[:2]
    theta = math.radians(angle)
    cos, sin = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
    src_y = cos * yy + sin * xx + cy
    src_x = -sin * yy + cos * xx + cx
    for src in (src_y, src_x):
        snapped = np.round(src)
        near = np.abs(src - snapped) < 1e-7
        src[near] = snapped[near]
    y0 = np.floor(src_y).astype(np.int64)
    x0 = np.floor(src_x).astype(np.int64)
    fy = (src_y - y0)[..., None].astype(pixels.dtype)
    fx = (src_x - x0)[..., None].astype(pixels.dtype)

    def fetch(yi, xi):
        valid = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        vals = pixels[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
        return np.where(valid[..., None], vals, 0)

    top = fetch(y0, x0) * (1 - fx) + fetch(y0, x0 + 1) * fx
    bottom = fetch(y0 + 1, x0) * (1 - fx) + fetch(y0 + 1, x0 + 1) * fx
    return top * (1 - fy) + bottom * fy


def _gray(pixels):
    return pixels @ np.asarray(GRAY_WEIGHTS, dtype=pixels.dtype)


def color_jitter(pixels, magnitude, rng):
    """Brightness, contrast, then saturation, each scaled by an
    independent factor from [1 - magnitude, 1 + magnitude], clamping to
    [0,1] after every stage."""
    if not 0.0 <= magnitude < 1.0:
        raise InvalidArgumentError(
            f"jitter magnitude must be in [0,1), got {magnitude}")
    f_b, f_c, f_s = rng.uniform(1.0 - magnitude, 1.0 + magnitude, size=3)
    out = pixels
    # unit factors skip their stage entirely so magnitude 0 is bit-exact
    if f_b != 1.0:
        out = np.clip(out * f_b, 0.0, 1.0)
    if f_c != 1.0:
        mean_gray = _gray(out).mean()
        out = np.clip(mean_gray + (out - mean_gray) * f_c, 0.0, 1.0)
    if f_s != 1.0:
        gray = _gray(out)[..., None]
        out = np.clip(gray + (out - gray) * f_s, 0.0, 1.0)
    return out


def random_resized_crop(pixels, scale, rng, out_size=TARGET_SIZE):
    """Crop a random area fraction in [scale lo, hi] with log-uniform
    aspect in [3/4, 4/3] (ten attempts, then the largest centered square)
    and resize to out_size."""
    lo, hi = scale
    if not 0.0 < lo <= hi <= 1.0:
        raise InvalidArgumentError(f"scale range must satisfy 0 < lo <= hi <= 1, got {scale}")
    h, w = pixels.shape[:2]
    crop = None
    for _ in range(10):
        area = rng.uniform(lo, hi) * h * w
        aspect = math.exp(rng.uniform(math.log(3 / 4), math.log(4 / 3)))
        cw = int(math.floor(math.sqrt(area * aspect) + 0.5))
        ch = int(math.floor(math.sqrt(area / aspect) + 0.5))
        if 1 <= cw <= w and 1 <= ch <= h:
            y = int(rng.integers(0, h - ch + 1))
            x = int(rng.integers(0, w - cw + 1))
            crop = pixels[y:y + ch, x:x + cw]
            break
    if crop is None:
        side = min(h, w)
        y = (h - side) // 2
        x = (w - side) // 2
        crop = pixels[y:y + side, x:x + side]
    return resize_bilinear(crop, out_size, out_size)


_OPS = {
    "horizontal_flip": lambda px, params, rng: horizontal_flip(px, params["p"], rng),
    "rotate": lambda px, params, rng: rotate(px, params["max_deg"], rng),
    "color_jitter": lambda px, params, rng: color_jitter(px, params["magnitude"], rng),
    "random_resized_crop": lambda px, params, rng: random_resized_crop(px, params["scale"], rng),
}


def apply_profile(pixels, profile, rng, phase, normalize_mode,
                  out_size=TARGET_SIZE):
    """Full per-sample pipeline: profile transforms (train only), resize
    to the target square, normalization to a 3 x S x S tensor."""
    if profile not in PROFILES:
        raise InvalidArgumentError(
            f"unknown profile {profile!r}; choose from {', '.join(sorted(PROFILES))}")
    if phase not in ("train", "val"):
        raise InvalidArgumentError(f"phase must be 'train' or 'val', got {phase!r}")
    if phase == "train":
        for op, params in PROFILES[profile]:
            pixels = _OPS[op](pixels, params, rng)
    if pixels.shape[:2] != (out_size, out_size):
        pixels = resize_bilinear(pixels, out_size, out_size)
    return normalize(pixels, normalize_mode)
