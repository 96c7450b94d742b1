"""Dataset plumbing: ingestion, deterministic splitting, image IO,
resizing, and normalization.

Native image formats are binary PPM (P6, maxval 255) and the ".nct" raw
tensor; anything compressed is expected to be converted offline first.
Manifests are JSON with a fixed key order, written atomically, and every
sample path inside one is relative to the manifest file's directory.
"""

import json
import math
import os
import re
import shutil
import tempfile
import warnings

import numpy as np

from .errors import DataFormatError, InvalidArgumentError
from .precision import get_dtype
from .rng import STREAM_SPLIT, derive
from .tensor import NCT_MAGIC, load_nct

IMAGE_EXTENSIONS = (".ppm", ".nct")

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

YOLO_POSITIVE_CLASS = "auto_rickshaw"
YOLO_NEGATIVE_CLASS = "non_autorickshaw"


def sanitize(name):
    """Class-name normalization: lowercase, punctuation runs to one underscore."""
    cleaned = re.sub(r"[^0-9a-z]+", "_", name.lower()).strip("_")
    if not cleaned:
        raise InvalidArgumentError(f"name {name!r} sanitizes to nothing")
    return cleaned


def _image_files(directory):
    return sorted(f for f in os.listdir(directory)
                  if os.path.isfile(os.path.join(directory, f))
                  and f.lower().endswith(IMAGE_EXTENSIONS))


def ingest_class_tree(root):
    """Scan a directory-per-class tree.

    Returns (classes, per_class_paths): sanitized class names sorted
    lexicographically, and for each one the sorted list of image paths
    (absolute). Empty class directories are dropped with a warning.
    """
    if not os.path.isdir(root):
        raise InvalidArgumentError(f"dataset directory not found: {root}")
    found = {}
    for entry in sorted(os.listdir(root)):
        path = os.path.join(root, entry)
        if not os.path.isdir(path):
            continue
        cls = sanitize(entry)
        if cls in found:
            raise InvalidArgumentError(
                f"class name collision: {entry!r} sanitizes to {cls!r} twice")
        files = _image_files(path)
        if not files:
            warnings.warn(f"class directory {entry!r} has no images; dropped")
            continue
        found[cls] = [os.path.join(path, f) for f in files]
    if not found:
        raise InvalidArgumentError(f"no class directories with images under {root}")
    classes = sorted(found)
    return classes, [found[c] for c in classes]


def parse_yolo_label(path):
    """Read one YOLO label file; returns (class_ids, problems).

    Each line must be "class_id cx cy w h". A malformed line poisons the
    whole file (problems non-empty, ids empty); coordinates outside [0,1]
    only warn.
    """
    ids = []
    problems = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 5:
                problems.append(f"line {lineno}: expected 5 fields, got {len(parts)}")
                continue
            try:
                cid = int(parts[0])
                coords = [float(p) for p in parts[1:]]
            except ValueError:
                problems.append(f"line {lineno}: non-numeric field")
                continue
            if cid < 0:
                problems.append(f"line {lineno}: negative class id {cid}")
                continue
            if any(c < 0.0 or c > 1.0 for c in coords):
                warnings.warn(f"{path}: line {lineno}: coordinate outside [0,1]")
            ids.append(cid)
    if problems:
        return [], problems
    return ids, []


def ingest_yolo(images_dir, labels_dir, positive_ids):
    """Classify images by YOLO annotation presence.

    An image is positive when any label line's class id is in
    positive_ids; a missing or empty label file means negative. Returns
    (assignments, skipped): a list of (image_path, class_name) and a list
    of (image_path, reason) for files with malformed labels.
    """
    if not os.path.isdir(images_dir):
        raise InvalidArgumentError(f"images directory not found: {images_dir}")
    if not os.path.isdir(labels_dir):
        raise InvalidArgumentError(f"labels directory not found: {labels_dir}")
    positive_ids = set(positive_ids)
    if not positive_ids:
        raise InvalidArgumentError("positive id set must be non-empty")
    assignments = []
    skipped = []
    files = _image_files(images_dir)
    if not files:
        raise InvalidArgumentError(f"no images under {images_dir}")
    for name in files:
        image_path = os.path.join(images_dir, name)
        label_path = os.path.join(labels_dir, os.path.splitext(name)[0] + ".txt")
        if not os.path.isfile(label_path):
            assignments.append((image_path, YOLO_NEGATIVE_CLASS))
            continue
        ids, problems = parse_yolo_label(label_path)
        if problems:
            skipped.append((image_path, "; ".join(problems)))
            continue
        positive = any(i in positive_ids for i in ids)
        assignments.append((image_path,
                            YOLO_POSITIVE_CLASS if positive else YOLO_NEGATIVE_CLASS))
    return assignments, skipped


def build_class_tree(assignments, output_dir):
    """Copy (path, class) assignments into output_dir/<class>/<basename>."""
    os.makedirs(output_dir, exist_ok=True)
    for path, cls in assignments:
        dest_dir = os.path.join(output_dir, cls)
        os.makedirs(dest_dir, exist_ok=True)
        shutil.copyfile(path, os.path.join(dest_dir, os.path.basename(path)))


def val_count(n, val_fraction):
    """Validation-set size for one class: round then clamp to [1, n-1]."""
    if n <= 1:
        return 0
    return min(max(int(math.floor(val_fraction * n + 0.5)), 1), n - 1)


def deterministic_split(classes, per_class_paths, val_fraction, seed,
                        base_dir=None):
    """Assign every sample to train or val, per class, reproducibly.

    Each class's sorted path list is shuffled by a generator derived from
    (seed, split-stream, class_index) and the first val_count entries go
    to val. Classes with no samples are dropped with a warning. Paths are
    stored relative to base_dir when given.

    Returns the manifest dict with fixed key order:
    classes, samples (sorted by class then path), seed, val_fraction.
    """
    if not 0.0 < val_fraction < 1.0:
        raise InvalidArgumentError(
            f"val_fraction must lie in (0, 1), got {val_fraction}")
    kept = []
    for cls, paths in zip(classes, per_class_paths):
        if paths:
            kept.append((cls, sorted(paths)))
        else:
            warnings.warn(f"class {cls!r} has no samples; dropped")
    if not kept:
        raise InvalidArgumentError("no classes with samples to split")
    samples = []
    for class_index, (cls, paths) in enumerate(kept):
        rng = derive(seed, STREAM_SPLIT, class_index)
        order = rng.permutation(len(paths))
        n_val = val_count(len(paths), val_fraction)
        val_positions = set(order[:n_val].tolist())
        for pos, path in enumerate(paths):
            rel = os.path.relpath(path, base_dir) if base_dir else path
            samples.append({
                "path": rel.replace(os.sep, "/"),
                "class_index": class_index,
                "split": "val" if pos in val_positions else "train",
            })
    samples.sort(key=lambda s: (s["class_index"], s["path"]))
    return {
        "classes": [c for c, _ in kept],
        "samples": samples,
        "seed": seed,
        "val_fraction": val_fraction,
    }


def save_manifest(path, manifest):
    """Write manifest JSON atomically with its declared key order."""
    payload = json.dumps(manifest, indent=2) + "\n"
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_manifest(path):
    """Read and validate a manifest; returns (manifest, base_dir)."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except FileNotFoundError:
        raise InvalidArgumentError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{path}: not valid JSON: {e}") from e
    for key in ("classes", "samples", "seed", "val_fraction"):
        if key not in manifest:
            raise DataFormatError(f"{path}: manifest missing key {key!r}")
    n_classes = len(manifest["classes"])
    if n_classes == 0:
        raise DataFormatError(f"{path}: manifest has no classes")
    for i, s in enumerate(manifest["samples"]):
        if not 0 <= s.get("class_index", -1) < n_classes:
            raise DataFormatError(f"{path}: sample {i} has bad class_index")
        if s.get("split") not in ("train", "val"):
            raise DataFormatError(f"{path}: sample {i} has bad split")
    return manifest, os.path.dirname(os.path.abspath(path))


# -- image IO --------------------------------------------------------------


def read_ppm(path):
    """Decode binary PPM (P6, maxval 255) to H x W x 3 floats in [0,1]."""
    with open(path, "rb") as f:
        raw = f.read()
    if not raw.startswith(b"P6"):
        raise DataFormatError(
            f"{path}: not a P6 PPM (magic {raw[:2]!r}); convert compressed "
            f"images to PPM or .nct first")
    # header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments running to end of line
    tokens = []
    pos = 2
    while len(tokens) < 3 and pos < len(raw):
        ch = raw[pos:pos + 1]
        if ch == b"#":
            nl = raw.find(b"\n", pos)
            pos = len(raw) if nl < 0 else nl + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(raw) and not raw[end:end + 1].isspace() and raw[end:end + 1] != b"#":
                end += 1
            tokens.append(raw[pos:end])
            pos = end
    if len(tokens) < 3:
        raise DataFormatError(f"{path}: truncated PPM header")
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise DataFormatError(f"{path}: non-numeric PPM header fields") from None
    if width < 1 or height < 1:
        raise DataFormatError(f"{path}: bad PPM dimensions {width}x{height}")
    if maxval != 255:
        raise DataFormatError(f"{path}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte separates header from payload
    payload = raw[pos:pos + height * width * 3]
    if len(payload) != height * width * 3:
        raise DataFormatError(f"{path}: truncated PPM payload")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return pixels.astype(get_dtype()) / 255.0


def write_ppm(path, pixels):
    """Encode H x W x 3 values in [0,1] as binary PPM (round to 8 bits)."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidArgumentError(
            f"write_ppm expects H x W x 3, got shape {arr.shape}")
    data = np.clip(np.floor(arr * 255.0 + 0.5), 0, 255).astype(np.uint8)
    h, w = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(data.tobytes())


def load_image(path):
    """Decode a PPM or .nct file to H x W x 3 floats in [0,1]."""
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic.startswith(b"P6"):
        return read_ppm(path)
    if magic == NCT_MAGIC:
        arr = load_nct(path)
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise DataFormatError(
                f"{path}: image tensors must be 3 x H x W, got {arr.shape}")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise DataFormatError(f"{path}: tensor values outside [0,1]")
        return np.ascontiguousarray(arr.transpose(1, 2, 0)).astype(get_dtype())
    raise DataFormatError(
        f"{path}: unsupported format (magic {magic!r}); convert compressed "
        f"images to PPM or .nct first")


def resize_bilinear(pixels, out_h, out_w):
    """Resample H x W x C to out_h x out_w x C, half-pixel-center bilinear."""
    arr = np.asarray(pixels)
    if arr.ndim != 3:
        raise InvalidArgumentError(f"expected H x W x C, got shape {arr.shape}")
    h, w = arr.shape[:2]
    if (h, w) == (out_h, out_w):
        return arr.copy()

    def axis_coords(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = (src - lo).astype(arr.dtype)
        return lo, hi, frac

    y0, y1, fy = axis_coords(h, out_h)
    x0, x1, fx = axis_coords(w, out_w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = arr[y0][:, x0] * (1 - fx) + arr[y0][:, x1] * fx
    bottom = arr[y1][:, x0] * (1 - fx) + arr[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def normalize(pixels, mode):
    """H x W x 3 in [0,1] to a 3 x H x W tensor, optionally standardized."""
    arr = np.asarray(pixels, dtype=get_dtype())
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidArgumentError(
            f"normalize expects H x W x 3, got shape {arr.shape}")
    chw = np.ascontiguousarray(arr.transpose(2, 0, 1))
    if mode == "unit":
        return chw
    if mode == "imagenet":
        mean = np.asarray(IMAGENET_MEAN, dtype=chw.dtype).reshape(3, 1, 1)
        std = np.asarray(IMAGENET_STD, dtype=chw.dtype).reshape(3, 1, 1)
        return (chw - mean) / std
    raise InvalidArgumentError(
        f"normalize mode must be 'unit' or 'imagenet', got {mode!r}")
