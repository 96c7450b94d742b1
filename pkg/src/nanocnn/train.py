"""Training loop: Adam, per-epoch train/eval passes, and run artifacts.

fit() owns a run directory: it writes the config snapshot before the
first step (so a crashed run is still reproducible), appends curves.csv
one epoch at a time, and keeps both the best-validation and the final
checkpoint. All shuffling and augmentation randomness derives from the
single config seed through tagged streams.
"""

import json
import os
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import ops
from .augment import apply_profile
from .data import load_image
from .errors import InvalidArgumentError, NumericFailureError
from .graph import load_checkpoint, save_checkpoint
from .models import init_parameters
from .precision import get_dtype
from .rng import STREAM_AUGMENT, STREAM_SHUFFLE, derive

CURVES_HEADER = "epoch,phase,loss,accuracy,seconds"


@dataclass
class TrainConfig:
    epochs: int = 5
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    seed: int = 42
    mode: str = "scratch"
    normalize: str = "unit"
    profile: str = "none"
    image_size: int = 224

    def validate(self):
        if self.epochs < 1:
            raise InvalidArgumentError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidArgumentError(
                f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr > 0:
            raise InvalidArgumentError(f"lr must be > 0, got {self.lr}")
        for name, b in (("beta1", self.beta1), ("beta2", self.beta2)):
            if not 0.0 <= b < 1.0:
                raise InvalidArgumentError(f"{name} must be in [0,1), got {b}")
        if self.mode not in ("scratch", "transfer"):
            raise InvalidArgumentError(
                f"mode must be 'scratch' or 'transfer', got {self.mode!r}")
        if self.normalize not in ("unit", "imagenet"):
            raise InvalidArgumentError(
                f"normalize must be 'unit' or 'imagenet', got {self.normalize!r}")
        return self


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    seconds: float


class Adam(object):
    """Adam with bias correction over an explicit (name, node) list.

    update: t += 1; m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2;
    theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    """

    def __init__(self, named_params, lr=1e-3, beta1=0.9, beta2=0.999,
                 eps=1e-8):
        self.named_params = list(named_params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.value) for name, p in self.named_params}
        self.v = {name: np.zeros_like(p.value) for name, p in self.named_params}

    def param_names(self):
        return [name for name, _ in self.named_params]

    def step(self):
        self.t += 1
        for name, p in self.named_params:
            g = p.grad
            if g is None:
                raise InvalidArgumentError(
                    f"parameter {name!r} has no gradient at step {self.t}")
            if not np.all(np.isfinite(g)):
                raise NumericFailureError(
                    f"non-finite gradient in {name!r} at step {self.t}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _resolve(base_dir, rel):
    return os.path.join(base_dir, rel) if base_dir else rel


def load_batch(samples, base_dir, config, phase, epoch=0):
    """Decode and transform one batch; returns (x NCHW, targets int64).

    samples carry a stable `index` key (their position in the split) so
    each one owns an rng stream keyed by (seed, epoch, index), making the
    result independent of batch boundaries.
    """
    xs = []
    ys = np.empty(len(samples), dtype=np.int64)
    for i, s in enumerate(samples):
        pixels = load_image(_resolve(base_dir, s["path"]))
        rng = (derive(config.seed, STREAM_AUGMENT, epoch, s["index"])
               if phase == "train" else None)
        xs.append(apply_profile(pixels, config.profile, rng, phase,
                                config.normalize, out_size=config.image_size))
        ys[i] = s["class_index"]
    return np.stack(xs).astype(get_dtype(), copy=False), ys


def split_samples(manifest, split):
    """Samples of one split, in manifest order, each tagged with its index."""
    out = []
    for s in manifest["samples"]:
        if s["split"] == split:
            out.append({**s, "index": len(out)})
    return out


def train_epoch(model, train_samples, base_dir, config, epoch, optimizer):
    """One pass over the shuffled training split; returns (loss, acc, seconds)."""
    if not train_samples:
        raise InvalidArgumentError("training split is empty")
    start = time.perf_counter()
    rng = derive(config.seed, STREAM_SHUFFLE, epoch)
    order = rng.permutation(len(train_samples))
    total_loss = 0.0
    correct = 0
    for batch_index, lo in enumerate(range(0, len(order), config.batch_size)):
        batch = [train_samples[i] for i in order[lo:lo + config.batch_size]]
        x, y = load_batch(batch, base_dir, config, "train", epoch=epoch)
        logits = model.forward(x, training=True)
        loss = ops.softmax_cross_entropy(logits, y)
        loss_value = float(loss.value)
        if not np.isfinite(loss_value):
            raise NumericFailureError(
                f"non-finite loss at epoch {epoch} batch {batch_index}")
        model.zero_grad()
        loss.backward()
        optimizer.step()
        total_loss += loss_value * len(batch)
        correct += int((logits.value.argmax(axis=1) == y).sum())
    n = len(train_samples)
    return total_loss / n, correct / n, time.perf_counter() - start


def evaluate_epoch(model, val_samples, base_dir, config):
    """One unshuffled, unaugmented pass in eval mode.

    Returns (mean loss, accuracy, probability archive of shape (n, c)).
    Never mutates parameters or buffers.
    """
    if not val_samples:
        raise InvalidArgumentError("validation split is empty")
    total_loss = 0.0
    correct = 0
    probs = []
    for lo in range(0, len(val_samples), config.batch_size):
        batch = val_samples[lo:lo + config.batch_size]
        x, y = load_batch(batch, base_dir, config, "val")
        logits = model.forward(x, training=False)
        loss = ops.softmax_cross_entropy(logits, y)
        total_loss += float(loss.value) * len(batch)
        correct += int((logits.value.argmax(axis=1) == y).sum())
        probs.append(ops.softmax(logits.value))
    n = len(val_samples)
    return total_loss / n, correct / n, np.concatenate(probs, axis=0)


def _curves_row(epoch, phase, loss, acc, seconds):
    return f"{epoch},{phase},{loss:.6f},{acc:.6f},{seconds:.6f}\n"


def fit(model, manifest, base_dir, config, run_dir, weights=None):
    """Full training run; returns the EpochRecord list plus summary dict.

    Scratch mode initializes from the seed (an optional checkpoint warm
    start overrides everything); transfer mode requires a checkpoint,
    imports every non-head tensor, and trains only the head.
    """
    config.validate()
    os.makedirs(run_dir, exist_ok=True)
    if os.listdir(run_dir):
        raise InvalidArgumentError(f"run directory {run_dir} is not empty")

    init_parameters(model, config.seed)
    if config.mode == "transfer":
        if weights is None:
            raise InvalidArgumentError("transfer mode requires imported weights")
        load_checkpoint(weights, model, skip_prefixes=("head.",))
        model.set_trainable(False)
        model.set_trainable(True, prefix="head.")
    elif weights is not None:
        load_checkpoint(weights, model)

    snapshot = {
        "arch_id": model.arch_id,
        "num_classes": model.num_classes,
        "classes": manifest["classes"],
        "weights": weights,
        **asdict(config),
    }
    with open(os.path.join(run_dir, "config.json"), "w", encoding="utf-8") as f:
        json.dump(snapshot, f, indent=2)
        f.write("\n")

    optimizer = Adam(model.trainable_parameters(), lr=config.lr,
                     beta1=config.beta1, beta2=config.beta2,
                     eps=config.eps_adam)
    train_samples = split_samples(manifest, "train")
    val_samples = split_samples(manifest, "val")

    curves_path = os.path.join(run_dir, "curves.csv")
    with open(curves_path, "w", encoding="utf-8") as f:
        f.write(CURVES_HEADER + "\n")

    records = []
    best_acc = -1.0
    best_epoch = -1
    total_start = time.perf_counter()
    for epoch in range(config.epochs):
        train_loss, train_acc, train_seconds = train_epoch(
            model, train_samples, base_dir, config, epoch, optimizer)
        eval_start = time.perf_counter()
        val_loss, val_acc, _ = evaluate_epoch(model, val_samples, base_dir, config)
        eval_seconds = time.perf_counter() - eval_start
        records.append(EpochRecord(epoch, train_loss, train_acc,
                                   val_loss, val_acc,
                                   train_seconds + eval_seconds))
        with open(curves_path, "a", encoding="utf-8") as f:
            f.write(_curves_row(epoch, "train", train_loss, train_acc,
                                train_seconds))
            f.write(_curves_row(epoch, "val", val_loss, val_acc, eval_seconds))
        if val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
            save_checkpoint(os.path.join(run_dir, "best.ckpt"), model)
    total_seconds = time.perf_counter() - total_start
    save_checkpoint(os.path.join(run_dir, "final.ckpt"), model)

    summary = {
        "epochs": config.epochs,
        "best_epoch": best_epoch,
        "best_val_accuracy": best_acc,
        "total_seconds": total_seconds,
        "optimizer_params": optimizer.param_names(),
    }
    with open(os.path.join(run_dir, "summary.json"), "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")
    return records, summary
