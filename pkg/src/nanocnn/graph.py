"""Model container: a named layer DAG plus its parameters and buffers.

A ModelGraph owns LayerSpec records in execution order, a params dict of
autograd Nodes, and a buffers dict of plain arrays (batch norm running
statistics). The forward pass resolves each layer's named inputs, calls
the matching operator, and drops intermediate values as soon as their
last consumer has run. "@input" names the network input.

Checkpoints serialize every param and buffer as float32 behind a JSON
header; see save_checkpoint / load_checkpoint for the exact layout.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .autograd import Node
from .errors import CorruptedStateError, InvalidArgumentError
from .precision import get_dtype

INPUT = "@input"

_KINDS = ("conv", "batchnorm", "relu", "maxpool", "adaptiveavgpool",
          "flatten", "linear", "add")

CKPT_MAGIC = b"CNNCKPT1"
CKPT_FORMAT_VERSION = 1


@dataclass
class LayerSpec:
    """One layer: a kind, its input layer names, and static config."""
    name: str
    kind: str
    inputs: tuple
    config: dict = field(default_factory=dict)


class ModelGraph:
    """A runnable network: layers in execution order plus their state."""

    def __init__(self, arch_id, num_classes, dtype=None):
        if num_classes < 2:
            raise InvalidArgumentError(
                f"num_classes must be >= 2, got {num_classes}")
        self.arch_id = arch_id
        self.num_classes = num_classes
        self.dtype = np.dtype(dtype if dtype is not None else get_dtype())
        self.layers = []
        self.params = {}
        self.buffers = {}
        self._produced = {INPUT}

    # -- construction ------------------------------------------------------

    def add_param(self, name, shape, trainable=True):
        if name in self.params:
            raise InvalidArgumentError(f"duplicate parameter {name!r}")
        node = Node(np.zeros(shape, dtype=self.dtype), requires_grad=trainable)
        self.params[name] = node
        return node

    def add_buffer(self, name, shape, fill=0.0):
        if name in self.buffers:
            raise InvalidArgumentError(f"duplicate buffer {name!r}")
        self.buffers[name] = np.full(shape, fill, dtype=self.dtype)
        return self.buffers[name]

    def add_layer(self, name, kind, inputs, **config):
        if kind not in _KINDS:
            raise InvalidArgumentError(f"unknown layer kind {kind!r}")
        if name in self._produced:
            raise InvalidArgumentError(f"duplicate layer name {name!r}")
        inputs = tuple(inputs)
        want = 2 if kind == "add" else 1
        if len(inputs) != want:
            raise InvalidArgumentError(
                f"layer {name!r} ({kind}) takes {want} input(s), got {len(inputs)}")
        for src in inputs:
            if src not in self._produced:
                raise InvalidArgumentError(
                    f"layer {name!r} reads {src!r} before it is produced")
        self.layers.append(LayerSpec(name, kind, inputs, config))
        self._produced.add(name)
        return name

    def validate(self):
        """Check the DAG has exactly one terminal output (the last layer)."""
        if not self.layers:
            raise InvalidArgumentError("model has no layers")
        consumed = set()
        for spec in self.layers:
            consumed.update(spec.inputs)
        terminals = [s.name for s in self.layers if s.name not in consumed]
        if terminals != [self.layers[-1].name]:
            raise InvalidArgumentError(
                f"model must have exactly one terminal layer (the last); "
                f"found {terminals}")

    # -- execution ---------------------------------------------------------

    def forward(self, x, training=False):
        """Run the network on an NCHW batch; returns the logits Node."""
        if not isinstance(x, Node):
            x = Node(np.asarray(x, dtype=self.dtype))
        remaining = {INPUT: 0}
        for spec in self.layers:
            remaining[spec.name] = 0
            for src in spec.inputs:
                remaining[src] += 1
        values = {INPUT: x}
        out = x
        for spec in self.layers:
            ins = [values[src] for src in spec.inputs]
            out = self._run_layer(spec, ins, training)
            values[spec.name] = out
            for src in spec.inputs:
                remaining[src] -= 1
                if remaining[src] == 0:
                    del values[src]
        return out

    def _run_layer(self, spec, ins, training):
        cfg = spec.config
        kind = spec.kind
        if kind == "conv":
            return ops.conv2d(ins[0], self.params[spec.name + ".weight"],
                              self.params.get(spec.name + ".bias"),
                              stride=cfg["stride"], padding=cfg["padding"],
                              groups=cfg["groups"])
        if kind == "batchnorm":
            gamma = self.params[spec.name + ".gamma"]
            beta = self.params[spec.name + ".beta"]
            # a frozen norm layer stays in eval mode even while the rest
            # of the network trains, so imported backbones keep their
            # running statistics bit-identical
            bn_training = training and (gamma.requires_grad or beta.requires_grad)
            return ops.batch_norm2d(
                ins[0], gamma, beta,
                self.buffers[spec.name + ".running_mean"],
                self.buffers[spec.name + ".running_var"],
                bn_training, momentum=cfg["momentum"], eps=cfg["eps"])
        if kind == "relu":
            return ops.relu(ins[0])
        if kind == "maxpool":
            return ops.max_pool2d(ins[0], cfg["k"], stride=cfg["stride"],
                                  padding=cfg["padding"])
        if kind == "adaptiveavgpool":
            return ops.adaptive_avg_pool_1x1(ins[0])
        if kind == "flatten":
            return ops.flatten(ins[0])
        if kind == "linear":
            return ops.linear(ins[0], self.params[spec.name + ".weight"],
                              self.params.get(spec.name + ".bias"))
        if kind == "add":
            return ops.add(ins[0], ins[1])
        raise CorruptedStateError(f"unhandled layer kind {kind!r}")

    # -- parameter management ----------------------------------------------

    def named_parameters(self):
        return list(self.params.items())

    def trainable_parameters(self):
        return [(n, p) for n, p in self.params.items() if p.requires_grad]

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def set_trainable(self, flag, prefix=""):
        """Toggle requires_grad on every param whose name starts with prefix."""
        hit = False
        for name, p in self.params.items():
            if name.startswith(prefix):
                p.requires_grad = flag
                hit = True
        if not hit:
            raise InvalidArgumentError(
                f"no parameters match prefix {prefix!r}")


# -- checkpoint serialization ---------------------------------------------
#
# Layout: 8-byte magic, u32 LE header length, UTF-8 JSON header, then the
# concatenated float32 LE payloads. The header records format_version,
# arch_id, num_classes, and one entry per tensor: name, kind ("param" or
# "buffer"), shape, byte_offset into the payload block.


def save_checkpoint(path, model):
    entries = []
    blobs = []
    offset = 0
    items = ([(n, p.value, "param") for n, p in sorted(model.params.items())]
             + [(n, b, "buffer") for n, b in sorted(model.buffers.items())])
    for name, arr, kind in items:
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "kind": kind, "shape": list(arr.shape),
                        "byte_offset": offset})
        blobs.append(data)
        offset += len(data)
    header = json.dumps({
        "format_version": CKPT_FORMAT_VERSION,
        "arch_id": model.arch_id,
        "num_classes": model.num_classes,
        "entries": entries,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def read_checkpoint_header(path):
    """Parse and validate the header; returns (header_dict, payload_offset)."""
    with open(path, "rb") as f:
        magic = f.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise CorruptedStateError(
                f"{path}: not a checkpoint (bad magic {magic!r})")
        raw = f.read(4)
        if len(raw) != 4:
            raise CorruptedStateError(f"{path}: truncated header length")
        (hlen,) = struct.unpack("<I", raw)
        hraw = f.read(hlen)
        if len(hraw) != hlen:
            raise CorruptedStateError(f"{path}: truncated header")
    try:
        header = json.loads(hraw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptedStateError(f"{path}: unreadable header: {e}") from e
    if header.get("format_version") != CKPT_FORMAT_VERSION:
        raise CorruptedStateError(
            f"{path}: unsupported format_version {header.get('format_version')!r}")
    return header, len(CKPT_MAGIC) + 4 + hlen


def load_checkpoint(path, model, skip_prefixes=()):
    """Load a checkpoint into model in place.

    skip_prefixes suppresses both directions of strictness for matching
    names: checkpoint entries under a skipped prefix are ignored, and
    model tensors under one may be absent from the file. Used to import a
    backbone while keeping a freshly initialized head.
    """
    header, payload_start = read_checkpoint_header(path)
    if header.get("arch_id") != model.arch_id:
        raise InvalidArgumentError(
            f"{path}: checkpoint is for arch {header.get('arch_id')!r}, "
            f"model is {model.arch_id!r}")

    def skipped(name):
        return any(name.startswith(p) for p in skip_prefixes)

    targets = dict(model.params)
    targets.update({n: b for n, b in model.buffers.items()})
    seen = set()
    with open(path, "rb") as f:
        for entry in header["entries"]:
            name = entry["name"]
            if skipped(name):
                continue
            if name not in targets:
                raise CorruptedStateError(
                    f"{path}: entry {name!r} has no matching model tensor")
            dest = targets[name]
            arr = dest.value if isinstance(dest, Node) else dest
            shape = tuple(entry["shape"])
            if shape != arr.shape:
                raise CorruptedStateError(
                    f"{path}: {name!r} has shape {shape}, model expects {arr.shape}")
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            f.seek(payload_start + entry["byte_offset"])
            raw = f.read(4 * count)
            if len(raw) != 4 * count:
                raise CorruptedStateError(f"{path}: truncated payload for {name!r}")
            data = np.frombuffer(raw, dtype="<f4").reshape(shape)
            arr[...] = data.astype(arr.dtype, copy=False)
            seen.add(name)
    missing = [n for n in targets if n not in seen and not skipped(n)]
    if missing:
        raise CorruptedStateError(
            f"{path}: checkpoint is missing tensors: {sorted(missing)[:5]}")
