"""Architecture builders.

Three networks share one building vocabulary:

- conv_block:            3x3 conv (pad 1, no bias) -> batch norm -> relu
- depthwise_separable:   3x3 depthwise conv (groups = c_in, given stride)
                         -> bn -> relu -> 1x1 pointwise conv -> bn -> relu
- residual_down_block:   main path of two conv_blocks (first strided),
                         skip path of 1x1 strided conv + bn, relu(main + skip)

build_custom_cnn assembles the compact hybrid classifier; build_resnet18
and build_vgg16 reproduce the two classic baselines. init_parameters
fills weights from a seed-derived stream: Kaiming uniform fan-in bounds
for conv/linear weights, zeros for biases and bn shifts, ones for bn
scales and running variances.
"""

import math

from .errors import InvalidArgumentError
from .graph import INPUT, ModelGraph
from .rng import STREAM_INIT, derive

BN_MOMENTUM = 0.1
BN_EPS = 1e-5

ARCH_IDS = ("custom_cnn", "resnet18", "vgg16")


class GraphBuilder:
    """Thin chaining helper over ModelGraph construction."""

    def __init__(self, model):
        self.model = model
        self.last = INPUT

    def conv(self, name, c_in, c_out, k, stride=1, padding=0, groups=1,
             bias=False, src=None):
        if c_in % groups or c_out % groups:
            raise InvalidArgumentError(
                f"{name}: channels ({c_in}, {c_out}) not divisible by groups {groups}")
        self.model.add_param(f"{name}.weight", (c_out, c_in // groups, k, k))
        if bias:
            self.model.add_param(f"{name}.bias", (c_out,))
        self.last = self.model.add_layer(name, "conv", (src or self.last,),
                                         stride=stride, padding=padding,
                                         groups=groups)
        return self.last

    def bn(self, name, c, src=None):
        self.model.add_param(f"{name}.gamma", (c,))
        self.model.add_param(f"{name}.beta", (c,))
        self.model.add_buffer(f"{name}.running_mean", (c,), fill=0.0)
        self.model.add_buffer(f"{name}.running_var", (c,), fill=1.0)
        self.last = self.model.add_layer(name, "batchnorm", (src or self.last,),
                                         momentum=BN_MOMENTUM, eps=BN_EPS)
        return self.last

    def relu(self, name, src=None):
        self.last = self.model.add_layer(name, "relu", (src or self.last,))
        return self.last

    def maxpool(self, name, k, stride=None, padding=0, src=None):
        self.last = self.model.add_layer(name, "maxpool", (src or self.last,),
                                         k=k, stride=k if stride is None else stride,
                                         padding=padding)
        return self.last

    def avgpool(self, name, src=None):
        self.last = self.model.add_layer(name, "adaptiveavgpool",
                                         (src or self.last,))
        return self.last

    def flatten(self, name, src=None):
        self.last = self.model.add_layer(name, "flatten", (src or self.last,))
        return self.last

    def linear(self, name, d_in, d_out, bias=True, src=None):
        self.model.add_param(f"{name}.weight", (d_out, d_in))
        if bias:
            self.model.add_param(f"{name}.bias", (d_out,))
        self.last = self.model.add_layer(name, "linear", (src or self.last,))
        return self.last

    def residual_add(self, name, a, b):
        self.last = self.model.add_layer(name, "add", (a, b))
        return self.last


def conv_block(b, name, c_in, c_out, stride=1, src=None):
    """3x3 conv (pad 1, no bias) -> bn -> relu; returns the relu layer name."""
    b.conv(f"{name}.conv", c_in, c_out, 3, stride=stride, padding=1, src=src)
    b.bn(f"{name}.bn", c_out)
    return b.relu(f"{name}.relu")


def depthwise_separable(b, name, c_in, c_out, stride=1, src=None):
    """Depthwise 3x3 (stride here) then pointwise 1x1, bn + relu after each."""
    b.conv(f"{name}.dw", c_in, c_in, 3, stride=stride, padding=1,
           groups=c_in, src=src)
    b.bn(f"{name}.dwbn", c_in)
    b.relu(f"{name}.dwrelu")
    b.conv(f"{name}.pw", c_in, c_out, 1)
    b.bn(f"{name}.pwbn", c_out)
    return b.relu(f"{name}.pwrelu")


def residual_down_block(b, name, c_in, c_out, src=None):
    """Two conv_blocks (first strided 2) plus a projected skip, joined by relu."""
    entry = src or b.last
    conv_block(b, f"{name}.main1", c_in, c_out, stride=2, src=entry)
    main = conv_block(b, f"{name}.main2", c_out, c_out, stride=1)
    b.conv(f"{name}.skip.conv", c_in, c_out, 1, stride=2, src=entry)
    skip = b.bn(f"{name}.skip.bn", c_out)
    b.residual_add(f"{name}.add", main, skip)
    return b.relu(f"{name}.relu")


def build_custom_cnn(num_classes, dtype=None):
    """Compact hybrid classifier: plain stem, one residual downsampling
    stage, two depthwise-separable stages, global average pooled head.

    Counting a depthwise+pointwise pair as a single convolutional layer
    and leaving the skip projection aside, the network has 8
    convolutional layers plus 3 pooling/fully-connected layers.
    """
    model = ModelGraph("custom_cnn", num_classes, dtype=dtype)
    b = GraphBuilder(model)
    conv_block(b, "stem.cb1", 3, 32)
    conv_block(b, "stem.cb2", 32, 32)
    b.maxpool("stem.pool", 2)
    residual_down_block(b, "block1", 32, 64)
    depthwise_separable(b, "block2.ds", 64, 128, stride=2)
    conv_block(b, "block2.cb", 128, 128)
    depthwise_separable(b, "block3.ds", 128, 256, stride=2)
    conv_block(b, "block3.cb", 256, 256)
    b.avgpool("head.pool")
    b.flatten("head.flatten")
    b.linear("head.fc", 256, num_classes)
    model.validate()
    return model


def _basic_block(b, name, c_in, c_out, stride):
    entry = b.last
    b.conv(f"{name}.conv1", c_in, c_out, 3, stride=stride, padding=1, src=entry)
    b.bn(f"{name}.bn1", c_out)
    b.relu(f"{name}.relu1")
    b.conv(f"{name}.conv2", c_out, c_out, 3, padding=1)
    main = b.bn(f"{name}.bn2", c_out)
    if stride != 1 or c_in != c_out:
        b.conv(f"{name}.skip.conv", c_in, c_out, 1, stride=stride, src=entry)
        skip = b.bn(f"{name}.skip.bn", c_out)
    else:
        skip = entry
    b.residual_add(f"{name}.add", main, skip)
    return b.relu(f"{name}.relu2")


def build_resnet18(num_classes, dtype=None):
    """ResNet-18: 7x7 stem, four stages of two basic blocks, average pooled head."""
    model = ModelGraph("resnet18", num_classes, dtype=dtype)
    b = GraphBuilder(model)
    b.conv("stem.conv", 3, 64, 7, stride=2, padding=3)
    b.bn("stem.bn", 64)
    b.relu("stem.relu")
    b.maxpool("stem.pool", 3, stride=2, padding=1)
    widths = (64, 128, 256, 512)
    c_in = 64
    for i, c_out in enumerate(widths, start=1):
        stride = 1 if i == 1 else 2
        _basic_block(b, f"layer{i}.block0", c_in, c_out, stride)
        _basic_block(b, f"layer{i}.block1", c_out, c_out, 1)
        c_in = c_out
    b.avgpool("head.pool")
    b.flatten("head.flatten")
    b.linear("head.fc", 512, num_classes)
    model.validate()
    return model


def build_vgg16(num_classes, dtype=None):
    """VGG-16: thirteen biased 3x3 convs in five pooled stages, then two
    4096-wide fully-connected layers and the classifier head.

    The flatten expects the canonical 7x7x512 feature map, so inputs must
    be 224x224.
    """
    model = ModelGraph("vgg16", num_classes, dtype=dtype)
    b = GraphBuilder(model)
    stages = ((64, 2), (128, 2), (256, 3), (512, 3), (512, 3))
    c_in = 3
    conv_idx = 0
    for stage_idx, (c_out, repeats) in enumerate(stages, start=1):
        for _ in range(repeats):
            conv_idx += 1
            b.conv(f"features.c{conv_idx}", c_in, c_out, 3, padding=1, bias=True)
            b.relu(f"features.r{conv_idx}")
            c_in = c_out
        b.maxpool(f"features.pool{stage_idx}", 2)
    b.flatten("classifier.flatten")
    b.linear("classifier.fc1", 512 * 7 * 7, 4096)
    b.relu("classifier.r1")
    b.linear("classifier.fc2", 4096, 4096)
    b.relu("classifier.r2")
    b.linear("head.fc", 4096, num_classes)
    model.validate()
    return model


_BUILDERS = {
    "custom_cnn": build_custom_cnn,
    "resnet18": build_resnet18,
    "vgg16": build_vgg16,
}


def build_model(arch_id, num_classes, dtype=None):
    if arch_id not in _BUILDERS:
        raise InvalidArgumentError(
            f"unknown architecture {arch_id!r}; choose from {', '.join(ARCH_IDS)}")
    return _BUILDERS[arch_id](num_classes, dtype=dtype)


def init_parameters(model, seed):
    """Fill parameters in registration order from one seed-derived stream.

    Conv and linear weights draw Kaiming uniform values with bound
    sqrt(6 / fan_in); biases and bn betas start at zero, bn gammas at
    one. Buffers reset to running_mean 0, running_var 1.
    """
    rng = derive(seed, STREAM_INIT)
    for name, p in model.params.items():
        v = p.value
        if name.endswith(".weight"):
            fan_in = int(v[0].size) if v.ndim == 4 else int(v.shape[1])
            bound = math.sqrt(6.0 / fan_in)
            v[...] = rng.uniform(-bound, bound, size=v.shape)
        elif name.endswith(".gamma"):
            v[...] = 1.0
        else:
            v[...] = 0.0
    for name, buf in model.buffers.items():
        buf[...] = 1.0 if name.endswith(".running_var") else 0.0
    return model
