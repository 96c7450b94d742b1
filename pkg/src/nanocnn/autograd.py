"""Reverse-mode automatic differentiation over numpy arrays.

A Node wraps an ndarray plus an optional backward closure and parent
links. Operators (see ops.py) build the graph through make_node, which
prunes: when no parent requires a gradient the result is recorded as a
detached leaf, so frozen subgraphs cost no graph memory.

backward() runs an iterative post-order walk (no recursion limits on
deep graphs), detects cycles, seeds the scalar root with 1, sweeps in
reverse topological order, and frees intermediate gradients as soon as
they have been propagated. Fan-out accumulates additively.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CorruptedStateError, InvalidArgumentError


class Node:
    """One value in the computation graph."""

    __slots__ = ("value", "grad", "requires_grad", "op", "parents", "_backward")

    def __init__(self, value, requires_grad=False, op="leaf", parents=(),
                 backward=None):
        self.value = np.asarray(value)
        self.grad = None
        self.requires_grad = requires_grad
        self.op = op
        self.parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def backward(self, retain_grads=False):
        backward(self, retain_grads=retain_grads)

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape}, requires_grad={self.requires_grad})"


def make_node(value, op, parents, backward):
    """Create an op result, pruning the graph when nothing upstream trains."""
    if any(p.requires_grad for p in parents):
        return Node(value, requires_grad=True, op=op, parents=parents,
                    backward=backward)
    return Node(value, op="leaf")


def accumulate(node, g):
    """Add a gradient contribution; fan-out sums, never overwrites.

    Rebinds rather than mutating in place: a pass-through op may hand the
    same array to several parents, so in-place adds would corrupt siblings.
    """
    if node.requires_grad:
        node.grad = g if node.grad is None else node.grad + g


def topo_order(root):
    """Post-order over the graph reachable from root (parents first).

    Raises CorruptedStateError if the parent links contain a cycle.
    """
    GRAY, BLACK = 1, 2
    order = []
    # keyed by id(); the node reference in the value keeps ids stable
    state = {id(root): (GRAY, root)}
    stack = [(root, iter(root.parents))]
    while stack:
        node, it = stack[-1]
        advanced = False
        for p in it:
            entry = state.get(id(p))
            if entry is None:
                state[id(p)] = (GRAY, p)
                stack.append((p, iter(p.parents)))
                advanced = True
                break
            if entry[0] == GRAY:
                raise CorruptedStateError(
                    f"cycle in computation graph at op {p.op!r}")
        if not advanced:
            stack.pop()
            state[id(node)] = (BLACK, node)
            order.append(node)
    return order


def backward(root, retain_grads=False):
    """Backpropagate from a scalar root through the whole graph."""
    if root.value.size != 1:
        raise InvalidArgumentError(
            f"backward requires a scalar root, got shape {root.value.shape}")
    order = topo_order(root)
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
        if not retain_grads and node.parents:
            # propagated already; free before the sweep moves on
            node.grad = None


@dataclass
class GradcheckReport:
    passed: bool
    max_rel_err: float
    worst_input: int
    worst_index: int
    n_checked: int

    def __str__(self):
        status = "OK" if self.passed else "FAIL"
        return (f"gradcheck {status}: max rel err {self.max_rel_err:.3e} "
                f"(input {self.worst_input} flat index {self.worst_index}, "
                f"{self.n_checked} elements)")


def gradcheck(fn, inputs, tol=1e-6, step=1e-4):
    """Compare analytic gradients of fn against central differences.

    fn maps the input Nodes to a scalar Node. Inputs should be float64
    with requires_grad=True; each element is perturbed by h = step *
    max(1, |x|) and the relative error |a - n| / max(1, |a|, |n|) is
    compared against tol.
    """
    for p in inputs:
        if p.value.dtype != np.float64:
            raise InvalidArgumentError("gradcheck requires float64 inputs")
        p.grad = None
    out = fn(*inputs)
    backward(out)
    analytic = [np.zeros_like(p.value) if p.grad is None
                else np.array(p.grad, dtype=np.float64, copy=True)
                for p in inputs]

    max_rel = 0.0
    worst_input = 0
    worst_index = 0
    n_checked = 0
    for which, p in enumerate(inputs):
        flat = p.value.reshape(-1)
        aflat = analytic[which].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            h = step * max(1.0, abs(orig))
            flat[i] = orig + h
            f_plus = float(fn(*inputs).value)
            flat[i] = orig - h
            f_minus = float(fn(*inputs).value)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            rel = abs(aflat[i] - numeric) / max(1.0, abs(aflat[i]), abs(numeric))
            n_checked += 1
            if rel > max_rel:
                max_rel = rel
                worst_input = which
                worst_index = i
    return GradcheckReport(passed=max_rel <= tol, max_rel_err=max_rel,
                           worst_input=worst_input, worst_index=worst_index,
                           n_checked=n_checked)
