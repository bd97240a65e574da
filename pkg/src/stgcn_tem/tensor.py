"""Float64 array primitives with a recording tape for reverse-mode gradients.

Feature tensors are numpy arrays laid out ``[frame, joint, channel]`` (frame
major, row major), optionally with leading batch axes.  :func:`matmul`
accumulates over the inner index strictly left to right and matches a scalar
triple loop bit for bit; the batched layer contractions go through numpy's
``matmul``, whose summation order is fixed for a given shape, so repeated runs
are bit-identical.
"""
from __future__ import annotations

from typing import Callable, Literal

import numpy as np

Array = np.ndarray


class ShapeError(ValueError):
    pass


class Var:
    """A value recorded on a :class:`Tape`."""

    __slots__ = ("tape", "index", "value", "name", "needs_grad")

    def __init__(self, tape: "Tape", index: int, value: Array, name: str | None, needs_grad: bool):
        self.tape = tape
        self.index = index
        self.value = value
        self.name = name
        self.needs_grad = needs_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Var{label} #{self.index} shape={self.value.shape}>"


class Tape:
    """Topologically ordered record of primitive operations.

    Nodes are appended as they are computed, so every input is defined before
    it is used.  A tape belongs to one worker; do not share it across threads.
    """

    def __init__(self):
        self.nodes: list[tuple[Var, tuple[Var, ...], Callable | None]] = []

    def _push(self, value, parents, backward, name=None, needs_grad=None) -> Var:
        value = np.asarray(value, dtype=np.float64)
        if needs_grad is None:
            needs_grad = any(p.needs_grad for p in parents)
        var = Var(self, len(self.nodes), value, name, needs_grad)
        self.nodes.append((var, tuple(parents), backward))
        return var

    def leaf(self, value, name: str | None = None) -> Var:
        """A learnable input; :func:`backward` reports its gradient under ``name``."""
        return self._push(np.array(value, dtype=np.float64), (), None, name=name, needs_grad=True)

    def constant(self, value) -> Var:
        return self._push(value, (), None, needs_grad=False)

    def __len__(self):
        return len(self.nodes)


def _lift(*items) -> list[Var]:
    tape = None
    for item in items:
        if isinstance(item, Var):
            if tape is None:
                tape = item.tape
            elif item.tape is not tape:
                raise ValueError("operands were recorded on different tapes")
    if tape is None:
        tape = Tape()
    return [item if isinstance(item, Var) else tape.constant(item) for item in items]


def backward(tape: Tape, loss: Var) -> dict[str, Array]:
    """Reverse sweep from a scalar ``loss``; returns gradients of named leaves."""
    if loss.tape is not tape:
        raise ValueError("loss was not recorded on this tape")
    if loss.value.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    adjoint: dict[int, Array] = {loss.index: np.ones_like(loss.value)}
    grads: dict[str, Array] = {}
    for var, parents, fn in reversed(tape.nodes[: loss.index + 1]):
        g = adjoint.pop(var.index, None)
        if g is None:
            continue
        if fn is None:
            if var.name is not None:
                grads[var.name] = g
            continue
        for parent, pg in zip(parents, fn(g)):
            if pg is None or not parent.needs_grad:
                continue
            prev = adjoint.get(parent.index)
            adjoint[parent.index] = pg if prev is None else prev + pg
    return grads


# -- contractions -------------------------------------------------------------

def _dot_last(x: Array, w: Array) -> Array:
    """``x[..., k] @ w[k, p]`` summed over k in increasing order."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"cannot contract {x.shape} with {w.shape}")
    acc = x[..., 0, None] * w[0]
    for k in range(1, w.shape[0]):
        acc = acc + x[..., k, None] * w[k]
    return acc


def _outer_sum(x: Array, g: Array) -> Array:
    """``sum over leading axes of x[..., c] * g[..., d]`` -> (c, d)."""
    return x.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])


# -- primitives ---------------------------------------------------------------

def matmul(a, b) -> Var:
    a, b = _lift(a, b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {av.shape} x {bv.shape}")

    def grad(g):
        return (
            _dot_last(g, bv.T) if a.needs_grad else None,
            _dot_last(av.T, g) if b.needs_grad else None,
        )

    return a.tape._push(_dot_last(av, bv), (a, b), grad)


def elementwise(a, b, mode: Literal["add", "mul", "scale"]) -> Var:
    """Entrywise ``a + b``, ``a * b`` or ``a * scalar`` (``b`` a plain number)."""
    if mode == "scale":
        (a,) = _lift(a)
        s = float(b)
        return a.tape._push(a.value * s, (a,), lambda g: (g * s,))
    a, b = _lift(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"{mode}: shape mismatch {a.shape} vs {b.shape}")
    if mode == "add":
        return a.tape._push(a.value + b.value, (a, b), lambda g: (g, g))
    if mode == "mul":
        av, bv = a.value, b.value
        return a.tape._push(av * bv, (a, b), lambda g: (g * bv, g * av))
    raise ValueError(f"unknown elementwise mode {mode!r}")


def add(a, b) -> Var:
    return elementwise(a, b, "add")


def mul(a, b) -> Var:
    return elementwise(a, b, "mul")


def scale(a, s: float) -> Var:
    return elementwise(a, s, "scale")


def relu(x) -> Var:
    (x,) = _lift(x)
    on = x.value > 0
    return x.tape._push(np.where(on, x.value, 0.0), (x,), lambda g: (g * on,))


def graph_mix(adjacency, x) -> Var:
    """Mix joints of ``x[..., joint, channel]`` with an (N, N) matrix: ``A @ x`` per frame."""
    adjacency, x = _lift(adjacency, x)
    av, xv = adjacency.value, x.value
    if av.ndim != 2 or av.shape[0] != av.shape[1]:
        raise ShapeError(f"adjacency must be square, got {av.shape}")
    if xv.ndim < 2 or xv.shape[-2] != av.shape[1]:
        raise ShapeError(f"adjacency {av.shape} does not match joint axis of features {xv.shape}")

    def grad(g):
        gx = np.matmul(av.T, g) if x.needs_grad else None
        ga = None
        if adjacency.needs_grad:
            n = av.shape[0]
            ga = np.moveaxis(g, -2, 0).reshape(n, -1) @ np.moveaxis(xv, -2, 0).reshape(n, -1).T
        return ga, gx

    return adjacency.tape._push(np.matmul(av, xv), (adjacency, x), grad)


def channel_mix(x, w) -> Var:
    """Per-position 1x1 convolution: ``x[..., c] @ w[c, d]``."""
    x, w = _lift(x, w)
    xv, wv = x.value, w.value
    if wv.ndim != 2 or xv.shape[-1] != wv.shape[0]:
        raise ShapeError(f"weights {wv.shape} do not match feature channels {xv.shape}")

    def grad(g):
        return (
            np.matmul(g, wv.T) if x.needs_grad else None,
            _outer_sum(xv, g) if w.needs_grad else None,
        )

    return x.tape._push(np.matmul(xv, wv), (x, w), grad)


def shift_frames(x) -> Var:
    """``out[t] = x[t - 1]`` along the frame axis; frame 0 reads zeros."""
    (x,) = _lift(x)
    xv = x.value
    if xv.ndim < 3:
        raise ShapeError(f"expected [..., frame, joint, channel], got {xv.shape}")
    out = np.zeros_like(xv)
    out[..., 1:, :, :] = xv[..., :-1, :, :]

    def grad(g):
        gx = np.zeros_like(g)
        gx[..., :-1, :, :] = g[..., 1:, :, :]
        return (gx,)

    return x.tape._push(out, (x,), grad)


def conv_time(x, kernel, bias, stride: int = 1) -> Var:
    """Zero-padded temporal convolution, joints kept separate.

    ``kernel`` is (G, C_in, C_out) with odd G; output has ``ceil(F / stride)`` frames.
    """
    x, kernel, bias = _lift(x, kernel, bias)
    xv, kv, bv = x.value, kernel.value, bias.value
    if kv.ndim != 3:
        raise ShapeError(f"kernel must be (G, C_in, C_out), got {kv.shape}")
    span, c_in, c_out = kv.shape
    if span % 2 == 0:
        raise ValueError(f"temporal kernel size must be odd, got {span}")
    if stride < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    if xv.ndim < 3 or xv.shape[-1] != c_in:
        raise ShapeError(f"kernel {kv.shape} does not match features {xv.shape}")
    if bv.shape != (c_out,):
        raise ShapeError(f"bias must have shape ({c_out},), got {bv.shape}")
    frames = xv.shape[-3]
    pad = span // 2
    out_frames = -(-frames // stride)
    width = [(0, 0)] * xv.ndim
    width[-3] = (pad, pad)
    xp = np.pad(xv, width)
    stop = (out_frames - 1) * stride + 1
    # im2col: cols[..., f, n, g * C_in + c] = xp[..., f * stride + g, n, c]
    cols = np.concatenate([xp[..., g : g + stop : stride, :, :] for g in range(span)], axis=-1)
    flat_k = kv.reshape(span * c_in, c_out)
    out = bv + np.matmul(cols, flat_k)

    def grad(gout):
        gx = gk = gb = None
        if x.needs_grad:
            gcols = np.matmul(gout, flat_k.T)
            gxp = np.zeros_like(xp)
            for g in range(span):
                gxp[..., g : g + stop : stride, :, :] += gcols[..., g * c_in : (g + 1) * c_in]
            gx = gxp[..., pad : pad + frames, :, :]
        if kernel.needs_grad:
            gk = _outer_sum(cols, gout).reshape(span, c_in, c_out)
        if bias.needs_grad:
            gb = gout.reshape(-1, c_out).sum(axis=0)
        return gx, gk, gb

    return x.tape._push(out, (x, kernel, bias), grad)


def global_average_pool(x) -> Var:
    """Mean over the frame and joint axes: ``[..., F, N, C] -> [..., C]``."""
    (x,) = _lift(x)
    xv = x.value
    count = xv.shape[-3] * xv.shape[-2]
    out = xv.sum(axis=(-3, -2)) / count

    def grad(g):
        return (np.broadcast_to(g[..., None, None, :] / count, xv.shape).copy(),)

    return x.tape._push(out, (x,), grad)


def linear(x, w, b) -> Var:
    x, w, b = _lift(x, w, b)
    xv, wv, bv = x.value, w.value, b.value
    if wv.ndim != 2 or xv.shape[-1] != wv.shape[0] or bv.shape != (wv.shape[1],):
        raise ShapeError(f"linear shape mismatch: x {xv.shape}, W {wv.shape}, b {bv.shape}")

    def grad(g):
        return (
            np.matmul(g, wv.T) if x.needs_grad else None,
            _outer_sum(xv, g) if w.needs_grad else None,
            g.reshape(-1, bv.shape[0]).sum(axis=0) if b.needs_grad else None,
        )

    return x.tape._push(np.matmul(xv, wv) + bv, (x, w, b), grad)


def softmax(logits: Array) -> Array:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels) -> tuple[Array, Var]:
    """Probabilities and the mean ``-log p[label]`` over leading axes."""
    (logits,) = _lift(logits)
    lv = logits.value
    classes = lv.shape[-1]
    if classes < 1:
        raise ShapeError("need at least one class")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != lv.shape[:-1]:
        raise ShapeError(f"labels shape {labels.shape} does not match logits {lv.shape}")
    if np.any((labels < 0) | (labels >= classes)):
        raise ValueError(f"class label out of range [0, {classes})")
    z = lv - lv.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    log_p = z - log_norm
    probs = np.exp(log_p)
    picked = np.take_along_axis(log_p, labels[..., None], axis=-1)[..., 0]
    count = max(labels.size, 1)
    loss = -picked.sum() / count

    def grad(g):
        d = probs.copy()
        np.put_along_axis(d, labels[..., None], np.take_along_axis(d, labels[..., None], axis=-1) - 1.0, axis=-1)
        return (d * (g / count),)

    return probs, logits.tape._push(loss, (logits,), grad)


def weighted_sum(x, weights) -> Var:
    """Scalar ``sum(x * weights)``; ``weights`` is a fixed array."""
    (x,) = _lift(x)
    wv = np.broadcast_to(np.asarray(weights, dtype=np.float64), x.shape)
    return x.tape._push(np.sum(x.value * wv), (x,), lambda g: (g * wv,))


def total(x) -> Var:
    return weighted_sum(x, 1.0)

