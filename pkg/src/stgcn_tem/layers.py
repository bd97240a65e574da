"""Spatial graph convolution, the temporal extension module (TEM) and the
ST-GCN style model built from them.

One layer is ``spatial GCN -> ReLU -> TEM -> temporal conv -> ReLU``.  The TEM
stage mixes each joint with its graph neighbours *one frame earlier*, adding
inter-frame edges between different joints to the usual same-joint trajectory
of the temporal convolution.

Parameters live in a flat ``dict[str, ndarray]`` with names such as
``layer0.spatial.W1`` or ``layer1.tem.M2``; see :meth:`STGCN.param_shapes`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tape, Var
from .topology import (
    DEFAULT_EPSILON,
    NUM_SUBSETS,
    PartitionedAdjacency,
    SkeletonTopology,
    build_spatial_partition,
    build_temporal_partition,
    path_distance,
)

TemMode = Literal["residual", "replace", "off"]
TEM_MODES = ("residual", "replace", "off")


@dataclass(frozen=True)
class ModelConfig:
    topology: SkeletonTopology
    in_channels: int
    channels: tuple[int, ...]
    class_count: int
    strides: tuple[int, ...] | None = None
    kernel_size: int = 9
    spatial_hops: int = 1
    temporal_hops: int = 1
    tem_mode: TemMode = "residual"
    residual: bool = False
    epsilon: float = DEFAULT_EPSILON
    seed: int = 0

    def __post_init__(self):
        channels = tuple(int(c) for c in self.channels)
        strides = tuple(int(s) for s in self.strides) if self.strides is not None else (1,) * len(channels)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "strides", strides)
        if not channels:
            raise ValueError("a model needs at least one layer")
        if len(strides) != len(channels):
            raise ValueError(f"{len(channels)} layers but {len(strides)} strides")
        if self.in_channels < 1 or min(channels) < 1:
            raise ValueError("channel widths must be positive")
        if min(strides) < 1:
            raise ValueError("strides must be positive")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"temporal kernel size must be odd, got {self.kernel_size}")
        if self.class_count < 1:
            raise ValueError("class_count must be positive")
        if self.tem_mode not in TEM_MODES:
            raise ValueError(f"tem_mode must be one of {TEM_MODES}, got {self.tem_mode!r}")

    @property
    def widths(self) -> list[tuple[int, int]]:
        ins = (self.in_channels,) + self.channels[:-1]
        return list(zip(ins, self.channels))


@dataclass
class LayerParams:
    """One layer's weights; entries may be arrays or tape variables."""

    spatial_w: Sequence
    spatial_m: Sequence
    kernel: object
    bias: object
    tem_w: Sequence = field(default_factory=list)
    tem_m: Sequence = field(default_factory=list)
    stride: int = 1
    tem_mode: TemMode = "residual"


def _check_partition(adj: PartitionedAdjacency, f_in: Var, weights, masks, kind: str):
    n = f_in.shape[-2]
    if adj.joint_count != n:
        raise T.ShapeError(f"{kind} adjacency has {adj.joint_count} joints, features have {n}")
    if len(weights) != adj.num_subsets or len(masks) != adj.num_subsets:
        raise T.ShapeError(
            f"{kind}: expected {adj.num_subsets} weights and masks, got {len(weights)} and {len(masks)}"
        )


def _graph_conv(f_in, adj: PartitionedAdjacency, weights, masks) -> Var:
    out = None
    for k in range(adj.num_subsets):
        a = T.mul(adj.normalized[k], masks[k])
        term = T.channel_mix(T.graph_mix(a, f_in), weights[k])
        out = term if out is None else T.add(out, term)
    return out


def spatial_gcn(f_in, adj: PartitionedAdjacency, weights: Sequence, masks: Sequence) -> Var:
    """``sum_k ((A_k * M_k) @ f_t) @ W_k`` for every frame ``t``."""
    f_in, *rest = T._lift(f_in, *weights, *masks)
    weights, masks = rest[: len(weights)], rest[len(weights):]
    _check_partition(adj, f_in, weights, masks, "spatial")
    return _graph_conv(f_in, adj, weights, masks)


def tem_forward(f_in, adj: PartitionedAdjacency, weights: Sequence, masks: Sequence,
                mode: TemMode = "residual") -> Var:
    """Temporal extension: frame ``t`` gathers neighbours of each joint at ``t - 1``.

    ``g_t = sum_k ((A_k * M_k) @ f_{t-1}) @ W_k`` with ``f_{-1} = 0``; ``replace``
    returns ``g``, ``residual`` returns ``f + g``.
    """
    if mode not in ("residual", "replace"):
        raise ValueError(f"tem_forward mode must be 'residual' or 'replace', got {mode!r}")
    f_in, *rest = T._lift(f_in, *weights, *masks)
    weights, masks = rest[: len(weights)], rest[len(weights):]
    _check_partition(adj, f_in, weights, masks, "temporal")
    c = f_in.shape[-1]
    for w in weights:
        if w.shape != (c, c):
            raise T.ShapeError(f"TEM weights must be ({c}, {c}), got {w.shape}")
    g = _graph_conv(T.shift_frames(f_in), adj, weights, masks)
    return g if mode == "replace" else T.add(f_in, g)


def layer_forward(f_in, spatial: PartitionedAdjacency, temporal: PartitionedAdjacency | None,
                  p: LayerParams, residual: bool = False) -> Var:
    (f_in,) = T._lift(f_in)
    h = T.relu(spatial_gcn(f_in, spatial, p.spatial_w, p.spatial_m))
    if p.tem_mode != "off":
        h = tem_forward(h, temporal, p.tem_w, p.tem_m, p.tem_mode)
    out = T.relu(T.conv_time(h, p.kernel, p.bias, p.stride))
    if residual and out.shape == f_in.shape:
        out = T.add(out, f_in)
    return out


def _uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


class STGCN:
    """Stack of layers followed by global average pooling, a linear head and softmax."""

    def __init__(self, config: ModelConfig):
        self.config = config
        dist = path_distance(config.topology)
        self.spatial = build_spatial_partition(config.topology, config.spatial_hops, dist, config.epsilon)
        self.temporal = build_temporal_partition(config.topology, config.temporal_hops, dist, config.epsilon)

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        cfg = self.config
        n = cfg.topology.joint_count
        shapes: dict[str, tuple[int, ...]] = {}
        for l, (c_in, c_out) in enumerate(cfg.widths):
            for k in range(NUM_SUBSETS):
                shapes[f"layer{l}.spatial.W{k}"] = (c_in, c_out)
                shapes[f"layer{l}.spatial.M{k}"] = (n, n)
            if cfg.tem_mode != "off":
                for k in range(NUM_SUBSETS):
                    shapes[f"layer{l}.tem.W{k}"] = (c_out, c_out)
                    shapes[f"layer{l}.tem.M{k}"] = (n, n)
            shapes[f"layer{l}.tconv.kernel"] = (cfg.kernel_size, c_out, c_out)
            shapes[f"layer{l}.tconv.bias"] = (c_out,)
        shapes["head.W"] = (cfg.channels[-1], cfg.class_count)
        shapes["head.b"] = (cfg.class_count,)
        return shapes

    def init_params(self, seed: int | None = None) -> dict[str, np.ndarray]:
        """M = ones, biases = zeros, weights uniform in +-sqrt(6 / (fan_in + fan_out))."""
        rng = np.random.default_rng(self.config.seed if seed is None else seed)
        params = {}
        for name, shape in self.param_shapes().items():
            leaf = name.rsplit(".", 1)[1]
            if leaf.startswith("M"):
                params[name] = np.ones(shape)
            elif leaf in ("bias", "b"):
                params[name] = np.zeros(shape)
            elif leaf == "kernel":
                span, c_in, c_out = shape
                params[name] = _uniform(rng, shape, span * c_in, span * c_out)
            else:
                params[name] = _uniform(rng, shape, shape[0], shape[1])
        return params

    def check_params(self, params: dict[str, np.ndarray]):
        expected = self.param_shapes()
        missing = expected.keys() - params.keys()
        extra = params.keys() - expected.keys()
        if missing or extra:
            raise KeyError(f"parameter names differ: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, shape in expected.items():
            if np.shape(params[name]) != shape:
                raise T.ShapeError(f"{name}: expected shape {shape}, got {np.shape(params[name])}")

    def layer_params(self, values: dict, l: int) -> LayerParams:
        cfg = self.config
        pre = f"layer{l}."
        tem = cfg.tem_mode != "off"
        return LayerParams(
            spatial_w=[values[f"{pre}spatial.W{k}"] for k in range(NUM_SUBSETS)],
            spatial_m=[values[f"{pre}spatial.M{k}"] for k in range(NUM_SUBSETS)],
            kernel=values[f"{pre}tconv.kernel"],
            bias=values[f"{pre}tconv.bias"],
            tem_w=[values[f"{pre}tem.W{k}"] for k in range(NUM_SUBSETS)] if tem else [],
            tem_m=[values[f"{pre}tem.M{k}"] for k in range(NUM_SUBSETS)] if tem else [],
            stride=cfg.strides[l],
            tem_mode=cfg.tem_mode,
        )

    def logits(self, tape: Tape, variables: dict[str, Var], x) -> Var:
        cfg = self.config
        h = x if isinstance(x, Var) else tape.constant(x)
        if h.shape[-2] != cfg.topology.joint_count or h.shape[-1] != cfg.in_channels:
            raise T.ShapeError(
                f"sequence shape {h.shape} does not match {cfg.topology.joint_count} joints"
                f" x {cfg.in_channels} channels"
            )
        for l in range(len(cfg.channels)):
            h = layer_forward(h, self.spatial, self.temporal, self.layer_params(variables, l), cfg.residual)
        pooled = T.global_average_pool(h)
        return T.linear(pooled, variables["head.W"], variables["head.b"])

    def _record(self, params, x):
        self.check_params(params)
        tape = Tape()
        variables = {name: tape.leaf(value, name) for name, value in params.items()}
        return tape, self.logits(tape, variables, np.asarray(x, dtype=np.float64))

    def forward(self, params: dict[str, np.ndarray], x) -> np.ndarray:
        """Class probabilities for one ``[F, N, C]`` sequence or a ``[B, F, N, C]`` batch."""
        _, logits = self._record(params, x)
        return T.softmax(logits.value)

    def loss_and_grads(self, params, x, labels) -> tuple[float, np.ndarray, dict[str, np.ndarray]]:
        """Mean cross-entropy over the batch, probabilities and parameter gradients."""
        tape, logits = self._record(params, x)
        probs, loss = T.softmax_cross_entropy(logits, labels)
        return float(loss.value), probs, T.backward(tape, loss)

    def loss(self, params, x, labels) -> float:
        _, logits = self._record(params, x)
        return float(T.softmax_cross_entropy(logits, labels)[1].value)


def model_forward(sequence, config: ModelConfig, params: dict[str, np.ndarray]) -> np.ndarray:
    return STGCN(config).forward(params, sequence)
