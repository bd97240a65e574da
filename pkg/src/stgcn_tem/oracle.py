"""Brute-force reference implementations used to cross-check the fast paths.

Nothing here calls into :mod:`stgcn_tem.tensor` or the partition builders in
:mod:`stgcn_tem.topology`: every result is produced with explicit Python
loops over scalars so that agreement with the vectorized code is meaningful.
These routines are slow by design.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .topology import DisconnectedGraphError, SkeletonTopology


def bfs_distances(topology: SkeletonTopology) -> np.ndarray:
    """Hop-count table from one breadth-first search per source joint."""
    n = topology.joint_count
    adj = [[] for _ in range(n)]
    for i, j in topology.bones:
        adj[i].append(j)
        adj[j].append(i)
    table = np.zeros((n, n), dtype=np.int64)
    for src in range(n):
        seen = [-1] * n
        seen[src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if seen[v] < 0:
                    seen[v] = seen[u] + 1
                    queue.append(v)
        for dst in range(n):
            if seen[dst] < 0:
                raise DisconnectedGraphError(dst, src)
            table[src, dst] = seen[dst]
    return table


def label_pairs(topology: SkeletonTopology, max_hop: int) -> np.ndarray:
    """Per-pair labelling loop: (3, N, N) subset masks."""
    dist = bfs_distances(topology)
    n = topology.joint_count
    cog = topology.cog_joint
    masks = np.zeros((3, n, n))
    for i in range(n):
        for j in range(n):
            d = dist[i][j]
            if d == 0:
                masks[0][i][j] = 1.0
            elif d <= max_hop:
                label = 1 if dist[j][cog] < dist[i][cog] else 2
                masks[label][i][j] = 1.0
    return masks


def normalize_mask(mask, epsilon: float) -> np.ndarray:
    """Scalar expansion of the degree normalization of a single subset mask."""
    n = len(mask)
    row = [sum(mask[i][j] for j in range(n)) + epsilon for i in range(n)]
    col = [sum(mask[i][j] for i in range(n)) + epsilon for j in range(n)]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if mask[i][j]:
                out[i][j] = mask[i][j] / math.sqrt(row[i] * col[j])
    return out


def _project(vec, w, c_out):
    """Row vector times matrix, scalar loops."""
    return [sum(vec[c] * w[c][d] for c in range(len(vec))) for d in range(c_out)]


def _graph_step(source_frame, normalized, weights, masks, n, c_out):
    out = [[0.0] * c_out for _ in range(n)]
    for i in range(n):
        for k in range(len(weights)):
            for j in range(n):
                a = normalized[k][i][j] * masks[k][i][j]
                if a == 0.0:
                    continue
                contrib = _project(source_frame[j], weights[k], c_out)
                for d in range(c_out):
                    out[i][d] += a * contrib[d]
    return out


def spatial_gcn_naive(f_in, topology: SkeletonTopology, partition, weights, masks) -> np.ndarray:
    """Per-vertex graph convolution, frame by frame: loops over (t, i, k, j)."""
    f_in = np.asarray(f_in, dtype=np.float64)
    frames, n, _ = f_in.shape
    if n != topology.joint_count:
        raise ValueError(f"features have {n} joints, topology has {topology.joint_count}")
    c_out = np.shape(weights[0])[1]
    return np.array([
        _graph_step(f_in[t].tolist(), partition.normalized, weights, masks, n, c_out)
        for t in range(frames)
    ]).reshape(frames, n, c_out)


def tem_naive(f_in, topology: SkeletonTopology, partition, weights, masks) -> np.ndarray:
    """Temporal extension in replace form: frame t reads hop-neighbours at t - 1."""
    f_in = np.asarray(f_in, dtype=np.float64)
    frames, n, c = f_in.shape
    if n != topology.joint_count:
        raise ValueError(f"features have {n} joints, topology has {topology.joint_count}")
    dist = bfs_distances(topology)
    reach = [[dist[i][j] <= partition.max_hop for j in range(n)] for i in range(n)]
    gated = [[[masks[k][i][j] if reach[i][j] else 0.0 for j in range(n)] for i in range(n)]
             for k in range(len(weights))]
    c_out = np.shape(weights[0])[1]
    out = np.zeros((frames, n, c_out))
    zero = [[0.0] * c for _ in range(n)]
    for t in range(frames):
        prev = f_in[t - 1].tolist() if t > 0 else zero
        out[t] = _graph_step(prev, partition.normalized, weights, gated, n, c_out)
    return out


def conv_time_naive(f_in, kernel, bias, stride: int = 1) -> np.ndarray:
    f_in = np.asarray(f_in, dtype=np.float64)
    frames, n, c_in = f_in.shape
    span, _, c_out = np.shape(kernel)
    pad = span // 2
    out_frames = (frames + stride - 1) // stride
    out = np.zeros((out_frames, n, c_out))
    for f in range(out_frames):
        for i in range(n):
            for d in range(c_out):
                acc = bias[d]
                for g in range(span):
                    src = f * stride + g - pad
                    if 0 <= src < frames:
                        for c in range(c_in):
                            acc += f_in[src][i][c] * kernel[g][c][d]
                out[f][i][d] = acc
    return out


@dataclass
class _Partition:
    max_hop: int
    normalized: list


def model_forward_naive(sequence, model, params) -> np.ndarray:
    """Straight-line re-evaluation of the whole classifier for one sequence.

    Only ``model.config`` is read; the partitions are rebuilt here from
    :func:`label_pairs` and :func:`normalize_mask`.
    """
    cfg = model.config
    topo = cfg.topology
    spatial = _Partition(cfg.spatial_hops, [normalize_mask(m, cfg.epsilon) for m in label_pairs(topo, cfg.spatial_hops)])
    temporal = _Partition(cfg.temporal_hops,
                          [normalize_mask(m, cfg.epsilon) for m in label_pairs(topo, cfg.temporal_hops)])
    h = np.asarray(sequence, dtype=np.float64)
    for l, (c_in, c_out) in enumerate(cfg.widths):
        pre = f"layer{l}."
        sw = [params[f"{pre}spatial.W{k}"] for k in range(3)]
        sm = [params[f"{pre}spatial.M{k}"] for k in range(3)]
        x_in = h
        h = np.maximum(spatial_gcn_naive(h, topo, spatial, sw, sm), 0.0)
        if cfg.tem_mode != "off":
            tw = [params[f"{pre}tem.W{k}"] for k in range(3)]
            tm = [params[f"{pre}tem.M{k}"] for k in range(3)]
            g = tem_naive(h, topo, temporal, tw, tm)
            h = g if cfg.tem_mode == "replace" else h + g
        h = np.maximum(conv_time_naive(h, params[f"{pre}tconv.kernel"], params[f"{pre}tconv.bias"],
                                       cfg.strides[l]), 0.0)
        if cfg.residual and h.shape == x_in.shape:
            h = h + x_in
    frames, n, c = h.shape
    pooled = [sum(h[t][i][d] for t in range(frames) for i in range(n)) / (frames * n) for d in range(c)]
    w, b = params["head.W"], params["head.b"]
    logits = [b[k] + sum(pooled[d] * w[d][k] for d in range(c)) for k in range(cfg.class_count)]
    top = max(logits)
    exps = [math.exp(z - top) for z in logits]
    total = sum(exps)
    return np.array([e / total for e in exps])


# -- finite differences -------------------------------------------------------

class NonFiniteLossError(ArithmeticError):
    def __init__(self, name: str, index: tuple, sign: int):
        super().__init__(f"non-finite loss after perturbing {name}{list(index)} by {'+' if sign > 0 else '-'}h")
        self.name = name
        self.index = index


def relative_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-12)


@dataclass
class GradCheckReport:
    step: float
    tolerance: float
    max_rel_error: dict[str, float] = field(default_factory=dict)
    worst_index: dict[str, tuple] = field(default_factory=dict)
    failing: tuple[str, tuple] | None = None

    @property
    def passed(self) -> bool:
        return self.failing is None

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    def summary(self) -> str:
        lines = [f"{name:<28s} max rel err {err:.3e}" for name, err in self.max_rel_error.items()]
        verdict = "PASS" if self.passed else f"FAIL at {self.failing[0]}{list(self.failing[1])}"
        lines.append(f"step={self.step:g} tolerance={self.tolerance:g} worst={self.worst:.3e} {verdict}")
        return "\n".join(lines)


def numeric_gradients(loss_function: Callable[[dict], float], params: dict, step: float = 1e-5) -> dict:
    """Central differences ``(L(p + h) - L(p - h)) / 2h`` for every scalar parameter."""
    if step <= 0:
        raise ValueError("step must be positive")
    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    grads = {}
    for name, arr in work.items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + step
            up = loss_function(work)
            arr[idx] = orig - step
            down = loss_function(work)
            arr[idx] = orig
            if not math.isfinite(up):
                raise NonFiniteLossError(name, idx, +1)
            if not math.isfinite(down):
                raise NonFiniteLossError(name, idx, -1)
            g[idx] = (up - down) / (2 * step)
        grads[name] = g
    return grads


def finite_diff_gradients(loss_function, params: dict, analytic: dict, step: float = 1e-5,
                          tolerance: float = 1e-5) -> GradCheckReport:
    """Compare reverse-mode ``analytic`` gradients with central differences."""
    numeric = numeric_gradients(loss_function, params, step)
    report = GradCheckReport(step=step, tolerance=tolerance)
    for name, num in numeric.items():
        ana = np.asarray(analytic[name], dtype=np.float64)
        if ana.shape != num.shape:
            raise ValueError(f"{name}: analytic gradient shape {ana.shape} != {num.shape}")
        worst, where = 0.0, ()
        for idx in np.ndindex(num.shape):
            err = relative_error(float(ana[idx]), float(num[idx]))
            if err > worst:
                worst, where = err, idx
        report.max_rel_error[name] = worst
        report.worst_index[name] = where
        if worst > tolerance and report.failing is None:
            report.failing = (name, where)
    return report
