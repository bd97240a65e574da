"""Finite-difference checks of every tape primitive and of a 2-layer model."""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import tensor as T
from .layers import ModelConfig, STGCN, spatial_gcn, tem_forward
from .oracle import GradCheckReport, finite_diff_gradients
from .topology import build_spatial_partition, build_temporal_partition, chain

PRIMITIVE_TOLERANCE = 1e-6
MODEL_TOLERANCE = 1e-5
STEP = 1e-5


def _away_from_zero(rng, shape, low=0.1, high=10.0):
    return rng.uniform(low, high, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def check_op(build: Callable[..., T.Var], inputs: dict[str, np.ndarray], rng: np.random.Generator,
             step: float = STEP, tolerance: float = PRIMITIVE_TOLERANCE, project: bool = True) -> GradCheckReport:
    """Gradcheck ``build(**vars)``; non-scalar outputs are reduced with a fixed random projection."""
    names = list(inputs)
    probe = build(**{k: np.asarray(v) for k, v in inputs.items()})
    weights = rng.uniform(-1, 1, size=probe.shape) if project else None

    def record(values):
        tape = T.Tape()
        out = build(**{k: tape.leaf(values[k], k) for k in names})
        return tape, (T.weighted_sum(out, weights) if project else out)

    tape, loss = record(inputs)
    analytic = T.backward(tape, loss)
    return finite_diff_gradients(lambda v: float(record(v)[1].value), inputs, analytic, step, tolerance)


def primitive_cases(rng: np.random.Generator) -> dict[str, tuple]:
    """name -> (build, inputs, project) for every primitive plus the two graph layers."""
    topo = chain(3, cog=1)
    sp = build_spatial_partition(topo)
    tp = build_temporal_partition(topo)
    feats = lambda c=2: rng.uniform(-10, 10, size=(4, 3, c))  # noqa: E731
    mats = lambda *s: rng.uniform(-10, 10, size=s)  # noqa: E731
    layer_inputs = {"x": feats(), **{f"w{k}": mats(2, 2) for k in range(3)},
                    **{f"m{k}": mats(3, 3) for k in range(3)}}

    def gcn(x, w0, w1, w2, m0, m1, m2):
        return spatial_gcn(x, sp, [w0, w1, w2], [m0, m1, m2])

    def tem(mode):
        return lambda x, w0, w1, w2, m0, m1, m2: tem_forward(x, tp, [w0, w1, w2], [m0, m1, m2], mode)

    labels = np.array([0, 2, 1])
    return {
        "matmul": (T.matmul, {"a": mats(3, 4), "b": mats(4, 2)}, True),
        "add": (lambda a, b: T.elementwise(a, b, "add"), {"a": mats(3, 2), "b": mats(3, 2)}, True),
        "mul": (lambda a, b: T.elementwise(a, b, "mul"), {"a": mats(3, 2), "b": mats(3, 2)}, True),
        "scale": (lambda a: T.elementwise(a, -2.5, "scale"), {"a": mats(3, 2)}, True),
        "relu": (T.relu, {"x": _away_from_zero(rng, (4, 3, 2))}, True),
        "graph_mix": (T.graph_mix, {"adjacency": mats(3, 3), "x": feats()}, True),
        "channel_mix": (T.channel_mix, {"x": feats(), "w": mats(2, 3)}, True),
        "shift_frames": (T.shift_frames, {"x": feats()}, True),
        "conv_time": (lambda x, k, b: T.conv_time(x, k, b, 1),
                      {"x": feats(), "k": mats(3, 2, 3), "b": mats(3)}, True),
        "conv_time_stride2": (lambda x, k, b: T.conv_time(x, k, b, 2),
                              {"x": feats(), "k": mats(3, 2, 2), "b": mats(2)}, True),
        "global_average_pool": (T.global_average_pool, {"x": feats()}, True),
        "linear": (T.linear, {"x": mats(3), "w": mats(3, 4), "b": mats(4)}, True),
        "softmax_cross_entropy": (lambda z: T.softmax_cross_entropy(z, labels)[1],
                                  {"z": rng.uniform(-3, 3, size=(3, 4))}, False),
        "spatial_gcn": (gcn, layer_inputs, True),
        "tem_replace": (tem("replace"), layer_inputs, True),
        "tem_residual": (tem("residual"), layer_inputs, True),
    }


def micro_model(seed: int = 0) -> tuple[STGCN, dict[str, np.ndarray], np.ndarray, np.ndarray]:
    """2-layer model with TEM on a 4-joint chain and random non-trivial parameters."""
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(chain(4, cog=1), in_channels=2, channels=(3, 3), class_count=3,
                      strides=(1, 2), kernel_size=3, seed=seed)
    model = STGCN(cfg)
    params = model.init_params()
    for name, value in params.items():
        if ".M" in name:
            params[name] = rng.uniform(0.5, 1.5, size=value.shape)
        elif name.endswith("bias") or name.endswith(".b"):
            params[name] = rng.uniform(-0.2, 0.2, size=value.shape)
    x = rng.uniform(-1, 1, size=(2, 5, 4, 2))
    labels = np.array([0, 2])
    return model, params, x, labels


def check_model(seed: int = 0, step: float = STEP, tolerance: float = MODEL_TOLERANCE) -> GradCheckReport:
    model, params, x, labels = micro_model(seed)
    _, _, analytic = model.loss_and_grads(params, x, labels)
    return finite_diff_gradients(lambda p: model.loss(p, x, labels), params, analytic, step, tolerance)


def run_suite(seed: int = 0, step: float = STEP) -> dict[str, GradCheckReport]:
    rng = np.random.default_rng(seed)
    reports = {name: check_op(build, inputs, rng, step, project=project)
               for name, (build, inputs, project) in primitive_cases(rng).items()}
    reports["model_2layer_tem"] = check_model(seed, step)
    return reports
