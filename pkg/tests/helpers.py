"""Shared builders for the layer and acceptance tests."""
import numpy as np

from stgcn_tem.layers import ModelConfig, STGCN
from stgcn_tem.topology import SkeletonTopology, build_spatial_partition, build_temporal_partition


def random_tree(rng, n) -> SkeletonTopology:
    bones = tuple((int(rng.integers(0, i)), i) for i in range(1, n))
    return SkeletonTopology(n, bones, int(rng.integers(0, n)))


def random_layer_instance(rng, n_max=6, f_max=5, c_max=4):
    """Random skeleton, partitions, features, weights and masks at micro scale."""
    n = int(rng.integers(1, n_max + 1))
    frames = int(rng.integers(1, f_max + 1))
    c_in, c_out = (int(v) for v in rng.integers(1, c_max + 1, size=2))
    topo = random_tree(rng, n)
    sp, tp = build_spatial_partition(topo), build_temporal_partition(topo)
    x = rng.normal(size=(frames, n, c_in))
    ws = [rng.normal(size=(c_in, c_out)) for _ in range(3)]
    wt = [rng.normal(size=(c_in, c_in)) for _ in range(3)]
    ms = [rng.uniform(0.0, 2.0, size=(n, n)) for _ in range(3)]
    return topo, sp, tp, x, ws, wt, ms


def permute_params(params, perm):
    """Move every joint-indexed (N x N) matrix to the relabelled joint order."""
    out = {}
    for name, value in params.items():
        if ".M" in name:
            moved = np.empty_like(value)
            moved[np.ix_(perm, perm)] = value
            out[name] = moved
        else:
            out[name] = value
    return out


def randomized_model(topology, seed, tem_mode="residual", channels=(3, 3), in_channels=2, classes=3,
                     kernel_size=3, strides=None):
    cfg = ModelConfig(topology, in_channels, channels, classes, strides=strides, kernel_size=kernel_size,
                      tem_mode=tem_mode, seed=seed)
    model = STGCN(cfg)
    rng = np.random.default_rng(seed + 1000)
    params = model.init_params()
    for name, value in params.items():
        if ".M" in name:
            params[name] = rng.uniform(0.5, 1.5, size=value.shape)
        elif name.endswith("bias") or name.endswith(".b"):
            params[name] = rng.uniform(-0.1, 0.1, size=value.shape)
    return model, params
