"""Spatial-temporal graph convolution for skeleton sequences with a temporal
extension module that links each joint to its neighbours in the previous frame."""
from .data import SkeletonDataset, SkeletonSequenceSample, generate_synthetic
from .layers import STGCN, LayerParams, ModelConfig, layer_forward, model_forward, spatial_gcn, tem_forward
from .topology import (
    PartitionedAdjacency,
    SkeletonTopology,
    build_spatial_partition,
    build_temporal_partition,
    normalize_partition,
    path_distance,
)
from .training import EvalReport, TrainConfig, evaluate, train

__version__ = "0.1.0"
