"""Skeleton-sequence datasets and the seeded synthetic motion generator."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .topology import SkeletonTopology, path_distance


@dataclass(frozen=True)
class SkeletonSequenceSample:
    features: np.ndarray  # [F, N, C]
    label: int
    sample_id: str


@dataclass
class SkeletonDataset:
    """Equal-shape sequences stacked as ``features[sample, frame, joint, channel]``."""

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 4:
            raise ValueError(f"features must be [samples, frames, joints, channels], got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("one label per sample required")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        if not self.ids:
            self.ids = [f"s{i:05d}" for i in range(len(self.labels))]
        if len(self.ids) != len(self.labels):
            raise ValueError("one id per sample required")

    @classmethod
    def empty(cls, joints: int, frames: int, channels: int, class_count: int) -> "SkeletonDataset":
        return cls(np.zeros((0, frames, joints, channels)), np.zeros(0, dtype=np.int64), class_count, [])

    @property
    def shape(self) -> tuple[int, int, int]:
        """(joints, frames, channels) of every sample."""
        _, f, n, c = self.features.shape
        return n, f, c

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i: int) -> SkeletonSequenceSample:
        return SkeletonSequenceSample(self.features[i], int(self.labels[i]), self.ids[i])

    def subset(self, index) -> "SkeletonDataset":
        index = np.asarray(index, dtype=np.int64)
        return SkeletonDataset(self.features[index], self.labels[index], self.class_count,
                               [self.ids[i] for i in index])


def _rest_pose(topology: SkeletonTopology, dims: int) -> np.ndarray:
    """Joints spread radially around the cog joint, radius growing with hop count."""
    n = topology.joint_count
    hops = path_distance(topology)[topology.cog_joint]
    depth = max(int(hops.max()), 1)
    angle = 2 * np.pi * np.arange(n) / n
    pose = np.zeros((n, dims))
    pose[:, 0] = 0.4 * hops / depth * np.cos(angle)
    pose[:, 1] = 0.4 * hops / depth * np.sin(angle)
    return pose


def _longest_limb(topology: SkeletonTopology) -> list[int]:
    """Joints on the path from the cog joint to the farthest joint (cog excluded)."""
    dist = path_distance(topology)
    far = int(np.argmax(dist[topology.cog_joint]))
    path = [far]
    nbrs = topology.neighbours()
    while dist[topology.cog_joint, path[-1]] > 1:
        here = path[-1]
        path.append(min(j for j in nbrs[here] if dist[topology.cog_joint, j] < dist[topology.cog_joint, here]))
    return path[::-1] if topology.joint_count > 1 else []


def _swing_pair(topology: SkeletonTopology) -> tuple[int, int]:
    if not topology.bones:
        return topology.cog_joint, topology.cog_joint
    limb = _longest_limb(topology)
    if len(limb) >= 2:
        return limb[-2], limb[-1]
    return topology.bones[0]


def class_template(topology: SkeletonTopology, label: int, frames: int, dims: int = 2) -> np.ndarray:
    """Noise-free ``[F, N, dims]`` motion for one class.

    0 / 1: one limb drifts along +x / -x.  Even labels >= 2: the limb oscillates
    in y at a label-dependent frequency.  Odd labels >= 3: two adjacent joints
    swing in x, the distal one lagging a quarter period behind the proximal one.
    """
    if dims not in (2, 3):
        raise ValueError("coordinates must be 2-D or 3-D")
    base = _rest_pose(topology, dims)
    seq = np.repeat(base[None], frames, axis=0)
    t = np.arange(frames) / max(frames - 1, 1)
    limb = _longest_limb(topology)
    if label in (0, 1):
        sign = 1.0 if label == 0 else -1.0
        seq[:, limb, 0] += sign * 0.5 * t[:, None]
    elif label % 2 == 0:
        freq = label // 2
        seq[:, limb, 1] += 0.3 * np.sin(2 * np.pi * freq * t)[:, None]
    else:
        freq = (label - 1) // 2
        a, b = _swing_pair(topology)
        phase = 2 * np.pi * freq * t
        seq[:, a, 0] += 0.3 * np.sin(phase)
        seq[:, b, 0] += 0.3 * np.sin(phase - np.pi / 2)
    return seq


def generate_synthetic(topology: SkeletonTopology, class_count: int, samples_per_class: int, frames: int,
                       noise_sigma: float = 0.05, seed: int = 0, dims: int = 2) -> SkeletonDataset:
    """Class templates plus seeded Gaussian noise, clipped to [-1, 1], ordered by class."""
    if class_count < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    templates = [class_template(topology, c, frames, dims) for c in range(class_count)]
    feats, labels, ids = [], [], []
    for c in range(class_count):
        for s in range(samples_per_class):
            noise = rng.normal(0.0, noise_sigma, size=templates[c].shape) if noise_sigma > 0 else 0.0
            feats.append(np.clip(templates[c] + noise, -1.0, 1.0))
            labels.append(c)
            ids.append(f"c{c}_{s:04d}")
    if not feats:
        return SkeletonDataset.empty(topology.joint_count, frames, dims, class_count)
    return SkeletonDataset(np.stack(feats), np.array(labels), class_count, ids)


def train_test_split(dataset: SkeletonDataset, train_per_class: int, seed: int = 0) -> tuple[SkeletonDataset, SkeletonDataset]:
    """Stratified split: ``train_per_class`` random samples of each class go to train."""
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in range(dataset.class_count):
        idx = np.flatnonzero(dataset.labels == c)
        idx = idx[rng.permutation(len(idx))]
        train += sorted(idx[:train_per_class].tolist())
        test += sorted(idx[train_per_class:].tolist())
    return dataset.subset(sorted(train)), dataset.subset(sorted(test))
