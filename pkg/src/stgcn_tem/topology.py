"""Skeleton graphs, hop distances and the three-subset partition matrices.

Subset convention used everywhere in the package::

    0  the root joint itself
    1  centripetal neighbours (strictly closer to the centre-of-gravity joint)
    2  centrifugal neighbours (every other neighbour)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

NUM_SUBSETS = 3
DEFAULT_EPSILON = 1e-6

SELF, CENTRIPETAL, CENTRIFUGAL = 0, 1, 2


class TopologyError(ValueError):
    """Raised for malformed skeleton definitions."""


class DisconnectedGraphError(TopologyError):
    def __init__(self, joint: int, source: int):
        super().__init__(f"joint {joint} is unreachable from joint {source}")
        self.joint = joint


@dataclass(frozen=True)
class SkeletonTopology:
    """Joints, undirected bones and the centre-of-gravity joint."""

    joint_count: int
    bones: tuple[tuple[int, int], ...]
    cog_joint: int
    joint_names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        n = self.joint_count
        if n < 1:
            raise TopologyError(f"joint_count must be positive, got {n}")
        if not 0 <= self.cog_joint < n:
            raise TopologyError(f"cog joint {self.cog_joint} outside [0, {n})")
        seen = set()
        canon = []
        for i, j in self.bones:
            i, j = int(i), int(j)
            if not (0 <= i < n and 0 <= j < n):
                raise TopologyError(f"bone ({i}, {j}) has an endpoint outside [0, {n})")
            if i == j:
                raise TopologyError(f"self-loop bone at joint {i}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise TopologyError(f"duplicate bone ({i}, {j})")
            seen.add(key)
            canon.append((i, j))
        object.__setattr__(self, "bones", tuple(canon))
        if self.joint_names is not None:
            names = tuple(self.joint_names)
            if len(names) != n:
                raise TopologyError(f"expected {n} joint names, got {len(names)}")
            object.__setattr__(self, "joint_names", names)

    def neighbours(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.joint_count)]
        for i, j in self.bones:
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def bone_matrix(self) -> np.ndarray:
        """Symmetric 0/1 adjacency of the bones, no self-loops."""
        a = np.zeros((self.joint_count, self.joint_count))
        for i, j in self.bones:
            a[i, j] = a[j, i] = 1.0
        return a

    def degree(self, joint: int) -> int:
        return sum(joint in b for b in self.bones)

    def permuted(self, perm: Sequence[int]) -> "SkeletonTopology":
        """Relabel joints so that old joint ``j`` becomes ``perm[j]``."""
        perm = [int(p) for p in perm]
        if sorted(perm) != list(range(self.joint_count)):
            raise TopologyError("not a permutation of the joint indices")
        names = None
        if self.joint_names is not None:
            names = [""] * self.joint_count
            for old, new in enumerate(perm):
                names[new] = self.joint_names[old]
        return SkeletonTopology(
            self.joint_count,
            tuple((perm[i], perm[j]) for i, j in self.bones),
            perm[self.cog_joint],
            None if names is None else tuple(names),
        )


@dataclass(frozen=True)
class PartitionedAdjacency:
    kind: Literal["spatial", "temporal"]
    max_hop: int
    subset_masks: np.ndarray  # (K, N, N) of 0.0 / 1.0
    normalized: np.ndarray  # (K, N, N)
    epsilon: float

    @property
    def num_subsets(self) -> int:
        return self.subset_masks.shape[0]

    @property
    def joint_count(self) -> int:
        return self.subset_masks.shape[1]


def path_distance(topology: SkeletonTopology) -> np.ndarray:
    """All-pairs hop counts, ``dist[i, j]`` = fewest bones between i and j.

    Uses Floyd-Warshall relaxation over the bone graph; raises
    DisconnectedGraphError if some joint cannot be reached.
    """
    n = topology.joint_count
    inf = n + 1  # longer than any simple path
    dist = np.full((n, n), inf, dtype=np.int64)
    np.fill_diagonal(dist, 0)
    for i, j in topology.bones:
        dist[i, j] = dist[j, i] = 1
    for k in range(n):
        dist = np.minimum(dist, dist[:, k : k + 1] + dist[k : k + 1, :])
    row = dist[topology.cog_joint]
    unreachable = np.flatnonzero(row >= inf)
    if unreachable.size:
        raise DisconnectedGraphError(int(unreachable[0]), topology.cog_joint)
    dist.setflags(write=False)
    return dist


def _label_masks(topology: SkeletonTopology, max_hop: int, dist: np.ndarray) -> np.ndarray:
    if max_hop < 1:
        raise ValueError(f"maximum hop distance must be >= 1, got {max_hop}")
    n = topology.joint_count
    to_cog = dist[:, topology.cog_joint]
    in_reach = dist <= max_hop
    closer = to_cog[None, :] < to_cog[:, None]  # [i, j]: j strictly closer than i
    eye = np.eye(n, dtype=bool)
    masks = np.zeros((NUM_SUBSETS, n, n))
    masks[SELF][eye] = 1.0
    masks[CENTRIPETAL][in_reach & ~eye & closer] = 1.0
    masks[CENTRIFUGAL][in_reach & ~eye & ~closer] = 1.0
    return masks


def normalize_partition(masks: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Degree-normalize each subset mask independently.

    ``out_k[i, j] = mask_k[i, j] / sqrt((rowdeg_k[i] + eps) * (coldeg_k[j] + eps))``.
    For a symmetric mask this is the familiar ``D^-1/2 A D^-1/2``; for the
    directed centripetal/centrifugal masks the column degree keeps every entry
    at most 1.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    masks = np.asarray(masks, dtype=np.float64)
    row = masks.sum(axis=-1) + epsilon
    col = masks.sum(axis=-2) + epsilon
    return masks / np.sqrt(row[..., :, None]) / np.sqrt(col[..., None, :])


def _build(topology, max_hop, dist, epsilon, kind) -> PartitionedAdjacency:
    if dist is None:
        dist = path_distance(topology)
    masks = _label_masks(topology, max_hop, dist)
    norm = normalize_partition(masks, epsilon)
    masks.setflags(write=False)
    norm.setflags(write=False)
    return PartitionedAdjacency(kind, max_hop, masks, norm, epsilon)


def build_spatial_partition(
    topology: SkeletonTopology,
    max_hop: int = 1,
    dist: np.ndarray | None = None,
    epsilon: float = DEFAULT_EPSILON,
) -> PartitionedAdjacency:
    """Intra-frame sampling area split into self / centripetal / centrifugal."""
    return _build(topology, max_hop, dist, epsilon, "spatial")


def build_temporal_partition(
    topology: SkeletonTopology,
    max_hop: int = 1,
    dist: np.ndarray | None = None,
    epsilon: float = DEFAULT_EPSILON,
) -> PartitionedAdjacency:
    """Inter-frame partition: row ``i`` lists the joints read at frame t-1.

    Labelled with the same rule as the spatial partition; subset 0 is the
    same-joint link across consecutive frames.
    """
    return _build(topology, max_hop, dist, epsilon, "temporal")


# -- built-in skeletons -----------------------------------------------------

NTU25_NAMES = (
    "spine_base", "spine_mid", "neck", "head",
    "shoulder_left", "elbow_left", "wrist_left", "hand_left",
    "shoulder_right", "elbow_right", "wrist_right", "hand_right",
    "hip_left", "knee_left", "ankle_left", "foot_left",
    "hip_right", "knee_right", "ankle_right", "foot_right",
    "spine_shoulder", "hand_tip_left", "thumb_left", "hand_tip_right", "thumb_right",
)
NTU25_BONES = (
    (0, 1), (1, 20), (2, 20), (3, 2), (4, 20), (5, 4), (6, 5), (7, 6),
    (8, 20), (9, 8), (10, 9), (11, 10), (12, 0), (13, 12), (14, 13), (15, 14),
    (16, 0), (17, 16), (18, 17), (19, 18), (21, 22), (22, 7), (23, 24), (24, 11),
)

OPENPOSE18_NAMES = (
    "nose", "neck",
    "right_shoulder", "right_elbow", "right_wrist",
    "left_shoulder", "left_elbow", "left_wrist",
    "right_hip", "right_knee", "right_ankle",
    "left_hip", "left_knee", "left_ankle",
    "right_eye", "left_eye", "right_ear", "left_ear",
)
OPENPOSE18_BONES = (
    (4, 3), (3, 2), (7, 6), (6, 5), (13, 12), (12, 11), (10, 9), (9, 8),
    (11, 5), (8, 2), (5, 1), (2, 1), (0, 1), (15, 0), (14, 0), (17, 15), (16, 14),
)


def ntu25() -> SkeletonTopology:
    return SkeletonTopology(25, NTU25_BONES, cog_joint=1, joint_names=NTU25_NAMES)


def openpose18() -> SkeletonTopology:
    return SkeletonTopology(18, OPENPOSE18_BONES, cog_joint=1, joint_names=OPENPOSE18_NAMES)


def chain(n: int, cog: int | None = None) -> SkeletonTopology:
    """Path graph 0-1-...-(n-1); centre joint by default."""
    return SkeletonTopology(n, tuple((i, i + 1) for i in range(n - 1)), (n // 2) if cog is None else cog)


def star(n: int) -> SkeletonTopology:
    """Joint 0 is the hub, joints 1..n-1 are leaves."""
    return SkeletonTopology(n, tuple((0, i) for i in range(1, n)), 0)


BUILTIN = {"ntu25": ntu25, "openpose18": openpose18}


# -- topology text files ----------------------------------------------------

def parse_topology(text: str) -> SkeletonTopology:
    joints = cog = None
    bones: list[tuple[int, int]] = []
    for lineno, raw in enumerate(text.split("\n"), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "joints" and len(parts) == 2:
                joints = int(parts[1])
            elif parts[0] == "cog" and len(parts) == 2:
                cog = int(parts[1])
            elif parts[0] == "bone" and len(parts) == 3:
                bones.append((int(parts[1]), int(parts[2])))
            else:
                raise TopologyError(f"line {lineno}: cannot parse {raw!r}")
        except ValueError as exc:
            if isinstance(exc, TopologyError):
                raise
            raise TopologyError(f"line {lineno}: bad integer in {raw!r}") from None
    if joints is None or cog is None:
        raise TopologyError("topology file needs both a 'joints' and a 'cog' line")
    return SkeletonTopology(joints, tuple(bones), cog)


def format_topology(topology: SkeletonTopology) -> str:
    lines = [f"joints {topology.joint_count}", f"cog {topology.cog_joint}"]
    lines += [f"bone {i} {j}" for i, j in topology.bones]
    return "\n".join(lines) + "\n"


def load_topology(source: str | Path) -> SkeletonTopology:
    """Resolve a built-in name (``ntu25``, ``openpose18``, ``chain5``, ``star5``) or a file path."""
    name = str(source)
    if name in BUILTIN:
        return BUILTIN[name]()
    for prefix, factory in (("chain", chain), ("star", star)):
        if name.startswith(prefix) and name[len(prefix):].isdigit():
            return factory(int(name[len(prefix):]))
    return parse_topology(Path(source).read_text(encoding="ascii"))

