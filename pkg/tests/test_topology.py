import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stgcn_tem import oracle
from stgcn_tem.topology import (
    DisconnectedGraphError,
    SkeletonTopology,
    TopologyError,
    build_spatial_partition,
    build_temporal_partition,
    chain,
    format_topology,
    load_topology,
    normalize_partition,
    ntu25,
    openpose18,
    parse_topology,
    path_distance,
    star,
)


@st.composite
def trees(draw, max_joints=9):
    """Random connected skeletons: a random tree plus a few extra edges."""
    n = draw(st.integers(1, max_joints))
    bones = {(draw(st.integers(0, i - 1)), i) for i in range(1, n)}
    if n > 2:
        for _ in range(draw(st.integers(0, 2))):
            i, j = draw(st.integers(0, n - 1)), draw(st.integers(0, n - 1))
            if i != j and (i, j) not in bones and (j, i) not in bones:
                bones.add((i, j))
    return SkeletonTopology(n, tuple(sorted(bones)), draw(st.integers(0, n - 1)))


# -- topology validation ---------------------------------------------------------

@pytest.mark.parametrize("bones, cog, msg", [
    (((0, 3),), 0, "outside"),
    (((1, 1),), 0, "self-loop"),
    (((0, 1), (1, 0)), 0, "duplicate"),
    (((0, 1),), 5, "cog"),
])
def test_invalid_topologies_rejected(bones, cog, msg):
    with pytest.raises(TopologyError, match=msg):
        SkeletonTopology(3, bones, cog)


def test_builtin_skeletons_are_trees():
    for topo, n in ((ntu25(), 25), (openpose18(), 18)):
        assert topo.joint_count == n
        assert len(topo.bones) == n - 1
        path_distance(topo)  # connected
    assert ntu25().joint_names[ntu25().cog_joint] == "spine_mid"
    assert openpose18().joint_names[openpose18().cog_joint] == "neck"


# -- path_distance ------------------------------------------------------------

def test_chain_two_hops():
    assert path_distance(chain(3))[0, 2] == 2


def test_self_distance_zero(named_topology):
    _, topo = named_topology
    assert np.all(np.diag(path_distance(topo)) == 0)


def test_ntu_wrist_to_head():
    # BFS over the bone list: wrist_left-elbow-shoulder-spine_shoulder-neck-head
    topo = ntu25()
    wrist, head = topo.joint_names.index("wrist_left"), topo.joint_names.index("head")
    assert oracle.bfs_distances(topo)[wrist, head] == 5
    assert path_distance(topo)[wrist, head] == 5
    assert path_distance(topo)[21, 19] == 12  # hand_tip_left to foot_right


def test_disconnected_graph_names_joint():
    topo = SkeletonTopology(4, ((0, 1), (1, 2)), 0)
    with pytest.raises(DisconnectedGraphError, match="joint 3"):
        path_distance(topo)
    with pytest.raises(DisconnectedGraphError):
        oracle.bfs_distances(topo)


@settings(max_examples=60, deadline=None)
@given(trees())
def test_distance_matches_bfs_and_is_a_metric(topo):
    d = path_distance(topo)
    assert np.array_equal(d, oracle.bfs_distances(topo))
    assert np.array_equal(d, d.T)
    # triangle inequality: d[i,k] <= d[i,j] + d[j,k]
    assert np.all(d[:, None, :] <= d[:, :, None] + d[None, :, :])


# -- partitions ---------------------------------------------------------------------

def test_chain3_spatial_masks():
    part = build_spatial_partition(chain(3, cog=1), 1)
    expect = np.zeros((3, 3, 3))
    expect[0] = np.eye(3)
    expect[1][0, 1] = expect[1][2, 1] = 1  # ends look inward to the centre
    expect[2][1, 0] = expect[2][1, 2] = 1  # centre looks outward
    assert np.array_equal(part.subset_masks, expect)
    assert part.kind == "spatial" and part.num_subsets == 3


def test_single_joint_partition():
    part = build_spatial_partition(SkeletonTopology(1, (), 0))
    assert np.array_equal(part.subset_masks[0], [[1.0]])
    assert not part.subset_masks[1:].any()


def test_temporal_equals_spatial_rule():
    topo = chain(3, cog=1)
    sp, tp = build_spatial_partition(topo, 1), build_temporal_partition(topo, 1)
    assert tp.kind == "temporal"
    assert tp.num_subsets == 3
    assert np.array_equal(sp.subset_masks, tp.subset_masks)
    assert np.array_equal(sp.normalized, tp.normalized)


def test_openpose_temporal_rows_count_self_plus_degree():
    topo = openpose18()
    part = build_temporal_partition(topo, 1)
    rows = part.subset_masks.sum(axis=(0, 2))
    assert rows.tolist() == [1 + topo.degree(j) for j in range(18)]
    assert rows.tolist() == [4, 4, 4, 3, 2, 4, 3, 2, 3, 3, 2, 3, 3, 2, 3, 3, 2, 2]


@pytest.mark.parametrize("hops", [1, 2, 3])
def test_ntu_masks_match_per_pair_labelling(hops):
    topo = ntu25()
    part = build_spatial_partition(topo, hops)
    naive = oracle.label_pairs(topo, hops)
    assert np.array_equal(part.subset_masks, naive)
    assert np.array_equal(part.subset_masks.sum(axis=2), naive.sum(axis=2))


def test_partition_rejects_zero_hops():
    with pytest.raises(ValueError):
        build_spatial_partition(chain(3), 0)


@settings(max_examples=60, deadline=None)
@given(trees(), st.integers(1, 3))
def test_partition_exhaustive_and_pure(topo, hops):
    part = build_spatial_partition(topo, hops)
    d = path_distance(topo)
    total = part.subset_masks.sum(axis=0)
    assert np.array_equal(total, (d <= hops).astype(float))
    assert np.array_equal(part.subset_masks[0], np.eye(topo.joint_count))
    assert np.array_equal(part.subset_masks, oracle.label_pairs(topo, hops))


@settings(max_examples=60, deadline=None)
@given(trees())
def test_transpose_pairing(topo):
    part = build_spatial_partition(topo, 1)
    to_cog = path_distance(topo)[:, topo.cog_joint]
    for i, j in topo.bones:
        if to_cog[i] != to_cog[j]:
            assert part.subset_masks[1][i, j] == part.subset_masks[2][j, i]
            assert part.subset_masks[1][j, i] == part.subset_masks[2][i, j]


@settings(max_examples=60, deadline=None)
@given(trees(), st.integers(1, 2))
def test_normalization_bounds(topo, hops):
    part = build_spatial_partition(topo, hops, epsilon=1e-6)
    norm = part.normalized
    assert np.all(np.isfinite(norm)) and np.all(norm >= 0)
    populated = part.subset_masks > 0
    assert np.all(norm[populated] > 0) and np.all(norm[populated] <= 1 + 1e-3)
    assert np.all(norm[~populated] == 0)


@settings(max_examples=40, deadline=None)
@given(trees(), st.randoms(use_true_random=False))
def test_permutation_equivariance(topo, rnd):
    perm = list(range(topo.joint_count))
    rnd.shuffle(perm)
    p = np.eye(topo.joint_count)[perm]  # p[old, new] one-hot -> P = p.T maps old to new
    P = p.T
    a = build_spatial_partition(topo, 1)
    b = build_spatial_partition(topo.permuted(perm), 1)
    for k in range(3):
        assert np.array_equal(b.subset_masks[k], P @ a.subset_masks[k] @ P.T)
        np.testing.assert_allclose(b.normalized[k], P @ a.normalized[k] @ P.T, rtol=0, atol=1e-15)


# -- normalization --------------------------------------------------------------

def test_normalize_identity():
    out = normalize_partition(np.eye(4)[None], 1e-12)
    np.testing.assert_allclose(out[0], np.eye(4), atol=1e-11)


def test_normalize_zero_mask():
    assert not normalize_partition(np.zeros((1, 3, 3)), 1e-6).any()


def test_normalize_centrifugal_chain_by_hand():
    mask = np.zeros((3, 3))
    mask[1, 0] = mask[1, 2] = 1.0
    # row 1 has degree 2; columns 0 and 2 have degree 1
    expected = 1.0 / np.sqrt((2 + 1e-6) * (1 + 1e-6))
    assert expected == pytest.approx(0.7071062508568815, abs=1e-15)
    out = normalize_partition(mask[None], 1e-6)[0]
    assert out[1, 0] == pytest.approx(expected, abs=1e-15)
    assert out[1, 2] == pytest.approx(expected, abs=1e-15)
    assert np.count_nonzero(out) == 2
    np.testing.assert_allclose(out, oracle.normalize_mask(mask, 1e-6), rtol=0, atol=1e-15)


def test_normalize_rejects_nonpositive_epsilon():
    with pytest.raises(ValueError):
        normalize_partition(np.eye(2)[None], 0.0)


# -- topology files -----------------------------------------------------------------

def test_topology_file_round_trip(tmp_path):
    for topo in (ntu25(), openpose18(), star(5)):
        path = tmp_path / "t.txt"
        path.write_text("# skeleton\n" + format_topology(topo), encoding="ascii")
        back = load_topology(path)
        assert back == topo


def test_topology_file_errors():
    with pytest.raises(TopologyError, match="line 3"):
        parse_topology("joints 3\ncog 0\nedge 0 1\n")
    with pytest.raises(TopologyError, match="cog"):
        parse_topology("joints 3\nbone 0 1\n")
    with pytest.raises(TopologyError, match="bad integer"):
        parse_topology("joints three\ncog 0\n")


def test_builtin_names():
    assert load_topology("chain5") == chain(5)
    assert load_topology("star4") == star(4)
    assert load_topology("ntu25") == ntu25()
