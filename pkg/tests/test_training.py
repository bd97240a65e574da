import numpy as np
import pytest

from stgcn_tem.data import SkeletonDataset, class_template, generate_synthetic, train_test_split
from stgcn_tem.layers import ModelConfig, STGCN
from stgcn_tem.topology import chain, ntu25, openpose18
from stgcn_tem.training import (
    NesterovSGD,
    TrainConfig,
    TrainingDivergedError,
    evaluate,
    format_history,
    rank_classes,
    report_from_probabilities,
    train,
)

# -- synthetic data ----------------------------------------------------------------------


def test_generator_is_seeded():
    a = generate_synthetic(openpose18(), 4, 3, 20, 0.05, seed=1)
    b = generate_synthetic(openpose18(), 4, 3, 20, 0.05, seed=1)
    c = generate_synthetic(openpose18(), 4, 3, 20, 0.05, seed=2)
    assert a.features.tobytes() == b.features.tobytes() and a.ids == b.ids
    assert not np.array_equal(a.features, c.features)
    assert a.features.shape == (12, 20, 18, 2) and a.labels.tolist() == [0] * 3 + [1] * 3 + [2] * 3 + [3] * 3
    assert np.abs(a.features).max() <= 1.0


def test_noiseless_samples_equal_their_template():
    ds = generate_synthetic(ntu25(), 5, 2, 12, noise_sigma=0.0, seed=0, dims=3)
    for s in range(len(ds)):
        np.testing.assert_array_equal(ds.features[s], np.clip(class_template(ntu25(), ds.labels[s], 12, 3), -1, 1))


def test_templates_are_distinct_and_nearest_template_separates_noisy_data():
    topo = openpose18()
    templates = np.stack([np.clip(class_template(topo, c, 20), -1, 1) for c in range(6)])
    for i in range(6):
        for j in range(i):
            assert np.abs(templates[i] - templates[j]).max() > 0.2
    ds = generate_synthetic(topo, 6, 10, 20, 0.05, seed=4)
    dists = ((ds.features[:, None] - templates[None]) ** 2).sum(axis=(2, 3, 4))
    assert np.array_equal(dists.argmin(axis=1), ds.labels)


def test_train_test_split_is_stratified():
    ds = generate_synthetic(openpose18(), 4, 20, 5, 0.05, seed=0)
    tr, te = train_test_split(ds, 10, seed=0)
    assert np.bincount(tr.labels).tolist() == [10] * 4 and np.bincount(te.labels).tolist() == [10] * 4
    assert not set(tr.ids) & set(te.ids)


def test_dataset_validation():
    with pytest.raises(ValueError, match="labels"):
        SkeletonDataset(np.zeros((2, 1, 1, 1)), [0, 3], 3)
    with pytest.raises(ValueError):
        SkeletonDataset(np.zeros((2, 1, 1)), [0, 1], 3)
    assert SkeletonDataset.empty(4, 3, 2, 5).shape == (4, 3, 2)


# -- optimizer -----------------------------------------------------------------------------

def test_zero_learning_rate_leaves_params_unchanged():
    theta = {"w": np.array([1.0, -2.0])}
    opt = NesterovSGD(0.9, 1e-4)
    for _ in range(3):
        theta = opt.step(theta, {"w": np.array([5.0, 5.0])}, 0.0)
    assert theta["w"].tolist() == [1.0, -2.0]


def test_plain_gradient_descent_on_quadratic():
    # L = |theta|^2, mu = 0: theta_k = (1 - 2 lr)^k theta_0
    theta = {"w": np.array([1.0, -3.0])}
    opt = NesterovSGD(0.0, 0.0)
    for _ in range(5):
        theta = opt.step(theta, {"w": 2 * theta["w"]}, 0.1)
    np.testing.assert_allclose(theta["w"], 0.8**5 * np.array([1.0, -3.0]), rtol=1e-14)


def test_weight_decay_alone_is_geometric():
    theta = {"w": np.array([2.0])}
    opt = NesterovSGD(0.0, 0.5)
    for _ in range(4):
        theta = opt.step(theta, {"w": np.zeros(1)}, 0.1)
    assert theta["w"][0] == pytest.approx(2.0 * 0.95**4, rel=1e-14)


def test_nesterov_by_hand():
    opt = NesterovSGD(0.9, 0.0)
    p = opt.step({"w": np.array([1.0])}, {"w": np.array([1.0])}, 0.1)
    # v1 = -0.1; p1 = 1 + 0.9 * -0.1 - 0.1 = 0.81
    assert p["w"][0] == pytest.approx(0.81, abs=1e-15)
    p = opt.step(p, {"w": np.array([1.0])}, 0.1)
    # v2 = 0.9 * -0.1 - 0.1 = -0.19; p2 = 0.81 + 0.9 * -0.19 - 0.1 = 0.539
    assert p["w"][0] == pytest.approx(0.539, abs=1e-15)


def test_learning_rate_schedule():
    cfg = TrainConfig(learning_rate=0.1, epochs=8)
    assert [cfg.lr_at(e) for e in range(8)] == pytest.approx([0.1] * 4 + [0.01] * 2 + [0.001] * 2)
    assert TrainConfig(learning_rate=0.1, epochs=8, lr_schedule="fixed").lr_at(7) == 0.1
    assert TrainConfig(epochs=8, lr_decay_epochs=(1,)).lr_at(1) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        TrainConfig(momentum=1.0)
    with pytest.raises(ValueError):
        TrainConfig(lr_schedule="cosine")


# -- training loop -----------------------------------------------------------------------------

def tiny_problem():
    topo = chain(5)
    ds = generate_synthetic(topo, 2, 10, 8, noise_sigma=0.0, seed=0)
    return ModelConfig(topo, 2, (4,), 2, kernel_size=3, seed=0), ds


def test_noiseless_two_class_problem_is_learned():
    cfg, ds = tiny_problem()
    params, history = train(cfg, ds, TrainConfig(learning_rate=0.01, epochs=200, batch_size=4))
    assert len(history) == 200 and history[-1].train_accuracy == 1.0
    assert history[-1].loss < history[0].loss
    assert evaluate(cfg, params, ds).top1 == 1.0


def test_training_is_deterministic():
    cfg, ds = tiny_problem()
    tc = TrainConfig(learning_rate=0.01, epochs=3, batch_size=4, seed=5)
    a, ha = train(cfg, ds, tc)
    b, hb = train(cfg, ds, tc)
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    assert format_history(ha) == format_history(hb)
    assert format_history(ha).splitlines()[0] == "epoch,learning_rate,loss,train_accuracy"


def test_divergence_is_reported():
    cfg, ds = tiny_problem()
    params = STGCN(cfg).init_params()
    params["head.W"] = params["head.W"] * 1e300
    with pytest.raises(TrainingDivergedError) as info, np.errstate(all="ignore"):
        train(cfg, ds, TrainConfig(learning_rate=1e10, epochs=5), params)
    assert info.value.epoch == 0


def test_training_rejects_empty_dataset():
    cfg, _ = tiny_problem()
    with pytest.raises(ValueError, match="empty"):
        train(cfg, SkeletonDataset.empty(5, 8, 2, 2), TrainConfig(epochs=1))


# -- evaluation ---------------------------------------------------------------------------------

def test_perfect_predictor():
    labels = np.array([0, 1, 2, 2, 1])
    report = report_from_probabilities(np.eye(3)[labels], labels, 3)
    assert report.top1 == 1.0 and report.top5 == 1.0
    assert report.confusion.tolist() == [[1, 0, 0], [0, 2, 0], [0, 0, 2]]


def test_uniform_predictor_ties_break_to_lower_index():
    probs = np.full((10, 10), 0.1)
    labels = np.arange(10)
    assert rank_classes(probs[0])[:5].tolist() == [0, 1, 2, 3, 4]
    report = report_from_probabilities(probs, labels, 10)
    assert report.top1 == 0.1 and report.top5 == 0.5
    assert report.confusion[:, 0].tolist() == [1] * 10


def test_accuracy_matches_manual_count(rng):
    probs = rng.dirichlet(np.ones(7), size=20)
    labels = rng.integers(0, 7, size=20)
    top1 = top5 = 0
    for p, y in zip(probs, labels):
        better = sum(1 for q in p if q > p[y])
        top1 += better == 0
        top5 += better < 5
    report = report_from_probabilities(probs, labels, 7)
    assert report.top1 == top1 / 20 and report.top5 == top5 / 20
    assert report.top5 >= report.top1
    assert report.support.sum() == 20 and report.correct.sum() == top1
    assert "top1" in report.format()


def test_evaluate_checks_class_count():
    cfg, ds = tiny_problem()
    other = SkeletonDataset(ds.features, ds.labels, 3)
    with pytest.raises(ValueError, match="classes"):
        evaluate(cfg, STGCN(cfg).init_params(), other)
