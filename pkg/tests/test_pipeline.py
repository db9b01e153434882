import numpy as np
import pytest

from svmpool import negbag
from svmpool.core import FeatureBag, NegativeBag, PoolingConfig
from svmpool.pipeline import (
    LabeledDescriptorSet,
    MulticlassModel,
    SyntheticSpec,
    avg_pool,
    baseline_dataset,
    class_directions,
    concatenate,
    evaluate,
    make_synthetic,
    max_pool,
    nearest_centroid_accuracy,
    pool_dataset,
    predict,
    stratified_split,
    train_classifier,
)

SMALL = SyntheticSpec(classes=3, sequences_per_class=6, n_frames=20, p=12, seed=4)


def blobs(seed, per_class=30, d=3, p=5, spread=2.0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=spread, size=(d, p))
    X = np.vstack([c + rng.normal(size=(per_class, p)) for c in centers])
    return LabeledDescriptorSet(X, np.repeat(np.arange(1, d + 1), per_class))


def noise_for(bags, seed=0):
    mean, std = negbag.estimate_moments(bags)
    return negbag.gen_noise(negbag.NoiseSpec(mean, std, negbag.default_count(bags[0].n), seed))


def test_avg_and_max_example():
    bag = FeatureBag([[1.0, 3.0], [3.0, 1.0]])
    assert avg_pool(bag).tolist() == [2.0, 2.0] and max_pool(bag).tolist() == [3.0, 3.0]
    one = FeatureBag([[4.0, -1.0]])
    assert avg_pool(one).tolist() == max_pool(one).tolist() == [4.0, -1.0]


def test_baselines_match_direct_recomputation(rng):
    bags = [FeatureBag(rng.normal(size=(5, 3))) for _ in range(4)]
    raw = baseline_dataset(bags, [1, 1, 2, 2], "max", normalize=False)
    for i, b in enumerate(bags):
        assert raw.descriptors[i].tolist() == [max(b.features[:, k]) for k in range(3)]
    unit = baseline_dataset(bags, [1, 1, 2, 2], "avg")
    assert np.allclose(np.linalg.norm(unit.descriptors, axis=1), 1.0)
    with pytest.raises(ValueError, match="avg"):
        baseline_dataset(bags, [1, 1, 2, 2], "median")


def test_identical_bags_give_identical_descriptors():
    bags, labels = make_synthetic(SMALL)
    twin = [bags[0], FeatureBag(bags[0].features.copy(), "twin")]
    dset, _ = pool_dataset(twin, [1, 1], noise_for(bags), PoolingConfig(eta=0.2))
    assert np.array_equal(dset.descriptors[0], dset.descriptors[1])


def test_pool_dataset_keeps_order_and_reports_every_bag():
    bags, labels = make_synthetic(SMALL)
    dset, reports = pool_dataset(bags, labels, noise_for(bags), PoolingConfig(eta=0.2))
    assert dset.sequence_ids == [b.sequence_id for b in bags]
    assert [r.sequence_id for r in reports] == dset.sequence_ids
    assert np.array_equal(dset.labels, labels)
    assert np.allclose(np.linalg.norm(dset.descriptors, axis=1), 1.0)


def test_param_tuning_feasible_on_synthetic_set():
    bags, labels = make_synthetic(SMALL)
    _, reports = pool_dataset(bags, labels, noise_for(bags), PoolingConfig(eta=0.2))
    assert all(r.feasible for r in reports)


def test_parallel_pooling_matches_serial():
    bags, labels = make_synthetic(SMALL)
    neg = noise_for(bags)
    a, _ = pool_dataset(bags, labels, neg, PoolingConfig(eta=0.2))
    b, _ = pool_dataset(bags, labels, neg, PoolingConfig(eta=0.2), jobs=4)
    assert np.array_equal(a.descriptors, b.descriptors)


def test_failing_bag_is_recorded_and_run_continues():
    bags, labels = make_synthetic(SMALL)
    neg = noise_for(bags)
    # one frame on a 4-frame ladder with enumeration over 20 rows exceeds the cap
    short = [FeatureBag(bags[0].features[:3], "ok"), bags[1]]
    dset, reports = pool_dataset(short, [1, 1], neg, PoolingConfig(eta=0.5), "enumerate")
    assert dset.sequence_ids == ["ok"]
    assert "enumeration cap" in reports[1].error and not reports[1].feasible
    with pytest.raises(RuntimeError, match="all 1 bags"):
        pool_dataset([bags[1]], [1], neg, PoolingConfig(eta=0.5), "enumerate")


def test_dimension_mismatch_rejected():
    bags, labels = make_synthetic(SMALL)
    with pytest.raises(ValueError, match="p=12"):
        pool_dataset(bags, labels, NegativeBag(np.zeros((3, 5))), PoolingConfig())


def test_training_set_accuracy_on_separable_data():
    dset = blobs(0, spread=20.0)
    model = train_classifier(dset)
    assert evaluate(model, dset)["accuracy"] == 1.0


@pytest.mark.parametrize("seed", range(4))
def test_classifier_meets_centroid_floor(seed):
    data = blobs(seed, per_class=60)
    tr, te = stratified_split(data.labels, 0.5, seed)
    model = train_classifier(data.subset(tr))
    acc = evaluate(model, data.subset(te))["accuracy"]
    centroid = nearest_centroid_accuracy(data.subset(tr), data.subset(te))
    assert acc >= centroid - 0.05, f"one-vs-rest {acc:.3f} vs nearest centroid {centroid:.3f}"


def test_confusion_rows_and_single_class_eval():
    data = blobs(1, spread=20.0)
    model = train_classifier(data)
    rep = evaluate(model, data)
    assert np.array_equal(np.asarray(rep["confusion"]).sum(axis=1), [30, 30, 30])
    only2 = data.subset(np.flatnonzero(data.labels == 2))
    conf = np.asarray(evaluate(model, only2)["confusion"])
    assert conf[1, 1] == 30 and conf.sum() == 30


def test_predict_rejects_wrong_dimension():
    model = train_classifier(blobs(2))
    assert predict(model, blobs(2).descriptors[0]) in (1, 2, 3)
    with pytest.raises(ValueError, match="dimension"):
        predict(model, np.zeros(4))


def test_ties_go_to_lowest_class():
    model = MulticlassModel(np.array([3, 7]), np.zeros((2, 2)), np.zeros(2), 1.0)
    assert predict(model, [1.0, 1.0]) == 3


def test_stratified_split_is_per_class_and_sorted():
    labels = np.repeat([1, 2, 3], 10)
    tr, te = stratified_split(labels, 0.7, seed=5)
    assert np.all(np.diff(tr) > 0) and np.all(np.diff(te) > 0)
    assert not set(tr) & set(te) and len(tr) + len(te) == 30
    assert [int(np.sum(labels[tr] == k)) for k in (1, 2, 3)] == [7, 7, 7]


def test_concatenate_combines_columns():
    a = LabeledDescriptorSet(np.ones((2, 2)), [1, 2], sequence_ids=["x", "y"])
    b = LabeledDescriptorSet(np.zeros((2, 3)), [1, 2], sequence_ids=["x", "y"])
    assert concatenate(a, b).descriptors.shape == (2, 5)
    with pytest.raises(ValueError):
        concatenate(a, LabeledDescriptorSet(np.zeros((2, 3)), [2, 1], sequence_ids=["x", "y"]))


def test_same_seed_same_dataset():
    a, la = make_synthetic(SMALL)
    b, lb = make_synthetic(SMALL)
    assert all(x.features.tobytes() == y.features.tobytes() for x, y in zip(a, b))
    assert np.array_equal(la, lb)


def test_signal_frames_project_onto_their_class_direction():
    spec = SyntheticSpec(classes=3, sequences_per_class=4, n_frames=30, p=10, seed=2,
                         glitch_fraction=0.0)
    bags, labels = make_synthetic(spec)
    U = class_directions(spec, np.random.default_rng(spec.seed))
    for bag, k in zip(bags, labels):
        proj = bag.features @ U[k - 1]
        assert np.sum(proj >= 3.0 * spec.noise_std) >= spec.signal_frames
    assert np.allclose(U @ U.T, np.eye(3)) and np.allclose(U.sum(axis=1), 0.0)


def test_full_signal_makes_average_pooling_sufficient():
    spec = SyntheticSpec(classes=5, sequences_per_class=20, n_frames=30, p=32, signal_fraction=1.0, seed=1)
    bags, labels = make_synthetic(spec)
    dset = baseline_dataset(bags, labels, "avg")
    tr, te = stratified_split(labels, 0.7, 1)
    assert evaluate(train_classifier(dset.subset(tr)), dset.subset(te))["accuracy"] >= 0.95


def test_spec_validation():
    with pytest.raises(ValueError, match="p > classes"):
        SyntheticSpec(classes=5, p=5)
    with pytest.raises(ValueError):
        SyntheticSpec(signal_fraction=0.0)
