"""Dataset-level orchestration: pooling, one-vs-rest classification, metrics, synthetic data."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from svmpool import kermap, svm
from svmpool.core import (
    Algorithm,
    FeatureBag,
    NegativeBag,
    PoolingConfig,
    PoolResult,
    normalize_descriptor,
)
from svmpool.mil import pool_alternating, pool_enumerate, pool_param_tuning
from svmpool.ordered import pool_ordered

log = logging.getLogger(__name__)

DEFAULT_CLASSIFIER_C = 1.0

POOLERS = {
    Algorithm.ENUMERATE: pool_enumerate,
    Algorithm.ALTERNATING: pool_alternating,
    Algorithm.PARAM_TUNING: pool_param_tuning,
    Algorithm.ORDERED: pool_ordered,
}


def avg_pool(bag: FeatureBag) -> np.ndarray:
    return bag.features.mean(axis=0)


def max_pool(bag: FeatureBag) -> np.ndarray:
    return bag.features.max(axis=0)


@dataclass(eq=False)
class LabeledDescriptorSet:
    descriptors: np.ndarray
    labels: np.ndarray
    class_names: list[str] = field(default_factory=list)
    sequence_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.descriptors = np.atleast_2d(np.asarray(self.descriptors, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.descriptors.shape[0] != self.labels.shape[0]:
            raise ValueError(f"{self.descriptors.shape[0]} descriptors but {self.labels.shape[0]} labels")
        if not self.class_names:
            self.class_names = [str(c) for c in np.unique(self.labels)]
        if not self.sequence_ids:
            self.sequence_ids = [str(i) for i in range(self.labels.shape[0])]

    def __len__(self):
        return self.labels.shape[0]

    def subset(self, idx) -> "LabeledDescriptorSet":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDescriptorSet(self.descriptors[idx], self.labels[idx], list(self.class_names),
                                    [self.sequence_ids[i] for i in idx])


def concatenate(*sets: LabeledDescriptorSet) -> LabeledDescriptorSet:
    """Column-wise combination of descriptor sets over the same sequences."""
    first = sets[0]
    for s in sets[1:]:
        if not np.array_equal(s.labels, first.labels) or s.sequence_ids != first.sequence_ids:
            raise ValueError("descriptor sets must cover the same sequences in the same order")
    return LabeledDescriptorSet(np.hstack([s.descriptors for s in sets]), first.labels,
                                list(first.class_names), list(first.sequence_ids))


@dataclass
class BagReport:
    sequence_id: str
    feasible: bool
    objective: float
    iterations: int
    error: str = ""


def pool_bag(bag: FeatureBag, neg: NegativeBag, config: PoolingConfig,
             algorithm: Algorithm | str) -> PoolResult:
    return POOLERS[Algorithm(algorithm)](bag, neg, config)


def pool_dataset(bags: Sequence[FeatureBag], labels, neg: NegativeBag, config: PoolingConfig,
                 algorithm: Algorithm | str = Algorithm.PARAM_TUNING,
                 kernel: kermap.KernelMapConfig | None = None,
                 jobs: int = 1) -> tuple[LabeledDescriptorSet, list[BagReport]]:
    """Pool every bag into ``[w; b]`` (normalized per config), keeping input order.

    A bag that raises is reported with its error and left out of the
    descriptor set; if every bag fails a ``RuntimeError`` is raised.
    """
    algorithm = Algorithm(algorithm)
    labels = np.asarray(labels, dtype=np.int64)
    if len(bags) != labels.shape[0]:
        raise ValueError("one label per bag required")
    for bag in bags:
        if bag.p != neg.p:
            raise ValueError(f"bag {bag.sequence_id!r} has p={bag.p}, negatives have p={neg.p}")
    if kernel is not None:
        neg = kermap.map_negatives(neg, kernel)
    pooler = POOLERS[algorithm]

    def run(bag):
        try:
            b = kermap.map_bag(bag, kernel) if kernel is not None else bag
            res = pooler(b, neg, config)
            desc = res.descriptor
            if config.normalize_descriptor:
                desc = normalize_descriptor(desc)
            return desc.as_vector(), BagReport(bag.sequence_id, res.feasible, res.objective,
                                               res.descriptor.iterations)
        except (ValueError, ArithmeticError, svm.SolverError) as exc:
            log.warning("pooling %s failed: %s", bag.sequence_id, exc)
            return None, BagReport(bag.sequence_id, False, math.nan, 0, str(exc))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            outcomes = list(ex.map(run, bags))
    else:
        outcomes = [run(b) for b in bags]
    keep = [i for i, (v, _) in enumerate(outcomes) if v is not None]
    reports = [r for _, r in outcomes]
    if not keep:
        raise RuntimeError(f"pooling failed for all {len(bags)} bags; first error: {reports[0].error}")
    descs = np.vstack([outcomes[i][0] for i in keep])
    names = [str(c) for c in np.unique(labels)]
    return LabeledDescriptorSet(descs, labels[keep], names, [bags[i].sequence_id for i in keep]), reports


def baseline_dataset(bags: Sequence[FeatureBag], labels, method: str = "avg",
                     normalize: bool = True) -> LabeledDescriptorSet:
    """Average- or max-pooled descriptors, scaled to unit norm unless ``normalize`` is off."""
    fn = {"avg": avg_pool, "max": max_pool}.get(method)
    if fn is None:
        raise ValueError(f"baseline method must be 'avg' or 'max', got {method!r}")
    labels = np.asarray(labels, dtype=np.int64)
    descs = np.vstack([fn(b) for b in bags])
    if normalize:
        norms = np.linalg.norm(descs, axis=1, keepdims=True)
        descs = descs / np.where(norms > 0, norms, 1.0)
    return LabeledDescriptorSet(descs, labels, [str(c) for c in np.unique(labels)],
                                [b.sequence_id for b in bags])


@dataclass(eq=False)
class MulticlassModel:
    classes: np.ndarray  # original class ids, ascending
    weights: np.ndarray  # (d, q)
    biases: np.ndarray  # (d,)
    c: float = 1.0

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def decision(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ValueError(f"model expects {self.dim}-dimensional descriptors, got {X.shape[1]}")
        return X @ self.weights.T + self.biases

    def predict(self, X) -> np.ndarray:
        # argmax returns the first maximum, i.e. the lowest class id on ties
        return self.classes[np.argmax(self.decision(X), axis=1)]


def train_classifier(dset: LabeledDescriptorSet, c: float = DEFAULT_CLASSIFIER_C, tol: float = 1e-6,
                     max_iters: int = 10000, jobs: int = 1) -> MulticlassModel:
    """One-vs-rest hinge SVMs, one per class."""
    classes = np.unique(dset.labels)
    if classes.shape[0] < 2:
        raise ValueError("need at least two classes to train")

    def fit(k):
        y = np.where(dset.labels == k, 1.0, -1.0)
        sol = svm.solve(svm.SvmProblem(dset.descriptors, y, c), tol=tol, max_iters=max_iters)
        return sol.w, sol.b

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            fits = list(ex.map(fit, classes))
    else:
        fits = [fit(k) for k in classes]
    return MulticlassModel(classes=classes, weights=np.vstack([w for w, _ in fits]),
                           biases=np.array([b for _, b in fits]), c=c)


def predict(model: MulticlassModel, descriptor) -> int:
    return int(model.predict(np.asarray(descriptor, dtype=np.float64).reshape(1, -1))[0])


def evaluate(model: MulticlassModel, dset: LabeledDescriptorSet) -> dict:
    """Accuracy and a confusion matrix indexed by ``model.classes`` (rows: truth)."""
    pred = model.predict(dset.descriptors)
    index = {int(c): i for i, c in enumerate(model.classes)}
    d = model.classes.shape[0]
    confusion = np.zeros((d, d), dtype=np.int64)
    for t, p in zip(dset.labels, pred):
        if int(t) not in index:
            raise ValueError(f"label {int(t)} unknown to the model")
        confusion[index[int(t)], index[int(p)]] += 1
    correct = int(np.count_nonzero(pred == dset.labels))
    return {"accuracy": correct / max(len(dset), 1), "confusion": confusion,
            "classes": model.classes.copy(), "n": len(dset)}


def nearest_centroid_accuracy(train: LabeledDescriptorSet, test: LabeledDescriptorSet) -> float:
    classes = np.unique(train.labels)
    cents = np.vstack([train.descriptors[train.labels == k].mean(axis=0) for k in classes])
    d2 = ((test.descriptors[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
    return float(np.mean(classes[np.argmin(d2, axis=1)] == test.labels))


def stratified_split(labels, train_fraction: float = 0.7, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Per-class shuffled split; returns sorted train and test indices."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for k in np.unique(labels):
        idx = np.flatnonzero(labels == k)
        idx = idx[rng.permutation(idx.shape[0])]
        cut = int(round(train_fraction * idx.shape[0]))
        train.extend(idx[:cut])
        test.extend(idx[cut:])
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(test, dtype=np.int64))


@dataclass(frozen=True)
class SyntheticSpec:
    """Synthetic sequence-classification benchmark.

    Every frame carries a shared offset ``offset`` in all dimensions. Class
    ``k`` owns a hidden unit direction ``u_k`` orthogonal to the offset and to
    the other classes. A ``signal_fraction`` of each sequence's frames sit at
    ``a u_k`` with ``a = 3 noise_std + |N(0, noise_std^2)|`` plus isotropic
    noise orthogonal to ``u_k``. The remaining background frames are
    class-independent: Gaussian noise, except that a ``glitch_fraction`` of
    the frames are glitches of norm ``glitch_scale * noise_std * sqrt(p)`` in
    uniformly random directions (corrupted frames, cuts, flashes).

    Glitches swamp average and max pooling; the SVM absorbs them with a small
    weight, since a frame of large norm is classified with a tiny change of
    ``w``. Pool with ``eta`` close to ``signal_fraction`` on this data.
    """

    classes: int = 5
    sequences_per_class: int = 40
    n_frames: int = 50
    p: int = 64
    signal_fraction: float = 0.2
    noise_std: float = 1.0
    seed: int = 0
    offset: float = 1.0
    glitch_fraction: float = 0.06
    glitch_scale: float = 10.0

    def __post_init__(self):
        for name in ("classes", "sequences_per_class", "n_frames", "p"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if not (0.0 < self.signal_fraction <= 1.0):
            raise ValueError("signal_fraction must lie in (0, 1]")
        if not (math.isfinite(self.noise_std) and self.noise_std > 0):
            raise ValueError("noise_std must be positive")
        if self.classes + 1 > self.p:
            raise ValueError(f"need p > classes for orthogonal class directions, got p={self.p}")
        if not (0.0 <= self.glitch_fraction < 1.0) or self.glitch_scale < 0 or not math.isfinite(self.offset):
            raise ValueError("glitch_fraction must lie in [0, 1), glitch_scale >= 0, offset finite")

    @property
    def signal_frames(self) -> int:
        return min(self.n_frames, max(1, int(round(self.signal_fraction * self.n_frames))))

    @property
    def glitch_frames(self) -> int:
        return min(self.n_frames - self.signal_frames, int(round(self.glitch_fraction * self.n_frames)))


def class_directions(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Orthonormal rows ``u_1..u_d``, each orthogonal to the all-ones offset direction."""
    ones = np.full((spec.p, 1), 1.0 / math.sqrt(spec.p))
    basis = np.linalg.qr(np.hstack([ones, rng.standard_normal((spec.p, spec.classes))]))[0]
    return basis[:, 1:].T.copy()


def make_synthetic(spec: SyntheticSpec) -> tuple[list[FeatureBag], np.ndarray]:
    """Bags in class-major order with labels ``1..classes``; deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    U = class_directions(spec, rng)
    n, p, sigma = spec.n_frames, spec.p, spec.noise_std
    n_sig, n_glitch = spec.signal_frames, spec.glitch_frames
    glitch_norm = spec.glitch_scale * sigma * math.sqrt(p)
    bags, labels = [], []
    for k in range(spec.classes):
        u = U[k]
        for s in range(spec.sequences_per_class):
            X = sigma * rng.standard_normal((n, p))
            order = rng.permutation(n)
            sig, glitch = order[:n_sig], order[n_sig:n_sig + n_glitch]
            noise = X[sig] - np.outer(X[sig] @ u, u)
            amp = 3.0 * sigma + np.abs(sigma * rng.standard_normal(n_sig))
            X[sig] = amp[:, None] * u + noise
            if n_glitch:
                dirs = rng.standard_normal((n_glitch, p))
                X[glitch] = glitch_norm * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
            X += spec.offset
            bags.append(FeatureBag(X, f"c{k + 1:02d}_s{s:03d}"))
            labels.append(k + 1)
    return bags, np.array(labels, dtype=np.int64)


@dataclass
class BenchmarkRun:
    seed: int
    accuracy: dict[str, float]
    pool_seconds: float
    feasible_fraction: float


def benchmark(spec: SyntheticSpec, config: PoolingConfig | None = None,
              algorithm: Algorithm | str = Algorithm.PARAM_TUNING,
              train_fraction: float = 0.7, neg_count: int | None = None,
              classifier_c: float = DEFAULT_CLASSIFIER_C) -> BenchmarkRun:
    """SVMP against average and max pooling on one synthetic dataset.

    Negatives are Gaussian noise with the moments of the training bags; the
    same one-vs-rest classifier is trained on each descriptor type.
    """
    import time

    from svmpool import negbag

    if config is None:
        config = PoolingConfig(eta=spec.signal_fraction, seed=spec.seed)
    bags, labels = make_synthetic(spec)
    train, test = stratified_split(labels, train_fraction, spec.seed)
    mean, std = negbag.estimate_moments([bags[i] for i in train])
    count = negbag.default_count(spec.n_frames) if neg_count is None else neg_count
    neg = negbag.gen_noise(negbag.NoiseSpec(mean, std, count, spec.seed))
    t0 = time.perf_counter()
    svmp, reports = pool_dataset(bags, labels, neg, config, algorithm)
    elapsed = time.perf_counter() - t0
    if len(svmp) != len(bags):
        raise RuntimeError(f"{len(bags) - len(svmp)} bags failed to pool")
    sets = {"svmp": svmp, "avg": baseline_dataset(bags, labels, "avg"),
            "max": baseline_dataset(bags, labels, "max")}
    acc = {}
    for name, dset in sets.items():
        model = train_classifier(dset.subset(train), classifier_c)
        acc[name] = evaluate(model, dset.subset(test))["accuracy"]
    return BenchmarkRun(spec.seed, acc, elapsed / len(bags),
                        sum(r.feasible for r in reports) / len(reports))
