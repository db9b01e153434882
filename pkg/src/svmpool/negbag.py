"""Negative bag construction: Gaussian noise in feature space, or corpus samples."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from svmpool.core import FeatureBag, NegativeBag, Provenance

STD_FLOOR = 1e-8


def default_count(n: int) -> int:
    """Negatives per pooling call: twice the bag length, at least 30."""
    return max(30, 2 * int(n))


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    mean: np.ndarray | float
    std: np.ndarray | float
    count: int
    seed: int = 0
    p: int | None = None

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        std = np.atleast_1d(np.asarray(self.std, dtype=np.float64))
        p = self.p
        if p is None:
            p = max(mean.shape[0], std.shape[0])
        mean = np.broadcast_to(mean, (p,)).copy()
        std = np.broadcast_to(std, (p,)).copy()
        if not np.all(std > 0):
            raise ValueError("noise std must be strictly positive in every dimension")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std))):
            raise ValueError("noise mean and std must be finite")
        if int(self.count) < 1:
            raise ValueError(f"count must be >= 1, got {self.count!r}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "p", p)


def gen_noise(spec: NoiseSpec) -> NegativeBag:
    """``count`` i.i.d. Gaussian rows with per-dimension mean and std."""
    rng = np.random.default_rng(spec.seed)
    rows = spec.mean + spec.std * rng.standard_normal((int(spec.count), spec.p))
    return NegativeBag(rows, Provenance.SYNTHETIC_NOISE)


def estimate_moments(bags: Sequence[FeatureBag]) -> tuple[np.ndarray, np.ndarray]:
    """Pooled per-dimension mean and population std over all rows; std floored at 1e-8."""
    mats = [b.features for b in bags]
    if not mats or sum(m.shape[0] for m in mats) == 0:
        raise ValueError("need at least one row to estimate moments")
    X = np.vstack(mats)
    mean = X.mean(axis=0)
    std = np.maximum(X.std(axis=0), STD_FLOOR)
    return mean, std


def sample_corpus(corpus: NegativeBag, count: int, seed: int = 0) -> NegativeBag:
    """Uniform sample of rows without replacement."""
    if count > corpus.m:
        raise ValueError(f"asked for {count} rows from a corpus of {corpus.m}")
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    idx = rng.choice(corpus.m, size=int(count), replace=False)
    return NegativeBag(corpus.features[idx], Provenance.CORPUS_SAMPLE)
