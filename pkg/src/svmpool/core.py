"""Shared domain types, bag validation and descriptor helpers."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np


class Provenance(str, enum.Enum):
    SYNTHETIC_NOISE = "synthetic-noise"
    CORPUS_SAMPLE = "corpus-sample"


class Algorithm(str, enum.Enum):
    ENUMERATE = "enumerate"
    ALTERNATING = "alternating"
    PARAM_TUNING = "param-tuning"
    ORDERED = "ordered"


def _as_matrix(features, what: str) -> np.ndarray:
    arr = np.array(features, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{what}: expected a 2-D matrix, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{what}: needs at least one row and one column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        r, c = np.argwhere(~np.isfinite(arr))[0]
        raise ValueError(f"{what}: non-finite entry at row {r}, column {c}")
    return arr


@dataclass(frozen=True, eq=False)
class FeatureBag:
    """Ordered frame features of one sequence, shape ``(n, p)``.

    Row order is temporal order.
    """

    features: np.ndarray
    sequence_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "features", _as_matrix(self.features, "FeatureBag"))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class NegativeBag:
    """Unordered irrelevant features, shape ``(m, p)``."""

    features: np.ndarray
    provenance: Provenance = Provenance.SYNTHETIC_NOISE

    def __post_init__(self):
        object.__setattr__(self, "features", _as_matrix(self.features, "NegativeBag"))
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class SvmpDescriptor:
    w: np.ndarray
    b: float
    eta_achieved: float = float("nan")
    objective: float = float("nan")
    algorithm: str = ""
    iterations: int = 0

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(w)) or not math.isfinite(float(self.b)):
            raise ValueError("descriptor entries must be finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))

    @property
    def p(self) -> int:
        return self.w.shape[0]

    def as_vector(self) -> np.ndarray:
        """The concatenation ``[w; b]``."""
        return np.append(self.w, self.b)


@dataclass(frozen=True, eq=False)
class MilLabeling:
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.int8).reshape(-1)
        if not np.all((theta == 1) | (theta == -1)):
            raise ValueError("theta entries must be -1 or +1")
        object.__setattr__(self, "theta", theta)

    @property
    def n_positive(self) -> int:
        return int(np.count_nonzero(self.theta == 1))

    def positive_indices(self) -> np.ndarray:
        return np.flatnonzero(self.theta == 1)

    def satisfies(self, eta: float) -> bool:
        return self.n_positive >= min_positive_count(eta, self.theta.shape[0])


@dataclass(frozen=True)
class PoolingConfig:
    eta: float = 0.9
    c1: float = 10.0
    c1_init: float = 1e-4
    c1_multiplier: float = 10.0
    c1_max: float = 1e4
    c2: float = 1.0
    delta: float = 1.0
    lambda_layer: float = 1.0
    solver_tol: float = 1e-6
    max_svm_iters: int = 10000
    max_outer_iters: int = 50
    alt_random_starts: int = 4
    max_inner_iters: int = 2000
    convergence_threshold: float = 1e-4
    enumeration_cap: int = 16
    pair_mode: str = "all-pairs"
    normalize_descriptor: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("c1", "c1_init", "c1_max", "lambda_layer", "solver_tol",
                     "convergence_threshold"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite scalar, got {v!r}")
        for name in ("c2", "delta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be a nonnegative finite scalar, got {v!r}")
        if not (0.0 < self.eta <= 1.0):
            raise ValueError(f"eta must lie in (0, 1], got {self.eta!r}")
        if not (math.isfinite(self.c1_multiplier) and self.c1_multiplier > 1):
            raise ValueError(f"c1_multiplier must be > 1, got {self.c1_multiplier!r}")
        if self.c1_max < self.c1_init:
            raise ValueError("c1_max must be >= c1_init")
        if self.alt_random_starts < 0:
            raise ValueError("alt_random_starts must be >= 0")
        for name in ("max_svm_iters", "max_outer_iters", "max_inner_iters", "enumeration_cap"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.pair_mode not in ("all-pairs", "consecutive"):
            raise ValueError(f"pair_mode must be 'all-pairs' or 'consecutive', got {self.pair_mode!r}")

    def with_(self, **changes) -> "PoolingConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class PoolResult:
    descriptor: SvmpDescriptor
    labeling: MilLabeling
    feasible: bool
    objective: float
    converged: bool = True
    trace: list = field(default_factory=list)


def min_positive_count(eta: float, n: int) -> int:
    """Smallest number of positives meeting the eta fraction of ``n`` rows."""
    # guard against 0.3 * 10 = 3.0000000000000004 style round-up
    return int(math.ceil(eta * n - 1e-9))


def check_pair(bag: FeatureBag, neg: NegativeBag) -> None:
    if bag.p != neg.p:
        raise ValueError(f"dimension mismatch: bag has p={bag.p}, negatives have p={neg.p}")


def score(desc: SvmpDescriptor, x) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != desc.p:
        raise ValueError(f"dimension mismatch: descriptor p={desc.p}, x has {x.shape[0]}")
    return float(desc.w @ x + desc.b)


def scores(desc: SvmpDescriptor, features: np.ndarray) -> np.ndarray:
    if features.shape[1] != desc.p:
        raise ValueError(f"dimension mismatch: descriptor p={desc.p}, rows have {features.shape[1]}")
    return features @ desc.w + desc.b


def classified_fraction(desc: SvmpDescriptor, bag: FeatureBag) -> float:
    if bag.n == 0:
        raise ValueError("empty bag")
    return float(np.count_nonzero(scores(desc, bag.features) >= 0.0)) / bag.n


def normalize_descriptor(desc: SvmpDescriptor) -> SvmpDescriptor:
    v = desc.as_vector()
    peak = float(np.max(np.abs(v)))
    if peak == 0.0:
        raise ValueError("cannot normalize the zero descriptor")
    v = v / peak  # keeps the norm from underflowing for tiny descriptors
    v = v / float(np.linalg.norm(v))
    return replace(desc, w=v[:-1], b=float(v[-1]))
