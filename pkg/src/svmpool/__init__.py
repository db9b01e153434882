"""SVM pooling: sequence descriptors from the hyperplane separating a bag of
frame features from a bag of irrelevant features."""
from svmpool.core import (
    Algorithm,
    FeatureBag,
    MilLabeling,
    NegativeBag,
    PoolingConfig,
    PoolResult,
    Provenance,
    SvmpDescriptor,
)
from svmpool.svm import DEFAULT_BACKEND, available_backends

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "DEFAULT_BACKEND",
    "FeatureBag",
    "MilLabeling",
    "NegativeBag",
    "PoolResult",
    "PoolingConfig",
    "Provenance",
    "SvmpDescriptor",
    "available_backends",
]
