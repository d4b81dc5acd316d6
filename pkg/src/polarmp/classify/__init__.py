"""Baseline classifier, features and evaluation metrics."""

import numpy as np

from .features import FEATURE_NAMES, PolarFeatureExtractor, extract_features, perimeter
from .metrics import (
    EvalReport,
    confusion_matrix,
    evaluate,
    fuse_predictions,
    import_predictions,
    report_from_confusion,
    write_predictions,
)
from .softmax import Adam, SoftmaxAdamClassifier, cross_entropy, softmax


def softmax_predict(model, features):
    """Probability vector(s) of a fitted :class:`SoftmaxAdamClassifier`."""
    X = np.asarray(features, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite features")
    single = X.ndim == 1
    P = model.predict_proba(X.reshape(1, -1) if single else X)
    return P[0] if single else P


__all__ = [
    "Adam",
    "EvalReport",
    "FEATURE_NAMES",
    "PolarFeatureExtractor",
    "SoftmaxAdamClassifier",
    "confusion_matrix",
    "cross_entropy",
    "evaluate",
    "extract_features",
    "fuse_predictions",
    "import_predictions",
    "perimeter",
    "report_from_confusion",
    "softmax",
    "softmax_predict",
    "write_predictions",
]
