"""Multinomial logistic regression trained with minibatch Adam."""

import json
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .._validation import check_seed, make_rng
from ..dataset import CLASSES

PROB_FLOOR = 1e-12


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(W, b, X, y):
    """Mean cross-entropy and its gradients for integer labels ``y``.

    ``W`` is (classes, features), ``b`` (classes,).
    Returns ``(loss, grad_W, grad_b)``.
    """
    P = softmax(X @ W.T + b)
    n = X.shape[0]
    loss = -np.mean(np.log(np.maximum(P[np.arange(n), y], PROB_FLOOR)))
    D = P.copy()
    D[np.arange(n), y] -= 1.0
    D /= n
    return loss, D.T @ X, D.sum(axis=0)


class Adam:
    """Adam with bias-corrected moments; ``step`` updates arrays in place."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


class SoftmaxAdamClassifier(ClassifierMixin, BaseEstimator):
    """Softmax regression on standardized features.

    Trains with minibatch Adam, early-stops on validation loss (training
    loss when no validation set is given) and restores the parameters of the
    best epoch. Labels drawn from ``PP``/``HDPE``/``LDPE`` always use that
    class order; other label sets are sorted.

    After ``fit``: ``loss_curve_`` (full-batch training loss per epoch),
    ``val_loss_curve_``, ``val_losses_`` (epochs x n_val per-image
    cross-entropy), ``best_epoch_`` and ``n_epochs_``.
    """

    def __init__(self, learning_rate=1e-3, batch_size=32, max_epochs=200, patience=50,
                 beta1=0.9, beta2=0.999, epsilon=1e-8, standardize=True, augment_noise=0.0,
                 random_state=0):
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.standardize = standardize
        self.augment_noise = augment_noise
        self.random_state = random_state

    def _encode(self, y):
        y = np.asarray(y)
        lookup = {c: i for i, c in enumerate(self.classes_)}
        try:
            return np.array([lookup[v] for v in y], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"unknown label {exc.args[0]!r}") from None

    def _scale(self, X):
        return (X - self.mean_) / self.scale_

    def fit(self, X, y, X_val=None, y_val=None):
        seed = check_seed(self.random_state, "random_state")
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y)
        labels = set(y.tolist())
        self.classes_ = np.array([c for c in CLASSES]) if labels <= set(CLASSES) else np.array(sorted(labels))
        missing = [c for c in self.classes_ if c not in labels]
        if missing:
            raise ValueError(f"degenerate class coverage: no training samples for {missing}")
        yi = self._encode(y)
        if self.standardize:
            self.mean_ = X.mean(axis=0)
            scale = X.std(axis=0)
            self.scale_ = np.where(scale > 0, scale, 1.0)
        else:
            self.mean_ = np.zeros(X.shape[1])
            self.scale_ = np.ones(X.shape[1])
        Xs = self._scale(X)
        has_val = X_val is not None
        if has_val:
            Xv = self._scale(check_array(X_val, dtype=np.float64))
            yv = self._encode(y_val)
        else:
            Xv, yv = Xs, yi

        n, d = Xs.shape
        k = len(self.classes_)
        W = np.zeros((k, d))
        b = np.zeros(k)
        opt = Adam(self.learning_rate, self.beta1, self.beta2, self.epsilon)
        rng = make_rng(seed, 5)
        bs = max(1, int(self.batch_size))

        self.loss_curve_, self.val_loss_curve_, val_losses = [], [], []
        best = (np.inf, -1, W.copy(), b.copy())
        stale = 0
        for epoch in range(int(self.max_epochs)):
            order = rng.permutation(n)
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                xb = Xs[idx]
                if self.augment_noise > 0:
                    xb = xb + rng.normal(0.0, self.augment_noise, xb.shape)
                _, gW, gb = cross_entropy(W, b, xb, yi[idx])
                opt.step([W, b], [gW, gb])
            self.loss_curve_.append(cross_entropy(W, b, Xs, yi)[0])
            pv = softmax(Xv @ W.T + b)
            per_image = -np.log(np.maximum(pv[np.arange(len(yv)), yv], PROB_FLOOR))
            val_losses.append(per_image)
            vloss = float(per_image.mean())
            self.val_loss_curve_.append(vloss)
            if vloss < best[0]:
                best = (vloss, epoch, W.copy(), b.copy())
                stale = 0
            else:
                stale += 1
                if stale >= self.patience:
                    break
        self.coef_, self.intercept_ = best[2], best[3]
        self.best_epoch_ = best[1]
        self.n_epochs_ = len(self.loss_curve_)
        self.val_losses_ = np.array(val_losses) if has_val else None
        self.n_features_in_ = d
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self._scale(X) @ self.coef_.T + self.intercept_

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]

    def record_validation_losses(self, ledger, ids, fold):
        """Copy per-image validation losses of every epoch into ``ledger``."""
        if self.val_losses_ is None:
            raise ValueError("fit was called without a validation set")
        for epoch, row in enumerate(self.val_losses_):
            for i, loss in zip(ids, row):
                ledger.record(i, fold, epoch, float(loss))
        return ledger

    def to_json(self):
        check_is_fitted(self, "coef_")
        return {
            "params": self.get_params(),
            "classes": self.classes_.tolist(),
            "coef": self.coef_.tolist(),
            "intercept": self.intercept_.tolist(),
            "mean": self.mean_.tolist(),
            "scale": self.scale_.tolist(),
            "best_epoch": self.best_epoch_,
            "n_epochs": self.n_epochs_,
        }

    @classmethod
    def from_json(cls, data):
        m = cls(**data["params"])
        m.classes_ = np.array(data["classes"])
        m.coef_ = np.array(data["coef"], dtype=np.float64)
        m.intercept_ = np.array(data["intercept"], dtype=np.float64)
        m.mean_ = np.array(data["mean"], dtype=np.float64)
        m.scale_ = np.array(data["scale"], dtype=np.float64)
        m.best_epoch_ = data.get("best_epoch", -1)
        m.n_epochs_ = data.get("n_epochs", 0)
        m.n_features_in_ = m.coef_.shape[1]
        m.val_losses_ = None
        return m

    def save(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))
