"""Small full-batch gradient-descent linear classifiers.

Used as the domain probe behind the A-distance and as the fixed evaluation
classifier for judging a source selection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numeric import Tensor


def _step_size(X: Tensor, l2: float) -> float:
    # Lipschitz bound of the mean softmax/logistic loss gradient
    s = np.linalg.norm(X, ord=2) if X.size else 0.0
    return 1.0 / (0.5 * s * s / max(len(X), 1) + l2 + 1e-12)


@dataclass
class Standardizer:
    mean: Tensor
    std: Tensor

    @classmethod
    def fit(cls, X: Tensor) -> "Standardizer":
        sd = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(sd > 0, sd, 1.0))

    def __call__(self, X: Tensor) -> Tensor:
        return (X - self.mean) / self.std


def fit_logistic(X: Tensor, y: np.ndarray, sample_weight: Tensor | None = None,
                 l2: float = 1e-2, iters: int = 200) -> tuple[Tensor, float]:
    """Binary logistic regression, labels in {-1, +1}. Returns (w, b)."""
    n, d = X.shape
    sw = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    sw = sw / sw.sum()
    w, b = np.zeros(d), 0.0
    lr = _step_size(X, l2)
    for _ in range(iters):
        m = y * (X @ w + b)
        # d/dm log(1 + e^-m) = -sigmoid(-m)
        g = -sw * y * 0.5 * (1.0 - np.tanh(0.5 * m))
        w -= lr * (X.T @ g + l2 * w)
        b -= lr * g.sum()
    return w, float(b)


def predict_logistic(X: Tensor, w: Tensor, b: float) -> np.ndarray:
    return np.where(X @ w + b >= 0, 1, -1)


class SoftmaxClassifier:
    """Multinomial logistic regression on standardized features."""

    def __init__(self, l2: float = 1e-2, iters: int = 300):
        self.l2 = l2
        self.iters = iters

    def fit(self, X: Tensor, y: np.ndarray, n_classes: int | None = None) -> "SoftmaxClassifier":
        self.scaler = Standardizer.fit(X)
        Z = self.scaler(X)
        k = n_classes or int(y.max()) + 1
        onehot = np.eye(k)[y]
        W, b = np.zeros((Z.shape[1], k)), np.zeros(k)
        lr = _step_size(Z, self.l2)
        n = len(Z)
        for _ in range(self.iters):
            logits = Z @ W + b
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            g = (p - onehot) / n
            W -= lr * (Z.T @ g + self.l2 * W)
            b -= lr * g.sum(axis=0)
        self.W, self.b = W, b
        return self

    def predict(self, X: Tensor) -> np.ndarray:
        return np.argmax(self.scaler(X) @ self.W + self.b, axis=1)

    def score(self, X: Tensor, y: np.ndarray) -> float:
        return float(np.mean(self.predict(X) == y))
