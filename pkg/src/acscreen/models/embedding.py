"""Downstream head for fixed-length embeddings: standardize, PCA, L2 logistic regression."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateLabelError, InvalidParameterError
from ..numerics import margin_bce, sigmoid


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale


@dataclass
class PCA:
    mean: np.ndarray
    components: np.ndarray  # dim x n, orthonormal columns
    explained_variance: np.ndarray

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components

    def inverse_transform(self, Z):
        return Z @ self.components.T + self.mean


def pca_fit(X: np.ndarray, n: int) -> PCA:
    """Top-``n`` eigenvectors of the sample covariance, variance nonincreasing.

    Each component's sign is fixed so that its largest-magnitude entry is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InvalidParameterError("PCA needs a (samples >= 2) x dim matrix")
    if not 1 <= n <= X.shape[1]:
        raise InvalidParameterError(f"n_components={n} outside [1, {X.shape[1]}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:n]
    comps = evecs[:, order]
    flip = np.sign(comps[np.argmax(np.abs(comps), axis=0), np.arange(n)])
    comps = comps * np.where(flip == 0, 1.0, flip)
    return PCA(mean, comps, np.maximum(evals[order], 0.0))


@dataclass
class LogisticRegression:
    w: np.ndarray
    b: float
    C: float
    class_weight: str | None = None
    loss_history: list[float] = field(default_factory=list)
    n_iter: int = 0

    def decision_function(self, X):
        return np.asarray(X, dtype=np.float64) @ self.w + self.b

    def predict_proba(self, X):
        return sigmoid(self.decision_function(X))


def _sample_weights(y: np.ndarray, class_weight: str | None) -> np.ndarray:
    if class_weight in (None, "none"):
        return np.ones_like(y)
    if class_weight != "balanced":
        raise InvalidParameterError(f"unknown class_weight {class_weight!r}")
    n = y.size
    n_pos = y.sum()
    return np.where(y == 1, n / (2.0 * n_pos), n / (2.0 * (n - n_pos)))


def logreg_train(X, y, C: float = 1.0, class_weight: str | None = None,
                 tol: float = 1e-8, max_iter: int = 100) -> LogisticRegression:
    """Damped Newton iterations with Armijo backtracking.

    Objective: sum_i s_i * BCE_i + (1/C) * 0.5 * ||w||^2, bias unpenalised.
    Stops when the gradient norm drops below ``tol`` or after ``max_iter`` steps.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not C > 0:
        raise InvalidParameterError("C must be positive")
    if np.unique(y).size < 2:
        raise DegenerateLabelError("logistic regression needs both classes")
    s = _sample_weights(y, class_weight)
    reg = 1.0 / C
    Xb = np.hstack([X, np.ones((X.shape[0], 1))])
    penalty = np.full(Xb.shape[1], reg)
    penalty[-1] = 0.0
    theta = np.zeros(Xb.shape[1])

    def objective(th):
        loss, du = margin_bce(Xb @ th, y)
        val = float(np.sum(s * loss) + 0.5 * np.sum(penalty * th * th))
        return val, Xb.T @ (s * du) + penalty * th

    val, g = objective(theta)
    history = [val]
    it = 0
    while it < max_iter and np.linalg.norm(g) >= tol:
        p = sigmoid(Xb @ theta)
        H = (Xb * (s * p * (1 - p))[:, None]).T @ Xb + np.diag(penalty)
        # a tiny ridge keeps H invertible when the data separate
        d = np.linalg.solve(H + 1e-10 * np.eye(H.shape[0]), g)
        slope = float(g @ d)
        step = 1.0
        while True:
            cand = theta - step * d
            cval, cg = objective(cand)
            if cval <= val - 1e-4 * step * slope or step < 1e-12:
                break
            step *= 0.5
        if cval > val:
            break
        theta, val, g = cand, cval, cg
        history.append(val)
        it += 1
    return LogisticRegression(theta[:-1].copy(), float(theta[-1]), C, class_weight, history, it)


@dataclass
class EmbeddingHead:
    scaler: Standardizer
    pca: PCA
    clf: LogisticRegression

    @classmethod
    def fit(cls, X, y, n_components: int, C: float = 1.0, class_weight: str | None = None):
        scaler = Standardizer.fit(X)
        Z = scaler.transform(X)
        pca = pca_fit(Z, n_components)
        clf = logreg_train(pca.transform(Z), y, C, class_weight)
        return cls(scaler, pca, clf)

    def predict_proba(self, X):
        return self.clf.predict_proba(self.pca.transform(self.scaler.transform(X)))
