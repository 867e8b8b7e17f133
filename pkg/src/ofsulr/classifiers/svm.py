"""Linear SVM trained by stochastic subgradient descent on the primal.

Objective (``lam = 1 / (C n)``)::

    lam / 2 * ||w||^2 + mean(max(0, 1 - s_i (w . x_i + b)))     s_i = +-1

Pegasos-style steps ``1 / (lam (t + t0))`` with ``t0`` chosen so the first
step is at most ``max_step``, projection onto the ball of radius
``1 / sqrt(lam)``, and averaging of the iterates over the second half of the
run.  The bias is unregularized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, UsageError


def svm_objective(w, b, X, y, C) -> float:
    n = len(y)
    s = 2.0 * np.asarray(y, dtype=float) - 1.0
    lam = 1.0 / (C * n)
    margins = s * (X @ w + b)
    return 0.5 * lam * float(w @ w) + float(np.maximum(0.0, 1.0 - margins).mean())


@dataclass
class LinearSvmModel:
    weights: np.ndarray
    bias: float
    C: float = 1.0
    epochs: int = 0
    converged: bool = False
    history: list[float] = field(default_factory=list, repr=False)
    kind: str = field(default="svm", init=False)

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.weights):
            raise DataError(f"model expects {len(self.weights)} features, got shape {X.shape}")
        return X @ self.weights + self.bias

    def score(self, X) -> np.ndarray:
        return self.decision_function(X)

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0.0).astype(int)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "C": self.C,
            "epochs": self.epochs,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearSvmModel":
        return cls(np.asarray(d["weights"], dtype=float), float(d["bias"]), float(d["C"]),
                   int(d["epochs"]), bool(d["converged"]))


def svm_fit(
    X,
    y,
    C: float = 1.0,
    epochs: int = 200,
    seed: int = 0,
    batch_size: int = 64,
    max_step: float | None = None,
) -> LinearSvmModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).ravel()
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise DataError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if not np.all(np.isin(y, (0, 1))):
        raise DataError("SVM needs binary 0/1 labels")
    if not C > 0:
        raise UsageError(f"C must be positive, got {C}")
    n, d = X.shape
    s = 2.0 * y - 1.0
    lam = 1.0 / (C * n)
    if max_step is None:
        max_step = 1.0 / max(1.0, float(np.mean(np.einsum("ij,ij->i", X, X))))
    t0 = max(1.0, 1.0 / (lam * max_step))
    radius = 1.0 / np.sqrt(lam)
    batch = max(1, min(batch_size, n))
    steps_per_epoch = -(-n // batch)
    total = epochs * steps_per_epoch
    avg_from = total // 2

    rng = np.random.default_rng(seed)
    w, b = np.zeros(d), 0.0
    w_avg, b_avg, n_avg = np.zeros(d), 0.0, 0
    history = []
    t = 0
    for _epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            eta = 1.0 / (lam * (t + t0))
            viol = s[idx] * (X[idx] @ w + b) < 1.0
            g_w = lam * w - (s[idx][viol] @ X[idx][viol]) / len(idx)
            g_b = -float(s[idx][viol].sum()) / len(idx)
            w = w - eta * g_w
            b = b - eta * g_b
            norm = np.linalg.norm(w)
            if norm > radius:
                w *= radius / norm
            t += 1
            if t > avg_from:
                n_avg += 1
                w_avg += (w - w_avg) / n_avg
                b_avg += (b - b_avg) / n_avg
        cur_w, cur_b = (w_avg, b_avg) if n_avg else (w, b)
        history.append(svm_objective(cur_w, cur_b, X, y, C))
    if n_avg == 0:
        w_avg, b_avg = w, b
    tail = history[-max(1, len(history) // 10):]
    final = history[-1] if history else 0.0
    converged = bool(history) and max(abs(h - final) for h in tail) <= 0.01 * max(abs(final), 1e-12)
    return LinearSvmModel(w_avg.copy(), float(b_avg), C, epochs, converged, history)
