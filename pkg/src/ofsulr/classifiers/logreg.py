"""Regularized binary logistic regression.

The training objective, with ``n`` rows, is::

    mean log-loss + ||w||^2 / (2 C n)     (penalty="l2")
    mean log-loss + ||w||_1 / (C n)       (penalty="l1")
    mean log-loss                         (penalty="none")

so ``C`` is an inverse regularization strength; the bias is never penalized.
Solvers: ``gd`` (full-batch gradient descent with backtracking, proximal
soft-thresholding for l1) and ``newton`` (iteratively reweighted least
squares with step halving).  Both only accept steps that do not increase the
objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, UsageError

PENALTIES = ("l1", "l2", "none")
SOLVERS = ("gd", "newton")


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).ravel()
    if X.ndim != 2 or len(X) != len(y):
        raise DataError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if len(y) == 0:
        raise DataError("no training rows")
    if not np.all(np.isin(y, (0, 1))):
        raise DataError("logistic regression needs binary 0/1 labels")
    return X, y.astype(float)


def objective(w, b, X, y, penalty="l2", C=1.0) -> float:
    """Regularized mean log-loss (see module docstring)."""
    n = len(y)
    z = X @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    if penalty == "l2":
        loss += float(w @ w) / (2.0 * C * n)
    elif penalty == "l1":
        loss += float(np.abs(w).sum()) / (C * n)
    return loss


def gradient(w, b, X, y, penalty="l2", C=1.0):
    """Gradient of the smooth part of :func:`objective` (l1 term excluded) as ``(g_w, g_b)``."""
    n = len(y)
    r = sigmoid(X @ w + b) - y
    g_w = X.T @ r / n
    if penalty == "l2":
        g_w = g_w + w / (C * n)
    return g_w, float(r.mean())


@dataclass
class LogRegModel:
    weights: np.ndarray
    bias: float
    penalty: str = "l2"
    C: float = 1.0
    solver: str = "gd"
    converged: bool = False
    iterations: int = 0
    history: list[float] = field(default_factory=list, repr=False)
    kind: str = field(default="logreg", init=False)

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.weights):
            raise DataError(f"model expects {len(self.weights)} features, got shape {X.shape}")
        return X @ self.weights + self.bias

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def score(self, X) -> np.ndarray:
        return self.predict_proba(X)

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(int)

    def params(self) -> dict:
        return {"solver": self.solver, "penalty": self.penalty, "C": self.C}

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "penalty": self.penalty,
            "C": self.C,
            "solver": self.solver,
            "converged": self.converged,
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogRegModel":
        return cls(
            np.asarray(d["weights"], dtype=float), float(d["bias"]), d["penalty"], float(d["C"]),
            d["solver"], bool(d["converged"]), int(d["iterations"]),
        )


def logreg_fit(
    X,
    y,
    penalty: str = "l2",
    C: float = 1.0,
    solver: str = "gd",
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> LogRegModel:
    if penalty not in PENALTIES:
        raise UsageError(f"unknown penalty {penalty!r}")
    if solver not in SOLVERS:
        raise UsageError(f"unknown solver {solver!r}")
    if penalty == "l1" and solver == "newton":
        raise UsageError("the l1 penalty is only supported by the gd solver")
    if not C > 0:
        raise UsageError(f"C must be positive, got {C}")
    X, y = _check_xy(X, y)
    if solver == "newton":
        return _fit_newton(X, y, penalty, C, tol, max_iter)
    if penalty == "l1":
        return _fit_proximal(X, y, C, tol, max_iter)
    return _fit_gd(X, y, penalty, C, tol, max_iter)


def _fit_gd(X, y, penalty, C, tol, max_iter):
    d = X.shape[1]
    w, b = np.zeros(d), 0.0
    f = objective(w, b, X, y, penalty, C)
    history = [f]
    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g_w, g_b = gradient(w, b, X, y, penalty, C)
        gmax = max(np.abs(g_w).max(initial=0.0), abs(g_b))
        if gmax < tol:
            converged = True
            it -= 1
            break
        gsq = float(g_w @ g_w) + g_b * g_b
        step = min(step * 2.0, 1e6)
        while True:
            w_new, b_new = w - step * g_w, b - step * g_b
            f_new = objective(w_new, b_new, X, y, penalty, C)
            if f_new <= f - 0.5 * step * gsq or step < 1e-16:
                break
            step *= 0.5
        if f_new > f:  # no descent possible at machine precision
            converged = True
            break
        w, b, f = w_new, b_new, f_new
        history.append(f)
    return LogRegModel(w, b, penalty, C, "gd", converged, it, history)


def _soft(v, thresh):
    return np.sign(v) * np.maximum(np.abs(v) - thresh, 0.0)


def _fit_proximal(X, y, C, tol, max_iter):
    n, d = X.shape
    lam = 1.0 / (C * n)
    w, b = np.zeros(d), 0.0
    smooth = objective(w, b, X, y, "none")
    history = [smooth + lam * np.abs(w).sum()]
    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g_w, g_b = gradient(w, b, X, y, "none")
        # minimum-norm subgradient of the full objective
        sub = np.where(w != 0, g_w + lam * np.sign(w), np.maximum(np.abs(g_w) - lam, 0.0))
        if max(np.abs(sub).max(initial=0.0), abs(g_b)) < tol:
            converged = True
            it -= 1
            break
        step = min(step * 2.0, 1e6)
        while True:
            w_new = _soft(w - step * g_w, step * lam)
            b_new = b - step * g_b
            dw, db = w_new - w, b_new - b
            s_new = objective(w_new, b_new, X, y, "none")
            bound = smooth + float(g_w @ dw) + g_b * db + (float(dw @ dw) + db * db) / (2.0 * step)
            if s_new <= bound or step < 1e-16:
                break
            step *= 0.5
        f_new = s_new + lam * np.abs(w_new).sum()
        if f_new > history[-1]:
            converged = True
            break
        w, b, smooth = w_new, b_new, s_new
        history.append(f_new)
    return LogRegModel(w, b, "l1", C, "gd", converged, it, history)


def _fit_newton(X, y, penalty, C, tol, max_iter):
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    theta = np.zeros(d + 1)
    reg = np.zeros(d + 1)
    if penalty == "l2":
        reg[:d] = 1.0 / (C * n)

    def f_of(t):
        return objective(t[:d], t[d], X, y, penalty, C)

    f = f_of(theta)
    history = [f]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = sigmoid(Xa @ theta)
        g = Xa.T @ (p - y) / n + reg * theta
        if np.abs(g).max() < tol:
            converged = True
            it -= 1
            break
        wts = p * (1.0 - p)
        H = (Xa * wts[:, None]).T @ Xa / n + np.diag(reg)
        H[np.diag_indices_from(H)] += 1e-12 * max(np.trace(H) / (d + 1), 1e-12)
        try:
            delta = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        slope = float(g @ delta)
        while True:
            cand = theta - t * delta
            f_new = f_of(cand)
            if f_new <= f - 1e-4 * t * slope or t < 1e-10:
                break
            t *= 0.5
        if f_new > f:
            converged = True
            break
        theta, f = cand, f_new
        history.append(f)
    return LogRegModel(theta[:d].copy(), float(theta[d]), penalty, C, "newton", converged, it, history)
