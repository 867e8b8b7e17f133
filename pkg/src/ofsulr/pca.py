"""Principal component feature selection on top of a cyclic Jacobi eigensolver."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError, UsageError
from .preprocess import FeatureMatrix

JACOBI_MAX_SWEEPS = 100
JACOBI_TOL = 1e-12


@dataclass
class PcaModel:
    mean: np.ndarray
    eigenvalues: np.ndarray
    components: np.ndarray  # eigenvectors as rows, ranked
    explained_ratio: np.ndarray
    n_selected: int
    feature_names: list[str] | None = None

    @property
    def d(self) -> int:
        return len(self.mean)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "components": self.components.tolist(),
            "explained_ratio": self.explained_ratio.tolist(),
            "n_selected": self.n_selected,
            "feature_names": self.feature_names,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        return cls(
            np.asarray(d["mean"], dtype=float),
            np.asarray(d["eigenvalues"], dtype=float),
            np.asarray(d["components"], dtype=float).reshape(len(d["mean"]), len(d["mean"])),
            np.asarray(d["explained_ratio"], dtype=float),
            int(d["n_selected"]),
            d.get("feature_names"),
        )


def _values(X) -> np.ndarray:
    return X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=float)


def center(X):
    """Subtract column means; returns ``(centered, means)``."""
    values = _values(X)
    if len(values) == 0:
        raise DataError("cannot center an empty matrix")
    mean = values.mean(axis=0)
    out = values - mean
    if isinstance(X, FeatureMatrix):
        return FeatureMatrix(out, list(X.feature_names)), mean
    return out, mean


def covariance(X_centered) -> np.ndarray:
    """Sample covariance ``Xc^T Xc / (n - 1)`` of already-centered data."""
    values = _values(X_centered)
    n = len(values)
    if n < 2:
        raise DataError(f"covariance needs at least 2 rows, got {n}")
    S = values.T @ values / (n - 1)
    return 0.5 * (S + S.T)


def eig_decompose(S, max_sweeps: int = JACOBI_MAX_SWEEPS, tol: float = JACOBI_TOL):
    """Eigenvalues (descending) and eigenvectors (rows) of a symmetric matrix.

    Cyclic Jacobi: each sweep visits every (p, q) pair above the diagonal and
    applies the plane rotation that zeroes ``A[p, q]``.  Stops once the
    off-diagonal Frobenius norm falls below ``tol * ||S||_F``.

    Each eigenvector is signed so that its largest-magnitude entry is positive.
    Eigenvalues equal to within roundoff are ordered by their eigenvectors,
    lexicographically.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DataError(f"expected a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise DataError("matrix has non-finite entries")
    scale = max(1.0, float(np.abs(S).max())) if S.size else 1.0
    if np.abs(S - S.T).max(initial=0.0) > 1e-9 * scale:
        raise DataError("matrix is not symmetric")
    d = S.shape[0]
    A = 0.5 * (S + S.T)
    V = np.eye(d)
    norm = np.linalg.norm(A)
    for _sweep in range(max_sweeps + 1):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * norm or norm == 0.0:
            break
        if _sweep == max_sweeps:
            raise NumericalError(f"Jacobi did not converge in {max_sweeps} sweeps (off-norm {off:.3e})")
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p, row_q = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0
                v_p, v_q = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * v_p - s * v_q
                V[:, q] = s * v_p + c * v_q
    values = np.diag(A).copy()
    vectors = V.T.copy()
    for i, v in enumerate(vectors):
        if v[np.argmax(np.abs(v))] < 0:
            vectors[i] = -v
    return _rank(values, vectors)


def _rank(values, vectors):
    d = len(values)
    if d == 0:
        return values, vectors
    tie = 1e-10 * max(float(np.abs(values).max()), 1e-300)
    order = sorted(range(d), key=lambda i: -values[i])
    # within runs of (numerically) equal eigenvalues, order by eigenvector
    ranked, i = [], 0
    while i < d:
        j = i + 1
        while j < d and values[order[i]] - values[order[j]] <= tie:
            j += 1
        ranked.extend(sorted(order[i:j], key=lambda m: tuple(vectors[m])))
        i = j
    ranked = np.array(ranked)
    return values[ranked], vectors[ranked]


def pca_fit(X, variance: float | None = 0.95, n_components: int | None = None) -> PcaModel:
    """Center, build the sample covariance, eigendecompose, and pick N."""
    centered, mean = center(X)
    S = covariance(centered)
    values, vectors = eig_decompose(S)
    values = np.where(values < 0, 0.0, values)  # PSD roundoff
    total = values.sum()
    ratio = values / total if total > 0 else np.full(len(values), 1.0 / max(len(values), 1))
    names = list(X.feature_names) if isinstance(X, FeatureMatrix) else None
    model = PcaModel(mean, values, vectors, ratio, len(values), names)
    model.n_selected = select_n(model, n_components=n_components, variance=variance)
    return model


def select_n(model: PcaModel, n_components: int | None = None, variance: float | None = 0.95) -> int:
    """Fixed N (clamped to ``[1, d]``) or the smallest N reaching cumulative ratio ``variance``."""
    d = model.d
    if n_components is not None:
        if n_components < 1:
            raise UsageError(f"number of components must be >= 1, got {n_components}")
        return min(int(n_components), d)
    if variance is None:
        return d
    if not 0 < variance <= 1:
        raise UsageError(f"variance threshold must be in (0, 1], got {variance}")
    cum = np.cumsum(model.explained_ratio)
    hit = np.nonzero(cum >= variance - 1e-12)[0]
    return int(hit[0]) + 1 if len(hit) else d


def transform(X, model: PcaModel, n: int | None = None):
    """Project onto the top ``n`` components (default: the model's selection)."""
    n = model.n_selected if n is None else n
    values = _values(X)
    if values.ndim != 2 or values.shape[1] != model.d:
        raise DataError(f"PCA model expects {model.d} features, got shape {values.shape}")
    Z = (values - model.mean) @ model.components[:n].T
    if isinstance(X, FeatureMatrix):
        return FeatureMatrix(Z, [f"PC{i + 1}" for i in range(n)])
    return Z


def inverse_transform(Z, model: PcaModel):
    values = _values(Z)
    n = values.shape[1]
    return values @ model.components[:n] + model.mean
