"""Table -> numeric feature matrix: categorical encoding, scaling and splitting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, UsageError
from .ingest import Table


@dataclass
class FeatureMatrix:
    values: np.ndarray
    feature_names: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise DataError("feature matrix must be 2-D")
        if self.values.shape[1] != len(self.feature_names):
            raise DataError(
                f"{self.values.shape[1]} columns but {len(self.feature_names)} feature names"
            )
        if not np.all(np.isfinite(self.values)):
            raise DataError("feature matrix contains missing or non-finite entries")

    @property
    def shape(self):
        return self.values.shape

    def rows(self, idx) -> "FeatureMatrix":
        return FeatureMatrix(self.values[idx], list(self.feature_names))

    def select(self, names) -> "FeatureMatrix":
        cols = [self.feature_names.index(n) for n in names]
        return FeatureMatrix(self.values[:, cols], list(names))


@dataclass
class LabelVector:
    """Integer class ids (contiguous from 0) plus the cluster -> class map that produced them."""

    labels: np.ndarray
    mapping: dict[int, int] = field(default_factory=dict)

    def __len__(self):
        return len(self.labels)

    def counts(self) -> list[int]:
        n_classes = max(len(self.mapping), int(self.labels.max()) + 1 if len(self.labels) else 0)
        return np.bincount(self.labels, minlength=n_classes).tolist()


@dataclass
class Encoder:
    """Frozen per-column encoding learned from a table.

    ``mappings`` holds, for each non-numeric column, its category -> code map in
    order of first appearance.
    """

    columns: list[str]
    kinds: dict[str, str]
    policy: str = "label"
    mappings: dict[str, dict[str, int]] = field(default_factory=dict)
    max_onehot: int = 50

    @property
    def feature_names(self) -> list[str]:
        names = []
        for c in self.columns:
            if c in self.mappings and self.policy == "onehot":
                names.extend(f"{c}={cat}" for cat in self.mappings[c])
            else:
                names.append(c)
        return names

    def transform(self, table: Table) -> FeatureMatrix:
        blocks = []
        for name in self.columns:
            if name not in table:
                raise DataError(f"input lacks feature column {name!r}")
            cells = table.column(name).cells
            if any(v is None for v in cells):
                raise DataError(f"column {name!r} has missing cells; clean before encoding")
            if name not in self.mappings:
                try:
                    blocks.append(np.asarray(cells, dtype=float)[:, None])
                except (TypeError, ValueError):
                    raise DataError(f"column {name!r} is not numeric") from None
                continue
            mapping = self.mappings[name]
            codes = np.array([mapping.get(str(v), -1) for v in cells], dtype=float)
            if self.policy == "onehot":
                block = np.zeros((len(cells), len(mapping)))
                hit = codes >= 0
                block[np.nonzero(hit)[0], codes[hit].astype(int)] = 1.0
                blocks.append(block)
            else:
                blocks.append(codes[:, None])
        values = np.hstack(blocks) if blocks else np.zeros((table.row_count, 0))
        return FeatureMatrix(values, self.feature_names)

    def to_dict(self) -> dict:
        return {
            "columns": self.columns,
            "kinds": self.kinds,
            "policy": self.policy,
            "mappings": self.mappings,
            "max_onehot": self.max_onehot,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Encoder":
        return cls(d["columns"], d["kinds"], d["policy"], d["mappings"], d["max_onehot"])


def fit_encoder(table: Table, policy: str = "label", columns=None, max_onehot: int = 50) -> Encoder:
    if policy not in ("label", "onehot"):
        raise UsageError(f"unknown encoding policy {policy!r}")
    columns = list(columns) if columns is not None else table.column_names
    mappings = {}
    kinds = {}
    for name in columns:
        col = table.column(name)
        kinds[name] = col.kind.value
        if col.kind.numeric:
            continue
        mapping: dict[str, int] = {}
        for v in col.cells:
            if v is not None:
                mapping.setdefault(str(v), len(mapping))
        if policy == "onehot" and len(mapping) > max_onehot:
            raise DataError(
                f"column {name!r} has {len(mapping)} categories, above the one-hot cap {max_onehot}"
            )
        mappings[name] = mapping
    return Encoder(columns, kinds, policy, mappings, max_onehot)


def encode(table: Table, policy: str = "label", max_onehot: int = 50) -> FeatureMatrix:
    """Numeric columns pass through; categoricals become codes or one-hot blocks."""
    return fit_encoder(table, policy, max_onehot=max_onehot).transform(table)


# ---------------------------------------------------------------- scaling


@dataclass
class Scaler:
    kind: str
    offset: np.ndarray
    scale: np.ndarray
    constant: np.ndarray

    def apply(self, X):
        values = X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=float)
        if values.shape[1] != self.offset.shape[0]:
            raise DataError(f"scaler fit on {self.offset.shape[0]} features, got {values.shape[1]}")
        out = (values - self.offset) / self.scale
        # constant features map to 0
        out[:, self.constant] = 0.0
        if isinstance(X, FeatureMatrix):
            return FeatureMatrix(out, list(X.feature_names))
        return out

    def inverse(self, Z):
        values = Z.values if isinstance(Z, FeatureMatrix) else np.asarray(Z, dtype=float)
        out = values * self.scale + self.offset
        if isinstance(Z, FeatureMatrix):
            return FeatureMatrix(out, list(Z.feature_names))
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "offset": self.offset.tolist(),
            "scale": self.scale.tolist(),
            "constant": self.constant.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(
            d["kind"],
            np.asarray(d["offset"], dtype=float),
            np.asarray(d["scale"], dtype=float),
            np.asarray(d["constant"], dtype=bool),
        )


def scaler_fit(X, kind: str = "zscore") -> Scaler:
    """Learn min/max (``minmax``) or mean/population-std (``zscore``) per feature."""
    values = X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=float)
    if values.shape[0] == 0:
        raise DataError("cannot fit a scaler on an empty matrix")
    if kind == "minmax":
        offset = values.min(axis=0)
        spread = values.max(axis=0) - offset
    elif kind == "zscore":
        offset = values.mean(axis=0)
        spread = values.std(axis=0)  # population (ddof=0)
    else:
        raise UsageError(f"unknown scaler kind {kind!r}")
    # also constant: variation below float resolution, or a spread that underflowed to 0
    scale = np.abs(values).max(axis=0)
    constant = (np.ptp(values, axis=0) <= np.finfo(float).eps * scale) | ~(spread > 0)
    return Scaler(kind, offset, np.where(constant, 1.0, spread), constant)


def scaler_apply(scaler: Scaler, X):
    return scaler.apply(X)


# ---------------------------------------------------------------- splitting


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray
    seed: int


def split(n: int, ratio: float = 0.8, seed: int = 0) -> SplitIndices:
    """Random train/test partition; the first ``floor(ratio * n)`` permuted indices train."""
    if n < 2:
        raise DataError(f"need at least 2 rows to split, got {n}")
    if not 0 < ratio < 1:
        raise UsageError(f"split ratio must be in (0, 1), got {ratio}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = math.floor(ratio * n + 1e-9)
    return SplitIndices(perm[:n_train], perm[n_train:], seed)
