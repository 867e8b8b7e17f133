"""Self-contained model bundle: encoder + scaler + PCA + classifier, saved as JSON text."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifiers import model_from_dict, predict, score
from .errors import DataError
from .ingest import ColumnKind, Table
from .pca import PcaModel, transform
from .preprocess import Encoder, Scaler

BUNDLE_FORMAT = "ofsulr-bundle"
BUNDLE_VERSION = 1


@dataclass
class ModelBundle:
    encoder: Encoder
    scaler: Scaler | None
    pca: PcaModel | None
    n_selected: int | None
    classifier: object
    label_column: str = "label"
    provenance: dict = field(default_factory=dict)
    version: int = BUNDLE_VERSION

    @property
    def input_columns(self) -> list[str]:
        return list(self.encoder.columns)

    def kind_hints(self) -> dict[str, ColumnKind]:
        return {c: ColumnKind(k) for c, k in self.encoder.kinds.items()}

    def features(self, table: Table) -> np.ndarray:
        """Frozen preprocessing: encode, scale, project.  Nothing is refit."""
        X = self.encoder.transform(table).values
        if self.scaler is not None:
            X = self.scaler.apply(X)
        if self.pca is not None:
            X = transform(X, self.pca, self.n_selected)
        return X

    def predict(self, table: Table) -> np.ndarray:
        return predict(self.classifier, self.features(table))

    def score(self, table: Table) -> np.ndarray:
        return score(self.classifier, self.features(table))

    def labels(self, table: Table) -> np.ndarray:
        if self.label_column not in table:
            raise DataError(f"input lacks the label column {self.label_column!r}")
        cells = table.column(self.label_column).cells
        if any(v is None for v in cells):
            raise DataError(f"label column {self.label_column!r} has missing cells")
        return np.asarray(cells, dtype=int)

    def to_dict(self) -> dict:
        return {
            "format": BUNDLE_FORMAT,
            "version": self.version,
            "label_column": self.label_column,
            "encoder": self.encoder.to_dict(),
            "scaler": self.scaler.to_dict() if self.scaler is not None else None,
            "pca": self.pca.to_dict() if self.pca is not None else None,
            "n_selected": self.n_selected,
            "classifier": self.classifier.to_dict(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBundle":
        if not isinstance(d, dict) or d.get("format") != BUNDLE_FORMAT:
            raise DataError("not an ofsulr model bundle")
        if d.get("version") != BUNDLE_VERSION:
            raise DataError(f"unsupported bundle version {d.get('version')!r} (expected {BUNDLE_VERSION})")
        try:
            return cls(
                Encoder.from_dict(d["encoder"]),
                Scaler.from_dict(d["scaler"]) if d["scaler"] is not None else None,
                PcaModel.from_dict(d["pca"]) if d["pca"] is not None else None,
                d["n_selected"],
                model_from_dict(d["classifier"]),
                d["label_column"],
                d.get("provenance", {}),
                d["version"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"corrupt model bundle: {exc!r}") from exc


def save_bundle(bundle: ModelBundle, path: str | Path) -> None:
    Path(path).write_text(json.dumps(bundle.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_bundle(path: str | Path) -> ModelBundle:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read model bundle {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt model bundle {path}: {exc}") from exc
    return ModelBundle.from_dict(data)
