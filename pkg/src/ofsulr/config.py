"""Declarative pipeline configuration (INI-style ``key = value`` sections)."""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import UsageError
from .ingest import RECIPES

CLASSIFIER_KINDS = ("logreg", "svm", "tree", "forest", "gbt")


@dataclass
class DataSection:
    input: str = ""
    recipe: str = "none"
    features: list[str] = field(default_factory=list)


@dataclass
class PreprocessSection:
    scale: str = "zscore"
    encode: str = "label"
    max_onehot: int = 50


@dataclass
class ClusterSection:
    k: str = "auto"
    k_min: int = 2
    k_max: int = 10
    restarts: int = 5
    init: str = "k-means++"
    features: list[str] = field(default_factory=list)
    scale_first: bool = True
    label_train_only: bool = False


@dataclass
class PcaSection:
    variance: float = 0.95
    components: int = 0
    order: str = "label-first"


@dataclass
class GridSection:
    solver: list[str] = field(default_factory=lambda: ["gd", "newton"])
    penalty: list[str] = field(default_factory=lambda: ["l1", "l2", "none"])
    C: list[float] = field(default_factory=lambda: [0.01, 0.1, 1.0, 10.0, 100.0])
    folds: int = 3
    metric: str = "accuracy"


@dataclass
class SplitSection:
    ratio: float = 0.8


@dataclass
class StreamSection:
    enabled: bool = False
    batch_size: int = 1000
    interval_ms: int = 0


@dataclass
class ClassifiersSection:
    list: list[str] = field(default_factory=lambda: list(CLASSIFIER_KINDS))
    svm_C: float = 1.0
    svm_epochs: int = 200
    tree_max_depth: int = 12
    forest_trees: int = 50
    forest_max_depth: int = 12
    gbt_stages: int = 100
    gbt_max_depth: int = 3
    gbt_learning_rate: float = 0.1


@dataclass
class OutputSection:
    dir: str = "ofsulr-out"


@dataclass
class RunSection:
    seed: int = 0


@dataclass
class PipelineConfig:
    run: RunSection = field(default_factory=RunSection)
    data: DataSection = field(default_factory=DataSection)
    preprocess: PreprocessSection = field(default_factory=PreprocessSection)
    cluster: ClusterSection = field(default_factory=ClusterSection)
    pca: PcaSection = field(default_factory=PcaSection)
    grid: GridSection = field(default_factory=GridSection)
    split: SplitSection = field(default_factory=SplitSection)
    stream: StreamSection = field(default_factory=StreamSection)
    classifiers: ClassifiersSection = field(default_factory=ClassifiersSection)
    output: OutputSection = field(default_factory=OutputSection)

    @property
    def seed(self) -> int:
        return self.run.seed

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def set(self, dotted: str, value) -> None:
        """Set ``section.key`` from a string or typed value, with validation of the name."""
        try:
            section_name, key = dotted.split(".", 1)
        except ValueError:
            raise UsageError(f"config keys are written section.key, got {dotted!r}") from None
        section = getattr(self, section_name, None)
        if section is None or section_name not in _SECTIONS:
            raise UsageError(f"unknown config section [{section_name}]")
        types = {f.name: f for f in fields(section)}
        if key not in types:
            raise UsageError(f"unknown key {key!r} in section [{section_name}]")
        setattr(section, key, _convert(getattr(section, key), value, dotted))

    def validate(self) -> "PipelineConfig":
        def check(cond, msg):
            if not cond:
                raise UsageError(msg)

        check(self.data.recipe in RECIPES, f"unknown recipe {self.data.recipe!r}")
        check(self.preprocess.scale in ("zscore", "minmax", "none"), f"unknown scale {self.preprocess.scale!r}")
        check(self.preprocess.encode in ("label", "onehot"), f"unknown encoding {self.preprocess.encode!r}")
        check(self.cluster.k == "auto" or (self.cluster.k.isdigit() and int(self.cluster.k) >= 1),
              f"cluster.k must be 'auto' or a positive integer, got {self.cluster.k!r}")
        check(1 <= self.cluster.k_min < self.cluster.k_max, "need 1 <= cluster.k_min < cluster.k_max")
        check(self.cluster.restarts >= 1, "cluster.restarts must be >= 1")
        check(self.cluster.init in ("k-means++", "random"), f"unknown init {self.cluster.init!r}")
        check(0 < self.pca.variance <= 1, "pca.variance must be in (0, 1]")
        check(self.pca.components >= 0, "pca.components must be >= 0 (0 = use the variance threshold)")
        check(self.pca.order in ("label-first", "pca-first"), f"unknown pca.order {self.pca.order!r}")
        check(set(self.grid.solver) <= {"gd", "newton"} and self.grid.solver, "grid.solver values: gd, newton")
        check(set(self.grid.penalty) <= {"l1", "l2", "none"} and self.grid.penalty, "grid.penalty values: l1, l2, none")
        check(self.grid.C and all(c > 0 for c in self.grid.C), "grid.C values must be positive")
        check(self.grid.folds >= 2, "grid.folds must be >= 2")
        check(self.grid.metric in ("accuracy", "f1"), f"unknown metric {self.grid.metric!r}")
        check(0 < self.split.ratio < 1, "split.ratio must be in (0, 1)")
        check(self.stream.batch_size >= 1, "stream.batch_size must be >= 1")
        check(self.stream.interval_ms >= 0, "stream.interval_ms must be >= 0")
        bad = [c for c in self.classifiers.list if c not in CLASSIFIER_KINDS]
        check(not bad and self.classifiers.list, f"unknown classifiers {bad}; choose from {CLASSIFIER_KINDS}")
        return self


_SECTIONS = [f.name for f in fields(PipelineConfig)]


def _convert(current, value, name):
    if not isinstance(value, str):
        return value
    raw = value.strip()
    try:
        if isinstance(current, bool):
            low = raw.lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(raw)
            return low in ("true", "yes", "1", "on")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, list):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if current and isinstance(current[0], float) or name.endswith(".C"):
                return [float(s) for s in items]
            return items
    except ValueError:
        raise UsageError(f"bad value {value!r} for {name}") from None
    return raw


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Read an INI file (optional) and apply ``section.key`` overrides; unknown keys are errors."""
    cfg = PipelineConfig()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # keep key case (grid.C)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        for section in parser.sections():
            for key, value in parser.items(section):
                cfg.set(f"{section}.{key}", value)
    for key, value in (overrides or {}).items():
        cfg.set(key, value)
    return cfg.validate()


def dump_config(cfg: PipelineConfig) -> str:
    lines = []
    for section, values in cfg.to_dict().items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            if isinstance(value, list):
                value = ", ".join(str(v) for v in value)
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
