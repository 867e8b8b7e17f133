"""End-to-end orchestration: clean, encode, label by clustering, project, tune, evaluate.

Every stage runs under :func:`stage`, which prefixes error messages with the
stage name so a failed run says where it failed.
"""

from __future__ import annotations

import contextlib
import csv
import io
import json
import os
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bundle import ModelBundle, save_bundle
from .classifiers import DISPLAY_NAMES, fit_classifier, logreg_fit, threshold_of
from .cluster import ClusterModel, ElbowCurve, elbow_select, kmeans_fit, labels_of
from .config import PipelineConfig
from .errors import DataError, NumericalError, OfsulrError, UsageError
from .ingest import (
    Column,
    ColumnKind,
    Table,
    apply_recipe,
    load_csv,
    load_uci_diabetes_dir,
    profile,
    save_csv,
)
from .metrics import EvalReport, evaluate
from .modelselect import CvResult, ParamGrid, grid_search
from .pca import PcaModel, pca_fit, select_n, transform
from .preprocess import Encoder, Scaler, SplitIndices, fit_encoder, scaler_fit, split
from .stream import iter_batches, stream_evaluate

LABEL_COLUMN = "label"
LOCK_NAME = ".ofsulr.lock"


@contextlib.contextmanager
def stage(name: str):
    """Re-raise any failure inside the block with the stage name attached."""
    try:
        yield
    except OfsulrError as exc:
        if str(exc).startswith("["):
            raise
        raise type(exc)(f"[{name}] {exc}") from exc
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        raise NumericalError(f"[{name}] {type(exc).__name__}: {exc}") from exc


# ---------------------------------------------------------------- loading


def load_input(path: str | Path, kind_hints=None) -> Table:
    """A CSV file, or a directory of UCI Diabetes ``data-NN`` files."""
    if not str(path):
        raise UsageError("no input given (data.input / --input)")
    p = Path(path)
    if p.is_dir():
        return load_uci_diabetes_dir(p)
    return load_csv(p, kind_hints=kind_hints)


def clean_table(cfg: PipelineConfig, table: Table | None = None):
    """Load (unless ``table`` is given) and apply the configured recipe."""
    with stage("load"):
        if table is None:
            table = load_input(cfg.data.input)
    with stage("clean"):
        result = apply_recipe(table, cfg.data.recipe)
    return result


def feature_columns(cfg: PipelineConfig, table: Table) -> list[str]:
    if cfg.data.features:
        missing = [c for c in cfg.data.features if c not in table]
        if missing:
            raise UsageError(f"configured features not in data: {missing}")
        return list(cfg.data.features)
    return [c for c in table.column_names if c != LABEL_COLUMN]


# ---------------------------------------------------------------- prepared run state


@dataclass
class Prepared:
    """Everything shared by the OFS-ULR run and the classifier comparison."""

    table: Table
    recipe_log: list[str]
    encoder: Encoder
    encoded: np.ndarray
    split: SplitIndices
    scaler: Scaler | None
    cluster_features: list[str]
    elbow: ElbowCurve | None
    cluster: ClusterModel
    cluster_fit_indices: np.ndarray
    labels: np.ndarray
    pca: PcaModel
    n_selected: int
    projected: np.ndarray
    timings: dict = field(default_factory=dict)

    @property
    def y_train(self):
        return self.labels[self.split.train]

    @property
    def y_test(self):
        return self.labels[self.split.test]

    def labeled_rows(self, indices) -> Table:
        """Cleaned rows (feature columns only) with the derived label column appended."""
        t = self.table.rows(indices)
        cols = [t.column(c) for c in self.encoder.columns]
        cols.append(Column(LABEL_COLUMN, ColumnKind.INTEGER, tuple(int(v) for v in self.labels[indices])))
        return Table.from_columns(t.name, cols, t.row_count)


def _fit_pca(cfg: PipelineConfig, X: np.ndarray) -> tuple[PcaModel, int]:
    n_comp = cfg.pca.components or None
    model = pca_fit(X, variance=cfg.pca.variance, n_components=n_comp)
    return model, select_n(model, n_comp, cfg.pca.variance)


def _cluster_columns(cfg: PipelineConfig, encoder: Encoder, recipe_features) -> list[int]:
    wanted = cfg.cluster.features or recipe_features
    names = encoder.feature_names
    if not wanted:
        return list(range(len(names)))
    missing = [w for w in wanted if w not in names]
    if missing:
        raise UsageError(f"cluster features not among encoded features: {missing}")
    return [names.index(w) for w in wanted]


def prepare(cfg: PipelineConfig, table: Table | None = None) -> Prepared:
    """Clean, encode, split, scale, derive labels by k-means and fit PCA."""
    timings = {}
    t0 = time.perf_counter()
    recipe = clean_table(cfg, table)
    cleaned = recipe.table
    timings["clean"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with stage("encode"):
        if cleaned.row_count < 2:
            raise DataError(f"only {cleaned.row_count} rows left after cleaning")
        encoder = fit_encoder(cleaned, cfg.preprocess.encode, feature_columns(cfg, cleaned),
                              cfg.preprocess.max_onehot)
        encoded = encoder.transform(cleaned).values
    with stage("split"):
        parts = split(cleaned.row_count, cfg.split.ratio, cfg.seed)
    with stage("scale"):
        scaler = None
        scaled = encoded
        if cfg.preprocess.scale != "none":
            scaler = scaler_fit(encoded[parts.train], cfg.preprocess.scale)
            scaled = scaler.apply(encoded)
    timings["encode"] = time.perf_counter() - t0

    pca_model = None
    if cfg.pca.order == "pca-first":
        t0 = time.perf_counter()
        with stage("pca"):
            pca_model, n_sel = _fit_pca(cfg, scaled[parts.train])
            projected = transform(scaled, pca_model, n_sel)
        timings["pca"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with stage("cluster"):
        if pca_model is not None:
            cluster_input = projected
            cluster_names = [f"PC{i + 1}" for i in range(n_sel)]
        else:
            cols = _cluster_columns(cfg, encoder, recipe.cluster_features)
            cluster_input = (scaled if cfg.cluster.scale_first else encoded)[:, cols]
            cluster_names = [encoder.feature_names[j] for j in cols]
        fit_rows = np.sort(parts.train) if cfg.cluster.label_train_only else np.arange(cleaned.row_count)
        kw = dict(restarts=cfg.cluster.restarts, init=cfg.cluster.init)
        elbow = None
        if cfg.cluster.k == "auto":
            k_max = min(cfg.cluster.k_max, len(fit_rows))
            elbow = elbow_select(cluster_input[fit_rows], cfg.cluster.k_min, k_max, cfg.seed, **kw)
            k = elbow.chosen_k
        else:
            k = int(cfg.cluster.k)
        model = kmeans_fit(cluster_input[fit_rows], k, seed=cfg.seed, **kw)
        if k != 2:
            raise DataError(f"clustering produced k={k} classes; the classifiers are binary (set cluster.k = 2)")
        derived = labels_of(model)
        if cfg.cluster.label_train_only:
            # rows outside the fit set get the label of their nearest centroid
            lut = np.array([derived.mapping[j] for j in range(model.k)])
            labels = lut[model.predict(cluster_input)]
        else:
            labels = derived.labels
        if len(np.unique(labels[parts.train])) < 2:
            raise DataError("derived labels put every training row in one class")
    timings["cluster"] = time.perf_counter() - t0

    if pca_model is None:
        t0 = time.perf_counter()
        with stage("pca"):
            pca_model, n_sel = _fit_pca(cfg, scaled[parts.train])
            projected = transform(scaled, pca_model, n_sel)
        timings["pca"] = time.perf_counter() - t0

    prepared = Prepared(
        cleaned, recipe.log, encoder, encoded, parts, scaler, cluster_names, elbow, model,
        fit_rows, labels.astype(int), pca_model, n_sel, projected, timings,
    )
    return prepared


def fold_preprocessor(cfg: PipelineConfig):
    """Per-fold scaler + PCA, fit only on the fold's training part."""

    def fit(X_train):
        sc = scaler_fit(X_train, cfg.preprocess.scale) if cfg.preprocess.scale != "none" else None
        base = sc.apply(X_train) if sc is not None else X_train
        model, n = _fit_pca(cfg, base)

        def apply(X):
            Z = sc.apply(X) if sc is not None else X
            return transform(Z, model, n)

        return apply

    return fit


def tune(cfg: PipelineConfig, prep: Prepared) -> CvResult:
    grid = ParamGrid(list(cfg.grid.solver), list(cfg.grid.penalty), list(cfg.grid.C))
    with stage("tune"):
        return grid_search(
            prep.encoded[prep.split.train], prep.y_train, grid, cfg.grid.folds, cfg.seed,
            cfg.grid.metric, preprocessor=fold_preprocessor(cfg), refit=False,
        )


def make_bundle(cfg: PipelineConfig, prep: Prepared, classifier) -> ModelBundle:
    provenance = {
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "package_version": __version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    return ModelBundle(prep.encoder, prep.scaler, prep.pca, prep.n_selected, classifier,
                       LABEL_COLUMN, provenance)


# ---------------------------------------------------------------- OFS-ULR run


@dataclass
class RunResult:
    bundle: ModelBundle
    report: EvalReport
    prepared: Prepared
    cv: CvResult
    train_report: EvalReport
    timings: dict

    def __iter__(self):
        yield self.bundle
        yield self.report

    def summary(self) -> dict:
        """Deterministic run description (no wall-clock values)."""
        prep = self.prepared
        rep = self.report.to_dict()
        rep.pop("wall_time")
        train = self.train_report.to_dict()
        train.pop("wall_time")
        train.pop("roc_points")
        elbow = None
        if prep.elbow is not None:
            elbow = {"ks": prep.elbow.ks, "wcss": prep.elbow.wcss, "chosen_k": prep.elbow.chosen_k}
        return {
            "recipe_log": prep.recipe_log,
            "rows": prep.table.row_count,
            "features": prep.encoder.feature_names,
            "encoder_mappings": prep.encoder.mappings,
            "split": {"train": len(prep.split.train), "test": len(prep.split.test), "seed": prep.split.seed},
            "cluster": {
                "features": prep.cluster_features,
                "fit_rows": int(len(prep.cluster_fit_indices)),
                "label_train_only": len(prep.cluster_fit_indices) < prep.table.row_count,
                "k": prep.cluster.k,
                "wcss": prep.cluster.wcss,
                "class_counts": np.bincount(prep.labels, minlength=2).tolist(),
                "elbow": elbow,
            },
            "pca": {
                "explained_ratio": prep.pca.explained_ratio.tolist(),
                "n_selected": prep.n_selected,
            },
            "grid": {"best": self.cv.best_params, "metric": self.cv.metric,
                     "skipped": self.cv.skipped, "cells": len(self.cv.cells)},
            "classifier": self.bundle.classifier.params() if hasattr(self.bundle.classifier, "params") else {},
            "train": train,
            "test": rep,
        }


def run_ofsulr(cfg: PipelineConfig, table: Table | None = None, out_dir: str | Path | None = None) -> RunResult:
    """Full OFS-ULR run.  When ``out_dir`` is given, artifacts are written there."""
    t_start = time.perf_counter()
    prep = prepare(cfg, table)
    t0 = time.perf_counter()
    cv = tune(cfg, prep)
    prep.timings["tune"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with stage("train"):
        p = cv.best_params
        Z_train = prep.projected[prep.split.train]
        model = logreg_fit(Z_train, prep.y_train, p["penalty"], p["C"], p["solver"])
        train_report = evaluate(prep.y_train, model.predict(Z_train))
    prep.timings["train"] = time.perf_counter() - t0

    with stage("evaluate"):
        t0 = time.perf_counter()
        Z_test = prep.projected[prep.split.test]
        scores = model.score(Z_test)
        preds = (scores >= threshold_of(model)).astype(int)
        report = evaluate(prep.y_test, preds, scores, wall_time=prep.timings["train"] + time.perf_counter() - t0)
    prep.timings["total"] = time.perf_counter() - t_start

    result = RunResult(make_bundle(cfg, prep, model), report, prep, cv, train_report, dict(prep.timings))
    if out_dir is not None:
        write_run_outputs(result, cfg, out_dir)
    return result


# ---------------------------------------------------------------- outputs


@contextlib.contextmanager
def output_dir(path: str | Path):
    """Exclusive, all-or-nothing output directory.

    Files are written into a staging directory that replaces its targets only
    when the block succeeds; a lock file keeps concurrent runs out.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    lock = out / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise UsageError(f"output directory {out} is locked by another run ({lock})") from None
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    staging = out / f".staging-{os.getpid()}"
    try:
        staging.mkdir()
        yield staging
        for item in staging.iterdir():
            os.replace(item, out / item.name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
        lock.unlink(missing_ok=True)


def _elbow_dat(elbow: ElbowCurve) -> str:
    lines = ["# k wcss chosen"]
    lines += [f"{k} {w!r} {int(k == elbow.chosen_k)}" for k, w in zip(elbow.ks, elbow.wcss)]
    return "\n".join(lines) + "\n"


def write_run_outputs(result: RunResult, cfg: PipelineConfig, out_dir: str | Path) -> None:
    prep = result.prepared
    with stage("write"), output_dir(out_dir) as tmp:
        save_bundle(result.bundle, tmp / "bundle.model")
        (tmp / "report.json").write_text(json.dumps(result.summary(), indent=1, sort_keys=True) + "\n")
        (tmp / "timings.json").write_text(json.dumps(result.timings, indent=1, sort_keys=True) + "\n")
        (tmp / "cv.csv").write_text(result.cv.to_csv())
        save_csv(prep.labeled_rows(prep.split.test), tmp / "test.csv")
        if prep.elbow is not None:
            (tmp / "elbow.dat").write_text(_elbow_dat(prep.elbow))


# ---------------------------------------------------------------- comparison


@dataclass
class ComparisonRow:
    kind: str
    mode: str
    report: EvalReport | None
    error: str | None = None

    @property
    def name(self) -> str:
        return DISPLAY_NAMES[self.kind]


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow]
    test_indices: np.ndarray
    n_features: int

    COLUMNS = ["Classifier", "Mode", "Avg. time", "Ac", "Fm", "Pr", "Re", "AUC", "Error"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            if r.report is None:
                w.writerow([r.name, r.mode, "", "", "", "", "", "", r.error])
                continue
            rep = r.report
            w.writerow([r.name, r.mode, f"{rep.wall_time:.4f}", rep.accuracy, rep.f1, rep.precision,
                        rep.recall, "" if rep.auc is None else rep.auc, ""])
        return buf.getvalue()

    def to_dat(self) -> str:
        """Whitespace-separated table for bar charts (one line per successful row)."""
        lines = ["# classifier mode Ac Fm Pr Re time"]
        for r in self.rows:
            if r.report is not None:
                rep = r.report
                lines.append(f'"{r.name}" {r.mode} {rep.accuracy!r} {rep.f1!r} {rep.precision!r} '
                             f"{rep.recall!r} {rep.wall_time:.4f}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "n_test": int(len(self.test_indices)),
            "n_features": self.n_features,
            "rows": [
                {"classifier": r.name, "kind": r.kind, "mode": r.mode, "error": r.error,
                 "report": None if r.report is None else r.report.to_dict()}
                for r in self.rows
            ],
        }


def _baseline_params(cfg: PipelineConfig, kind: str) -> dict:
    c = cfg.classifiers
    return {
        "svm": {"C": c.svm_C, "epochs": c.svm_epochs},
        "tree": {"max_depth": c.tree_max_depth},
        "forest": {"n_trees": c.forest_trees, "max_depth": c.forest_max_depth},
        "gbt": {"n_stages": c.gbt_stages, "max_depth": c.gbt_max_depth, "learning_rate": c.gbt_learning_rate},
    }[kind]


def run_comparison(cfg: PipelineConfig, table: Table | None = None, stream: bool | None = None,
                   out_dir: str | Path | None = None) -> ComparisonReport:
    """Train every configured classifier on one split and one feature space; evaluate each."""
    prep = prepare(cfg, table)
    stream = cfg.stream.enabled if stream is None else stream
    train, test = prep.split.train, prep.split.test
    Z_train, Z_test = prep.projected[train], prep.projected[test]
    test_table = prep.labeled_rows(test) if stream else None
    rows = []
    for kind in cfg.classifiers.list:
        try:
            with stage(kind):
                t0 = time.perf_counter()
                if kind == "logreg":
                    p = tune(cfg, prep).best_params
                    model = logreg_fit(Z_train, prep.y_train, p["penalty"], p["C"], p["solver"])
                else:
                    model = fit_classifier(kind, Z_train, prep.y_train, seed=cfg.seed,
                                           **_baseline_params(cfg, kind))
                scores = model.score(Z_test)
                preds = (scores >= threshold_of(model)).astype(int)
                wall = time.perf_counter() - t0
                rows.append(ComparisonRow(kind, "batch", evaluate(prep.y_test, preds, scores, wall)))
                if stream:
                    bundle = make_bundle(cfg, prep, model)
                    batches = iter_batches(test_table, cfg.stream.batch_size, cfg.stream.interval_ms / 1000)
                    t0 = time.perf_counter()
                    running = stream_evaluate(bundle, batches)
                    rep = running.final()
                    rep.wall_time = time.perf_counter() - t0
                    rows.append(ComparisonRow(kind, "stream", rep))
        except OfsulrError as exc:
            rows.append(ComparisonRow(kind, "batch", None, str(exc)))
    report = ComparisonReport(rows, test, prep.projected.shape[1])
    if out_dir is not None:
        with stage("write"), output_dir(out_dir) as tmp:
            (tmp / "comparison.csv").write_text(report.to_csv())
            (tmp / "comparison.dat").write_text(report.to_dat())
            (tmp / "comparison.json").write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    return report


# ---------------------------------------------------------------- synthetic data


def _centroids(n_clusters: int, d: int, separation: float, rng: np.random.Generator) -> np.ndarray:
    """Cluster centres with every pairwise distance equal to ``separation`` (a regular simplex),
    in a random orientation.  With more clusters than dimensions, centres sit on a line
    with neighbour spacing ``separation`` instead."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q *= np.sign(np.diag(r))
    if n_clusters <= d:
        simplex = np.eye(n_clusters) * (separation / np.sqrt(2.0))
        simplex -= simplex.mean(axis=0)
        return simplex @ q[:n_clusters]
    steps = (np.arange(n_clusters) - (n_clusters - 1) / 2) * separation
    return steps[:, None] * q[0][None, :]


def generate_synthetic(n: int, d: int, n_clusters: int = 2, separation: float = 10.0, seed: int = 0):
    """Gaussian blobs with unit within-cluster variance; returns ``(table, true_labels)``.

    Columns are ``x1..xd``; rows are shuffled.  The labels are ground truth for
    diagnostics and are not part of the table.
    """
    if separation < 0:
        raise UsageError("separation must be >= 0")
    if n < n_clusters or n_clusters < 1 or d < 1:
        raise UsageError(f"need n >= n_clusters >= 1 and d >= 1 (n={n}, d={d}, clusters={n_clusters})")
    rng = np.random.default_rng(seed)
    centres = _centroids(n_clusters, d, separation, rng)
    truth = rng.permutation(np.arange(n) % n_clusters)
    X = centres[truth] + rng.standard_normal((n, d))
    cols = [Column(f"x{j + 1}", ColumnKind.REAL, tuple(float(v) for v in X[:, j])) for j in range(d)]
    return Table.from_columns("synthetic", cols, n), truth


def save_synthetic(table: Table, truth, path: str | Path) -> Path:
    """Write the table as CSV and the labels to a ``.labels`` sidecar (one per line)."""
    path = Path(path)
    save_csv(table, path)
    sidecar = path.with_suffix(".labels")
    sidecar.write_text("".join(f"{int(v)}\n" for v in truth))
    return sidecar


def profile_report(table: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["column", "null_count", "not_null_count", "kind", "valid_pct"])
    for p in profile(table):
        w.writerow([p.name, p.null_count, p.not_null_count, p.kind.value, f"{p.valid_pct:.2f}"])
    return buf.getvalue()
