"""K-fold cross-validation and exhaustive grid search for logistic regression."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .classifiers.logreg import LogRegModel, logreg_fit
from .errors import DataError, UsageError
from .metrics import accuracy, confusion, f1

PENALTY_RANK = {"l2": 0, "l1": 1, "none": 2}
SOLVER_RANK = {"gd": 0, "newton": 1}
METRICS = {"accuracy": accuracy, "f1": f1}


@dataclass
class ParamGrid:
    solver: list[str] = field(default_factory=lambda: ["gd", "newton"])
    penalty: list[str] = field(default_factory=lambda: ["l1", "l2", "none"])
    C: list[float] = field(default_factory=lambda: [0.01, 0.1, 1.0, 10.0, 100.0])

    def cells(self):
        """``(valid_cells, skipped_cells)``; each cell is a dict of parameters."""
        valid, skipped = [], []
        for solver, penalty, C in itertools.product(self.solver, self.penalty, self.C):
            cell = {"solver": solver, "penalty": penalty, "C": float(C)}
            (skipped if penalty == "l1" and solver == "newton" else valid).append(cell)
        return valid, skipped


@dataclass
class CellResult:
    params: dict
    fold_scores: list[float]
    mean: float
    std: float


@dataclass
class CvResult:
    cells: list[CellResult]
    best_cell: int
    skipped: list[dict]
    folds: list[tuple[np.ndarray, np.ndarray]]
    metric: str
    best_model: LogRegModel | None = None

    @property
    def best_params(self) -> dict:
        return dict(self.cells[self.best_cell].params)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        k = len(self.folds)
        w.writerow(["cell", "solver", "penalty", "C"] + [f"fold{i}" for i in range(k)]
                   + ["mean", "std", "best"])
        for i, c in enumerate(self.cells):
            w.writerow([i, c.params["solver"], c.params["penalty"], c.params["C"],
                        *c.fold_scores, c.mean, c.std, int(i == self.best_cell)])
        return buf.getvalue()


def kfold_indices(n: int, k: int = 3, seed: int = 0):
    """Shuffled k-fold partition; fold sizes differ by at most one (larger folds first)."""
    if k < 2:
        raise UsageError(f"k must be >= 2, got {k}")
    if n < k:
        raise DataError(f"cannot make {k} folds from {n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    bounds = np.cumsum([0] + sizes)
    folds = []
    for i in range(k):
        val = np.sort(perm[bounds[i]:bounds[i + 1]])
        train = np.sort(np.concatenate([perm[:bounds[i]], perm[bounds[i + 1]:]]))
        folds.append((train, val))
    return folds


def _rank_key(cell: CellResult):
    p = cell.params
    return (-cell.mean, p["C"], PENALTY_RANK[p["penalty"]], SOLVER_RANK[p["solver"]])


def select_best(cells: list[CellResult], tie_tol: float = 1e-12) -> int:
    """Index of the highest mean; near-ties prefer smaller C, then l2/l1/none, then gd/newton."""
    top = max(c.mean for c in cells)
    tied = [i for i, c in enumerate(cells) if c.mean >= top - tie_tol]
    return min(tied, key=lambda i: _rank_key(cells[i])[1:])


def grid_search(
    X,
    y,
    grid: ParamGrid | None = None,
    k: int = 3,
    seed: int = 0,
    metric: str = "accuracy",
    preprocessor: Callable | None = None,
    tol: float = 1e-6,
    max_iter: int = 1000,
    refit: bool = True,
) -> CvResult:
    """Evaluate every valid (solver, penalty, C) cell by mean validation metric over k folds.

    ``preprocessor(X_train_fold)`` may return a fitted transform ``f`` applied as
    ``f(X)`` to both parts of that fold; it only ever sees training rows.
    Cells with ``penalty="none"`` ignore C, so one fit per (solver, fold) is
    shared across the C values.
    """
    grid = grid or ParamGrid()
    if metric not in METRICS:
        raise UsageError(f"unknown metric {metric!r}; choose from {sorted(METRICS)}")
    score_fn = METRICS[metric]
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    valid, skipped = grid.cells()
    if not valid:
        raise UsageError("every grid cell is invalid")
    folds = kfold_indices(len(y), k, seed)

    prepared = []
    for train, val in folds:
        if preprocessor is None:
            prepared.append((X[train], X[val]))
        else:
            f = preprocessor(X[train])
            prepared.append((f(X[train]), f(X[val])))

    cache: dict = {}
    results = []
    for cell in valid:
        scores = []
        for fi, (train, val) in enumerate(folds):
            key = (cell["solver"], cell["penalty"], None if cell["penalty"] == "none" else cell["C"], fi)
            if key not in cache:
                Xt, Xv = prepared[fi]
                model = logreg_fit(Xt, y[train], cell["penalty"], cell["C"], cell["solver"], tol, max_iter)
                cache[key] = score_fn(confusion(y[val], model.predict(Xv)))
            scores.append(cache[key])
        results.append(CellResult(dict(cell), scores, float(np.mean(scores)), float(np.std(scores))))

    best = select_best(results)
    out = CvResult(results, best, skipped, folds, metric)
    if refit:
        p = results[best].params
        Xfit = X if preprocessor is None else preprocessor(X)(X)
        out.best_model = logreg_fit(Xfit, y, p["penalty"], p["C"], p["solver"], tol, max_iter)
    return out
