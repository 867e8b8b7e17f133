import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import two_blobs
from ofsulr.classifiers import logreg_fit
from ofsulr.errors import DataError, UsageError
from ofsulr.metrics import accuracy, confusion
from ofsulr.modelselect import CellResult, ParamGrid, grid_search, kfold_indices, select_best


def c100_instance():
    """One weak-scale feature, 25% positives: heavy shrinkage predicts the majority class."""
    rng = np.random.default_rng(0)
    x = rng.standard_normal((300, 1))
    y = (x[:, 0] > np.quantile(x[:, 0], 0.75)).astype(int)
    return 0.1 * x, y


def test_fold_sizes():
    assert [len(v) for _, v in kfold_indices(9, 3)] == [3, 3, 3]
    assert [len(v) for _, v in kfold_indices(10, 3)] == [4, 3, 3]
    with pytest.raises(DataError):
        kfold_indices(2, 3)
    with pytest.raises(UsageError):
        kfold_indices(10, 1)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 10), st.integers(0, 200), st.integers(0, 1000))
def test_folds_partition(k, extra, seed):
    n = k + extra
    folds = kfold_indices(n, k, seed)
    vals = np.concatenate([v for _, v in folds])
    assert sorted(vals.tolist()) == list(range(n))
    for tr, va in folds:
        assert not set(tr) & set(va)
        assert len(tr) + len(va) == n


def test_default_grid_cells():
    valid, skipped = ParamGrid().cells()
    assert len(valid) == 25
    assert len(skipped) == 5
    assert all(c["penalty"] == "l1" and c["solver"] == "newton" for c in skipped)


def test_tie_rules():
    def cell(s, p, c, mean):
        return CellResult({"solver": s, "penalty": p, "C": c}, [mean], mean, 0.0)

    cells = [cell("newton", "l2", 1.0, 0.9), cell("gd", "none", 1.0, 0.9), cell("gd", "l1", 1.0, 0.9),
             cell("gd", "l2", 10.0, 0.9), cell("gd", "l2", 1.0, 0.9), cell("gd", "l2", 0.1, 0.8)]
    assert select_best(cells) == 4
    assert select_best(cells[:4]) == 0  # penalty outranks solver
    assert select_best(cells[1:3]) == 1  # l1 before none
    assert select_best([cell("gd", "l2", 1.0, 0.5)]) == 0


def test_single_cell_grid():
    X, y = two_blobs(90, 2, gap=2.0)
    cv = grid_search(X, y, ParamGrid(["gd"], ["l2"], [1.0]))
    assert cv.best_params == {"solver": "gd", "penalty": "l2", "C": 1.0}
    assert cv.best_model.C == 1.0


def test_best_is_argmax_of_table_and_deterministic():
    X, y = two_blobs(150, 3, gap=1.5, seed=4)
    a = grid_search(X, y, seed=2)
    b = grid_search(X, y, seed=2)
    assert a.to_csv() == b.to_csv()
    means = [c.mean for c in a.cells]
    assert a.cells[a.best_cell].mean == max(means)
    assert a.best_model.params() == a.best_params
    for c in a.cells:
        assert c.mean == pytest.approx(np.mean(c.fold_scores))


def test_cv_scores_match_direct_training():
    X, y = two_blobs(120, 2, gap=1.0, seed=8)
    cv = grid_search(X, y, ParamGrid(["newton"], ["l2"], [0.1]), k=3, seed=5)
    expected = []
    for tr, va in kfold_indices(len(y), 3, 5):
        m = logreg_fit(X[tr], y[tr], "l2", 0.1, "newton")
        expected.append(accuracy(confusion(y[va], m.predict(X[va]))))
    assert cv.cells[0].fold_scores == expected


def test_constructed_instance_selects_c100():
    X, y = c100_instance()
    # direct training confirms small C under-fits to the majority class
    acc = {C: np.mean(logreg_fit(X, y, "l2", C).predict(X) == y) for C in (0.01, 1.0, 100.0)}
    assert acc[0.01] == 0.75 and acc[100.0] > acc[1.0]
    cv = grid_search(X, y, ParamGrid(["gd"], ["l2"], [0.01, 0.1, 1.0, 10.0, 100.0]))
    assert cv.best_params["C"] == 100.0


def test_preprocessor_only_sees_training_rows():
    X, y = two_blobs(90, 2, gap=2.0)
    X = np.column_stack([X, np.arange(len(y))])  # last column identifies the row
    seen = []

    def prep(X_train):
        seen.append(set(X_train[:, -1].astype(int)))
        return lambda Z: Z[:, :-1]

    cv = grid_search(X, y, ParamGrid(["gd"], ["l2"], [1.0]), k=3, refit=False, preprocessor=prep)
    for (train, val), rows in zip(cv.folds, seen):
        assert rows == set(train.tolist())
        assert not rows & set(val.tolist())


def test_errors():
    X, y = two_blobs(30)
    with pytest.raises(UsageError):
        grid_search(X, y, ParamGrid(["newton"], ["l1"], [1.0]))
    with pytest.raises(UsageError):
        grid_search(X, y, metric="auc")
