"""CART trees (Gini / squared error), random forests and gradient-boosted trees."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from .logreg import sigmoid

# splits must reduce impurity by more than this (relative to node size)
_MIN_GAIN = 1e-12


@dataclass
class TreeModel:
    """Flat binary tree.  ``feature[i] == -1`` marks a leaf.

    For classification trees ``value`` is the leaf's class-1 probability; for
    regression trees it is the leaf output.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    n_features: int
    max_depth: int
    min_samples_leaf: int
    kind: str = field(default="tree")

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(f"tree expects {self.n_features} features, got shape {X.shape}")
        node = np.zeros(len(X), dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def output(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def score(self, X) -> np.ndarray:
        return self.output(X)

    def predict(self, X) -> np.ndarray:
        return (self.output(X) >= 0.5).astype(int)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
            "n_features": self.n_features,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeModel":
        return cls(
            np.asarray(d["feature"], dtype=int), np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=int), np.asarray(d["right"], dtype=int),
            np.asarray(d["value"], dtype=float), np.asarray(d["n_samples"], dtype=int),
            int(d["n_features"]), int(d["max_depth"]), int(d["min_samples_leaf"]), d.get("kind", "tree"),
        )


def _best_split(X, target, rows, features, criterion, min_leaf):
    """Best (gain, feature, threshold) over ``features``; gain is the weighted impurity drop."""
    n = len(rows)
    best = (0.0, -1, 0.0)
    yt = target[rows]
    if criterion == "gini":
        pos = yt.sum()
        parent = 2.0 * pos * (n - pos) / n
    else:
        parent = float(np.sum((yt - yt.mean()) ** 2))
    if parent <= 0.0:
        return best
    for f in features:
        xs = X[rows, f]
        order = np.argsort(xs, kind="stable")
        xs, ys = xs[order], yt[order]
        # candidate cut after position i (left = first i+1 rows)
        cut = np.nonzero(xs[1:] > xs[:-1])[0]
        cut = cut[(cut + 1 >= min_leaf) & (n - cut - 1 >= min_leaf)]
        if len(cut) == 0:
            continue
        n_left = cut + 1.0
        n_right = n - n_left
        cs = np.cumsum(ys)
        s_left = cs[cut]
        s_right = cs[-1] - s_left
        if criterion == "gini":
            child = 2.0 * s_left * (n_left - s_left) / n_left + 2.0 * s_right * (n_right - s_right) / n_right
        else:
            cs2 = np.cumsum(ys * ys)
            q_left = cs2[cut]
            q_right = cs2[-1] - q_left
            child = (q_left - s_left**2 / n_left) + (q_right - s_right**2 / n_right)
        gains = parent - child
        j = int(np.argmax(gains))
        if gains[j] > best[0]:
            thr = 0.5 * (xs[cut[j]] + xs[cut[j] + 1])
            best = (float(gains[j]), int(f), float(thr))
    if best[0] <= _MIN_GAIN * max(parent, 1.0):
        return (0.0, -1, 0.0)
    return best


def _lookahead_split(X, target, rows, features, criterion, min_leaf):
    """Split with no gain of its own that best enables gain one level down.

    Used only when every single split has zero gain on an impure node (XOR-like
    structure); the chosen cut maximizes the summed gain of the children's best
    splits, and is rejected when that sum is not positive.
    """
    best = (0.0, -1, 0.0)
    for f in features:
        xs = np.unique(X[rows, f])
        for thr in 0.5 * (xs[:-1] + xs[1:]):
            mask = X[rows, f] <= thr
            lr, rr = rows[mask], rows[~mask]
            if len(lr) < min_leaf or len(rr) < min_leaf:
                continue
            gain = (_best_split(X, target, lr, features, criterion, min_leaf)[0]
                    + _best_split(X, target, rr, features, criterion, min_leaf)[0])
            if gain > best[0]:
                best = (gain, int(f), float(thr))
    return best


def build_tree(
    X,
    target,
    criterion: str = "gini",
    max_depth: int = 12,
    min_samples_leaf: int = 1,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
    leaf_value=None,
    rows=None,
) -> TreeModel:
    """Greedy depth-first CART.

    ``leaf_value(rows)`` overrides the default leaf output (mean target).
    ``max_features`` draws that many candidate features per split from ``rng``.
    """
    X = np.asarray(X, dtype=float)
    target = np.asarray(target, dtype=float)
    n, d = X.shape
    if n == 0:
        raise DataError("cannot fit a tree on zero rows")
    rows = np.arange(n) if rows is None else np.asarray(rows)
    leaf_value = leaf_value or (lambda r: float(target[r].mean()))
    feat, thr, left, right, val, cnt = [], [], [], [], [], []

    def new_node():
        for lst, v in ((feat, -1), (thr, 0.0), (left, -1), (right, -1), (val, 0.0), (cnt, 0)):
            lst.append(v)
        return len(feat) - 1

    root = new_node()
    stack = [(root, rows, 0)]
    while stack:
        node, r, depth = stack.pop()
        cnt[node] = len(r)
        gain, f, t = (0.0, -1, 0.0)
        if depth < max_depth and len(r) >= 2 * min_samples_leaf:
            if max_features is not None and max_features < d:
                features = np.sort(rng.choice(d, size=max_features, replace=False))
            else:
                features = range(d)
            gain, f, t = _best_split(X, target, r, features, criterion, min_samples_leaf)
            if f < 0 and depth + 2 <= max_depth and np.ptp(target[r]) > 0:
                gain, f, t = _lookahead_split(X, target, r, features, criterion, min_samples_leaf)
        if f < 0:
            val[node] = leaf_value(r)
            continue
        mask = X[r, f] <= t
        li, ri = new_node(), new_node()
        feat[node], thr[node], left[node], right[node] = f, t, li, ri
        val[node] = float(target[r].mean())
        # push right first so the left subtree is built first
        stack.append((ri, r[~mask], depth + 1))
        stack.append((li, r[mask], depth + 1))
    return TreeModel(
        np.array(feat, dtype=int), np.array(thr), np.array(left, dtype=int), np.array(right, dtype=int),
        np.array(val), np.array(cnt, dtype=int), d, max_depth, min_samples_leaf,
    )


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).ravel()
    if X.ndim != 2 or len(X) != len(y):
        raise DataError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if len(y) == 0:
        raise DataError("no training rows")
    if not np.all(np.isin(y, (0, 1))):
        raise DataError("binary 0/1 labels required")
    return X, y.astype(int)


def tree_fit(X, y, max_depth: int = 12, min_samples_leaf: int = 1) -> TreeModel:
    X, y = _check_xy(X, y)
    return build_tree(X, y, "gini", max_depth, min_samples_leaf)


# ---------------------------------------------------------------- random forest


@dataclass
class ForestModel:
    trees: list[TreeModel]
    seed: int
    max_features: int
    kind: str = field(default="forest", init=False)

    def score(self, X) -> np.ndarray:
        """Fraction of trees voting for class 1."""
        votes = np.zeros(len(np.asarray(X)))
        for t in self.trees:
            votes += t.predict(X)
        return votes / len(self.trees)

    def predict(self, X) -> np.ndarray:
        return (self.score(X) >= 0.5).astype(int)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "max_features": self.max_features,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        return cls([TreeModel.from_dict(t) for t in d["trees"]], int(d["seed"]), int(d["max_features"]))


def forest_fit(
    X,
    y,
    n_trees: int = 50,
    max_depth: int = 12,
    seed: int = 0,
    min_samples_leaf: int = 1,
    max_features: int | str | None = "sqrt",
) -> ForestModel:
    """Bagged Gini trees; each split samples ``ceil(sqrt(d))`` candidate features by default."""
    X, y = _check_xy(X, y)
    n, d = X.shape
    if n_trees < 1:
        raise DataError("a forest needs at least one tree")
    if max_features == "sqrt":
        m = math.ceil(math.sqrt(d))
    elif max_features in (None, "all"):
        m = d
    else:
        m = int(max_features)
    m = max(1, min(m, d))
    trees = []
    # per-tree streams derived from the master seed by index
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        boot = rng.integers(0, n, size=n)
        trees.append(build_tree(X[boot], y[boot], "gini", max_depth, min_samples_leaf, m, rng))
    return ForestModel(trees, seed, m)


def bootstrap_indices(n: int, seed: int, n_trees: int) -> list[np.ndarray]:
    """The bootstrap rows :func:`forest_fit` draws for each tree."""
    return [np.random.default_rng(c).integers(0, n, size=n) for c in np.random.SeedSequence(seed).spawn(n_trees)]


# ---------------------------------------------------------------- gradient boosting


def log_loss(y, p) -> float:
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


@dataclass
class GbtModel:
    init: float
    trees: list[TreeModel]
    learning_rate: float
    train_loss: list[float] = field(default_factory=list, repr=False)
    kind: str = field(default="gbt", init=False)

    def decision_function(self, X) -> np.ndarray:
        F = np.full(len(np.asarray(X)), self.init)
        for t in self.trees:
            F += self.learning_rate * t.output(X)
        return F

    def score(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return (self.score(X) >= 0.5).astype(int)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "init": self.init, "learning_rate": self.learning_rate,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "GbtModel":
        return cls(float(d["init"]), [TreeModel.from_dict(t) for t in d["trees"]], float(d["learning_rate"]))


def gbt_fit(
    X,
    y,
    n_stages: int = 100,
    max_depth: int = 3,
    learning_rate: float = 0.1,
    min_samples_leaf: int = 1,
) -> GbtModel:
    """Stage-wise regression trees on log-loss residuals with one-step Newton leaves.

    A stage whose leaves would raise the training loss has its leaf values
    halved until it does not.
    """
    X, y = _check_xy(X, y)
    base = y.mean()
    if base in (0.0, 1.0):
        raise DataError("gradient boosting needs both classes present (base-rate log-odds is infinite)")
    init = float(np.log(base / (1 - base)))
    F = np.full(len(y), init)
    losses = [log_loss(y, sigmoid(F))]
    trees = []
    for _ in range(n_stages):
        p = sigmoid(F)
        resid = y - p
        hess = p * (1 - p)

        def newton_leaf(r, resid=resid, hess=hess):
            return float(resid[r].sum() / max(hess[r].sum(), 1e-12))

        tree = build_tree(X, resid, "mse", max_depth, min_samples_leaf, leaf_value=newton_leaf)
        step = tree.output(X)
        for _halving in range(60):
            cand = F + learning_rate * step
            loss = log_loss(y, sigmoid(cand))
            if loss <= losses[-1]:
                break
            tree.value = tree.value * 0.5
            step = step * 0.5
        else:
            break
        F = cand
        losses.append(loss)
        trees.append(tree)
    return GbtModel(init, trees, learning_rate, losses)
