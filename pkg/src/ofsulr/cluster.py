"""K-means label derivation with a cached closest-distance shortcut, and elbow selection.

Each point keeps the distance to its current centroid.  After the centroids
move, the distance to the *same* centroid is recomputed first; the point only
pays for a full scan over all k centroids when that distance grew beyond the
cached value.  A full assignment pass is always run before declaring
convergence, so the returned partition is a fixed point of plain Lloyd.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericalError, UsageError
from .preprocess import FeatureMatrix, LabelVector


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    assignments: np.ndarray
    closest_dist: np.ndarray
    wcss: float
    iterations: int
    seed: int
    history: list[float] = field(default_factory=list)
    full_scans: int = 0

    def predict(self, X) -> np.ndarray:
        values = _values(X)
        return _nearest(values, self.centroids)[0]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "wcss": self.wcss,
            "iterations": self.iterations,
            "seed": self.seed,
        }


@dataclass
class ElbowCurve:
    ks: list[int]
    wcss: list[float]
    chosen_k: int
    anchor: tuple[int, float] | None = None


def _values(X) -> np.ndarray:
    return X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=float)


def _sq_dists(values: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # explicit difference form: exact zeros for coincident points, no cancellation
    out = np.empty((len(values), len(centroids)))
    for j, c in enumerate(centroids):
        diff = values - c
        out[:, j] = np.einsum("ij,ij->i", diff, diff)
    return out


def _own_sq_dists(values, centroids, assign):
    diff = values - centroids[assign]
    return np.einsum("ij,ij->i", diff, diff)


def _nearest(values, centroids):
    d2 = _sq_dists(values, centroids)
    idx = np.argmin(d2, axis=1)  # first minimum: lowest centroid index wins ties
    return idx, d2[np.arange(len(values)), idx]


def _nearest_two(values, centroids):
    """Nearest centroid, its squared distance, and the distance (not squared) to the runner-up."""
    d2 = _sq_dists(values, centroids)
    rows = np.arange(len(values))
    idx = np.argmin(d2, axis=1)
    best = d2[rows, idx]
    if d2.shape[1] < 2:
        return idx, best, np.full(len(values), np.inf)
    d2[rows, idx] = np.inf
    return idx, best, np.sqrt(d2.min(axis=1))


def _update_centroids(values, assign, k, old):
    # bincount accumulates in row order, which keeps results reproducible
    sums = np.column_stack(
        [np.bincount(assign, weights=values[:, j], minlength=k) for j in range(values.shape[1])]
    ).reshape(k, values.shape[1])
    counts = np.bincount(assign, minlength=k)
    cent = old.copy()
    nz = counts > 0
    cent[nz] = sums[nz] / counts[nz, None]
    return cent, counts


def kmeans_pp_init(values: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(values)
    centers = [values[rng.integers(n)]]
    d2 = _sq_dists(values, np.array(centers))[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # fewer distinct points than k: pick any unused row
            j = int(rng.integers(n))
        else:
            j = int(rng.choice(n, p=d2 / total))
        centers.append(values[j])
        d2 = np.minimum(d2, _sq_dists(values, values[j : j + 1])[:, 0])
    return np.array(centers, dtype=float)


def random_init(values: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    return values[rng.choice(len(values), size=k, replace=False)].astype(float)


def _check_input(values, k):
    if values.ndim != 2 or len(values) == 0:
        raise DataError("k-means needs a non-empty 2-D matrix")
    if not np.all(np.isfinite(values)):
        raise DataError("k-means input contains non-finite values")
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    if k > len(values):
        raise DataError(f"k={k} exceeds the number of rows ({len(values)})")


def lloyd(
    values: np.ndarray,
    init_centroids: np.ndarray,
    max_iter: int = 300,
    tol: float = 1e-10,
    shortcut: bool = True,
) -> ClusterModel:
    """Run k-means iterations from fixed initial centroids.

    With ``shortcut=False`` every iteration evaluates all k distances per point
    (plain Lloyd); with ``shortcut=True`` the cached-distance rule is used.
    """
    values = np.asarray(values, dtype=float)
    k = len(init_centroids)
    _check_input(values, k)
    cent = np.array(init_centroids, dtype=float)
    assign, d2, second = _nearest_two(values, cent)
    full_scans = len(values)
    history = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        new_cent, counts = _update_centroids(values, assign, k, cent)
        empty = np.nonzero(counts == 0)[0]
        for j in empty:
            # reseed to the point currently worst served
            far = int(np.argmax(d2))
            new_cent[j] = values[far]
            d2[far] = 0.0
        moved = np.sqrt(((new_cent - cent) ** 2).sum(axis=1))
        shift = float(np.max(np.abs(new_cent - cent))) if k else 0.0
        cent = new_cent
        own = _own_sq_dists(values, cent, assign)
        history.append(float(own.sum()))

        if shortcut:
            # Cached-distance rule: a point whose own centroid did not move away
            # keeps its cluster.  The runner-up lower bound (shrunk by the
            # largest centroid move) guards the rule so that no point skips a
            # scan it would have needed; the result then matches plain Lloyd.
            second = second - moved.max()
            rescan = (own > d2) | (np.sqrt(own) >= second)
            new_assign = assign.copy()
            new_d2 = own.copy()
            if rescan.any():
                idx, best, runner = _nearest_two(values[rescan], cent)
                new_assign[rescan] = idx
                new_d2[rescan] = best
                second[rescan] = runner
                full_scans += int(rescan.sum())
        else:
            new_assign, new_d2 = _nearest(values, cent)
            full_scans += len(values)

        changed = not np.array_equal(new_assign, assign)
        assign, d2 = new_assign, new_d2
        if not changed or shift < tol:
            if changed:
                cent, _ = _update_centroids(values, assign, k, cent)
            break

    closest = np.sqrt(_own_sq_dists(values, cent, assign))
    wcss = float(np.sum(closest**2))
    if not np.isfinite(wcss):
        raise NumericalError("k-means produced a non-finite objective")
    history.append(wcss)
    return ClusterModel(k, cent, assign, closest, wcss, iterations, -1, history, full_scans)


def kmeans_fit(
    X,
    k: int,
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-10,
    restarts: int = 5,
    init: str = "k-means++",
    shortcut: bool = True,
) -> ClusterModel:
    """Best-of-``restarts`` k-means (lowest WCSS) under squared Euclidean distance."""
    values = _values(X)
    _check_input(values, k)
    if init not in ("k-means++", "random"):
        raise UsageError(f"unknown init {init!r}")
    seeder = kmeans_pp_init if init == "k-means++" else random_init
    best = None
    for child in np.random.SeedSequence(seed).spawn(max(1, restarts)):
        rng = np.random.default_rng(child)
        model = lloyd(values, seeder(values, k, rng), max_iter, tol, shortcut)
        if best is None or model.wcss < best.wcss:
            best = model
    best.seed = seed
    return best


def initial_centroids(X, k: int, seed: int = 0, restarts: int = 5, init: str = "k-means++"):
    """The per-restart initial centroids that :func:`kmeans_fit` would use."""
    values = _values(X)
    seeder = kmeans_pp_init if init == "k-means++" else random_init
    return [
        seeder(values, k, np.random.default_rng(child))
        for child in np.random.SeedSequence(seed).spawn(max(1, restarts))
    ]


def knee_index(ks, wcss) -> int:
    """Index of the point farthest (perpendicularly) from the first-to-last chord.

    Ties go to the smallest k.  When every interior point lies on the chord
    (linear decay), the interior k closest to the chord midpoint is chosen,
    again preferring the smaller k.
    """
    ks = np.asarray(ks, dtype=float)
    w = np.asarray(wcss, dtype=float)
    if len(ks) < 3:
        return int(np.argmin(w)) if len(ks) else 0
    dk, dw = ks[-1] - ks[0], w[-1] - w[0]
    # |cross| is the perpendicular distance times the (constant) chord length
    cross = np.abs(dk * (w - w[0]) - (ks - ks[0]) * dw)
    if cross.max() <= 1e-9 * abs(dk) * np.ptp(w):
        mid = 0.5 * (ks[0] + ks[-1])
        interior = np.arange(1, len(ks) - 1)
        return int(interior[np.argmin(np.abs(ks[interior] - mid))])
    return int(np.argmax(cross))


def elbow_select(X, k_min: int = 2, k_max: int = 10, seed: int = 0, **kmeans_kw) -> ElbowCurve:
    """Fit k-means for each k in ``[k_min, k_max]`` and pick the knee of the WCSS curve.

    The knee is located on the curve extended by one anchor point at
    ``k_min - 1`` (when ``k_min > 1``), so that ``k_min`` itself can be chosen.
    """
    values = _values(X)
    if k_min < 1 or k_max <= k_min:
        raise UsageError(f"invalid k range {k_min}..{k_max}")
    if k_max > len(values):
        raise DataError(f"k_max={k_max} exceeds the number of rows ({len(values)})")
    ks = list(range(k_min, k_max + 1))
    wcss = [kmeans_fit(values, k, seed=seed, **kmeans_kw).wcss for k in ks]
    anchor = None
    curve_k, curve_w = list(ks), list(wcss)
    if k_min > 1:
        anchor = (k_min - 1, kmeans_fit(values, k_min - 1, seed=seed, **kmeans_kw).wcss)
        curve_k.insert(0, anchor[0])
        curve_w.insert(0, anchor[1])
    idx = knee_index(curve_k, curve_w)
    chosen = curve_k[idx]
    if chosen not in ks:  # degenerate: the anchor itself is never a choice
        chosen = ks[0]
    return ElbowCurve(ks, wcss, chosen, anchor)


def labels_of(model: ClusterModel) -> LabelVector:
    """Relabel clusters by decreasing size; equal sizes order by lexicographic centroid."""
    sizes = np.bincount(model.assignments, minlength=model.k)
    order = sorted(range(model.k), key=lambda j: (-sizes[j], tuple(model.centroids[j])))
    mapping = {int(old): new for new, old in enumerate(order)}
    lut = np.array([mapping[j] for j in range(model.k)])
    return LabelVector(lut[model.assignments], mapping)
