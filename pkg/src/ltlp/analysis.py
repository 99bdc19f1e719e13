"""Classification, clustering and PCA helpers used by the experiments."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.cluster import KMeans
from sklearn.metrics import adjusted_rand_score
from sklearn.model_selection import KFold, StratifiedKFold

from ltlp.errors import EmptyTrain, InvalidInput, RankError, ShapeMismatch, StratifyWarning
from ltlp.parallel import parallel_map

RANK_TOL = 1e-12


def _rows(X) -> np.ndarray:
    a = np.asarray(X, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise InvalidInput(f"expected a 2D array of rows, got shape {a.shape}")
    return a


def _same_length(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[0] != b.shape[0]:
        raise ShapeMismatch(f"label vectors have lengths {a.shape[0]} and {b.shape[0]}")
    return a, b


def knn_classify(train_x, train_y, test_x, k: int = 1) -> np.ndarray:
    """Majority vote among the ``k`` nearest training rows (Euclidean).

    Equal distances go to the lower training index, tied votes to the
    smallest label.
    """
    train_x = _rows(train_x)
    test_x = _rows(test_x)
    train_y = np.asarray(train_y)
    if train_x.shape[0] == 0:
        raise EmptyTrain("training set is empty")
    if train_y.shape[0] != train_x.shape[0]:
        raise ShapeMismatch("train_x and train_y lengths differ")
    if train_x.shape[1] != test_x.shape[1]:
        raise ShapeMismatch("train and test rows differ in width")
    if not 1 <= k <= train_x.shape[0]:
        raise InvalidInput(f"k must lie in [1, {train_x.shape[0]}]")
    D = cdist(test_x, train_x)
    order = np.argsort(D, axis=1, kind="stable")[:, :k]
    classes = np.unique(train_y)
    out = np.empty(test_x.shape[0], dtype=train_y.dtype)
    for i, nbrs in enumerate(order):
        votes = np.array([np.sum(train_y[nbrs] == c) for c in classes])
        out[i] = classes[int(np.argmax(votes))]
    return out


def macro_f1(pred, truth) -> float:
    """Unweighted mean of per-class F1 over the classes seen in either vector."""
    pred, truth = _same_length(pred, truth)
    if pred.size == 0:
        raise InvalidInput("no labels given")
    scores = []
    for c in np.union1d(pred, truth):
        tp = np.sum((pred == c) & (truth == c))
        denom = np.sum(pred == c) + np.sum(truth == c)
        scores.append(2.0 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def _fold_splitter(y, folds: int, seed: int):
    _, counts = np.unique(y, return_counts=True)
    if counts.min() < folds:
        warnings.warn(
            f"a class has {counts.min()} members, fewer than {folds} folds; using plain folds",
            StratifyWarning,
            stacklevel=3,
        )
        return KFold(folds, shuffle=True, random_state=seed)
    return StratifiedKFold(folds, shuffle=True, random_state=seed)


def repeat_seed(seed: int, repeat: int) -> int:
    """Independent 32-bit seed for repeat ``repeat`` of a run seeded with ``seed``."""
    return int(np.random.SeedSequence([seed, repeat]).generate_state(1)[0])


def cross_validate(X, Y, folds: int = 5, repeats: int = 100, seed: int = 0, k: int = 1,
                   threads: Optional[int] = 1) -> np.ndarray:
    """Macro-F1 of kNN under repeated k-fold cross-validation, one score per repeat."""
    X = _rows(X)
    Y = np.asarray(Y)
    if Y.shape[0] != X.shape[0]:
        raise ShapeMismatch("X and Y lengths differ")
    if folds < 2 or X.shape[0] < folds:
        raise InvalidInput("need folds >= 2 and at least as many rows as folds")
    if repeats < 1:
        raise InvalidInput("repeats must be >= 1")

    splitters = [_fold_splitter(Y, folds, repeat_seed(seed, r)) for r in range(repeats)]

    def one(splitter):
        pred = np.empty_like(Y)
        for tr, te in splitter.split(X, Y):
            pred[te] = knn_classify(X[tr], Y[tr], X[te], min(k, tr.size))
        return macro_f1(pred, Y)

    return np.array(parallel_map(one, splitters, threads))


def kmeans(X, K: int, seed: int = 0, max_iter: int = 300) -> np.ndarray:
    """Lloyd's algorithm from a single k-means++ seeding."""
    X = _rows(X)
    if not 1 <= K <= X.shape[0]:
        raise InvalidInput(f"K must lie in [1, {X.shape[0]}]")
    model = KMeans(K, init="k-means++", n_init=1, max_iter=max_iter, tol=0.0,
                   algorithm="lloyd", random_state=seed)
    return model.fit_predict(X)


def kmeans_inertia(X, labels) -> float:
    X = _rows(X)
    labels = np.asarray(labels)
    return float(sum(((X[labels == c] - X[labels == c].mean(axis=0)) ** 2).sum()
                     for c in np.unique(labels)))


def adjusted_rand_index(a, b) -> float:
    a, b = _same_length(a, b)
    return float(adjusted_rand_score(a, b))


@dataclass(frozen=True)
class PCAResult:
    mean: np.ndarray
    components: np.ndarray  # (n_components, dim), unit rows
    eigenvalues: np.ndarray
    projections: np.ndarray

    def project(self, X) -> np.ndarray:
        return (_rows(X) - self.mean) @ self.components.T


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(vectors.shape[0]), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def _numerical_rank_mask(vals: np.ndarray) -> np.ndarray:
    if vals.size == 0 or vals[0] <= 0:
        return np.zeros(vals.size, dtype=bool)
    return vals > RANK_TOL * vals[0]


def pca(X, n_components: int) -> PCAResult:
    """Eigendecomposition of the sample covariance, largest eigenvalue first.

    Each component is signed so that its largest-magnitude entry is positive.
    Components beyond the numerical rank of the centred data raise
    :class:`RankError`.
    """
    X = _rows(X)
    if n_components < 1:
        raise InvalidInput("n_components must be >= 1")
    mean = X.mean(axis=0)
    Xc = X - mean
    n = X.shape[0]
    ddof = 1 if n > 1 else 0
    # the Gram matrix is much smaller than the covariance for wide embedding rows
    if X.shape[1] > n:
        G = Xc @ Xc.T / max(n - ddof, 1)
        vals, U = np.linalg.eigh(G)
        order = np.argsort(vals)[::-1]
        vals, U = vals[order], U[:, order]
        keep = _numerical_rank_mask(vals)
        V = (Xc.T @ U[:, keep]) / np.sqrt(vals[keep] * max(n - ddof, 1))
        V = V.T
        vals = vals[keep]
    else:
        C = Xc.T @ Xc / max(n - ddof, 1)
        vals, V = np.linalg.eigh(C)
        order = np.argsort(vals)[::-1]
        vals, V = vals[order], V[:, order].T
        keep = _numerical_rank_mask(vals)
        vals, V = vals[keep], V[keep]
    rank = vals.size
    if n_components > rank:
        raise RankError(f"asked for {n_components} components but the data has rank {rank}")
    comps = _fix_signs(V[:n_components])
    vals = vals[:n_components]
    return PCAResult(mean, comps, vals, Xc @ comps.T)
