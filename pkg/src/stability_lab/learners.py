"""Decision tree, logistic regression, k-NN and a constant stub learner.

All learners are deterministic, so ``train`` accepts a seed only to honour
the common training contract. Every learner also has a weighted path
(``fit_weighted``) where integer weights are example multiplicities; a
bootstrap replicate is then the origin dataset with its draw counts, and
the fitted model equals the one trained on the expanded replicate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import expit

from .dataset import Dataset


class LearnerError(ValueError):
    pass


# --------------------------------------------------------------------------
# configurations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DecisionTree:
    max_leaves: int

    tag = "tree"

    def __post_init__(self):
        if self.max_leaves < 1:
            raise LearnerError(f"max_leaves must be >= 1, got {self.max_leaves}")

    def to_dict(self):
        return {"learner": self.tag, "max_leaves": self.max_leaves}


@dataclass(frozen=True)
class LogisticRegression:
    iterations: int
    learning_rate: float = 0.1
    lam: float = 0.0
    fit_bias: bool = True

    tag = "lr"

    def __post_init__(self):
        if self.iterations < 0:
            raise LearnerError(f"iterations must be >= 0, got {self.iterations}")
        if self.learning_rate <= 0:
            raise LearnerError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.lam < 0:
            raise LearnerError(f"lambda must be >= 0, got {self.lam}")

    def to_dict(self):
        return {
            "learner": self.tag,
            "iterations": self.iterations,
            "learning_rate": self.learning_rate,
            "lambda": self.lam,
            "fit_bias": self.fit_bias,
        }


@dataclass(frozen=True)
class Knn:
    k: int

    tag = "knn"

    def __post_init__(self):
        if self.k < 1 or self.k % 2 == 0:
            raise LearnerError(f"k must be a positive odd integer, got {self.k}")

    def to_dict(self):
        return {"learner": self.tag, "k": self.k}


@dataclass(frozen=True)
class Stub:
    constant_label: int

    tag = "stub"

    def __post_init__(self):
        if self.constant_label not in (0, 1):
            raise LearnerError(f"constant_label must be 0 or 1, got {self.constant_label}")

    def to_dict(self):
        return {"learner": self.tag, "constant_label": self.constant_label}


LearnerConfig = Union[DecisionTree, LogisticRegression, Knn, Stub]


def config_from_dict(doc: dict) -> LearnerConfig:
    tag = doc["learner"]
    if tag == "tree":
        return DecisionTree(doc["max_leaves"])
    if tag == "lr":
        return LogisticRegression(
            doc["iterations"], doc["learning_rate"], doc["lambda"], doc["fit_bias"]
        )
    if tag == "knn":
        return Knn(doc["k"])
    if tag == "stub":
        return Stub(doc["constant_label"])
    raise LearnerError(f"unknown learner {tag!r}")


# --------------------------------------------------------------------------
# models
# --------------------------------------------------------------------------


class _Model:
    d: int

    def _check(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.d:
            raise LearnerError(f"expected {self.d} features, got {X.shape[1]}")
        return X

    def predict_label(self, x) -> int:
        return int(self.predict_labels(np.atleast_2d(x))[0])

    def predict_score(self, x) -> float:
        return float(self.predict_scores(np.atleast_2d(x))[0])


@dataclass
class TreeNode:
    """Internal nodes test ``x[feature] <= threshold`` (true goes left)."""

    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    label: int | None = None
    n: int = 0
    positives: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"leaf_label": self.label, "n": self.n, "positives": self.positives}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "children": [self.left.to_dict(), self.right.to_dict()],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TreeNode":
        if "leaf_label" in doc:
            return cls(label=doc["leaf_label"], n=doc["n"], positives=doc["positives"])
        left, right = (cls.from_dict(c) for c in doc["children"])
        return cls(feature=doc["feature"], threshold=doc["threshold"], left=left, right=right)


@dataclass(eq=False)
class TreeModel(_Model):
    root: TreeNode
    leaf_count: int
    depth: int
    d: int

    def leaves(self) -> list[TreeNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend((node.right, node.left))
        return out

    def _route(self, X, node, rows, out_label, out_score):
        if node.is_leaf:
            out_label[rows] = node.label
            out_score[rows] = node.positives / node.n if node.n else float(node.label)
            return
        go_left = X[rows, node.feature] <= node.threshold
        if go_left.any():
            self._route(X, node.left, rows[go_left], out_label, out_score)
        if not go_left.all():
            self._route(X, node.right, rows[~go_left], out_label, out_score)

    def _predict(self, X):
        X = self._check(X)
        labels = np.empty(X.shape[0], dtype=np.int64)
        scores = np.empty(X.shape[0])
        if X.shape[0]:
            self._route(X, self.root, np.arange(X.shape[0]), labels, scores)
        return labels, scores

    def predict_labels(self, X) -> np.ndarray:
        return self._predict(X)[0]

    def predict_scores(self, X) -> np.ndarray:
        return self._predict(X)[1]

    def to_dict(self) -> dict:
        return {
            "model": "tree",
            "d": self.d,
            "leaf_count": self.leaf_count,
            "depth": self.depth,
            "root": self.root.to_dict(),
        }


@dataclass(eq=False)
class LrModel(_Model):
    theta: np.ndarray
    fit_bias: bool
    d: int

    def _design(self, X):
        X = self._check(X)
        return design_matrix(X, self.fit_bias)

    def predict_scores(self, X) -> np.ndarray:
        return expit(self._design(X) @ self.theta)

    def predict_labels(self, X) -> np.ndarray:
        return (self.predict_scores(X) >= 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "model": "lr",
            "d": self.d,
            "fit_bias": self.fit_bias,
            "theta": [float(t) for t in self.theta],
        }


@dataclass(eq=False)
class KnnModel(_Model):
    data: Dataset
    k: int
    weights: np.ndarray | None = None
    d: int = field(init=False)

    def __post_init__(self):
        self.d = self.data.d
        if self.weights is None:
            self.weights = np.ones(self.data.m, dtype=np.int64)

    def _votes(self, X) -> np.ndarray:
        X = self._check(X)
        diff = X[:, None, :] - self.data.X[None, :, :]
        dist = np.einsum("ijk,ijk->ij", diff, diff)
        order = np.argsort(dist, axis=1, kind="stable")
        w = self.weights[order]
        taken = np.clip(self.k - (np.cumsum(w, axis=1) - w), 0, w)
        return (taken * self.data.y[order]).sum(axis=1)

    def predict_scores(self, X) -> np.ndarray:
        return self._votes(X) / self.k

    def predict_labels(self, X) -> np.ndarray:
        return (2 * self._votes(X) > self.k).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "model": "knn",
            "k": self.k,
            "X": self.data.X.tolist(),
            "y": self.data.y.tolist(),
            "weights": self.weights.tolist(),
        }


@dataclass(eq=False)
class StubModel(_Model):
    label: int
    d: int

    def predict_labels(self, X) -> np.ndarray:
        X = self._check(X)
        return np.full(X.shape[0], self.label, dtype=np.int64)

    def predict_scores(self, X) -> np.ndarray:
        return self.predict_labels(X).astype(np.float64)

    def to_dict(self) -> dict:
        return {"model": "stub", "d": self.d, "label": self.label}


TrainedModel = Union[TreeModel, LrModel, KnnModel, StubModel]


def model_from_dict(doc: dict) -> TrainedModel:
    kind = doc["model"]
    if kind == "tree":
        return TreeModel(TreeNode.from_dict(doc["root"]), doc["leaf_count"], doc["depth"], doc["d"])
    if kind == "lr":
        return LrModel(np.array(doc["theta"]), doc["fit_bias"], doc["d"])
    if kind == "knn":
        data = Dataset(np.array(doc["X"], dtype=np.float64).reshape(len(doc["y"]), -1), doc["y"])
        return KnnModel(data, doc["k"], np.array(doc["weights"], dtype=np.int64))
    if kind == "stub":
        return StubModel(doc["label"], doc["d"])
    raise LearnerError(f"unknown model {kind!r}")


# --------------------------------------------------------------------------
# decision tree
# --------------------------------------------------------------------------

_TIE_EPS = 1e-12


def _weighted_gini(n, p):
    # n * gini(node) for a node holding n examples, p of them positive
    return np.where(n > 0, 2.0 * p * (n - p) / np.maximum(n, 1), 0.0)


def _best_split(X, y, w, rows):
    """(decrease, feature, threshold, left_rows, right_rows) or None."""
    wr = w[rows]
    n = int(wr.sum())
    p = int((wr * y[rows]).sum())
    if p == 0 or p == n or rows.size < 2:
        return None
    Xs = X[rows]
    order = np.argsort(Xs, axis=0, kind="stable")
    xs = np.take_along_axis(Xs, order, axis=0)
    cw = np.cumsum(wr[order], axis=0)[:-1]
    cp = np.cumsum((wr * y[rows])[order], axis=0)[:-1]
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return None
    dec = float(_weighted_gini(n, p)) - _weighted_gini(cw, cp) - _weighted_gini(n - cw, p - cp)
    dec = np.where(valid, dec, -np.inf)
    best = dec.max()
    cand = dec >= best - _TIE_EPS
    feature = int(np.flatnonzero(cand.any(axis=0))[0])
    pos = int(np.flatnonzero(cand[:, feature])[0])
    lo, hi = xs[pos, feature], xs[pos + 1, feature]
    threshold = 0.5 * (lo + hi)
    if threshold >= hi:
        threshold = lo
    go_left = X[rows, feature] <= threshold
    return float(dec[pos, feature]), feature, float(threshold), rows[go_left], rows[~go_left]


def _make_leaf(y, w, rows) -> TreeNode:
    n = int(w[rows].sum())
    pos = int((w[rows] * y[rows]).sum())
    # majority of {-1, +1}-mapped labels; sign(0) := +1
    return TreeNode(label=int(2 * pos >= n), n=n, positives=pos)


def _grow_tree(X, y, w, max_leaves) -> TreeModel:
    rows = np.flatnonzero(w > 0)
    root = _make_leaf(y, w, rows)
    # frontier entries: [node, rows, creation id, depth, cached split]
    frontier = [[root, rows, 0, 0, _best_split(X, y, w, rows)]]
    next_id = 1
    max_depth = 0
    while len(frontier) < max_leaves:
        best = None
        for entry in frontier:
            split = entry[4]
            if split is None:
                continue
            if best is None:
                best = entry
                continue
            a, b = split, best[4]
            if a[0] > b[0] + _TIE_EPS:
                best = entry
            elif a[0] >= b[0] - _TIE_EPS and (a[1], a[2], entry[2]) < (b[1], b[2], best[2]):
                best = entry
        if best is None:
            break
        frontier.remove(best)
        node, _, _, depth, (_, feature, threshold, left_rows, right_rows) = best
        left = _make_leaf(y, w, left_rows)
        right = _make_leaf(y, w, right_rows)
        node.feature, node.threshold, node.left, node.right = feature, threshold, left, right
        node.label = None
        frontier.append([left, left_rows, next_id, depth + 1, _best_split(X, y, w, left_rows)])
        frontier.append([right, right_rows, next_id + 1, depth + 1, _best_split(X, y, w, right_rows)])
        next_id += 2
        max_depth = max(max_depth, depth + 1)
    return TreeModel(root, len(frontier), max_depth, X.shape[1])


def tree_stats(model) -> tuple[int, int]:
    """(leaf count v, depth h) measured from the tree structure."""
    if not isinstance(model, TreeModel):
        raise LearnerError(f"tree_stats needs a TreeModel, got {type(model).__name__}")

    def walk(node, depth):
        if node.is_leaf:
            return 1, depth
        lv, lh = walk(node.left, depth + 1)
        rv, rh = walk(node.right, depth + 1)
        return lv + rv, max(lh, rh)

    return walk(model.root, 0)


# --------------------------------------------------------------------------
# logistic regression
# --------------------------------------------------------------------------


def design_matrix(X, fit_bias: bool) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if not fit_bias:
        return X
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _design_for_theta(D: Dataset, theta) -> np.ndarray:
    # theta of length d works on the raw features, d + 1 appends the bias column
    theta = np.asarray(theta)
    if theta.shape[0] == D.d:
        return D.X
    if theta.shape[0] == D.d + 1:
        return design_matrix(D.X, True)
    raise LearnerError(f"theta has {theta.shape[0]} entries for {D.d} features")


def lr_objective(D: Dataset, theta, lam: float) -> float:
    """Mean cross-entropy plus ``lam / 2 * ||theta||^2``."""
    theta = np.asarray(theta, dtype=np.float64)
    z = _design_for_theta(D, theta) @ theta
    # log(1 + e^z) - y z, written stably
    ce = np.logaddexp(0.0, z) - D.y * z
    return float(ce.mean() + 0.5 * lam * theta @ theta)


def lr_gradient(D: Dataset, theta, lam: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    Xa = _design_for_theta(D, theta)
    r = expit(Xa @ theta) - D.y
    return r @ Xa / D.m + lam * theta


def _gd_batch(Xa, y, W, iterations, eta, lam) -> np.ndarray:
    """Full-batch gradient descent from zero for each weight row of ``W``."""
    theta = np.zeros((W.shape[0], Xa.shape[1]))
    n = W.sum(axis=1, keepdims=True).astype(np.float64)
    for _ in range(iterations):
        r = (expit(theta @ Xa.T) - y) * W
        theta -= eta * (r @ Xa / n + lam * theta)
    return theta


# --------------------------------------------------------------------------
# training entry points
# --------------------------------------------------------------------------


def _check_weights(D: Dataset, weights) -> np.ndarray:
    W = np.atleast_2d(np.asarray(weights, dtype=np.int64))
    if W.shape[1] != D.m:
        raise LearnerError(f"weights have {W.shape[1]} columns for {D.m} examples")
    if (W < 0).any():
        raise LearnerError("weights must be non-negative")
    return W


def fit_weighted(D: Dataset, weights, config: LearnerConfig) -> list[TrainedModel]:
    """Fit one model per row of integer multiplicities ``weights`` (shape (K, m)).

    Row r trains on the multiset holding ``weights[r, j]`` copies of example j.
    """
    W = _check_weights(D, weights)
    totals = W.sum(axis=1)
    if (totals < 1).any():
        raise LearnerError("cannot train on an empty dataset")
    if isinstance(config, Knn) and (totals < config.k).any():
        raise LearnerError(f"k={config.k} exceeds the training set size {int(totals.min())}")
    if isinstance(config, LogisticRegression):
        Xa = design_matrix(D.X, config.fit_bias)
        thetas = _gd_batch(
            Xa, D.y, W.astype(np.float64), config.iterations, config.learning_rate, config.lam
        )
        return [LrModel(t, config.fit_bias, D.d) for t in thetas]
    if isinstance(config, DecisionTree):
        return [_grow_tree(D.X, D.y, w, config.max_leaves) for w in W]
    if isinstance(config, Knn):
        out = []
        for w in W:
            keep = np.flatnonzero(w > 0)
            out.append(KnnModel(D.subset(keep), config.k, w[keep]))
        return out
    if isinstance(config, Stub):
        return [StubModel(config.constant_label, D.d) for _ in W]
    raise LearnerError(f"unknown learner configuration {config!r}")


def train(D: Dataset, config: LearnerConfig, seed: int = 0) -> TrainedModel:
    """Fit ``config`` on ``D``. Deterministic; ``seed`` is accepted but unused."""
    if D.m < 1:
        raise LearnerError("cannot train on an empty dataset")
    if isinstance(config, Knn):
        if config.k > D.m:
            raise LearnerError(f"k={config.k} exceeds the training set size {D.m}")
        return KnnModel(D, config.k)
    return fit_weighted(D, np.ones((1, D.m), dtype=np.int64), config)[0]


def predict_label(model: TrainedModel, x) -> int:
    return model.predict_label(x)


def predict_score(model: TrainedModel, x) -> float:
    return model.predict_score(x)
