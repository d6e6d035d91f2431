"""Log-price regressors over feature matrices.

Everything here is fit on ``ln(price)`` and predicts prices via ``exp``, so
squared error during fitting is the MSLE of the returned prices.

Models:
    MeanBaseline   geometric-mean constant
    GbtModel       first-order gradient boosting with squared error
    RfModel        bootstrap-aggregated CART trees
    AdaModel       AdaBoost.R2 with linear loss and weighted-median output
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyInput, NonPositiveValue, NonPositiveWeight, ShapeMismatch

FORMAT_VERSION = 1
BETA_FLOOR = 1e-10


def _check_inputs(X, y, weights):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"X {X.shape} vs y {y.shape}")
    if X.shape[0] == 0:
        raise EmptyInput("no training rows")
    if weights is None:
        weights = np.ones(len(y))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != y.shape:
        raise ShapeMismatch(f"weights {weights.shape} vs y {y.shape}")
    if not np.all(weights > 0):
        raise NonPositiveWeight("sample weights must be > 0")
    return X, y, weights


def _weighted_mean(y, w):
    if y.min() == y.max():
        return float(y[0])
    return float(np.dot(w, y) / w.sum())


# -- regression tree ------------------------------------------------------------


@dataclass
class RegressionTree:
    """Flat array representation; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.nonzero(self.feature[node] >= 0)[0]
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] >= 0]
        return self.value[node]

    def to_json(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_json(cls, obj) -> "RegressionTree":
        return cls(
            np.array(obj["feature"], dtype=np.int64),
            np.array(obj["threshold"], dtype=np.float64),
            np.array(obj["left"], dtype=np.int64),
            np.array(obj["right"], dtype=np.int64),
            np.array(obj["value"], dtype=np.float64),
        )


def _best_split(Xn, yc, w, min_leaf, features):
    """Best (gain, feature, threshold) for one node, or None.

    ``yc`` is centered on the node mean so the gain formula does not cancel
    catastrophically.
    """
    n = Xn.shape[0]
    if n < 2 * min_leaf:
        return None
    Xs = Xn[:, features]
    order = np.argsort(Xs, axis=0, kind="stable")
    xs = np.take_along_axis(Xs, order, axis=0)
    ws = w[order]
    cw = np.cumsum(ws, axis=0)[:-1]
    cwy = np.cumsum(ws * yc[order], axis=0)[:-1]
    W = cw[-1] + ws[-1]
    S = cwy[-1] + (ws * yc[order])[-1]
    WR = W - cw
    SR = S - cwy
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = cwy ** 2 / cw + SR ** 2 / WR - S ** 2 / W
    valid = xs[:-1] < xs[1:]
    if min_leaf > 1:
        pos = np.arange(1, n)[:, None]
        valid &= (pos >= min_leaf) & (n - pos >= min_leaf)
    valid &= (cw > 0) & (WR > 0)
    gain = np.where(valid, gain, -np.inf)
    flat = int(np.argmax(gain.T))
    j, i = divmod(flat, n - 1)
    best = gain[i, j]
    if not np.isfinite(best):
        return None
    lo, hi = xs[i, j], xs[i + 1, j]
    thr = lo + (hi - lo) / 2.0
    if thr >= hi:
        thr = lo
    return float(best), int(features[j]), float(thr)


def fit_tree(X, y, weights=None, max_depth: Optional[int] = None, min_leaf: int = 1,
             feature_subsample_ratio: float = 1.0, rng_seed: int = 0) -> RegressionTree:
    """Greedy CART regression tree minimizing weighted squared error.

    Splits use midpoints between consecutive distinct feature values and go
    left when ``x <= threshold``. Growth stops at ``max_depth``, when a child
    would hold fewer than ``min_leaf`` rows, or when no split reduces error.
    """
    X, y, w = _check_inputs(X, y, weights)
    n_features = X.shape[1]
    rng = np.random.default_rng(rng_seed)
    n_sub = max(1, int(round(feature_subsample_ratio * n_features))) if n_features else 0

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(v):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(v)
        return len(feature) - 1

    root_idx = np.arange(len(y))
    stack = [(new_node(_weighted_mean(y, w)), root_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        if max_depth is not None and depth >= max_depth:
            continue
        yn, wn = y[idx], w[idx]
        if n_features == 0 or yn.min() == yn.max():
            continue
        mean = value[node]
        yc = yn - mean
        sse = float(np.dot(wn, yc ** 2))
        if n_sub < n_features:
            feats = np.sort(rng.choice(n_features, size=n_sub, replace=False))
        else:
            feats = np.arange(n_features)
        split = _best_split(X[idx], yc, wn, min_leaf, feats)
        if split is None or not split[0] > 1e-12 * sse:
            continue
        _, f, thr = split
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(_weighted_mean(y[li], w[li]))
        right[node] = new_node(_weighted_mean(y[ri], w[ri]))
        # right pushed first so the left subtree gets the lower node ids
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return RegressionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64),
    )


# -- models -----------------------------------------------------------------------


@dataclass
class MeanBaseline:
    log_price_mean: float
    n_features: Optional[int] = None
    model_type = "mean"

    @property
    def geometric_mean(self) -> float:
        return math.exp(self.log_price_mean)

    def predict_log(self, X) -> np.ndarray:
        return np.full(np.asarray(X).shape[0], self.log_price_mean)

    def to_json(self):
        return {"log_price_mean": self.log_price_mean, "n_features": self.n_features}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["log_price_mean"], obj.get("n_features"))


@dataclass
class GbtModel:
    trees: list
    learning_rate: float
    base_score: float
    n_features: int
    train_loss: list = field(default_factory=list)
    model_type = "gbt"

    def predict_log(self, X) -> np.ndarray:
        out = np.full(np.asarray(X).shape[0], self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def to_json(self):
        return {
            "learning_rate": self.learning_rate,
            "base_score": self.base_score,
            "n_features": self.n_features,
            "train_loss": list(self.train_loss),
            "trees": [t.to_json() for t in self.trees],
        }

    @classmethod
    def from_json(cls, obj):
        return cls([RegressionTree.from_json(t) for t in obj["trees"]], obj["learning_rate"],
                   obj["base_score"], obj["n_features"], obj.get("train_loss", []))


@dataclass
class RfModel:
    trees: list
    n_features: int
    model_type = "rf"

    def predict_log(self, X) -> np.ndarray:
        outs = np.sort(np.stack([t.predict(X) for t in self.trees]), axis=0)
        # sorted and offset so the mean ignores tree order and stays exact for constants
        lo = outs[0]
        return lo + (outs - lo).mean(axis=0)

    def to_json(self):
        return {"n_features": self.n_features, "trees": [t.to_json() for t in self.trees]}

    @classmethod
    def from_json(cls, obj):
        return cls([RegressionTree.from_json(t) for t in obj["trees"]], obj["n_features"])


def weighted_median(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Row-wise weighted median of ``values`` (rows x stages).

    Picks the smallest value whose cumulative weight reaches half the total.
    """
    values = np.atleast_2d(values)
    order = np.argsort(values, axis=1, kind="stable")
    cum = np.cumsum(np.asarray(weights)[order], axis=1)
    pick = np.argmax(cum >= 0.5 * cum[:, -1:], axis=1)
    rows = np.arange(values.shape[0])
    return values[rows, order[rows, pick]]


@dataclass
class AdaModel:
    trees: list
    stage_weights: list  # ln(1/beta) per stage
    n_features: int
    model_type = "ada"

    def predict_log(self, X) -> np.ndarray:
        preds = np.stack([t.predict(X) for t in self.trees], axis=1)
        return weighted_median(preds, np.array(self.stage_weights))

    def to_json(self):
        return {"n_features": self.n_features, "stage_weights": list(self.stage_weights),
                "trees": [t.to_json() for t in self.trees]}

    @classmethod
    def from_json(cls, obj):
        return cls([RegressionTree.from_json(t) for t in obj["trees"]], obj["stage_weights"],
                   obj["n_features"])


# -- fitting ------------------------------------------------------------------------


def fit_mean_baseline(prices, weights=None) -> MeanBaseline:
    prices = np.asarray(prices, dtype=np.float64)
    if prices.size == 0:
        raise EmptyInput("no training prices")
    if not np.all(prices > 0):
        raise NonPositiveValue("prices must be > 0")
    logs = np.log(prices)
    if weights is None:
        return MeanBaseline(float(logs.mean()))
    _, _, w = _check_inputs(np.zeros((len(logs), 0)), logs, weights)
    return MeanBaseline(float(np.dot(w, logs) / w.sum()))


@dataclass
class GbtConfig:
    n_trees: int = 100
    learning_rate: float = 0.3
    max_depth: int = 6
    min_leaf: int = 1
    feature_subsample_ratio: float = 1.0
    seed: int = 0


def fit_gbt(X, y_log, weights=None, config: GbtConfig = GbtConfig()) -> GbtModel:
    X, y, w = _check_inputs(X, y_log, weights)
    base = _weighted_mean(y, w)
    current = np.full(len(y), base)
    wsum = w.sum()
    losses = [float(np.dot(w, (y - current) ** 2) / wsum)]
    seeds = np.random.SeedSequence(config.seed).generate_state(max(config.n_trees, 1))
    trees = []
    for m in range(config.n_trees):
        tree = fit_tree(X, y - current, w, config.max_depth, config.min_leaf,
                        config.feature_subsample_ratio, int(seeds[m]))
        current = current + config.learning_rate * tree.predict(X)
        trees.append(tree)
        losses.append(float(np.dot(w, (y - current) ** 2) / wsum))
    return GbtModel(trees, config.learning_rate, base, X.shape[1], losses)


@dataclass
class RfConfig:
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_leaf: int = 1
    bootstrap: bool = True
    feature_subsample_ratio: float = 1.0
    seed: int = 0
    n_jobs: int = 1


def _weighted_resample_counts(rng, w):
    n = len(w)
    draws = rng.choice(n, size=n, replace=True, p=w / w.sum())
    return np.bincount(draws, minlength=n)


def _fit_forest_member(X, y, w, config: RfConfig, seed_seq):
    rng = np.random.default_rng(seed_seq)
    tree_seed = int(rng.integers(2 ** 32))
    if not config.bootstrap:
        return fit_tree(X, y, w, config.max_depth, config.min_leaf,
                        config.feature_subsample_ratio, tree_seed)
    counts = _weighted_resample_counts(rng, w)
    rows = counts > 0
    return fit_tree(X[rows], y[rows], counts[rows].astype(np.float64), config.max_depth,
                    config.min_leaf, config.feature_subsample_ratio, tree_seed)


def fit_random_forest(X, y_log, weights=None, config: RfConfig = RfConfig()) -> RfModel:
    """Each tree gets its own child seed, so results do not depend on ``n_jobs``."""
    X, y, w = _check_inputs(X, y_log, weights)
    if config.n_trees < 1:
        raise ValueError("random forest needs at least one tree")
    children = np.random.SeedSequence(config.seed).spawn(config.n_trees)
    if config.n_jobs > 1:
        with ThreadPoolExecutor(config.n_jobs) as pool:
            trees = list(pool.map(lambda s: _fit_forest_member(X, y, w, config, s), children))
    else:
        trees = [_fit_forest_member(X, y, w, config, s) for s in children]
    return RfModel(trees, X.shape[1])


@dataclass
class AdaConfig:
    n_stages: int = 50
    tree_depth: int = 3
    loss: str = "linear"
    seed: int = 0


def fit_adaboost_r2(X, y_log, weights=None, config: AdaConfig = AdaConfig()) -> AdaModel:
    """AdaBoost.R2 (Drucker 1997) with linear loss.

    A stage with zero error gets beta clamped to 1e-10 and ends boosting. A
    stage whose average loss reaches 0.5 ends boosting and is discarded,
    unless it is the first stage, which is kept with unit weight.
    """
    if config.loss != "linear":
        raise ValueError(f"unsupported loss {config.loss!r}")
    X, y, w = _check_inputs(X, y_log, weights)
    w = w / w.sum()
    rng = np.random.default_rng(config.seed)
    trees, stage_weights = [], []
    for _ in range(config.n_stages):
        counts = _weighted_resample_counts(rng, w)
        rows = counts > 0
        tree = fit_tree(X[rows], y[rows], counts[rows].astype(np.float64), config.tree_depth,
                        rng_seed=int(rng.integers(2 ** 32)))
        err = np.abs(tree.predict(X) - y)
        max_err = err.max()
        if max_err == 0:
            trees.append(tree)
            stage_weights.append(math.log(1.0 / BETA_FLOOR))
            break
        loss = err / max_err
        avg_loss = float(np.dot(w, loss))
        if avg_loss >= 0.5:
            if not trees:
                trees.append(tree)
                stage_weights.append(1.0)
            break
        beta = max(avg_loss / (1.0 - avg_loss), BETA_FLOOR)
        trees.append(tree)
        stage_weights.append(math.log(1.0 / beta))
        w = w * np.power(beta, 1.0 - loss)
        w = w / w.sum()
    return AdaModel(trees, stage_weights, X.shape[1])


# -- prediction and weights ----------------------------------------------------------


def predict_log(model, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeMismatch("X must be 2-D")
    n_features = getattr(model, "n_features", None)
    if n_features is not None and X.shape[1] != n_features:
        raise ShapeMismatch(f"model expects {n_features} features, got {X.shape[1]}")
    return model.predict_log(X)


def predict(model, X) -> np.ndarray:
    """Predicted prices, ``exp`` of the log-space output."""
    return np.exp(predict_log(model, X))


def recency_weights(train_txns, T: int, factor: float = 2.0) -> np.ndarray:
    """Weight ``factor`` for the newest ``T`` rows of a chronologically ordered list, 1 elsewhere."""
    if T < 0 or not factor > 0:
        raise ValueError("need T >= 0 and factor > 0")
    n = len(train_txns)
    w = np.ones(n)
    T = min(T, n)
    if T:
        w[n - T:] = factor
    return w


# -- serialization --------------------------------------------------------------------

MODEL_TYPES = {cls.model_type: cls for cls in (MeanBaseline, GbtModel, RfModel, AdaModel)}


def model_to_json(model, schema=None, extra=None) -> dict:
    out = {"format_version": FORMAT_VERSION, "model_type": model.model_type,
           "params": model.to_json()}
    if schema is not None:
        out["schema"] = schema.to_json()
    if extra:
        out.update(extra)
    return out


def model_from_json(obj: dict):
    if obj.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format {obj.get('format_version')!r}")
    return MODEL_TYPES[obj["model_type"]].from_json(obj["params"])


def dumps_model(model, schema=None, extra=None) -> str:
    return json.dumps(model_to_json(model, schema, extra), sort_keys=True)


def loads_model(text: str):
    return model_from_json(json.loads(text))
