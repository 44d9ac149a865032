"""Gradient-boosted regression trees, written from scratch.

Boosting with a second-order objective: each round fits one regression tree
to the per-sample gradients g_i and hessians h_i of the running prediction.
For squared loss, g_i = pred_i - y_i and h_i = 1.  With L2 leaf penalty
``lam`` and per-leaf cost ``tau``:

    leaf weight   w* = -G / (H + lam)
    split gain    0.5 * ( GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam) ) - tau

where G/H are gradient/hessian sums over the samples reaching the node.
Splits are exact greedy: thresholds are midpoints between consecutive
distinct sorted feature values, routing is strictly ``x[feature] < threshold``
to the left child.  Ties on gain prefer the lower feature index, then the
lower threshold; to keep that deterministic regardless of summation order,
the winning candidate per feature is re-scored from row-order sums before
the cross-feature comparison.  Growth stops when the best gain is <= 0, the
depth limit is reached, or a child would fall under min_samples_leaf.

The ensemble prediction is base_score + learning_rate * sum of tree outputs;
the shrinkage factor is uniform across rounds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

# Frozen feature layout for CPI models.  Index positions are part of the
# on-disk model and trace contracts; never reorder.
FEATURE_NAMES = (
    "pod_cpu_util",      # 0: pod CPU as a fraction of its request, clamped [0, 2]
    "pod_mem_util",      # 1: pod memory as a fraction of its request, clamped [0, 2]
    "node_cpu_total",    # 2
    "node_cpu_offline",  # 3
    "node_cpu_shared",   # 4
    "node_cpu_online",   # 5
    "l3_miss_rate",      # 6: pod L3 misses/s, unnormalized
    "sys_cpu_total",     # 7
    "sys_mem_total",     # 8
)
FEATURE_COUNT = len(FEATURE_NAMES)

MODEL_SCHEMA_VERSION = 1


class DegenerateLeafError(ValueError):
    """Leaf weight undefined: hessian sum plus lam is not positive."""


class ModelSchemaError(ValueError):
    """Serialized model does not match the documented schema."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    lam: float = 1.0              # L2 penalty on leaf weights
    tau: float = 0.0              # per-leaf cost
    max_depth: int = 4
    num_rounds: int = 100
    min_samples_leaf: int = 2
    base_score: float = 0.0

    def __post_init__(self) -> None:
        # learning_rate 0 is degenerate but defined: predictions stay at base_score.
        if not 0.0 <= self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate {self.learning_rate} outside [0, 1]")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.num_rounds < 1:
            raise ValueError("num_rounds must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")


@dataclass
class TreeNode:
    """Internal node when feature is not None, leaf otherwise."""

    feature: int | None = None
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    weight: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


def leaf_weight(g_sum: float, h_sum: float, lam: float) -> float:
    denom = h_sum + lam
    if denom <= 0:
        raise DegenerateLeafError(f"h_sum + lam = {denom} is not positive")
    return -g_sum / denom


def split_gain(
    g_left: float,
    h_left: float,
    g_right: float,
    h_right: float,
    lam: float,
    tau: float,
) -> float:
    parent_g = g_left + g_right
    parent_h = h_left + h_right
    return 0.5 * (
        g_left * g_left / (h_left + lam)
        + g_right * g_right / (h_right + lam)
        - parent_g * parent_g / (parent_h + lam)
    ) - tau


def _scored_split(
    values: np.ndarray, g: np.ndarray, h: np.ndarray, cfg: TrainConfig
) -> tuple[float, float] | None:
    """Best (gain, threshold) for one feature within a node, or None.

    Candidates are scored with prefix sums; the winner is re-scored from
    row-order sums so gains are comparable across features bit-for-bit.
    """
    n = values.size
    order = np.argsort(values, kind="stable")
    v = values[order]
    if v[0] == v[-1]:
        return None  # constant feature
    g_pre = np.cumsum(g[order])[:-1]
    h_pre = np.cumsum(h[order])[:-1]
    g_tot = g_pre[-1] + g[order[-1]]
    h_tot = h_pre[-1] + h[order[-1]]

    thresholds = (v[:-1] + v[1:]) / 2.0
    left_count = np.arange(1, n)
    ok = (
        (v[:-1] < v[1:])
        & (thresholds > v[:-1])  # midpoint rounding down to v[i] cannot separate
        & (left_count >= cfg.min_samples_leaf)
        & (n - left_count >= cfg.min_samples_leaf)
    )
    if not ok.any():
        return None

    with np.errstate(divide="ignore", invalid="ignore"):
        gains = (
            0.5
            * (
                g_pre**2 / (h_pre + cfg.lam)
                + (g_tot - g_pre) ** 2 / (h_tot - h_pre + cfg.lam)
                - g_tot**2 / (h_tot + cfg.lam)
            )
            - cfg.tau
        )
    gains = np.where(ok & np.isfinite(gains), gains, -np.inf)
    k = int(np.argmax(gains))  # first max: lowest threshold wins within a feature
    if gains[k] == -np.inf:
        return None

    threshold = float(thresholds[k])
    mask = values < threshold
    gain = split_gain(
        float(np.sum(g[mask])),
        float(np.sum(h[mask])),
        float(np.sum(g[~mask])),
        float(np.sum(h[~mask])),
        cfg.lam,
        cfg.tau,
    )
    return gain, threshold


def _grow(
    X: np.ndarray, g: np.ndarray, h: np.ndarray, rows: np.ndarray, depth: int, cfg: TrainConfig
) -> TreeNode:
    g_node = g[rows]
    h_node = h[rows]

    best: tuple[float, int, float] | None = None  # (gain, feature, threshold)
    if depth < cfg.max_depth and rows.size >= 2 * cfg.min_samples_leaf:
        for f in range(X.shape[1]):
            scored = _scored_split(X[rows, f], g_node, h_node, cfg)
            if scored is None:
                continue
            gain, threshold = scored
            if best is None or gain > best[0]:
                best = (gain, f, threshold)

    if best is None or best[0] <= 0.0:
        return TreeNode(weight=leaf_weight(float(np.sum(g_node)), float(np.sum(h_node)), cfg.lam))

    _, feature, threshold = best
    mask = X[rows, feature] < threshold
    return TreeNode(
        feature=feature,
        threshold=threshold,
        left=_grow(X, g, h, rows[mask], depth + 1, cfg),
        right=_grow(X, g, h, rows[~mask], depth + 1, cfg),
    )


def fit_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, cfg: TrainConfig) -> TreeNode:
    """Fit one regression tree to gradient/hessian pairs."""
    X = np.asarray(X, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-D array")
    if g.shape != (X.shape[0],) or h.shape != (X.shape[0],):
        raise ValueError("g and h must be 1-D and match the number of rows")
    if not (np.isfinite(X).all() and np.isfinite(g).all() and np.isfinite(h).all()):
        raise ValueError("non-finite training input")
    return _grow(X, g, h, np.arange(X.shape[0]), 0, cfg)


def tree_predict_row(node: TreeNode, x: np.ndarray) -> float:
    while not node.is_leaf:
        node = node.left if x[node.feature] < node.threshold else node.right
    return node.weight


def tree_predict(node: TreeNode, X: np.ndarray) -> np.ndarray:
    """Vectorized tree evaluation over the rows of X."""
    out = np.empty(X.shape[0], dtype=np.float64)
    stack: list[tuple[TreeNode, np.ndarray]] = [(node, np.arange(X.shape[0]))]
    while stack:
        current, rows = stack.pop()
        if rows.size == 0:
            continue
        if current.is_leaf:
            out[rows] = current.weight
            continue
        mask = X[rows, current.feature] < current.threshold
        stack.append((current.left, rows[mask]))
        stack.append((current.right, rows[~mask]))
    return out


@dataclass
class Ensemble:
    base_score: float = 0.0
    learning_rate: float = 0.1
    feature_count: int = FEATURE_COUNT
    trees: list[TreeNode] = field(default_factory=list)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.feature_count:
            raise ValueError(f"expected (n, {self.feature_count}) features, got {X.shape}")
        preds = np.full(X.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            preds += self.learning_rate * tree_predict(tree, X)
        return preds

    def predict_row(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.feature_count,):
            raise ValueError(f"expected {self.feature_count} features, got {x.shape}")
        total = self.base_score
        for tree in self.trees:
            total += self.learning_rate * tree_predict_row(tree, x)
        return float(total)


def train_ensemble(X: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> Ensemble:
    """Boost cfg.num_rounds squared-loss trees against targets y."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-D array")
    if y.shape != (X.shape[0],):
        raise ValueError("y must be 1-D and match the number of rows")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite training input")

    ensemble = Ensemble(
        base_score=cfg.base_score,
        learning_rate=cfg.learning_rate,
        feature_count=X.shape[1],
    )
    preds = np.full(X.shape[0], cfg.base_score, dtype=np.float64)
    h = np.ones(X.shape[0], dtype=np.float64)
    for _ in range(cfg.num_rounds):
        g = preds - y
        tree = fit_tree(X, g, h, cfg)
        ensemble.trees.append(tree)
        preds += cfg.learning_rate * tree_predict(tree, X)
    return ensemble


def _tree_penalty(node: TreeNode, lam: float, tau: float) -> float:
    if node.is_leaf:
        return tau + 0.5 * lam * node.weight**2
    return _tree_penalty(node.left, lam, tau) + _tree_penalty(node.right, lam, tau)


def squared_error_objective(ensemble: Ensemble, X: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> float:
    """Training objective: 0.5 * sum of squared errors plus tree penalties."""
    residual = ensemble.predict(X) - np.asarray(y, dtype=np.float64)
    penalty = sum(_tree_penalty(t, cfg.lam, cfg.tau) for t in ensemble.trees)
    return float(0.5 * np.sum(residual**2) + penalty)


def regression_metrics(
    y_true: np.ndarray, y_pred: np.ndarray, include_acc: bool = True
) -> dict[str, float]:
    """MSE, MAE, R2, and ACC = max(0, 1 - mean absolute percentage error)."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.size == 0 or y_true.shape != y_pred.shape:
        raise ValueError("metrics need matching non-empty arrays")
    err = y_pred - y_true
    mse = float(np.mean(err**2))
    mae = float(np.mean(np.abs(err)))
    ss_res = float(np.sum(err**2))
    ss_tot = float(np.sum((y_true - np.mean(y_true)) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    metrics = {"mse": mse, "mae": mae, "r2": r2}
    if include_acc:
        if np.any(y_true <= 0):
            raise ValueError("ACC requires strictly positive targets")
        mape = float(np.mean(np.abs(err) / y_true))
        metrics["acc"] = max(0.0, 1.0 - mape)
    return metrics


def _node_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"weight": node.weight}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(obj: dict, feature_count: int) -> TreeNode:
    if not isinstance(obj, dict):
        raise ModelSchemaError(f"tree node must be an object, got {type(obj).__name__}")
    if "weight" in obj:
        return TreeNode(weight=float(obj["weight"]))
    try:
        feature = int(obj["feature"])
        threshold = float(obj["threshold"])
        left = obj["left"]
        right = obj["right"]
    except KeyError as exc:
        raise ModelSchemaError(f"tree node missing field {exc}") from exc
    if not 0 <= feature < feature_count:
        raise ModelSchemaError(f"feature index {feature} outside [0, {feature_count})")
    return TreeNode(
        feature=feature,
        threshold=threshold,
        left=_node_from_dict(left, feature_count),
        right=_node_from_dict(right, feature_count),
    )


def ensemble_to_dict(ensemble: Ensemble) -> dict:
    return {
        "version": MODEL_SCHEMA_VERSION,
        "base_score": ensemble.base_score,
        "learning_rate": ensemble.learning_rate,
        "feature_count": ensemble.feature_count,
        "trees": [_node_to_dict(t) for t in ensemble.trees],
    }


def ensemble_from_dict(obj: dict) -> Ensemble:
    if not isinstance(obj, dict):
        raise ModelSchemaError("model document must be an object")
    if obj.get("version") != MODEL_SCHEMA_VERSION:
        raise ModelSchemaError(f"unsupported model version {obj.get('version')!r}")
    for key in ("base_score", "learning_rate", "feature_count", "trees"):
        if key not in obj:
            raise ModelSchemaError(f"model missing field {key!r}")
    feature_count = int(obj["feature_count"])
    if feature_count < 1:
        raise ModelSchemaError("feature_count must be >= 1")
    return Ensemble(
        base_score=float(obj["base_score"]),
        learning_rate=float(obj["learning_rate"]),
        feature_count=feature_count,
        trees=[_node_from_dict(t, feature_count) for t in obj["trees"]],
    )


def ensemble_to_json(ensemble: Ensemble) -> str:
    return json.dumps(ensemble_to_dict(ensemble), sort_keys=True)


def ensemble_from_json(text: str) -> Ensemble:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelSchemaError(f"model is not valid JSON: {exc}") from exc
    return ensemble_from_dict(obj)
