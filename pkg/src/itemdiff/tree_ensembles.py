"""From-scratch regression trees plus the two ensemble learners.

Random forests average bootstrap-sampled variance-reduction trees with a
fresh mtry feature subset at every split.  Gradient boosting fits trees
sequentially to squared-error gradients (hessian 1) with second-order
regularized gain, XGBoost-style.

Determinism contract: per-tree random streams derive from the master seed
via ``numpy.random.SeedSequence([master_seed, tree_index])``, so the same
(data, params, seed) always produce bit-identical models.  Split ties are
broken by lowest feature index, then lowest threshold.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import MODEL_FORMAT_VERSION

__all__ = [
    "RegressionTree",
    "ForestModel",
    "BoostedModel",
    "GbmParams",
    "fit_tree",
    "fit_random_forest",
    "fit_gbm",
    "predict",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
]


class ColumnMismatchError(ValueError):
    """Prediction-time matrix columns do not match the trained model."""


@dataclass
class RegressionTree:
    """Binary regression tree over dense numeric features.

    Flat array layout in preorder; ``feature[i] == -1`` marks a leaf.
    Rows route left when value < threshold, right when value >= threshold.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    max_depth: Optional[int] = None
    min_node_size: int = 1

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            idx = node[rows]
            go_left = X[rows, self.feature[idx]] < self.threshold[idx]
            node[rows] = np.where(go_left, self.left[idx], self.right[idx])
            active = self.feature[node] >= 0
        return self.value[node]

    def root_split(self) -> Optional[tuple[int, float]]:
        """(feature, threshold) of the root, or None for a single leaf."""
        if self.feature[0] < 0:
            return None
        return int(self.feature[0]), float(self.threshold[0])


class _TreeBuilder:
    """Accumulates nodes in preorder during top-down construction."""

    def __init__(self) -> None:
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.count: list[int] = []

    def add(self, value: float, count: int) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.count.append(count)
        return len(self.feature) - 1

    def make_internal(self, node: int, feature: int, threshold: float) -> None:
        self.feature[node] = feature
        self.threshold[node] = threshold

    def finish(self, max_depth: Optional[int], min_node_size: int) -> RegressionTree:
        return RegressionTree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
            count=np.asarray(self.count, dtype=np.int32),
            max_depth=max_depth,
            min_node_size=min_node_size,
        )


def _best_split_sse(
    Xnode: np.ndarray, yc: np.ndarray, min_node_size: int
) -> Optional[tuple[int, float, np.ndarray]]:
    """Exact greedy SSE-reduction split over all candidate columns of a node.

    Candidate thresholds are midpoints between consecutive distinct sorted
    values.  Returns (local feature position, threshold, left row mask), or
    None when no split strictly reduces the sum of squared errors while
    keeping both children >= min_node_size.
    """
    n, m = Xnode.shape
    if n < 2 * min_node_size or n < 2:
        return None
    # Unstable sort is fine: equal-value runs only move rows between masked
    # (same-value) boundaries, never across a candidate threshold.
    order = np.argsort(Xnode, axis=0)
    xs = np.take_along_axis(Xnode, order, axis=0)
    ys = yc[order]
    csum = np.cumsum(ys, axis=0)
    total = csum[-1, :]
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    s_left = csum[:-1, :]
    s_right = total[None, :] - s_left
    # SSE reduction of the split; the parent term keeps it exact even when
    # the node targets are not perfectly centered.
    gain = (
        s_left * s_left / n_left
        + s_right * s_right / (n - n_left)
        - (total * total / n)[None, :]
    )
    invalid = xs[1:, :] <= xs[:-1, :]
    if min_node_size > 1:
        k = np.arange(1, n)
        invalid |= ((k < min_node_size) | (n - k < min_node_size))[:, None]
    gain[invalid] = -np.inf
    found = _pick_split(gain, float(yc @ yc))
    if found is None:
        return None
    f_pos, b = found
    threshold = _midpoint(xs[b, f_pos], xs[b + 1, f_pos])
    return f_pos, threshold, Xnode[:, f_pos] < threshold


def _best_split_gain(
    Xnode: np.ndarray,
    g: np.ndarray,
    reg_lambda: float,
    gamma: float,
    min_child_weight: float,
) -> Optional[tuple[int, float, np.ndarray]]:
    """Regularized-gain split for boosting (hessian fixed at 1 per row)."""
    n, m = Xnode.shape
    if n < 2:
        return None
    order = np.argsort(Xnode, axis=0)
    xs = np.take_along_axis(Xnode, order, axis=0)
    gs = g[order]
    csum = np.cumsum(gs, axis=0)
    g_total = csum[-1, :]
    h_left = np.arange(1, n, dtype=np.float64)[:, None]
    h_right = n - h_left
    g_left = csum[:-1, :]
    g_right = g_total[None, :] - g_left
    gain = 0.5 * (
        g_left * g_left / (h_left + reg_lambda)
        + g_right * g_right / (h_right + reg_lambda)
        - (g_total * g_total / (n + reg_lambda))[None, :]
    ) - gamma
    invalid = xs[1:, :] <= xs[:-1, :]
    if min_child_weight > 0:
        invalid |= (h_left < min_child_weight) | (h_right < min_child_weight)
    gain[invalid] = -np.inf
    found = _pick_split(gain, float(g @ g))
    if found is None:
        return None
    f_pos, b = found
    threshold = _midpoint(xs[b, f_pos], xs[b + 1, f_pos])
    return f_pos, threshold, Xnode[:, f_pos] < threshold


# Gains within this relative band of the maximum count as tied.  Candidates
# producing the same row partition via different columns are mathematically
# tied but accumulate in different orders, so their floats differ by ~1e-16;
# without the band the winner would depend on that noise and break seeded
# reproducibility under target shifts.
_TIE_REL = 1e-11


def _pick_split(gain: np.ndarray, scale: float) -> Optional[tuple[int, int]]:
    """Best cell of a (boundary, feature) gain grid, or None if no real gain.

    Ties (exact or within the relative band) resolve to the lowest feature
    index, then the lowest boundary — i.e. the lowest threshold, since
    boundaries scan sorted values.
    """
    per_feature_best = np.max(gain, axis=0)
    best = float(np.max(per_feature_best))
    floor = _TIE_REL * scale
    if not best > floor:
        return None
    f_pos = int(np.argmax(per_feature_best >= best - floor))
    b = int(np.argmax(gain[:, f_pos] >= best - floor))
    return f_pos, b


def _midpoint(lo: float, hi: float) -> float:
    mid = 0.5 * (lo + hi)
    # Adjacent floats can round the midpoint onto lo; hi preserves the partition.
    return mid if mid > lo else hi


def _grow_sse_tree(
    X: np.ndarray,
    y: np.ndarray,
    *,
    max_depth: Optional[int],
    min_node_size: int,
    mtry: Optional[int],
    candidates: np.ndarray,
    rng: np.random.Generator,
) -> RegressionTree:
    """Variance-reduction CART used standalone and as the forest member."""
    base = float(np.mean(y))
    yc = y - base  # root centering keeps split scores shift-invariant
    builder = _TreeBuilder()

    def grow(rows: np.ndarray, depth: int) -> int:
        node = builder.add(base + float(np.mean(yc[rows])), len(rows))
        if max_depth is not None and depth >= max_depth:
            return node
        y_rows = y[rows]
        if np.all(y_rows == y_rows[0]):
            return node
        if mtry is not None and mtry < len(candidates):
            cand = np.sort(rng.choice(candidates, size=mtry, replace=False))
        else:
            cand = candidates
        found = _best_split_sse(X[np.ix_(rows, cand)], yc[rows], min_node_size)
        if found is None:
            return node
        f_pos, threshold, left_mask = found
        builder.make_internal(node, int(cand[f_pos]), threshold)
        builder.left[node] = grow(rows[left_mask], depth + 1)
        builder.right[node] = grow(rows[~left_mask], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return builder.finish(max_depth, min_node_size)


def _grow_gbm_tree(
    X: np.ndarray,
    g: np.ndarray,
    rows: np.ndarray,
    cols: np.ndarray,
    params: "GbmParams",
) -> RegressionTree:
    """One boosting tree; leaf values are raw weights -G/(H + lambda)."""
    builder = _TreeBuilder()
    lam = params.reg_lambda

    def grow(node_rows: np.ndarray, depth: int) -> int:
        g_sum = float(np.sum(g[node_rows]))
        weight = -g_sum / (len(node_rows) + lam)
        node = builder.add(weight, len(node_rows))
        if depth >= params.max_depth:
            return node
        found = _best_split_gain(
            X[np.ix_(node_rows, cols)],
            g[node_rows],
            lam,
            params.gamma,
            params.min_child_weight,
        )
        if found is None:
            return node
        f_pos, threshold, left_mask = found
        builder.make_internal(node, int(cols[f_pos]), threshold)
        builder.left[node] = grow(node_rows[left_mask], depth + 1)
        builder.right[node] = grow(node_rows[~left_mask], depth + 1)
        return node

    grow(rows, 0)
    return builder.finish(params.max_depth, 1)


def _matrix_values(X) -> np.ndarray:
    values = X.values if hasattr(X, "values") else X
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"expected a 2-d design matrix, got shape {values.shape}")
    if np.isnan(values).any():
        raise ValueError("design matrix contains missing values")
    return values


def _matrix_columns(X, p: int) -> tuple[str, ...]:
    if hasattr(X, "column_names"):
        return tuple(X.column_names)
    return tuple(f"f{i}" for i in range(p))


def fit_tree(
    X,
    y: Sequence[float],
    *,
    max_depth: Optional[int] = None,
    min_node_size: int = 1,
    mtry: Optional[int] = None,
    candidate_columns: Optional[Sequence[int]] = None,
    seed: int = 0,
) -> RegressionTree:
    """Fit a single variance-reduction regression tree.

    ``mtry`` draws that many fresh candidate columns per split (from
    ``candidate_columns`` when given, else all columns) using a stream
    seeded by ``seed``.
    """
    values = _matrix_values(X)
    y = np.asarray(y, dtype=np.float64)
    if len(y) != values.shape[0]:
        raise ValueError(
            f"misaligned inputs: {values.shape[0]} rows vs {len(y)} targets"
        )
    if len(y) == 0:
        raise ValueError("cannot fit a tree on zero rows")
    if candidate_columns is None:
        candidates = np.arange(values.shape[1])
    else:
        candidates = np.asarray(sorted(candidate_columns), dtype=np.int64)
    if mtry is not None and not (1 <= mtry <= len(candidates)):
        raise ValueError(f"mtry must be in [1, {len(candidates)}], got {mtry}")
    rng = np.random.default_rng(np.random.SeedSequence([_nonneg(seed)]))
    return _grow_sse_tree(
        values,
        y,
        max_depth=max_depth,
        min_node_size=min_node_size,
        mtry=mtry,
        candidates=candidates,
        rng=rng,
    )


@dataclass
class ForestModel:
    trees: list[RegressionTree]
    n_trees: int
    mtry: int
    min_node_size: int
    max_depth: Optional[int]
    master_seed: int
    column_names: tuple[str, ...]
    bootstrap: bool = True

    def predict(self, X) -> np.ndarray:
        values = _check_columns(X, self.column_names)
        out = np.zeros(values.shape[0])
        for tree in self.trees:
            out += tree.predict(values)
        return out / len(self.trees)


@dataclass(frozen=True)
class GbmParams:
    """The seven tuned boosting parameters plus the fixed L2 penalty."""

    nrounds: int = 100
    max_depth: int = 6
    eta: float = 0.1
    gamma: float = 0.0
    colsample_bytree: float = 1.0
    min_child_weight: float = 1.0
    subsample: float = 1.0
    reg_lambda: float = 1.0

    def __post_init__(self) -> None:
        if self.nrounds < 0:
            raise ValueError(f"nrounds must be >= 0, got {self.nrounds}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not 0.0 < self.colsample_bytree <= 1.0:
            raise ValueError(f"colsample_bytree must be in (0, 1], got {self.colsample_bytree}")
        if self.min_child_weight < 0:
            raise ValueError(f"min_child_weight must be >= 0, got {self.min_child_weight}")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError(f"subsample must be in (0, 1], got {self.subsample}")
        if self.reg_lambda < 0:
            raise ValueError(f"reg_lambda must be >= 0, got {self.reg_lambda}")


@dataclass
class BoostedModel:
    trees: list[RegressionTree]
    base_score: float
    params: GbmParams
    master_seed: int
    column_names: tuple[str, ...]

    def predict(self, X) -> np.ndarray:
        values = _check_columns(X, self.column_names)
        out = np.full(values.shape[0], self.base_score)
        for tree in self.trees:
            out += self.params.eta * tree.predict(values)
        return out


def _nonneg(seed: int) -> int:
    # SeedSequence entropy must be non-negative.
    return seed & 0xFFFFFFFFFFFFFFFF


def _tree_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([_nonneg(master_seed), index]))


def fit_random_forest(
    X,
    y: Sequence[float],
    *,
    n_trees: int = 500,
    mtry: Optional[int] = None,
    min_node_size: int = 5,
    max_depth: Optional[int] = None,
    seed: int = 0,
    bootstrap: bool = True,
) -> ForestModel:
    """Bootstrap forest of variance-reduction trees.

    Each tree sees an n-draw bootstrap sample and redraws ``mtry`` candidate
    features at every split.  ``mtry`` defaults to max(1, floor(p / 3)), the
    usual regression default.  ``bootstrap=False`` is a test hook.
    """
    values = _matrix_values(X)
    y = np.asarray(y, dtype=np.float64)
    n, p = values.shape
    if n < 2:
        raise ValueError(f"need at least 2 rows to fit a forest, got {n}")
    if len(y) != n:
        raise ValueError(f"misaligned inputs: {n} rows vs {len(y)} targets")
    if n_trees < 1:
        raise ValueError(f"n_trees must be >= 1, got {n_trees}")
    if mtry is None:
        mtry = max(1, p // 3)
    if not (1 <= mtry <= p):
        raise ValueError(f"mtry must be in [1, {p}], got {mtry}")

    trees = []
    candidates = np.arange(p)
    for i in range(n_trees):
        rng = _tree_rng(seed, i)
        if bootstrap:
            rows = rng.integers(0, n, size=n)
            Xb, yb = values[rows], y[rows]
        else:
            Xb, yb = values, y
        trees.append(
            _grow_sse_tree(
                Xb,
                yb,
                max_depth=max_depth,
                min_node_size=min_node_size,
                mtry=mtry if mtry < p else None,
                candidates=candidates,
                rng=rng,
            )
        )
    return ForestModel(
        trees=trees,
        n_trees=n_trees,
        mtry=mtry,
        min_node_size=min_node_size,
        max_depth=max_depth,
        master_seed=seed,
        column_names=_matrix_columns(X, p),
        bootstrap=bootstrap,
    )


def fit_gbm(X, y: Sequence[float], params: GbmParams, seed: int = 0) -> BoostedModel:
    """Gradient-boosted trees on squared error.

    Gradients are ``prediction - target`` with unit hessians, so the leaf
    weight -G/(H + lambda) is the shrunk mean residual of the leaf.  Row
    subsampling is redrawn per round, the column subset per tree, from a
    single stream seeded by ``seed``.
    """
    values = _matrix_values(X)
    y = np.asarray(y, dtype=np.float64)
    n, p = values.shape
    if n < 2:
        raise ValueError(f"need at least 2 rows to fit a GBM, got {n}")
    if len(y) != n:
        raise ValueError(f"misaligned inputs: {n} rows vs {len(y)} targets")

    rng = np.random.default_rng(np.random.SeedSequence([_nonneg(seed)]))
    base_score = float(np.mean(y))
    pred = np.full(n, base_score)
    all_rows = np.arange(n)
    all_cols = np.arange(p)
    n_sub = max(1, int(round(params.subsample * n)))
    n_cols = max(1, int(round(params.colsample_bytree * p)))

    trees = []
    for _ in range(params.nrounds):
        g = pred - y
        rows = all_rows if n_sub == n else np.sort(rng.choice(n, size=n_sub, replace=False))
        cols = all_cols if n_cols == p else np.sort(rng.choice(p, size=n_cols, replace=False))
        tree = _grow_gbm_tree(values, g, rows, cols, params)
        trees.append(tree)
        if params.eta != 0.0:
            pred += params.eta * tree.predict(values)
    return BoostedModel(
        trees=trees,
        base_score=base_score,
        params=params,
        master_seed=seed,
        column_names=_matrix_columns(X, p),
    )


def _check_columns(X, expected: tuple[str, ...]) -> np.ndarray:
    values = _matrix_values(X)
    if hasattr(X, "column_names"):
        got = tuple(X.column_names)
        if got != expected:
            missing = [c for c in expected if c not in got]
            extra = [c for c in got if c not in expected]
            detail = []
            if missing:
                detail.append(f"missing: {', '.join(missing)}")
            if extra:
                detail.append(f"unexpected: {', '.join(extra)}")
            if not detail:
                detail.append("same names, different order")
            raise ColumnMismatchError(
                "matrix columns do not match model columns (" + "; ".join(detail) + ")"
            )
    elif values.shape[1] != len(expected):
        raise ColumnMismatchError(
            f"matrix has {values.shape[1]} columns, model expects {len(expected)}"
        )
    return values


def predict(model, X) -> np.ndarray:
    """Predict difficulties with a fitted forest or boosted model."""
    if not isinstance(model, (ForestModel, BoostedModel)):
        raise TypeError(f"unsupported model type: {type(model).__name__}")
    return model.predict(X)


def _tree_to_dict(tree: RegressionTree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "value": tree.value.tolist(),
        "count": tree.count.tolist(),
    }


def _tree_from_dict(d: dict, max_depth, min_node_size) -> RegressionTree:
    return RegressionTree(
        feature=np.asarray(d["feature"], dtype=np.int32),
        threshold=np.asarray(d["threshold"], dtype=np.float64),
        left=np.asarray(d["left"], dtype=np.int32),
        right=np.asarray(d["right"], dtype=np.int32),
        value=np.asarray(d["value"], dtype=np.float64),
        count=np.asarray(d["count"], dtype=np.int32),
        max_depth=max_depth,
        min_node_size=min_node_size,
    )


def model_to_dict(model) -> dict:
    if isinstance(model, ForestModel):
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "random_forest",
            "column_names": list(model.column_names),
            "n_trees": model.n_trees,
            "mtry": model.mtry,
            "min_node_size": model.min_node_size,
            "max_depth": model.max_depth,
            "master_seed": model.master_seed,
            "bootstrap": model.bootstrap,
            "trees": [_tree_to_dict(t) for t in model.trees],
        }
    if isinstance(model, BoostedModel):
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "gradient_boosting",
            "column_names": list(model.column_names),
            "params": asdict(model.params),
            "base_score": model.base_score,
            "master_seed": model.master_seed,
            "trees": [_tree_to_dict(t) for t in model.trees],
        }
    raise TypeError(f"unsupported model type: {type(model).__name__}")


def model_from_dict(d: dict):
    version = d.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(
            f"unsupported model format version {version!r} "
            f"(expected {MODEL_FORMAT_VERSION})"
        )
    columns = tuple(d["column_names"])
    n_features = len(columns)
    for t in d["trees"]:
        used = [f for f in t["feature"] if f >= 0]
        if used and max(used) >= n_features:
            raise ValueError(
                f"model is internally inconsistent: tree references feature "
                f"{max(used)} but only {n_features} columns are declared"
            )
    kind = d.get("kind")
    if kind == "random_forest":
        return ForestModel(
            trees=[
                _tree_from_dict(t, d["max_depth"], d["min_node_size"])
                for t in d["trees"]
            ],
            n_trees=d["n_trees"],
            mtry=d["mtry"],
            min_node_size=d["min_node_size"],
            max_depth=d["max_depth"],
            master_seed=d["master_seed"],
            column_names=columns,
            bootstrap=d.get("bootstrap", True),
        )
    if kind == "gradient_boosting":
        params = GbmParams(**d["params"])
        return BoostedModel(
            trees=[_tree_from_dict(t, params.max_depth, 1) for t in d["trees"]],
            base_score=d["base_score"],
            params=params,
            master_seed=d["master_seed"],
            column_names=columns,
        )
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model, path: str | os.PathLike) -> None:
    """Serialize a model as versioned JSON (byte-stable for fixed inputs)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str | os.PathLike):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
