"""Downstream tasks over latent matrices: density clustering, neighbor
retrieval, anomaly scoring, and small gradient-boosted prediction heads.

Everything here is deterministic: DBSCAN expands clusters in ascending row
order, neighbor ties break on the lower row index, and tree fitting breaks
split ties on the lower feature index then the lower threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embed import LatentMatrix
from .errors import (
    ConstantTruth,
    DegenerateLabels,
    DimMismatch,
    EmptyInput,
    KTooLarge,
    OutOfRange,
    UnknownId,
)

_NOISE = -1
_H_EPS = 1e-12


def _as_rows(latents) -> np.ndarray:
    if isinstance(latents, LatentMatrix):
        return latents.rows
    rows = np.asarray(latents, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError("latents must be a 2-D matrix")
    return rows


@dataclass
class ClusterLabels:
    labels: np.ndarray
    eps: float
    min_pts: int

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if np.any(self.labels >= 0) else 0


def dbscan(latents, eps: float, min_pts: int) -> ClusterLabels:
    """Textbook density clustering; neighborhoods include the point itself."""
    if eps <= 0 or min_pts < 1:
        raise ValueError("need eps > 0 and min_pts >= 1")
    x = _as_rows(latents)
    n = x.shape[0]
    eps_sq = eps * eps

    def region(i: int) -> np.ndarray:
        diff = x - x[i]
        d = np.einsum("ij,ij->i", diff, diff)
        return np.nonzero(d <= eps_sq)[0]

    labels = np.full(n, -2, dtype=np.int64)  # -2 = unvisited
    cluster = 0
    for i in range(n):
        if labels[i] != -2:
            continue
        neigh = region(i)
        if len(neigh) < min_pts:
            labels[i] = _NOISE
            continue
        labels[i] = cluster
        seeds = list(neigh[neigh != i])
        pos = 0
        while pos < len(seeds):
            j = seeds[pos]
            pos += 1
            if labels[j] == _NOISE:
                labels[j] = cluster  # border point
            if labels[j] != -2:
                continue
            labels[j] = cluster
            neigh_j = region(j)
            if len(neigh_j) >= min_pts:
                seeds.extend(neigh_j)
        cluster += 1
    return ClusterLabels(labels=labels, eps=eps, min_pts=min_pts)


@dataclass
class NeighborList:
    query_id: str
    neighbors: list[tuple[str, float]]  # (series_id, distance) ascending


def knn_query(latents, query, k: int) -> NeighborList:
    """Exact k nearest rows; ties break on the lower row index.

    ``query`` is a series id (that row is excluded from its own result) or a
    bare vector.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    x = _as_rows(latents)
    ids = latents.ids if isinstance(latents, LatentMatrix) else [str(i) for i in range(len(x))]
    if isinstance(query, str):
        if query not in ids:
            raise UnknownId(query)
        qi = ids.index(query)
        qv = x[qi]
        exclude = qi
        query_id = query
        limit = len(x) - 1
    else:
        qv = np.asarray(query, dtype=np.float64)
        if qv.shape != (x.shape[1],):
            raise DimMismatch(f"query vector has shape {qv.shape}, rows have {x.shape[1]} features")
        exclude = None
        query_id = ""
        limit = len(x)
    if k > limit:
        raise KTooLarge(f"k={k} but only {limit} candidate rows")
    d = np.sqrt(np.maximum(np.einsum("ij,ij->i", x - qv, x - qv), 0.0))
    if exclude is not None:
        d[exclude] = np.inf
    order = np.argsort(d, kind="stable")[:k]
    return NeighborList(query_id=query_id, neighbors=[(ids[i], float(d[i])) for i in order])


def anomaly_scores(latents, k: int) -> np.ndarray:
    """Mean distance to the k nearest other rows; larger = more anomalous."""
    x = _as_rows(latents)
    n = x.shape[0]
    if not 1 <= k <= n - 1:
        raise KTooLarge(f"k={k} outside [1, {n - 1}]")
    sq_norms = np.einsum("ij,ij->i", x, x)
    d2 = sq_norms[:, None] + sq_norms[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, np.inf)
    d = np.sqrt(np.maximum(d2, 0.0))
    part = np.partition(d, k - 1, axis=1)[:, :k]
    return part.mean(axis=1)


# --- gradient-boosted prediction heads ---------------------------------------


@dataclass
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass(frozen=True)
class HeadConfig:
    n_estimators: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    seed: int = 0  # reserved; exact greedy fitting has no stochastic steps

    def __post_init__(self) -> None:
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")


@dataclass
class HeadModel:
    kind: str  # classifier | regressor
    trees: list[_Node] = field(default_factory=list)
    learning_rate: float = 0.1
    n_estimators: int = 100
    base_score: float = 0.0
    n_features: int = 0


def _best_split(x: np.ndarray, g: np.ndarray, h: np.ndarray):
    """Exact greedy split maximizing the Newton gain, or None."""
    n_features = x.shape[1]
    best_gain = 0.0
    best = None
    total_g = g.sum()
    total_h = h.sum()
    parent = total_g * total_g / (total_h + _H_EPS)
    for f in range(n_features):
        order = np.argsort(x[:, f], kind="stable")
        xv = x[order, f]
        gl = g[order].cumsum()[:-1]
        hl = h[order].cumsum()[:-1]
        valid = xv[:-1] < xv[1:]
        if not valid.any():
            continue
        gr = total_g - gl
        hr = total_h - hl
        gains = gl * gl / (hl + _H_EPS) + gr * gr / (hr + _H_EPS) - parent
        gains[~valid] = -np.inf
        j = int(np.argmax(gains))
        if gains[j] > best_gain:
            best_gain = float(gains[j])
            best = (f, (xv[j] + xv[j + 1]) / 2.0)
    return best


def _build_tree(x: np.ndarray, g: np.ndarray, h: np.ndarray, depth: int, max_depth: int) -> _Node:
    if depth >= max_depth:
        return _Node(value=float(-g.sum() / (h.sum() + _H_EPS)))
    split = _best_split(x, g, h)
    if split is None:
        return _Node(value=float(-g.sum() / (h.sum() + _H_EPS)))
    f, thr = split
    mask = x[:, f] <= thr
    node = _Node(feature=f, threshold=thr)
    node.left = _build_tree(x[mask], g[mask], h[mask], depth + 1, max_depth)
    node.right = _build_tree(x[~mask], g[~mask], h[~mask], depth + 1, max_depth)
    return node


def _tree_predict(node: _Node, x: np.ndarray) -> np.ndarray:
    out = np.empty(x.shape[0])
    stack = [(node, np.arange(x.shape[0]))]
    while stack:
        nd, idx = stack.pop()
        if nd.is_leaf:
            out[idx] = nd.value
            continue
        mask = x[idx, nd.feature] <= nd.threshold
        stack.append((nd.left, idx[mask]))
        stack.append((nd.right, idx[~mask]))
    return out


def _sigmoid(v: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-v))


def fit_head(latents, labels, kind: str, cfg: HeadConfig = HeadConfig()) -> HeadModel:
    """Boosted trees on latent features.

    The regressor fits squared loss with exact mean-residual leaves; the
    classifier fits logistic loss with Newton leaf weights. No subsampling,
    no regularization terms.
    """
    if kind not in ("classifier", "regressor"):
        raise ValueError(f"kind must be 'classifier' or 'regressor', got {kind!r}")
    x = _as_rows(latents)
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != (x.shape[0],):
        raise DimMismatch("labels must align with latent rows")
    if x.shape[0] == 0:
        raise EmptyInput("no rows to fit")

    if kind == "classifier":
        classes = np.unique(y)
        if not np.all(np.isin(classes, (0.0, 1.0))):
            raise ValueError("classifier labels must be binary 0/1")
        if len(classes) < 2:
            raise DegenerateLabels("classifier needs both classes present")
        p0 = y.mean()
        base = float(np.log(p0 / (1.0 - p0)))
    else:
        base = float(y.mean())

    model = HeadModel(
        kind=kind,
        learning_rate=cfg.learning_rate,
        n_estimators=cfg.n_estimators,
        base_score=base,
        n_features=x.shape[1],
    )
    score = np.full(x.shape[0], base)
    for _ in range(cfg.n_estimators):
        if kind == "classifier":
            p = _sigmoid(score)
            g = p - y
            h = p * (1.0 - p)
        else:
            g = score - y
            h = np.ones_like(y)
        tree = _build_tree(x, g, h, 0, cfg.max_depth)
        model.trees.append(tree)
        score = score + cfg.learning_rate * _tree_predict(tree, x)
    return model


def predict_head(model: HeadModel, latents) -> np.ndarray:
    """Class probability (classifier) or real value (regressor) per row."""
    x = _as_rows(latents)
    if x.shape[1] != model.n_features:
        raise DimMismatch(f"{x.shape[1]} features, model expects {model.n_features}")
    score = np.full(x.shape[0], model.base_score)
    for tree in model.trees:
        score = score + model.learning_rate * _tree_predict(tree, x)
    if model.kind == "classifier":
        return _sigmoid(score)
    return score


def metrics(preds, truth, task: str) -> dict:
    """Standard evaluation metrics.

    Classification thresholds probabilities at 0.5 and reports per-class F1;
    regression reports R^2 (undefined for constant truth) and MSE.
    """
    preds = np.asarray(preds, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if preds.shape != truth.shape:
        raise DimMismatch("preds and truth must align")
    if preds.size == 0:
        raise EmptyInput("no predictions to score")
    if task == "classification":
        y_pred = (preds > 0.5).astype(int)
        y_true = truth.astype(int)
        out = {"accuracy": float((y_pred == y_true).mean()), "f1_per_class": {}}
        for cls in (0, 1):
            tp = int(((y_pred == cls) & (y_true == cls)).sum())
            fp = int(((y_pred == cls) & (y_true != cls)).sum())
            fn = int(((y_pred != cls) & (y_true == cls)).sum())
            denom = 2 * tp + fp + fn
            out["f1_per_class"][cls] = (2.0 * tp / denom) if denom > 0 else 0.0
        return out
    if task == "regression":
        ss_res = float(((truth - preds) ** 2).sum())
        ss_tot = float(((truth - truth.mean()) ** 2).sum())
        if ss_tot == 0.0:
            raise ConstantTruth("R^2 undefined for constant truth")
        return {"r2": 1.0 - ss_res / ss_tot, "mse": float(((truth - preds) ** 2).mean())}
    raise ValueError(f"unknown task {task!r}")


def threshold_variability(values) -> np.ndarray:
    """Binary variability label: 1 iff the index is strictly above 6."""
    v = np.asarray(values, dtype=np.float64)
    if np.any((v < 0) | (v > 10)):
        raise OutOfRange("variability index must lie in [0, 10]")
    return (v > 6.0).astype(int)
