"""Dataset-level latent extraction and exact 2-D t-SNE projection.

The projection is the exact O(n^2) algorithm: per-point Gaussian bandwidths
found by binary search on the perplexity, symmetrized joint probabilities,
Student-t low-dimensional kernel, and momentum gradient descent with early
exaggeration and per-coordinate gain adaptation. Desk-scale datasets (a few
thousand points) stay comfortably fast without the Barnes-Hut tree.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArchMismatch, MissingTensor, TooFewPoints
from .ingest import Catalog
from .sae.model import SaeModel, encode_batch
from .tensorize import read_tensor

log = logging.getLogger(__name__)

_TINY = np.finfo(np.float64).tiny


@dataclass
class LatentMatrix:
    rows: np.ndarray  # (n, d)
    ids: list[str]
    labels: dict[str, list] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise ValueError("latent rows must be 2-D")
        if len(self.ids) != self.rows.shape[0]:
            raise ValueError("ids must align with rows")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("series ids must be unique")

    @property
    def n(self) -> int:
        return self.rows.shape[0]


@dataclass
class Embedding2D:
    points: np.ndarray  # (n, 2)
    ids: list[str]
    kl_history: list[float]


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iters: int = 1000
    lr: float = 200.0
    momentum_start: float = 0.5
    momentum_final: float = 0.8
    momentum_switch_iter: int = 250
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    seed: int = 0


def extract_latents(
    model: SaeModel,
    catalog: Catalog,
    tensors,
    batch_size: int = 256,
) -> LatentMatrix:
    """Encode every catalog entry, keeping catalog order and labels.

    ``tensors`` is either a mapping series_id -> tensor or a directory of
    tensor files named ``<series_id>.etdt`` / ``.etmp``.
    """
    resolved = []
    for entry in catalog.entries:
        if isinstance(tensors, (str, Path)):
            base = Path(tensors)
            candidates = [base / f"{entry.series_id}{suf}" for suf in (".etdt", ".etmp")]
            path = next((p for p in candidates if p.exists()), None)
            if path is None:
                raise MissingTensor(entry.series_id)
            tensor = read_tensor(path)
        else:
            if entry.series_id not in tensors:
                raise MissingTensor(entry.series_id)
            tensor = tensors[entry.series_id]
        if tuple(tensor.dims) != model.input_dims:
            raise ArchMismatch(
                f"{entry.series_id}: tensor dims {tuple(tensor.dims)} vs model {model.input_dims}"
            )
        resolved.append(tensor.values)

    rows = np.empty((len(resolved), model.bottleneck_dim), dtype=np.float64)
    for start in range(0, len(resolved), batch_size):
        chunk = np.stack(resolved[start : start + batch_size])
        rows[start : start + len(chunk)] = encode_batch(model, chunk)

    label_keys = sorted({k for e in catalog.entries for k in e.labels})
    labels = {k: [e.labels.get(k) for e in catalog.entries] for k in label_keys}
    return LatentMatrix(rows=rows, ids=catalog.ids(), labels=labels)


@dataclass
class CalibrationResult:
    probabilities: np.ndarray  # full row, zero at the self index
    beta: float
    iterations: int
    converged: bool


def _row_distribution(sq_dists: np.ndarray, beta: float, self_index: int) -> np.ndarray:
    logits = -beta * sq_dists
    logits[self_index] = -np.inf
    logits -= logits[logits > -np.inf].max()
    p = np.exp(logits)
    p[self_index] = 0.0
    total = p.sum()
    return p / total if total > 0 else np.full_like(p, 1.0 / (len(p) - 1))


def perplexity_of(p: np.ndarray) -> float:
    """2**H(p) with H the Shannon entropy in bits."""
    nz = p[p > 0]
    h = -(nz * np.log2(nz)).sum()
    return float(2.0**h)


def perplexity_calibration(
    sq_dists: np.ndarray,
    self_index: int,
    target_perplexity: float,
    tol: float = 1e-5,
    max_iter: int = 50,
) -> CalibrationResult:
    """Binary-search the Gaussian precision so the row perplexity hits target.

    A row that cannot reach the target (for instance all-equidistant points)
    falls back to the best precision found and is flagged, not raised.
    """
    sq_dists = np.asarray(sq_dists, dtype=np.float64)
    n = len(sq_dists)
    if n < 2:
        raise TooFewPoints("a distance row needs at least two points")
    if n == 2:
        p = np.zeros(2)
        p[1 - self_index] = 1.0
        return CalibrationResult(probabilities=p, beta=1.0, iterations=0, converged=True)
    if not target_perplexity < n - 1:
        raise TooFewPoints(
            f"target perplexity {target_perplexity} needs more than {n - 1} neighbors"
        )

    beta = 1.0
    beta_lo, beta_hi = 0.0, np.inf
    best = None
    for it in range(1, max_iter + 1):
        p = _row_distribution(sq_dists.copy(), beta, self_index)
        err = perplexity_of(p) - target_perplexity
        if best is None or abs(err) < best[0]:
            best = (abs(err), p, beta, it)
        if abs(err) <= tol:
            return CalibrationResult(probabilities=p, beta=beta, iterations=it, converged=True)
        if err > 0:  # too spread out: sharpen
            beta_lo = beta
            beta = beta * 2.0 if not np.isfinite(beta_hi) else (beta + beta_hi) / 2.0
        else:
            beta_hi = beta
            beta = beta / 2.0 if beta_lo == 0.0 else (beta + beta_lo) / 2.0
    _, p, beta, it = best
    log.debug("perplexity search did not converge (best residual %.3g)", best[0])
    return CalibrationResult(probabilities=p, beta=beta, iterations=max_iter, converged=False)


def squared_distances(x: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, exact and symmetric."""
    diff = x[:, None, :] - x[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def joint_probabilities(sq_dists: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized t-SNE P matrix from a squared-distance matrix."""
    n = sq_dists.shape[0]
    cond = np.zeros((n, n))
    for i in range(n):
        cond[i] = perplexity_calibration(sq_dists[i], i, perplexity).probabilities
    p = (cond + cond.T) / (2.0 * n)
    np.fill_diagonal(p, 0.0)
    return p


def _student_t_q(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    num = 1.0 / (1.0 + squared_distances(y))
    np.fill_diagonal(num, 0.0)
    q = num / num.sum()
    return q, num


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float((p[mask] * np.log(p[mask] / np.maximum(q[mask], _TINY))).sum())


def tsne_project(latents: LatentMatrix, cfg: TsneConfig = TsneConfig()) -> Embedding2D:
    """Project latent rows to 2-D; deterministic for a given seed."""
    x = latents.rows
    n = x.shape[0]
    if n < 5:
        raise TooFewPoints(f"t-SNE needs at least 5 points, got {n}")
    if cfg.perplexity >= (n - 1) / 3:
        warnings.warn(
            f"perplexity {cfg.perplexity} is large for {n} points; consider < {(n - 1) / 3:.0f}",
            stacklevel=2,
        )
    p = joint_probabilities(squared_distances(x), cfg.perplexity)

    rng = np.random.default_rng(cfg.seed)
    y = 1e-4 * rng.standard_normal((n, 2))
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    kl_history: list[float] = []

    for it in range(cfg.iters):
        exaggerate = it < cfg.exaggeration_iters
        p_eff = p * cfg.early_exaggeration if exaggerate else p
        q, num = _student_t_q(y)
        m = (p_eff - q) * num
        grad = 4.0 * (m.sum(axis=1)[:, None] * y - m @ y)

        inc = (update * grad) < 0
        gains[inc] += 0.2
        gains[~inc] *= 0.8
        np.clip(gains, 0.01, None, out=gains)
        momentum = cfg.momentum_start if it < cfg.momentum_switch_iter else cfg.momentum_final
        update = momentum * update - cfg.lr * gains * grad
        y = y + update
        y = y - y.mean(axis=0)

        kl_history.append(kl_divergence(p, q))

    if not np.all(np.isfinite(y)):
        raise FloatingPointError("t-SNE produced non-finite coordinates")
    return Embedding2D(points=y, ids=list(latents.ids), kl_history=kl_history)


def write_embedding_csv(embedding: Embedding2D, path: str | Path, labels: dict[str, list] | None = None) -> None:
    labels = labels or {}
    cols = sorted(labels)
    lines = ["series_id,x,y" + ("," + ",".join(cols) if cols else "")]
    for i, sid in enumerate(embedding.ids):
        row = [sid, repr(float(embedding.points[i, 0])), repr(float(embedding.points[i, 1]))]
        for c in cols:
            v = labels[c][i]
            row.append("" if v is None else str(v))
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
