"""Infer a complete worker x image rating matrix from sparse coarse pairwise
comparisons, then normalize per worker and aggregate to one value per image.

The completion is a low-rank factorization F = U V^T fit by full-batch
gradient descent with a backtracking step size, using a squared-hinge loss on
"better" comparisons and a weighted squared pull toward equality on SIMILAR
responses. The objective trace is recorded and is non-increasing across
accepted steps.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import QualityAssignment
from .errors import MalformedRow, TooFewWorkers, UnknownReference, WorkerWithoutData
from .pairwise import Coarse, ComparisonSet

AGGREGATORS = ("median", "mean", "min", "max")


@dataclass(frozen=True)
class CompletionParams:
    rank: int = 5
    margin: float = 1.0
    similar_weight: float = 1.0
    l2_reg: float = 0.01
    learn_rate: float = 0.05
    max_iters: int = 5000
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.margin <= 0:
            raise ValueError("margin must be > 0")
        if self.similar_weight < 0 or self.l2_reg < 0:
            raise ValueError("similar_weight and l2_reg must be >= 0")
        if self.learn_rate <= 0 or self.tol <= 0 or self.max_iters < 1:
            raise ValueError("learn_rate, tol, max_iters must be positive")


@dataclass(frozen=True)
class RatingMatrix:
    """Completed ratings: one row per worker, one column per image."""

    values: np.ndarray
    worker_ids: tuple[str, ...]
    image_ids: tuple[str, ...]
    rank_used: int
    uncovered_images: tuple[str, ...] = ()
    objective_trace: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.worker_ids), len(self.image_ids)):
            raise ValueError("values shape does not match id lists")
        if not np.all(np.isfinite(values)):
            raise ValueError("rating matrix contains non-finite entries")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_workers(self) -> int:
        return len(self.worker_ids)

    @property
    def n_images(self) -> int:
        return len(self.image_ids)


def required_comparisons(rank: int, n_images: int) -> int:
    """Advisory per-worker sample size: ceil(rank * log10(n_images))."""
    if rank < 0 or n_images < 1:
        raise ValueError("need rank >= 0 and n_images >= 1")
    if rank == 0 or n_images == 1:
        return 0
    return math.ceil(rank * math.log10(n_images))


def _id_rng(kind: str, token: str, seed: int) -> np.random.Generator:
    digest = hashlib.sha256(f"{kind}:{token}".encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 8], "little") for i in range(0, 32, 8)]
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, *words])


def _init_factor(kind: str, ids: Sequence[str], rank: int, seed: int) -> np.ndarray:
    # Per-id seeding keeps each row's init independent of list order, so
    # permuting image_ids permutes the completed columns identically.
    rows = [_id_rng(kind, token, seed).uniform(-0.1, 0.1, size=rank) for token in ids]
    return np.vstack(rows)


def complete_matrix(
    comparisons: ComparisonSet,
    worker_ids: Sequence[str],
    image_ids: Sequence[str],
    params: CompletionParams = CompletionParams(),
) -> RatingMatrix:
    """Fit the low-rank rating matrix from coarse pairwise comparisons.

    Minimizes, over U (workers x r) and V (images x r):

        sum over (w, l, r, c) of loss(c, F[w,l] - F[w,r]) + l2 * (|U|^2 + |V|^2)

    with loss(LEFT, d) = max(0, margin - d)^2, loss(RIGHT, d) mirrored, and
    loss(SIMILAR, d) = similar_weight * d^2. Steps that would increase the
    objective are rejected and retried with a halved learning rate.
    """
    workers = tuple(worker_ids)
    images = tuple(image_ids)
    n, m = len(workers), len(images)
    if n < 1 or m < 2:
        raise ValueError("need at least 1 worker and 2 images")
    w_index = {w: i for i, w in enumerate(workers)}
    i_index = {im: j for j, im in enumerate(images)}
    if len(w_index) != n or len(i_index) != m:
        raise ValueError("worker_ids and image_ids must be unique")

    w_idx = np.empty(len(comparisons.rows), dtype=np.intp)
    l_idx = np.empty(len(comparisons.rows), dtype=np.intp)
    r_idx = np.empty(len(comparisons.rows), dtype=np.intp)
    side = np.zeros(len(comparisons.rows))  # +1 LEFT, -1 RIGHT, 0 SIMILAR
    for k, row in enumerate(comparisons.rows):
        if row.rater_id not in w_index:
            raise UnknownReference(f"comparison {k} names unknown worker {row.rater_id!r}")
        if row.left_id not in i_index:
            raise UnknownReference(f"comparison {k} names unknown image {row.left_id!r}")
        if row.right_id not in i_index:
            raise UnknownReference(f"comparison {k} names unknown image {row.right_id!r}")
        w_idx[k] = w_index[row.rater_id]
        l_idx[k] = i_index[row.left_id]
        r_idx[k] = i_index[row.right_id]
        side[k] = 1.0 if row.coarse is Coarse.LEFT else -1.0 if row.coarse is Coarse.RIGHT else 0.0

    counts = np.bincount(w_idx, minlength=n)
    for i, count in enumerate(counts):
        if count == 0:
            raise WorkerWithoutData(f"worker {workers[i]!r} has no comparisons")

    covered = np.zeros(m, dtype=bool)
    covered[l_idx] = True
    covered[r_idx] = True
    uncovered = tuple(images[j] for j in range(m) if not covered[j])

    rank = min(params.rank, n, m)
    U = _init_factor("worker", workers, rank, params.seed)
    V = _init_factor("image", images, rank, params.seed)
    is_similar = side == 0.0
    is_better = ~is_similar
    sw = params.similar_weight
    lam = params.l2_reg

    def objective_and_grads(U: np.ndarray, V: np.ndarray):
        D = V[l_idx] - V[r_idx]
        delta = np.einsum("ij,ij->i", U[w_idx], D)
        resid = params.margin - side * delta
        active = is_better & (resid > 0)
        dloss = np.where(active, -2.0 * side * resid, 0.0)
        dloss += np.where(is_similar, 2.0 * sw * delta, 0.0)
        obj = float(
            np.sum(resid[active] ** 2)
            + sw * np.sum(delta[is_similar] ** 2)
            + lam * (np.sum(U * U) + np.sum(V * V))
        )
        gU = np.empty_like(U)
        gV = np.empty_like(V)
        contrib_U = dloss[:, None] * D
        contrib_V = dloss[:, None] * U[w_idx]
        for k in range(rank):
            gU[:, k] = np.bincount(w_idx, weights=contrib_U[:, k], minlength=n)
            gV[:, k] = np.bincount(l_idx, weights=contrib_V[:, k], minlength=m)
            gV[:, k] -= np.bincount(r_idx, weights=contrib_V[:, k], minlength=m)
        gU += 2.0 * lam * U
        gV += 2.0 * lam * V
        return obj, gU, gV

    lr = params.learn_rate
    obj, gU, gV = objective_and_grads(U, V)
    trace = [obj]
    for _ in range(params.max_iters):
        U_new = U - lr * gU
        V_new = V - lr * gV
        obj_new, gU_new, gV_new = objective_and_grads(U_new, V_new)
        if obj_new <= obj:
            rel_change = (obj - obj_new) / max(abs(obj), 1e-30)
            U, V, obj, gU, gV = U_new, V_new, obj_new, gU_new, gV_new
            trace.append(obj)
            lr *= 1.2
            if rel_change < params.tol:
                break
        else:
            lr *= 0.5
            if lr < 1e-18:
                break

    return RatingMatrix(
        values=U @ V.T,
        worker_ids=workers,
        image_ids=images,
        rank_used=rank,
        uncovered_images=uncovered,
        objective_trace=tuple(trace),
    )


def normalize_worker_rows(matrix: RatingMatrix) -> RatingMatrix:
    """Min-max scale each worker's row to [0, 1]; constant rows map to 0.5."""
    values = np.array(matrix.values, dtype=float)
    lo = values.min(axis=1, keepdims=True)
    hi = values.max(axis=1, keepdims=True)
    span = hi - lo
    flat = (span == 0.0).ravel()
    span[flat] = 1.0
    out = (values - lo) / span
    out[flat, :] = 0.5
    return RatingMatrix(
        values=out,
        worker_ids=matrix.worker_ids,
        image_ids=matrix.image_ids,
        rank_used=matrix.rank_used,
        uncovered_images=matrix.uncovered_images,
        objective_trace=matrix.objective_trace,
    )


def aggregate(matrix: RatingMatrix, how: str = "median") -> QualityAssignment:
    """Collapse worker rows to one quality per image (median/mean/min/max)."""
    if how not in AGGREGATORS:
        raise ValueError(f"unknown aggregator {how!r}, expected one of {AGGREGATORS}")
    fn = {"median": np.median, "mean": np.mean, "min": np.min, "max": np.max}[how]
    col = fn(matrix.values, axis=0)
    return QualityAssignment({im: float(col[j]) for j, im in enumerate(matrix.image_ids)})


def aggregate_median(matrix: RatingMatrix) -> QualityAssignment:
    return aggregate(matrix, "median")


@dataclass(frozen=True)
class ConcordanceSummary:
    """Spearman rho for every worker pair plus its mean and histogram."""

    pairs: tuple[tuple[str, str, float], ...]
    mean_rho: float
    hist_counts: tuple[int, ...]
    hist_edges: tuple[float, ...]


def worker_concordance(matrix: RatingMatrix, bins: int = 20) -> ConcordanceSummary:
    from .evaluation import spearman

    if matrix.n_workers < 2:
        raise TooFewWorkers("concordance needs at least 2 workers")
    pairs: list[tuple[str, str, float]] = []
    for a in range(matrix.n_workers):
        for b in range(a + 1, matrix.n_workers):
            rho = spearman(matrix.values[a], matrix.values[b])
            pairs.append((matrix.worker_ids[a], matrix.worker_ids[b], rho))
    rhos = np.array([p[2] for p in pairs])
    counts, edges = np.histogram(rhos, bins=bins, range=(-1.0, 1.0))
    return ConcordanceSummary(
        pairs=tuple(pairs),
        mean_rho=float(rhos.mean()),
        hist_counts=tuple(int(c) for c in counts),
        hist_edges=tuple(float(e) for e in edges),
    )


# ---------------------------------------------------------------------------
# long-form persistence
# ---------------------------------------------------------------------------

def save_rating_matrix(matrix: RatingMatrix, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["worker_id", "image_id", "rating"])
        for i, worker in enumerate(matrix.worker_ids):
            for j, image in enumerate(matrix.image_ids):
                writer.writerow([worker, image, repr(float(matrix.values[i, j]))])


def load_rating_matrix(path: str | Path) -> RatingMatrix:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(f"{path}: empty file, expected a header row") from None
        if header != ["worker_id", "image_id", "rating"]:
            raise MalformedRow(f"{path}: bad header {header!r}")
        entries: dict[tuple[str, str], float] = {}
        workers: dict[str, None] = {}
        images: dict[str, None] = {}
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != 3:
                raise MalformedRow(f"{path}: row {row_no}: expected 3 fields, got {len(row)}")
            worker, image, tok = row
            try:
                rating = float(tok)
            except ValueError:
                raise MalformedRow(f"{path}: row {row_no}: non-numeric rating {tok!r}") from None
            workers[worker] = None
            images[image] = None
            entries[(worker, image)] = rating
    worker_ids = tuple(workers)
    image_ids = tuple(images)
    values = np.empty((len(worker_ids), len(image_ids)))
    for i, worker in enumerate(worker_ids):
        for j, image in enumerate(image_ids):
            key = (worker, image)
            if key not in entries:
                raise MalformedRow(f"{path}: missing rating for {key!r}")
            values[i, j] = entries[key]
    return RatingMatrix(
        values=values,
        worker_ids=worker_ids,
        image_ids=image_ids,
        rank_used=min(len(worker_ids), len(image_ids)),
    )
