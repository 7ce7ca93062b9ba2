"""Epsilon-insensitive support vector regression with an RBF kernel.

The dual problem

    maximize  -1/2 b'Kb - eps*|b|_1 + y'b   over b in [-C, C]^n, sum(b) = 0

is solved by sequential two-variable optimization on the equivalent
2n-variable (alpha, alpha*) box problem, picking the maximal-violating pair
each step. Feature standardization is fit on the training rows and stored
with the model.
"""

from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    FaceqError,
    GridExhausted,
    MalformedModelFile,
    MalformedRow,
    NonFiniteInput,
    TooFewRows,
    TooFewSubjects,
    VersionMismatch,
)

MODEL_FORMAT = "faceq-svr-model"
MODEL_VERSION = 1

DEFAULT_GRID: tuple["SvrParams", ...]


class TargetKind(enum.Enum):
    HQV = "HQV"
    MQV = "MQV"


@dataclass(frozen=True)
class SvrParams:
    C: float = 1.0
    epsilon: float = 0.1
    gamma: float = 0.25

    def __post_init__(self) -> None:
        if self.C <= 0:
            raise ValueError("C must be > 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")


DEFAULT_GRID = tuple(
    SvrParams(C=c, epsilon=e, gamma=g)
    for c in (0.1, 1.0, 10.0, 100.0)
    for g in (2.0**-7, 2.0**-5, 2.0**-3, 2.0**-1, 2.0)
    for e in (0.01, 0.1, 0.3)
)


@dataclass(frozen=True)
class TrainingMeta:
    seed: int = 0
    folds: int = 0


@dataclass(frozen=True)
class QualityModel:
    params: SvrParams
    support_vectors: np.ndarray      # rows already standardized
    dual_coefs: np.ndarray
    bias: float
    feature_shift: np.ndarray
    feature_scale: np.ndarray
    target_kind: TargetKind = TargetKind.HQV
    training_meta: TrainingMeta = TrainingMeta()
    converged: bool = True
    dual_objective: float = float("nan")

    def __post_init__(self) -> None:
        for name in ("support_vectors", "dual_coefs", "feature_shift", "feature_scale"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.feature_scale <= 0):
            raise ValueError("feature scales must be positive")
        if len(self.dual_coefs):
            if np.any(np.abs(self.dual_coefs) > self.params.C + 1e-9):
                raise ValueError("dual coefficient outside [-C, C]")
            if abs(float(np.sum(self.dual_coefs))) > 1e-9:
                raise ValueError("dual coefficients do not sum to zero")

    @property
    def dim(self) -> int:
        return len(self.feature_shift)


def rbf(x: Sequence[float], y: Sequence[float], gamma: float) -> float:
    """Radial basis kernel exp(-gamma * ||x - y||^2)."""
    xv = np.asarray(x, dtype=float)
    yv = np.asarray(y, dtype=float)
    if xv.shape != yv.shape:
        raise DimensionMismatch(f"rbf dimensions differ: {xv.shape} vs {yv.shape}")
    d = xv - yv
    return float(np.exp(-gamma * np.dot(d, d)))


def _gram(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


def _smo(K: np.ndarray, y: np.ndarray, C: float, eps: float, tol: float,
         max_updates: int) -> tuple[np.ndarray, float, bool]:
    """Maximal-violating-pair SMO on the 2n-variable epsilon-SVR dual.

    Returns (beta, bias, converged). The two working variables always move
    beta up at one index and down at another, which keeps sum(beta) = 0.
    """
    n = len(y)
    alpha = np.zeros(n)       # pushes beta up
    alpha_star = np.zeros(n)  # pushes beta down
    beta = np.zeros(n)
    err = y.copy()            # y - K beta
    updates = 0
    converged = False
    while True:
        up = np.where(alpha < C, err - eps, -np.inf)
        up_star = np.where(alpha_star > 0, err + eps, -np.inf)
        low = np.where(alpha > 0, err - eps, np.inf)
        low_star = np.where(alpha_star < C, err + eps, np.inf)

        i_a, i_s = int(np.argmax(up)), int(np.argmax(up_star))
        use_star_i = up_star[i_s] > up[i_a]
        i = i_s if use_star_i else i_a
        m_val = up_star[i_s] if use_star_i else up[i_a]

        j_a, j_s = int(np.argmin(low)), int(np.argmin(low_star))
        use_star_j = low_star[j_s] < low[j_a]
        j = j_s if use_star_j else j_a
        big_m_val = low_star[j_s] if use_star_j else low[j_a]

        if m_val - big_m_val < tol:
            converged = True
            break
        if updates >= max_updates:
            break

        cap_i = alpha_star[i] if use_star_i else C - alpha[i]
        cap_j = C - alpha_star[j] if use_star_j else alpha[j]
        step_max = min(cap_i, cap_j)
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        step = step_max if eta <= 1e-12 else min((m_val - big_m_val) / eta, step_max)
        if step <= 0.0:
            break

        if use_star_i:
            alpha_star[i] -= step
        else:
            alpha[i] += step
        if use_star_j:
            alpha_star[j] += step
        else:
            alpha[j] -= step
        beta[i] += step
        beta[j] -= step
        if i != j:
            err -= step * (K[:, i] - K[:, j])
        updates += 2

    bias = 0.5 * (m_val + big_m_val)
    return beta, float(bias), converged


def dual_objective(K: np.ndarray, y: np.ndarray, beta: np.ndarray, eps: float) -> float:
    return float(-0.5 * beta @ K @ beta - eps * np.sum(np.abs(beta)) + y @ beta)


def train(
    X: Sequence[Sequence[float]] | np.ndarray,
    y: Sequence[float] | np.ndarray,
    params: SvrParams,
    tol: float = 1e-6,
    max_updates: int = 10_000_000,
    target_kind: TargetKind = TargetKind.HQV,
    training_meta: TrainingMeta = TrainingMeta(),
) -> QualityModel:
    """Fit epsilon-SVR on feature rows; tol bounds the final KKT violation.

    The default tol keeps the dual objective within 1e-6 of a dense QP
    reference on small instances (a looser 1e-3 stop provably does not).
    """
    Xm = np.asarray(X, dtype=float)
    yv = np.asarray(y, dtype=float)
    if Xm.ndim != 2:
        raise DimensionMismatch("X must be a 2-D array of feature rows")
    if Xm.shape[0] != yv.shape[0]:
        raise DimensionMismatch("X and y row counts differ")
    if Xm.shape[0] < 2:
        raise TooFewRows(f"need at least 2 training rows, got {Xm.shape[0]}")
    if not (np.all(np.isfinite(Xm)) and np.all(np.isfinite(yv))):
        raise NonFiniteInput("training data contains non-finite values")

    shift = Xm.mean(axis=0)
    scale = Xm.std(axis=0)
    scale[scale < 1e-12] = 1.0
    Xs = (Xm - shift) / scale

    K = _gram(Xs, Xs, params.gamma)
    beta, bias, converged = _smo(K, yv, params.C, params.epsilon, tol, max_updates)
    obj = dual_objective(K, yv, beta, params.epsilon)

    sv_mask = beta != 0.0
    return QualityModel(
        params=params,
        support_vectors=Xs[sv_mask],
        dual_coefs=beta[sv_mask],
        bias=bias,
        feature_shift=shift,
        feature_scale=scale,
        target_kind=target_kind,
        training_meta=training_meta,
        converged=converged,
        dual_objective=obj,
    )


def predict_many(model: QualityModel, X: Sequence[Sequence[float]] | np.ndarray) -> np.ndarray:
    Xm = np.asarray(X, dtype=float)
    if Xm.ndim != 2 or Xm.shape[1] != model.dim:
        raise DimensionMismatch(
            f"feature dimension {Xm.shape[-1] if Xm.ndim else '?'} does not match model dim {model.dim}"
        )
    Xs = (Xm - model.feature_shift) / model.feature_scale
    if len(model.dual_coefs) == 0:
        return np.full(Xm.shape[0], model.bias)
    K = _gram(Xs, model.support_vectors, model.params.gamma)
    return K @ model.dual_coefs + model.bias


def predict(model: QualityModel, x: Sequence[float]) -> float:
    xv = np.asarray(x, dtype=float)
    if xv.ndim != 1 or xv.shape[0] != model.dim:
        raise DimensionMismatch(
            f"feature dimension {xv.shape} does not match model dim {model.dim}"
        )
    return float(predict_many(model, xv[None, :])[0])


# ---------------------------------------------------------------------------
# subject-disjoint cross-validation
# ---------------------------------------------------------------------------

def subject_disjoint_folds(
    subject_ids: Sequence[str], k: int, seed: int
) -> np.ndarray:
    """Assign each row to one of k folds so that no subject straddles folds;
    fold sizes are balanced by subject count within +-1."""
    if k < 2:
        raise ValueError("k must be >= 2")
    subjects = list(dict.fromkeys(subject_ids))
    if len(subjects) < k:
        raise TooFewSubjects(f"{len(subjects)} distinct subjects < {k} folds")
    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    order = rng.permutation(len(subjects))
    fold_of: dict[str, int] = {}
    for fold, chunk in enumerate(np.array_split(order, k)):
        for idx in chunk:
            fold_of[subjects[int(idx)]] = fold
    return np.array([fold_of[s] for s in subject_ids], dtype=int)


@dataclass(frozen=True)
class CellScore:
    params: SvrParams
    mean_rho: float
    fold_rhos: tuple[float, ...]
    mean_mse: float
    failed: bool = False
    error: str | None = None


@dataclass(frozen=True)
class GridSearchResult:
    best_params: SvrParams
    cells: tuple[CellScore, ...]
    model: QualityModel


def grid_search(
    X: Sequence[Sequence[float]] | np.ndarray,
    y: Sequence[float] | np.ndarray,
    subject_ids: Sequence[str],
    grid: Sequence[SvrParams] = DEFAULT_GRID,
    k: int = 5,
    seed: int = 0,
    tol: float = 1e-6,
    target_kind: TargetKind = TargetKind.HQV,
    jobs: int = 1,
) -> GridSearchResult:
    """Score every grid cell by mean validation Spearman rho across k
    subject-disjoint folds, then retrain the winning cell on all rows.

    Ties are broken toward smaller C, then smaller gamma, then larger epsilon.
    Cells whose training fails anywhere are excluded; if every cell fails the
    search raises GridExhausted.
    """
    from .evaluation import spearman

    if not grid:
        raise GridExhausted("empty parameter grid")
    Xm = np.asarray(X, dtype=float)
    yv = np.asarray(y, dtype=float)
    folds = subject_disjoint_folds(subject_ids, k, seed)

    def score_cell(params: SvrParams) -> CellScore:
        rhos, mses = [], []
        try:
            for fold in range(k):
                val = folds == fold
                model = train(Xm[~val], yv[~val], params, tol=tol)
                pred = predict_many(model, Xm[val])
                rhos.append(spearman(yv[val], pred))
                mses.append(float(np.mean((pred - yv[val]) ** 2)))
        except (FaceqError, ValueError) as exc:
            return CellScore(params, float("nan"), (), float("nan"), failed=True, error=str(exc))
        return CellScore(params, float(np.mean(rhos)), tuple(rhos), float(np.mean(mses)))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            cells = tuple(pool.map(score_cell, grid))
    else:
        cells = tuple(score_cell(p) for p in grid)

    viable = [c for c in cells if not c.failed]
    if not viable:
        raise GridExhausted("every grid cell failed")
    best = max(
        viable,
        key=lambda c: (c.mean_rho, -c.params.C, -c.params.gamma, c.params.epsilon),
    )
    model = train(
        Xm,
        yv,
        best.params,
        tol=tol,
        target_kind=target_kind,
        training_meta=TrainingMeta(seed=seed, folds=k),
    )
    return GridSearchResult(best_params=best.params, cells=cells, model=model)


def load_grid(path: str | Path) -> tuple[SvrParams, ...]:
    """Read a grid file: CSV with header C,gamma,epsilon."""
    import csv

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["C", "gamma", "epsilon"]:
            raise MalformedRow(f"{path}: bad header {header!r}")
        cells = []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != 3:
                raise MalformedRow(f"{path}: row {row_no}: expected 3 fields")
            try:
                cells.append(SvrParams(C=float(row[0]), gamma=float(row[1]), epsilon=float(row[2])))
            except ValueError as exc:
                raise MalformedRow(f"{path}: row {row_no}: {exc}") from None
    return tuple(cells)


# ---------------------------------------------------------------------------
# model persistence
# ---------------------------------------------------------------------------

def save_model(model: QualityModel, path: str | Path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "params": {"C": model.params.C, "epsilon": model.params.epsilon, "gamma": model.params.gamma},
        "feature_shift": list(model.feature_shift),
        "feature_scale": list(model.feature_scale),
        "support_vectors": [list(row) for row in model.support_vectors],
        "dual_coefs": list(model.dual_coefs),
        "bias": model.bias,
        "target_kind": model.target_kind.value,
        "training_meta": {"seed": model.training_meta.seed, "folds": model.training_meta.folds},
        "converged": model.converged,
        "dual_objective": None if math.isnan(model.dual_objective) else model.dual_objective,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path: str | Path) -> QualityModel:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedModelFile(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise MalformedModelFile(f"{path}: not a {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_VERSION:
        raise VersionMismatch(
            f"{path}: format version {doc.get('version')!r}, expected {MODEL_VERSION}"
        )
    try:
        params = SvrParams(**doc["params"])
        sv = np.array(doc["support_vectors"], dtype=float).reshape(
            len(doc["dual_coefs"]), len(doc["feature_shift"])
        )
        obj = doc.get("dual_objective")
        return QualityModel(
            params=params,
            support_vectors=sv,
            dual_coefs=np.array(doc["dual_coefs"], dtype=float),
            bias=float(doc["bias"]),
            feature_shift=np.array(doc["feature_shift"], dtype=float),
            feature_scale=np.array(doc["feature_scale"], dtype=float),
            target_kind=TargetKind(doc["target_kind"]),
            training_meta=TrainingMeta(**doc["training_meta"]),
            converged=bool(doc["converged"]),
            dual_objective=float("nan") if obj is None else float(obj),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedModelFile(f"{path}: {exc}") from None
