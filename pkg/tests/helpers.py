"""Shared test utilities: seeded QP instances and an independent dense
quadratic-programming reference for the SVR dual."""

from __future__ import annotations

import numpy as np

from faceq.svr import SvrParams

QP_FIXTURE_SEEDS = tuple(range(50))


def make_qp_instance(seed: int):
    """Small random SVR training instance (<= 20 rows, <= 5 dims)."""
    rng = np.random.default_rng([9000, seed])
    n = int(rng.integers(4, 21))
    d = int(rng.integers(1, 6))
    X = rng.normal(0.0, 1.0, size=(n, d))
    y = rng.normal(0.0, 1.0, size=n)
    params = SvrParams(
        C=float(rng.choice([0.5, 1.0, 10.0, 100.0])),
        epsilon=float(rng.choice([0.01, 0.1, 0.3])),
        gamma=float(rng.choice([0.1, 0.5, 2.0])),
    )
    X_test = rng.normal(0.0, 1.0, size=(5, d))
    return X, y, params, X_test


def standardize(X: np.ndarray):
    shift = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale < 1e-12, 1.0, scale)
    return (X - shift) / scale, shift, scale


def rbf_gram(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * A @ B.T
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def _dual_value(K: np.ndarray, y: np.ndarray, beta: np.ndarray, eps: float) -> float:
    return float(-0.5 * beta @ K @ beta - eps * np.sum(np.abs(beta)) + y @ beta)


def _active_set_polish(
    K: np.ndarray, y: np.ndarray, C: float, eps: float, beta: np.ndarray
) -> np.ndarray:
    """Pin bound/zero coefficients and solve the exact KKT linear system on
    the remaining free signed set."""
    tol = 1e-6 * max(C, 1.0)
    at_upper = beta >= C - tol
    at_lower = beta <= -C + tol
    at_zero = np.abs(beta) <= tol
    free = ~(at_upper | at_lower | at_zero)
    pinned = np.where(at_upper, C, np.where(at_lower, -C, 0.0))
    idx = np.where(free)[0]
    k = len(idx)
    if k == 0:
        return pinned
    # stationarity for free i: (K b)_i + eps*sign(b_i) + bias = y_i, plus sum(b) = 0
    A = np.zeros((k + 1, k + 1))
    A[:k, :k] = K[np.ix_(idx, idx)]
    A[:k, k] = 1.0
    A[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[:k] = y[idx] - eps * np.sign(beta)[idx] - K[np.ix_(idx, ~free)] @ pinned[~free]
    rhs[k] = -np.sum(pinned[~free])
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        return beta
    out = pinned.copy()
    out[idx] = sol[:k]
    if np.any(np.abs(out) > C + 1e-9):
        return beta
    return out


def solve_svr_dual_qp(K: np.ndarray, y: np.ndarray, C: float, eps: float):
    """Dense QP reference: maximize -1/2 b'Kb - eps|b|_1 + y'b over the box
    [-C, C] with sum(b) = 0, via cvxpy at tight tolerances followed by an
    exact active-set polish. Returns (beta, objective, bias)."""
    import cvxpy as cp

    n = len(y)
    beta = cp.Variable(n)
    K_psd = cp.psd_wrap(K + 1e-12 * np.eye(n))
    objective = cp.Maximize(
        -0.5 * cp.quad_form(beta, K_psd) - eps * cp.norm1(beta) + y @ beta
    )
    constraints = [cp.sum(beta) == 0, beta <= C, beta >= -C]
    problem = cp.Problem(objective, constraints)
    problem.solve(solver="CLARABEL", tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    b = np.asarray(beta.value, dtype=float)
    polished = _active_set_polish(K, y, C, eps, b)
    if _dual_value(K, y, polished, eps) >= _dual_value(K, y, b, eps):
        b = polished
    obj = _dual_value(K, y, b, eps)
    bias = qp_bias(K, y, b, C, eps)
    return b, obj, bias


def qp_bias(K: np.ndarray, y: np.ndarray, beta: np.ndarray, C: float, eps: float) -> float:
    """Bias from the KKT feasible interval, midpoint convention."""
    err = y - K @ beta
    tol = 1e-7 * max(C, 1.0)
    alpha = np.maximum(beta, 0.0)
    alpha_star = np.maximum(-beta, 0.0)
    ups = []
    lows = []
    for i in range(len(y)):
        if alpha[i] < C - tol:
            ups.append(err[i] - eps)
        if alpha_star[i] > tol:
            ups.append(err[i] + eps)
        if alpha[i] > tol:
            lows.append(err[i] - eps)
        if alpha_star[i] < C - tol:
            lows.append(err[i] + eps)
    return 0.5 * (max(ups) + min(lows))
