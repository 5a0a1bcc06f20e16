"""Hot numeric kernels: numba-compiled loops with pure-numpy fallbacks.

The numba backend is used when importable unless the environment variable
``DPBARY_NO_NUMBA`` is set to a truthy value, in which case the vectorized
numpy implementations are selected instead.  Both backends implement the
same formulas; every kernel is single-threaded, so results for a fixed
backend are reproducible bit-for-bit regardless of host thread counts.

The module exposes both variants (``*_np`` / ``*_nb``) so the benchmark in
``benchmarks/bench_kernels.py`` can time them side by side.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "NUMBA_ENABLED",
    "cost_matrix",
    "sinkhorn_log",
    "dyadic_leaf_index",
    "cost_matrix_np",
    "sinkhorn_log_np",
    "dyadic_leaf_index_np",
]

_NEG_INF = -np.inf


def _env_disabled() -> bool:
    return os.environ.get("DPBARY_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------


def cost_matrix_np(x: np.ndarray, y: np.ndarray, p: float) -> np.ndarray:
    """Euclidean ground-cost matrix C[i, j] = ||x_i - y_j||_2**p."""
    xx = np.einsum("ij,ij->i", x, x)
    yy = np.einsum("ij,ij->i", y, y)
    sq = xx[:, None] + yy[None, :] - 2.0 * (x @ y.T)
    np.maximum(sq, 0.0, out=sq)
    if p == 2.0:
        return sq
    if p == 1.0:
        return np.sqrt(sq)
    return sq ** (p / 2.0)


def _lse_rows_np(A: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp, mapping all -inf rows to -inf without warnings."""
    m = np.max(A, axis=1)
    finite = m > _NEG_INF
    out = np.full(A.shape[0], _NEG_INF)
    if np.any(finite):
        Af = A[finite] - m[finite, None]
        out[finite] = m[finite] + np.log(np.sum(np.exp(Af), axis=1))
    return out


def sinkhorn_log_np(
    C: np.ndarray,
    loga: np.ndarray,
    logb: np.ndarray,
    reg: float,
    max_iters: int,
    tol: float,
):
    """Log-domain Sinkhorn scaling on the Gibbs kernel exp(-C/reg).

    Returns (alpha, beta, n_iters, err) where the transport plan is
    exp(K + alpha[:, None] + beta[None, :]) with K = -C/reg, and err is the
    L1 marginal violation of that plan when the loop stopped.
    """
    K = -C / reg
    n, m = C.shape
    alpha = np.zeros(n)
    beta = np.zeros(m)
    a = np.exp(loga)
    b = np.exp(logb)
    err = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        alpha = loga - _lse_rows_np(K + beta[None, :])
        beta = logb - _lse_rows_np((K + alpha[:, None]).T)
        # columns are exact right after the beta update; check rows
        row_log = _lse_rows_np(K + beta[None, :]) + alpha
        err = float(np.sum(np.abs(np.exp(row_log) - a)))
        if err <= tol:
            break
    col_log = _lse_rows_np((K + alpha[:, None]).T) + beta
    err = err + float(np.sum(np.abs(np.exp(col_log) - b)))
    return alpha, beta, it, err


def dyadic_leaf_index_np(points: np.ndarray, levels: int) -> np.ndarray:
    """Leaf-cell index of each point in the dyadic partition of [-1/2, 1/2]^d.

    Split axes cycle with depth (axis = step mod d); at each step the cell
    halves along that axis, appending one bit to the index.
    """
    n, d = points.shape
    lo = np.full((n, d), -0.5)
    hi = np.full((n, d), 0.5)
    idx = np.zeros(n, dtype=np.int64)
    for step in range(levels):
        ax = step % d
        mid = 0.5 * (lo[:, ax] + hi[:, ax])
        bit = points[:, ax] >= mid
        idx = (idx << 1) | bit.astype(np.int64)
        lo[bit, ax] = mid[bit]
        hi[~bit, ax] = mid[~bit]
    return idx


# ---------------------------------------------------------------------------
# numba implementations (loop style)
# ---------------------------------------------------------------------------


def _cost_matrix_loop(x, y, p):
    n = x.shape[0]
    m = y.shape[0]
    d = x.shape[1]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(d):
                diff = x[i, t] - y[j, t]
                s += diff * diff
            if p == 2.0:
                out[i, j] = s
            elif p == 1.0:
                out[i, j] = np.sqrt(s)
            else:
                out[i, j] = s ** (p / 2.0)
    return out


def _sinkhorn_log_loop(C, loga, logb, reg, max_iters, tol):
    n, m = C.shape
    K = -C / reg
    alpha = np.zeros(n)
    beta = np.zeros(m)
    a = np.exp(loga)
    b = np.exp(logb)
    err = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        # alpha update: alpha_i = loga_i - lse_j(K_ij + beta_j)
        for i in range(n):
            mx = -np.inf
            for j in range(m):
                v = K[i, j] + beta[j]
                if v > mx:
                    mx = v
            if mx == -np.inf:
                alpha[i] = -np.inf
            else:
                s = 0.0
                for j in range(m):
                    s += np.exp(K[i, j] + beta[j] - mx)
                alpha[i] = loga[i] - (mx + np.log(s))
        # beta update: beta_j = logb_j - lse_i(K_ij + alpha_i)
        for j in range(m):
            mx = -np.inf
            for i in range(n):
                v = K[i, j] + alpha[i]
                if v > mx:
                    mx = v
            if mx == -np.inf:
                beta[j] = -np.inf
            else:
                s = 0.0
                for i in range(n):
                    s += np.exp(K[i, j] + alpha[i] - mx)
                beta[j] = logb[j] - (mx + np.log(s))
        # row residual (columns are exact after the beta update)
        err = 0.0
        for i in range(n):
            mx = -np.inf
            for j in range(m):
                v = K[i, j] + beta[j]
                if v > mx:
                    mx = v
            if mx == -np.inf:
                row = 0.0
            else:
                s = 0.0
                for j in range(m):
                    s += np.exp(K[i, j] + beta[j] - mx)
                row = np.exp(mx + np.log(s) + alpha[i])
            err += abs(row - a[i])
        if err <= tol:
            break
    # add the column residual for the reported violation
    cerr = 0.0
    for j in range(m):
        mx = -np.inf
        for i in range(n):
            v = K[i, j] + alpha[i]
            if v > mx:
                mx = v
        if mx == -np.inf:
            col = 0.0
        else:
            s = 0.0
            for i in range(n):
                s += np.exp(K[i, j] + alpha[i] - mx)
            col = np.exp(mx + np.log(s) + beta[j])
        cerr += abs(col - b[j])
    return alpha, beta, it, err + cerr


def _dyadic_leaf_index_loop(points, levels):
    n, d = points.shape
    idx = np.zeros(n, dtype=np.int64)
    for i in range(n):
        code = np.int64(0)
        lo = np.full(d, -0.5)
        hi = np.full(d, 0.5)
        for step in range(levels):
            ax = step % d
            mid = 0.5 * (lo[ax] + hi[ax])
            if points[i, ax] >= mid:
                code = (code << 1) | 1
                lo[ax] = mid
            else:
                code = code << 1
                hi[ax] = mid
        idx[i] = code
    return idx


NUMBA_ENABLED = False
cost_matrix_nb = None
sinkhorn_log_nb = None
dyadic_leaf_index_nb = None

if not _env_disabled():
    try:
        from numba import njit

        cost_matrix_nb = njit(cache=True)(_cost_matrix_loop)
        sinkhorn_log_nb = njit(cache=True)(_sinkhorn_log_loop)
        dyadic_leaf_index_nb = njit(cache=True)(_dyadic_leaf_index_loop)
        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - exercised via env flag instead
        NUMBA_ENABLED = False

if NUMBA_ENABLED:
    cost_matrix = cost_matrix_nb
    sinkhorn_log = sinkhorn_log_nb
    dyadic_leaf_index = dyadic_leaf_index_nb
else:
    cost_matrix = cost_matrix_np
    sinkhorn_log = sinkhorn_log_np
    dyadic_leaf_index = dyadic_leaf_index_np
