"""Message-passing joint interference cancellation and symbol detection on
the sparse factor graph of ``y = H x + z``, and an exhaustive MAP oracle.

Observation nodes send Gaussian-approximated interference statistics
(mean, variance) to variable nodes; variable nodes send back damped
extrinsic pmfs over the alphabet. Likelihood products are taken in the log
domain.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .frame import Alphabet, ParameterError

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

CONVERGED = "converged"
DEGRADED = "degraded"
MAX_ITERS = "max-iters"

MAP_ORACLE_MAX_CANDIDATES = 2 ** 20


@dataclass(frozen=True)
class DetectorConfig:
    damping: float = 0.7
    max_iters: int = 30
    gamma: float = 0.1
    epsilon: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ParameterError("damping must lie in (0, 1]")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be >= 1")
        if not 0.0 < self.gamma < 1.0:
            raise ParameterError("gamma must lie in (0, 1)")
        if self.epsilon < 0:
            raise ParameterError("epsilon must be non-negative")


@dataclass
class EdgeMessages:
    """Messages on every edge (d, c) of the factor graph, in CSR edge order."""
    rows: np.ndarray        # d
    cols: np.ndarray        # c
    pmf: np.ndarray         # (E, Q) variable -> observation
    mean: np.ndarray        # (E,) interference mean seen by x[c] at y[d]
    var: np.ndarray         # (E,) interference-plus-noise variance


@dataclass
class DetectorResult:
    indices: np.ndarray
    symbols: np.ndarray
    iterations: int
    eta_trace: list = field(default_factory=list)
    stop_reason: str = MAX_ITERS


def _points(alphabet) -> np.ndarray:
    if isinstance(alphabet, Alphabet):
        return alphabet.points
    return np.asarray(alphabet, dtype=complex).ravel()


def _as_csr(H) -> sp.csr_matrix:
    if hasattr(H, "matrix") and sp.issparse(H.matrix):
        m = H.matrix
    elif sp.issparse(H):
        m = H
    else:
        m = sp.csr_matrix(np.asarray(H, dtype=complex))
    m = sp.csr_matrix(m, dtype=complex, copy=True)
    m.sum_duplicates()
    # exact-zero edges carry no information; dropping them leaves every message unchanged
    m.eliminate_zeros()
    m.sort_indices()
    return m


def _softmax_cols(a: np.ndarray) -> np.ndarray:
    """Softmax over axis 0 of a (Q, K) array."""
    e = np.exp(a - a.max(axis=0))
    e /= e.sum(axis=0)
    return e


def _iteration_numpy(rows, cols, h, y, A, pmf, noise_var, damping, col_sum):
    """One MP iteration; ``pmf`` is (Q, E) and updated in place."""
    m_e = h * (A @ pmf)
    v_e = np.maximum(np.abs(h) ** 2 * (np.abs(A) ** 2 @ pmf) - (m_e.real ** 2 + m_e.imag ** 2), 0.0)
    m_row = np.bincount(rows, m_e.real, minlength=y.size) \
        + 1j * np.bincount(rows, m_e.imag, minlength=y.size)
    v_row = np.bincount(rows, v_e, minlength=y.size)
    mean = m_row[rows] - m_e
    var = np.maximum(v_row[rows] - v_e, 0.0) + noise_var

    # log xi(e, c, k) = -|y[e] - mu[e,c] - H[e,c] a_k|^2 / var[e,c]
    hA = A[:, None] * h[None, :]
    resid = (y[rows] - mean)[None, :] - hA
    loglik = -(resid.real ** 2 + resid.imag ** 2) / var
    # per-edge shifts cancel in every normalized pmf; they bound the sums below
    loglik -= loglik.max(axis=0)
    total = (col_sum @ loglik.T).T                                 # (Q, n)
    p_tilde = _softmax_cols(total[:, cols] - loglik)
    pmf *= 1.0 - damping
    pmf += damping * p_tilde
    post = _softmax_cols(total)
    return post.max(axis=0), np.argmax(post, axis=0), mean, var


def _iteration_jit_impl(rows, cols, h, y, A, pmf, noise_var, damping, n_var, mean, var):
    """Compiled MP iteration; ``pmf`` is edge-major (E, Q) and updated in place."""
    E, Q = pmf.shape
    n_obs = y.size
    m_e = np.empty(E, dtype=np.complex128)
    v_e = np.empty(E)
    m_row = np.zeros(n_obs, dtype=np.complex128)
    v_row = np.zeros(n_obs)
    A2 = np.empty(Q)
    for k in range(Q):
        A2[k] = A[k].real ** 2 + A[k].imag ** 2
    for e in range(E):
        s = 0j
        s2 = 0.0
        for k in range(Q):
            s += pmf[e, k] * A[k]
            s2 += pmf[e, k] * A2[k]
        me = h[e] * s
        ve = (h[e].real ** 2 + h[e].imag ** 2) * s2 - (me.real ** 2 + me.imag ** 2)
        if ve < 0.0:
            ve = 0.0
        m_e[e] = me
        v_e[e] = ve
        m_row[rows[e]] += me
        v_row[rows[e]] += ve

    loglik = np.empty((E, Q))
    total = np.zeros((n_var, Q))
    for e in range(E):
        r = rows[e]
        mu = m_row[r] - m_e[e]
        vv = v_row[r] - v_e[e]
        if vv < 0.0:
            vv = 0.0
        vv += noise_var
        mean[e] = mu
        var[e] = vv
        d = y[r] - mu
        mx = -np.inf
        for k in range(Q):
            z = d - h[e] * A[k]
            val = -(z.real ** 2 + z.imag ** 2) / vv
            loglik[e, k] = val
            if val > mx:
                mx = val
        c = cols[e]
        for k in range(Q):
            loglik[e, k] -= mx
            total[c, k] += loglik[e, k]

    ext = np.empty(Q)
    for e in range(E):
        c = cols[e]
        mx = -np.inf
        for k in range(Q):
            ext[k] = total[c, k] - loglik[e, k]
            if ext[k] > mx:
                mx = ext[k]
        norm = 0.0
        for k in range(Q):
            ext[k] = np.exp(ext[k] - mx)
            norm += ext[k]
        for k in range(Q):
            pmf[e, k] = damping * ext[k] / norm + (1.0 - damping) * pmf[e, k]

    post_max = np.empty(n_var)
    post_arg = np.empty(n_var, dtype=np.int64)
    for c in range(n_var):
        mx = -np.inf
        best = 0
        for k in range(Q):
            if total[c, k] > mx:
                mx = total[c, k]
                best = k
        norm = 0.0
        for k in range(Q):
            norm += np.exp(total[c, k] - mx)
        post_max[c] = 1.0 / norm
        post_arg[c] = best
    return post_max, post_arg


_iteration_jit = numba.njit(cache=True, nogil=True)(_iteration_jit_impl) if numba is not None else None


def mp_detect(y, H, alphabet, noise_var: float, cfg: DetectorConfig = DetectorConfig(),
              callback: Callable[[int, EdgeMessages], None] | None = None,
              backend: str = "auto") -> DetectorResult:
    """Detect x from y = H x + z by message passing.

    ``H`` may be a SparseEffectiveChannel, a scipy sparse matrix or a dense
    array. ``callback(i, messages)`` is invoked after every iteration.
    ``backend`` selects the compiled kernel ("numba"), the vectorized numpy
    iteration ("numpy"), or the former when available ("auto").
    """
    if noise_var <= 0:
        raise ParameterError("noise_var must be positive")
    if backend == "auto":
        backend = "numba" if _iteration_jit is not None else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    A = _points(alphabet)
    Q = A.size
    y = np.asarray(y, dtype=complex).ravel()
    Hm = _as_csr(H)
    n = Hm.shape[1]
    if Hm.shape[0] != y.size:
        raise ParameterError(f"H has {Hm.shape[0]} rows but y has {y.size} entries")

    rows = np.repeat(np.arange(Hm.shape[0]), np.diff(Hm.indptr))
    cols = Hm.indices.astype(np.int64)
    h = Hm.data
    E = h.size
    if backend == "numpy":
        pmf = np.full((Q, E), 1.0 / Q)

        col_sum = sp.csr_matrix((np.ones(E), (cols, np.arange(E))), shape=(n, E))
    else:
        pmf = np.full((E, Q), 1.0 / Q)
        mean = np.empty(E, dtype=complex)
        var = np.empty(E)

    decisions = np.zeros(n, dtype=np.int64)
    eta_trace: list[float] = []
    reason = MAX_ITERS
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if backend == "numpy":
            post_max, post_arg, mean, var = _iteration_numpy(
                rows, cols, h, y, A, pmf, noise_var, cfg.damping, col_sum)
        else:
            post_max, post_arg = _iteration_jit(
                rows, cols, h, y, A, pmf, noise_var, cfg.damping, n, mean, var)
        eta = float(np.mean(post_max >= 1.0 - cfg.gamma))
        if it == 1 or eta > eta_trace[-1]:
            decisions = post_arg
        best_before = max(eta_trace) if eta_trace else None
        eta_trace.append(eta)
        if callback is not None:
            edge_pmf = pmf.T.copy() if backend == "numpy" else pmf.copy()
            callback(it, EdgeMessages(rows, cols, edge_pmf, mean.copy(), var.copy()))
        if eta == 1.0:
            reason = CONVERGED
            break
        if best_before is not None and eta < best_before - cfg.epsilon:
            reason = DEGRADED
            break
    return DetectorResult(decisions, A[decisions], it, eta_trace, reason)


def map_oracle(y, H, alphabet, noise_var: float, return_indices: bool = False):
    """Exhaustive joint MAP (maximum likelihood with a uniform prior).

    Ties resolve to the lexicographically lowest alphabet-index vector.
    """
    if noise_var <= 0:
        raise ParameterError("noise_var must be positive")
    A = _points(alphabet)
    Q = A.size
    Hd = H.toarray() if hasattr(H, "toarray") else np.asarray(H, dtype=complex)
    y = np.asarray(y, dtype=complex).ravel()
    n = Hd.shape[1]
    total = Q ** n
    if total > MAP_ORACLE_MAX_CANDIDATES:
        raise ParameterError(f"MAP oracle limited to {MAP_ORACLE_MAX_CANDIDATES} candidates, got Q^n = {total}")
    place = Q ** np.arange(n - 1, -1, -1)
    best_idx, best_metric = None, np.inf
    chunk = 1 << 15
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total))
        idx = (codes[:, None] // place[None, :]) % Q
        resid = y[None, :] - A[idx] @ Hd.T
        metric = (resid.real ** 2 + resid.imag ** 2).sum(axis=1) / noise_var
        j = int(np.argmin(metric))
        if metric[j] < best_metric:
            best_metric, best_idx = metric[j], idx[j]
    return best_idx if return_indices else A[best_idx]
