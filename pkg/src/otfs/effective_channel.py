"""Delay-Doppler effective channel matrices.

``build_ideal`` and ``build_rect`` give the sparse NM x NM matrices for
ideal (bi-orthogonal) and rectangular pulses with a truncated inter-Doppler
window; ``build_ofdm`` gives the M x M frequency-domain matrix of one OFDM
symbol. ``dense_ideal_oracle`` and ``waveform_oracle`` are independent
brute-force references for the OTFS builders.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .channel import TapPath, apply_channel_time
from .frame import FrameParams, ParameterError
from .transforms import heisenberg_rect, isfft, sfft, wigner_rect

DENSE_ORACLE_MAX_DIM = 4096


@dataclass(frozen=True)
class IdiWindow:
    """Half-widths of the retained Doppler neighbourhood, per path.

    ``n_i`` is an int (same for every path), a sequence (one per path), or
    ``None`` for the full window spanning all N Doppler taps.
    """
    n_i: int | tuple | None = None

    @classmethod
    def full(cls) -> "IdiWindow":
        return cls(None)

    @classmethod
    def widest(cls, n_doppler: int) -> "IdiWindow":
        """Largest symmetric window, 2 n_i + 1 <= N."""
        return cls((n_doppler - 1) // 2)

    def half_width(self, path_index: int):
        if self.n_i is None:
            return None
        if isinstance(self.n_i, (int, np.integer)):
            return int(self.n_i)
        return int(self.n_i[path_index])

    def offsets(self, path_index: int, n_doppler: int) -> np.ndarray:
        ni = self.half_width(path_index)
        if ni is None:
            lo = -((n_doppler - 1) // 2)
            return np.arange(lo, lo + n_doppler)
        if ni < 0 or 2 * ni + 1 > n_doppler:
            raise ParameterError(f"IDI window 2*{ni}+1 exceeds N = {n_doppler}")
        return np.arange(-ni, ni + 1)


class SparseEffectiveChannel:
    """Sparse complex channel matrix with its factor-graph index sets.

    ``rows/cols/values`` keep every structural entry as generated (before
    duplicate coordinates are summed); ``matrix`` is the merged CSR form.
    Builders may supply the merged matrix directly and the structural
    triplets as a callable evaluated on first access.
    """

    def __init__(self, dim: int, rows=None, cols=None, values=None, *,
                 matrix=None, triplets=None):
        self.dim = int(dim)
        self._triplets = None
        self._triplet_fn = triplets
        if rows is not None:
            self._triplets = (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64),
                              np.asarray(values, dtype=complex))
        if matrix is None:
            r, c, v = self._structural()
            matrix = sp.csr_matrix((v, (r, c)), shape=(self.dim, self.dim))
        self.matrix = sp.csr_matrix(matrix)
        self.matrix.sum_duplicates()
        self.matrix.sort_indices()

    def _structural(self):
        if self._triplets is None:
            if self._triplet_fn is None:
                coo = self.matrix.tocoo()
                self._triplets = (coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data)
            else:
                self._triplets = tuple(self._triplet_fn())
        return self._triplets

    @property
    def rows(self) -> np.ndarray:
        return self._structural()[0]

    @property
    def cols(self) -> np.ndarray:
        return self._structural()[1]

    @property
    def values(self) -> np.ndarray:
        return self._structural()[2]

    @property
    def structural_row_degree(self) -> np.ndarray:
        return np.bincount(self.rows, minlength=self.dim)

    @property
    def structural_col_degree(self) -> np.ndarray:
        return np.bincount(self.cols, minlength=self.dim)

    def row_set(self, d: int) -> np.ndarray:
        """I(d): columns with an entry in row d (after merging)."""
        m = self.matrix
        return m.indices[m.indptr[d]:m.indptr[d + 1]].copy()

    def col_set(self, c: int) -> np.ndarray:
        """J(c): rows with an entry in column c (after merging)."""
        m = self.matrix.tocsc()
        return np.sort(m.indices[m.indptr[c]:m.indptr[c + 1]])

    @property
    def nnz_per_row(self) -> np.ndarray:
        return np.diff(self.matrix.indptr)

    @property
    def nnz_per_col(self) -> np.ndarray:
        return np.diff(self.matrix.tocsc().indptr)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, x):
        return self.matrix @ np.asarray(x)

    def apply(self, x) -> np.ndarray:
        """Multiply a vector or an N x M grid (returned in the same shape)."""
        x = np.asarray(x, dtype=complex)
        return (self.matrix @ x.ravel()).reshape(x.shape)

    def export_triplets(self, path) -> None:
        """Write ``row col re im`` lines of the merged matrix."""
        coo = self.matrix.tocoo()
        with open(path, "w") as fh:
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")

    @classmethod
    def from_triplets(cls, path, dim: int) -> "SparseEffectiveChannel":
        data = np.loadtxt(path, ndmin=2)
        if data.size == 0:
            return cls(dim, [], [], [])
        return cls(dim, data[:, 0].astype(int), data[:, 1].astype(int),
                   data[:, 2] + 1j * data[:, 3])


def beta(q, kappa: float, n: int):
    """Doppler spreading coefficient sum_{n'<N} exp(j2pi (q + kappa) n'/N).

    Returns N where (q + kappa) is a multiple of N. Evaluated as a ratio of
    sines (with q reduced mod N), which is exactly zero for kappa = 0 and
    stays accurate next to the peak.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    q = np.mod(np.asarray(q, dtype=float), n)
    t = q + kappa
    r = np.mod(t, n)
    at_peak = np.isclose(r, 0.0, rtol=0.0, atol=1e-12) | np.isclose(r, n, rtol=0.0, atol=1e-12)
    den = np.where(at_peak, 1.0, np.sin(np.pi * t / n))
    val = np.sin(np.pi * kappa) / den * np.exp(1j * np.pi * (kappa - t / n))
    out = np.where(at_peak, complex(n), val)
    return out if out.ndim else complex(out)


def _dd_triplets(taps, window: IdiWindow, params: FrameParams, rect: bool):
    N, M = params.n_doppler, params.m_delay
    nm = params.size
    k = np.repeat(np.arange(N), M)
    l = np.tile(np.arange(M), N)
    d = k * M + l
    rows, cols, vals = [], [], []
    for i, t in enumerate(taps):
        if t.delay_tap >= M:
            raise ParameterError(f"delay tap {t.delay_tap} >= M")
        qs = window.offsets(i, N)
        b = beta(qs, t.frac_doppler, N)
        nu_idx = t.doppler_index
        l_src = np.mod(l - t.delay_tap, M)
        if rect:
            phase = t.gain * np.exp(2j * np.pi * (l - t.delay_tap) * nu_idx / nm)
            wraps = l < t.delay_tap
        else:
            coef = t.gain * np.exp(-2j * np.pi * nu_idx * t.delay_tap / nm) / N
        for q, bq in zip(qs, b):
            k_src = np.mod(k - t.doppler_tap + q, N)
            cols.append(k_src * M + l_src)
            rows.append(d)
            if rect:
                alpha = np.where(wraps, (bq - 1.0) * np.exp(-2j * np.pi * k_src / N), bq) / N
                vals.append(phase * alpha)
            else:
                vals.append(np.full(nm, coef * bq))
    if not rows:
        return np.empty(0, int), np.empty(0, int), np.empty(0, complex)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _dd_matrix(taps, window: IdiWindow, params: FrameParams, rect: bool) -> sp.csr_matrix:
    """Merged delay-Doppler matrix, grouping paths that share a delay tap.

    Within a group every coefficient depends on the Doppler offset
    delta = [k - k_src]_N (and, for rectangular pulses, on l and k_src
    through known phases), so duplicates are summed on a length-N kernel
    instead of on NM x S triplets.
    """
    N, M = params.n_doppler, params.m_delay
    nm = params.size
    k = np.arange(N)[:, None, None]
    l = np.arange(M)[None, :, None]
    cols_parts, vals_parts = [], []
    groups: dict[int, list[int]] = {}
    for i, t in enumerate(taps):
        if t.delay_tap >= M:
            raise ParameterError(f"delay tap {t.delay_tap} >= M")
        groups.setdefault(t.delay_tap, []).append(i)
    for lt, members in sorted(groups.items()):
        mask = np.zeros(N, dtype=bool)
        ker = np.zeros((M, N), dtype=complex)       # l-dependent kernel over delta
        ker_isi = np.zeros((M, N), dtype=complex)
        for i in members:
            t = taps[i]
            qs = window.offsets(i, N)
            b = beta(qs, t.frac_doppler, N)
            delta = np.mod(t.doppler_tap - qs, N)
            mask[delta] = True
            if rect:
                ph = t.gain * np.exp(2j * np.pi * (np.arange(M) - lt) * t.doppler_index / nm)
                ker[:, delta] += ph[:, None] * (b / N)[None, :]
                ker_isi[:, delta] += ph[:, None] * ((b - 1.0) / N)[None, :]
            else:
                coef = t.gain * np.exp(-2j * np.pi * t.doppler_index * lt / nm) / N
                ker[:, delta] += coef * b[None, :]
        deltas = np.flatnonzero(mask)
        k_src = np.mod(k - deltas[None, None, :], N)                 # (N, 1, D)
        l_src = np.mod(l - lt, M)                                    # (1, M, 1)
        vals = np.broadcast_to(ker[:, deltas][None], (N, M, deltas.size))
        if rect and lt > 0:
            isi = ker_isi[:, deltas][None] * np.exp(-2j * np.pi * k_src / N)
            vals = np.where(l < lt, isi, vals)
        cols_parts.append(np.broadcast_to(k_src * M + l_src, (N, M, deltas.size)).reshape(nm, -1))
        vals_parts.append(np.asarray(vals).reshape(nm, -1))
    if not cols_parts:
        return sp.csr_matrix((nm, nm), dtype=complex)
    cols = np.concatenate(cols_parts, axis=1)
    vals = np.concatenate(vals_parts, axis=1)
    indptr = np.arange(0, cols.size + 1, cols.shape[1])
    return sp.csr_matrix((vals.ravel(), cols.ravel(), indptr), shape=(nm, nm))


def build_ideal(taps, window: IdiWindow, params: FrameParams) -> SparseEffectiveChannel:
    """Sparse delay-Doppler relation for ideal pulses (IDI only)."""
    return SparseEffectiveChannel(
        params.size, matrix=_dd_matrix(taps, window, params, rect=False),
        triplets=lambda: _dd_triplets(taps, window, params, rect=False))


def build_rect(taps, window: IdiWindow, params: FrameParams) -> SparseEffectiveChannel:
    """Sparse relation for rectangular pulses, with the ICI/ISI phase terms."""
    return SparseEffectiveChannel(
        params.size, matrix=_dd_matrix(taps, window, params, rect=True),
        triplets=lambda: _dd_triplets(taps, window, params, rect=True))


# -- brute-force references ------------------------------------------------

def delay_factor(delta_l, delay_tap: int, m_delay: int) -> complex:
    """sum_m exp(j2pi (delta_l - l_tau) m / M) by direct summation."""
    m = np.arange(m_delay)
    return complex(np.exp(2j * np.pi * (delta_l - delay_tap) * m / m_delay).sum())


def doppler_factor(delta_k, tap: TapPath, n_doppler: int) -> complex:
    """sum_n exp(-j2pi (delta_k - k_nu - kappa) n / N) by direct summation."""
    n = np.arange(n_doppler)
    return complex(np.exp(-2j * np.pi * (delta_k - tap.doppler_index) * n / n_doppler).sum())


def window_response(nu: float, tau: float, params: FrameParams) -> complex:
    """Time-frequency rectangular window w(nu, tau), summed over the full grid."""
    n = np.arange(params.n_doppler)[:, None]
    m = np.arange(params.m_delay)[None, :]
    T, df = params.symbol_duration, params.subcarrier_spacing
    return complex(np.exp(-2j * np.pi * (nu * n * T - tau * m * df)).sum())


def dense_ideal_oracle(taps, params: FrameParams) -> np.ndarray:
    """Dense NM x NM ideal-pulse matrix with no Doppler truncation.

    Entry [(k,l), (k',l')] = h_w[k-k', l-l'] / (NM), with the windowed
    response h_w evaluated by a direct double sum over the (n, m) grid.
    """
    N, M = params.n_doppler, params.m_delay
    if params.size > DENSE_ORACLE_MAX_DIM:
        raise ParameterError(f"dense oracle limited to NM <= {DENSE_ORACLE_MAX_DIM}")
    T, df = params.symbol_duration, params.subcarrier_spacing
    n = np.arange(N)[:, None, None]
    m = np.arange(M)[None, :, None]
    dl = np.arange(M)[None, None, :]
    hw = np.zeros((N, M), dtype=complex)
    for t in taps:
        nu_i = t.doppler_index / (N * T)
        tau_i = t.delay_tap / (M * df)
        for dk in range(N):
            nu = dk / (N * T) - nu_i
            tau = dl / (M * df) - tau_i
            w = np.exp(-2j * np.pi * (nu * n * T - tau * m * df)).sum(axis=(0, 1))
            hw[dk] += t.gain * np.exp(-2j * np.pi * nu_i * tau_i) * w
    k = np.repeat(np.arange(N), M)
    l = np.tile(np.arange(M), N)
    return hw[np.mod(k[:, None] - k[None, :], N), np.mod(l[:, None] - l[None, :], M)] / params.size


def waveform_oracle(x, taps, params: FrameParams) -> np.ndarray:
    """Exact sample-level OTFS response with rectangular pulses, no noise."""
    s = heisenberg_rect(isfft(x))
    r = apply_channel_time(s, taps, params)
    return sfft(wigner_rect(r, params))


def ideal_tf_response(taps, params: FrameParams) -> np.ndarray:
    """Per-(n, m) time-frequency gain of the channel for ideal pulses."""
    N, M = params.n_doppler, params.m_delay
    n = np.arange(N)[:, None]
    m = np.arange(M)[None, :]
    H = np.zeros((N, M), dtype=complex)
    for t in taps:
        v = t.doppler_index
        H += t.gain * np.exp(2j * np.pi * v * n / N) \
            * np.exp(-2j * np.pi * m * t.delay_tap / M) \
            * np.exp(-2j * np.pi * v * t.delay_tap / params.size)
    return H


def apply_ideal(x, taps, params: FrameParams) -> np.ndarray:
    """Exact ideal-pulse delay-Doppler response (every Doppler tap kept)."""
    return sfft(ideal_tf_response(taps, params) * isfft(x))


# -- OFDM ------------------------------------------------------------------

def ofdm_time_matrix(taps, params: FrameParams, symbol_start: int = 0) -> np.ndarray:
    """M x M time-domain matrix of one OFDM symbol after CP removal.

    ``symbol_start`` is the absolute sample index of the first post-CP
    sample; Doppler phase follows each sample's true transmit time.
    """
    M = params.m_delay
    p = np.arange(M)
    Ht = np.zeros((M, M), dtype=complex)
    for t in taps:
        q = np.mod(p - t.delay_tap, M)
        Ht[p, q] += t.gain * np.exp(
            2j * np.pi * t.doppler_index * (symbol_start + p - t.delay_tap) / params.size)
    return Ht


def build_ofdm(taps, params: FrameParams, cp_samples: int, b_off: int = 8,
               symbol_start: int = 0) -> SparseEffectiveChannel:
    """Frequency-domain OFDM channel W Ht W^H, sparsified to the diagonal plus
    the 2*b_off largest off-diagonal magnitudes of each row."""
    M = params.m_delay
    max_tap = max((t.delay_tap for t in taps), default=0)
    if cp_samples < max_tap:
        raise ParameterError(f"cyclic prefix {cp_samples} shorter than max delay tap {max_tap}")
    Ht = ofdm_time_matrix(taps, params, symbol_start)
    Hf = np.fft.ifft(np.fft.fft(Ht, axis=0, norm="ortho"), axis=1, norm="ortho")
    keep = min(2 * b_off, M - 1)
    mag = np.abs(Hf)
    np.fill_diagonal(mag, -1.0)
    order = np.argsort(-mag, axis=1, kind="stable")[:, :keep]
    rows = np.repeat(np.arange(M), keep + 1)
    cols = np.concatenate([np.arange(M)[:, None], order], axis=1).ravel()
    return SparseEffectiveChannel(M, rows, cols, Hf[rows, cols])
