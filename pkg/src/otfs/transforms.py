"""Symplectic finite Fourier transforms and sampled rectangular-pulse
Heisenberg/Wigner transforms.

All transforms are unitary, so a noiseless loopback without a channel is
exactly the identity. Arrays are indexed ``[k, l]`` in the delay-Doppler
domain and ``[n, m]`` in the time-frequency domain; sample streams have
``M`` samples per time slot (``u = n * M + p``) and no cyclic prefix.
"""
from __future__ import annotations

import numpy as np

from .frame import FrameParams, ParameterError


def _as_grid(a, name="grid") -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise ParameterError(f"{name} must be a 2-D array, got shape {a.shape}")
    return a


def isfft(x) -> np.ndarray:
    """Delay-Doppler grid x[k, l] -> time-frequency grid X[n, m].

    X[n,m] = (NM)^-1/2 sum_k sum_l x[k,l] exp(j2pi(nk/N - ml/M))
    """
    x = _as_grid(x, "x")
    return np.fft.fft(np.fft.ifft(x, axis=0, norm="ortho"), axis=1, norm="ortho")


def sfft(Y) -> np.ndarray:
    """Inverse of :func:`isfft`."""
    Y = _as_grid(Y, "Y")
    return np.fft.ifft(np.fft.fft(Y, axis=0, norm="ortho"), axis=1, norm="ortho")


def heisenberg_rect(X) -> np.ndarray:
    """Rectangular-pulse modulator: one unitary M-point IDFT per time slot."""
    X = _as_grid(X, "X")
    return np.fft.ifft(X, axis=1, norm="ortho").reshape(-1)


def wigner_rect(r, params: FrameParams) -> np.ndarray:
    """Rectangular matched filter sampled on the time-frequency grid."""
    r = np.asarray(r, dtype=complex).ravel()
    if r.size != params.size:
        raise ParameterError(f"sample stream length {r.size} != NM = {params.size}")
    blocks = r.reshape(params.n_doppler, params.m_delay)
    return np.fft.fft(blocks, axis=1, norm="ortho")


def otfs_modulate(x) -> np.ndarray:
    return heisenberg_rect(isfft(x))


def otfs_demodulate(r, params: FrameParams) -> np.ndarray:
    return sfft(wigner_rect(r, params))


# -- cross-ambiguity of the rectangular pulse pair -------------------------

ICI = "ici"
ISI = "isi"


def ambiguity_support(kind: str, delay_tap: int, m_delay: int) -> range:
    """Sample indexes p contributing to the ICI or ISI ambiguity sum."""
    if kind == ICI:
        return range(0, m_delay - delay_tap)
    if kind == ISI:
        return range(m_delay - delay_tap, m_delay)
    raise ValueError(f"kind must be {ICI!r} or {ISI!r}")


def ambiguity_rect(kind: str, delta_m: int, path, params: FrameParams) -> complex:
    """Cross-ambiguity value for one path, sampled at T/M.

    ``delta_m = m - m'``. ``path`` is a :class:`~otfs.channel.TapPath`.
    Evaluated with the geometric-series closed form.
    """
    M, N = params.m_delay, params.n_doppler
    if abs(delta_m) >= M:
        raise ParameterError("|delta_m| must be < M")
    lt = path.delay_tap
    nu_norm = (path.doppler_tap + path.frac_doppler) / N   # ν/Δf
    theta = delta_m - nu_norm
    support = ambiguity_support(kind, lt, M)
    if len(support) == 0:
        return 0j
    # both sums are sum_p exp(-j2pi theta (p + offset)/M) over a contiguous p range
    start = support.start + lt - (M if kind == ISI else 0)
    count = len(support)
    z = np.exp(-2j * np.pi * theta / M)
    first = np.exp(-2j * np.pi * theta * start / M)
    if np.isclose(z, 1.0, rtol=0.0, atol=1e-14):
        total = first * count
    else:
        total = first * (z ** count - 1.0) / (z - 1.0)
    return complex(total / M)
