"""Frame geometry, QAM alphabets and delay-Doppler grid indexing.

Vectorized delay-Doppler symbols use the Doppler-major order
``c = k * M + l`` everywhere in this package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ParameterError(ValueError):
    """Raised when frame or channel parameters violate a hard constraint."""


@dataclass(frozen=True)
class FrameParams:
    n_doppler: int                  # N, time slots / Doppler bins
    m_delay: int                    # M, subcarriers / delay bins
    subcarrier_spacing: float = 15e3
    symbol_duration: float | None = None
    carrier_freq: float = 4e9

    def __post_init__(self):
        if self.n_doppler < 1 or self.m_delay < 1:
            raise ParameterError("n_doppler and m_delay must be >= 1")
        if self.subcarrier_spacing <= 0 or self.carrier_freq <= 0:
            raise ParameterError("subcarrier_spacing and carrier_freq must be positive")
        if self.symbol_duration is None:
            object.__setattr__(self, "symbol_duration", 1.0 / self.subcarrier_spacing)
        elif not math.isclose(self.symbol_duration * self.subcarrier_spacing, 1.0,
                              rel_tol=1e-12, abs_tol=0.0):
            raise ParameterError("symbol_duration must equal 1/subcarrier_spacing")

    @property
    def size(self) -> int:
        return self.n_doppler * self.m_delay

    @property
    def frame_duration(self) -> float:
        return self.n_doppler * self.symbol_duration

    @property
    def bandwidth(self) -> float:
        return self.m_delay * self.subcarrier_spacing

    @property
    def sample_period(self) -> float:
        return 1.0 / self.bandwidth

    @property
    def delay_resolution(self) -> float:
        return 1.0 / (self.m_delay * self.subcarrier_spacing)

    @property
    def doppler_resolution(self) -> float:
        return 1.0 / (self.n_doppler * self.symbol_duration)


@dataclass(frozen=True)
class ValidationResult:
    delay_margin: float     # 1/Δf − τ_max  (seconds)
    doppler_margin: float   # 1/T − ν_max   (Hz)

    @property
    def ok(self) -> bool:
        return self.delay_margin > 0 and self.doppler_margin > 0


def validate_params(params: FrameParams, tau_max: float, nu_max: float) -> ValidationResult:
    """Check that the channel spread is supportable by the grid.

    Raises ParameterError naming the violated bound; otherwise returns the
    remaining delay and Doppler margins.
    """
    result = ValidationResult(
        delay_margin=1.0 / params.subcarrier_spacing - tau_max,
        doppler_margin=1.0 / params.symbol_duration - abs(nu_max),
    )
    if result.delay_margin <= 0:
        raise ParameterError(
            f"delay bound violated: tau_max={tau_max:g} s >= 1/df={1.0 / params.subcarrier_spacing:g} s")
    if result.doppler_margin <= 0:
        raise ParameterError(
            f"Doppler bound violated: nu_max={nu_max:g} Hz >= 1/T={1.0 / params.symbol_duration:g} Hz")
    return result


@dataclass(frozen=True)
class Alphabet:
    """Square Gray-mapped QAM constellation with unit average energy.

    ``points[j]`` carries the bit label ``j`` written MSB first.
    """
    points: np.ndarray
    bits_per_symbol: int
    labels: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.points)


def _gray_to_binary(g: np.ndarray) -> np.ndarray:
    b = g.copy()
    shift = g >> 1
    while np.any(shift):
        b ^= shift
        shift >>= 1
    return b


def make_alphabet(q: int) -> Alphabet:
    if q not in (4, 16, 64):
        raise ParameterError(f"unsupported alphabet size {q}; expected 4, 16 or 64")
    bps = int(math.log2(q))
    half = bps // 2
    side = 1 << half
    labels = np.arange(q)
    i_bits = labels >> half
    q_bits = labels & (side - 1)
    # Gray label -> PAM level index, then level index -> amplitude.
    i_lvl = 2 * _gray_to_binary(i_bits) - (side - 1)
    q_lvl = 2 * _gray_to_binary(q_bits) - (side - 1)
    scale = math.sqrt(2.0 * (q - 1) / 3.0)
    points = (i_lvl + 1j * q_lvl) / scale
    label_bits = ((labels[:, None] >> np.arange(bps - 1, -1, -1)) & 1).astype(np.uint8)
    points.setflags(write=False)
    label_bits.setflags(write=False)
    return Alphabet(points=points, bits_per_symbol=bps, labels=label_bits)


def bits_to_indices(bits, alphabet: Alphabet) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64).ravel()
    k = alphabet.bits_per_symbol
    if bits.size % k:
        raise ParameterError(f"bit length {bits.size} is not a multiple of {k}")
    weights = 1 << np.arange(k - 1, -1, -1)
    return bits.reshape(-1, k) @ weights


def indices_to_bits(indices, alphabet: Alphabet) -> np.ndarray:
    return alphabet.labels[np.asarray(indices).ravel()].ravel()


def map_bits(bits, alphabet: Alphabet, params: FrameParams) -> np.ndarray:
    """Map ``NM * log2(Q)`` bits onto an N x M delay-Doppler symbol grid."""
    bits = np.asarray(bits).ravel()
    expected = params.size * alphabet.bits_per_symbol
    if bits.size != expected:
        raise ParameterError(f"expected {expected} bits, got {bits.size}")
    idx = bits_to_indices(bits, alphabet)
    return alphabet.points[idx].reshape(params.n_doppler, params.m_delay)


def nearest_indices(symbols, alphabet: Alphabet) -> np.ndarray:
    s = np.asarray(symbols).ravel()
    return np.argmin(np.abs(s[:, None] - alphabet.points[None, :]), axis=1)


def demap_symbols(symbols, alphabet: Alphabet) -> np.ndarray:
    """Hard-decision demapping (nearest point) back to the bit sequence."""
    return indices_to_bits(nearest_indices(symbols, alphabet), alphabet)


def linear_index(k, l, params: FrameParams):
    return np.asarray(k) * params.m_delay + np.asarray(l)


def grid_index(c, params: FrameParams):
    return np.divmod(np.asarray(c), params.m_delay)
