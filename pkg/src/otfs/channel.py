"""Sparse delay-Doppler channels: profiles, random realizations, tap
quantization, sample-level application and AWGN."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .frame import FrameParams, ParameterError

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class PathSpec:
    delay: float        # seconds
    doppler: float      # Hz
    gain: complex

    def __post_init__(self):
        if self.delay < 0:
            raise ParameterError("path delay must be non-negative")


@dataclass(frozen=True)
class TapPath:
    delay_tap: int
    doppler_tap: int
    frac_doppler: float
    gain: complex

    def __post_init__(self):
        if not (-0.5 < self.frac_doppler <= 0.5):
            raise ParameterError(f"frac_doppler {self.frac_doppler} outside (-1/2, 1/2]")
        if self.delay_tap < 0:
            raise ParameterError("delay_tap must be non-negative")

    @property
    def doppler_index(self) -> float:
        """Doppler in units of 1/(NT), i.e. k + kappa."""
        return self.doppler_tap + self.frac_doppler


@dataclass(frozen=True)
class ChannelProfile:
    name: str
    delays: tuple          # seconds
    powers_db: tuple
    normalize: bool = True
    powers: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.delays) == 0:
            raise ParameterError(f"profile {self.name!r} has no paths")
        if len(self.delays) != len(self.powers_db):
            raise ParameterError(f"profile {self.name!r}: delays and powers differ in length")
        lin = 10.0 ** (np.asarray(self.powers_db, dtype=float) / 10.0)
        if self.normalize:
            lin = lin / lin.sum()
        lin.setflags(write=False)
        object.__setattr__(self, "powers", lin)

    @property
    def max_delay(self) -> float:
        return max(self.delays)

    @classmethod
    def from_ns(cls, name, delays_ns, powers_db, normalize=True):
        return cls(name, tuple(float(d) * 1e-9 for d in delays_ns),
                   tuple(float(p) for p in powers_db), normalize)


# 3GPP TS 36.101 Annex B.2.1 power-delay profiles
BUILTIN_PROFILES = {
    "EPA": ChannelProfile.from_ns(
        "EPA", [0, 30, 70, 90, 110, 190, 410],
        [0.0, -1.0, -2.0, -3.0, -8.0, -17.2, -20.8]),
    "EVA": ChannelProfile.from_ns(
        "EVA", [0, 30, 150, 310, 370, 710, 1090, 1730, 2510],
        [0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9]),
    "ETU": ChannelProfile.from_ns(
        "ETU", [0, 50, 120, 200, 230, 500, 1600, 2300, 5000],
        [-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, -3.0, -5.0, -7.0]),
}


def load_profiles(entries) -> dict:
    """Build profiles from config entries ``{name: {delays_ns, powers_db}}``
    (or a list of dicts with a ``name`` key)."""
    if isinstance(entries, dict):
        entries = [dict(v, name=k) for k, v in entries.items()]
    out = {}
    for e in entries:
        out[e["name"]] = ChannelProfile.from_ns(
            e["name"], e["delays_ns"], e["powers_db"], e.get("normalize", True))
    return out


def get_profile(name: str, extra: dict | None = None) -> ChannelProfile:
    table = dict(BUILTIN_PROFILES)
    if extra:
        table.update(extra)
    try:
        return table[name]
    except KeyError:
        raise ParameterError(f"unknown channel profile {name!r}; known: {sorted(table)}") from None


def max_doppler(speed_kmph: float, carrier_freq: float) -> float:
    return (speed_kmph / 3.6) * carrier_freq / SPEED_OF_LIGHT


def generate_channel(profile: ChannelProfile, speed_kmph: float, params: FrameParams,
                     rng: np.random.Generator) -> list[PathSpec]:
    """Draw one Rayleigh realization with Doppler nu_max * cos(theta).

    The random draws do not depend on ``speed_kmph``, so realizations with a
    common rng state differ across speeds only through the Doppler scale.
    """
    if speed_kmph < 0:
        raise ParameterError("speed must be non-negative")
    p = len(profile.delays)
    g = (rng.standard_normal(p) + 1j * rng.standard_normal(p)) * np.sqrt(profile.powers / 2.0)
    theta = rng.uniform(0.0, np.pi, size=p)
    nu = max_doppler(speed_kmph, params.carrier_freq) * np.cos(theta)
    return [PathSpec(float(d), float(v), complex(h))
            for d, v, h in zip(profile.delays, nu, g)]


def quantize_taps(path: PathSpec, params: FrameParams) -> TapPath:
    if path.delay >= 1.0 / params.subcarrier_spacing:
        raise ParameterError(f"path delay {path.delay:g} s exceeds 1/df")
    lt = int(math.floor(path.delay * params.bandwidth + 0.5))
    if lt >= params.m_delay:
        raise ParameterError(f"delay tap {lt} >= M = {params.m_delay}")
    x = path.doppler * params.frame_duration
    k = int(math.ceil(x - 0.5))
    kappa = x - k
    # float rounding can push kappa to just below -1/2
    if kappa <= -0.5:
        k -= 1
        kappa += 1.0
    return TapPath(lt, k, float(kappa), path.gain)


def apply_channel_time(s, taps, params: FrameParams) -> np.ndarray:
    """r[u] = sum_i h_i s[u - l_i] exp(j2pi nu_i (u - l_i) / (M df)); silence
    precedes the stream. Works for any stream length (time index u is
    absolute from the start of ``s``)."""
    s = np.asarray(s, dtype=complex).ravel()
    n = s.size
    u = np.arange(n)
    r = np.zeros(n, dtype=complex)
    nm = params.size
    for t in taps:
        lt = t.delay_tap
        if lt >= n:
            continue
        ramp = np.exp(2j * np.pi * t.doppler_index * (u[lt:] - lt) / nm)
        r[lt:] += t.gain * s[: n - lt] * ramp
    return r


def noise_variance(snr_db: float) -> float:
    return 10.0 ** (-snr_db / 10.0)


def complex_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance circularly-symmetric complex Gaussian samples."""
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)


def add_awgn(r, snr_db: float | None, rng: np.random.Generator) -> np.ndarray:
    """Add noise of variance 10^(-snr/10). ``None`` or ``+inf`` means noiseless."""
    r = np.asarray(r, dtype=complex)
    if snr_db is None or snr_db == math.inf:
        return r.copy()
    if not math.isfinite(snr_db):
        raise ParameterError("snr_db must be finite or +inf")
    return r + math.sqrt(noise_variance(snr_db)) * complex_noise(r.size, rng).reshape(r.shape)
