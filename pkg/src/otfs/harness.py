"""Monte-Carlo BER campaigns for OTFS (ideal and rectangular pulses) and an
OFDM baseline, with CSV output.

Every trial derives its random streams from ``(master seed, trial index)``
only, so any two runs that share a seed see the same bits, channel draws
and noise samples regardless of scheme, SNR, speed, window or damping.
Comparisons across those axes are therefore paired frame by frame.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np
import yaml

from .channel import (apply_channel_time, complex_noise, generate_channel,
                      get_profile, load_profiles, noise_variance, quantize_taps)
from .detector import DetectorConfig, mp_detect
from .effective_channel import (IdiWindow, apply_ideal, build_ideal, build_ofdm,
                                build_rect)
from .frame import FrameParams, ParameterError, indices_to_bits, make_alphabet, map_bits
from .transforms import otfs_demodulate, otfs_modulate, sfft, wigner_rect

log = logging.getLogger(__name__)

SCHEMES = ("otfs-ideal", "otfs-rect-wc", "otfs-rect-wo", "ofdm")
CSV_COLUMNS = ("scheme", "snr_db", "speed_kmph", "ni", "damping", "frames",
               "bit_errors", "total_bits", "ber", "mean_iterations", "wall_time_s")
# detector noise variance used when the channel output is noiseless
NOISELESS_NOISE_VAR = 1e-4
OFDM_CP_SECONDS = 2.6e-6
Z_95 = 1.959963984540054


@dataclass(frozen=True)
class CampaignConfig:
    scheme: str = "otfs-ideal"
    n: int = 16
    m: int = 64
    qam: int = 4
    snr_db: tuple = (18.0,)
    speed_kmph: tuple = (120.0,)
    frames: int = 500
    ni: int | None = None               # None = every Doppler tap
    detector: DetectorConfig = DetectorConfig()
    profile: str = "EVA"
    seed: int = 0
    out: str | None = None
    noiseless: bool = False
    threads: int = 1
    subcarrier_spacing: float = 15e3
    carrier_freq: float = 4e9
    cp_seconds: float = OFDM_CP_SECONDS
    b_off: int = 8
    backend: str = "auto"
    profiles: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ParameterError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.frames < 1:
            raise ParameterError("frames must be >= 1")
        object.__setattr__(self, "snr_db", tuple(float(s) for s in _as_list(self.snr_db)))
        object.__setattr__(self, "speed_kmph", tuple(float(v) for v in _as_list(self.speed_kmph)))
        if not self.snr_db:
            raise ParameterError("snr list must be non-empty")
        if not self.speed_kmph:
            raise ParameterError("speed list must be non-empty")
        if self.threads < 1:
            raise ParameterError("threads must be >= 1")

    @property
    def params(self) -> FrameParams:
        return FrameParams(self.n, self.m, self.subcarrier_spacing, carrier_freq=self.carrier_freq)

    @property
    def window(self) -> IdiWindow:
        return IdiWindow(self.ni)

    @property
    def cp_samples(self) -> int:
        return int(round(self.cp_seconds * self.params.bandwidth))

    @property
    def ni_label(self) -> str:
        return "full" if self.ni is None else str(self.ni)


@dataclass
class TrialResult:
    bit_errors: int
    bits: int
    iterations: float


@dataclass
class BerRecord:
    scheme: str
    snr_db: float
    speed_kmph: float
    ni: str
    damping: float
    frames: int
    bit_errors: int
    total_bits: int
    ber: float
    mean_iterations: float
    wall_time_s: float
    frame_errors: np.ndarray = field(default=None, repr=False, compare=False)

    def row(self) -> list:
        d = asdict(self)
        return [d[c] for c in CSV_COLUMNS]


def _as_list(v) -> list:
    if v is None:
        return []
    if isinstance(v, (int, float, str)):
        return [v]
    return list(v)


def trial_rngs(seed: int, trial: int):
    """Independent (bits, channel, noise) generators for one trial."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence([seed, trial]).spawn(3)]


def _detector_noise_var(cfg: CampaignConfig, snr_db: float) -> float:
    return NOISELESS_NOISE_VAR if cfg.noiseless else noise_variance(snr_db)


def _count_errors(indices, bits, alphabet) -> int:
    return int(np.count_nonzero(indices_to_bits(indices, alphabet) != bits))


def run_trial(cfg: CampaignConfig, trial_seed: int, snr_db: float | None = None,
              speed_kmph: float | None = None) -> TrialResult:
    """Simulate and detect one frame at one (SNR, speed) point."""
    snr_db = cfg.snr_db[0] if snr_db is None else snr_db
    speed_kmph = cfg.speed_kmph[0] if speed_kmph is None else speed_kmph
    params = cfg.params
    alphabet = make_alphabet(cfg.qam)
    rng_bits, rng_chan, rng_noise = trial_rngs(cfg.seed, trial_seed)

    bits = rng_bits.integers(0, 2, params.size * alphabet.bits_per_symbol, dtype=np.uint8)
    x = map_bits(bits, alphabet, params)
    profile = get_profile(cfg.profile, cfg.profiles)
    taps = [quantize_taps(p, params) for p in generate_channel(profile, speed_kmph, params, rng_chan)]
    noise_var = _detector_noise_var(cfg, snr_db)
    sigma = 0.0 if cfg.noiseless else math.sqrt(noise_variance(snr_db))

    if cfg.scheme == "ofdm":
        return _ofdm_trial(cfg, x, bits, taps, alphabet, rng_noise, sigma, noise_var)

    z = sigma * complex_noise(params.size, rng_noise) if sigma else np.zeros(params.size, complex)
    if cfg.scheme == "otfs-ideal":
        # same time-domain noise as the rectangular schemes, seen through the
        # (unitary) receive transforms
        y = apply_ideal(x, taps, params) + sfft(wigner_rect(z, params))
        H = build_ideal(taps, cfg.window, params)
    else:
        r = apply_channel_time(otfs_modulate(x), taps, params) + z
        y = otfs_demodulate(r, params)
        builder = build_rect if cfg.scheme == "otfs-rect-wc" else build_ideal
        H = builder(taps, cfg.window, params)
    res = mp_detect(y, H, alphabet, noise_var, cfg.detector, backend=cfg.backend)
    return TrialResult(_count_errors(res.indices, bits, alphabet), bits.size, res.iterations)


def _ofdm_trial(cfg, x, bits, taps, alphabet, rng_noise, sigma, noise_var) -> TrialResult:
    """N consecutive CP-OFDM symbols, one per row of ``x``, each detected alone."""
    params = cfg.params
    N, M = params.n_doppler, params.m_delay
    cp = cfg.cp_samples
    sym_len = M + cp
    t = np.fft.ifft(x, axis=1, norm="ortho")
    stream = np.concatenate([t[:, M - cp:], t], axis=1).ravel()
    r = apply_channel_time(stream, taps, params)
    if sigma:
        r = r + sigma * complex_noise(r.size, rng_noise)
    # noiseless runs keep the whole row so the detector model is exact
    b_off = M if cfg.noiseless else cfg.b_off
    errors = 0
    iters = 0
    bps = alphabet.bits_per_symbol
    for s in range(N):
        start = s * sym_len + cp
        y = np.fft.fft(r[start:start + M], norm="ortho")
        H = build_ofdm(taps, params, cp, b_off=b_off, symbol_start=start)
        res = mp_detect(y, H, alphabet, noise_var, cfg.detector, backend=cfg.backend)
        errors += _count_errors(res.indices, bits[s * M * bps:(s + 1) * M * bps], alphabet)
        iters += res.iterations
    return TrialResult(errors, bits.size, iters / N)


def run_point(cfg: CampaignConfig, snr_db: float, speed_kmph: float) -> BerRecord:
    """Aggregate ``cfg.frames`` trials at one grid point, ordered by trial index."""
    t0 = time.perf_counter()
    job = lambda i: run_trial(cfg, i, snr_db, speed_kmph)  # noqa: E731
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            results = list(pool.map(job, range(cfg.frames)))
    else:
        results = [job(i) for i in range(cfg.frames)]
    errs = np.array([r.bit_errors for r in results], dtype=np.int64)
    total = int(sum(r.bits for r in results))
    return BerRecord(
        scheme=cfg.scheme, snr_db=snr_db, speed_kmph=speed_kmph, ni=cfg.ni_label,
        damping=cfg.detector.damping, frames=cfg.frames, bit_errors=int(errs.sum()),
        total_bits=total, ber=float(errs.sum()) / total,
        mean_iterations=float(np.mean([r.iterations for r in results])),
        wall_time_s=round(time.perf_counter() - t0, 3), frame_errors=errs)


class CsvSink:
    """Writes the header once, then appends one row per record."""

    def __init__(self, path):
        self.path = Path(path) if path else None
        if self.path is not None:
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("w", newline="") as fh:
                    csv.writer(fh).writerow(CSV_COLUMNS)
            except OSError as exc:
                raise ParameterError(f"cannot write output {self.path}: {exc}") from exc

    def write(self, record: BerRecord) -> None:
        if self.path is None:
            return
        with self.path.open("a", newline="") as fh:
            csv.writer(fh).writerow(record.row())


def run_campaign(cfg: CampaignConfig, sink: CsvSink | None = None) -> list[BerRecord]:
    """Run the (snr x speed) grid; writes ``cfg.out`` when set."""
    sink = CsvSink(cfg.out) if sink is None else sink
    records = []
    for snr, speed in product(cfg.snr_db, cfg.speed_kmph):
        rec = run_point(cfg, snr, speed)
        log.info("%s snr=%g speed=%g ni=%s ber=%.3e", rec.scheme, snr, speed, rec.ni, rec.ber)
        sink.write(rec)
        records.append(rec)
    return records


def sweep_ni(cfg: CampaignConfig, ni_list) -> list[BerRecord]:
    """Same campaign for each IDI window half-width (``None`` = full window)."""
    sink = CsvSink(cfg.out)
    return [r for ni in ni_list for r in run_campaign(replace(cfg, ni=ni), sink)]


def sweep_damping(cfg: CampaignConfig, delta_list) -> list[BerRecord]:
    sink = CsvSink(cfg.out)
    return [r for d in delta_list
            for r in run_campaign(replace(cfg, detector=replace(cfg.detector, damping=d)), sink)]


def paired_interval(errors_a, errors_b, bits_per_frame: int, z: float = Z_95):
    """BER(a) - BER(b) and the half-width of its paired normal interval.

    The interval is built from per-frame BER differences, which share
    channel and noise draws, so frame-to-frame fading variance cancels.
    """
    a = np.asarray(errors_a, dtype=float) / bits_per_frame
    b = np.asarray(errors_b, dtype=float) / bits_per_frame
    if a.shape != b.shape or a.size < 2:
        raise ParameterError("paired interval needs two equal-length runs of >= 2 frames")
    d = a - b
    return float(d.mean()), float(z * d.std(ddof=1) / math.sqrt(d.size))


# -- configuration files ---------------------------------------------------

_DETECTOR_KEYS = {"damping", "gamma", "epsilon", "max_iters"}


def config_from_dict(data: dict) -> CampaignConfig:
    """Build a config from a flat mapping using the CLI option names
    (``max-iters`` or ``max_iters``); a ``profiles`` entry adds channel
    profiles given in ns / dB."""
    data = {k.replace("-", "_"): v for k, v in (data or {}).items()}
    det = {k: data.pop(k) for k in list(data) if k in _DETECTOR_KEYS}
    if "snr" in data:
        data["snr_db"] = data.pop("snr")
    if "speed" in data:
        data["speed_kmph"] = data.pop("speed")
    if "profiles" in data:
        data["profiles"] = load_profiles(data["profiles"])
    if isinstance(data.get("ni"), str):
        data["ni"] = None if data["ni"].lower() in ("full", "none") else int(data["ni"])
    known = set(CampaignConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ParameterError(f"unknown config keys: {sorted(unknown)}")
    return CampaignConfig(detector=DetectorConfig(**det), **data)


def load_config(path) -> CampaignConfig:
    with open(path) as fh:
        return config_from_dict(yaml.safe_load(fh))
