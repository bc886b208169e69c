"""Delay-Doppler (OTFS) link simulation with message-passing detection."""
from .channel import (ChannelProfile, PathSpec, TapPath, add_awgn, apply_channel_time,
                      generate_channel, get_profile, quantize_taps)
from .detector import DetectorConfig, DetectorResult, map_oracle, mp_detect
from .effective_channel import (IdiWindow, SparseEffectiveChannel, beta, build_ideal,
                                build_ofdm, build_rect, dense_ideal_oracle, waveform_oracle)
from .frame import (Alphabet, FrameParams, ParameterError, demap_symbols, make_alphabet,
                    map_bits, validate_params)
from .harness import BerRecord, CampaignConfig, run_campaign, run_trial, sweep_damping, sweep_ni
from .transforms import heisenberg_rect, isfft, sfft, wigner_rect

__version__ = "0.1.0"
