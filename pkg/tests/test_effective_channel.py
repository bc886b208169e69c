import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from otfs.channel import TapPath, apply_channel_time
from otfs.effective_channel import (IdiWindow, SparseEffectiveChannel, apply_ideal, beta,
                                    build_ideal, build_ofdm, build_rect, delay_factor,
                                    dense_ideal_oracle, doppler_factor, ofdm_time_matrix,
                                    waveform_oracle)
from otfs.frame import FrameParams, ParameterError


def beta_direct(q, kappa, n):
    return np.sum(np.exp(2j * np.pi * (q + kappa) * np.arange(n) / n))


def random_taps(rng, params, count=3, fractional=True, max_delay=None):
    max_delay = params.m_delay if max_delay is None else max_delay
    taps = []
    for _ in range(count):
        kappa = float(rng.uniform(-0.49, 0.5)) if fractional else 0.0
        taps.append(TapPath(int(rng.integers(0, max_delay)), int(rng.integers(-2, 3)), kappa,
                            complex(rng.standard_normal(), rng.standard_normal()) / np.sqrt(2 * count)))
    return taps


def rand_grid(rng, p):
    return rng.standard_normal((p.n_doppler, p.m_delay)) + 1j * rng.standard_normal((p.n_doppler, p.m_delay))


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


# -- beta ------------------------------------------------------------------

def test_beta_simple_values():
    assert beta(0, 0.0, 8) == 8
    assert beta(1, 0.0, 8) == 0
    assert beta(0, 0.5, 4) == pytest.approx(1 + 2.414213562373095j, abs=1e-12)


@settings(max_examples=200)
@given(st.integers(-20, 20), st.floats(-0.499, 0.5), st.integers(1, 64))
def test_beta_matches_direct_sum(q, kappa, n):
    assert abs(beta(q, kappa, n) - beta_direct(q, kappa, n)) < 1e-9 * max(1, n)


@given(st.integers(-10, 10), st.floats(-0.499, 0.499), st.integers(2, 32))
def test_beta_conjugate_mirror(q, kappa, n):
    assert abs(beta(q, kappa, n) - np.conj(beta(-q, -kappa, n))) < 1e-9 * n


def test_beta_magnitude_peaks_and_decays():
    n = 32
    for kappa in (0.1, 0.3, 0.5, -0.2):
        mag = np.abs(beta(np.arange(-n // 2 + 1, n // 2), kappa, n)) / n
        q0 = n // 2 - 1
        assert np.argmax(mag) in (q0, q0 - 1) if kappa == 0.5 else np.argmax(mag) == q0
        right, left = mag[q0:], mag[:q0 + 1][::-1]
        assert np.all(np.diff(right[1:]) <= 1e-15) and np.all(np.diff(left[1:]) <= 1e-15)


def test_dirichlet_bound():
    for n in (2, 4, 8, 16, 128):
        theta = np.linspace(1e-6, np.pi - 1e-6, 20001)
        lhs = np.abs(np.sin(n * theta) / (n * np.sin(theta)))
        assert np.all(lhs <= (n - 1) / n * np.abs(np.cos(theta)) + 1 / n + 1e-12)


# -- windows and structure -------------------------------------------------

def test_window_validation():
    with pytest.raises(ParameterError):
        IdiWindow(4).offsets(0, 8)
    assert list(IdiWindow.widest(8).offsets(0, 8)) == list(range(-3, 4))
    assert len(IdiWindow.full().offsets(0, 8)) == 8
    assert list(IdiWindow((0, 2)).offsets(1, 8)) == [-2, -1, 0, 1, 2]


def test_single_ideal_path_is_identity():
    p = FrameParams(4, 8)
    taps = [TapPath(0, 0, 0.0, 1.0)]
    assert np.allclose(build_ideal(taps, IdiWindow(0), p).toarray(), np.eye(p.size))
    assert np.allclose(build_rect(taps, IdiWindow(0), p).toarray(), np.eye(p.size))


def test_integer_path_is_shifted_permutation():
    p = FrameParams(4, 4)
    H = build_ideal([TapPath(1, 1, 0.0, 1.0)], IdiWindow(0), p)
    x = rand_grid(np.random.default_rng(0), p)
    y = H.apply(x)
    expected = np.exp(-1j * np.pi / 8) * np.roll(np.roll(x, 1, axis=0), 1, axis=1)
    assert np.max(np.abs(y - expected)) < 1e-14


@pytest.mark.parametrize("seed", range(5))
def test_ideal_full_window_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    p = FrameParams(int(rng.choice([4, 8, 16])), int(rng.choice([4, 8, 16])))
    taps = random_taps(rng, p)
    dense = dense_ideal_oracle(taps, p)
    H = build_ideal(taps, IdiWindow.full(), p).toarray()
    scale = np.abs(dense).max()
    assert np.max(np.abs(H - dense)) / scale < 1e-10
    x = rand_grid(rng, p)
    assert rel_err(apply_ideal(x, taps, p).ravel(), dense @ x.ravel()) < 1e-12


def test_integer_doppler_window_zero_is_exact():
    rng = np.random.default_rng(7)
    p = FrameParams(8, 16)
    taps = random_taps(rng, p, count=4, fractional=False)
    dense = dense_ideal_oracle(taps, p)
    H0 = build_ideal(taps, IdiWindow(0), p).toarray()
    assert np.max(np.abs(H0 - dense)) < 1e-12
    assert np.max(np.abs(build_ideal(taps, IdiWindow(3), p).toarray() - H0)) < 1e-15


def test_dense_oracle_guard():
    with pytest.raises(ParameterError):
        dense_ideal_oracle([TapPath(0, 0, 0.0, 1)], FrameParams(128, 64))


def test_delay_and_doppler_factors():
    M = 16
    for dl in range(M):
        for lt in (0, 3):
            f = delay_factor(dl, lt, M)
            if (dl - lt) % M == 0:
                assert f == pytest.approx(M)
            else:
                assert abs(f) < 1e-12
    tap = TapPath(0, 1, 0.25, 1)
    for dk in range(-3, 4):
        assert doppler_factor(dk, tap, 8) == pytest.approx(beta(1 - dk, 0.25, 8), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 3))
def test_structural_degree_equals_s(seed, ni):
    rng = np.random.default_rng(seed)
    p = FrameParams(8, 8)
    taps = random_taps(rng, p, count=int(rng.integers(1, 5)))
    w = IdiWindow(ni)
    S = len(taps) * (2 * ni + 1)
    for builder in (build_ideal, build_rect):
        H = builder(taps, w, p)
        assert np.all(H.structural_row_degree == S)
        assert np.all(H.structural_col_degree == S)
        assert np.all(H.nnz_per_row <= S)
        # merged matrix equals the structural triplets summed
        ref = np.zeros((p.size, p.size), complex)
        np.add.at(ref, (H.rows, H.cols), H.values)
        assert np.max(np.abs(ref - H.toarray())) < 1e-14


def test_index_sets():
    p = FrameParams(4, 4)
    H = build_ideal([TapPath(1, 1, 0.0, 1.0)], IdiWindow(0), p)
    # y[(k,l)] depends on x[(k-1, l-1)]
    assert list(H.row_set(5)) == [0]
    assert list(H.col_set(0)) == [5]


def test_triplet_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    p = FrameParams(4, 8)
    H = build_rect(random_taps(rng, p), IdiWindow(1), p)
    path = tmp_path / "h.txt"
    H.export_triplets(path)
    first = path.read_text().splitlines()[0].split()
    assert len(first) == 4
    H2 = SparseEffectiveChannel.from_triplets(path, p.size)
    assert np.array_equal(H2.toarray(), H.toarray())


# -- rectangular pulses ----------------------------------------------------

def test_rect_integer_path_alpha():
    p = FrameParams(8, 8)
    k_nu, l_tau, h = 2, 3, 0.7 - 0.2j
    H = build_rect([TapPath(l_tau, k_nu, 0.0, h)], IdiWindow.full(), p).toarray()
    N, M = 8, 8
    for k in range(N):
        for l in range(M):
            d = k * M + l
            c = ((k - k_nu) % N) * M + (l - l_tau) % M
            phase = h * np.exp(2j * np.pi * (l - l_tau) * k_nu / (N * M))
            if l >= l_tau:
                assert H[d, c] == pytest.approx(phase, abs=1e-14)
                assert np.count_nonzero(np.abs(H[d]) > 1e-14) == 1
            else:
                expected = phase * (N - 1) / N * np.exp(-2j * np.pi * ((k - k_nu) % N) / N)
                assert H[d, c] == pytest.approx(expected, abs=1e-14)


def test_rect_zero_delay_differs_from_ideal_by_phase():
    p = FrameParams(8, 16)
    tap = TapPath(0, -1, 0.31, 0.9j)
    Hi = build_ideal([tap], IdiWindow(2), p).toarray()
    Hr = build_rect([tap], IdiWindow(2), p).toarray()
    l = np.tile(np.arange(16), 8)
    phase = np.exp(2j * np.pi * l * tap.doppler_index / p.size)
    assert np.max(np.abs(Hr - phase[:, None] * Hi)) < 1e-14


def test_waveform_oracle_identity_and_linearity():
    rng = np.random.default_rng(5)
    p = FrameParams(8, 16)
    x1, x2 = rand_grid(rng, p), rand_grid(rng, p)
    assert np.max(np.abs(waveform_oracle(x1, [TapPath(0, 0, 0.0, 1.0)], p) - x1)) < 1e-12
    taps = random_taps(rng, p)
    a, b = 1.5 - 0.5j, -0.3 + 2j
    lhs = waveform_oracle(a * x1 + b * x2, taps, p)
    rhs = a * waveform_oracle(x1, taps, p) + b * waveform_oracle(x2, taps, p)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


@pytest.mark.parametrize("seed", range(4))
def test_rect_full_window_matches_waveform(seed):
    rng = np.random.default_rng(seed)
    p = FrameParams(8, 16)
    taps = random_taps(rng, p, max_delay=6)
    x = rand_grid(rng, p)
    H = build_rect(taps, IdiWindow.full(), p)
    assert rel_err(H.apply(x), waveform_oracle(x, taps, p)) < 1e-10


def test_rect_truncation_error_shrinks_with_n():
    rng = np.random.default_rng(11)
    errs = []
    for n in (16, 64):
        p = FrameParams(n, 32)
        taps = [TapPath(0, 1, 0.4, 0.8), TapPath(3, -2, -0.35, 0.6j)]
        x = rand_grid(rng, p)
        H = build_rect(taps, IdiWindow.widest(n), p)
        errs.append(rel_err(H.apply(x), waveform_oracle(x, taps, p)))
    assert errs[1] < errs[0]


# -- OFDM ------------------------------------------------------------------

def ofdm_symbol_response(X, taps, p, cp):
    """Push one CP-OFDM symbol through the sample-level channel."""
    M = p.m_delay
    t = np.fft.ifft(X, norm="ortho")
    r = apply_channel_time(np.concatenate([t[M - cp:], t]), taps, p)
    return np.fft.fft(r[cp:], norm="ortho")


def test_ofdm_single_flat_path():
    p = FrameParams(4, 16)
    H = build_ofdm([TapPath(0, 0, 0.0, 0.5 + 0.5j)], p, cp_samples=2)
    assert np.allclose(H.toarray(), (0.5 + 0.5j) * np.eye(16))


def test_ofdm_zero_doppler_is_diagonal():
    rng = np.random.default_rng(2)
    p = FrameParams(4, 32)
    taps = random_taps(rng, p, count=4, fractional=False, max_delay=4)
    taps = [TapPath(t.delay_tap, 0, 0.0, t.gain) for t in taps]
    Hf = build_ofdm(taps, p, cp_samples=4, b_off=16).toarray()
    assert np.max(np.abs(Hf - np.diag(np.diag(Hf)))) < 1e-12


def test_ofdm_matches_cp_simulation_and_decays():
    rng = np.random.default_rng(4)
    p = FrameParams(4, 32)
    taps = random_taps(rng, p, count=3, max_delay=3)
    cp = 3
    H = build_ofdm(taps, p, cp, b_off=32, symbol_start=cp)
    X = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    assert rel_err(H @ X, ofdm_symbol_response(X, taps, p, cp)) < 1e-12
    Hd = np.abs(H.toarray())
    band = [np.mean([Hd[i, (i + d) % 32] for i in range(32)]) for d in range(6)]
    assert all(a > b for a, b in zip(band, band[1:]))


def test_ofdm_sparsified_row_degree_and_cp_check():
    rng = np.random.default_rng(6)
    p = FrameParams(4, 64)
    taps = random_taps(rng, p, count=3, max_delay=3)
    H = build_ofdm(taps, p, cp_samples=3, b_off=8)
    assert np.all(H.structural_row_degree == 17)
    assert np.all(np.diag(H.toarray()) != 0)
    with pytest.raises(ParameterError):
        build_ofdm([TapPath(5, 0, 0.0, 1)], p, cp_samples=2)


def test_ofdm_time_matrix_phase_uses_absolute_time():
    p = FrameParams(4, 8)
    tap = TapPath(1, 1, 0.0, 1.0)
    H0 = ofdm_time_matrix([tap], p, 0)
    H5 = ofdm_time_matrix([tap], p, 5)
    assert np.allclose(H5, H0 * np.exp(2j * np.pi * 5 / p.size))
