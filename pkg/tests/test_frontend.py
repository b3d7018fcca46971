import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acscreen.errors import FormatError, InputTooShortError, InvalidConfigError, InvalidParameterError
from acscreen.frontend import (
    LOG_FLOOR,
    GaussFilterbank,
    RelevanceNet,
    TimeFreqRepr,
    Waveform,
    dump_centers,
    filterbank_backward,
    filterbank_forward,
    frame_signal,
    gauss_kernel,
    gauss_kernels,
    hz_to_mel,
    init_centers_mel,
    mel_centers_hz,
    mel_frontend,
    mel_to_hz,
    n_frames,
    read_features,
    relevance_backward,
    relevance_forward,
    write_centers_csv,
    write_features,
)
from acscreen.numerics import Rng

from helpers import check_filterbank, check_relevance, filterbank_oracle, relevance_oracle

SR = 44100


def tone(freq, n, sr=SR, amp=0.5):
    return amp * np.sin(2 * np.pi * freq * np.arange(n) / sr)


class TestFraming:
    def test_counts(self):
        assert frame_signal(Waveform(np.zeros(1102), SR), 1102, 441).shape == (1102, 1)
        assert frame_signal(Waveform(np.zeros(1102 + 441 * 50), SR), 1102, 441).shape == (1102, 51)
        assert n_frames(1102 + 441 * 50 + 440, 1102, 441) == 51

    def test_too_short(self):
        with pytest.raises(InputTooShortError):
            frame_signal(Waveform(np.zeros(1101), SR), 1102, 441)

    def test_columns_hold_hop_offsets(self):
        x = np.arange(40.0)
        fr = frame_signal(Waveform(x, SR), 8, 5)
        assert fr.shape == (8, 7)
        for t in range(fr.shape[1]):
            np.testing.assert_array_equal(fr[:, t], x[5 * t : 5 * t + 8])


class TestKernel:
    def test_examples(self):
        for mu in (0.01, 0.2, 0.45):
            assert gauss_kernel(mu, 9)[4] == 1.0
        g = gauss_kernel(0.25, 5)
        assert g[4] == pytest.approx(-math.exp(-0.125), abs=1e-12)
        assert g[4] == pytest.approx(-0.882497, abs=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.001, 0.499), st.integers(0, 200))
    def test_even_symmetry(self, mu, half):
        g = gauss_kernel(mu, 2 * half + 1)
        np.testing.assert_array_equal(g, g[::-1])

    def test_even_length_rejected(self):
        with pytest.raises(InvalidParameterError):
            gauss_kernel(0.1, 4)

    def test_derivative_by_differences(self):
        mu = np.array([0.05, 0.3])
        g, dg = gauss_kernels(mu, 21)
        h = 1e-6
        num = (gauss_kernels(mu + h, 21)[0] - gauss_kernels(mu - h, 21)[0]) / (2 * h)
        np.testing.assert_allclose(dg, num, rtol=1e-6, atol=1e-9)


class TestFilterbankForward:
    def test_matches_convolution_oracle(self):
        rng = np.random.default_rng(0)
        frames = rng.normal(size=(40, 5))
        mu = np.array([0.03, 0.12, 0.31])
        out, _ = filterbank_forward(frames, mu, 11)
        np.testing.assert_allclose(out, filterbank_oracle(frames, mu, 11), rtol=1e-12, atol=1e-12)

    def test_zero_input(self):
        out, _ = filterbank_forward(np.zeros((1102, 3)), init_centers_mel(64, SR), 353)
        np.testing.assert_array_equal(out, np.full((64, 3), math.log(LOG_FLOOR)))

    def test_tone_peaks_in_matching_row(self):
        mu = init_centers_mel(64, SR)
        for i in (10, 25, 40, 55):
            fr = frame_signal(Waveform(tone(mu[i] * SR, 1102 + 441 * 2), SR), 1102, 441)
            out, _ = filterbank_forward(fr, mu, 353)
            assert np.all(np.argmax(out, axis=0) == i)

    def test_amplitude_doubling_adds_ln4(self):
        rng = np.random.default_rng(1)
        fr = rng.normal(size=(600, 4))
        mu = np.array([0.02, 0.1, 0.3])
        a, _ = filterbank_forward(fr, mu, 101)
        b, _ = filterbank_forward(2 * fr, mu, 101)
        np.testing.assert_allclose(b - a, math.log(4), atol=1e-9)

    def test_hop_shift_covariance(self):
        rng = np.random.default_rng(2)
        S, hop = 300, 100
        x = rng.normal(size=S + hop * 12)
        mu = np.array([0.05, 0.2])
        a, _ = filterbank_forward(frame_signal(Waveform(x[hop:], SR), S, hop), mu, 51)
        b, _ = filterbank_forward(frame_signal(Waveform(x, SR), S, hop), mu, 51)
        # dropping one hop of samples drops exactly the first column
        assert a.shape[1] == b.shape[1] - 1
        np.testing.assert_allclose(a, b[:, 1:], atol=1e-9)

    def test_kernel_longer_than_frame(self):
        with pytest.raises(InvalidConfigError):
            filterbank_forward(np.zeros((300, 2)), np.array([0.1]), 353)

    def test_batched_equals_single(self):
        rng = np.random.default_rng(3)
        fr = rng.normal(size=(3, 200, 4))
        mu = np.array([0.05, 0.25])
        out, _ = filterbank_forward(fr, mu, 31)
        for b in range(3):
            np.testing.assert_allclose(out[b], filterbank_forward(fr[b], mu, 31)[0], rtol=1e-13)

    def test_mel_shape_parity(self):
        w = Waveform(np.random.default_rng(4).normal(size=1102 + 441 * 10) * 0.1, SR)
        mel = mel_frontend(w, 64, 1102, 441)
        fb = GaussFilterbank.mel_init(64, SR, 353)
        learned = fb.forward(frame_signal(w, 1102, 441))
        assert mel.data.shape == learned.shape == (64, 11)


class TestFilterbankBackward:
    def test_zero_upstream(self):
        rng = np.random.default_rng(5)
        _, cache = filterbank_forward(rng.normal(size=(30, 3)), np.array([0.1, 0.2]), 7)
        dmu, dx = filterbank_backward(np.zeros((2, 3)), cache)
        assert not np.any(dmu) and not np.any(dx)

    def test_toy_single_kernel_single_frame(self):
        rep = check_filterbank(F=1, k=3, S=8, T=1, h=1e-6, tol=1e-6)
        assert rep.passed, rep

    def test_toy_several_kernels(self):
        rep = check_filterbank(F=3, k=7, S=20, T=4, h=1e-6, tol=1e-6, seed=1)
        assert rep.passed, rep

    def test_batched_gradients(self):
        rng = np.random.default_rng(6)
        fr = rng.normal(size=(2, 16, 3))
        mu = np.array([0.07, 0.21])
        W = rng.normal(size=(2, 2, 3))
        _, cache = filterbank_forward(fr, mu, 5)
        dmu, dfr = filterbank_backward(W, cache)
        tot = np.zeros(2)
        for b in range(2):
            _, c1 = filterbank_forward(fr[b], mu, 5)
            d1, dx1 = filterbank_backward(W[b], c1)
            tot += d1
            np.testing.assert_allclose(dfr[b], dx1, rtol=1e-11, atol=1e-13)
        np.testing.assert_allclose(dmu, tot, rtol=1e-11)

    def test_skip_input_gradient(self):
        rng = np.random.default_rng(7)
        _, cache = filterbank_forward(rng.normal(size=(16, 2)), np.array([0.1]), 5)
        dmu, dx = filterbank_backward(np.ones((1, 2)), cache, need_dx=False)
        assert dx is None and dmu.shape == (1,)

    def test_constrain_clips_centres(self):
        fb = GaussFilterbank(np.array([-0.2, 0.25, 0.9]), 5)
        fb.constrain()
        np.testing.assert_array_equal(fb.mu, [0.001, 0.25, 0.499])


class TestRelevance:
    def test_zero_net_gives_half(self):
        net = RelevanceNet(2, 3)
        for p in net.params.values():
            p[...] = 0.0
        x = np.random.default_rng(0).normal(size=(4, 6))
        mask, weighted, _ = relevance_forward(x, net)
        np.testing.assert_array_equal(mask, 0.5)
        np.testing.assert_array_equal(weighted, 0.5 * x)

    def test_mask_range_and_magnitude(self):
        net = RelevanceNet(3, 5, Rng(1))
        x = np.random.default_rng(1).normal(size=(6, 9)) * 3
        mask, weighted, _ = relevance_forward(x, net)
        assert np.all((mask > 0) & (mask < 1))
        assert np.all(np.abs(weighted) <= np.abs(x))

    def test_loop_oracle_3x5(self):
        net = RelevanceNet(1, 2)
        net.params["Omega1"][...] = [[0.5, -1.0, 0.25], [1.5, 0.2, -0.7]]
        net.params["b1"][...] = [0.1, -0.3]
        net.params["Omega2"][...] = [[1.2, -0.8]]
        net.params["b2"][...] = [0.05]
        x = np.arange(15.0).reshape(3, 5) / 7 - 1
        mask, _, _ = relevance_forward(x, net)
        p = net.params
        np.testing.assert_allclose(mask, relevance_oracle(x, p["Omega1"], p["b1"], p["Omega2"], p["b2"], 1),
                                   rtol=0, atol=1e-15)

    def test_context_wider_than_sequence(self):
        net = RelevanceNet(4, 3, Rng(2))
        x = np.random.default_rng(2).normal(size=(2, 3))
        mask, _, _ = relevance_forward(x, net)
        p = net.params
        np.testing.assert_allclose(mask, relevance_oracle(x, p["Omega1"], p["b1"], p["Omega2"], p["b2"], 4),
                                   atol=1e-15)

    def test_zero_upstream(self):
        net = RelevanceNet(2, 3, Rng(3))
        _, _, cache = relevance_forward(np.ones((2, 4)), net)
        grads, dx = relevance_backward(np.zeros((2, 4)), cache)
        assert not any(np.any(g) for g in grads.values()) and not np.any(dx)

    def test_toy_gradients(self):
        rep = check_relevance(F=3, T=5, c=1, hidden=2, h=1e-6, tol=1e-6)
        assert rep.passed, rep

    def test_batched_input(self):
        net = RelevanceNet(2, 4, Rng(4))
        x = np.random.default_rng(4).normal(size=(3, 5, 7))
        _, w, _ = relevance_forward(x, net)
        for b in range(3):
            np.testing.assert_allclose(w[b], relevance_forward(x[b], net)[1], rtol=1e-14)


class TestMel:
    def test_zero_input(self):
        rep = mel_frontend(Waveform(np.zeros(1102 + 441 * 3), SR))
        np.testing.assert_array_equal(rep.data, math.log(LOG_FLOOR))
        assert rep.source == "mel"

    def test_too_short(self):
        with pytest.raises(InputTooShortError):
            mel_frontend(Waveform(np.zeros(100), SR))

    def test_1khz_tone(self):
        rep = mel_frontend(Waveform(tone(1000.0, 1102 + 441 * 4), SR), 64)
        centres = mel_centers_hz(64, SR)
        band = int(np.argmax(rep.data[:, 2]))
        nearest = int(np.argmin(np.abs(centres - 1000.0)))
        assert abs(band - nearest) <= 1

    def test_mel_scale_round_trip(self):
        f = np.array([0.0, 100.0, 1000.0, 8000.0, 22050.0])
        np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, atol=1e-9)
        assert hz_to_mel(1000.0) == pytest.approx(1000.0, abs=0.1)


class TestCentres:
    def test_single_centre_is_mel_midpoint(self):
        mu = init_centers_mel(1, SR)
        assert mu[0] * SR == pytest.approx(mel_to_hz(hz_to_mel(SR / 2) / 2), rel=1e-12)

    def test_64_centres(self):
        mu = init_centers_mel(64, SR)
        assert np.all(np.diff(mu) > 0) and mu.min() > 0 and mu.max() < 0.5
        spacing = np.diff(mu * SR)
        assert np.all(np.diff(spacing) >= -1e-9)

    def test_dump(self, tmp_path):
        assert dump_centers(np.array([0.1]), SR) == [(0, 4410.0)]
        mu = init_centers_mel(16, SR)
        pairs = dump_centers(GaussFilterbank(mu, 353).mu, SR)
        np.testing.assert_allclose([hz for _, hz in pairs], mu * SR, rtol=1e-15)
        write_centers_csv(tmp_path / "c.csv", pairs)
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "index,hz" and len(lines) == 17
        assert float(lines[1].split(",")[1]) == pairs[0][1]

    def test_dump_sorts(self):
        assert [i for i, _ in dump_centers(np.array([0.3, 0.1, 0.2]), 1000)] == [0, 1, 2]
        assert [hz for _, hz in dump_centers(np.array([0.3, 0.1, 0.2]), 1000)] == pytest.approx([100, 200, 300])


class TestFeatureFiles:
    def test_round_trip_is_exact(self, tmp_path):
        data = np.random.default_rng(9).normal(size=(4, 6)) * 1e3
        data[0, 0] = math.log(LOG_FLOOR)
        write_features(tmp_path / "f.csv", TimeFreqRepr(data, "learned"))
        back = read_features(tmp_path / "f.csv")
        assert back.source == "learned" and back.F == 4 and back.T == 6
        assert back.data.tobytes() == data.tobytes()
        head = (tmp_path / "f.csv").read_text().splitlines()[:3]
        assert head == ["F=4", "T=6", "source=learned"]

    def test_malformed(self, tmp_path):
        (tmp_path / "bad.csv").write_text("F=2\nT=2\nsource=mel\n1,2\n")
        with pytest.raises(FormatError):
            read_features(tmp_path / "bad.csv")
