import numpy as np
import pytest

from jadl.core import Dictionary, ShiftSet, SparseCode, apply_shift, reconstruct_all
from jadl.metrics import code_stats, denoise_error, similarity
from jadl.synth import SynthConfig, generate, make_true_dictionary, synthesize


@pytest.fixture(scope="module")
def truth():
    return generate(SynthConfig(seed=11))


class TestTrueDictionary:
    def test_unit_norm(self):
        D = make_true_dictionary(SynthConfig())
        assert D.atoms.shape == (3, 512)
        np.testing.assert_allclose(np.linalg.norm(D.atoms, axis=1), 1.0, atol=1e-12)

    def test_spike_energy_concentrated(self):
        cfg = SynthConfig()
        spike = make_true_dictionary(cfg).atoms[0]
        c = int(round(cfg.spike_center_s * cfg.sample_rate))
        assert np.sum(spike[c - 5 : c + 6] ** 2) > 0.95

    def test_oscillation_frequencies(self):
        cfg = SynthConfig()
        D = make_true_dictionary(cfg)
        freqs = np.fft.rfftfreq(cfg.n_samples, 1 / cfg.sample_rate)
        for atom, f in zip(D.atoms[1:], cfg.osc_freqs):
            peak = freqs[np.argmax(np.abs(np.fft.rfft(atom)))]
            assert abs(peak - f) <= cfg.sample_rate / cfg.n_samples


class TestGenerate:
    def test_shapes(self, truth):
        assert truth.noisy.shape == (200, 512)
        assert truth.coefs.shape == truth.shifts.shape == (200, 3)

    def test_snr(self, truth):
        assert truth.measured_snr() == pytest.approx(0.790, abs=1e-6)

    def test_shifts_within_bound(self, truth):
        assert np.max(np.abs(truth.shifts)) <= truth.config.shift_set().max_shift

    def test_clean_replays_bit_for_bit(self, truth):
        replay = synthesize(truth.coefs, truth.shifts, truth.dictionary)
        np.testing.assert_array_equal(replay, truth.clean)
        codes = truth.codes()
        sh = truth.config.shift_set()
        np.testing.assert_allclose(reconstruct_all(codes, truth.dictionary, sh), truth.clean,
                                   atol=1e-12)

    def test_noiseless(self):
        gt = generate(SynthConfig(seed=1, snr=None, n_events_max=0, n_signals=20))
        np.testing.assert_array_equal(gt.noisy, gt.clean)
        for j in range(3):
            ref = sum(gt.coefs[j, i] * apply_shift(gt.dictionary.atoms[i], gt.shifts[j, i])
                      for i in range(3))
            np.testing.assert_allclose(gt.clean[j], ref, atol=1e-14)

    def test_deterministic(self):
        a = generate(SynthConfig(seed=5, n_signals=30))
        b = generate(SynthConfig(seed=5, n_signals=30))
        np.testing.assert_array_equal(a.noisy, b.noisy)
        c = generate(SynthConfig(seed=6, n_signals=30))
        assert not np.array_equal(a.noisy, c.noisy)

    def test_event_counts(self, truth):
        counts = truth.extras["event_counts"]
        assert counts.min() >= 0 and counts.max() <= 3
        assert np.all(np.any(truth.events != 0, axis=1) == (counts > 0))

    def test_config_roundtrip(self):
        cfg = SynthConfig(seed=3, osc_freqs=(5.0, 9.0))
        assert SynthConfig.from_dict(cfg.to_dict()) == cfg
        with pytest.raises(ValueError):
            SynthConfig.from_dict({"bogus": 1})
        with pytest.raises(ValueError):
            SynthConfig(snr=-1.0)

    def test_noisy_worse_than_clean(self, truth):
        assert denoise_error(truth.noisy, truth.clean) > denoise_error(truth.clean + 0.1 * (truth.noisy - truth.clean), truth.clean)


class TestSimilarity:
    def test_identical(self, truth):
        s = similarity(truth.dictionary, truth.dictionary)
        assert s.rho_bar == pytest.approx(1.0)
        assert sorted(s.assignment) == [(0, 0), (1, 1), (2, 2)]

    def test_shifted_and_flipped(self, truth):
        moved = np.array([-apply_shift(a, int(0.3 * 128)) for a in truth.dictionary.atoms])
        s = similarity(Dictionary(moved[::-1]), truth.dictionary)
        assert s.rho_bar == pytest.approx(1.0)
        assert np.all(s.sign == -1)
        assert sorted(s.assignment) == [(0, 2), (1, 1), (2, 0)]

    def test_beyond_search_range(self):
        t = np.arange(256)
        a = np.exp(-0.5 * ((t - 128) / 2.0) ** 2)
        D = Dictionary.from_raw(a)
        far = Dictionary.from_raw(np.roll(a, 100))
        assert similarity(far, D, max_shift_s=0.1, sample_rate=128).rho_bar < 0.01

    def test_fewer_recovered_atoms(self, truth):
        s = similarity(Dictionary(truth.dictionary.atoms[:2]), truth.dictionary)
        assert s.rho[2] == 0 and s.rho_bar == pytest.approx(2 / 3)

    def test_extended_atoms(self, truth):
        padded = np.pad(truth.dictionary.atoms, ((0, 0), (10, 10)))
        s = similarity(Dictionary(padded, "extended"), truth.dictionary)
        assert s.rho_bar == pytest.approx(1.0)


class TestErrorAndStats:
    def test_denoise_error(self):
        X = np.random.default_rng(0).standard_normal((5, 8))
        assert denoise_error(X, X) == 0
        assert denoise_error(np.zeros_like(X), X) == pytest.approx(1.0)

    def test_zero_clean_signal_excluded(self):
        X = np.ones((3, 4))
        X[1] = 0
        with pytest.warns(UserWarning):
            assert denoise_error(2 * X, X) == pytest.approx(1.0)

    def test_code_stats(self):
        codes = [SparseCode.from_entries([(0, 1, 1.0)]), SparseCode.from_entries([(0, -1, 1.0)])]
        st = code_stats(codes, 2)
        np.testing.assert_allclose(st.energy, [1.0, 0.0])
        assert st.histogram(0) == {-1: 1, 1: 1}
        assert st.histogram(1) == {}
        assert st.histogram(0, ShiftSet.symmetric(1)) == {-1: 1, 0: 0, 1: 1}

    def test_energy_of_true_codes(self):
        # E[a^2] = mu^2 + sigma^2 = 1.09 for coefficients ~ N(1, 0.3)
        gt = generate(SynthConfig(seed=2, n_signals=4000, snr=None, n_events_max=0))
        st = code_stats(gt.codes(), 3)
        se = np.std(gt.coefs**2) / np.sqrt(4000)
        np.testing.assert_allclose(st.energy, 1.09, atol=4 * se)
