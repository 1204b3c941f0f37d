"""Cascade reconciliation, Toeplitz hashing and the key pipeline."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wcpqkd import (ChannelParams, DetectorParams, KeyPipelineReport, LinkBudget,
                    PaParams, RateParams, ResidualErrors, SessionResult,
                    SimConfig, SourceParams, binary_entropy, cascade_reconcile,
                    final_key_length, link_budget, replay_transcript,
                    run_pipeline, run_session, toeplitz_hash)
from wcpqkd.postprocess import (CASCADE_PASSES, VERIFY_HASH_BITS,
                                _first_block_size, _toeplitz_windows)
from wcpqkd._rng import stream_rng


def noisy_pair(n, e, seed):
    rng = stream_rng(seed, 0)
    a = rng.integers(0, 2, n, dtype=np.uint8)
    b = a ^ (rng.random(n) < e).astype(np.uint8)
    return a, b


def top_level_parities(n, e_est):
    k1 = _first_block_size(n, e_est)
    return sum(math.ceil(n / min(k1 * 2 ** p, n)) for p in range(CASCADE_PASSES))


class TestCascade:
    def test_error_free_run(self):
        rng = stream_rng(1, 0)
        a = rng.integers(0, 2, 10_000, dtype=np.uint8)
        rep = cascade_reconcile(a, a.copy(), 0.01, seed=5)
        assert rep.corrected_errors == 0
        assert np.array_equal(rep.corrected_key, a)
        assert rep.parity_bits == top_level_parities(10_000, 0.01)
        assert rep.leakage_bits == rep.parity_bits + VERIFY_HASH_BITS
        assert rep.measured_efficiency == math.inf

    def test_single_error_found_in_first_pass(self):
        n, e_est = 2 ** 14, 0.01
        rng = stream_rng(2, 0)
        a = rng.integers(0, 2, n, dtype=np.uint8)
        b = a.copy()
        b[7777] ^= 1
        rep = cascade_reconcile(a, b, e_est, seed=5)
        assert np.array_equal(rep.corrected_key, a)
        assert rep.corrected_errors == 1
        k1 = _first_block_size(n, e_est)
        binary_in_pass1 = [m for m in rep.transcript
                           if m[0] == 1 and (m[2] - m[1]) < k1]
        assert 0 < len(binary_in_pass1) <= math.ceil(math.log2(k1)) + 1

    @pytest.mark.parametrize("e", [0.01, 0.03, 0.05])
    def test_corrects_iid_errors(self, e):
        fails = 0
        for seed in range(10):
            a, b = noisy_pair(10_000, e, seed)
            rep = cascade_reconcile(a, b, e, seed=seed)
            if not np.array_equal(rep.corrected_key, a):
                fails += 1
            assert rep.measured_efficiency <= 1.25
        assert fails == 0

    def test_transcript_replay_reproduces_key(self):
        a, b = noisy_pair(8_000, 0.03, 77)
        rep = cascade_reconcile(a, b, 0.03, seed=13)
        replayed = replay_transcript(b, rep.transcript, 0.03, seed=13)
        assert np.array_equal(replayed, rep.corrected_key)

    def test_transcript_counts_every_parity(self):
        a, b = noisy_pair(5_000, 0.02, 3)
        rep = cascade_reconcile(a, b, 0.02, seed=9)
        assert rep.parity_bits == len(rep.transcript)
        assert rep.leakage_bits == len(rep.transcript) + VERIFY_HASH_BITS

    def test_deterministic(self):
        a, b = noisy_pair(6_000, 0.03, 4)
        r1 = cascade_reconcile(a, b, 0.03, seed=11)
        r2 = cascade_reconcile(a, b, 0.03, seed=11)
        assert r1.transcript == r2.transcript
        assert np.array_equal(r1.corrected_key, r2.corrected_key)

    def test_residual_errors_detected(self):
        # heavy error rate with a far-low estimate defeats four passes
        a, b = noisy_pair(2_000, 0.25, 8)
        with pytest.raises(ResidualErrors):
            cascade_reconcile(a, b, 0.001, seed=2)

    def test_preconditions(self):
        a = np.zeros(500, dtype=np.uint8)
        with pytest.raises(ValueError):
            cascade_reconcile(a, a, 0.03, seed=1)
        a = np.zeros(2000, dtype=np.uint8)
        with pytest.raises(ValueError):
            cascade_reconcile(a, a, 0.0, seed=1)
        with pytest.raises(ValueError):
            cascade_reconcile(a, np.zeros(1999, dtype=np.uint8), 0.03, seed=1)


class TestToeplitz:
    def test_zero_output_length(self):
        assert len(toeplitz_hash(np.ones(16, np.uint8), 0, seed=1)) == 0

    def test_linearity_on_zero(self):
        out = toeplitz_hash(np.zeros(64, np.uint8), 16, seed=1)
        assert not out.any()

    def test_matches_dense_matrix(self):
        rng = stream_rng(6, 0)
        for n, m, seed in ((12, 5, 1), (33, 16, 2), (130, 64, 3)):
            key = rng.integers(0, 2, n, dtype=np.uint8)
            diag = _toeplitz_windows.__globals__["stream_rng"](
                seed, (1 << 64) - 3).integers(0, 2, n + m - 1, dtype=np.uint8)
            t = np.array([[diag[n - 1 + i - j] for j in range(n)]
                          for i in range(m)], dtype=np.uint8)
            assert np.array_equal(t @ key % 2, toeplitz_hash(key, m, seed))

    @given(data=st.data())
    @settings(max_examples=40, deadline=None)
    def test_linearity(self, data):
        n, m, seed = 96, 24, 5
        bits = st.lists(st.integers(0, 1), min_size=n, max_size=n)
        a = np.array(data.draw(bits), dtype=np.uint8)
        b = np.array(data.draw(bits), dtype=np.uint8)
        ha = toeplitz_hash(a, m, seed)
        hb = toeplitz_hash(b, m, seed)
        assert np.array_equal(toeplitz_hash(a ^ b, m, seed), ha ^ hb)

    def test_single_bit_flips_always_change_output(self):
        # by linearity this is hash(e_j) != 0 for every unit vector e_j
        n, m, seed = 4096, 128, 19
        zero = np.zeros(n, dtype=np.uint8)
        for j in range(n):
            e_j = zero.copy()
            e_j[j] = 1
            if not toeplitz_hash(e_j, m, seed).any():
                pytest.fail(f"unit vector {j} collides with zero")

    def test_deterministic(self):
        key = stream_rng(7, 0).integers(0, 2, 256, dtype=np.uint8)
        assert np.array_equal(toeplitz_hash(key, 64, seed=3),
                              toeplitz_hash(key, 64, seed=3))
        assert not np.array_equal(toeplitz_hash(key, 64, seed=3),
                                  toeplitz_hash(key, 64, seed=4))

    def test_output_longer_than_input_rejected(self):
        with pytest.raises(ValueError):
            toeplitz_hash(np.ones(8, np.uint8), 9, seed=1)


def perfect_link(p=1e-3):
    return LinkBudget(transmission=1.0, signal_prob=p, detect_prob=p,
                      multiphoton_prob=0.0, qber=0.0)


class TestFinalKeyLength:
    def test_perfect_channel_identity(self):
        pa = PaParams(hash_seed=1, security_margin_bits=0)
        assert final_key_length(5000, 0.0, 0, perfect_link(), pa) == 5000

    def test_floor_at_zero(self):
        pa = PaParams(hash_seed=1, security_margin_bits=0)
        assert final_key_length(100, 0.0, 200, perfect_link(), pa) == 0

    def test_pns_violation_gives_zero(self):
        link = LinkBudget(transmission=1.0, signal_prob=1e-3, detect_prob=1e-3,
                          multiphoton_prob=2e-3, qber=0.0)
        pa = PaParams(hash_seed=1)
        assert final_key_length(5000, 0.0, 0, link, pa) == 0

    def test_margin_subtracted(self):
        pa = PaParams(hash_seed=1, security_margin_bits=30)
        assert final_key_length(5000, 0.0, 100, perfect_link(), pa) == 5000 - 100 - 30


class TestPipeline:
    def run_noiseless(self):
        rng = stream_rng(31, 0)
        a = rng.integers(0, 2, 6000, dtype=np.uint8)
        session = SessionResult(
            alice_sifted=a, bob_sifted=a.copy(), detected_count=12000,
            sifted_count=6600, qber_est=0.01, eve_known_fraction=0.0,
            n_pulses=10**7, sample_size=600)
        link = perfect_link()
        return run_pipeline(session, link, RateParams(), PaParams(hash_seed=5, security_margin_bits=30))

    def test_noiseless_ledger_arithmetic(self):
        rep = self.run_noiseless()
        assert rep.reconciled_length == 6000
        assert rep.sifted_count == rep.sample_disclosed + rep.reconciled_length
        assert rep.final_length == 6000 - rep.leakage_bits - 30
        assert len(rep.final_key) == rep.final_length

    def test_ledger_matches_formula(self, ref_detector):
        cfg = SimConfig(n_pulses=4_000_000, seed=17, source=SourceParams(mu=0.0212),
                        channel=ChannelParams(10.0), detector=ref_detector)
        session = run_session(cfg)
        link = link_budget(cfg.source, cfg.channel, cfg.detector)
        pa = PaParams(hash_seed=23)
        rep = run_pipeline(session, link, RateParams(), pa)
        assert rep.sifted_count == rep.sample_disclosed + rep.reconciled_length
        expected_m = final_key_length(rep.reconciled_length, rep.eve_attributed_qber,
                                      rep.leakage_bits, link, pa)
        assert rep.final_length == expected_m
        assert rep.final_length > 0
        assert len(rep.final_key) == rep.final_length
        # model cost retained for comparison against the measured leakage
        assert rep.model_ec_bits > 0
        assert math.isfinite(rep.measured_efficiency) and rep.measured_efficiency > 0

    def test_intensity_above_window_yields_empty_key(self, ref_detector):
        # far above the secure window the multi-photon rate kills the key
        cfg = SimConfig(n_pulses=3_000_000, seed=29, source=SourceParams(mu=0.1),
                        channel=ChannelParams(25.0), detector=ref_detector)
        session = run_session(cfg)
        link = link_budget(cfg.source, cfg.channel, cfg.detector)
        rep = run_pipeline(session, link, RateParams(), PaParams(hash_seed=7))
        assert rep.final_length == 0
        assert len(rep.final_key) == 0

    def test_empty_session_rejected(self):
        session = SessionResult(
            alice_sifted=np.empty(0, np.uint8), bob_sifted=np.empty(0, np.uint8),
            detected_count=0, sifted_count=0, qber_est=float("nan"),
            eve_known_fraction=0.0, n_pulses=1000)
        with pytest.raises(ValueError):
            run_pipeline(session, perfect_link(), RateParams(), PaParams(hash_seed=1))
