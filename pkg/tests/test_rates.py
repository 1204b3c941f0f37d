"""Gain-formula behavior: entropy, privacy-amplification fraction, secure gain."""
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wcpqkd import (ChannelParams, DetectorParams, RateParams, SecurityViolation,
                    SourceParams, binary_entropy, gain_to_bps, link_budget,
                    pa_fraction, pns_boundary_mu, secure_gain, sifted_gain)

from conftest import REF_CLOCK, REF_F


class TestBinaryEntropy:
    def test_endpoints(self):
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0

    def test_maximum(self):
        assert binary_entropy(0.5) == pytest.approx(1.0, rel=1e-15)

    def test_frozen(self):
        assert binary_entropy(0.03) == pytest.approx(0.19439185783157616, rel=1e-12)

    @given(e=st.floats(1e-9, 1 - 1e-9))
    @settings(max_examples=80, deadline=None)
    def test_symmetric_and_bounded(self, e):
        h = binary_entropy(e)
        assert 0 <= h <= 1
        assert h == pytest.approx(binary_entropy(1 - e), rel=1e-9)

    def test_domain(self):
        with pytest.raises(ValueError):
            binary_entropy(-0.1)
        with pytest.raises(ValueError):
            binary_entropy(1.1)


class TestPaFraction:
    def test_single_photon_noiseless(self):
        assert pa_fraction(1e-3, 0.0, 0.0) == 1.0

    def test_beta_only_at_zero_error(self):
        assert pa_fraction(2e-4, 1e-4, 0.0) == pytest.approx(0.5, rel=1e-15)

    def test_frozen_25km_operating_point(self):
        # at the optimizer's intensity for 25 km with reference parameters
        p, s, e = 0.0001398301720857971, 5.355044663730445e-05, 0.002860612942352412
        assert pa_fraction(p, s, e) == pytest.approx(0.6007506201150219, rel=1e-12)

    def test_pns_violation(self):
        with pytest.raises(SecurityViolation):
            pa_fraction(1e-4, 1e-4, 0.01)
        with pytest.raises(SecurityViolation):
            pa_fraction(1e-4, 2e-4, 0.01)

    def test_error_rate_too_high(self):
        # e' = e/beta >= 1/2 leaves no key
        with pytest.raises(SecurityViolation):
            pa_fraction(1e-3, 5e-4, 0.26)

    def test_never_exceeds_beta_and_monotone(self):
        p = 1e-3
        for s in (0.0, 2e-4, 5e-4):
            beta = (p - s) / p
            vals = [pa_fraction(p, s, e) for e in (0.0, 0.01, 0.05, 0.1)]
            assert vals[0] == pytest.approx(beta, rel=1e-15)
            assert all(v <= beta for v in vals)
            assert all(a > b for a, b in zip(vals, vals[1:]))  # decreasing in e
        at_fixed_e = [pa_fraction(p, s, 0.02) for s in (0.0, 1e-4, 3e-4, 6e-4)]
        assert all(a > b for a, b in zip(at_fixed_e, at_fixed_e[1:]))  # decreasing in S

    def test_domain_checks(self):
        with pytest.raises(ValueError):
            pa_fraction(0.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            pa_fraction(1e-3, -1e-4, 0.0)
        with pytest.raises(ValueError):
            pa_fraction(1e-3, 1e-4, 0.5)


class TestSiftedGain:
    def test_trivial(self):
        assert sifted_gain(0.0) == 0.0
        assert sifted_gain(1.0) == 0.5

    def test_domain(self):
        with pytest.raises(ValueError):
            sifted_gain(1.5)


class TestSecureGain:
    def test_noiseless_expansion(self):
        # with no dark counts and a perfect modulator the closed form
        # collapses to (mu*eta*t/2) * (1 - mu/(2*eta*t))
        det = DetectorParams(efficiency=0.045, dark_prob=0.0, modulation_error=0.0)
        src, ch = SourceParams(mu=0.01), ChannelParams(0.0)
        bd = secure_gain(src, ch, det, RateParams(correction_efficiency=1.0))
        s = 0.01 * 0.045
        expected = 0.5 * s * (1 - 0.01 / (2 * 0.045))
        assert bd.secure_gain == pytest.approx(expected, rel=1e-12)
        assert bd.secure

    def test_flagged_insecure_at_pns_boundary(self, ref_detector):
        ch = ChannelParams(25.0)
        mu = pns_boundary_mu(ch, ref_detector)
        bd = secure_gain(SourceParams(mu=mu), ch, ref_detector)
        assert not bd.secure
        assert bd.secure_gain <= 0
        far = secure_gain(SourceParams(mu=2 * mu), ch, ref_detector)
        assert far.secure_gain < bd.secure_gain  # negative branch keeps falling

    def test_regression_44km(self, ref_detector):
        bd = secure_gain(SourceParams(mu=0.004084311985111403), ChannelParams(44.0),
                         ref_detector)
        assert bd.secure_gain == pytest.approx(2.474393693088713e-06, rel=1e-9)
        assert 0.7 <= gain_to_bps(bd.secure_gain, REF_CLOCK) / 2.1 <= 3.0

    def test_breakdown_consistency(self, ref_detector):
        bd = secure_gain(SourceParams(mu=0.01), ChannelParams(25.0), ref_detector)
        assert bd.secure_gain == pytest.approx(
            bd.sifted_gain * (bd.pa_fraction - bd.ec_cost), rel=1e-12)
        assert bd.secure_gain <= bd.sifted_gain
        assert bd.qber >= bd.eve_qber

    def test_monotone_in_penalties(self, ref_detector):
        src, ch = SourceParams(mu=0.01), ChannelParams(25.0)
        base = secure_gain(src, ch, ref_detector,
                           RateParams(correction_efficiency=1.0))
        worse_f = secure_gain(src, ch, ref_detector,
                              RateParams(correction_efficiency=1.3))
        assert worse_f.secure_gain < base.secure_gain
        # removing the multi-photon penalty can only help at the same (P, e)
        b = link_budget(src, ch, ref_detector)
        with_s = pa_fraction(b.detect_prob, b.multiphoton_prob, b.qber / 2)
        without_s = pa_fraction(b.detect_prob, 0.0, b.qber / 2)
        assert without_s > with_s

    def test_negative_at_both_ends(self, ref_detector):
        ch = ChannelParams(25.0)
        tiny = secure_gain(SourceParams(mu=2e-5), ch, ref_detector)
        assert tiny.secure_gain < 0  # dark counts dominate
        huge = secure_gain(SourceParams(mu=0.5), ch, ref_detector)
        assert huge.secure_gain < 0  # multi-photon pulses dominate

    def test_unimodal_on_secure_interval(self, ref_detector):
        import numpy as np
        mus = np.geomspace(1e-5, 1.0, 900)
        g = np.array([
            secure_gain(SourceParams(mu=m), ChannelParams(25.0), ref_detector).secure_gain
            for m in mus])
        assert g.max() > 0
        pos = np.nonzero(g > 0)[0]
        # the positive region is one contiguous interval ...
        assert np.array_equal(pos, np.arange(pos[0], pos[-1] + 1))
        # ... with a single interior maximum: rises then falls
        inside = g[pos]
        rising = np.diff(inside) > 0
        switches = int(np.count_nonzero(np.diff(rising.astype(int))))
        assert switches == 1

    def test_exact_poisson_variant_slightly_larger(self, ref_detector):
        src, ch = SourceParams(mu=0.02), ChannelParams(20.0)
        approx = secure_gain(src, ch, ref_detector, RateParams(multiphoton_model="approx"))
        exact = secure_gain(src, ch, ref_detector,
                            RateParams(multiphoton_model="exact_poisson"))
        assert exact.secure_gain > approx.secure_gain


class TestGainToBps:
    def test_trivials(self):
        assert gain_to_bps(0.0, 2e6) == 0.0
        assert gain_to_bps(1e-4, 2e6) == pytest.approx(200.0, rel=1e-15)

    def test_domain(self):
        with pytest.raises(ValueError):
            gain_to_bps(1e-4, 0.0)

    def test_short_link_magnitude(self, ref_detector):
        bd = secure_gain(SourceParams(mu=0.03304025607240653), ChannelParams(1.0),
                         ref_detector)
        bps = gain_to_bps(bd.secure_gain, REF_CLOCK)
        assert 150 <= bps <= 600  # within a factor 2 of the measured 300 bit/s


def test_rate_params_validation():
    with pytest.raises(ValueError):
        RateParams(correction_efficiency=0.9)
    with pytest.raises(ValueError):
        RateParams(multiphoton_model="bogus")
