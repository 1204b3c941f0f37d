"""Secure key gain per clock cycle against PNS and individual attacks.

The gain decomposes as

    G = (P/2) * [ pa_fraction - f * H2(e) ]

where pa_fraction is the fraction of sifted bits surviving privacy
amplification and f*H2(e) is the error-correction cost per sifted bit.
The privacy-amplification term charges the eavesdropper with the error
rate she could have caused (the dark-count part of the QBER, d/2P); the
error-correction term pays for the full measured QBER including the
calibrated modulation error.  Negative gains are reported as-is and
flagged insecure so that root finding on G = 0 stays well-posed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .link import (
    ChannelParams,
    DetectorParams,
    SourceParams,
    eve_attributed_qber,
    multiphoton_prob,
    qber,
    transmission,
)


class SecurityViolation(Exception):
    """The operating point admits no secure key under the individual-attack
    bound (multi-photon rate reaches the detection rate, or the attributed
    error rate reaches 1/2)."""


@dataclass(frozen=True)
class RateParams:
    """Knobs of the gain formula.

    correction_efficiency is the error-correction inefficiency multiplier
    f >= 1 (1 is the Shannon limit, 1.18 matches the reference contour
    calculation, 1.16 is the usual Cascade figure below 5% error).
    """
    correction_efficiency: float = 1.18
    multiphoton_model: str = "approx"

    def __post_init__(self):
        if self.correction_efficiency < 1.0:
            raise ValueError(
                f"correction_efficiency must be >= 1, got {self.correction_efficiency}")
        if self.multiphoton_model not in ("approx", "exact_poisson"):
            raise ValueError(f"unknown multiphoton model {self.multiphoton_model!r}")


@dataclass(frozen=True)
class GainBreakdown:
    """Per-cycle gain ledger: secure_gain = sifted_gain*(pa_fraction - ec_cost)."""
    sifted_gain: float
    pa_fraction: float
    ec_cost: float
    secure_gain: float
    secure: bool
    detect_prob: float
    multiphoton_prob: float
    qber: float
    eve_qber: float


def binary_entropy(e: float) -> float:
    """H2(e) in bits, with the endpoint limits 0*log0 := 0."""
    if not 0.0 <= e <= 1.0:
        raise ValueError(f"entropy argument must be in [0, 1], got {e}")
    if e == 0.0 or e == 1.0:
        return 0.0
    return -(e * math.log2(e) + (1.0 - e) * math.log2(1.0 - e))


def pa_fraction(p: float, s_mu: float, e: float) -> float:
    """Fraction of sifted bits surviving privacy amplification.

    With beta = (P - S)/P and e' = e/beta this is
    beta * (1 - log2(1 + 4e' - 4e'^2)), the individual-attack bound where
    the eavesdropper holds every multi-photon pulse.  Equals beta at e = 0
    and never exceeds it.

    Raises SecurityViolation when P <= S (the PNS criterion fails) or when
    e' >= 1/2 (the bound yields no key).
    """
    if not p > 0:
        raise ValueError(f"detection probability must be > 0, got {p}")
    if s_mu < 0:
        raise ValueError(f"multi-photon probability must be >= 0, got {s_mu}")
    if not 0.0 <= e < 0.5:
        raise ValueError(f"error rate must be in [0, 0.5), got {e}")
    if p <= s_mu:
        raise SecurityViolation(
            f"multi-photon rate {s_mu} >= detection rate {p}: PNS criterion violated")
    beta = (p - s_mu) / p
    ep = e / beta
    if ep >= 0.5:
        raise SecurityViolation(
            f"attributed error rate {ep} on single-photon fraction >= 1/2: no key")
    arg = 1.0 + 4.0 * ep - 4.0 * ep * ep
    if arg <= 0.0:
        raise ValueError(f"log argument {arg} <= 0")
    return beta * (1.0 - math.log2(arg))


def sifted_gain(p: float) -> float:
    """Sifted bits per clock cycle: half the detections survive basis sifting."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"detection probability must be in [0, 1], got {p}")
    return p / 2.0


def secure_gain(source: SourceParams, channel: ChannelParams,
                detector: DetectorParams,
                rate_params: RateParams = RateParams()) -> GainBreakdown:
    """Secure bits per clock cycle at one operating point.

    Insecure operating points are returned flagged with the natural
    continuation of the formula (pa term = beta for beta <= 0, else 0)
    rather than raising, so optimizers can probe across the boundary.
    """
    t = transmission(channel)
    s = source.mu * detector.efficiency * t
    p = s + detector.dark_prob
    s_mu = multiphoton_prob(source.mu, rate_params.multiphoton_model)
    e_full = qber(source, channel, detector)
    e_eve = eve_attributed_qber(source, channel, detector)

    try:
        pa = pa_fraction(p, s_mu, e_eve)
        violated = False
    except SecurityViolation:
        beta = (p - s_mu) / p
        pa = min(beta, 0.0)
        violated = True

    ec = rate_params.correction_efficiency * binary_entropy(e_full)
    half_p = sifted_gain(p)
    g = half_p * (pa - ec)
    return GainBreakdown(
        sifted_gain=half_p,
        pa_fraction=pa,
        ec_cost=ec,
        secure_gain=g,
        secure=(not violated) and g > 0.0,
        detect_prob=p,
        multiphoton_prob=s_mu,
        qber=e_full,
        eve_qber=e_eve,
    )


def gain_to_bps(gain_per_cycle: float, clock_rate: float) -> float:
    """Convert a per-clock-cycle gain to bits per second."""
    if not clock_rate > 0:
        raise ValueError(f"clock_rate must be > 0, got {clock_rate}")
    return gain_per_cycle * clock_rate
