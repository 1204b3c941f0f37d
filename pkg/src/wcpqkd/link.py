"""Physical link model: per-clock-cycle detection, multi-photon and error rates.

All quantities are probabilities per clock cycle.  The conventions:

* fibre transmission  t = 10^(-alpha*l/10)
* detection           P = mu*eta*t + d
* multi-photon        S = mu^2/2 (coherent-source approximation) or the
                      exact Poisson tail 1 - e^(-mu)(1+mu)
* sifted-key QBER     e = (e_mod*mu*eta*t + d/2) / P, i.e. modulation
                      errors on signal detections plus half of the dark
                      counts, which land on a random bit.

Dark counts are the total erroneous count probability per gate, summed
over both of the receiver's detectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class SourceParams:
    """Transmitter: mean photon number per pulse and pulse rate.

    mu is dimensionless (photons per clock cycle), clock_rate in Hz.
    """
    mu: float
    clock_rate: float = 2e6

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")
        if not self.clock_rate > 0:
            raise ValueError(f"clock_rate must be > 0, got {self.clock_rate}")


@dataclass(frozen=True)
class ChannelParams:
    """Fibre span: length in km and attenuation in dB/km."""
    length_km: float
    attenuation_db_per_km: float = 0.21

    def __post_init__(self):
        if self.length_km < 0:
            raise ValueError(f"length_km must be >= 0, got {self.length_km}")
        if self.attenuation_db_per_km < 0:
            raise ValueError(
                f"attenuation_db_per_km must be >= 0, got {self.attenuation_db_per_km}")


@dataclass(frozen=True)
class DetectorParams:
    """Receiver: overall efficiency (optics + detector), dark/stray count
    probability per gate, and the intrinsic modulation error fraction."""
    efficiency: float = 0.045
    dark_prob: float = 8e-7
    modulation_error: float = 0.03

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise ValueError(f"efficiency must be in (0, 1], got {self.efficiency}")
        if not 0 <= self.dark_prob < 1:
            raise ValueError(f"dark_prob must be in [0, 1), got {self.dark_prob}")
        if not 0 <= self.modulation_error < 0.5:
            raise ValueError(
                f"modulation_error must be in [0, 0.5), got {self.modulation_error}")


@dataclass(frozen=True)
class LinkBudget:
    """Derived per-pulse probabilities for one operating point."""
    transmission: float
    signal_prob: float      # mu*eta*t
    detect_prob: float      # signal_prob + dark_prob
    multiphoton_prob: float
    qber: float


def transmission(channel: ChannelParams) -> float:
    """Fibre power transmission 10^(-alpha*l/10), in [0, 1]."""
    return 10.0 ** (-channel.attenuation_db_per_km * channel.length_km / 10.0)


def detection_prob(source: SourceParams, channel: ChannelParams,
                   detector: DetectorParams) -> float:
    """Probability per clock cycle that the receiver registers any count.

    Raises ValueError when the parameter combination is unphysical (P > 1).
    """
    p = source.mu * detector.efficiency * transmission(channel) + detector.dark_prob
    if p > 1.0:
        raise ValueError(f"detection probability {p} > 1; unphysical parameters")
    return p


def multiphoton_prob(mu: float, model: str = "approx") -> float:
    """Probability that a pulse carries two or more photons.

    model='approx' gives mu^2/2; model='exact_poisson' gives
    1 - e^(-mu)(1+mu).  The exact value is always below the approximation.
    """
    if not mu > 0:
        raise ValueError(f"mu must be > 0, got {mu}")
    if model == "approx":
        return mu * mu / 2.0
    if model == "exact_poisson":
        # -expm1(-mu) = 1 - e^(-mu), keeps precision for small mu
        return -math.expm1(-mu) - mu * math.exp(-mu)
    raise ValueError(f"unknown multiphoton model {model!r}")


def qber(source: SourceParams, channel: ChannelParams,
         detector: DetectorParams) -> float:
    """Expected sifted-key error rate.

    Signal detections are wrong with the modulation error probability; dark
    counts produce a random bit, so half of them are errors.  Reduces to
    d/(2P) for a perfect modulator and to the modulation error when dark
    counts vanish.
    """
    s = source.mu * detector.efficiency * transmission(channel)
    p = s + detector.dark_prob
    if p <= 0:
        raise ValueError("detection probability is zero; QBER undefined")
    return (detector.modulation_error * s + detector.dark_prob / 2.0) / p


def eve_attributed_qber(source: SourceParams, channel: ChannelParams,
                        detector: DetectorParams) -> float:
    """Error rate charged to the eavesdropper: the part of the QBER not
    explained by the calibrated modulation error, i.e. d/(2P)."""
    p = source.mu * detector.efficiency * transmission(channel) + detector.dark_prob
    if p <= 0:
        raise ValueError("detection probability is zero; QBER undefined")
    return detector.dark_prob / 2.0 / p


def link_budget(source: SourceParams, channel: ChannelParams,
                detector: DetectorParams,
                multiphoton_model: str = "approx") -> LinkBudget:
    """Bundle of all derived per-pulse probabilities for one operating point."""
    t = transmission(channel)
    s = source.mu * detector.efficiency * t
    p = detection_prob(source, channel, detector)
    return LinkBudget(
        transmission=t,
        signal_prob=s,
        detect_prob=p,
        multiphoton_prob=multiphoton_prob(source.mu, multiphoton_model),
        qber=qber(source, channel, detector),
    )


def pns_boundary_mu(channel: ChannelParams, detector: DetectorParams,
                    multiphoton_model: str = "approx") -> float:
    """Largest pulse intensity satisfying the splitting-attack criterion S(mu) = P.

    Above this intensity an eavesdropper can block every single-photon pulse
    and still sustain the receiver's full detection rate from multi-photon
    pulses alone.  For the mu^2/2 model this solves mu^2/2 = mu*eta*t + d in
    closed form; the exact-Poisson variant is solved by bisection.
    """
    et = detector.efficiency * transmission(channel)
    d = detector.dark_prob
    if multiphoton_model == "approx":
        return et + math.sqrt(et * et + 2.0 * d)
    lo, hi = 1e-12, 1.0
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if multiphoton_prob(mid, multiphoton_model) < mid * et + d:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)
