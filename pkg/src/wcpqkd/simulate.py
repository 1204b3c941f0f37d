"""Pulse-level Monte Carlo simulation of BB84 sessions.

Each pulse draws a Poisson photon number; survival through fibre and
receiver optics is simulated per photon (binomial thinning), so the
analytic link model is validated by an independent mechanism.  Detection
happens when at least one photon survives or a dark count fires; when
both coincide in a gate the signal takes precedence for the recorded bit.

Sessions are processed in fixed-size blocks, each with its own
counter-based Philox stream keyed by (seed, block index).  Block results
merge by concatenation in block order, so the outcome is bit-identical
for any processing order or degree of parallelism.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import MASK64, stream_rng
from .link import ChannelParams, DetectorParams, SourceParams, transmission

BLOCK_SIZE = 1 << 16
# reserved Philox block-key for the error-estimation sampling stream
_SAMPLE_STREAM = MASK64


class ConfigError(ValueError):
    """Simulation configuration violates a protocol constraint."""


@dataclass(frozen=True)
class EveConfig:
    """Photon-number-splitting eavesdropper.

    She blocks single-photon pulses, keeps one photon of every multi-photon
    pulse, and forwards the rest over her substituted channel.
    replacement_transmission is her end-to-end delivery probability per
    forwarded photon into the receiver's gate (a lossless substitution,
    replacement_transmission = 1, guarantees a click for every forwarded
    pulse); it must not fall below the fibre transmission she replaces.
    """
    strategy: str = "pns"
    replacement_transmission: float = 1.0

    def __post_init__(self):
        if self.strategy != "pns":
            raise ConfigError(f"unknown eavesdropper strategy {self.strategy!r}")
        if not 0 < self.replacement_transmission <= 1:
            raise ConfigError(
                f"replacement_transmission must be in (0, 1], got {self.replacement_transmission}")


@dataclass(frozen=True)
class SimConfig:
    n_pulses: int
    seed: int
    source: SourceParams = SourceParams(mu=0.1)
    channel: ChannelParams = ChannelParams(length_km=10.0)
    detector: DetectorParams = DetectorParams()
    eve: EveConfig | None = None

    def __post_init__(self):
        if self.n_pulses < 1:
            raise ConfigError(f"n_pulses must be >= 1, got {self.n_pulses}")


@dataclass(frozen=True)
class PulseLog:
    """Sender-side record: one bit and basis per pulse."""
    bits: np.ndarray
    bases: np.ndarray


@dataclass(frozen=True)
class DetectionLog:
    """Receiver-side record: basis, recorded bit and detection flag per pulse."""
    bits: np.ndarray
    bases: np.ndarray
    detected: np.ndarray


@dataclass(frozen=True)
class QberEstimate:
    value: float
    sample_size: int
    low_confidence: bool


@dataclass
class SessionResult:
    """Outcome of one simulated session.

    alice_sifted/bob_sifted are the keys after removal of the disclosed
    error-estimation sample; sifted_count is the pre-disclosure length.
    mismatch_count is the simulator-side full-key error count (available
    because both keys are visible here), used for cross-validation.
    """
    alice_sifted: np.ndarray
    bob_sifted: np.ndarray
    detected_count: int
    sifted_count: int
    qber_est: float
    eve_known_fraction: float
    n_pulses: int = 0
    sample_size: int = 0
    qber_low_confidence: bool = False
    signal_sifted_count: int = 0
    eve_known_count: int = 0
    mismatch_count: int = 0


def sift(alice: PulseLog, bob: DetectionLog) -> tuple[np.ndarray, np.ndarray]:
    """Keep exactly the detected positions with matching bases, in order."""
    n = len(alice.bits)
    if not (len(alice.bases) == n and len(bob.bits) == len(bob.bases)
            == len(bob.detected) == n):
        raise ValueError("record streams must have equal length")
    keep = bob.detected & (alice.bases == bob.bases)
    return alice.bits[keep], bob.bits[keep]


def estimate_qber(alice_key: np.ndarray, bob_key: np.ndarray,
                  sample_fraction: float, seed: int
                  ) -> tuple[QberEstimate, tuple[np.ndarray, np.ndarray]]:
    """Disclose a uniform sample of both keys and estimate the error rate.

    The compared positions are removed from the returned key pair.  Samples
    below 100 bits are flagged low-confidence rather than rejected.
    """
    alice_key = np.asarray(alice_key, dtype=np.uint8)
    bob_key = np.asarray(bob_key, dtype=np.uint8)
    if len(alice_key) != len(bob_key):
        raise ValueError("keys must have equal length")
    if not 0 < sample_fraction < 1:
        raise ValueError(f"sample_fraction must be in (0, 1), got {sample_fraction}")
    n = len(alice_key)
    k = min(n, max(1, round(n * sample_fraction))) if n else 0
    if k == 0:
        return QberEstimate(value=math.nan, sample_size=0, low_confidence=True), \
            (alice_key, bob_key)
    rng = stream_rng(seed, _SAMPLE_STREAM)
    pos = rng.choice(n, size=k, replace=False)
    mism = int(np.count_nonzero(alice_key[pos] != bob_key[pos]))
    keep = np.ones(n, dtype=bool)
    keep[pos] = False
    est = QberEstimate(value=mism / k, sample_size=k, low_confidence=k < 100)
    return est, (alice_key[keep], bob_key[keep])


def _simulate_block(cfg: SimConfig, block: int, m: int):
    """One pulse block; returns the sifted slice plus its counters."""
    rng = stream_rng(cfg.seed, block)
    det = cfg.detector
    t = transmission(cfg.channel)

    bits_a = rng.integers(0, 2, m, dtype=np.uint8)
    bases_a = rng.integers(0, 2, m, dtype=np.uint8)
    n_phot = rng.poisson(cfg.source.mu, m)

    if cfg.eve is None:
        survivors = rng.binomial(n_phot, t * det.efficiency)
    else:
        t_rep = cfg.eve.replacement_transmission
        if t_rep < t:
            raise ConfigError(
                f"replacement transmission {t_rep} below channel transmission {t}: "
                "the eavesdropper would lower the detection rate and reveal herself")
        forwarded = np.where(n_phot >= 2, n_phot - 1, 0)
        survivors = rng.binomial(forwarded, t_rep)

    signal = survivors > 0
    dark = rng.random(m) < det.dark_prob
    detected = signal | dark

    bases_b = rng.integers(0, 2, m, dtype=np.uint8)
    flips = (rng.random(m) < det.modulation_error).astype(np.uint8)
    noise_bits = rng.integers(0, 2, m, dtype=np.uint8)

    same = bases_a == bases_b
    # same-basis signal: sender's bit, flipped with the modulation error
    # probability; wrong-basis signal and dark-only gates record noise
    bits_b = np.where(signal & same, bits_a ^ flips, noise_bits).astype(np.uint8)

    a_sift, b_sift = sift(PulseLog(bits_a, bases_a),
                          DetectionLog(bits_b, bases_b, detected))
    keep = detected & same
    signal_sifted = int(np.count_nonzero(signal & keep))
    # under PNS every delivered signal pulse was multi-photon, and the
    # eavesdropper measures her stored photon after basis reconciliation
    eve_known = signal_sifted if cfg.eve is not None else 0
    return {
        "alice": a_sift,
        "bob": b_sift,
        "detected": int(np.count_nonzero(detected)),
        "signal_sifted": signal_sifted,
        "eve_known": eve_known,
    }


def run_session(cfg: SimConfig, qber_sample_fraction: float = 0.1) -> SessionResult:
    """Simulate one full session: transmission, detection, sifting and the
    error-estimation disclosure round.

    Deterministic for a fixed seed regardless of block processing order.
    """
    n_blocks = (cfg.n_pulses + BLOCK_SIZE - 1) // BLOCK_SIZE
    parts = []
    for b in range(n_blocks):
        m = min(BLOCK_SIZE, cfg.n_pulses - b * BLOCK_SIZE)
        parts.append(_simulate_block(cfg, b, m))

    alice = np.concatenate([p["alice"] for p in parts]) if parts else np.empty(0, np.uint8)
    bob = np.concatenate([p["bob"] for p in parts]) if parts else np.empty(0, np.uint8)
    detected_count = sum(p["detected"] for p in parts)
    signal_sifted = sum(p["signal_sifted"] for p in parts)
    eve_known = sum(p["eve_known"] for p in parts)
    sifted_count = len(alice)
    mismatches = int(np.count_nonzero(alice != bob))

    if sifted_count:
        est, (alice, bob) = estimate_qber(alice, bob, qber_sample_fraction, cfg.seed)
    else:
        est = QberEstimate(value=math.nan, sample_size=0, low_confidence=True)

    return SessionResult(
        alice_sifted=alice,
        bob_sifted=bob,
        detected_count=detected_count,
        sifted_count=sifted_count,
        qber_est=est.value,
        eve_known_fraction=eve_known / sifted_count if sifted_count else 0.0,
        n_pulses=cfg.n_pulses,
        sample_size=est.sample_size,
        qber_low_confidence=est.low_confidence,
        signal_sifted_count=signal_sifted,
        eve_known_count=eve_known,
        mismatch_count=mismatches,
    )


def run_session_with_pns(cfg: SimConfig, qber_sample_fraction: float = 0.1) -> SessionResult:
    """run_session with the PNS eavesdropper required to be present."""
    if cfg.eve is None:
        raise ConfigError("config has no eavesdropper; set SimConfig.eve")
    return run_session(cfg, qber_sample_fraction)
