"""Two-party classical post-processing: Cascade reconciliation and
Toeplitz privacy amplification.

Cascade runs as an explicit exchange between the reference party (who
answers parity queries over her key) and the correcting party (who drives
the protocol against his).  Every disclosed parity is one transcript entry
and one bit of leakage; replaying a transcript against the same starting
key reproduces the corrected key bit-exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import MASK64, stream_rng
from .link import LinkBudget
from .rates import RateParams, SecurityViolation, binary_entropy, pa_fraction

CASCADE_PASSES = 4
FIRST_BLOCK_FACTOR = 0.73
VERIFY_HASH_BITS = 64

# Philox stream ids carved out of the shared seed
_PERM_STREAM_BASE = 1           # streams 1..4: inter-pass permutations
_VERIFY_STREAM = MASK64 - 1     # verification hash base
_TOEPLITZ_STREAM = MASK64 - 2   # hash-matrix diagonal

_M61 = (1 << 61) - 1


class ResidualErrors(Exception):
    """Verification hash mismatch after reconciliation: the error estimate
    was far below the true rate.  Retry with a larger estimate."""


@dataclass(frozen=True)
class PaParams:
    """Privacy-amplification inputs: seed for the hash matrix (also used to
    derive the reconciliation streams in the pipeline) and the extra
    shrinkage margin in bits."""
    hash_seed: int
    security_margin_bits: int = 30

    def __post_init__(self):
        if self.security_margin_bits < 0:
            raise ValueError(
                f"security_margin_bits must be >= 0, got {self.security_margin_bits}")


@dataclass
class ReconciliationReport:
    """measured_efficiency is the disclosed leakage relative to the Shannon
    cost n*H2(e) of the error rate actually corrected (infinite for an
    error-free run, where any disclosure is pure overhead)."""
    corrected_key: np.ndarray
    leakage_bits: int
    passes: int
    measured_efficiency: float
    transcript: list[tuple[int, int, int, int]]
    corrected_errors: int
    parity_bits: int
    verification_bits: int = VERIFY_HASH_BITS


@dataclass
class KeyPipelineReport:
    """Full bit-rate ledger of one session's post-processing."""
    n_pulses: int
    detected_count: int
    sifted_count: int
    sample_disclosed: int
    qber_est: float
    reconciled_length: int
    corrected_errors: int
    leakage_bits: int
    measured_efficiency: float
    model_ec_bits: float
    pa_fraction: float
    eve_attributed_qber: float
    security_margin_bits: int
    final_length: int
    final_key: np.ndarray
    transcript: list[tuple[int, int, int, int]]


def _first_block_size(n: int, e_est: float) -> int:
    k = math.ceil(FIRST_BLOCK_FACTOR / e_est)
    return max(1, min(k, n // 2 if n >= 2 else 1))


def _poly_hash(key: np.ndarray, seed: int) -> int:
    """Seeded polynomial hash of a bit string over the Mersenne field 2^61-1,
    folded word-wise; used for the final integrity comparison."""
    rng = stream_rng(seed, _VERIFY_STREAM)
    base = (int(rng.integers(2, _M61 - 1, dtype=np.uint64)) | 1) % _M61
    padded = np.zeros(((len(key) + 63) // 64) * 64, dtype=np.uint8)
    padded[: len(key)] = key
    words = np.packbits(padded.reshape(-1, 64), axis=1)
    h = len(key) % _M61
    for w in words:
        h = (h * base + int.from_bytes(w.tobytes(), "big")) % _M61
    return h


class _LiveAnswers:
    """Reference-party actor: answers parity queries over her static key and
    records every answer in the transcript."""

    def __init__(self, key: np.ndarray, perms):
        self._prefix = []
        for perm in perms:
            permuted = key[perm]
            self._prefix.append(np.concatenate(([0], np.cumsum(permuted, dtype=np.int64))))
        self.transcript: list[tuple[int, int, int, int]] = []

    def parity(self, pass_no: int, lo: int, hi: int) -> int:
        pre = self._prefix[pass_no - 1]
        p = int(pre[hi] - pre[lo]) & 1
        self.transcript.append((pass_no, lo, hi, p))
        return p


class _RecordedAnswers:
    """Replays a transcript: yields the recorded parities and checks that the
    query sequence matches the recording."""

    def __init__(self, transcript):
        self._it = iter(transcript)
        self.transcript = list(transcript)

    def parity(self, pass_no: int, lo: int, hi: int) -> int:
        try:
            rec = next(self._it)
        except StopIteration:
            raise ValueError("transcript exhausted before the protocol finished")
        if rec[:3] != (pass_no, lo, hi):
            raise ValueError(f"transcript query mismatch: expected {rec[:3]}, "
                             f"protocol asked ({pass_no}, {lo}, {hi})")
        return rec[3]


def _run_cascade(key_b: np.ndarray, answers, e_est: float, seed: int, perms):
    """Drive the correcting party against a parity source.

    Maintains, per processed pass, the parity difference of each top-level
    block; a flip toggles the difference of the containing block in every
    processed pass, and odd blocks are re-searched smallest-first.
    """
    n = len(key_b)
    key = key_b.copy()
    k1 = _first_block_size(n, e_est)

    inv = []
    for perm in perms:
        ip = np.empty(n, dtype=np.int64)
        ip[perm] = np.arange(n, dtype=np.int64)
        inv.append(ip)
    permuted = [key[perm] for perm in perms]

    block_size = [min(k1 * 2 ** p, n) for p in range(CASCADE_PASSES)]
    diff = [None] * CASCADE_PASSES
    corrections = 0

    def bob_parity(p, lo, hi):
        return int(np.count_nonzero(permuted[p][lo:hi])) & 1

    def flip(p, pos):
        nonlocal corrections
        real = int(perms[p][pos])
        key[real] ^= 1
        corrections += 1
        touched = []
        for q in range(CASCADE_PASSES):
            qpos = int(inv[q][real])
            permuted[q][qpos] ^= 1
            if diff[q] is None:
                continue  # pass not swept yet; its view stays in sync above
            b = qpos // block_size[q]
            diff[q][b] ^= 1
            touched.append((q, b))
        return touched

    def binary_search(p, b):
        """Locate one erroneous bit in an odd-difference block and flip it."""
        k = block_size[p]
        lo, hi = b * k, min((b + 1) * k, n)
        while hi - lo > 1:
            mid = lo + (hi - lo + 1) // 2
            if answers.parity(p + 1, lo, mid) != bob_parity(p, lo, mid):
                hi = mid
            else:
                lo = mid
        return flip(p, lo)

    pending: set[tuple[int, int]] = set()

    def drain():
        while pending:
            p, b = min(pending, key=lambda pb: (block_size[pb[0]], pb[0], pb[1]))
            if diff[p][b] & 1 == 0:
                pending.discard((p, b))
                continue
            pending.discard((p, b))
            for q, bb in binary_search(p, b):
                if diff[q][bb] & 1:
                    pending.add((q, bb))
                else:
                    pending.discard((q, bb))

    for p in range(CASCADE_PASSES):
        k = block_size[p]
        starts = np.arange(0, n, k)
        a_par = np.array([answers.parity(p + 1, int(s), int(min(s + k, n)))
                          for s in starts], dtype=np.uint8)
        b_par = (np.add.reduceat(permuted[p], starts) & 1).astype(np.uint8)
        diff[p] = a_par ^ b_par
        for b in np.nonzero(diff[p])[0]:
            pending.add((p, int(b)))
        drain()

    return key, corrections


def _pass_permutations(n: int, seed: int):
    """Pass 1 works in natural order; later passes use seeded permutations."""
    perms = [np.arange(n, dtype=np.int64)]
    for p in range(1, CASCADE_PASSES):
        perms.append(stream_rng(seed, _PERM_STREAM_BASE + p).permutation(n))
    return perms


def cascade_reconcile(key_a: np.ndarray, key_b: np.ndarray, e_est: float,
                      seed: int) -> ReconciliationReport:
    """Reconcile key_b toward key_a with 4-pass Cascade.

    First-pass blocks hold ~0.73/e_est bits and double each pass; passes 2-4
    shuffle with seeded permutations.  Integrity is confirmed by comparing
    seeded polynomial hashes, charged as 64 bits of leakage on top of the
    disclosed parities.  Raises ResidualErrors on hash mismatch.
    """
    key_a = np.asarray(key_a, dtype=np.uint8)
    key_b = np.asarray(key_b, dtype=np.uint8)
    if len(key_a) != len(key_b):
        raise ValueError("keys must have equal length")
    n = len(key_a)
    if n < 1000:
        raise ValueError(f"reconciliation needs >= 1000 bits, got {n}")
    if not 0.0 < e_est < 0.5:
        raise ValueError(f"e_est must be in (0, 0.5), got {e_est}")

    perms = _pass_permutations(n, seed)
    answers = _LiveAnswers(key_a, perms)
    corrected, corrections = _run_cascade(key_b, answers, e_est, seed, perms)

    if _poly_hash(key_a, seed) != _poly_hash(corrected, seed):
        raise ResidualErrors(
            "verification hash mismatch after reconciliation; e_est was likely "
            "far below the true error rate")

    parity_bits = len(answers.transcript)
    leakage = parity_bits + VERIFY_HASH_BITS
    denom = n * binary_entropy(corrections / n)
    return ReconciliationReport(
        corrected_key=corrected,
        leakage_bits=leakage,
        passes=CASCADE_PASSES,
        measured_efficiency=leakage / denom if denom > 0 else math.inf,
        transcript=answers.transcript,
        corrected_errors=corrections,
        parity_bits=parity_bits,
    )


def replay_transcript(key_b: np.ndarray, transcript, e_est: float,
                      seed: int) -> np.ndarray:
    """Reproduce the corrected key from the recorded parity exchanges alone."""
    key_b = np.asarray(key_b, dtype=np.uint8)
    perms = _pass_permutations(len(key_b), seed)
    corrected, _ = _run_cascade(key_b, _RecordedAnswers(transcript), e_est, seed, perms)
    return corrected


def _pa_frac_or_zero(link: LinkBudget, e: float) -> float:
    if e >= 0.5:
        return 0.0
    try:
        return pa_fraction(link.detect_prob, link.multiphoton_prob, e)
    except SecurityViolation:
        return 0.0


def final_key_length(n_sifted: int, e: float, leakage_bits: int,
                     link: LinkBudget, pa: PaParams) -> int:
    """Secure output length: the measured-leakage analogue of the gain formula.

    m = floor(n_sifted * pa_fraction(P, S, e)) - leakage - margin, floored at
    zero.  e is the error rate charged to the eavesdropper; operating points
    violating the PNS criterion yield zero.
    """
    if n_sifted <= 0:
        raise ValueError(f"n_sifted must be > 0, got {n_sifted}")
    if leakage_bits < 0:
        raise ValueError(f"leakage_bits must be >= 0, got {leakage_bits}")
    frac = _pa_frac_or_zero(link, e)
    m = math.floor(n_sifted * frac) - leakage_bits - pa.security_margin_bits
    return max(m, 0)


def _toeplitz_windows(seed: int, n: int, m: int):
    """The m row windows of the seeded Toeplitz matrix as n-bit integers."""
    diag = stream_rng(seed, _TOEPLITZ_STREAM).integers(0, 2, n + m - 1, dtype=np.uint8)
    r = int.from_bytes(np.packbits(diag, bitorder="little").tobytes(), "little")
    mask = (1 << n) - 1
    return [(r >> i) & mask for i in range(m)]


_windows_cache: dict[tuple[int, int, int], list[int]] = {}


def toeplitz_hash(key, m: int, seed: int) -> np.ndarray:
    """Compress a bit string with the seeded m x n Toeplitz matrix over GF(2).

    The matrix is defined by n+m-1 seeded uniform bits along its diagonals;
    the output is T*key, deterministic given (seed, n, m).  Row products are
    evaluated as masked popcounts on big integers, which is exact.
    """
    key = np.asarray(key, dtype=np.uint8)
    n = len(key)
    if not 0 <= m <= n:
        raise ValueError(f"output length must be in [0, {n}], got {m}")
    if m == 0:
        return np.empty(0, dtype=np.uint8)
    ck = (seed, n, m)
    if ck not in _windows_cache:
        if len(_windows_cache) >= 8:
            _windows_cache.clear()
        _windows_cache[ck] = _toeplitz_windows(seed, n, m)
    windows = _windows_cache[ck]
    krev = int.from_bytes(np.packbits(key[::-1], bitorder="little").tobytes(), "little")
    return np.fromiter(((w & krev).bit_count() & 1 for w in windows),
                       dtype=np.uint8, count=m)


def run_pipeline(session, link: LinkBudget, rate_params: RateParams,
                 pa: PaParams) -> KeyPipelineReport:
    """Chain reconciliation and privacy amplification over a session's keys.

    The session already carries the error-estimation disclosure round; its
    estimate seeds the Cascade block size.  The eavesdropper is charged with
    the reconciled error rate minus the calibrated modulation contribution
    of the link budget, floored at zero.  Raises ResidualErrors if
    verification fails; emits an empty key when nothing survives.
    """
    alice = np.asarray(session.alice_sifted, dtype=np.uint8)
    bob = np.asarray(session.bob_sifted, dtype=np.uint8)
    if len(alice) == 0:
        raise ValueError("session has no sifted key")

    e_est = session.qber_est
    if not math.isfinite(e_est) or e_est <= 0.0:
        e_est = 1e-3
    e_est = min(max(e_est, 1e-3), 0.49)

    rec = cascade_reconcile(alice, bob, e_est, seed=pa.hash_seed)
    n_rec = len(rec.corrected_key)

    # charge the eavesdropper with everything the calibrated modulation error
    # does not explain, never less than the dark-count share of the budget
    e_measured = rec.corrected_errors / n_rec
    dark_qber = (link.detect_prob - link.signal_prob) / 2.0 / link.detect_prob
    modulation_qber = link.qber - dark_qber
    e_attr = max(e_measured - modulation_qber, dark_qber)

    frac = _pa_frac_or_zero(link, e_attr)
    m = final_key_length(n_rec, e_attr, rec.leakage_bits, link, pa)
    final = toeplitz_hash(rec.corrected_key, m, pa.hash_seed)

    return KeyPipelineReport(
        n_pulses=session.n_pulses,
        detected_count=session.detected_count,
        sifted_count=session.sifted_count,
        sample_disclosed=session.sample_size,
        qber_est=session.qber_est,
        reconciled_length=n_rec,
        corrected_errors=rec.corrected_errors,
        leakage_bits=rec.leakage_bits,
        measured_efficiency=rec.measured_efficiency,
        model_ec_bits=rate_params.correction_efficiency * binary_entropy(e_measured) * n_rec,
        pa_fraction=frac,
        eve_attributed_qber=e_attr,
        security_margin_bits=pa.security_margin_bits,
        final_length=m,
        final_key=final,
        transcript=rec.transcript,
    )
