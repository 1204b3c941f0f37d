"""Packed key files: 8-byte big-endian bit-length header, then the bits
packed most-significant-bit-first."""
from __future__ import annotations

import numpy as np

_HEADER_BYTES = 8


def pack_key(bits) -> bytes:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size and not np.all(bits <= 1):
        raise ValueError("key must contain only bits")
    return len(bits).to_bytes(_HEADER_BYTES, "big") + np.packbits(bits).tobytes()


def unpack_key(blob: bytes) -> np.ndarray:
    if len(blob) < _HEADER_BYTES:
        raise ValueError("truncated key blob: missing length header")
    n = int.from_bytes(blob[:_HEADER_BYTES], "big")
    body = np.frombuffer(blob[_HEADER_BYTES:], dtype=np.uint8)
    if body.size * 8 < n:
        raise ValueError(f"truncated key blob: header says {n} bits")
    return np.unpackbits(body)[:n]


def write_key(path, bits) -> None:
    with open(path, "wb") as fh:
        fh.write(pack_key(bits))


def read_key(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return unpack_key(fh.read())


def write_transcript(path, transcript) -> None:
    """Line-oriented reconciliation log: 'pass lo hi parity' per exchange."""
    with open(path, "w") as fh:
        for pass_no, lo, hi, parity in transcript:
            fh.write(f"{pass_no} {lo} {hi} {parity}\n")


def read_transcript(path) -> list[tuple[int, int, int, int]]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            pass_no, lo, hi, parity = (int(tok) for tok in line.split())
            out.append((pass_no, lo, hi, parity))
    return out
