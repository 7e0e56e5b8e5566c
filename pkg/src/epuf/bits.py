"""Bit-string helpers shared across the pipeline and the wire codecs.

Bit streams are numpy uint8 arrays holding one 0/1 value per element.
Serialized form is a 32-bit big-endian bit count followed by the bits
packed MSB-first within each byte.
"""

import struct

import numpy as np


def as_bits(value) -> np.ndarray:
    """Coerce a '0101' string, bytes (8 bits per byte, MSB-first), or array to a bit array."""
    if isinstance(value, np.ndarray):
        return value.astype(np.uint8, copy=False)
    if isinstance(value, (bytes, bytearray)):
        return np.unpackbits(np.frombuffer(bytes(value), dtype=np.uint8))
    if isinstance(value, str):
        return np.frombuffer(value.encode("ascii"), dtype=np.uint8) - ord("0")
    return np.asarray(value, dtype=np.uint8)


def pack_bits(bits: np.ndarray) -> bytes:
    return np.packbits(as_bits(bits)).tobytes()


def to_wire(bits: np.ndarray) -> bytes:
    bits = as_bits(bits)
    return struct.pack(">I", bits.size) + pack_bits(bits)


def from_wire(blob: bytes) -> np.ndarray:
    if len(blob) < 4:
        raise ValueError("truncated bit-string blob")
    (nbits,) = struct.unpack(">I", blob[:4])
    nbytes = (nbits + 7) // 8
    if len(blob) != 4 + nbytes:
        raise ValueError(f"bit-string blob length mismatch: {len(blob)} bytes for {nbits} bits")
    return np.unpackbits(np.frombuffer(blob[4:], dtype=np.uint8))[:nbits]


def to_hex(bits: np.ndarray) -> str:
    return to_wire(bits).hex()


def from_hex(text: str) -> np.ndarray:
    return from_wire(bytes.fromhex(text.strip()))


def popcount(bits: np.ndarray) -> int:
    return int(as_bits(bits).sum())
