"""One-way hash used everywhere a 256-bit digest is needed.

Every hash input is a concatenation of length-prefixed fields: a 32-bit
big-endian bit count followed by the field's bits packed MSB-first.
Fixing both the function and the encoding makes digests reproducible
across independent implementations and immune to concatenation ambiguity.
"""

import hashlib

import numpy as np

from .bits import to_wire

DIGEST_BYTES = 32


def hash_fields(*fields) -> bytes:
    """SHA3-256 over length-prefixed fields (bytes are taken as 8 bits each)."""
    h = hashlib.sha3_256()
    for field in fields:
        if isinstance(field, np.ndarray):
            h.update(to_wire(field))
        elif isinstance(field, (bytes, bytearray)):
            h.update((8 * len(field)).to_bytes(4, "big"))
            h.update(bytes(field))
        else:
            raise TypeError(f"unhashable field type {type(field)!r}")
    return h.digest()
