"""Key registration and reconstruction on top of the entropy-feature pipeline.

A challenge addresses a segment plus a bit window into its entropy-feature
stream. Registration characterizes the segment, derives the helper stream,
and hashes the masked response into a 256-bit secret key; reconstruction
repeats a single read in the field and must land on the same key. There is
no error correction anywhere on this path: stability comes entirely from
the helper-stream filtering.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import bits as bitutil
from .core import (
    InsufficientBits, Precision, generate_ef, generate_hs, select_precision,
)
from .dramsim import DeviceModel, InputPattern, ReadCondition, read_segment
from .hashing import hash_fields

CHALLENGE_BYTES = 32
DEFAULT_WINDOW_BITS = 256
DEFAULT_MIN_QUALIFIED = 128


@dataclass(frozen=True)
class Challenge:
    chip: int
    bank: int
    segment: int
    window_offset: int          # bit offset into the EF stream
    window_bits: int = DEFAULT_WINDOW_BITS

    def encode(self) -> bytes:
        """256-bit wire form: four big-endian u32 fields, rest zero."""
        return struct.pack(">IIII", self.chip, self.bank, self.segment,
                           self.window_offset) + b"\x00" * 16

    @classmethod
    def decode(cls, blob: bytes, window_bits: int = DEFAULT_WINDOW_BITS) -> "Challenge":
        if len(blob) != CHALLENGE_BYTES:
            raise ValueError("challenge must be 32 bytes")
        if blob[16:] != b"\x00" * 16:
            raise ValueError("challenge padding bits must be zero")
        chip, bank, segment, offset = struct.unpack(">IIII", blob[:16])
        return cls(chip, bank, segment, offset, window_bits)

    def validate(self, model: DeviceModel, frac_bits: int):
        model.geometry.check_address(self.chip, self.bank, self.segment)
        stream_bits = model.geometry.bitmap_rows * (3 + frac_bits)
        if self.window_offset % self.window_bits != 0:
            raise ValueError("window offset must be window-aligned")
        if self.window_offset + self.window_bits > stream_bits:
            raise ValueError("window exceeds the EF stream")

    @property
    def address(self) -> tuple[int, int, int]:
        return (self.chip, self.bank, self.segment)


@dataclass(frozen=True)
class CrpRecord:
    challenge: Challenge
    hs_mask: np.ndarray          # window-local qualification mask
    key: bytes                   # 256-bit secret key
    precision: Precision


def derive_key(response_bits: np.ndarray) -> bytes:
    """SK = h(R) with the response's bit length prefixed."""
    return hash_fields(response_bits)


def register(model: DeviceModel, challenge: Challenge, pattern: InputPattern = InputPattern(),
             omega2: int = 20, omega3: int = 50, theta: int = 0, sweep=None,
             frac_bits: int | None = None,
             min_qualified: int = DEFAULT_MIN_QUALIFIED) -> CrpRecord:
    """Characterize one challenge and derive its helper stream and key.

    frac_bits pins the fixed-point precision (the wire profile needs 5);
    when omitted it is measured from omega2 repeated reads.
    """
    if frac_bits is None:
        precision = select_precision(model, challenge.address, pattern, omega2)
    else:
        precision = Precision(0.0, frac_bits)
    challenge.validate(model, precision.frac_bits)
    hs, ref = generate_hs(model, challenge.address, pattern, precision,
                          omega=omega3, theta=theta, temperature_sweep=sweep)
    lo, hi = challenge.window_offset, challenge.window_offset + challenge.window_bits
    window_mask = hs.mask[lo:hi]
    if int(window_mask.sum()) < min_qualified:
        raise InsufficientBits(
            f"window at bit {lo} qualifies {int(window_mask.sum())} < {min_qualified} bits")
    response = ref.bits[lo:hi][window_mask == 1]
    return CrpRecord(challenge, window_mask.copy(), derive_key(response), precision)


def reconstruct(model: DeviceModel, challenge: Challenge, hs_mask: np.ndarray,
                precision: Precision, condition: ReadCondition) -> bytes:
    """One fresh read under the given condition, masked and hashed into a key."""
    if hs_mask.size != challenge.window_bits:
        raise ValueError("helper-stream mask does not match the challenge window")
    challenge.validate(model, precision.frac_bits)
    bmp = read_segment(model, challenge.chip, challenge.bank, challenge.segment, condition)
    ef = generate_ef(bmp, precision.frac_bits)
    lo, hi = challenge.window_offset, challenge.window_offset + challenge.window_bits
    response = ef.bits[lo:hi][np.asarray(hs_mask, dtype=np.uint8) == 1]
    return derive_key(response)


def register_many(model: DeviceModel, challenges, pattern: InputPattern = InputPattern(),
                  omega2: int = 20, omega3: int = 50, theta: int = 0, sweep=None,
                  frac_bits: int | None = None,
                  min_qualified: int = DEFAULT_MIN_QUALIFIED) -> list[CrpRecord]:
    """Register a batch of challenges, characterizing each segment only once.

    Challenges whose window qualifies too few bits are skipped.
    """
    by_segment: dict[tuple[int, int, int], list[Challenge]] = {}
    for ch in challenges:
        by_segment.setdefault(ch.address, []).append(ch)
    records = []
    for address, group in by_segment.items():
        if frac_bits is None:
            precision = select_precision(model, address, pattern, omega2)
        else:
            precision = Precision(0.0, frac_bits)
        hs, ref = generate_hs(model, address, pattern, precision,
                              omega=omega3, theta=theta, temperature_sweep=sweep)
        for ch in group:
            ch.validate(model, precision.frac_bits)
            lo, hi = ch.window_offset, ch.window_offset + ch.window_bits
            window_mask = hs.mask[lo:hi]
            if int(window_mask.sum()) < min_qualified:
                continue
            response = ref.bits[lo:hi][window_mask == 1]
            records.append(CrpRecord(ch, window_mask.copy(), derive_key(response), precision))
    return records


def windows_for_segment(model: DeviceModel, frac_bits: int, address,
                        window_bits: int = DEFAULT_WINDOW_BITS) -> list[Challenge]:
    """Window-aligned challenges into one segment's EF stream."""
    chip, bank, segment = address
    stream_bits = model.geometry.bitmap_rows * (3 + frac_bits)
    return [Challenge(chip, bank, segment, off, window_bits)
            for off in range(0, stream_bits - window_bits + 1, window_bits)]


def enumerate_windows(model: DeviceModel, frac_bits: int,
                      window_bits: int = DEFAULT_WINDOW_BITS) -> list[Challenge]:
    """All window-aligned challenges the geometry supports."""
    geo = model.geometry
    return [ch
            for c in range(geo.chips)
            for b in range(geo.banks_per_chip)
            for s in range(geo.segments_per_bank)
            for ch in windows_for_segment(model, frac_bits, (c, b, s), window_bits)]


def write_enrollment_records(path, records: list[CrpRecord]):
    """One line per CRP: hex challenge, hex helper stream, hex key, frac_bits."""
    with open(path, "w") as fh:
        for rec in records:
            fh.write(f"{rec.challenge.encode().hex()} {bitutil.to_hex(rec.hs_mask)} "
                     f"{rec.key.hex()} {rec.precision.frac_bits}\n")


def read_enrollment_records(path) -> list[CrpRecord]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            ch_hex, hs_hex, sk_hex, frac = line.split()
            mask = bitutil.from_hex(hs_hex)
            records.append(CrpRecord(
                Challenge.decode(bytes.fromhex(ch_hex), window_bits=mask.size),
                mask, bytes.fromhex(sk_hex), Precision(0.0, int(frac))))
    return records
