"""Entropy-feature extraction, fixed-point precision selection, and
helper-stream generation.

The response substrate is the per-row Shannon entropy of bitmap byte
values, quantized to unsigned fixed point with 3 integer bits and a
characterization-chosen number of fractional bits. A helper stream marks
which bit positions stayed stable across repeated reads under varying
conditions; masking the entropy-feature stream with it yields the final
reliable response.
"""

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .dramsim import DeviceModel, InputPattern, ReadCondition, read_segment, reference_read

INT_BITS = 3
MAX_FRAC_BITS = 23
MIN_FRAC_BITS = 1

# Nonce ranges keep the noise draws of the two characterization stages and
# ad-hoc validation reads from aliasing each other.
PRECISION_NONCE_BASE = 1 << 20
SWEEP_NONCE_BASE = 1 << 21

DEFAULT_SWEEP_TEMPS = (25.0, 35.0, 45.0, 55.0)


class InsufficientBits(ValueError):
    """Raised when a response would carry fewer qualified bits than required."""


def _noise_free(model: DeviceModel) -> bool:
    """True when reads depend only on temperature, never on the nonce."""
    return model.f_marginal == 0.0 or model.p_noise_max == 0.0


def row_entropy(row) -> float:
    """Shannon entropy (bits) of the byte-value histogram of one bitmap row."""
    row = np.asarray(row, dtype=np.uint8)
    if row.size == 0:
        raise ValueError("empty row")
    counts = np.bincount(row, minlength=256)
    p = counts[counts > 0] / row.size
    return float(-(p * np.log2(p)).sum())


def _entropy_rows(data: np.ndarray) -> np.ndarray:
    rows, cols = data.shape
    idx = data.astype(np.int64) + 256 * np.arange(rows)[:, None]
    counts = np.bincount(idx.ravel(), minlength=256 * rows).reshape(rows, 256)
    p = counts / cols
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(counts > 0, p * np.log2(p), 0.0)
    return -terms.sum(axis=1)


def quantize(values, frac_bits: int) -> np.ndarray:
    """Truncating fixed-point encoding, 3 integer + frac_bits fractional bits,
    MSB-first per value, concatenated in order."""
    if not (MIN_FRAC_BITS <= frac_bits <= MAX_FRAC_BITS):
        raise ValueError(f"frac_bits must lie in [{MIN_FRAC_BITS}, {MAX_FRAC_BITS}]")
    values = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if np.any(values < 0) or np.any(values >= (1 << INT_BITS)):
        raise ValueError(f"values must lie in [0, {1 << INT_BITS})")
    scaled = np.floor(values * (1 << frac_bits)).astype(np.int64)
    shifts = np.arange(INT_BITS + frac_bits - 1, -1, -1)
    return ((scaled[:, None] >> shifts) & 1).astype(np.uint8).ravel()


@dataclass(frozen=True)
class EntropyFeatures:
    values: np.ndarray   # per-row entropy, float64
    frac_bits: int
    bits: np.ndarray     # quantized stream, len(values) * (3 + frac_bits)

    @property
    def bits_per_row(self) -> int:
        return INT_BITS + self.frac_bits


def generate_ef(bitmap, frac_bits: int) -> EntropyFeatures:
    """Per-row entropies of a bitmap plus their fixed-point bit stream."""
    data = bitmap.data if hasattr(bitmap, "data") else np.asarray(bitmap, dtype=np.uint8)
    if data.ndim != 2 or data.size == 0:
        raise ValueError("bitmap must be a non-empty 2-D byte matrix")
    if data.shape[1] >= 256:
        raise ValueError("row width must stay below 256 bytes for 3 integer bits")
    values = _entropy_rows(data)
    return EntropyFeatures(values, frac_bits, quantize(values, frac_bits))


@dataclass(frozen=True)
class Precision:
    dmax: float          # 0.0 is the noise-free sentinel
    frac_bits: int


def frac_bits_for(dmax: float) -> int:
    if dmax < 0:
        raise ValueError("dmax must be >= 0")
    if dmax == 0.0:
        return MAX_FRAC_BITS
    return int(np.clip(np.floor(np.log2(1.0 / dmax)), MIN_FRAC_BITS, MAX_FRAC_BITS))


def select_precision(model: DeviceModel, address, pattern: InputPattern,
                     omega: int = 20, nonce_base: int = PRECISION_NONCE_BASE) -> Precision:
    """Pick the fractional precision from the spread of repeated reads.

    The spread is the elementwise maximum absolute difference between the
    real-valued entropy arrays of omega reads at the operating temperature;
    the chosen step is the largest power of two below it.
    """
    if omega < 2:
        raise ValueError("omega must be >= 2")
    chip, bank, segment = address
    if _noise_free(model):
        # repeated reads at the operating temperature are bit-identical
        return Precision(0.0, MAX_FRAC_BITS)
    efs = np.stack([
        _entropy_rows(read_segment(model, chip, bank, segment,
                                   ReadCondition(25.0, nonce_base + k, pattern)).data)
        for k in range(omega)
    ])
    dmax = 0.0
    for i in range(omega - 1):
        dmax = max(dmax, float(np.abs(efs[i + 1:] - efs[i]).max()))
    return Precision(dmax, frac_bits_for(dmax))


@dataclass(frozen=True)
class HelperStream:
    mask: np.ndarray     # one bit per EF-stream position, 1 = qualified
    theta: int
    omega: int

    def qualified_count(self) -> int:
        return int(self.mask.sum())


def sweep_temperatures(omega: int, temps=DEFAULT_SWEEP_TEMPS) -> list[float]:
    """Omega read temperatures cycling the characterization grid."""
    return [float(temps[k % len(temps)]) for k in range(omega)]


def flip_counters(model: DeviceModel, address, pattern: InputPattern, frac_bits: int,
                  omega: int = 50, temperature_sweep=None,
                  nonce_base: int = SWEEP_NONCE_BASE) -> tuple[np.ndarray, EntropyFeatures]:
    """Per-position counts of reads whose EF bit differed from the reference.

    Returns the counter array together with the reference entropy features
    (noise-suppressed read at the reference temperature).
    """
    if omega < 1:
        raise ValueError("omega must be >= 1")
    chip, bank, segment = address
    temps = temperature_sweep if temperature_sweep is not None else sweep_temperatures(omega)
    temps = [float(temps[k % len(temps)]) for k in range(omega)]
    ref = generate_ef(reference_read(model, chip, bank, segment, pattern), frac_bits)
    counters = np.zeros(ref.bits.size, dtype=np.int64)
    if _noise_free(model):
        # reads at one temperature are all identical; fold duplicates
        for temp, count in Counter(temps).items():
            bmp = read_segment(model, chip, bank, segment, ReadCondition(temp, nonce_base, pattern))
            counters += count * (generate_ef(bmp, frac_bits).bits != ref.bits)
        return counters, ref
    for k, temp in enumerate(temps):
        bmp = read_segment(model, chip, bank, segment, ReadCondition(temp, nonce_base + k, pattern))
        counters += generate_ef(bmp, frac_bits).bits != ref.bits
    return counters, ref


def mask_for_theta(counters: np.ndarray, theta: int, omega: int) -> HelperStream:
    if theta < 0:
        raise ValueError("theta must be >= 0")
    return HelperStream((counters <= theta).astype(np.uint8), theta, omega)


def generate_hs(model: DeviceModel, address, pattern: InputPattern, precision: Precision,
                omega: int = 50, theta: int = 0, temperature_sweep=None,
                nonce_base: int = SWEEP_NONCE_BASE) -> tuple[HelperStream, EntropyFeatures]:
    """Helper stream qualifying the EF positions that stayed stable across the sweep."""
    counters, ref = flip_counters(model, address, pattern, precision.frac_bits,
                                  omega, temperature_sweep, nonce_base)
    return mask_for_theta(counters, theta, omega), ref


@dataclass(frozen=True)
class Response:
    bits: np.ndarray


def apply_hs(ef: EntropyFeatures, hs: HelperStream, mode: str = "mask") -> Response:
    """Combine entropy features with a helper stream.

    ``mask`` keeps the EF bits at qualified positions in order (the default;
    the only reading under which responses can be perfectly stable).
    ``xnor`` is the literal bitwise combination, kept for fidelity
    experiments; it leaves unstable positions in place.
    """
    if ef.bits.size != hs.mask.size:
        raise ValueError(f"EF stream ({ef.bits.size}) and helper stream ({hs.mask.size}) lengths differ")
    if mode == "mask":
        return Response(ef.bits[hs.mask == 1].copy())
    if mode == "xnor":
        return Response((1 - (ef.bits ^ hs.mask)).astype(np.uint8))
    raise ValueError(f"unknown mode {mode!r}")
