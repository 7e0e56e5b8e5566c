"""PUF quality statistics over simulated device populations.

Stages mirror the evaluation pipeline: raw bitmap bits, quantized
entropy-feature bits, and helper-stream-masked response bits. All bit
error rates are fractional Hamming distances against the reference-
temperature response of the same entity.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import bits as bitutil
from .core import (
    Precision, flip_counters, generate_ef, mask_for_theta, select_precision,
)
from .dramsim import DeviceModel, InputPattern, ReadCondition, read_segment, reference_read

VALIDATION_NONCE_BASE = 1 << 22


def fractional_hd(a, b) -> float:
    """Differing-bit count divided by length; inputs must have equal length."""
    a = bitutil.as_bits(a)
    b = bitutil.as_bits(b)
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("empty input")
    return float(np.mean(a != b))


@dataclass(frozen=True)
class BerReport:
    temperature: float
    stage: str                  # raw-dram | ef | masked
    ber: float
    theta: int | None = None    # masked stage only


@dataclass(frozen=True)
class UniquenessReport:
    scope: str                  # inter-segment | inter-bank | inter-chip
    samples: list[float]
    mean: float
    context: str = ""           # e.g. bank id for inter-segment studies


@dataclass(frozen=True)
class SegmentCharacterization:
    """Reference responses and flip counters of one segment, reusable across thetas."""
    address: tuple[int, int, int]
    precision: Precision
    ref_bitmap_bits: np.ndarray
    ref_ef_bits: np.ndarray
    counters: np.ndarray
    omega: int

    def helper_stream(self, theta: int):
        return mask_for_theta(self.counters, theta, self.omega)


def characterize_segment(model: DeviceModel, address, pattern: InputPattern = InputPattern(),
                         omega2: int = 20, omega3: int = 50, sweep=None,
                         frac_bits: int | None = None) -> SegmentCharacterization:
    if frac_bits is None:
        precision = select_precision(model, address, pattern, omega2)
    else:
        precision = Precision(0.0, frac_bits)
    counters, ref = flip_counters(model, address, pattern, precision.frac_bits,
                                  omega3, sweep)
    ref_bitmap = reference_read(model, *address, pattern)
    return SegmentCharacterization(tuple(address), precision, ref_bitmap.bit_array(),
                                   ref.bits, counters, omega3)


def ber_sweep(model: DeviceModel, address, pattern: InputPattern = InputPattern(),
              temperatures=(25.0, 35.0, 45.0, 55.0), reads_per_point: int = 10,
              thetas=(0, 1, 2), omega2: int = 20, omega3: int = 50,
              char: SegmentCharacterization | None = None) -> list[BerReport]:
    """Mean BER per temperature for every pipeline stage."""
    if char is None:
        char = characterize_segment(model, address, pattern, omega2, omega3)
    frac = char.precision.frac_bits
    streams = {theta: char.helper_stream(theta) for theta in thetas}
    masked_refs = {theta: char.ref_ef_bits[hs.mask == 1] for theta, hs in streams.items()}
    reports = []
    for t_i, temp in enumerate(temperatures):
        raw, ef_ber = [], []
        masked = {theta: [] for theta in thetas}
        for k in range(reads_per_point):
            nonce = VALIDATION_NONCE_BASE + 1000 * t_i + k
            bmp = read_segment(model, *address, ReadCondition(temp, nonce, pattern))
            raw.append(fractional_hd(bmp.bit_array(), char.ref_bitmap_bits))
            ef = generate_ef(bmp, frac)
            ef_ber.append(fractional_hd(ef.bits, char.ref_ef_bits))
            for theta, hs in streams.items():
                got = ef.bits[hs.mask == 1]
                want = masked_refs[theta]
                masked[theta].append(float(np.mean(got != want)) if want.size else 0.0)
        reports.append(BerReport(temp, "raw-dram", float(np.mean(raw))))
        reports.append(BerReport(temp, "ef", float(np.mean(ef_ber))))
        for theta in thetas:
            reports.append(BerReport(temp, "masked", float(np.mean(masked[theta])), theta))
    return reports


def reliable_bit_distribution(characterizations, thetas=(0, 1, 2, 5)) -> dict[int, list[int]]:
    """Per-theta qualified-bit counts across segments."""
    table = {theta: [] for theta in thetas}
    for char in characterizations:
        for theta in thetas:
            table[theta].append(char.helper_stream(theta).qualified_count())
    return table


def _pair_hd(a_bits, a_mask, b_bits, b_mask, min_overlap: int = 64):
    length = min(a_bits.size, b_bits.size)
    overlap = (a_mask[:length] == 1) & (b_mask[:length] == 1)
    if int(overlap.sum()) < min_overlap:
        return None
    return float(np.mean(a_bits[:length][overlap] != b_bits[:length][overlap]))


def uniqueness_study(entities, scope: str, context: str = "",
                     theta: int = 0) -> UniquenessReport:
    """Pairwise fractional HDs of responses on shared qualified positions.

    entities: list of SegmentCharacterization, one per compared entity
    (different chips, banks, or segments depending on scope).
    """
    if len(entities) < 2:
        raise ValueError("need at least two entities to compare")
    prepared = []
    for char in entities:
        hs = char.helper_stream(theta)
        prepared.append((char.ref_ef_bits, hs.mask))
    samples = []
    for i in range(len(prepared)):
        for j in range(i + 1, len(prepared)):
            hd = _pair_hd(prepared[i][0], prepared[i][1], prepared[j][0], prepared[j][1])
            if hd is not None:
                samples.append(hd)
    if not samples:
        raise ValueError("no entity pair shares enough qualified positions")
    return UniquenessReport(scope, samples, float(np.mean(samples)), context)


def entropy_profile(model: DeviceModel, address, temperatures=(25.0, 35.0, 45.0, 55.0),
                    pattern: InputPattern = InputPattern()) -> dict[float, np.ndarray]:
    """Per-row entropy at each temperature (reference read at 25 degrees)."""
    profile = {}
    for t_i, temp in enumerate(temperatures):
        if temp == 25.0:
            bmp = reference_read(model, *address, pattern)
        else:
            bmp = read_segment(model, *address,
                               ReadCondition(temp, VALIDATION_NONCE_BASE + t_i, pattern))
        profile[temp] = generate_ef(bmp, 1).values
    return profile


# --- CSV emitters ---------------------------------------------------------

def write_ber_csv(path, reports: list[BerReport]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["temperature", "stage", "theta", "ber"])
        for r in reports:
            w.writerow([repr(r.temperature), r.stage, "" if r.theta is None else r.theta,
                        repr(r.ber)])


def write_reliable_bits_csv(path, table: dict[int, list[int]]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta", "segment_index", "qualified_bits"])
        for theta in sorted(table):
            for seg_idx, count in enumerate(table[theta]):
                w.writerow([theta, seg_idx, count])


def write_uniqueness_csv(path, reports: list[UniquenessReport]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scope", "context", "pairs", "mean_hd"])
        for r in reports:
            w.writerow([r.scope, r.context, len(r.samples), repr(r.mean)])


def write_entropy_profile_csv(path, profile: dict[float, np.ndarray]):
    temps = sorted(profile)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row"] + [f"entropy_{t:g}C" for t in temps])
        rows = len(next(iter(profile.values())))
        for j in range(rows):
            w.writerow([j] + [repr(float(profile[t][j])) for t in temps])
