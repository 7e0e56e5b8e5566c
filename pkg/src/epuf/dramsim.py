"""Simulated DRAM population with device-unique latency-failure behavior.

Each device is a pure function of its 64-bit seed: cell classes, failure
thresholds, and noise probabilities are derived from counter-mode BLAKE2b
hashing, so two constructions from the same seed are bit-identical and
reads are reproducible given an explicit nonce.

Cell classes:
  * always-fail cells flip on every reduced-timing read,
  * marginal cells flip once the read temperature reaches their threshold,
    XORed with an independent per-read noise flip,
  * stable cells never flip.

A flip toggles the written bit, so the set of failing positions is
independent of the input pattern. Within a byte, bit k of byte b is cell
8*b + k (LSB-first).

Always-fail density varies by bitmap row: each segment permutes a fixed
quantile grid of a Beta distribution whose mean is ``f_fail``. Row-to-row
density variation is what makes per-row entropy spread over its full
range and gives devices distinguishable entropy profiles; a flat density
would make every row statistically identical.
"""

import hashlib
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.stats import beta as _beta

TEMP_MIN = 25.0
TEMP_MAX = 55.0

BITMAP_MAGIC = b"EPUFBMAP"


class PatternKind(Enum):
    ALL_ZERO = "all-zero"
    ALL_ONE = "all-one"
    CHECKERBOARD = "checkerboard"
    SEEDED_RANDOM = "seeded-random"


@dataclass(frozen=True)
class InputPattern:
    kind: PatternKind = PatternKind.ALL_ZERO
    seed: int = 0

    def expand(self, nbytes: int) -> np.ndarray:
        if self.kind is PatternKind.ALL_ZERO:
            return np.zeros(nbytes, dtype=np.uint8)
        if self.kind is PatternKind.ALL_ONE:
            return np.full(nbytes, 0xFF, dtype=np.uint8)
        if self.kind is PatternKind.CHECKERBOARD:
            out = np.empty(nbytes, dtype=np.uint8)
            out[0::2] = 0x55
            out[1::2] = 0xAA
            return out
        rng = np.random.Generator(np.random.PCG64(_derive_seed(self.seed, tag=b"pattern")))
        return rng.integers(0, 256, size=nbytes, dtype=np.uint8)

    @classmethod
    def parse(cls, text: str) -> "InputPattern":
        text = text.strip().lower()
        if text.startswith("seeded-random"):
            seed = int(text.split(":", 1)[1]) if ":" in text else 0
            return cls(PatternKind.SEEDED_RANDOM, seed)
        for kind in PatternKind:
            if kind.value == text:
                return cls(kind)
        raise ValueError(f"unknown input pattern {text!r}")


@dataclass(frozen=True)
class Geometry:
    chips: int = 1
    banks_per_chip: int = 8
    segments_per_bank: int = 4
    segment_bytes: int = 32768
    bitmap_rows: int = 256

    def __post_init__(self):
        for name in ("chips", "banks_per_chip", "segments_per_bank", "segment_bytes", "bitmap_rows"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.segment_bytes % self.bitmap_rows != 0:
            raise ValueError("segment_bytes must divide evenly into bitmap rows")

    @property
    def row_bytes(self) -> int:
        return self.segment_bytes // self.bitmap_rows

    def check_address(self, chip: int, bank: int, segment: int):
        if not (0 <= chip < self.chips and 0 <= bank < self.banks_per_chip
                and 0 <= segment < self.segments_per_bank):
            raise IndexError(f"address ({chip},{bank},{segment}) outside geometry")


@dataclass(frozen=True)
class ReadCondition:
    temperature: float = TEMP_MIN
    read_nonce: int = 0
    pattern: InputPattern = field(default_factory=InputPattern)

    def __post_init__(self):
        if not (TEMP_MIN <= self.temperature <= TEMP_MAX):
            raise ValueError(f"temperature {self.temperature} outside [{TEMP_MIN}, {TEMP_MAX}] envelope")


@dataclass(frozen=True)
class Bitmap:
    data: np.ndarray  # (rows, cols) uint8

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def bit_array(self) -> np.ndarray:
        """Cell values as bits, LSB-first within each byte, row-major."""
        return np.unpackbits(self.data, axis=1, bitorder="little").ravel()

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(BITMAP_MAGIC)
            fh.write(struct.pack(">II", self.rows, self.cols))
            fh.write(self.data.tobytes())

    @classmethod
    def load(cls, path) -> "Bitmap":
        with open(path, "rb") as fh:
            header = fh.read(16)
            if len(header) != 16 or header[:8] != BITMAP_MAGIC:
                raise ValueError("not a bitmap dump")
            rows, cols = struct.unpack(">II", header[8:])
            raw = fh.read(rows * cols)
            if len(raw) != rows * cols:
                raise ValueError("truncated bitmap dump")
            return cls(np.frombuffer(raw, dtype=np.uint8).reshape(rows, cols).copy())


def _derive_seed(*parts: int, tag: bytes = b"") -> int:
    h = hashlib.blake2b(digest_size=16, person=b"epuf-dram")
    h.update(tag)
    for part in parts:
        h.update(struct.pack(">Q", part & 0xFFFFFFFFFFFFFFFF))
    return int.from_bytes(h.digest(), "big")


def _rng(*parts: int, tag: bytes) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(_derive_seed(*parts, tag=tag)))


@dataclass(frozen=True)
class _SegmentTable:
    always_fail: np.ndarray    # bool per cell
    marginal_idx: np.ndarray   # int64 cell indices
    marginal_theta: np.ndarray
    marginal_p_noise: np.ndarray


class DeviceModel:
    """Ground-truth failure behavior of one simulated device."""

    def __init__(self, device_seed: int, geometry: Geometry, f_fail: float = 0.30,
                 f_marginal: float = 1e-4, density_shape: float = 0.30,
                 p_noise_max: float = 0.05):
        if not (0.0 <= f_fail <= 1.0 and 0.0 <= f_marginal <= 1.0):
            raise ValueError("class fractions must lie in [0, 1]")
        if f_fail + f_marginal > 1.0:
            raise ValueError("f_fail + f_marginal must not exceed 1")
        if p_noise_max < 0:
            raise ValueError("p_noise_max must be >= 0")
        self.device_seed = int(device_seed)
        self.geometry = geometry
        self.f_fail = float(f_fail)
        self.f_marginal = float(f_marginal)
        self.density_shape = float(density_shape)
        self.p_noise_max = float(p_noise_max)
        self._density_grid = self._build_density_grid()
        self._segments: dict[tuple[int, int, int], _SegmentTable] = {}

    def _build_density_grid(self) -> np.ndarray:
        rows = self.geometry.bitmap_rows
        if self.f_fail <= 0.0:
            return np.zeros(rows)
        if self.f_fail >= 1.0:
            return np.ones(rows)
        a = self.density_shape
        b = a * (1.0 - self.f_fail) / self.f_fail
        grid = _beta.ppf((np.arange(rows) + 0.5) / rows, a, b)
        return np.clip(grid, 0.0, 1.0 - self.f_marginal)

    def segment_table(self, chip: int, bank: int, segment: int) -> _SegmentTable:
        self.geometry.check_address(chip, bank, segment)
        key = (chip, bank, segment)
        table = self._segments.get(key)
        if table is None:
            table = self._build_segment(chip, bank, segment)
            self._segments[key] = table
        return table

    def _build_segment(self, chip: int, bank: int, segment: int) -> _SegmentTable:
        geo = self.geometry
        n_cells = geo.segment_bytes * 8
        rng = _rng(self.device_seed, chip, bank, segment, tag=b"cells")
        density = self._density_grid[rng.permutation(geo.bitmap_rows)]
        per_cell_density = np.repeat(density, geo.row_bytes * 8)
        u = rng.random(n_cells)
        always_fail = u < per_cell_density
        marginal = (~always_fail) & (u < per_cell_density + self.f_marginal)
        idx = np.nonzero(marginal)[0]
        # thresholds in (TEMP_MIN, TEMP_MAX]: nothing may flip at the reference read
        theta = TEMP_MIN + (TEMP_MAX - TEMP_MIN) * (1.0 - rng.random(idx.size))
        p_noise = self.p_noise_max * rng.random(idx.size)
        return _SegmentTable(always_fail, idx, theta, p_noise)


def build_device(device_seed: int, geometry: Geometry, f_fail: float = 0.30,
                 f_marginal: float = 1e-4, **knobs) -> DeviceModel:
    return DeviceModel(device_seed, geometry, f_fail, f_marginal, **knobs)


def build_population(base_seed: int, count: int, geometry: Geometry, **knobs) -> list[DeviceModel]:
    """Devices with independent seeds derived from one base seed."""
    return [DeviceModel(_derive_seed(base_seed, i, tag=b"device") & 0xFFFFFFFFFFFFFFFF,
                        geometry, **knobs)
            for i in range(count)]


def _flip_mask(model: DeviceModel, chip: int, bank: int, segment: int,
               temperature: float, read_nonce: int, with_noise: bool) -> np.ndarray:
    table = model.segment_table(chip, bank, segment)
    flips = table.always_fail.copy()
    if table.marginal_idx.size:
        toggled = table.marginal_theta <= temperature
        if with_noise and model.p_noise_max > 0:
            noise_rng = _rng(model.device_seed, chip, bank, segment, read_nonce, tag=b"noise")
            toggled = toggled ^ (noise_rng.random(table.marginal_idx.size) < table.marginal_p_noise)
        on = table.marginal_idx[toggled]
        flips[on] = ~flips[on]
    return flips


def read_segment(model: DeviceModel, chip: int, bank: int, segment: int,
                 condition: ReadCondition) -> Bitmap:
    """Read back one segment under reduced timing at the given condition."""
    geo = model.geometry
    flips = _flip_mask(model, chip, bank, segment, condition.temperature,
                       condition.read_nonce, with_noise=True)
    flip_bytes = np.packbits(flips.reshape(geo.bitmap_rows, geo.row_bytes * 8),
                             axis=1, bitorder="little")
    pattern = condition.pattern.expand(geo.segment_bytes).reshape(geo.bitmap_rows, geo.row_bytes)
    return Bitmap(pattern ^ flip_bytes)


def reference_read(model: DeviceModel, chip: int, bank: int, segment: int,
                   pattern: InputPattern = InputPattern()) -> Bitmap:
    """Noise-suppressed read at the reference temperature; deterministic."""
    geo = model.geometry
    flips = _flip_mask(model, chip, bank, segment, TEMP_MIN, 0, with_noise=False)
    flip_bytes = np.packbits(flips.reshape(geo.bitmap_rows, geo.row_bytes * 8),
                             axis=1, bitorder="little")
    pat = pattern.expand(geo.segment_bytes).reshape(geo.bitmap_rows, geo.row_bytes)
    return Bitmap(pat ^ flip_bytes)
