import collections
import math

import numpy as np
import pytest

from epuf.core import (
    EntropyFeatures, InsufficientBits, Precision, apply_hs, flip_counters,
    frac_bits_for, generate_ef, generate_hs, mask_for_theta, quantize,
    row_entropy, select_precision, sweep_temperatures,
)
from epuf.dramsim import Bitmap, Geometry, InputPattern, build_device

SMALL = Geometry(chips=1, banks_per_chip=1, segments_per_bank=1, segment_bytes=32768)


def naive_entropy(row_bytes):
    """Independent oracle: dict-based histogram, math.log2."""
    counts = collections.Counter(row_bytes)
    total = len(row_bytes)
    acc = 0.0
    for c in counts.values():
        p = c / total
        acc -= p * math.log2(p)
    return acc


class TestRowEntropy:
    def test_single_symbol(self):
        assert row_entropy(np.full(125, 0x3C, dtype=np.uint8)) == 0.0

    def test_two_equiprobable_symbols(self):
        row = np.array([0x00] * 64 + [0xFF] * 64, dtype=np.uint8)
        assert row_entropy(row) == pytest.approx(1.0, abs=1e-12)

    def test_five_equiprobable_symbols(self):
        row = np.repeat(np.array([0x00, 0x11, 0x22, 0x33, 0x44], dtype=np.uint8), 25)
        assert row_entropy(row) == pytest.approx(math.log2(5), abs=1e-9)

    def test_empty_row_rejected(self):
        with pytest.raises(ValueError):
            row_entropy(np.array([], dtype=np.uint8))

    @pytest.mark.parametrize("width", [125, 128])
    def test_matches_naive_oracle(self, width):
        rng = np.random.default_rng(17)
        for _ in range(500):
            row = rng.integers(0, 256, size=width, dtype=np.uint8)
            assert row_entropy(row) == pytest.approx(naive_entropy(row.tolist()), abs=1e-9)

    def test_histogram_probabilities_sum_to_one(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            row = rng.integers(0, 256, size=125, dtype=np.uint8)
            counts = np.bincount(row, minlength=256)
            assert counts.sum() == row.size


class TestQuantize:
    def test_zero_value(self):
        assert quantize([0.0], 8).tolist() == [0] * 11

    def test_exact_binary_fraction(self):
        assert "".join(map(str, quantize([1.5], 4))) == "0011000"

    def test_log2_five_at_seven_frac_bits(self):
        bits = "".join(map(str, quantize([2.321928], 7)))
        assert bits == "010" + "0101001"  # int 2, frac floor(0.321928 * 128) = 41

    def test_big_integer_oracle(self):
        # fixed-point truncation computed with exact integer arithmetic
        rng = np.random.default_rng(23)
        for _ in range(200):
            v = rng.random() * 8.0
            f = int(rng.integers(1, 24))
            bits = quantize([v], f)
            got = int("".join(map(str, bits.tolist())), 2)
            assert got == math.floor(v * (1 << f))

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            quantize([8.0], 4)
        with pytest.raises(ValueError):
            quantize([-0.1], 4)
        with pytest.raises(ValueError):
            quantize([1.0], 0)

    def test_monotone_in_value(self):
        rng = np.random.default_rng(5)
        vals = np.sort(rng.random(300) * 8.0)
        enc = quantize(vals, 6).reshape(300, 9)
        as_ints = [int("".join(map(str, row.tolist())), 2) for row in enc]
        assert all(a <= b for a, b in zip(as_ints, as_ints[1:]))


class TestGenerateEf:
    def test_all_zero_bitmap(self):
        ef = generate_ef(Bitmap(np.zeros((256, 128), dtype=np.uint8)), 8)
        assert not ef.values.any()
        assert not ef.bits.any()
        assert ef.bits.size == 256 * 11

    def test_purity(self):
        rng = np.random.default_rng(2)
        data = rng.integers(0, 256, size=(256, 128), dtype=np.uint8)
        a = generate_ef(Bitmap(data), 5)
        b = generate_ef(Bitmap(data.copy()), 5)
        assert np.array_equal(a.bits, b.bits)
        assert np.array_equal(a.values, b.values)

    def test_values_match_row_entropy(self):
        rng = np.random.default_rng(9)
        data = rng.integers(0, 256, size=(64, 125), dtype=np.uint8)
        ef = generate_ef(Bitmap(data), 6)
        for j in (0, 13, 63):
            assert ef.values[j] == pytest.approx(row_entropy(data[j]), abs=1e-12)

    def test_row_order_of_bit_stream(self):
        data = np.zeros((4, 128), dtype=np.uint8)
        data[2, :64] = 0xFF  # row 2 entropy exactly 1.0
        ef = generate_ef(Bitmap(data), 4)
        per_row = ef.bits.reshape(4, 7)
        assert per_row[2].tolist() == [0, 0, 1, 0, 0, 0, 0]
        assert not per_row[[0, 1, 3]].any()

    def test_wide_rows_rejected(self):
        with pytest.raises(ValueError):
            generate_ef(Bitmap(np.zeros((2, 256), dtype=np.uint8)), 4)


class TestSelectPrecision:
    def test_noise_free_sentinel(self):
        model = build_device(1, SMALL, f_marginal=0.0)
        prec = select_precision(model, (0, 0, 0), InputPattern(), omega=5)
        assert prec.dmax == 0.0
        assert prec.frac_bits == 23

    def test_frac_bits_arithmetic(self):
        assert frac_bits_for(0.004) == 7
        assert frac_bits_for(0.6) == 1
        assert frac_bits_for(0.0) == 23
        assert frac_bits_for(1e-9) == 23

    def test_requires_two_reads(self):
        model = build_device(1, SMALL)
        with pytest.raises(ValueError):
            select_precision(model, (0, 0, 0), InputPattern(), omega=1)

    def test_default_device_lands_in_sane_range(self):
        model = build_device(42, SMALL)
        prec = select_precision(model, (0, 0, 0), InputPattern(), omega=20)
        assert prec.dmax > 0
        assert 1 <= prec.frac_bits <= 8


class TestHelperStream:
    def test_noise_free_mask_all_ones(self):
        model = build_device(6, SMALL, f_marginal=0.0)
        hs, ref = generate_hs(model, (0, 0, 0), InputPattern(), Precision(0.0, 5), omega=10)
        assert hs.qualified_count() == ref.bits.size

    def test_single_flip_with_zero_theta_masks_position(self):
        counters = np.zeros(16, dtype=np.int64)
        counters[3] = 1
        hs = mask_for_theta(counters, theta=0, omega=10)
        assert hs.mask[3] == 0
        assert hs.qualified_count() == 15

    def test_theta_equal_omega_keeps_everything(self):
        rng = np.random.default_rng(8)
        counters = rng.integers(0, 11, size=64)
        hs = mask_for_theta(counters, theta=10, omega=10)
        assert hs.qualified_count() == 64

    def test_threshold_monotone_in_theta(self):
        model = build_device(40, SMALL)
        counters, _ = flip_counters(model, (0, 0, 0), InputPattern(), frac_bits=4, omega=20)
        counts = [mask_for_theta(counters, t, 20).qualified_count() for t in (0, 1, 2, 5)]
        assert counts == sorted(counts)

    def test_sweep_cycles_grid(self):
        temps = sweep_temperatures(6)
        assert temps == [25.0, 35.0, 45.0, 55.0, 25.0, 35.0]


class TestApplyHs:
    def test_positional_gather(self):
        ef = EntropyFeatures(np.zeros(1), 1, np.array([1, 0, 1, 1], dtype=np.uint8))
        hs = mask_for_theta(np.array([0, 0, 1, 0]), theta=0, omega=1)
        assert apply_hs(ef, hs).bits.tolist() == [1, 0, 1]

    def test_identity_mask(self):
        bits = np.array([1, 0, 1, 1, 0], dtype=np.uint8)
        ef = EntropyFeatures(np.zeros(1), 2, bits)
        hs = mask_for_theta(np.zeros(5, dtype=np.int64), theta=0, omega=1)
        assert np.array_equal(apply_hs(ef, hs).bits, bits)

    def test_all_zero_mask_empty_response(self):
        ef = EntropyFeatures(np.zeros(1), 1, np.array([1, 0, 1, 1], dtype=np.uint8))
        hs = mask_for_theta(np.full(4, 9), theta=0, omega=9)
        assert apply_hs(ef, hs).bits.size == 0

    def test_length_mismatch(self):
        ef = EntropyFeatures(np.zeros(1), 1, np.array([1, 0], dtype=np.uint8))
        hs = mask_for_theta(np.zeros(3, dtype=np.int64), theta=0, omega=1)
        with pytest.raises(ValueError):
            apply_hs(ef, hs)

    def test_literal_xnor_switch(self):
        ef = EntropyFeatures(np.zeros(1), 1, np.array([1, 0, 1, 0], dtype=np.uint8))
        hs = mask_for_theta(np.array([0, 0, 1, 1]), theta=0, omega=1)
        assert apply_hs(ef, hs, mode="xnor").bits.tolist() == [1, 0, 0, 1]


class TestReliabilityByConstruction:
    def test_zero_ber_for_noiseless_device_on_grid(self):
        from epuf.dramsim import ReadCondition, read_segment
        model = build_device(77, SMALL, f_marginal=1e-4, p_noise_max=0.0)
        prec = Precision(0.0, 5)
        hs, ref = generate_hs(model, (0, 0, 0), InputPattern(), prec, omega=50, theta=0)
        masked_ref = apply_hs(ref, hs).bits
        for temp in (25.0, 35.0, 45.0, 55.0):
            bmp = read_segment(model, 0, 0, 0, ReadCondition(temp, 991))
            masked = apply_hs(generate_ef(bmp, 5), hs).bits
            assert np.array_equal(masked, masked_ref)
