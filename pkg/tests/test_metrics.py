import collections
import csv
import math
from pathlib import Path

import numpy as np
import pytest

from epuf import bits as bitutil
from epuf.core import generate_ef
from epuf.dramsim import Geometry, build_device, build_population, reference_read
from epuf.metrics import (
    characterize_segment, ber_sweep, entropy_profile, fractional_hd,
    reliable_bit_distribution, uniqueness_study, write_ber_csv,
    write_entropy_profile_csv, write_reliable_bits_csv, write_uniqueness_csv,
)

SMALL = Geometry(chips=1, banks_per_chip=1, segments_per_bank=1, segment_bytes=32768)
DATA = Path(__file__).parent / "data"


class TestFractionalHd:
    def test_identical(self):
        assert fractional_hd("0000", "0000") == 0.0

    def test_complement(self):
        assert fractional_hd("0101", "1010") == 1.0

    def test_half_byte(self):
        assert fractional_hd(b"\x0f", b"\x00") == 0.5

    def test_errors(self):
        with pytest.raises(ValueError):
            fractional_hd("01", "011")
        with pytest.raises(ValueError):
            fractional_hd("", "")

    def test_metric_axioms_on_random_triples(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            a, b, c = (rng.integers(0, 2, 64, dtype=np.uint8) for _ in range(3))
            assert fractional_hd(a, b) == fractional_hd(b, a)
            assert fractional_hd(a, a) == 0.0
            assert fractional_hd(a, c) <= fractional_hd(a, b) + fractional_hd(b, c) + 1e-12

    def test_random_strings_mean_half(self):
        rng = np.random.default_rng(6)
        n = 256
        hds = [fractional_hd(rng.integers(0, 2, n, dtype=np.uint8),
                             rng.integers(0, 2, n, dtype=np.uint8))
               for _ in range(1000)]
        assert abs(float(np.mean(hds)) - 0.5) < 4 / math.sqrt(n)


class TestGoldenEf:
    def test_reference_ef_matches_recorded_golden(self):
        model = build_device(42, SMALL)
        ef = generate_ef(reference_read(model, 0, 0, 0), frac_bits=5)
        golden = (DATA / "golden_ef_seed42_frac5.hex").read_text().strip()
        assert bitutil.to_hex(ef.bits) == golden

    def test_first_rows_against_hand_histograms(self):
        model = build_device(42, SMALL)
        bmp = reference_read(model, 0, 0, 0)
        ef = generate_ef(bmp, frac_bits=5)
        for j in range(5):
            counts = collections.Counter(bmp.data[j].tolist())
            expected = -sum((c / 128) * math.log2(c / 128) for c in counts.values())
            assert ef.values[j] == pytest.approx(expected, abs=1e-9)


class TestBerSweep:
    def test_failure_free_device_all_zero(self):
        model = build_device(1, SMALL, f_fail=0.0, f_marginal=0.0)
        reports = ber_sweep(model, (0, 0, 0), reads_per_point=2, omega2=3, omega3=4)
        assert all(r.ber == 0.0 for r in reports)

    def test_masked_stage_zero_for_noiseless_device(self):
        model = build_device(2, SMALL, p_noise_max=0.0)
        reports = ber_sweep(model, (0, 0, 0), reads_per_point=3, omega3=8, thetas=(0,))
        masked = [r for r in reports if r.stage == "masked"]
        assert masked and all(r.ber == 0.0 for r in masked)

    def test_ef_stage_within_paper_bound_at_55(self):
        model = build_device(42, SMALL)
        reports = ber_sweep(model, (0, 0, 0), reads_per_point=5)
        ef_55 = [r for r in reports if r.stage == "ef" and r.temperature == 55.0]
        assert ef_55[0].ber < 0.013

    def test_masked_ber_monotone_in_theta(self):
        model = build_device(7, SMALL, f_marginal=5e-4)
        reports = ber_sweep(model, (0, 0, 0), reads_per_point=4, thetas=(0, 1, 2, 5))
        for temp in (35.0, 45.0, 55.0):
            by_theta = {r.theta: r.ber for r in reports
                        if r.stage == "masked" and r.temperature == temp}
            assert by_theta[0] <= by_theta[1] <= by_theta[2] <= by_theta[5]


class TestReliableBits:
    def test_theta_omega_keeps_full_stream(self):
        model = build_device(3, SMALL)
        char = characterize_segment(model, (0, 0, 0), omega3=10)
        table = reliable_bit_distribution([char], thetas=(10,))
        stream_bits = 256 * (3 + char.precision.frac_bits)
        assert table[10] == [stream_bits]

    def test_counts_nondecreasing_in_theta(self):
        chars = [characterize_segment(build_device(100 + i, SMALL), (0, 0, 0), omega3=12)
                 for i in range(3)]
        table = reliable_bit_distribution(chars, thetas=(0, 1, 2, 5))
        for i in range(3):
            counts = [table[t][i] for t in (0, 1, 2, 5)]
            assert counts == sorted(counts)

    def test_default_segment_yields_at_least_700_bits(self):
        char = characterize_segment(build_device(42, SMALL), (0, 0, 0))
        table = reliable_bit_distribution([char], thetas=(0,))
        assert table[0][0] >= 700


class TestUniqueness:
    def test_self_comparison_is_zero(self):
        char = characterize_segment(build_device(5, SMALL), (0, 0, 0), omega3=6)
        report = uniqueness_study([char, char], "inter-chip")
        assert report.mean == 0.0

    def test_small_population_near_half(self):
        chars = [characterize_segment(model, (0, 0, 0), omega3=10)
                 for model in build_population(77, 8, SMALL)]
        report = uniqueness_study(chars, "inter-chip")
        assert 0.40 <= report.mean <= 0.56
        assert len(report.samples) == 28

    def test_requires_two_entities(self):
        char = characterize_segment(build_device(5, SMALL), (0, 0, 0), omega3=4)
        with pytest.raises(ValueError):
            uniqueness_study([char], "inter-bank")


class TestEntropyProfile:
    def test_noise_free_columns_identical(self):
        model = build_device(8, SMALL, f_marginal=0.0)
        profile = entropy_profile(model, (0, 0, 0))
        base = profile[25.0]
        for temp, column in profile.items():
            assert np.array_equal(column, base)

    def test_failure_free_all_zero(self):
        model = build_device(8, SMALL, f_fail=0.0, f_marginal=0.0)
        profile = entropy_profile(model, (0, 0, 0))
        assert all(not col.any() for col in profile.values())

    def test_default_device_correlation(self):
        profile = entropy_profile(build_device(42, SMALL), (0, 0, 0))
        base = profile[25.0]
        for temp in (35.0, 45.0, 55.0):
            corr = np.corrcoef(base, profile[temp])[0, 1]
            assert corr >= 0.9


class TestCsvEmitters:
    def test_ber_csv_columns(self, tmp_path):
        model = build_device(1, SMALL, f_fail=0.0, f_marginal=0.0)
        reports = ber_sweep(model, (0, 0, 0), reads_per_point=1, omega2=2, omega3=2,
                            temperatures=(25.0,), thetas=(0,))
        path = tmp_path / "ber.csv"
        write_ber_csv(path, reports)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["temperature", "stage", "theta", "ber"]
        assert {r[1] for r in rows[1:]} == {"raw-dram", "ef", "masked"}

    def test_reliable_bits_csv(self, tmp_path):
        path = tmp_path / "rb.csv"
        write_reliable_bits_csv(path, {0: [700, 800], 1: [900, 950]})
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["theta", "segment_index", "qualified_bits"]
        assert rows[1] == ["0", "0", "700"]
        assert len(rows) == 5

    def test_uniqueness_csv(self, tmp_path):
        from epuf.metrics import UniquenessReport
        path = tmp_path / "u.csv"
        write_uniqueness_csv(path, [UniquenessReport("inter-chip", [0.5, 0.4], 0.45, "")])
        rows = list(csv.reader(path.open()))
        assert rows[1][0] == "inter-chip"
        assert rows[1][2] == "2"

    def test_entropy_profile_csv(self, tmp_path):
        path = tmp_path / "e.csv"
        write_entropy_profile_csv(path, {25.0: np.array([1.5, 2.5]), 55.0: np.array([1.25, 2.25])})
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["row", "entropy_25C", "entropy_55C"]
        assert rows[1] == ["0", "1.5", "1.25"]
