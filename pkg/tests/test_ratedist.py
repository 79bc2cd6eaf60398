"""Tests for reverse water-filling over Karhunen-Loeve spectra."""

import csv
import math

import numpy as np
import pytest
from scipy.special import polygamma

from fbmquant.ratedist import (
    Spectrum,
    bm_spectrum,
    covariance_spectrum,
    export_curve_csv,
    export_spectrum_csv,
    kappa_rd_estimate,
    level_rate,
    water_level,
    waterfill,
)

BM_KAPPA = math.sqrt(2.0) / math.pi


def _single(lam):
    return Spectrum(
        eigenvalues=np.array([lam]), hurst=0.5, source="exact_bm", tail_mass=0.0
    )


class TestSpectrumType:
    def test_must_be_nonincreasing(self):
        with pytest.raises(ValueError, match="nonincreasing"):
            Spectrum(np.array([1.0, 2.0]), hurst=0.5, source="exact_bm")

    def test_floor_enforced(self):
        with pytest.raises(ValueError, match="floor"):
            Spectrum(np.array([1.0, 1e-15]), hurst=0.5, source="exact_bm")

    def test_source_vocabulary(self):
        with pytest.raises(ValueError, match="source"):
            Spectrum(np.array([1.0]), hurst=0.5, source="guess")

    def test_negative_tail_rejected(self):
        with pytest.raises(ValueError, match="tail"):
            Spectrum(np.array([1.0]), hurst=0.5, source="exact_bm", tail_mass=-1e-3)


class TestBmSpectrum:
    def test_closed_form_values(self):
        spec = bm_spectrum(100)
        k = np.arange(1, 101)
        assert np.allclose(
            spec.eigenvalues, 1.0 / (np.pi**2 * (k - 0.5) ** 2), rtol=1e-15
        )
        assert spec.eigenvalues[0] == pytest.approx(4.0 / np.pi**2, rel=1e-15)

    def test_total_mass_is_bm_trace(self):
        # sum of 1/(pi^2 (k-1/2)^2) over all k is exactly 1/2
        spec = bm_spectrum(1000)
        assert spec.eigenvalues.sum() + spec.tail_mass == pytest.approx(0.5, abs=1e-12)

    def test_tail_matches_partial_summation_oracle(self):
        spec = bm_spectrum(50)
        j = np.arange(51, 200_001, dtype=float)
        partial = np.sum(1.0 / (np.pi**2 * (j - 0.5) ** 2))
        remainder = polygamma(1, 200_000.5) / np.pi**2
        assert spec.tail_mass == pytest.approx(partial + remainder, rel=1e-12)

    def test_metadata(self):
        spec = bm_spectrum(10)
        assert spec.source == "exact_bm"
        assert spec.hurst == 0.5


class TestCovarianceSpectrum:
    def test_top_eigenvalue_near_bm_closed_form(self):
        spec = covariance_spectrum(0.5, 1024)
        assert spec.eigenvalues[0] == pytest.approx(4.0 / np.pi**2, rel=0.01)

    @pytest.mark.parametrize("hurst", [0.3, 0.5, 0.7])
    def test_trace_identity(self, hurst):
        spec = covariance_spectrum(hurst, 512)
        assert spec.eigenvalues.sum() + spec.tail_mass == pytest.approx(
            1.0 / (2 * hurst + 1), rel=0.01
        )

    def test_top_ten_match_bm_closed_form(self):
        spec = covariance_spectrum(0.5, 2048)
        k = np.arange(1, 11)
        expect = 1.0 / (np.pi**2 * (k - 0.5) ** 2)
        assert np.allclose(spec.eigenvalues[:10], expect, rtol=0.01)

    def test_all_above_floor(self):
        spec = covariance_spectrum(0.7, 256)
        assert np.all(spec.eigenvalues >= 1e-14)

    def test_size_cap(self):
        with pytest.raises(ValueError, match="4096"):
            covariance_spectrum(0.5, 4097)

    def test_metadata(self):
        spec = covariance_spectrum(0.3, 64)
        assert spec.source == "discretized"
        assert spec.hurst == 0.3


class TestWaterfill:
    def test_zero_rate_is_total_standard_deviation(self):
        spec = bm_spectrum(500)
        assert waterfill(spec, 0.0) == pytest.approx(
            math.sqrt(spec.eigenvalues.sum() + spec.tail_mass), rel=1e-12
        )

    def test_single_eigenvalue_closed_form(self):
        for lam, r in [(1.0, 0.5), (0.25, 2.0), (3.0, 4.0)]:
            assert waterfill(_single(lam), r) == pytest.approx(
                math.sqrt(lam) * math.exp(-r), rel=1e-9
            )

    def test_nonincreasing_in_rate(self):
        spec = bm_spectrum(2000)
        rates = np.linspace(0.0, 50.0, 40)
        d = np.array([waterfill(spec, r) for r in rates])
        assert np.all(np.diff(d) <= 0)

    def test_continuity(self):
        spec = bm_spectrum(2000)
        for r in (0.5, 5.0, 25.0):
            assert abs(waterfill(spec, r) - waterfill(spec, r + 1e-6)) < 1e-6

    def test_rate_recomputes_from_level(self):
        spec = bm_spectrum(5000)
        for r in (1.0, 10.0, 100.0):
            theta = water_level(spec, r)
            assert level_rate(spec, theta) == pytest.approx(r, rel=1e-8)

    def test_truncated_spectrum_rejects_excess_rate(self):
        spec = bm_spectrum(20)
        with pytest.raises(ValueError, match="rate"):
            waterfill(spec, 1000.0)

    def test_empty_spectrum_rejected(self):
        spec = Spectrum(np.array([]), hurst=0.5, source="exact_bm")
        with pytest.raises(ValueError, match="empty"):
            waterfill(spec, 1.0)

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError, match="rate"):
            waterfill(bm_spectrum(10), -0.1)


class TestKappaEstimate:
    def test_single_eigenvalue_normalized_curve_vanishes(self):
        curve = kappa_rd_estimate(_single(1.0), [1.0, 10.0, 100.0])
        vals = [v for _, v in curve]
        assert vals[-1] < vals[0]
        assert vals[-1] < 1e-10

    def test_bm_curve_monotone_toward_limit(self):
        spec = bm_spectrum(100_000)
        rates = np.logspace(0, 4, 17)
        curve = kappa_rd_estimate(spec, rates)
        vals = np.array([v for _, v in curve])
        assert np.all(np.diff(vals) >= 0)
        assert vals[-1] <= BM_KAPPA * 1.001

    def test_bm_plateau(self):
        spec = bm_spectrum(100_000)
        curve = kappa_rd_estimate(spec, [1e2, 1e3, 1e4])
        vals = np.array([v for _, v in curve])
        assert vals.max() / vals.min() - 1.0 < 0.05

    def test_bm_normalized_value_near_kappa(self):
        spec = bm_spectrum(1_000_000)
        _, val = kappa_rd_estimate(spec, [1e3])[0]
        assert val == pytest.approx(BM_KAPPA, rel=0.02)

    def test_discretized_loglog_slope(self):
        spec = covariance_spectrum(0.3, 2048)
        rates = np.logspace(1, 3, 9)
        d = np.array([waterfill(spec, r) for r in rates])
        slope = np.polyfit(np.log(rates), np.log(d), 1)[0]
        assert slope == pytest.approx(-0.30, abs=0.05)

    def test_rates_must_increase(self):
        with pytest.raises(ValueError, match="increasing"):
            kappa_rd_estimate(_single(1.0), [2.0, 1.0])


class TestCsvExport:
    def test_spectrum_roundtrip(self, tmp_path):
        spec = bm_spectrum(25)
        out = tmp_path / "spec.csv"
        export_spectrum_csv(spec, out)
        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["k", "lambda"]
        assert len(rows) == 26
        ks = [int(r[0]) for r in rows[1:]]
        lams = np.array([float(r[1]) for r in rows[1:]])
        assert ks == list(range(1, 26))
        assert np.array_equal(lams, spec.eigenvalues)

    def test_curve_columns(self, tmp_path):
        spec = bm_spectrum(2000)
        out = tmp_path / "curve.csv"
        export_curve_csv(spec, [1.0, 10.0], out)
        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["r", "D", "rH_D"]
        r0, d0, nd0 = (float(v) for v in rows[1])
        assert r0 == 1.0
        assert d0 == waterfill(spec, 1.0)
        assert nd0 == 1.0**spec.hurst * d0
