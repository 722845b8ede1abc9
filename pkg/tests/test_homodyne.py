import math

import numpy as np
import pytest
from scipy import stats

from timebin_ebit import homodyne
from timebin_ebit.homodyne import (GENERATOR_NAME, ScanConfig, bin_rng, binned_probabilities,
                                   calibration_variance, default_phase_grid, effective_phase,
                                   histogram_chi2, joint_pdf, ks_critical_value,
                                   measure_correlations, photon_pdf, run_scan, sample_pair,
                                   sample_photon_quadrature, vacuum_pdf)
from timebin_ebit.wigner import wigner_analytic

from conftest import ETA

UNBALANCED = (2 / math.sqrt(5), 1 / math.sqrt(5))


def rng(seed):
    return np.random.default_rng(seed)


def photon_cdf(x):
    # int 4 t^2 g(t) dt = Phi(2x) - x g(x), by parts with g' = -4 t g
    return stats.norm.cdf(2 * x) - x * vacuum_pdf(x)


def mixture_cdf(x, weight):
    return (1 - weight) * stats.norm.cdf(2 * x) + weight * photon_cdf(x)


class TestJointPdf:
    def test_origin_vanishes_without_vacuum(self):
        for chi in (0.0, 1.0, math.pi):
            assert joint_pdf(0, 0, chi, 1.0) == 0

    @pytest.mark.parametrize("ab", [(2 ** -0.5, 2 ** -0.5), UNBALANCED])
    @pytest.mark.parametrize("chi", [0.0, 0.8, math.pi / 2, math.pi])
    def test_normalized_nonnegative_and_moments(self, chi, ab):
        x = np.linspace(-4, 4, 321)
        h = x[1] - x[0]
        a, b = np.meshgrid(x, x, indexing="ij")
        p = joint_pdf(a, b, chi, ETA, *ab)
        assert p.min() >= 0
        assert p.sum() * h * h == pytest.approx(1, abs=1e-12)
        assert np.sum(p * a * b) * h * h == pytest.approx(ETA * ab[0] * ab[1] * math.cos(chi) / 2, abs=1e-12)

    @pytest.mark.parametrize("ab", [(2 ** -0.5, 2 ** -0.5), UNBALANCED])
    @pytest.mark.parametrize("chi", [0.0, 1.1, math.pi])
    def test_equals_wigner_marginal(self, chi, ab):
        # integrate W over the conjugate quadratures y1, y2 with mode 2 turned by chi
        t, w = np.polynomial.hermite.hermgauss(10)
        y = t / math.sqrt(2)
        wy = w * np.exp(t * t) / math.sqrt(2)
        x = np.linspace(-2, 2, 11)
        X1, X2, Y1, Y2 = np.meshgrid(x, x, y, y, indexing="ij")
        marg = np.einsum("abij,i,j->ab", wigner_analytic(X1, Y1, X2, Y2, chi, ETA, *ab), wy, wy)
        A, B = np.meshgrid(x, x, indexing="ij")
        np.testing.assert_allclose(joint_pdf(A, B, chi, ETA, *ab), marg, atol=1e-13)

    def test_single_mode_marginal_phase_independent(self):
        x = np.linspace(-4, 4, 401)
        h = x[1] - x[0]
        a, b = np.meshgrid(x, x, indexing="ij")
        for chi in (0.0, 1.0, math.pi):
            m1 = joint_pdf(a, b, chi, ETA).sum(axis=1) * h
            want = (1 - ETA / 2) * vacuum_pdf(x) + (ETA / 2) * photon_pdf(x)
            np.testing.assert_allclose(m1, want, atol=1e-12)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            joint_pdf(0, 0, 0, 1.5)
        with pytest.raises(ValueError):
            joint_pdf(0, 0, 0, 0.5, 0.9, 0.9)

    def test_interchange(self):
        assert effective_phase(0.3, 1.1) == effective_phase(1.1, 0.3)


class TestSampler:
    def test_photon_quadrature_law(self):
        x = sample_photon_quadrature(rng(1), 200_000)
        assert stats.kstest(x, photon_cdf).pvalue > 1e-3

    def test_vacuum_only(self):
        x1, x2 = sample_pair(0.7, 0.0, rng=rng(2), size=10**6)
        se = 0.25 * math.sqrt(2 / 10**6)
        assert abs(np.mean(x1 * x1) - 0.25) < 5 * se
        assert abs(np.mean(x2 * x2) - 0.25) < 5 * se
        assert abs(np.mean(x1 * x2)) < 5 * 0.25 / 1000

    def test_perfect_correlation(self):
        x1, x2 = sample_pair(0.0, 1.0, rng=rng(3), size=10**6)
        assert np.mean(x1 * x2) == pytest.approx(0.25, abs=0.002)

    def test_anticorrelation(self):
        x1, x2 = sample_pair(math.pi, ETA, rng=rng(4), size=10**6)
        assert np.mean(x1 * x2) == pytest.approx(-0.151, abs=0.002)

    @pytest.mark.parametrize("chi", [0.0, math.pi / 2, math.pi])
    def test_histogram_matches_pdf(self, chi):
        x1, x2 = sample_pair(chi, ETA, rng=rng(5), size=200_000)
        assert histogram_chi2(x1, x2, chi, ETA)[2] >= 1e-3

    @pytest.mark.parametrize("chi", [0.0, 1.2, math.pi])
    def test_rejection_path_matches_pdf(self, chi):
        x1, x2 = sample_pair(chi, ETA, *UNBALANCED, rng=rng(6), size=200_000)
        assert histogram_chi2(x1, x2, chi, ETA, *UNBALANCED)[2] >= 1e-3

    def test_rejection_path_marginals(self):
        x1, x2 = sample_pair(0.4, 1.0, *UNBALANCED, rng=rng(7), size=200_000)
        assert stats.kstest(x1, lambda x: mixture_cdf(x, 0.8)).pvalue > 1e-3
        assert stats.kstest(x2, lambda x: mixture_cdf(x, 0.2)).pvalue > 1e-3

    def test_chi2_has_power(self):
        x1, x2 = sample_pair(0.0, ETA, rng=rng(8), size=200_000)
        assert histogram_chi2(x1, x2, math.pi / 2, ETA)[2] < 1e-10

    def test_rejection_cap(self, monkeypatch):
        monkeypatch.setattr(homodyne, "MAX_REJECTION_ROUNDS", 1)
        with pytest.raises(RuntimeError, match="rejection"):
            sample_pair(0.0, 1.0, *UNBALANCED, rng=rng(9), size=1000)

    def test_deterministic(self):
        a = sample_pair(0.5, ETA, rng=rng(10), size=100)
        b = sample_pair(0.5, ETA, rng=rng(10), size=100)
        np.testing.assert_array_equal(a, b)

    def test_scalar_and_array_chi(self):
        x1, x2 = sample_pair(0.5, ETA, rng=rng(11))
        assert isinstance(x1, float)
        x1, x2 = sample_pair(np.linspace(0, 1, 7), ETA, rng=rng(11))
        assert x1.shape == (7,)

    def test_correlation_variances(self):
        x1, x2 = sample_pair(0.0, ETA, rng=rng(12), size=10**6)
        assert np.var((x1 + x2) / math.sqrt(2)) == pytest.approx((1 + 2 * ETA) / 4, rel=0.01)
        assert np.var((x1 - x2) / math.sqrt(2)) == pytest.approx(0.25, rel=0.01)

    def test_interchange_equivalence(self):
        # (phi_i = a, dtheta = b) and (phi_i = b, dtheta = a) give the same statistics
        a, b = 0.4, 1.9
        s1 = sample_pair(effective_phase(a, b), ETA, rng=rng(13), size=200_000)
        s2 = sample_pair(effective_phase(b, a), ETA, rng=rng(14), size=200_000)
        edges = np.linspace(-2, 2, 11)
        h1 = np.histogram2d(*s1, bins=[edges, edges])[0].ravel()
        h2 = np.histogram2d(*s2, bins=[edges, edges])[0].ravel()
        keep = (h1 + h2) > 10
        assert stats.chi2_contingency(np.vstack([h1[keep], h2[keep]]))[1] > 1e-3

    def test_sign_lock_at_quarter_turn(self):
        xx, sxx, xy, sxy = measure_correlations(math.pi / 2, ETA, 400_000, rng(15))
        assert abs(xx) < 5 * sxx
        assert xy == pytest.approx(-ETA / 4, abs=0.005)

    @pytest.mark.parametrize("phi", [0.0, 0.6, math.pi])
    def test_moment_law_from_samples(self, phi):
        xx, sxx, xy, sxy = measure_correlations(phi, ETA, 400_000, rng(16))
        assert abs(xx - ETA * math.cos(phi) / 4) < 5 * sxx
        assert abs(xy + ETA * math.sin(phi) / 4) < 5 * sxy


class TestScan:
    def test_default_grid(self):
        g = default_phase_grid()
        assert len(g) == 100 and g[0] == 0 and g[-1] == math.pi

    def test_counts_per_bin(self):
        d = run_scan(ScanConfig(n_samples=1000, phase_grid=default_phase_grid(10)))
        values, counts = np.unique(d.chi, return_counts=True)
        assert len(values) == 10 and set(counts) == {100}
        assert len(d) == 1000

    def test_bins_use_own_streams(self):
        cfg = ScanConfig(n_samples=600, phase_grid=default_phase_grid(6), seed=42, state_phase=0.3)
        d = run_scan(cfg)
        r = bin_rng(42, 4)
        x1, x2 = sample_pair(cfg.phase_grid[4] - 0.3, ETA, rng=r, size=100)
        np.testing.assert_array_equal(d.x1[400:500], x1)
        np.testing.assert_array_equal(d.x_vac[400:500], r.normal(0, 0.5, 100))

    def test_reproducible_and_seed_sensitive(self):
        a = run_scan(ScanConfig(n_samples=1000, phase_grid=default_phase_grid(10), seed=1))
        b = run_scan(ScanConfig(n_samples=1000, phase_grid=default_phase_grid(10), seed=1))
        c = run_scan(ScanConfig(n_samples=1000, phase_grid=default_phase_grid(10), seed=2))
        np.testing.assert_array_equal(a.x1, b.x1)
        assert not np.array_equal(a.x1, c.x1)

    def test_metadata(self):
        d = run_scan(ScanConfig(n_samples=100, phase_grid=(0.0, 1.0)))
        assert d.meta["generator"] == GENERATOR_NAME
        assert d.header().startswith("# seed=20050101 eta=0.605")

    def test_without_vacuum_bin(self):
        d = run_scan(ScanConfig(n_samples=100, phase_grid=(0.0,), include_vacuum_bin=False))
        assert np.all(np.isnan(d.x_vac))
        with pytest.raises(ValueError):
            calibration_variance(d)

    @pytest.mark.parametrize("kwargs", [
        dict(n_samples=1001), dict(n_samples=0), dict(phase_grid=(0.0, 4.0)),
        dict(phase_grid=()), dict(seed=-1), dict(eta=1.1)])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            ScanConfig(**kwargs)

    def test_sample_records(self):
        d = run_scan(ScanConfig(n_samples=10, phase_grid=(0.5,)))
        rec = d[3]
        assert rec.chi == 0.5 and rec.x1 == d.x1[3]
        assert len(list(d)) == 10
        assert set(d.by_phase()) == {0.5}


class TestFullScan:
    def test_calibration(self, scan_zero):
        assert calibration_variance(scan_zero) == pytest.approx(0.25, rel=0.01)

    def test_single_mode_marginals_phase_independent(self, scan_zero):
        groups = [np.sort(scan_zero.x1[idx]) for _, idx in sorted(scan_zero.by_phase().items())]
        n = len(groups[0])
        bound = 3 * ks_critical_value(n, n)
        grid = np.linspace(-2.5, 2.5, 2001)
        cdfs = np.array([np.searchsorted(g, grid, side="right") / n for g in groups])
        # max over all pairs of bins of the sup-distance, on a fine grid
        worst = max(np.max(np.abs(cdfs[i] - cdfs[i + 1:])) for i in range(len(groups) - 1))
        assert worst < bound

    def test_marginal_matches_mixture_law(self, scan_zero):
        assert stats.kstest(scan_zero.x2, lambda x: mixture_cdf(x, ETA / 2)).pvalue > 1e-3

    def test_binned_probabilities_sum(self):
        edges = np.linspace(-6, 6, 61)
        assert binned_probabilities(edges, 0.3, ETA).sum() == pytest.approx(1, abs=1e-10)
