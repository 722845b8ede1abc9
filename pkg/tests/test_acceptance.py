"""Closed-loop acceptance criteria. Each test prints exactly one PASS/FAIL line,
collected again in the terminal summary."""
import math

import numpy as np
import pytest
from scipy import stats

from timebin_ebit.fock import global_phase_average
from timebin_ebit.homodyne import histogram_chi2, measure_correlations, sample_pair
from timebin_ebit.pattern import orthogonality_errors
from timebin_ebit.wigner import (AnalyticSource, PhasePoint4, correlation_coordinates,
                                 export_section, w0, w1, wigner_analytic, wigner_from_rho)

from conftest import ETA, DEFAULT_SEED

TARGET_COH = 0.3025  # eta * alpha * beta at the balanced point


def _rng(stream):
    return np.random.default_rng(np.random.SeedSequence(DEFAULT_SEED, spawn_key=(2_000_000 + stream,)))


def test_criterion_1_efficiency_recovery(ml_zero_timed, acceptance_line):
    res, seconds = ml_zero_timed
    rho = res.rho
    got = dict(p00=rho.element(0, 0, 0, 0).real, p10=rho.element(1, 0, 1, 0).real,
               p01=rho.element(0, 1, 0, 1).real, coh=rho.element(1, 0, 0, 1).real)
    want = dict(p00=0.395, p10=0.3025, p01=0.3025, coh=0.3025)
    err = max(abs(got[k] - want[k]) for k in got)
    diag = np.real(np.diag(rho.elements))
    multi = float(diag[rho.truncation.total_photons() >= 2].sum())
    ok = err <= 0.01 and multi <= 0.01 and res.converged and seconds <= 300
    detail = (" ".join(f"{k}={v:.4f}" for k, v in got.items())
              + f" multiphoton={multi:.4f} max_err={err:.4f} ml_seconds={seconds:.1f}")
    assert acceptance_line(1, "efficiency recovery", ok, detail)


def test_criterion_2_equal_suppression(ml_zero, acceptance_line):
    rho = ml_zero.rho
    ratio = abs(rho.element(1, 0, 0, 1)) / rho.element(1, 0, 1, 0).real
    assert acceptance_line(2, "equal suppression", abs(ratio - 1) <= 0.05, f"ratio={ratio:.4f}")


def test_criterion_3_wigner_negativity(ml_zero, acceptance_line):
    w_hat = float(wigner_from_rho(ml_zero.rho, 0.0, 0.0, -0.1, -0.1))
    pure = float(wigner_analytic(0, 0, 0, 0, 0.0, 1.0))
    mixed = float(wigner_analytic(0, 0, 0, 0, 0.0, ETA))
    grid_hat = export_section(ml_zero.rho, "x1y1", (-3, 3, 121), fixed_values=(-0.1, -0.1))
    grid_true = export_section(AnalyticSource(0.0, ETA), "x1y1", (-3, 3, 121),
                               fixed_values=(-0.1, -0.1))
    diff = grid_hat.max_abs_difference(grid_true)
    ok = (w_hat < 0 and abs(pure + 4 / math.pi ** 2) < 1e-12
          and abs(mixed - (-0.0851)) < 5e-5 and diff <= 0.015)
    detail = (f"W_hat(0,0;-0.1,-0.1)={w_hat:.4f} W_pure(0)={pure:.4f} "
              f"W_mixed(0)={mixed:.4f} grid_max_diff={diff:.4f}")
    assert acceptance_line(3, "wigner negativity", ok, detail)


def test_criterion_4_factorization(acceptance_line):
    a = np.linspace(-2, 2, 21)
    x1, y1, x2, y2 = np.meshgrid(a, a, a, a, indexing="ij")
    worst = 0.0
    for phi in (0.0, math.pi / 4, math.pi / 2, math.pi):
        xp, yp, xm, ym = correlation_coordinates(PhasePoint4(x1, y1, x2, y2), phi)
        lhs = wigner_analytic(x1, y1, x2, y2, phi, 1.0)
        worst = max(worst, float(np.max(np.abs(lhs - w1(xp, yp) * w0(xm, ym)))))
    assert acceptance_line(4, "factorization", worst < 1e-12, f"max_abs={worst:.2e}")


def test_criterion_5_marginals(scan_zero, acceptance_line):
    ps = []
    for i, chi in enumerate((0.0, math.pi / 2, math.pi)):
        x1, x2 = sample_pair(chi, ETA, rng=_rng(i), size=200_000)
        ps.append(histogram_chi2(x1, x2, chi, ETA)[2])
    low = scan_zero.chi < math.pi / 2
    ks = [stats.ks_2samp(c[low], c[~low]).pvalue for c in (scan_zero.x1, scan_zero.x2)]
    x1, x2 = sample_pair(0.0, ETA, rng=_rng(5), size=10**6)
    vp = np.var((x1 + x2) / math.sqrt(2), ddof=1)
    vm = np.var((x1 - x2) / math.sqrt(2), ddof=1)
    rel = max(abs(vp / ((1 + 2 * ETA) / 4) - 1), abs(vm / 0.25 - 1))
    ok = min(ps) >= 1e-3 and min(ks) >= 1e-3 and rel <= 0.01
    detail = (f"chi2_p={','.join(f'{p:.3g}' for p in ps)} ks_p={','.join(f'{p:.3g}' for p in ks)} "
              f"var_plus={vp:.4f} var_minus={vm:.4f}")
    assert acceptance_line(5, "joint marginals", ok, detail)


def test_criterion_6_phase_sweep(acceptance_line):
    chis = np.linspace(0, math.pi, 25)
    rng = _rng(6)
    means = np.array([np.mean(np.prod(sample_pair(c, ETA, rng=rng, size=400_000), axis=0))
                      for c in chis])
    err = float(np.max(np.abs(means - ETA * np.cos(chis) / 4)))
    flip = bool(np.all(means[chis < math.pi / 2 - 0.1] > 0)
                and np.all(means[chis > math.pi / 2 + 0.1] < 0))
    xx, _, xy, _ = measure_correlations(math.pi / 2, ETA, n=400_000, rng=_rng(7))
    ok = err <= 0.003 and flip and abs(abs(xy) - ETA / 4) <= 0.005 and abs(xx) <= 0.003
    detail = f"max_err={err:.5f} sign_flip={flip} <x1x2>(pi/2)={xx:.4f} |<x1y2>|(pi/2)={abs(xy):.4f}"
    assert acceptance_line(6, "phase sweep", ok, detail)


def test_criterion_7_estimator_agreement(ml_zero, pattern_zero, acceptance_line):
    orth = float(np.nanmax(orthogonality_errors(4)))
    ml = global_phase_average(ml_zero.rho)
    diff = float(np.max(np.abs(pattern_zero.elements - ml.elements)))
    ok = diff <= 0.02 and orth <= 1e-6
    assert acceptance_line(7, "estimator agreement", ok,
                           f"max_elementwise={diff:.4f} orthogonality={orth:.2e}")


def test_criterion_8_bell_pair(ml_zero, ml_pi, acceptance_line):
    c0 = ml_zero.rho.element(1, 0, 0, 1).real
    c1 = ml_pi.rho.element(1, 0, 0, 1).real
    ok = c0 > 0 > c1 and abs(c0 - TARGET_COH) <= 0.01 and abs(-c1 - TARGET_COH) <= 0.01
    assert acceptance_line(8, "bell pair", ok, f"Re_coh(0)={c0:.4f} Re_coh(pi)={c1:.4f}")
