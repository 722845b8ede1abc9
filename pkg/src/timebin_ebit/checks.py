"""Self-verification suite: per-module invariants plus the closed-loop
simulate/reconstruct checks, all driven by one pipeline config.

Statistical tolerances are either fixed by the acceptance targets or are
several standard errors wide at the configured sample sizes, so a different
seed should not flip a result.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .ebit import arm_loss_amplitudes, heralded_state, make_ebit
from .fock import (FockTruncation, global_phase_average, quadrature_wavefunctions)
from .homodyne import (QuadratureData, ScanConfig, calibration_variance, default_phase_grid,
                       histogram_chi2, joint_pdf, run_scan, sample_pair)
from .io import PipelineConfig
from .pattern import orthogonality_errors
from .tomography import (MLResult, ReconstructionConfig, ml_reconstruct, pattern_reconstruct,
                         povm_completeness_error)
from .wigner import (AnalyticSource, correlation_coordinates, export_section, w0, w1,
                     wigner_analytic, wigner_from_rho, PhasePoint4)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: str
    detail: str = ""

    def row(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name}\t{status}\t{self.value:.6g}\t{self.tolerance}\t{self.detail}"


TABLE_HEADER = "check\tstatus\tvalue\ttolerance\tdetail"


def _gh(order: int):
    """Nodes/weights integrating against plain dx for integrands ~ exp(-2 x^2) poly."""
    t, w = np.polynomial.hermite.hermgauss(order)
    x = t / math.sqrt(2)
    return x, w * np.exp(t * t) / math.sqrt(2)


class Context:
    """Lazily built datasets and reconstructions shared between checks."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.eta = cfg.experiment.efficiency_eta
        self.alpha, self.beta = arm_loss_amplitudes(cfg.experiment.arm_transmission_t)
        self.trunc: FockTruncation = cfg.truncation
        self.timings: dict = {}

    def rng(self, stream: int) -> np.random.Generator:
        # streams far from the per-bin scan streams
        return np.random.default_rng(np.random.SeedSequence(self.cfg.seed, spawn_key=(10**6 + stream,)))

    def truth(self, phi: float):
        return heralded_state(make_ebit(self.alpha, self.beta, phi, self.trunc), self.eta)

    def scan(self, phi: float) -> QuadratureData:
        cfg = self.cfg
        return run_scan(ScanConfig(
            n_samples=cfg.n_samples, phase_grid=tuple(default_phase_grid(cfg.bins)),
            eta=self.eta, alpha=self.alpha, beta=self.beta, seed=cfg.seed,
            include_vacuum_bin=True, state_phase=phi))

    @cached_property
    def data0(self) -> QuadratureData:
        return self.scan(0.0)

    @cached_property
    def data_pi(self) -> QuadratureData:
        return self.scan(math.pi)

    def _ml(self, data) -> MLResult:
        rc = self.cfg.reconstruction
        t0 = time.perf_counter()
        res = ml_reconstruct(data, ReconstructionConfig(
            n_max=rc.n_max, max_iterations=rc.max_iterations,
            convergence_tol=rc.convergence_tol, quadrature_grid=rc.quadrature_grid,
            povm=rc.povm))
        self.timings[id(data)] = time.perf_counter() - t0
        return res

    @cached_property
    def ml0(self) -> MLResult:
        return self._ml(self.data0)

    @cached_property
    def ml_pi(self) -> MLResult:
        return self._ml(self.data_pi)


def _result(name, value, ok, tol, detail=""):
    return CheckResult(name, bool(ok), float(value), tol, detail)


# -- module invariants -------------------------------------------------------

def check_wavefunctions(ctx: Context):
    x, w = _gh(40)
    psi = quadrature_wavefunctions(ctx.trunc.n_max, x)
    err = np.max(np.abs((psi * w) @ psi.T - np.eye(ctx.trunc.mode_dim)))
    return _result("fock.wavefunction_orthonormality", err, err < 1e-12, "<1e-12")


def check_povm_completeness(ctx: Context):
    err = povm_completeness_error(ctx.trunc, ctx.cfg.reconstruction.quadrature_grid)
    return _result("fock.povm_completeness", err, err < 1e-10, "<1e-10")


def check_heralded_populations(ctx: Context):
    rho = ctx.truth(0.0)
    err = max(abs(rho.element(0, 0, 0, 0).real - (1 - ctx.eta)),
              abs(rho.element(1, 0, 1, 0).real - ctx.eta * ctx.alpha ** 2),
              abs(rho.element(1, 0, 0, 1) - ctx.eta * ctx.alpha * ctx.beta))
    return _result("ebit.heralded_populations", err, err < 1e-12, "<1e-12")


def _grid4(order=8):
    x, w = _gh(order)
    g = np.meshgrid(x, x, x, x, indexing="ij")
    wt = np.einsum("i,j,k,l->ijkl", w, w, w, w)
    return g, wt


def check_wigner_normalization(ctx: Context):
    (x1, y1, x2, y2), wt = _grid4()
    worst = 0.0
    for phi in (0.0, math.pi / 4, math.pi / 2, math.pi):
        for eta in (0.0, ctx.eta, 1.0):
            total = np.sum(wt * wigner_analytic(x1, y1, x2, y2, phi, eta, ctx.alpha, ctx.beta))
            worst = max(worst, abs(total - 1.0))
    return _result("wigner.normalization", worst, worst < 1e-8, "<1e-8")


def check_single_mode_reduction(ctx: Context):
    x, w = _gh(8)
    a = np.linspace(-1.5, 1.5, 7)
    x1, y1, x2, y2 = np.meshgrid(a, a, x, x, indexing="ij")
    wt = np.outer(w, w)
    worst = 0.0
    for phi in (0.0, 1.0, math.pi):
        red = np.einsum("abij,ij->ab", wigner_analytic(x1, y1, x2, y2, phi, 1.0), wt)
        a1, b1 = np.meshgrid(a, a, indexing="ij")
        worst = max(worst, np.max(np.abs(red - 0.5 * (w0(a1, b1) + w1(a1, b1)))))
    return _result("wigner.single_mode_reduction", worst, worst < 1e-12, "<1e-12")


def check_moment_law(ctx: Context):
    (x1, y1, x2, y2), wt = _grid4()
    worst = 0.0
    for phi in (0.0, 0.7, math.pi / 2, math.pi):
        w = wt * wigner_analytic(x1, y1, x2, y2, phi, ctx.eta, ctx.alpha, ctx.beta)
        c = ctx.eta * ctx.alpha * ctx.beta / 2
        worst = max(worst, abs(np.sum(w * x1 * x2) - c * math.cos(phi)),
                    abs(np.sum(w * x1 * y2) + c * math.sin(phi)))
    return _result("wigner.moment_law", worst, worst < 1e-12, "<1e-12")


def check_rho_equivalence(ctx: Context):
    rng = ctx.rng(1)
    pts = rng.uniform(-1.4, 1.4, size=(4, 200))
    worst = 0.0
    for phi in (0.0, math.pi / 2, math.pi):
        rho = ctx.truth(phi)
        a = wigner_from_rho(rho, *pts)
        b = wigner_analytic(*pts, phi, ctx.eta, ctx.alpha, ctx.beta)
        worst = max(worst, np.max(np.abs(a - b)))
    return _result("wigner.rho_equivalence", worst, worst < 1e-6, "<1e-6")


def check_pdf_normalization(ctx: Context):
    x, w = _gh(10)
    a, b = np.meshgrid(x, x, indexing="ij")
    wt = np.outer(w, w)
    worst = max(abs(np.sum(wt * joint_pdf(a, b, chi, ctx.eta, ctx.alpha, ctx.beta)) - 1)
                for chi in (0.0, 1.0, math.pi / 2, math.pi))
    return _result("homodyne.pdf_normalization", worst, worst < 1e-12, "<1e-12")


def check_calibration(ctx: Context):
    var = calibration_variance(ctx.data0)
    n = int(np.isfinite(ctx.data0.x_vac).sum())
    tol = 0.25 * 5 * math.sqrt(2.0 / n)
    return _result("homodyne.calibration_variance", var, abs(var - 0.25) < tol,
                   f"0.25+-{tol:.2g}")


# -- acceptance ---------------------------------------------------------------

def check_efficiency_recovery(ctx: Context):
    res = ctx.ml0
    rho = res.rho
    eta, a, b = ctx.eta, ctx.alpha, ctx.beta
    got = dict(p00=rho.element(0, 0, 0, 0).real, p10=rho.element(1, 0, 1, 0).real,
               p01=rho.element(0, 1, 0, 1).real, coh=rho.element(1, 0, 0, 1).real)
    want = dict(p00=1 - eta, p10=eta * a * a, p01=eta * b * b, coh=eta * a * b)
    err = max(abs(got[k] - want[k]) for k in got)
    diag = np.real(np.diag(rho.elements))
    multi = float(diag[rho.truncation.total_photons() >= 2].sum())
    secs = ctx.timings.get(id(ctx.data0), float("nan"))
    ok = err <= 0.01 and multi <= 0.01 and res.converged
    detail = (" ".join(f"{k}={v:.4f}" for k, v in got.items())
              + f" multiphoton={multi:.4f} converged={res.converged} seconds={secs:.1f}")
    return _result("acceptance.1.efficiency_recovery", err, ok, "<=0.01", detail)


def check_equal_suppression(ctx: Context):
    rho = ctx.ml0.rho
    expected = ctx.beta / ctx.alpha
    ratio = abs(rho.element(1, 0, 0, 1)) / rho.element(1, 0, 1, 0).real
    return _result("acceptance.2.equal_suppression", ratio, abs(ratio - expected) <= 0.05,
                   f"{expected:.3g}+-0.05")


def check_wigner_negativity(ctx: Context):
    rho = ctx.ml0.rho
    origin = wigner_from_rho(rho, 0.0, 0.0, -0.1, -0.1)
    exact = abs(wigner_analytic(0, 0, 0, 0, 0.0, 1.0) + 4 / math.pi ** 2) < 1e-12
    grid_hat = export_section(rho, "x1y1")
    grid_true = export_section(AnalyticSource(0.0, ctx.eta, ctx.alpha, ctx.beta), "x1y1")
    diff = grid_hat.max_abs_difference(grid_true)
    ok = origin < 0 and exact and diff <= 0.015
    return _result("acceptance.3.wigner_negativity", diff, ok, "<=0.015",
                   f"W_hat(0,0;-0.1,-0.1)={origin:.4f}")


def check_factorization(ctx: Context):
    a = np.linspace(-2, 2, 21)
    x1, y1, x2, y2 = np.meshgrid(a, a, a, a, indexing="ij")
    worst = 0.0
    for phi in (0.0, math.pi / 4, math.pi / 2, math.pi):
        xp, yp, xm, ym = correlation_coordinates(PhasePoint4(x1, y1, x2, y2), phi)
        lhs = wigner_analytic(x1, y1, x2, y2, phi, 1.0)
        worst = max(worst, np.max(np.abs(lhs - w1(xp, yp) * w0(xm, ym))))
    return _result("acceptance.4.factorization", worst, worst < 1e-12, "<1e-12")


def check_histograms(ctx: Context, n: int = 200_000):
    ps = []
    for i, chi in enumerate((0.0, math.pi / 2, math.pi)):
        x1, x2 = sample_pair(chi, ctx.eta, ctx.alpha, ctx.beta, ctx.rng(10 + i), size=n)
        ps.append(histogram_chi2(x1, x2, chi, ctx.eta, ctx.alpha, ctx.beta)[2])
    p = min(ps)
    return _result("acceptance.5.histogram_chi2", p, p >= 1e-3, "p>=1e-3",
                   " ".join(f"{q:.3g}" for q in ps))


def check_marginals_ks(ctx: Context):
    d = ctx.data0
    low = d.chi < math.pi / 2
    ps = [stats.ks_2samp(col[low], col[~low]).pvalue for col in (d.x1, d.x2)]
    p = min(ps)
    return _result("acceptance.5.marginal_ks", p, p >= 1e-3, "p>=1e-3",
                   f"x1={ps[0]:.3g} x2={ps[1]:.3g}")


def check_correlation_variances(ctx: Context, n: int = 10**6):
    x1, x2 = sample_pair(0.0, ctx.eta, ctx.alpha, ctx.beta, ctx.rng(20), size=n)
    want_p = 0.25 + ctx.eta / 4 + ctx.eta * ctx.alpha * ctx.beta / 2
    want_m = 0.25 + ctx.eta / 4 - ctx.eta * ctx.alpha * ctx.beta / 2
    vp = np.var((x1 + x2) / math.sqrt(2), ddof=1)
    vm = np.var((x1 - x2) / math.sqrt(2), ddof=1)
    rel = max(abs(vp / want_p - 1), abs(vm / want_m - 1))
    return _result("acceptance.5.correlation_variances", rel, rel <= 0.01, "rel<=0.01",
                   f"var_plus={vp:.4f} var_minus={vm:.4f}")


def check_phase_sweep(ctx: Context, n: int = 400_000):
    c = ctx.eta * ctx.alpha * ctx.beta / 2
    chis = np.linspace(0, math.pi, 25)
    rng = ctx.rng(30)
    means = np.array([np.mean(np.prod(sample_pair(chi, ctx.eta, ctx.alpha, ctx.beta, rng, size=n),
                                      axis=0)) for chi in chis])
    err = np.max(np.abs(means - c * np.cos(chis)))
    flip = bool(np.all(means[chis < math.pi / 2 - 0.1] > 0) and
                np.all(means[chis > math.pi / 2 + 0.1] < 0))
    # at chi = pi/2 read y2: the mode-2 LO turned by pi/2 gives X2 = -y2
    b1, b2 = sample_pair(0.0, ctx.eta, ctx.alpha, ctx.beta, rng, size=n)
    x1y2 = float(np.mean(-b1 * b2))
    ok = err <= 0.003 and flip and abs(abs(x1y2) - c) <= 0.005
    return _result("acceptance.6.phase_sweep", err, ok, "<=0.003",
                   f"sign_flip={flip} |<x1y2>|(pi/2)={abs(x1y2):.4f}")


def check_estimator_agreement(ctx: Context):
    orth = float(np.nanmax(orthogonality_errors(ctx.trunc.n_max,
                                                ctx.cfg.reconstruction.quadrature_grid)))
    rc = ctx.cfg.reconstruction
    pf = pattern_reconstruct(ctx.data0, ReconstructionConfig(
        n_max=rc.n_max, method="pattern_function", quadrature_grid=rc.quadrature_grid))
    ml = global_phase_average(ctx.ml0.rho)
    diff = float(np.max(np.abs(pf.elements - ml.elements)))
    return _result("acceptance.7.estimator_agreement", diff, diff <= 0.02 and orth <= 1e-6,
                   "<=0.02", f"orthogonality={orth:.2e}")


def check_bell_pair(ctx: Context):
    c0 = ctx.ml0.rho.element(1, 0, 0, 1).real
    c1 = ctx.ml_pi.rho.element(1, 0, 0, 1).real
    want = ctx.eta * ctx.alpha * ctx.beta
    err = max(abs(abs(c0) - want), abs(abs(c1) - want))
    ok = c0 > 0 > c1 and err <= 0.01
    return _result("acceptance.8.bell_pair", err, ok, "<=0.01",
                   f"coh(0)={c0:.4f} coh(pi)={c1:.4f}")


CHECKS: dict[str, Callable[[Context], CheckResult]] = {
    "fock.wavefunction_orthonormality": check_wavefunctions,
    "fock.povm_completeness": check_povm_completeness,
    "ebit.heralded_populations": check_heralded_populations,
    "wigner.normalization": check_wigner_normalization,
    "wigner.single_mode_reduction": check_single_mode_reduction,
    "wigner.moment_law": check_moment_law,
    "wigner.rho_equivalence": check_rho_equivalence,
    "homodyne.pdf_normalization": check_pdf_normalization,
    "homodyne.calibration_variance": check_calibration,
    "acceptance.1.efficiency_recovery": check_efficiency_recovery,
    "acceptance.2.equal_suppression": check_equal_suppression,
    "acceptance.3.wigner_negativity": check_wigner_negativity,
    "acceptance.4.factorization": check_factorization,
    "acceptance.5.histogram_chi2": check_histograms,
    "acceptance.5.marginal_ks": check_marginals_ks,
    "acceptance.5.correlation_variances": check_correlation_variances,
    "acceptance.6.phase_sweep": check_phase_sweep,
    "acceptance.7.estimator_agreement": check_estimator_agreement,
    "acceptance.8.bell_pair": check_bell_pair,
}


def select_checks(patterns: Optional[list[str]] = None) -> list[str]:
    """Check names matching any prefix in ``patterns`` (all when empty)."""
    if not patterns:
        return list(CHECKS)
    chosen = [n for n in CHECKS if any(n.startswith(p) for p in patterns)]
    if not chosen:
        raise ValueError(f"no checks match {', '.join(patterns)}")
    return chosen


def run_checks(cfg: PipelineConfig, names: Optional[list[str]] = None,
               progress: Optional[Callable[[CheckResult], None]] = None) -> list[CheckResult]:
    ctx = Context(cfg)
    out = []
    for name in names or list(CHECKS):
        try:
            res = CHECKS[name](ctx)
        except Exception as exc:  # a crashing check is a failed check, not a crashed suite
            res = CheckResult(name, False, float("nan"), "-", f"error: {exc}")
        out.append(res)
        if progress:
            progress(res)
    return out
