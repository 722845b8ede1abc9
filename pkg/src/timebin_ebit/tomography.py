"""Two-mode density-matrix reconstruction from relative-phase homodyne data.

Every event is a rank-one POVM element ``|x1,0><x1,0| (x) |x2,-chi><x2,-chi|``.
Only the LO phase difference is controlled, so coherences between different
total photon numbers are not reliably determined; estimates are compared with
ground truth after :func:`~timebin_ebit.fock.global_phase_average`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .fock import (DensityMatrix, FockTruncation, fidelity, global_phase_average,
                   number_conserving_mask, quadrature_wavefunctions, trace_distance)
from .homodyne import QuadratureData
from .pattern import DEFAULT_GRID, kernel_self_test, pattern_functions

log = logging.getLogger(__name__)

METHODS = ("max_likelihood", "pattern_function")
POVM_MODELS = ("phase_averaged", "relative_phase")
MIN_SAMPLES = 1000


@dataclass(frozen=True)
class ReconstructionConfig:
    """Reconstruction settings.

    ``povm="phase_averaged"`` averages each POVM element over the global phase,
    which is exact for an unreferenced LO and restricts the fit to states that
    conserve total photon number (85 real parameters at ``n_max=4`` instead of
    625). ``"relative_phase"`` keeps the bare rank-one elements.
    """

    n_max: int = 4
    method: str = "max_likelihood"
    max_iterations: int = 2000
    convergence_tol: float = 1e-6
    quadrature_grid: tuple = DEFAULT_GRID
    povm: str = "phase_averaged"
    accelerate: bool = True

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {self.n_max}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.povm not in POVM_MODELS:
            raise ValueError(f"povm must be one of {POVM_MODELS}, got {self.povm!r}")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        lo, hi, count = self.quadrature_grid
        if not (hi > lo and int(count) >= 3):
            raise ValueError(f"bad quadrature grid {self.quadrature_grid}")

    @property
    def truncation(self) -> FockTruncation:
        return FockTruncation(self.n_max)


class EmptyDatasetError(ValueError):
    pass


def _check_samples(samples: QuadratureData):
    if len(samples) == 0:
        raise EmptyDatasetError("no quadrature samples")
    if len(samples) < MIN_SAMPLES:
        raise EmptyDatasetError(f"need at least {MIN_SAMPLES} samples, got {len(samples)}")


def povm_completeness_error(trunc: FockTruncation, grid=DEFAULT_GRID, theta: float = 0.3) -> float:
    """Deviation of ``int dx |x,theta><x,theta|`` from the identity on the
    truncated space; it should be at rounding level, so no extra normalization
    operator enters the likelihood iteration."""
    lo, hi, count = grid
    x = np.linspace(lo, hi, int(count))
    psi = quadrature_wavefunctions(trunc.n_max, x)
    phase = np.exp(1j * theta * np.arange(trunc.mode_dim))
    v = psi * phase[:, None]
    g = (v @ v.conj().T) * (x[1] - x[0])
    return float(np.max(np.abs(g - np.eye(trunc.mode_dim))))


# -- measurement models -----------------------------------------------------

class _PhaseAveragedModel:
    """Real feature matrix: ``p_i = F[i] @ theta(rho)`` for number-conserving rho."""

    def __init__(self, samples: QuadratureData, trunc: FockTruncation):
        self.trunc = trunc
        d = trunc.mode_dim
        psi1 = quadrature_wavefunctions(trunc.n_max, samples.x1)
        psi2 = quadrature_wavefunctions(trunc.n_max, samples.x2)
        chi = np.asarray(samples.chi, float)
        rows, cols, kinds = [], [], []
        for i in range(trunc.dim):
            for j in range(i, trunc.dim):
                k, l = divmod(i, d)
                m, n = divmod(j, d)
                if k + l != m + n:
                    continue
                if i == j:
                    rows.append(i), cols.append(j), kinds.append(0)
                else:
                    rows += [i, i]
                    cols += [j, j]
                    kinds += [1, 2]
        self.rows = np.array(rows)
        self.cols = np.array(cols)
        self.kinds = np.array(kinds)
        feats = np.empty((len(chi), len(rows)))
        cache = {}
        for c, (i, j, kind) in enumerate(zip(rows, cols, kinds)):
            k, l = divmod(i, d)
            m, n = divmod(j, d)
            base = psi1[k] * psi1[m] * psi2[l] * psi2[n]
            if kind == 0:
                feats[:, c] = base
                continue
            q = l - n
            if q not in cache:
                cache[q] = (np.cos(q * chi), np.sin(q * chi))
            cos_q, sin_q = cache[q]
            feats[:, c] = 2 * base * cos_q if kind == 1 else -2 * base * sin_q
        self.features = feats
        self.n = len(chi)
        self.mask = number_conserving_mask(trunc)

    def params(self, rho: np.ndarray) -> np.ndarray:
        v = rho[self.rows, self.cols]
        return np.where(self.kinds == 2, v.imag, v.real)

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        return self.features @ self.params(rho)

    def r_operator(self, p: np.ndarray) -> np.ndarray:
        g = (self.features.T @ (1.0 / p)) / self.n
        r = np.zeros((self.trunc.dim,) * 2, complex)
        diag = self.kinds == 0
        r[self.rows[diag], self.cols[diag]] = g[diag]
        re = self.kinds == 1
        im = self.kinds == 2
        r[self.rows[re], self.cols[re]] += 0.5 * g[re]
        r[self.rows[im], self.cols[im]] += 0.5j * g[im]
        upper = ~np.eye(self.trunc.dim, dtype=bool)
        r = r + np.where(upper, r, 0).conj().T
        return r


class _RelativePhaseModel:
    """Rank-one POVM vectors ``v_i = <k,l|x1,0; x2,-chi>``."""

    def __init__(self, samples: QuadratureData, trunc: FockTruncation):
        self.trunc = trunc
        d = trunc.mode_dim
        psi1 = quadrature_wavefunctions(trunc.n_max, samples.x1).T
        psi2 = quadrature_wavefunctions(trunc.n_max, samples.x2).T
        v2 = psi2 * np.exp(-1j * np.outer(samples.chi, np.arange(d)))
        self.vectors = (psi1[:, :, None] * v2[:, None, :]).reshape(len(samples), d * d)
        self.n = len(samples)
        self.mask = np.ones((trunc.dim, trunc.dim), bool)

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        v = self.vectors
        return np.einsum("ia,ia->i", v.conj(), v @ rho.T).real

    def r_operator(self, p: np.ndarray) -> np.ndarray:
        v = self.vectors
        r = (v.T / p) @ v.conj() / self.n
        return 0.5 * (r + r.conj().T)


def _log_likelihood(p: np.ndarray) -> float:
    if np.any(p <= 0):
        return -math.inf
    return float(np.sum(np.log(p)))


def _normalize(rho: np.ndarray) -> np.ndarray:
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def _trace_norm_half(delta: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(delta))))


@dataclass
class MLResult:
    rho: DensityMatrix
    log_likelihood: float
    iterations: int
    converged: bool
    accelerator_evaluations: int = 0
    history: list = field(default_factory=list, repr=False)


class _Fixpoint:
    """``rho <- N[M rho M]`` with ``M = I + s (R - I)``; ``s = 1`` is the plain
    RrhoR update, ``s < 1`` its diluted form, ``s > 1`` over-relaxation.

    Any Hermitian ``M`` keeps ``rho`` positive. Steps that would lower the
    likelihood are rejected and ``s`` is halved, so accepted iterates never
    decrease it.
    """

    S_MAX = 64.0
    S_MIN = 1e-6

    def __init__(self, model, rho, tol):
        self.model = model
        self.tol = tol
        self.rho = rho
        self.p = model.probabilities(rho)
        self.ll = _log_likelihood(self.p)
        self.s = 1.0
        self.eye = np.eye(rho.shape[0])

    def step(self):
        """One iteration; returns the trace distance of the proposed move."""
        r = self.model.r_operator(self.p)
        while True:
            m = self.eye + self.s * (r - self.eye)
            new = _normalize(m @ self.rho @ m.conj().T)
            p_new = self.model.probabilities(new)
            ll_new = _log_likelihood(p_new)
            move = _trace_norm_half(new - self.rho)
            if ll_new >= self.ll:
                self.rho, self.p, self.ll = new, p_new, ll_new
                self.s = min(self.s * 1.5, self.S_MAX)
                return move
            if move < self.tol or self.s <= self.S_MIN:
                # at rounding level: no representable improvement remains
                return move
            self.s *= 0.5


def _factor_objective(model, z: np.ndarray):
    """Mean negative log-likelihood of ``rho = A A^dag / Tr(A A^dag)`` and its
    gradient, with ``A`` packed as ``z = [Re A, Im A]`` (masked entries ignored)."""
    dim = model.trunc.dim
    a = (z[:dim * dim] + 1j * z[dim * dim:]).reshape(dim, dim) * model.mask
    aa = a @ a.conj().T
    t = np.trace(aa).real
    p = model.probabilities(aa / t)
    if np.any(p <= 0):
        return math.inf, np.zeros_like(z)
    grad = -(2.0 / t) * ((model.r_operator(p) - np.eye(dim)) @ a) * model.mask
    return -float(np.mean(np.log(p))), np.concatenate([grad.real.ravel(), grad.imag.ravel()])


def _accelerate(model, rho: np.ndarray, maxiter: int):
    """Maximize the likelihood over ``rho = A A^dag / Tr`` with L-BFGS."""
    dim = rho.shape[0]
    mask = model.mask

    w, v = np.linalg.eigh(rho)
    a0 = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T * mask
    z0 = np.concatenate([a0.real.ravel(), a0.imag.ravel()])
    evals = [0]

    def objective(z):
        evals[0] += 1
        return _factor_objective(model, z)

    res = minimize(objective, z0, jac=True, method="L-BFGS-B",
                   options=dict(maxiter=maxiter, ftol=1e-15, gtol=1e-11, maxcor=30))
    a = (res.x[:dim * dim] + 1j * res.x[dim * dim:]).reshape(dim, dim) * mask
    return _normalize(a @ a.conj().T), evals[0]


def _build_model(samples: QuadratureData, config: ReconstructionConfig):
    if config.povm == "phase_averaged":
        return _PhaseAveragedModel(samples, config.truncation)
    return _RelativePhaseModel(samples, config.truncation)


def ml_reconstruct(samples: QuadratureData, config: ReconstructionConfig = ReconstructionConfig(),
                   warmup: int = 20) -> MLResult:
    """Maximum-likelihood density matrix.

    Starts from the maximally mixed state and runs the likelihood-ascending
    fixed-point iteration. With ``config.accelerate`` a quasi-Newton jump
    follows a short warm-up (kept only if it raises the likelihood) and the
    fixed-point iteration then runs until successive iterates are closer than
    ``config.convergence_tol`` in trace distance. ``history`` lists the
    log-likelihood of every accepted iterate.
    """
    _check_samples(samples)
    trunc = config.truncation
    model = _build_model(samples, config)
    it = _Fixpoint(model, np.eye(trunc.dim) / trunc.dim, config.convergence_tol)
    history = [it.ll]
    iterations = 0
    converged = False
    acc_evals = 0

    def run(limit):
        nonlocal iterations, converged
        while iterations < limit:
            move = it.step()
            iterations += 1
            history.append(it.ll)
            if move < config.convergence_tol:
                converged = True
                return

    if config.accelerate:
        run(min(warmup, config.max_iterations))
        if not converged:
            rho_acc, acc_evals = _accelerate(model, it.rho, config.max_iterations)
            p_acc = model.probabilities(rho_acc)
            ll_acc = _log_likelihood(p_acc)
            if ll_acc > it.ll:
                it.rho, it.p, it.ll = rho_acc, p_acc, ll_acc
                it.s = 1.0
                history.append(ll_acc)
    run(config.max_iterations)
    if not converged:
        log.warning("ML reconstruction did not converge in %d iterations", iterations)
    rho = DensityMatrix.from_matrix(it.rho, trunc)
    return MLResult(rho, it.ll, iterations, converged, acc_evals, history)


# -- direct (pattern-function) estimator -------------------------------------

def phase_weights(chi: np.ndarray) -> np.ndarray:
    """Per-event weights making the sample mean a uniform average over the
    effective phase.

    The estimator integrand is pi-periodic in chi, so the distinct phase
    settings are treated as points on a circle of circumference pi and given
    trapezoid weights (settings at 0 and pi coincide and share one weight).
    """
    values, inverse, counts = np.unique(np.mod(chi, math.pi), return_inverse=True,
                                        return_counts=True)
    if len(values) == 1:
        return np.full(len(chi), 1.0 / len(chi))
    gaps = np.diff(np.append(values, values[0] + math.pi))
    weight = 0.5 * (gaps + np.roll(gaps, 1)) / math.pi
    return (weight / counts)[inverse]


def pattern_reconstruct(samples: QuadratureData,
                        config: ReconstructionConfig = ReconstructionConfig(method="pattern_function"),
                        self_test_tol: float = 1e-6) -> DensityMatrix:
    """Unbiased direct estimate of the number-conserving part of rho,
    ``rho_{kl,mn} = < f_km(x1) f_ln(x2) exp(i (k-m) chi) >`` for ``k+l = m+n``.

    Not constrained to be positive or unit-trace. The kernels must pass the
    orthogonality self-test first.
    """
    _check_samples(samples)
    trunc = config.truncation
    kernel_self_test(trunc.n_max, config.quadrature_grid, self_test_tol)
    d = trunc.mode_dim
    f1 = pattern_functions(trunc.n_max, samples.x1)
    f2 = pattern_functions(trunc.n_max, samples.x2)
    wts = phase_weights(np.asarray(samples.chi, float))
    chi = np.asarray(samples.chi, float)
    rho = np.zeros((trunc.dim, trunc.dim), complex)
    phases = {}
    for i in range(trunc.dim):
        k, l = divmod(i, d)
        for j in range(i, trunc.dim):
            m, n = divmod(j, d)
            if k + l != m + n:
                continue
            q = k - m
            if q not in phases:
                phases[q] = wts * np.exp(1j * q * chi)
            val = np.dot(f1[k, m] * f2[l, n], phases[q])
            rho[i, j] = val
            rho[j, i] = np.conj(val)
    return DensityMatrix.from_matrix(rho, trunc, physical=False)


def reconstruct(samples: QuadratureData, config: ReconstructionConfig) -> DensityMatrix:
    if config.method == "pattern_function":
        return pattern_reconstruct(samples, config)
    return ml_reconstruct(samples, config).rho


# -- reporting ---------------------------------------------------------------

@dataclass(frozen=True)
class ReconstructionReport:
    fidelity: float
    trace_distance: float
    eta_hat: float
    visibility: float
    multiphoton_weight: float
    trace: float

    def to_text(self, extra: Optional[dict] = None) -> str:
        items = dict(fidelity=self.fidelity, trace_distance=self.trace_distance,
                     eta_hat=self.eta_hat, visibility=self.visibility,
                     multiphoton_weight=self.multiphoton_weight, trace=self.trace)
        lines = [f"{k}={v!r}" for k, v in items.items()]
        for k, v in (extra or {}).items():
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"


def reconstruction_report(rho_hat: DensityMatrix, rho_true: DensityMatrix) -> ReconstructionReport:
    """Closed-loop figures of merit. Fidelity and trace distance compare the
    phase-averaged estimate with the ground truth."""
    if rho_hat.truncation != rho_true.truncation:
        raise ValueError("estimate and ground truth use different truncations")
    avg = global_phase_average(rho_hat)
    p10 = rho_hat.element(1, 0, 1, 0).real
    p01 = rho_hat.element(0, 1, 0, 1).real
    coh = abs(rho_hat.element(1, 0, 0, 1))
    denom = math.sqrt(max(p10, 0.0) * max(p01, 0.0))
    tot = rho_hat.truncation.total_photons()
    diag = np.real(np.diag(rho_hat.elements))
    return ReconstructionReport(
        fidelity=fidelity(avg, rho_true),
        trace_distance=trace_distance(avg, rho_true),
        eta_hat=p10 + p01,
        visibility=coh / denom if denom > 0 else 0.0,
        multiphoton_weight=float(diag[tot >= 2].sum()),
        trace=float(diag.sum()),
    )
