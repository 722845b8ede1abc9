"""Synthetic balanced-homodyne data for the heralded ebit.

Both time-bins are measured with a fixed pair of local-oscillator pulses while
the remote interferometer phase is scanned. The joint quadrature statistics
depend on the ebit phase and the LO phase difference only through their sum,
the effective phase ``chi``, so scanning either one produces the same data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional

import numpy as np
from scipy import stats

from .ebit import DEFAULT_EFFICIENCY

VACUUM_SD = 0.5
SQRT_HALF = math.sqrt(0.5)
GENERATOR_NAME = "numpy.PCG64/SeedSequence(seed,spawn_key=(bin,))"
MAX_REJECTION_ROUNDS = 10_000

DEFAULT_BINS = 100
DEFAULT_SAMPLES = 10**6


def vacuum_pdf(x):
    """Vacuum quadrature density, Gaussian with variance 1/4."""
    return math.sqrt(2 / math.pi) * np.exp(-2.0 * np.square(x))


def photon_pdf(x):
    """Single-photon quadrature density ``|psi_1(x)|^2``."""
    return 4.0 * np.square(x) * vacuum_pdf(x)


def _check_params(eta, alpha, beta):
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"efficiency eta must lie in [0, 1], got {eta}")
    if alpha < 0 or beta < 0 or abs(alpha * alpha + beta * beta - 1.0) > 1e-10:
        raise ValueError(f"need alpha, beta >= 0 with alpha^2 + beta^2 = 1, got {alpha}, {beta}")


def joint_pdf(x1, x2, chi, eta=DEFAULT_EFFICIENCY, alpha=SQRT_HALF, beta=SQRT_HALF):
    """Joint density of the two time-bin quadratures at effective phase ``chi``.

    ``(1-eta) g(x1) g(x2) + eta (2/pi) exp(-2 x1^2 - 2 x2^2)
    (4 alpha^2 x1^2 + 4 beta^2 x2^2 + 8 alpha beta x1 x2 cos chi)``
    """
    _check_params(eta, alpha, beta)
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    gauss = (2 / math.pi) * np.exp(-2.0 * (x1 * x1 + x2 * x2))
    photon = 4 * alpha * alpha * x1 * x1 + 4 * beta * beta * x2 * x2 \
        + 8 * alpha * beta * x1 * x2 * np.cos(chi)
    return gauss * ((1.0 - eta) + eta * photon)


def effective_phase(phi_i, delta_theta):
    """The only phase combination the joint statistics depend on."""
    return np.asarray(phi_i) + np.asarray(delta_theta)


def sample_photon_quadrature(rng: np.random.Generator, size) -> np.ndarray:
    """Draw from ``|psi_1(x)|^2``: ``x^2`` is Gamma(3/2, rate 2), sign uniform."""
    g = rng.gamma(1.5, 0.5, size)
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    return sign * np.sqrt(g)


def _photon_pair_balanced(chi, rng, size):
    # (x1 +- x2)/sqrt2 decouple: photon in one, vacuum in the other
    photon = sample_photon_quadrature(rng, size)
    vac = rng.normal(0.0, VACUUM_SD, size)
    plus_has_photon = rng.random(size) < 0.5 * (1.0 + np.cos(chi))
    u = np.where(plus_has_photon, photon, vac)
    v = np.where(plus_has_photon, vac, photon)
    return (u + v) * SQRT_HALF, (u - v) * SQRT_HALF


# Gaussian envelope with variance 1/2 per coordinate bounds the photon term:
# p/q <= 8 r^2 exp(-r^2) <= 8/e
_ENVELOPE_SD = math.sqrt(0.5)
_ENVELOPE_BOUND = 8.0 / math.e


def _photon_pair_rejection(chi, alpha, beta, rng, size):
    chi = np.broadcast_to(np.asarray(chi, float), (size,))
    out1 = np.empty(size)
    out2 = np.empty(size)
    todo = np.arange(size)
    for _ in range(MAX_REJECTION_ROUNDS):
        if todo.size == 0:
            return out1, out2
        n = todo.size
        x1 = rng.normal(0.0, _ENVELOPE_SD, n)
        x2 = rng.normal(0.0, _ENVELOPE_SD, n)
        r2 = x1 * x1 + x2 * x2
        quad = 4 * alpha * alpha * x1 * x1 + 4 * beta * beta * x2 * x2 \
            + 8 * alpha * beta * x1 * x2 * np.cos(chi[todo])
        # target / envelope = 2 quad exp(-r^2)
        accept = rng.random(n) * _ENVELOPE_BOUND < 2.0 * quad * np.exp(-r2)
        out1[todo[accept]] = x1[accept]
        out2[todo[accept]] = x2[accept]
        todo = todo[~accept]
    raise RuntimeError(
        f"rejection sampler exceeded {MAX_REJECTION_ROUNDS} rounds "
        f"({todo.size} draws pending); check alpha, beta")


def sample_pair(chi, eta=DEFAULT_EFFICIENCY, alpha=SQRT_HALF, beta=SQRT_HALF,
                rng: Optional[np.random.Generator] = None, size=None):
    """Exact draws of ``(x1, x2)`` from :func:`joint_pdf`.

    With probability ``1 - eta`` both bins are vacuum. Otherwise the balanced
    state is sampled in the sum/difference frame and unbalanced amplitudes go
    through rejection against a Gaussian envelope. ``chi`` may be a scalar or
    an array broadcast against ``size``.
    """
    _check_params(eta, alpha, beta)
    if rng is None:
        rng = np.random.default_rng()
    scalar = size is None and np.ndim(chi) == 0
    n = int(np.prod(size)) if size is not None else max(np.size(chi), 1)
    chi = np.broadcast_to(np.asarray(chi, float), (n,)) if np.ndim(chi) else float(chi)
    x1 = rng.normal(0.0, VACUUM_SD, n)
    x2 = rng.normal(0.0, VACUUM_SD, n)
    photon = rng.random(n) < eta
    m = int(photon.sum())
    if m:
        c = chi[photon] if np.ndim(chi) else chi
        if abs(alpha - beta) < 1e-12:
            p1, p2 = _photon_pair_balanced(c, rng, m)
        else:
            p1, p2 = _photon_pair_rejection(c, alpha, beta, rng, m)
        x1[photon] = p1
        x2[photon] = p2
    if scalar:
        return float(x1[0]), float(x2[0])
    if size is not None:
        return x1.reshape(size), x2.reshape(size)
    return x1, x2


# -- scans ------------------------------------------------------------------

def default_phase_grid(bins: int = DEFAULT_BINS) -> np.ndarray:
    return np.linspace(0.0, math.pi, int(bins))


@dataclass(frozen=True)
class ScanConfig:
    """One remote-homodyne scan.

    ``phase_grid`` holds the scanned phase settings (recorded as ``chi``);
    ``state_phase`` is the ebit phase of the fixed state whose LO scan the data
    represent, so each event is drawn at effective phase ``chi - state_phase``.
    """

    n_samples: int = DEFAULT_SAMPLES
    phase_grid: tuple = field(default_factory=lambda: tuple(default_phase_grid()))
    eta: float = DEFAULT_EFFICIENCY
    alpha: float = SQRT_HALF
    beta: float = SQRT_HALF
    seed: int = 20050101
    include_vacuum_bin: bool = True
    state_phase: float = 0.0

    def __post_init__(self):
        grid = tuple(float(c) for c in self.phase_grid)
        object.__setattr__(self, "phase_grid", grid)
        if not grid:
            raise ValueError("phase_grid is empty")
        if min(grid) < 0.0 or max(grid) > math.pi + 1e-12:
            raise ValueError("phase_grid values must lie in [0, pi]")
        if self.n_samples <= 0 or self.n_samples % len(grid):
            raise ValueError(
                f"n_samples={self.n_samples} is not a positive multiple of "
                f"{len(grid)} phase bins")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        _check_params(self.eta, self.alpha, self.beta)

    @property
    def per_bin(self) -> int:
        return self.n_samples // len(self.phase_grid)


class QuadratureSample(NamedTuple):
    chi: float
    x1: float
    x2: float
    x_vac: float


@dataclass
class QuadratureData:
    """Columnar store of heralded homodyne events."""

    chi: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    x_vac: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.chi)
        for name in ("x1", "x2", "x_vac"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has the wrong length")

    def __len__(self):
        return len(self.chi)

    def __getitem__(self, i) -> QuadratureSample:
        return QuadratureSample(float(self.chi[i]), float(self.x1[i]),
                                float(self.x2[i]), float(self.x_vac[i]))

    def __iter__(self) -> Iterator[QuadratureSample]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, index) -> "QuadratureData":
        return QuadratureData(self.chi[index], self.x1[index], self.x2[index],
                              self.x_vac[index], dict(self.meta))

    def by_phase(self) -> dict:
        """Indices of the events at each distinct phase setting."""
        values, inverse = np.unique(self.chi, return_inverse=True)
        return {float(v): np.flatnonzero(inverse == i) for i, v in enumerate(values)}

    def header(self) -> str:
        keys = ("seed", "eta", "alpha", "beta", "n_samples", "state_phase", "generator")
        parts = [f"{k}={self.meta[k]}" for k in keys if k in self.meta]
        return "# " + " ".join(parts)


def bin_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def run_scan(config: ScanConfig) -> QuadratureData:
    """Equal numbers of events per phase setting, each bin on its own stream."""
    k = config.per_bin
    nbins = len(config.phase_grid)
    chi = np.repeat(np.asarray(config.phase_grid), k)
    x1 = np.empty(config.n_samples)
    x2 = np.empty(config.n_samples)
    xv = np.full(config.n_samples, np.nan)
    for b, c in enumerate(config.phase_grid):
        rng = bin_rng(config.seed, b)
        sl = slice(b * k, (b + 1) * k)
        x1[sl], x2[sl] = sample_pair(c - config.state_phase, config.eta,
                                     config.alpha, config.beta, rng, size=k)
        if config.include_vacuum_bin:
            xv[sl] = rng.normal(0.0, VACUUM_SD, k)
    meta = dict(seed=config.seed, eta=repr(config.eta), alpha=repr(config.alpha),
                beta=repr(config.beta), n_samples=config.n_samples, bins=nbins,
                state_phase=repr(config.state_phase), generator=GENERATOR_NAME)
    return QuadratureData(chi, x1, x2, xv, meta)


def calibration_variance(data: QuadratureData) -> float:
    """Sample variance of the vacuum calibration bin (expected 1/4)."""
    xv = data.x_vac[np.isfinite(data.x_vac)]
    if xv.size < 2:
        raise ValueError("dataset has no vacuum calibration bin")
    return float(np.var(xv, ddof=1))


# -- statistics used by the verification suite -----------------------------

def binned_probabilities(edges, chi, eta=DEFAULT_EFFICIENCY, alpha=SQRT_HALF,
                         beta=SQRT_HALF, order: int = 6) -> np.ndarray:
    """Probability mass of :func:`joint_pdf` in each 2-D bin (Gauss-Legendre)."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    pts = (0.5 * (hi + lo))[:, None] + half[:, None] * nodes[None, :]
    wts = half[:, None] * weights[None, :]
    x1 = pts[:, None, :, None]
    x2 = pts[None, :, None, :]
    dens = joint_pdf(x1, x2, chi, eta, alpha, beta)
    return np.einsum("ijab,ia,jb->ij", dens, wts, wts)


def histogram_chi2(x1, x2, chi, eta=DEFAULT_EFFICIENCY, alpha=SQRT_HALF, beta=SQRT_HALF,
                   bins: int = 40, lim: float = 3.0, min_expected: float = 5.0):
    """Pearson chi-square test of a 2-D histogram against :func:`joint_pdf`.

    Bins with fewer than ``min_expected`` expected counts, and the mass outside
    the square, are pooled into a single cell. Returns ``(statistic, dof, p)``.
    """
    edges = np.linspace(-lim, lim, bins + 1)
    observed, _, _ = np.histogram2d(x1, x2, bins=[edges, edges])
    n = len(x1)
    expected = n * binned_probabilities(edges, chi, eta, alpha, beta)
    keep = expected >= min_expected
    obs = list(observed[keep])
    exp = list(expected[keep])
    pooled_exp = n - expected[keep].sum()
    pooled_obs = n - observed[keep].sum()
    if pooled_exp >= min_expected:
        obs.append(pooled_obs)
        exp.append(pooled_exp)
    obs, exp = np.array(obs), np.array(exp)
    stat = float(np.sum((obs - exp) ** 2 / exp))
    dof = len(obs) - 1
    return stat, dof, float(stats.chi2.sf(stat, dof))


def ks_critical_value(n: int, m: int, alpha: float = 0.05) -> float:
    """Asymptotic two-sample Kolmogorov-Smirnov critical distance."""
    c = math.sqrt(-0.5 * math.log(alpha / 2))
    return c * math.sqrt((n + m) / (n * m))


def measure_correlations(state_phase: float, eta=DEFAULT_EFFICIENCY, n: int = 100_000,
                         rng: Optional[np.random.Generator] = None):
    """Sample estimates of ``<x1 x2>`` and ``<x1 y2>`` for the ebit with phase
    ``state_phase``, LO phases set to read ``x2`` and then ``y2``.

    Returns ``(mean_x1x2, sem_x1x2, mean_x1y2, sem_x1y2)``.
    """
    if rng is None:
        rng = np.random.default_rng()
    a1, a2 = sample_pair(state_phase, eta, rng=rng, size=n)
    # reading y2 rotates the mode-2 LO by pi/2, i.e. X2 = -y2 at chi - pi/2
    b1, b2 = sample_pair(state_phase - 0.5 * math.pi, eta, rng=rng, size=n)
    xx = a1 * a2
    xy = -b1 * b2
    root = math.sqrt(n)
    return (float(xx.mean()), float(xx.std(ddof=1) / root),
            float(xy.mean()), float(xy.std(ddof=1) / root))
