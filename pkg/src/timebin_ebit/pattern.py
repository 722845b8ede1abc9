"""Pattern functions for direct density-matrix sampling from homodyne data.

``f_nm(x) = d/dx [psi_n(x) phi_m(x)]`` (``m >= n``; symmetric in ``n, m``),
where ``phi_m`` is the irregular, non-normalizable solution of the oscillator
equation at the same eigenvalue as ``psi_m``. Everything is computed in the
unit-variance-1/2 frame ``u = sqrt(2) x`` and mapped back, which leaves the
kernel values unchanged: ``f_nm(x) = F_nm(sqrt(2) x)``.

The irregular solutions start from ``phi_0(u) = 2 pi^(1/4) exp(u^2/2) D(u)``
(``D`` is Dawson's integral) and obey the same ladder recursion as the regular
ones for ``m >= 1``. Lowering ``phi_0`` gives ``exp(u^2/2)/sqrt(2)`` rather than
zero, which fixes ``phi_1``.
"""
from __future__ import annotations

import logging
import math

import numpy as np
from scipy.special import dawsn

log = logging.getLogger(__name__)

_PI_QUARTER = math.pi ** 0.25
DEFAULT_GRID = (-7.0, 7.0, 28001)


class KernelSelfTestError(RuntimeError):
    pass


def _regular(n_top: int, u: np.ndarray) -> np.ndarray:
    out = np.empty((n_top + 1,) + u.shape)
    out[0] = np.exp(-0.5 * u * u) / _PI_QUARTER
    if n_top >= 1:
        out[1] = math.sqrt(2) * u * out[0]
    for n in range(1, n_top):
        out[n + 1] = (math.sqrt(2) * u * out[n] - math.sqrt(n) * out[n - 1]) / math.sqrt(n + 1)
    return out


def _irregular(n_top: int, u: np.ndarray):
    grow = np.exp(0.5 * u * u)
    out = np.empty((n_top + 1,) + u.shape)
    out[0] = 2 * _PI_QUARTER * grow * dawsn(u)
    # phi_1 = a^dag phi_0 with phi_0' = -u phi_0 + 2 pi^(1/4) exp(u^2/2)
    if n_top >= 1:
        out[1] = (2 * u * out[0] - 2 * _PI_QUARTER * grow) / math.sqrt(2)
    for n in range(1, n_top):
        out[n + 1] = (math.sqrt(2) * u * out[n] - math.sqrt(n) * out[n - 1]) / math.sqrt(n + 1)
    return out, grow


def pattern_functions(n_max: int, x) -> np.ndarray:
    """All kernels ``f_nm(x)`` for ``n, m <= n_max``; shape ``(n_max+1, n_max+1) + x.shape``."""
    x = np.asarray(x, float)
    u = math.sqrt(2) * x
    top = n_max + 1
    psi = _regular(top, u)
    phi, grow = _irregular(top, u)
    dpsi = np.empty((top,) + u.shape)
    dphi = np.empty((top,) + u.shape)
    for n in range(top):
        lower = math.sqrt(n) * psi[n - 1] if n else 0.0
        dpsi[n] = (lower - math.sqrt(n + 1) * psi[n + 1]) / math.sqrt(2)
        lower = math.sqrt(n) * phi[n - 1] if n else 2 * _PI_QUARTER * grow / math.sqrt(2)
        dphi[n] = (lower - math.sqrt(n + 1) * phi[n + 1]) / math.sqrt(2)
    out = np.empty((top, top) + u.shape)
    for n in range(top):
        for m in range(n, top):
            f = dpsi[n] * phi[m] + psi[n] * dphi[m]
            out[n, m] = f
            out[m, n] = f
    return out


def pattern_function(n: int, m: int, x):
    if n < 0 or m < 0:
        raise ValueError("photon numbers must be non-negative")
    return pattern_functions(max(n, m), x)[n, m]


def orthogonality_errors(n_max: int, grid=DEFAULT_GRID) -> np.ndarray:
    """``|int f_nm psi_a psi_b dx - delta_na delta_mb|`` for all index sets with
    ``a - b = n - m`` (the only ones the phase average ever selects).

    Returns an array indexed ``[n, m, a]`` (``b`` is implied), NaN where the
    index set is empty. The integrand is smooth and decays like a Gaussian, so
    the trapezoid rule on a fine uniform grid is spectrally accurate.
    """
    from .fock import quadrature_wavefunctions

    lo, hi, count = grid
    x = np.linspace(lo, hi, int(count))
    h = x[1] - x[0]
    f = pattern_functions(n_max, x)
    psi = quadrature_wavefunctions(n_max, x)
    d = n_max + 1
    err = np.full((d, d, d), np.nan)
    for n in range(d):
        for m in range(d):
            for a in range(d):
                b = a - (n - m)
                if not 0 <= b < d:
                    continue
                val = np.sum(f[n, m] * psi[a] * psi[b]) * h
                err[n, m, a] = abs(val - float(n == a and m == b))
    return err


def kernel_self_test(n_max: int, grid=DEFAULT_GRID, tol: float = 1e-6) -> float:
    """Raise :class:`KernelSelfTestError` unless every kernel passes the
    orthogonality integral to ``tol``; returns the worst error."""
    worst = float(np.nanmax(orthogonality_errors(n_max, grid)))
    log.info("pattern-function orthogonality self-test n_max=%d worst=%.3e tol=%.1e",
             n_max, worst, tol)
    if not worst <= tol:
        raise KernelSelfTestError(
            f"pattern-function kernels fail orthogonality: worst error {worst:.3e} > {tol:.1e}")
    return worst
