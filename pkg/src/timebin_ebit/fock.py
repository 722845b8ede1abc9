"""Truncated two-mode Fock space and quadrature eigenfunctions.

Quadrature convention used throughout the package: ``x = (a + a^dag) / 2`` and
``y = (a - a^dag) / 2i``, so the vacuum has quadrature variance 1/4 and the
vacuum Wigner function is ``(2/pi) exp(-2x^2 - 2y^2)``.

Two-mode basis states ``|k, l>`` (``k`` photons in time-bin 1, ``l`` in
time-bin 2) are stored at flat row-major index ``k * (n_max + 1) + l``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-10
EIGEN_ATOL = 1e-10


@dataclass(frozen=True)
class FockTruncation:
    """Photon-number cutoff shared by both time-bin modes."""

    n_max: int = 4

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {self.n_max!r}")
        object.__setattr__(self, "n_max", int(self.n_max))

    @property
    def mode_dim(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return self.mode_dim ** 2

    def index(self, k: int, l: int) -> int:
        if not (0 <= k <= self.n_max and 0 <= l <= self.n_max):
            raise IndexError(f"({k}, {l}) outside truncation n_max={self.n_max}")
        return k * self.mode_dim + l

    def pair(self, i: int) -> tuple[int, int]:
        if not 0 <= i < self.dim:
            raise IndexError(f"flat index {i} outside dimension {self.dim}")
        return divmod(i, self.mode_dim)

    def total_photons(self) -> np.ndarray:
        """Total photon number ``k + l`` for every flat basis index."""
        k, l = np.divmod(np.arange(self.dim), self.mode_dim)
        return k + l


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TwoModeKet:
    amplitudes: np.ndarray
    truncation: FockTruncation

    def __post_init__(self):
        amp = _frozen(np.ravel(self.amplitudes))
        if amp.shape != (self.truncation.dim,):
            raise ValueError(
                f"expected {self.truncation.dim} amplitudes, got {amp.shape[0]}")
        norm = np.vdot(amp, amp).real
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"ket is not normalized (norm^2 = {norm:.15g})")
        object.__setattr__(self, "amplitudes", amp)

    def amplitude(self, k: int, l: int) -> complex:
        return complex(self.amplitudes[self.truncation.index(k, l)])

    def projector(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()),
                             self.truncation)


@dataclass(frozen=True)
class DensityMatrix:
    """Two-mode density matrix in the flat ``(k, l)`` basis.

    ``physical=False`` relaxes the unit-trace and positivity checks; it is used
    for unconstrained estimates (e.g. pattern-function reconstructions), which
    are still required to be Hermitian.
    """

    elements: np.ndarray
    truncation: FockTruncation
    physical: bool = field(default=True)

    def __post_init__(self):
        rho = _frozen(self.elements)
        d = self.truncation.dim
        if rho.shape != (d, d):
            raise ValueError(f"expected a {d}x{d} matrix, got shape {rho.shape}")
        herm = np.max(np.abs(rho - rho.conj().T))
        if herm > HERMITIAN_ATOL:
            raise ValueError(f"density matrix not Hermitian (max deviation {herm:.3g})")
        if self.physical:
            tr = np.trace(rho).real
            if abs(tr - 1.0) > TRACE_ATOL:
                raise ValueError(f"density matrix trace is {tr:.15g}, expected 1")
            lo = np.linalg.eigvalsh(rho).min()
            if lo < -EIGEN_ATOL:
                raise ValueError(f"density matrix has negative eigenvalue {lo:.3g}")
        object.__setattr__(self, "elements", rho)

    @classmethod
    def from_matrix(cls, matrix, truncation: FockTruncation, physical: bool = True):
        """Build from an approximately Hermitian matrix, symmetrizing first."""
        m = np.asarray(matrix, dtype=complex)
        m = 0.5 * (m + m.conj().T)
        if physical:
            m = m / np.trace(m).real
        return cls(m, truncation, physical)

    def element(self, k: int, l: int, m: int, n: int) -> complex:
        """``<k_1 l_2 | rho | m_1 n_2>``."""
        t = self.truncation
        return complex(self.elements[t.index(k, l), t.index(m, n)])

    def as_tensor(self) -> np.ndarray:
        """View indexed as ``[k, l, m, n]``."""
        d = self.truncation.mode_dim
        return self.elements.reshape(d, d, d, d)

    def purity(self) -> float:
        return float(np.real(np.trace(self.elements @ self.elements)))

    def photon_number_weights(self) -> np.ndarray:
        """Probability of total photon number 0, 1, ..., 2 n_max."""
        diag = np.real(np.diag(self.elements))
        return np.bincount(self.truncation.total_photons(), weights=diag)


def quadrature_wavefunctions(n_max: int, x) -> np.ndarray:
    """All ``psi_n(x)`` for ``n = 0..n_max``; shape ``(n_max + 1,) + x.shape``.

    Uses the normalized upward recursion
    ``psi_{n+1} = (2 x psi_n - sqrt(n) psi_{n-1}) / sqrt(n + 1)``,
    which stays accurate well beyond ``n = 10``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = (2.0 / np.pi) ** 0.25 * np.exp(-x * x)
    if n_max >= 1:
        out[1] = 2.0 * x * out[0]
    for n in range(1, n_max):
        out[n + 1] = (2.0 * x * out[n] - np.sqrt(n) * out[n - 1]) / np.sqrt(n + 1)
    return out


def psi_n(n: int, x):
    """Quadrature eigenfunction ``<x|n>`` (vacuum variance 1/4).

    ``psi_n(x) = (2/pi)^(1/4) (2^n n!)^(-1/2) H_n(sqrt(2) x) exp(-x^2)``.
    """
    if n < 0:
        raise ValueError(f"photon number must be non-negative, got {n}")
    return quadrature_wavefunctions(int(n), x)[n]


def povm_vector(x, theta, trunc: FockTruncation) -> np.ndarray:
    """Components ``<n|x, theta> = exp(i n theta) psi_n(x)``.

    Broadcasts over ``x`` and ``theta``; the photon-number axis is last.
    """
    x, theta = np.broadcast_arrays(np.asarray(x, float), np.asarray(theta, float))
    n = np.arange(trunc.mode_dim)
    psi = np.moveaxis(quadrature_wavefunctions(trunc.n_max, x), 0, -1)
    return psi * np.exp(1j * theta[..., None] * n)


def number_conserving_mask(trunc: FockTruncation) -> np.ndarray:
    """Boolean mask selecting elements with ``k + l == m + n``."""
    tot = trunc.total_photons()
    return tot[:, None] == tot[None, :]


def global_phase_average(rho: DensityMatrix) -> DensityMatrix:
    """Average ``rho`` over ``exp(i phi N_total)``; drops all coherences between
    different total photon numbers."""
    out = np.where(number_conserving_mask(rho.truncation), rho.elements, 0.0)
    return DensityMatrix(out, rho.truncation, rho.physical)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def _check_same_space(rho: DensityMatrix, sigma: DensityMatrix):
    if rho.truncation != sigma.truncation:
        raise ValueError(
            f"truncation mismatch: n_max={rho.truncation.n_max} vs {sigma.truncation.n_max}")


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``.

    Negative eigenvalues (possible for unconstrained estimates) are clipped.
    """
    _check_same_space(rho, sigma)
    s = _psd_sqrt(rho.elements)
    inner = s @ sigma.elements @ s
    ev = np.clip(np.linalg.eigvalsh(0.5 * (inner + inner.conj().T)), 0.0, None)
    return float(np.clip(np.sum(np.sqrt(ev)) ** 2, 0.0, 1.0))


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    _check_same_space(rho, sigma)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(rho.elements - sigma.elements))))


def basis_projector(k: int, l: int, trunc: FockTruncation) -> DensityMatrix:
    """``|k, l><k, l|``."""
    amp = np.zeros(trunc.dim, complex)
    amp[trunc.index(k, l)] = 1.0
    return TwoModeKet(amp, trunc).projector()
