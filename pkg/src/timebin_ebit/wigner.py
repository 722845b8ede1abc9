"""Two-mode Wigner functions of the time-bin ebit.

Closed forms for the model family plus a general evaluator for arbitrary
density matrices (two-mode displaced parity), and 2-D section export.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .fock import DensityMatrix

TWO_OVER_PI = 2.0 / math.pi
SQRT_HALF = math.sqrt(0.5)

DEFAULT_AXIS = (-3.0, 3.0, 121)
DEFAULT_CONTOUR_LEVELS = (-0.2, 0.05, 0.1)
SECTIONS = ("x1y1", "x1x2", "x1y2", "xplus_yplus", "xminus_yminus")
DEFAULT_FIXED = {
    "x1y1": (-0.1, -0.1),
    "x1x2": (0.0, 0.0),
    "x1y2": (0.0, 0.0),
    "xplus_yplus": (0.0, 0.0),
    "xminus_yminus": (0.0, 0.0),
}


class PhasePoint4(NamedTuple):
    x1: float
    y1: float
    x2: float
    y2: float


def w0(x, y):
    """Vacuum Wigner function."""
    return TWO_OVER_PI * np.exp(-2.0 * (np.square(x) + np.square(y)))


def w1(x, y):
    """Single-photon Fock state Wigner function."""
    r2 = np.square(x) + np.square(y)
    return TWO_OVER_PI * np.exp(-2.0 * r2) * (4.0 * r2 - 1.0)


def rotate_mode2(x2, y2, phi):
    c, s = np.cos(phi), np.sin(phi)
    return x2 * c - y2 * s, x2 * s + y2 * c


def _check_eta(eta):
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"efficiency eta must lie in [0, 1], got {eta}")


def wigner_analytic(x1, y1, x2, y2, phi=0.0, eta=1.0,
                    alpha=SQRT_HALF, beta=SQRT_HALF):
    """Wigner function of ``(1-eta)|00><00| + eta|psi><psi|`` with
    ``psi = alpha|1,0> + beta exp(-i phi)|0,1>``.

    For the balanced pure state this is
    ``W = 4 W0 W0 (x1 x2' + y1 y2') + (W1 W0 + W0 W1) / 2`` with
    ``(x2', y2')`` the mode-2 quadratures rotated by ``phi``.
    Broadcasts over the coordinate arrays.
    """
    _check_eta(eta)
    x2r, y2r = rotate_mode2(x2, y2, phi)
    g1, g2 = w0(x1, y1), w0(x2, y2)
    vac = g1 * g2
    pure = (alpha * alpha * w1(x1, y1) * g2 + beta * beta * g1 * w1(x2, y2)
            + 8.0 * alpha * beta * vac * (x1 * x2r + y1 * y2r))
    return (1.0 - eta) * vac + eta * pure


def correlation_coordinates(point: PhasePoint4, phi: float):
    """``(x+, y+, x-, y-)`` with ``x+- = (x1 +- x2')/sqrt(2)`` in the frame where
    the ebit factorizes into a photon (+) and a vacuum (-) mode."""
    x1, y1, x2, y2 = point
    x2r, y2r = rotate_mode2(x2, y2, phi)
    return ((x1 + x2r) * SQRT_HALF, (y1 + y2r) * SQRT_HALF,
            (x1 - x2r) * SQRT_HALF, (y1 - y2r) * SQRT_HALF)


def from_correlation_coordinates(xp, yp, xm, ym, phi: float):
    """Inverse of :func:`correlation_coordinates`."""
    x1 = (xp + xm) * SQRT_HALF
    y1 = (yp + ym) * SQRT_HALF
    x2r = (xp - xm) * SQRT_HALF
    y2r = (yp - ym) * SQRT_HALF
    x2, y2 = rotate_mode2(x2r, y2r, -phi)
    return x1, y1, x2, y2


# -- displaced parity -------------------------------------------------------

def displacement_block(beta, n_keep: int) -> np.ndarray:
    """``<m| D(beta) |n>`` for ``m, n < n_keep``, batched over ``beta``.

    Exact, with no workspace truncation: column 0 is the coherent state and
    ``D a^dag = (a^dag - beta*) D`` gives
    ``<m|D|n+1> = (sqrt(m) <m-1|D|n> - beta* <m|D|n>) / sqrt(n+1)``,
    which only ever touches rows below ``n_keep``.
    """
    b = np.asarray(beta, complex)
    out = np.empty(b.shape + (n_keep, n_keep), complex)
    col = np.empty(b.shape + (n_keep,), complex)
    col[..., 0] = np.exp(-0.5 * (b.real ** 2 + b.imag ** 2))
    for m in range(1, n_keep):
        col[..., m] = col[..., m - 1] * b / math.sqrt(m)
    out[..., :, 0] = col
    root = np.sqrt(np.arange(n_keep))
    bc = np.conj(b)[..., None]
    for n in range(n_keep - 1):
        prev = out[..., :, n]
        nxt = -bc * prev
        nxt[..., 1:] += root[1:] * prev[..., :-1]
        out[..., :, n + 1] = nxt / math.sqrt(n + 1)
    return out


def displaced_parity(alpha, n_keep: int) -> np.ndarray:
    """``<m| D(alpha) Parity D(alpha)^dag |n>`` for ``m, n < n_keep``, batched
    over ``alpha``; uses ``D(a) P D(a)^dag = D(2a) P``."""
    parity = (-1.0) ** np.arange(n_keep)
    return displacement_block(2.0 * np.asarray(alpha, complex), n_keep) * parity


def _kernels(values: np.ndarray, n_keep: int):
    uniq, inverse = np.unique(values, return_inverse=True)
    return displaced_parity(uniq, n_keep), inverse.reshape(values.shape)


def wigner_from_rho(rho: DensityMatrix, x1, y1, x2, y2):
    """Two-mode Wigner function of ``rho`` as a displaced-parity expectation,
    ``(2/pi)^2 Tr[rho D1 D2 P1 P2 D1^dag D2^dag]`` with ``alpha_j = x_j + i y_j``.

    Broadcasts over the coordinate arrays; kernels are computed once per
    distinct phase-space point of each mode.
    """
    a1 = np.asarray(x1, float) + 1j * np.asarray(y1, float)
    a2 = np.asarray(x2, float) + 1j * np.asarray(y2, float)
    a1, a2 = np.broadcast_arrays(a1, a2)
    shape = a1.shape
    d = rho.truncation.mode_dim
    k1, i1 = _kernels(a1.ravel(), d)
    k2, i2 = _kernels(a2.ravel(), d)
    r4 = rho.as_tensor()
    # W = sum_{klmn} rho[k,l,m,n] K1[m,k] K2[n,l]
    partial = np.einsum("klmn,umk->uln", r4, k1)
    vals = np.einsum("pln,pnl->p", partial[i1], k2[i2])
    w = TWO_OVER_PI ** 2 * vals.real
    return w.reshape(shape) if shape else float(w[0])


# -- sections ---------------------------------------------------------------

@dataclass(frozen=True)
class AnalyticSource:
    """Closed-form model state used as a Wigner source."""

    phi: float = 0.0
    eta: float = 1.0
    alpha: float = SQRT_HALF
    beta: float = SQRT_HALF

    def __call__(self, x1, y1, x2, y2):
        return wigner_analytic(x1, y1, x2, y2, self.phi, self.eta, self.alpha, self.beta)


Source = Union[AnalyticSource, DensityMatrix]


@dataclass
class WignerGrid:
    section: str
    phi: float
    eta: Optional[float]
    fixed_values: tuple
    axis1: np.ndarray
    axis2: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape != (len(self.axis1), len(self.axis2)):
            raise ValueError("grid values do not match axis lengths")

    def header(self) -> str:
        eta = "nan" if self.eta is None else repr(float(self.eta))
        fx = ",".join(repr(float(v)) for v in self.fixed_values)
        return f"# section={self.section} phi={float(self.phi)!r} eta={eta} fixed={fx}"

    def to_csv(self, path, extra_header: Sequence[str] = ()) -> None:
        a1, a2 = np.meshgrid(self.axis1, self.axis2, indexing="ij")
        rows = np.column_stack([a1.ravel(), a2.ravel(), self.values.ravel()])
        with open(path, "w") as fh:
            fh.write(self.header() + "\n")
            for line in extra_header:
                fh.write(f"# {line}\n")
            fh.write("axis1,axis2,value\n")
            np.savetxt(fh, rows, fmt="%.17g", delimiter=",")

    @classmethod
    def from_csv(cls, path) -> "WignerGrid":
        meta = {}
        with open(path) as fh:
            lines = fh.read().splitlines()
        for tok in lines[0].lstrip("# ").split():
            key, _, val = tok.partition("=")
            meta[key] = val
        body = [ln for ln in lines if ln and not ln.startswith("#")]
        if not body or body[0] != "axis1,axis2,value":
            raise ValueError(f"{path}: missing 'axis1,axis2,value' header")
        data = np.loadtxt(body[1:], delimiter=",", ndmin=2)
        axis1 = np.unique(data[:, 0])
        axis2 = np.unique(data[:, 1])
        values = data[:, 2].reshape(len(axis1), len(axis2))
        eta = None if meta.get("eta", "nan") == "nan" else float(meta["eta"])
        fixed = tuple(float(v) for v in meta["fixed"].split(","))
        return cls(meta["section"], float(meta["phi"]), eta, fixed, axis1, axis2, values)

    def max_abs_difference(self, other: "WignerGrid") -> float:
        if self.values.shape != other.values.shape:
            raise ValueError("grids have different shapes")
        return float(np.max(np.abs(self.values - other.values)))


def make_axis(axis=DEFAULT_AXIS) -> np.ndarray:
    lo, hi, count = axis
    if int(count) < 2:
        raise ValueError("axes need at least 2 points")
    return np.linspace(float(lo), float(hi), int(count))


def section_points(section: str, a, b, fixed, phi: float = 0.0):
    """Map section coordinates ``(a, b)`` and the two held quadratures to
    ``(x1, y1, x2, y2)``."""
    f1, f2 = fixed
    if section == "x1y1":
        return a, b, f1, f2
    if section == "x1x2":
        return a, f1, b, f2
    if section == "x1y2":
        return a, f1, f2, b
    if section == "xplus_yplus":
        return from_correlation_coordinates(a, b, f1, f2, phi)
    if section == "xminus_yminus":
        return from_correlation_coordinates(f1, f2, a, b, phi)
    raise ValueError(f"unknown section {section!r}; choose from {', '.join(SECTIONS)}")


def evaluate(source: Source, x1, y1, x2, y2):
    if isinstance(source, DensityMatrix):
        return wigner_from_rho(source, x1, y1, x2, y2)
    return source(x1, y1, x2, y2)


def export_section(source: Source, section: str = "x1y1", axis1=DEFAULT_AXIS,
                   axis2=None, fixed_values=None, phi: Optional[float] = None) -> WignerGrid:
    """Evaluate a 2-D section of the 4-D Wigner function on a uniform grid.

    ``phi`` only enters the ``xplus``/``xminus`` sections (frame of the
    correlation quadratures); it defaults to the analytic source's phase, or 0.
    """
    if section not in SECTIONS:
        raise ValueError(f"unknown section {section!r}; choose from {', '.join(SECTIONS)}")
    ax1 = make_axis(axis1)
    ax2 = make_axis(axis1 if axis2 is None else axis2)
    fixed = tuple(DEFAULT_FIXED[section] if fixed_values is None else fixed_values)
    if phi is None:
        phi = source.phi if isinstance(source, AnalyticSource) else 0.0
    a, b = np.meshgrid(ax1, ax2, indexing="ij")
    values = evaluate(source, *section_points(section, a, b, fixed, phi))
    eta = source.eta if isinstance(source, AnalyticSource) else None
    return WignerGrid(section, phi, eta, fixed, ax1, ax2, np.asarray(values, float))


def phase_sweep(phis, eta: float = 1.0, section: str = "x1x2", axis=DEFAULT_AXIS,
                fixed_values=None, alpha=SQRT_HALF, beta=SQRT_HALF) -> list[WignerGrid]:
    """Analytic sections for a sequence of ebit phases (contour-sweep data)."""
    return [export_section(AnalyticSource(p, eta, alpha, beta), section, axis,
                           fixed_values=fixed_values)
            for p in phis]
