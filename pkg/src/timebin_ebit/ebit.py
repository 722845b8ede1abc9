"""Remotely prepared single-photon time-bin ebits.

The heralded signal state is ``alpha |1,0> + beta exp(-i phi) |0,1>`` with the
photon delocalized over two consecutive pump time-bins. Losses common to both
bins mix it with the two-mode vacuum.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fock import DensityMatrix, FockTruncation, TwoModeKet

SPEED_OF_LIGHT = 299_792_458.0  # m/s

DEFAULT_PUMP_WAVELENGTH = 393e-9  # 786 nm Ti:Sapphire, frequency doubled
DEFAULT_PULSE_SEPARATION = 12.3e-9
DEFAULT_EFFICIENCY = 0.605
DEFAULT_IDLER_BANDWIDTH = 50e9


class FilterBandwidthWarning(UserWarning):
    """Idler filter too narrow: first-order interference between bins is not
    suppressed, so the ideal ebit model may not apply."""


@dataclass(frozen=True)
class ExperimentParams:
    pump_wavelength: float = DEFAULT_PUMP_WAVELENGTH
    pulse_separation_Tp: float = DEFAULT_PULSE_SEPARATION
    interferometer_delay_T: float = 2 * DEFAULT_PULSE_SEPARATION
    arm_transmission_t: float = 1.0
    efficiency_eta: float = DEFAULT_EFFICIENCY
    idler_bandwidth_sigma: Optional[float] = DEFAULT_IDLER_BANDWIDTH

    def __post_init__(self):
        if not self.pump_wavelength > 0:
            raise ValueError(f"pump_wavelength must be positive, got {self.pump_wavelength}")
        if not self.pulse_separation_Tp > 0:
            raise ValueError(f"pulse_separation_Tp must be positive, got {self.pulse_separation_Tp}")
        if not 0.0 <= self.arm_transmission_t <= 1.0:
            raise ValueError(f"arm_transmission_t must lie in [0, 1], got {self.arm_transmission_t}")
        if not 0.0 <= self.efficiency_eta <= 1.0:
            raise ValueError(f"efficiency_eta must lie in [0, 1], got {self.efficiency_eta}")
        if self.idler_bandwidth_sigma is not None and not self.idler_bandwidth_sigma > 0:
            raise ValueError(
                f"idler_bandwidth_sigma must be positive, got {self.idler_bandwidth_sigma}")

    @property
    def pump_angular_frequency(self) -> float:
        return 2 * math.pi * SPEED_OF_LIGHT / self.pump_wavelength


def phi_from_delays(params: ExperimentParams) -> float:
    """Remote ebit phase ``Omega_p (T_p - T/2)`` reduced to ``[0, 2 pi)``.

    ``Omega_p T_p`` is of order 1e8 rad, so the phase is formed as a count of
    pump optical periods ``c (T_p - T/2) / lambda``: the delay difference is
    taken first (exact when ``T`` is near ``2 T_p``), and only the fractional
    part of the period count is scaled by ``2 pi``. The result is as precise as
    the inputs themselves; pass the phase directly when it is known.
    """
    if not params.pump_wavelength > 0:
        raise ValueError("pump wavelength must be positive")
    sigma = params.idler_bandwidth_sigma
    if sigma is not None and sigma <= math.pi / params.pulse_separation_Tp:
        warnings.warn(
            f"idler bandwidth {sigma:.3g} does not exceed pi/T_p = "
            f"{math.pi / params.pulse_separation_Tp:.3g}; bins may interfere",
            FilterBandwidthWarning, stacklevel=2)
    delay = params.pulse_separation_Tp - 0.5 * params.interferometer_delay_T
    periods = delay * SPEED_OF_LIGHT / params.pump_wavelength
    frac = periods - math.floor(periods)
    phi = 2 * math.pi * frac
    return 0.0 if phi >= 2 * math.pi else phi


def arm_loss_amplitudes(t: float) -> tuple[float, float]:
    """Heralded amplitudes when the long interferometer arm transmits amplitude ``t``.

    Loss only lowers the heralding rate; the renormalized state stays pure.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"arm transmission must lie in [0, 1], got {t}")
    norm = math.sqrt(1.0 + t * t)
    return 1.0 / norm, t / norm


def make_ebit(alpha: float, beta: float, phi: float,
              trunc: FockTruncation = FockTruncation()) -> TwoModeKet:
    """``alpha |1,0> + beta exp(-i phi) |0,1>`` with ``alpha, beta >= 0``."""
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be non-negative; put phases in phi")
    if abs(alpha * alpha + beta * beta - 1.0) > 1e-10:
        raise ValueError(f"alpha^2 + beta^2 = {alpha * alpha + beta * beta!r}, expected 1")
    if trunc.n_max < 1:
        raise ValueError("truncation must hold at least one photon per mode")
    amp = np.zeros(trunc.dim, complex)
    amp[trunc.index(1, 0)] = alpha
    amp[trunc.index(0, 1)] = beta * np.exp(-1j * phi)
    # absorb rounding from an alpha, beta pair that is normalized to 1e-10
    amp /= np.linalg.norm(amp)
    return TwoModeKet(amp, trunc)


def bell_state(sign: str, trunc: FockTruncation = FockTruncation()) -> TwoModeKet:
    """``|Psi+->`` = ``(|1,0> +- |0,1>)/sqrt(2)``; ``sign`` is ``"plus"`` or ``"minus"``."""
    phases = {"plus": 0.0, "+": 0.0, "minus": math.pi, "-": math.pi}
    if sign not in phases:
        raise ValueError(f"unknown Bell state {sign!r}; use 'plus' or 'minus'")
    h = 1 / math.sqrt(2)
    return make_ebit(h, h, phases[sign], trunc)


def heralded_state(ket: TwoModeKet, eta: float) -> DensityMatrix:
    """``(1 - eta)|0,0><0,0| + eta |ket><ket|``.

    Both time-bins lose the photon together, so one-photon populations and the
    coherence between them are scaled by the same factor ``eta``.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"efficiency eta must lie in [0, 1], got {eta}")
    trunc = ket.truncation
    rho = eta * np.outer(ket.amplitudes, ket.amplitudes.conj())
    vac = trunc.index(0, 0)
    rho[vac, vac] += 1.0 - eta
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho, trunc)


def ebit_density(params: ExperimentParams, trunc: FockTruncation = FockTruncation(),
                 phi: Optional[float] = None) -> DensityMatrix:
    """Ground-truth state for an experiment; ``phi`` overrides the delay-derived phase."""
    if phi is None:
        phi = phi_from_delays(params)
    alpha, beta = arm_loss_amplitudes(params.arm_transmission_t)
    return heralded_state(make_ebit(alpha, beta, phi, trunc), params.efficiency_eta)
