"""Simulation and homodyne tomography of a heralded single-photon time-bin ebit."""
from .ebit import (ExperimentParams, FilterBandwidthWarning, arm_loss_amplitudes, bell_state,
                   ebit_density, heralded_state, make_ebit, phi_from_delays)
from .fock import (DensityMatrix, FockTruncation, TwoModeKet, fidelity, povm_vector, psi_n,
                   trace_distance)
from .homodyne import QuadratureData, QuadratureSample, ScanConfig, joint_pdf, run_scan, sample_pair
from .pattern import kernel_self_test, pattern_function
from .tomography import (ReconstructionConfig, ml_reconstruct, pattern_reconstruct,
                         reconstruct, reconstruction_report)
from .wigner import (AnalyticSource, PhasePoint4, WignerGrid, correlation_coordinates,
                     export_section, rotate_mode2, w0, w1, wigner_analytic, wigner_from_rho)

__all__ = [
    "AnalyticSource",
    "DensityMatrix",
    "ExperimentParams",
    "FilterBandwidthWarning",
    "FockTruncation",
    "PhasePoint4",
    "QuadratureData",
    "QuadratureSample",
    "ReconstructionConfig",
    "ScanConfig",
    "TwoModeKet",
    "WignerGrid",
    "arm_loss_amplitudes",
    "bell_state",
    "correlation_coordinates",
    "ebit_density",
    "export_section",
    "fidelity",
    "heralded_state",
    "joint_pdf",
    "kernel_self_test",
    "make_ebit",
    "ml_reconstruct",
    "pattern_function",
    "pattern_reconstruct",
    "phi_from_delays",
    "povm_vector",
    "psi_n",
    "reconstruct",
    "reconstruction_report",
    "rotate_mode2",
    "run_scan",
    "sample_pair",
    "trace_distance",
    "w0",
    "w1",
    "wigner_analytic",
    "wigner_from_rho",
]

__version__ = "0.1.0"
