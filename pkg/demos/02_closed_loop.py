"""Simulate a homodyne scan and reconstruct the state two ways.

A smaller run than the acceptance suite (2e5 events) so it finishes in
seconds. Run: python3 demos/02_closed_loop.py
"""
import numpy as np

from timebin_ebit import (ReconstructionConfig, ScanConfig, heralded_state, make_ebit,
                          ml_reconstruct, pattern_reconstruct, reconstruction_report, run_scan)
from timebin_ebit.fock import global_phase_average

ETA = 0.605
truth = heralded_state(make_ebit(2 ** -0.5, 2 ** -0.5, 0.0), ETA)

data = run_scan(ScanConfig(n_samples=200_000, eta=ETA, seed=7))
print(f"{len(data)} events over {len(np.unique(data.chi))} phase settings")

ml = ml_reconstruct(data)
print(f"maximum likelihood: {ml.iterations} iterations, converged={ml.converged}")
print(reconstruction_report(ml.rho, truth).to_text(), end="")

# The direct estimator is unbiased but not forced to be a valid state.
pf = pattern_reconstruct(data, ReconstructionConfig(method="pattern_function"))
print(f"pattern-function trace {pf.elements.trace().real:.4f}")

diff = np.max(np.abs(pf.elements - global_phase_average(ml.rho).elements))
print(f"largest element-wise disagreement between the two estimators: {diff:.4f}")
