"""Build the heralded ebit and look at its Wigner function.

Run: python3 demos/01_state_and_wigner.py
"""
import math

from timebin_ebit import (AnalyticSource, PhasePoint4, arm_loss_amplitudes, correlation_coordinates,
                          export_section, heralded_state, make_ebit, w0, w1, wigner_analytic,
                          wigner_from_rho)

ETA = 0.605

# A balanced ebit: one photon split evenly between two time bins.
alpha, beta = arm_loss_amplitudes(1.0)
ket = make_ebit(alpha, beta, phi=0.0)
rho = heralded_state(ket, ETA)
print("heralded populations")
print(f"  vacuum      {rho.element(0, 0, 0, 0).real:.4f}")
print(f"  |1,0>       {rho.element(1, 0, 1, 0).real:.4f}")
print(f"  |0,1>       {rho.element(0, 1, 0, 1).real:.4f}")
print(f"  coherence   {rho.element(1, 0, 0, 1).real:.4f}")

# Losses mix in vacuum. The coherence and the populations shrink by the same
# factor, so the ratio stays at one.
ratio = abs(rho.element(1, 0, 0, 1)) / rho.element(1, 0, 1, 0).real
print(f"coherence / population = {ratio:.4f}")

# The pure state is negative at the phase-space origin. After mixing in 39.5%
# vacuum it is still negative there.
print(f"W at origin: pure {wigner_analytic(0, 0, 0, 0, 0.0, 1.0):+.4f}, "
      f"eta={ETA} {wigner_analytic(0, 0, 0, 0, 0.0, ETA):+.4f}")

# The closed form and the density-matrix route agree.
pt = (0.3, -0.2, 0.1, 0.4)
print(f"closed form {wigner_analytic(*pt, 0.0, ETA):+.10f}")
print(f"from rho    {float(wigner_from_rho(rho, *pt)):+.10f}")

# In rotated coordinates the pure state is a photon in one mode and vacuum in
# the other.
phi = math.pi / 3
p = PhasePoint4(0.2, 0.1, -0.3, 0.5)
xp, yp, xm, ym = correlation_coordinates(p, phi)
print(f"factorized {w1(xp, yp) * w0(xm, ym):+.12f} vs direct "
      f"{wigner_analytic(*p, phi, 1.0):+.12f}")

# A 2-D section through (x1, y1) with mode 2 held near its origin.
grid = export_section(AnalyticSource(0.0, ETA), "x1y1", (-2, 2, 41), fixed_values=(-0.1, -0.1))
print(f"section min {grid.values.min():+.4f}, max {grid.values.max():+.4f}")
