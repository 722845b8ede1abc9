import math

import numpy as np
import pytest
from scipy.integrate import quad

from timebin_ebit.fock import quadrature_wavefunctions
from timebin_ebit.pattern import (KernelSelfTestError, kernel_self_test, orthogonality_errors,
                                  pattern_function, pattern_functions)


def dawson_by_quadrature(u):
    return math.exp(-u * u) * quad(lambda t: math.exp(t * t), 0, u)[0]


class TestKernels:
    @pytest.mark.parametrize("x", [-1.3, -0.2, 0.0, 0.45, 2.1])
    def test_f00_closed_form(self, x):
        # f_00 = 2 - 4 u D(u) in the unit-variance-1/2 frame u = sqrt(2) x
        u = math.sqrt(2) * x
        assert pattern_function(0, 0, x) == pytest.approx(2 - 4 * u * dawson_by_quadrature(u), abs=1e-12)

    def test_symmetric(self):
        f = pattern_functions(4, np.linspace(-3, 3, 31))
        np.testing.assert_array_equal(f, np.swapaxes(f, 0, 1))

    @pytest.mark.parametrize("n_max", [1, 4, 6])
    def test_orthogonality_gate(self, n_max):
        assert np.nanmax(orthogonality_errors(n_max)) < 1e-6

    def test_phase_selected_index_sets_only(self):
        # symmetry f_nm = f_mn makes the full a, b condition impossible:
        # int f_01 psi_1 psi_0 equals int f_10 psi_1 psi_0 = 1
        x = np.linspace(-7, 7, 28001)
        h = x[1] - x[0]
        psi = quadrature_wavefunctions(1, x)
        val = np.sum(pattern_function(0, 1, x) * psi[1] * psi[0]) * h
        assert val == pytest.approx(1.0, abs=1e-9)
        err = orthogonality_errors(2)
        # for (n, m) = (0, 1) only pairs with b = a + 1 are checked
        assert err[0, 1, 0] < 1e-9
        assert np.isnan(err[0, 1, 2])

    def test_self_test_passes(self):
        assert kernel_self_test(4) < 1e-10

    def test_self_test_detects_coarse_grid(self):
        with pytest.raises(KernelSelfTestError):
            kernel_self_test(4, grid=(-7.0, 7.0, 15))

    def test_negative_index(self):
        with pytest.raises(ValueError):
            pattern_function(-1, 0, 0.0)

    def test_bounded(self):
        # irregular solution grows, but the product with psi_n stays bounded
        f = pattern_functions(4, np.linspace(-8, 8, 161))
        assert np.all(np.isfinite(f)) and np.abs(f).max() < 50
