import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from cnmc.quadrature import (QuadratureSpec, gauss_legendre, gauss_legendre_z,
                             graded_exponent, half_sphere_rule, integrate_radial_graded,
                             kernel_mass, radial_fourier_tail, radial_power_tail,
                             radial_rule, sphere_area, tail_constant_u)


class TestSpec:
    def test_defaults_and_refine(self):
        s = QuadratureSpec()
        r = s.refined(2)
        assert r.radial_nodes == 2 * s.radial_nodes
        assert r.q_cutoff == 2 * s.q_cutoff
        assert s.grid_size(8) == 24

    @pytest.mark.parametrize("kw", [{"tail_mode": "bogus"}, {"radial_nodes": 4},
                                    {"epsilon": -1.0}, {"grid": 7}, {"trunc_radius": 0.1}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            QuadratureSpec(**kw)

    def test_grid_too_small(self):
        with pytest.raises(ValueError):
            QuadratureSpec(grid=8).grid_size(8)


class TestRules:
    def test_gauss_legendre_polynomial(self):
        x, w = gauss_legendre(-1.0, 2.0, 6)
        assert np.dot(w, x ** 11) == pytest.approx((2.0 ** 12 - 1) / 12, rel=1e-13)
        assert gauss_legendre_z(np.cos, 0.0, 1.0, 12) == pytest.approx(math.sin(1.0), rel=1e-15)

    @pytest.mark.parametrize("alpha,tol", [(0.3, 1e-12), (0.5, 1e-12), (0.7, 1e-12), (0.9, 1e-8)])
    def test_graded_singular(self, alpha, tol):
        # int_0^R r^-alpha cos(r) dr against scipy's algebraic-weight quad
        R = 16.0
        r, w = radial_rule(R, 320, alpha)
        got = np.dot(w, r ** (-alpha) * np.cos(r))
        ref, _ = integrate.quad(np.cos, 0, R, weight="alg", wvar=(-alpha, 0), limit=400)
        assert got == pytest.approx(ref, rel=tol)

    def test_grading_cap(self):
        assert graded_exponent(0.5, None) == 12
        assert graded_exponent(0.99, None) == 24
        assert graded_exponent(0.5, 3.0) == 3.0

    @pytest.mark.parametrize("n", [7, 16, 33])
    def test_half_circle(self, n):
        th, w = half_sphere_rule(2, n)
        # full-circle average of cos^2 through the implied opposite nodes
        assert 2 * np.dot(w, th[:, 0] ** 2) == pytest.approx(math.pi, rel=1e-14)

    def test_integrate_radial_graded_gaussian(self):
        spec = QuadratureSpec(trunc_radius=12.0, radial_nodes=400, tail_mode="none")
        f = lambda t: np.exp(-np.sum(t * t, axis=1))
        assert integrate_radial_graded(f, 2, 0.5, spec, kmax=2) == pytest.approx(math.pi, rel=1e-12)
        assert integrate_radial_graded(f, 1, 0.5, spec) == pytest.approx(math.sqrt(math.pi), rel=1e-12)


class TestClosedForms:
    def test_sphere_area(self):
        assert sphere_area(1) == 2.0
        assert sphere_area(2) == pytest.approx(2 * math.pi)

    @pytest.mark.parametrize("dim", [1, 2])
    @pytest.mark.parametrize("alpha", [0.3, 0.7])
    def test_kernel_mass(self, dim, alpha):
        c = 1.7
        p = 0.5 * (dim + 1 + alpha)
        f = lambda r: r ** (dim - 1) * (r * r + c * c) ** (-p)
        ref = sphere_area(dim) * integrate.quad(f, 0, np.inf, epsrel=1e-13)[0]
        assert kernel_mass(dim, alpha, c) == pytest.approx(ref, rel=1e-11)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.5, 20), st.floats(1.2, 3.0), st.floats(0.0, 2.0), st.sampled_from([1, 2]))
    def test_power_tail(self, R, expo, eps, dim):
        mp.mp.dps = 30
        f = lambda r: r ** (dim - 1) * (r * r + mp.mpf(eps) ** 2) ** (-expo)
        ref = sphere_area(dim) * float(mp.quad(f, [R, 2 * R, mp.inf]))
        assert radial_power_tail(dim, R, expo, eps) == pytest.approx(ref, rel=1e-9)

    def test_power_tail_diverges(self):
        with pytest.raises(ValueError):
            radial_power_tail(2, 1.0, 1.0)

    def test_tail_constant_u(self):
        lam, a, N, T = 0.6, 0.5, 3, 20.0
        ref = 2 * lam * radial_power_tail(2, T, 0.5 * (N + a), 2 * lam)
        assert tail_constant_u(lam, a, N, T) == ref

    @pytest.mark.parametrize("dim", [1, 2])
    @pytest.mark.parametrize("mu", [1.0, 2.0, math.sqrt(5.0)])
    def test_fourier_tail_mpmath(self, dim, mu):
        R, expo, eps = 6.0, 1.75, 0.3
        mp.mp.dps = 30
        g = lambda r: (r * r + eps * eps) ** (-expo)
        if dim == 1:
            ref = 2 * mp.quadosc(lambda r: mp.cos(mu * r) * g(r), [R, mp.inf], omega=mu)
        else:
            ref = 2 * mp.pi * mp.quadosc(lambda r: r * mp.besselj(0, mu * r) * g(r),
                                         [R, mp.inf], omega=mu)
        got = radial_fourier_tail(mu, dim, R, expo, eps)[0]
        assert got == pytest.approx(float(ref), rel=1e-10, abs=1e-15)

    def test_fourier_tail_zero_frequency(self):
        assert radial_fourier_tail(0.0, 2, 5.0, 1.5)[0] == radial_power_tail(2, 5.0, 1.5)
