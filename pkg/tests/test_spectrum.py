import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cnmc import ModelParams, QuadratureSpec
from cnmc.spectrum import (DispersionTable, build_table, dispersion_A, dispersion_B,
                           eigencheck, find_lambda_star, nu, nu_zero_limit)

ALPHAS = [0.3, 0.5, 0.7]
# roots of the Bessel form found with mpmath, rounded to 1e-10
LSTAR = {0.3: 0.5793532826, 0.5: 0.5209443804, 0.7: 0.4355288455}


def a_oracle(alpha, N):
    # int_R (1 - cos r) |r|^-(2+alpha) dr = -2 Gamma(-1-alpha) cos(pi (1+alpha)/2);
    # one extra dimension integrates out to a Beta factor
    one = -2 * math.gamma(-1 - alpha) * math.cos(math.pi * (1 + alpha) / 2)
    return one if N == 2 else one * special_beta(0.5, 1 + alpha / 2)


def special_beta(a, b):
    return math.gamma(a) * math.gamma(b) / math.gamma(a + b)


def table(alpha, N=2):
    return DispersionTable(alpha, N, dispersion_A(alpha, N), nu_zero_limit(alpha, N))


class TestA:
    @pytest.mark.parametrize("N", [2, 3])
    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_closed_form(self, N, alpha):
        assert dispersion_A(alpha, N) == pytest.approx(a_oracle(alpha, N), rel=1e-13)

    @pytest.mark.parametrize("N,tol", [(2, 1e-6), (3, 1e-4)])
    def test_quadrature(self, N, tol):
        q = dispersion_A(0.5, N, method="quadrature")
        assert q == pytest.approx(a_oracle(0.5, N), rel=tol)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.01, 0.99))
    def test_positive(self, alpha):
        assert dispersion_A(alpha, 2) > 0 and dispersion_A(alpha, 3) > 0

    def test_bad_method(self):
        with pytest.raises(ValueError):
            dispersion_A(0.5, 2, method="nope")


class TestB:
    @pytest.mark.parametrize("R", [0.2, 0.7, 3.0])
    def test_mpmath_oracle(self, R):
        mp.mp.dps = 25
        c2 = mp.mpf(2 * R) ** 2
        g = lambda t: (t * t + c2) ** mp.mpf(-1.25)
        ref = 2 * (mp.quad(g, [0, 1, mp.inf])
                   + mp.quadosc(lambda t: mp.cos(t) * g(t), [0, mp.inf], omega=1))
        assert dispersion_B(R, 0.5, 2) == pytest.approx(float(ref), rel=1e-12)

    @pytest.mark.parametrize("N", [2, 3])
    def test_quadrature_matches(self, N):
        for R in (0.3, 1.5):
            q = dispersion_B(R, 0.5, N, method="quadrature")
            assert q == pytest.approx(dispersion_B(R, 0.5, N), rel=1e-8)

    @pytest.mark.parametrize("N", [2, 3])
    def test_monotone_and_bounded(self, N):
        a = 0.5
        b = [dispersion_B(R, a, N) for R in (1.0, 2.0, 4.0)]
        assert b[0] > b[1] > b[2] > 0
        one = 2 * math.pi ** ((N - 1) / 2) * math.gamma((1 + a) / 2) / math.gamma((N + a) / 2)
        for R, v in zip((1.0, 2.0, 4.0), b):
            assert v < one * (2 * R) ** (-(1 + a))
        # R^(1+a) B(R) stays bounded
        scaled = [R ** (1 + a) * dispersion_B(R, a, N) for R in (5.0, 20.0, 80.0)]
        assert max(scaled) < 2 * min(scaled)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            dispersion_B(0.0, 0.5, 2)


class TestNu:
    @pytest.mark.parametrize("N", [2, 3])
    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_nu_zero(self, N, alpha):
        v = nu_zero_limit(alpha, N)
        assert v < 0
        assert nu_zero_limit(alpha, N, method="quadrature") == pytest.approx(v, rel=1e-8)

    @pytest.mark.parametrize("N", [2, 3])
    def test_nu_zero_decreasing_in_alpha(self, N):
        mags = [abs(nu_zero_limit(a, N)) for a in ALPHAS]
        assert mags[0] > mags[1] > mags[2]

    def test_small_R_limit(self):
        # the approach is like R^(1-alpha) here, so at R = 1e-3 this
        # holds from alpha = 0.5 up but not at alpha = 0.3
        t = table(0.5)
        assert abs(nu(1e-3, t) - t.nu_zero) < 1e-3
        assert nu([1e-8], t)[0] == pytest.approx(t.nu_zero, abs=1e-4)

    def test_large_R_limit(self):
        t = table(0.5)
        assert nu(50.0, t) / 50.0 ** 1.5 == pytest.approx(2 * t.A, rel=1e-2)

    @pytest.mark.parametrize("N", [2, 3])
    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_monotone(self, N, alpha):
        R = np.geomspace(0.05, 20, 200)
        assert np.all(np.diff(nu(R, table(alpha, N))) > 0)

    def test_definition(self):
        t = table(0.5, 3)
        for R in (0.1, 1.0, 6.0):
            direct = 2 * R ** 1.5 * (t.A - dispersion_B(R, 0.5, 3))
            assert nu(R, t) == pytest.approx(direct, rel=1e-10, abs=1e-13)

    def test_quadrature_table(self):
        tq = DispersionTable(0.5, 2, dispersion_A(0.5, 2, method="quadrature"),
                             nu_zero_limit(0.5, 2), method="quadrature")
        assert nu(0.8, tq) == pytest.approx(nu(0.8, table(0.5)), rel=1e-6)


class TestLambdaStar:
    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_values(self, alpha):
        lam = find_lambda_star(alpha, 2)
        assert lam == pytest.approx(LSTAR[alpha], abs=1e-10)
        t = table(alpha)
        assert abs(nu(lam, t)) < 1e-12
        assert nu(lam / 2, t) < 0 < nu(2 * lam, t)

    def test_mpmath_root(self):
        mp.mp.dps = 30
        a = mp.mpf("0.5")
        s = (1 + a) / 2
        A = -2 * mp.gamma(-1 - a) * mp.cos(mp.pi * s)
        one = mp.sqrt(mp.pi) * mp.gamma(s) / mp.gamma((2 + a) / 2)
        cosp = lambda c: 2 * mp.sqrt(mp.pi) / mp.gamma((2 + a) / 2) * (1 / (2 * c)) ** s \
            * mp.besselk(s, c)
        f = lambda R: A - one * (2 * R) ** (-(1 + a)) - cosp(2 * R)
        assert find_lambda_star(0.5, 2) == pytest.approx(float(mp.findroot(f, 0.5)), abs=1e-12)

    def test_independent_of_N(self):
        assert find_lambda_star(0.5, 3) == pytest.approx(find_lambda_star(0.5, 2), abs=1e-11)

    def test_resolution_ladder(self):
        spec = QuadratureSpec(trunc_radius=40.0, radial_nodes=1200)
        tq = build_table(0.5, 2, method="quadrature", spec=spec)
        tq2 = build_table(0.5, 2, method="quadrature", spec=spec.refined(2))
        assert abs(tq.lambda_star - tq2.lambda_star) < 1e-5
        assert tq.lambda_star == pytest.approx(LSTAR[0.5], abs=1e-8)

    def test_bracket_growth(self):
        lam, br = find_lambda_star(0.5, 2, bracket=(2.0, 3.0), return_bracket=True)
        assert br[0] < lam < br[1]
        assert lam == pytest.approx(LSTAR[0.5], abs=1e-10)

    def test_bad_tol(self):
        with pytest.raises(ValueError):
            find_lambda_star(0.5, 2, tol=0.0)

    def test_table_samples(self):
        t = build_table(0.5, 2, R_grid=[0.1, 0.5, 1.0, 4.0])
        vals = [v for _, v in t.samples]
        assert vals == sorted(vals)
        d = t.to_dict()
        assert d["lambda_star"] == t.lambda_star and len(d["bracket"]) == 2


class TestEigencheck:
    P2 = ModelParams(2, 0.5)
    P3 = ModelParams(3, 0.5)

    def test_kernel_direction(self):
        r = eigencheck(LSTAR[0.5], (1,), self.P2)
        assert r["error"] < 1e-4
        assert abs(r["eigenvalue"]) < 1e-6

    def test_diagonal_mode_positive(self):
        lam = find_lambda_star(0.5, 3)
        r = eigencheck(lam, (1, 1), self.P3)
        assert r["predicted"] > 0
        assert r["eigenvalue"] == pytest.approx(r["predicted"], rel=1e-6)

    def test_permutation_invariant(self):
        a = eigencheck(0.6, (0, 2), self.P3)
        b = eigencheck(0.6, (2, 0), self.P3)
        assert a == b

    @pytest.mark.parametrize("k", [(1,), (2,), (3,)])
    def test_rayleigh_quotient(self, k):
        r = eigencheck(0.45, k, self.P2)
        assert abs(r["eigenvalue"] - r["predicted"]) < 1e-4
        assert r["error"] < 1e-4

    def test_rayleigh_quotient_2d(self):
        for k in [(0, 1), (1, 2), (0, 3)]:
            r = eigencheck(0.45, k, self.P3)
            assert abs(r["eigenvalue"] - r["predicted"]) < 1e-4

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            eigencheck(0.5, (0,), self.P2)
