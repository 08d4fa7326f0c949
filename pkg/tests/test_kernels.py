import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cnmc import ModelParams, QuadratureSpec, SymmetricField, nmc_graph
from cnmc import kernels as K
from cnmc.quadrature import kernel_mass

P2 = ModelParams(2, 0.5)
P3 = ModelParams(3, 0.5)
U1 = SymmetricField(1, 3, {(0,): 0.55, (1,): 0.08, (2,): -0.03, (3,): 0.01})
U2 = SymmetricField(2, 2, {(0, 0): 0.55, (0, 1): 0.06, (1, 1): 0.02, (0, 2): -0.01})
COEF = {0: mp.mpf("0.55"), 1: mp.mpf("0.08"), 2: mp.mpf("-0.03"), 3: mp.mpf("0.01")}


def u_mp(x):
    return sum(c * mp.cos(k * x) for k, c in COEF.items())


def du_mp(x):
    return sum(-k * c * mp.sin(k * x) for k, c in COEF.items())


@pytest.fixture(scope="module")
def ctx1():
    return K.KernelContext(U1, P2)


class TestLambdas:
    @pytest.mark.parametrize("t", [1e-9, 1e-7, 1e-5, 0.3, -2.0])
    def test_against_mpmath(self, ctx1, t):
        mp.mp.dps = 50
        s = mp.mpf("0.7")
        tt = mp.mpf(t)
        l1 = (u_mp(s) - u_mp(s - tt)) / abs(tt)
        l2 = l1 - du_mp(s - tt) * tt / abs(tt)
        l3 = u_mp(s) + u_mp(s - tt)
        l4 = l3 + tt * du_mp(s - tt)
        args = (ctx1, [0.7], [[t]])
        assert K.lambda1(*args)[0] == pytest.approx(float(l1), rel=1e-12, abs=1e-15)
        assert K.lambda2(*args)[0] == pytest.approx(float(l2), rel=1e-7, abs=1e-15)
        assert K.lambda3(*args)[0] == pytest.approx(float(l3), rel=1e-14)
        assert K.lambda4(*args)[0] == pytest.approx(float(l4), rel=1e-13)

    def test_lambda2_vanishes_linearly(self, ctx1):
        t = np.geomspace(1e-9, 1e-3, 7)[:, None]
        l2 = K.lambda2(ctx1, [0.7], t)
        # lambda2 ~ |t| u''/2 for small t
        ratio = l2 / t[:, 0]
        assert np.allclose(ratio, ratio[0], rtol=1e-2)

    def test_lambda2_branch_continuity(self, ctx1):
        t = np.array([[0.999e-6], [1.001e-6]])
        a, b = K.lambda2(ctx1, [0.7], t)
        assert a == pytest.approx(b, rel=5e-3)

    def test_two_dimensional(self):
        c = K.KernelContext(U2, P3)
        s = np.array([0.4, -0.2])
        t = np.array([[0.3, 0.1], [-1e-8, 2e-8]])
        naive = U2.evaluate(s[None, :])[0] - U2.evaluate(s[None, :] - t)
        got = K.lambda1(c, s, t) * np.linalg.norm(t, axis=1)
        assert got[0] == pytest.approx(naive[0], rel=1e-13)
        g = U2.gradient(s[None, :])[0]
        assert got[1] == pytest.approx(g @ t[1], rel=1e-6)

    def test_errors(self, ctx1):
        with pytest.raises(ValueError):
            K.lambda1(ctx1, [0.7], [[0.0]])
        with pytest.raises(ValueError):
            K.lambda1(ctx1, [0.7, 0.1], [[0.3]])
        with pytest.raises(ValueError):
            K.KernelContext(U1, P3)


class TestKernels:
    @settings(max_examples=30, deadline=None)
    @given(st.floats(-30, 30).filter(lambda x: abs(x) > 1e-12), st.floats(0, 1), st.floats(0.01, 0.99))
    def test_ranges(self, t, eps, rho):
        c = K.KernelContext(U1, P2)
        k = K.kernel_K(rho, eps, c, [0.7], [[t]])[0]
        kb = K.kernel_Kbar(rho, eps, c, [0.7], [[t]])[0]
        assert 0 < k <= 1
        assert 0 < kb
        assert k == pytest.approx((1 + K.lambda1(c, [0.7], [[t]])[0] ** 2 + (eps / t) ** 2)
                                  ** (-(2 + rho) / 2), rel=1e-13)

    def test_constant_profile(self):
        lam = 0.8
        u = SymmetricField.constant(1, 1, lam)
        t = np.linspace(0.1, 5, 7)[:, None]
        assert np.all(K.integrand_M(0.0, u, [0.3], t, P2) == 0.0)
        mb = K.integrand_Mbar(0.1, u, [0.3], t, P2)
        assert np.allclose(mb, 2 * lam * (t[:, 0] ** 2 + 4 * lam * lam + 0.01) ** (-1.25), rtol=1e-14)


class TestGeometricForm:
    def test_constant_matches_closed_form(self):
        lam, eps = 0.7, 0.05
        u = SymmetricField.constant(1, 1, lam)
        got = K.nmc_graph_geometric(u, P2, QuadratureSpec(trunc_radius=20.0, radial_nodes=400),
                                    [[0.1]], epsilon=eps)[0]
        ref = 4 * lam / 0.5 * kernel_mass(1, 0.5, math.sqrt(4 * lam * lam + eps * eps))
        assert got == pytest.approx(ref, rel=1e-11)

    def test_agrees_with_volume_form(self):
        # boundary form converges like T^-(1+alpha); T = 200 gives ~2e-4
        pts = np.array([[0.7], [2.0]])
        vol = nmc_graph(U1, P2, points=pts).values
        geo = K.nmc_graph_geometric(U1, P2, QuadratureSpec(trunc_radius=200.0, radial_nodes=8000), pts)
        assert np.allclose(geo, vol, atol=5e-4)
