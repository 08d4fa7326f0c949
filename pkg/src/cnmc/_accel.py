"""Near-field accumulation kernels (numba with a numpy fallback).

Both backends evaluate, for every evaluation point ``s`` and every polar
node ``t`` of the half ball, the symmetrised volume integrand

    2 [Phi_c(A+) + Phi_c(A-) + Phi(d+) + Phi(d-)]

with ``d+- = u(s) - u(s -+ t)`` and ``A+- = 2 u(s) - d+-`` and, for the
linearisation, its derivative along every tensor cosine mode.  Here

    Phi(x)   = int_0^x (r2 + xi^2)^-p dxi,
    Phi_c(A) = int_A^inf (r2 + xi^2)^-p dxi,   r2 = |t|^2 + eps^2.

Differences ``u(s) - u(s -+ t)`` are formed from half-angle products so
they keep full relative accuracy as ``|t| -> 0``; this is what makes the
principal value pairing of ``t`` and ``-t`` numerically stable.

The backend is chosen at import time: set ``CNMC_BACKEND=numpy`` to
disable numba.
"""
from __future__ import annotations

import math
import os

import numpy as np
from scipy import special

BACKEND = os.environ.get("CNMC_BACKEND", "numba").strip().lower()
if BACKEND not in ("numba", "numpy"):
    raise ImportError(f"unknown CNMC_BACKEND={BACKEND!r}")

if BACKEND == "numba":
    # the bundled TBB is often too old; fall back quietly to the omp/workqueue layers
    os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")
    try:
        import numba
        from numba import njit, prange
    except ImportError:  # pragma: no cover
        BACKEND = "numpy"

SERIES_Z = 0.1  # switch to power series when (x^2 / r2) or (r2 / x^2) < this


def kernel_constants(p: float):
    """``(B/2, log B)`` with ``B = Beta(1/2, p - 1/2)``."""
    lb = special.betaln(0.5, p - 0.5)
    return 0.5 * math.exp(lb), lb


def set_threads(k: int | None):
    if k and BACKEND == "numba":
        numba.set_num_threads(int(k))


def _embed(S, T, tn):
    """Lift ``dim = 1`` data to the two-axis layout used by the kernels."""
    S = np.ascontiguousarray(S, dtype=float)
    tn = np.ascontiguousarray(tn, dtype=float)
    T = np.asarray(T, dtype=float)
    if S.shape[1] == 1:
        S = np.concatenate([S, np.zeros_like(S)], axis=1)
        tn = np.concatenate([tn, np.zeros_like(tn)], axis=1)
        T = T[:, None]
    return S, np.ascontiguousarray(T), tn


def near_values(S, T, tn, r, W, p, eps2=0.0):
    """Near-field volume integral at each row of ``S``.

    ``T`` is the dense tensor-cosine coefficient array of ``u``.
    """
    hB, lb = kernel_constants(p)
    dim = S.shape[1]
    S2, T2, t2 = _embed(S, T, tn)
    if BACKEND == "numba":
        return _near_values_nb(S2, T2, t2, r, W, p, eps2, hB, lb, _GLX, _GLW)
    return _near_values_np(S2, T2, t2, r, W, p, eps2, hB, lb)


def near_jacobian(S, T, kjac, tn, r, W, p, eps2=0.0):
    """Near-field derivative along every tensor mode ``k`` with entries <= kjac.

    Returns an array of shape ``(n_s,) + (kjac + 1,) * dim``.
    """
    dim = S.shape[1]
    S2, T2, t2 = _embed(S, T, tn)
    kj2 = kjac if dim == 2 else 0
    if BACKEND == "numba":
        J = _near_jac_nb(S2, T2, kjac, kj2, t2, r, W, p, eps2)
    else:
        J = _near_jac_np(S2, T2, kjac, kj2, t2, r, W, p, eps2)
    return J if dim == 2 else J[:, :, 0]


# ====================================================== numpy backend ====

PAIR_RATIO = 0.1  # integrate Phi(d+) + Phi(d-) directly when |d+ + d-| < this * sqrt(r2)
_GLX, _GLW = np.polynomial.legendre.leggauss(8)
_GLX = 0.5 * (_GLX + 1.0)
_GLW = 0.5 * _GLW


def _phi_np(x, r2, p, hB, lb):
    z = x * x / (r2 + x * x)
    y = r2 / (r2 + x * x)
    I = np.where(z < 0.5, special.betainc(0.5, p - 0.5, z),
                 1.0 - special.betainc(p - 0.5, 0.5, y))
    return np.sign(x) * hB * r2 ** (0.5 - p) * I


def _phic_np(A, r2, p, hB, lb):
    y = r2 / (r2 + A * A)
    z = A * A / (r2 + A * A)
    C = np.where(z < 0.5, 1.0 - special.betainc(0.5, p - 0.5, z),
                 special.betainc(p - 0.5, 0.5, y))
    return hB * r2 ** (0.5 - p) * C


def _phi_pair_np(dpl, sig, r2, p, hB, lb):
    """``Phi(d+) + Phi(d-)`` from ``d+`` and ``sig = d+ + d-``."""
    direct = _phi_np(dpl, r2, p, hB, lb) + _phi_np(sig - dpl, r2, p, hB, lb)
    pts = dpl[:, None] - sig[:, None] * _GLX[None, :]
    short = sig * ((r2[:, None] + pts * pts) ** (-p) @ _GLW)
    return np.where(np.abs(sig) < PAIR_RATIO * np.sqrt(r2), short, direct)


def _kdiff_np(x, h, r2, p):
    """``k(x + h) - k(x)`` without cancellation, ``k(x) = (r2 + x^2)^-p``."""
    q = r2 + x * x
    return q ** (-p) * np.expm1(-p * np.log1p((2.0 * x + h) * h / q))


def _axis_tables_np(t, s, K):
    """Per-axis difference tables for nodes ``t`` (n,) at a point ``s``.

    ``dm = cos(ks) - cos(k(s-t))``, ``dp = cos(ks) - cos(k(s+t))`` and
    ``q = dm + dp``, all to full relative accuracy.
    """
    k = np.arange(K + 1)
    cs = np.cos(k * s)
    ss = np.sin(k * s)
    sh = np.sin(0.5 * np.outer(t, k))
    ch = np.cos(0.5 * np.outer(t, k))
    x = 2.0 * sh * sh * cs
    y = 2.0 * ss * sh * ch
    dm = x - y
    dp = x + y
    return cs, dm, dp, cs - dm, cs - dp, 2.0 * x


def _deltas_np(T, tabs1, tabs2):
    cs1, dm1, dp1, cm1, cp1, q1 = (a[..., :T.shape[0]] for a in tabs1)
    cs2, dm2, dp2, cm2, cp2, q2 = (a[..., :T.shape[1]] for a in tabs2)
    Tc2 = T @ cs2
    Tc1 = cs1 @ T
    a = dm2 @ T.T
    b = dp2 @ T.T
    dpl = dm1 @ Tc2 + (cm1 * a).sum(axis=1)
    dmi = dp1 @ Tc2 + (cp1 * b).sum(axis=1)
    sig = q1 @ Tc2 + q2 @ Tc1 - (dm1 * a).sum(axis=1) - (dp1 * b).sum(axis=1)
    return cs1 @ Tc2, dpl, dmi, sig


def _near_values_np(S, T, tn, r, W, p, eps2, hB, lb):
    K1, K2 = T.shape[0] - 1, T.shape[1] - 1
    r2 = r * r + eps2
    out = np.empty(S.shape[0])
    for i, (s1, s2) in enumerate(S):
        tabs1 = _axis_tables_np(tn[:, 0], s1, K1)
        tabs2 = _axis_tables_np(tn[:, 1], s2, K2)
        us, dpl, dmi, sig = _deltas_np(T, tabs1, tabs2)
        val = (_phic_np(2 * us - dpl, r2, p, hB, lb) + _phic_np(2 * us - dmi, r2, p, hB, lb)
               + _phi_pair_np(dpl, sig, r2, p, hB, lb))
        out[i] = 2.0 * np.dot(W, val)
    return out


def _near_jac_np(S, T, kj1, kj2, tn, r, W, p, eps2):
    K1 = max(T.shape[0] - 1, kj1)
    K2 = max(T.shape[1] - 1, kj2)
    r2 = r * r + eps2
    out = np.empty((S.shape[0], kj1 + 1, kj2 + 1))
    k = lambda x: 2.0 * (r2 + x * x) ** (-p)
    for i, (s1, s2) in enumerate(S):
        tabs1 = _axis_tables_np(tn[:, 0], s1, K1)
        tabs2 = _axis_tables_np(tn[:, 1], s2, K2)
        us, dpl, dmi, sig = _deltas_np(T, tabs1, tabs2)
        gap, gam = k(2 * us - dpl), k(2 * us - dmi)
        a = W * (k(dpl) + gap)
        D = W * (2.0 * _kdiff_np(-dpl, sig, r2, p) + gam - gap)
        Z = np.dot(W, gap + gam)
        cs1, dm1, dp1, cm1, cp1, q1 = (x[..., :kj1 + 1] for x in tabs1)
        cs2, dm2, dp2, cm2, cp2, q2 = (x[..., :kj2 + 1] for x in tabs2)
        X1 = a @ q1 + D @ dp1
        X2 = a @ q2
        Y = ((D[:, None] * cp1 - a[:, None] * dp1).T @ dp2
             - (a[:, None] * dm1).T @ dm2)
        out[i] = np.outer(X1, cs2) + np.outer(cs1, X2) + Y - 2.0 * Z * np.outer(cs1, cs2)
    return out


# ====================================================== numba backend ====

if BACKEND == "numba":

    @njit(cache=True)
    def _betacf(a, b, x):
        fpmin = 1e-300
        qab = a + b
        qap = a + 1.0
        qam = a - 1.0
        c = 1.0
        d = 1.0 - qab * x / qap
        if abs(d) < fpmin:
            d = fpmin
        d = 1.0 / d
        h = d
        for m in range(1, 400):
            m2 = 2 * m
            aa = m * (b - m) * x / ((qam + m2) * (a + m2))
            d = 1.0 + aa * d
            if abs(d) < fpmin:
                d = fpmin
            c = 1.0 + aa / c
            if abs(c) < fpmin:
                c = fpmin
            d = 1.0 / d
            h *= d * c
            aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
            d = 1.0 + aa * d
            if abs(d) < fpmin:
                d = fpmin
            c = 1.0 + aa / c
            if abs(c) < fpmin:
                c = fpmin
            d = 1.0 / d
            de = d * c
            h *= de
            if abs(de - 1.0) < 1e-16:
                break
        return h

    @njit(cache=True)
    def _ibeta_half(p, x, y, lb):
        """``(I_x(1/2, p-1/2), 1 - I_x(1/2, p-1/2))`` with ``y = 1 - x``."""
        a = 0.5
        b = p - 0.5
        if x <= 0.0:
            return 0.0, 1.0
        if y <= 0.0:
            return 1.0, 0.0
        front = math.exp(a * math.log(x) + b * math.log(y) - lb)
        if x < (a + 1.0) / (a + b + 2.0):
            I = front * _betacf(a, b, x) / a
            return I, 1.0 - I
        C = front * _betacf(b, a, y) / b
        return 1.0 - C, C

    @njit(cache=True)
    def _phi_series(x, r2, p):
        # x r2^-p 2F1(1/2, p; 3/2; -x^2/r2)
        z = x * x / r2
        term = 1.0
        s = 1.0
        for n in range(1, 60):
            term *= -(p + n - 1.0) / n * z
            inc = term / (2 * n + 1)
            s += inc
            if abs(inc) < 1e-17 * abs(s):
                break
        return x * math.exp(-p * math.log(r2)) * s

    @njit(cache=True)
    def _phi(x, r2, p, hB, lb):
        if x * x < SERIES_Z * r2:
            return _phi_series(x, r2, p)
        q = r2 + x * x
        I, _ = _ibeta_half(p, x * x / q, r2 / q, lb)
        v = hB * math.exp((0.5 - p) * math.log(r2)) * I
        return v if x > 0 else -v

    @njit(cache=True)
    def _phic(A, r2, p, hB, lb):
        if A * A < SERIES_Z * r2:
            return hB * math.exp((0.5 - p) * math.log(r2)) - _phi_series(A, r2, p)
        if r2 < SERIES_Z * A * A:
            # int_A^inf (r2 + xi^2)^-p dxi expanded in r2 / A^2
            q = r2 / (A * A)
            binom = 1.0
            qn = 1.0
            s = 1.0 / (2.0 * p - 1.0)
            for n in range(1, 60):
                binom *= -(p + n - 1.0) / n
                qn *= q
                inc = binom * qn / (2.0 * p + 2.0 * n - 1.0)
                s += inc
                if abs(inc) < 1e-17 * abs(s):
                    break
            return math.exp((1.0 - 2.0 * p) * math.log(A)) * s
        qq = r2 + A * A
        _, C = _ibeta_half(p, A * A / qq, r2 / qq, lb)
        return hB * math.exp((0.5 - p) * math.log(r2)) * C

    @njit(cache=True)
    def _phi_pair(dpl, sig, r2, p, hB, lb, glx, glw):
        if sig * sig < PAIR_RATIO * PAIR_RATIO * r2:
            acc = 0.0
            for j in range(glx.shape[0]):
                x = dpl - sig * glx[j]
                acc += glw[j] * math.exp(-p * math.log(r2 + x * x))
            return sig * acc
        return _phi(dpl, r2, p, hB, lb) + _phi(sig - dpl, r2, p, hB, lb)

    @njit(cache=True)
    def _kdiff(x, h, r2, p):
        q = r2 + x * x
        return math.exp(-p * math.log(q)) * math.expm1(-p * math.log1p((2.0 * x + h) * h / q))

    @njit(cache=True)
    def _axis_tables(t, cs, ss, K, dm, dp, cm, cp, qq):
        c = math.cos(0.5 * t)
        s = math.sin(0.5 * t)
        ch = 1.0
        sh = 0.0
        for k in range(K + 1):
            x = 2.0 * sh * sh * cs[k]
            y = 2.0 * ss[k] * sh * ch
            dm[k] = x - y
            dp[k] = x + y
            cm[k] = cs[k] - dm[k]
            cp[k] = cs[k] - dp[k]
            qq[k] = 2.0 * x
            ch, sh = ch * c - sh * s, sh * c + ch * s

    @njit(cache=True)
    def _point_tables(s, K):
        cs = np.empty(K + 1)
        ss = np.empty(K + 1)
        for k in range(K + 1):
            cs[k] = math.cos(k * s)
            ss[k] = math.sin(k * s)
        return cs, ss

    @njit(cache=True)
    def _deltas(T, Tc2, Tc1, dm1, dp1, cm1, cp1, q1, dm2, dp2, q2):
        K1 = T.shape[0]
        K2 = T.shape[1]
        dpl = 0.0
        dmi = 0.0
        sig = 0.0
        for k1 in range(K1):
            a = 0.0
            b = 0.0
            for k2 in range(K2):
                a += T[k1, k2] * dm2[k2]
                b += T[k1, k2] * dp2[k2]
            dpl += dm1[k1] * Tc2[k1] + cm1[k1] * a
            dmi += dp1[k1] * Tc2[k1] + cp1[k1] * b
            sig += q1[k1] * Tc2[k1] - dm1[k1] * a - dp1[k1] * b
        for k2 in range(K2):
            sig += q2[k2] * Tc1[k2]
        return dpl, dmi, sig

    @njit(cache=True)
    def _contractions(T, cs1, cs2):
        Tc2 = np.zeros(T.shape[0])
        Tc1 = np.zeros(T.shape[1])
        us = 0.0
        for k1 in range(T.shape[0]):
            for k2 in range(T.shape[1]):
                Tc2[k1] += T[k1, k2] * cs2[k2]
                Tc1[k2] += T[k1, k2] * cs1[k1]
            us += cs1[k1] * Tc2[k1]
        return Tc2, Tc1, us

    @njit(parallel=True, cache=True)
    def _near_values_nb(S, T, tn, r, W, p, eps2, hB, lb, glx, glw):
        ns = S.shape[0]
        nn = tn.shape[0]
        K1 = T.shape[0] - 1
        K2 = T.shape[1] - 1
        out = np.zeros(ns)
        for i in prange(ns):
            cs1, ss1 = _point_tables(S[i, 0], K1)
            cs2, ss2 = _point_tables(S[i, 1], K2)
            Tc2, Tc1, us = _contractions(T, cs1, cs2)
            dm1 = np.empty(K1 + 1)
            dp1 = np.empty(K1 + 1)
            cm1 = np.empty(K1 + 1)
            cp1 = np.empty(K1 + 1)
            q1 = np.empty(K1 + 1)
            dm2 = np.empty(K2 + 1)
            dp2 = np.empty(K2 + 1)
            cm2 = np.empty(K2 + 1)
            cp2 = np.empty(K2 + 1)
            q2 = np.empty(K2 + 1)
            acc = 0.0
            for n in range(nn):
                _axis_tables(tn[n, 0], cs1, ss1, K1, dm1, dp1, cm1, cp1, q1)
                _axis_tables(tn[n, 1], cs2, ss2, K2, dm2, dp2, cm2, cp2, q2)
                dpl, dmi, sig = _deltas(T, Tc2, Tc1, dm1, dp1, cm1, cp1, q1, dm2, dp2, q2)
                r2 = r[n] * r[n] + eps2
                v = (_phic(2.0 * us - dpl, r2, p, hB, lb) + _phic(2.0 * us - dmi, r2, p, hB, lb)
                     + _phi_pair(dpl, sig, r2, p, hB, lb, glx, glw))
                acc += W[n] * v
            out[i] = 2.0 * acc
        return out

    @njit(parallel=True, cache=True)
    def _near_jac_nb(S, T, kj1, kj2, tn, r, W, p, eps2):
        ns = S.shape[0]
        nn = tn.shape[0]
        K1 = max(T.shape[0] - 1, kj1)
        K2 = max(T.shape[1] - 1, kj2)
        out = np.zeros((ns, kj1 + 1, kj2 + 1))
        for i in prange(ns):
            cs1, ss1 = _point_tables(S[i, 0], K1)
            cs2, ss2 = _point_tables(S[i, 1], K2)
            Tc2, Tc1, us = _contractions(T, cs1[:T.shape[0]], cs2[:T.shape[1]])
            dm1 = np.empty(K1 + 1)
            dp1 = np.empty(K1 + 1)
            cm1 = np.empty(K1 + 1)
            cp1 = np.empty(K1 + 1)
            q1 = np.empty(K1 + 1)
            dm2 = np.empty(K2 + 1)
            dp2 = np.empty(K2 + 1)
            cm2 = np.empty(K2 + 1)
            cp2 = np.empty(K2 + 1)
            q2 = np.empty(K2 + 1)
            X1 = np.zeros(kj1 + 1)
            X2 = np.zeros(kj2 + 1)
            Y = np.zeros((kj1 + 1, kj2 + 1))
            Z = 0.0
            for n in range(nn):
                _axis_tables(tn[n, 0], cs1, ss1, K1, dm1, dp1, cm1, cp1, q1)
                _axis_tables(tn[n, 1], cs2, ss2, K2, dm2, dp2, cm2, cp2, q2)
                dpl, dmi, sig = _deltas(T, Tc2, Tc1, dm1, dp1, cm1, cp1, q1, dm2, dp2, q2)
                r2 = r[n] * r[n] + eps2
                Ap = 2.0 * us - dpl
                Am = 2.0 * us - dmi
                gap = 2.0 * math.exp(-p * math.log(r2 + Ap * Ap))
                gam = 2.0 * math.exp(-p * math.log(r2 + Am * Am))
                a = W[n] * (2.0 * math.exp(-p * math.log(r2 + dpl * dpl)) + gap)
                D = W[n] * (2.0 * _kdiff(-dpl, sig, r2, p) + gam - gap)
                Z += W[n] * (gap + gam)
                for k2 in range(kj2 + 1):
                    X2[k2] += a * q2[k2]
                for k1 in range(kj1 + 1):
                    X1[k1] += a * q1[k1] + D * dp1[k1]
                    e1 = D * cp1[k1] - a * dp1[k1]
                    e2 = a * dm1[k1]
                    for k2 in range(kj2 + 1):
                        Y[k1, k2] += e1 * dp2[k2] - e2 * dm2[k2]
            for k1 in range(kj1 + 1):
                for k2 in range(kj2 + 1):
                    out[i, k1, k2] = (X1[k1] * cs2[k2] + cs1[k1] * X2[k2] + Y[k1, k2]
                                      - 2.0 * Z * cs1[k1] * cs2[k2])
        return out
