"""Pointwise kernels of the boundary (geometric) form of the curvature.

With ``d1 = u(s) - u(s - t)`` and ``g = grad u(s - t)``::

    lambda1 = d1 / |t|
    lambda2 = lambda1 - g . t / |t|
    lambda3 = u(s) + u(s - t)
    lambda4 = lambda3 + g . t

    K    = (1 + lambda1^2 + eps^2 / |t|^2)^-(N+rho)/2
    Kbar = (|t|^2 + lambda3^2 + eps^2)^-(N+rho)/2
    M    = |t|^-(N-1+alpha) lambda2 K        (rho = alpha)
    Mbar = lambda4 Kbar                      (rho = alpha)

and ``-(alpha/2) H_eps(u)(s) = int M dt - int Mbar dt``.

All functions take a single point ``s`` (shape ``(dim,)``) and an array of
offsets ``t`` (shape ``(n, dim)`` or ``(dim,)``).
"""
from __future__ import annotations

import numpy as np

from . import _accel
from .core import ModelParams, SymmetricField
from .quadrature import (QuadratureSpec, gauss_legendre, half_sphere_rule,
                         radial_power_tail, radial_rule)

SMALL_T = 1e-6


class KernelContext:
    """A field together with its analytic gradient."""

    def __init__(self, u: SymmetricField, params: ModelParams):
        if u.dim != params.dim:
            raise ValueError("field dimension does not match params")
        self.u = u
        self.params = params
        self._T = u.dense()

    def value(self, pts):
        return self.u.evaluate(pts)

    def grad(self, pts):
        return self.u.gradient(pts)

    def difference(self, s, t):
        """``u(s) - u(s - t)`` to full relative accuracy for small ``t``."""
        s, t = _prep(s, t)
        S2, T2, t2 = _accel._embed(s[None, :], self._T, t)
        tabs1 = _accel._axis_tables_np(t2[:, 0], S2[0, 0], T2.shape[0] - 1)
        tabs2 = _accel._axis_tables_np(t2[:, 1], S2[0, 1], T2.shape[1] - 1)
        _, dpl, _, _ = _accel._deltas_np(T2, tabs1, tabs2)
        return dpl


def _prep(s, t):
    s = np.asarray(s, dtype=float).reshape(-1)
    t = np.atleast_2d(np.asarray(t, dtype=float))
    if t.shape[1] != s.shape[0]:
        raise ValueError("s and t have different dimensions")
    return s, t


def _ctx(u, params=None):
    if isinstance(u, KernelContext):
        return u
    return KernelContext(u, params or ModelParams(u.dim + 1, 0.5))


def _norm_nonzero(t):
    r = np.linalg.norm(t, axis=1)
    if np.any(r == 0.0):
        raise ValueError("t must be non-zero")
    return r


def lambda1(u, s, t):
    """``(u(s) - u(s - t)) / |t|``."""
    c = _ctx(u)
    s, t = _prep(s, t)
    return c.difference(s, t) / _norm_nonzero(t)


def lambda2(u, s, t, n_gauss: int = 8):
    """``lambda1 - grad u(s - t) . t / |t|``.

    For ``|t| < 1e-6`` the integral form
    ``int_0^1 (grad u(s - rho t) - grad u(s - t)) . t/|t| d rho`` is used.
    """
    c = _ctx(u)
    s, t = _prep(s, t)
    r = _norm_nonzero(t)
    th = t / r[:, None]
    out = c.difference(s, t) / r - np.einsum("ni,ni->n", c.grad(s[None, :] - t), th)
    small = r < SMALL_T
    if small.any():
        x, w = gauss_legendre(0.0, 1.0, n_gauss)
        ts = t[small]
        g1 = c.grad(s[None, :] - ts)
        acc = np.zeros(len(ts))
        for xi, wi in zip(x, w):
            acc += wi * np.einsum("ni,ni->n", c.grad(s[None, :] - xi * ts) - g1, th[small])
        out[small] = acc
    return out


def lambda3(u, s, t):
    """``u(s) + u(s - t)``."""
    c = _ctx(u)
    s, t = _prep(s, t)
    return c.value(s[None, :])[0] + c.value(s[None, :] - t)


def lambda4(u, s, t):
    """``u(s) + u(s - t) + t . grad u(s - t)``."""
    c = _ctx(u)
    s, t = _prep(s, t)
    return lambda3(c, s, t) + np.einsum("ni,ni->n", t, c.grad(s[None, :] - t))


def kernel_K(rho, eps, u, s, t, N=None):
    """``(1 + lambda1^2 + eps^2 / |t|^2)^-(N+rho)/2``."""
    c = _ctx(u)
    N = c.params.N if N is None else N
    s, t = _prep(s, t)
    r = _norm_nonzero(t)
    l1 = lambda1(c, s, t)
    return (1.0 + l1 * l1 + (eps / r) ** 2) ** (-0.5 * (N + rho))


def kernel_Kbar(rho, eps, u, s, t, N=None):
    """``(|t|^2 + lambda3^2 + eps^2)^-(N+rho)/2``."""
    c = _ctx(u)
    N = c.params.N if N is None else N
    s, t = _prep(s, t)
    l3 = lambda3(c, s, t)
    return (np.einsum("ni,ni->n", t, t) + l3 * l3 + eps * eps) ** (-0.5 * (N + rho))


def integrand_M(eps, u, s, t, params: ModelParams | None = None):
    """``|t|^-(N-1+alpha) lambda2 K_{alpha,eps}``."""
    c = _ctx(u, params)
    N, a = c.params.N, c.params.alpha
    s, t = _prep(s, t)
    r = _norm_nonzero(t)
    return r ** (-(N - 1 + a)) * lambda2(c, s, t) * kernel_K(a, eps, c, s, t)


def integrand_Mbar(eps, u, s, t, params: ModelParams | None = None):
    """``lambda4 Kbar_{alpha,eps}``."""
    c = _ctx(u, params)
    a = c.params.alpha
    return lambda4(c, s, t) * kernel_Kbar(a, eps, c, s, t)


def nmc_graph_geometric(u: SymmetricField, params: ModelParams, spec: QuadratureSpec,
                        points, epsilon: float = 0.0) -> np.ndarray:
    """``H_eps(u)`` from the boundary form, truncated at ``|t| = trunc_radius``.

    The ``Mbar`` tail is replaced by its value for the constant
    ``mean(u)``; the ``M`` tail is dropped.  Independent of the volume
    form used by :func:`cnmc.nmc_operator.nmc_graph` and therefore used as
    a cross-check.  Only ``N = 2, 3``.
    """
    c = KernelContext(u, params)
    d, a = params.dim, params.alpha
    R = spec.trunc_radius
    r, wr = radial_rule(R, spec.radial_nodes, a, spec.grading_exponent,
                        spec.first_panel, spec.panel_nodes)
    if d == 1:
        t = r[:, None]
        w = wr
    else:
        n_th = spec.angular_count(max(u.kmax, 1))
        th, wt = half_sphere_rule(d, n_th)
        t = (r[:, None, None] * th[None, :, :]).reshape(-1, d)
        w = (wr[:, None] * r[:, None] ** (d - 1) * wt[None, :]).ravel()
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lam = u.mean()
    tail = 2.0 * lam * radial_power_tail(d, R, params.p, float(np.hypot(2 * lam, epsilon)))
    out = np.empty(len(pts))
    for i, s in enumerate(pts):
        m = integrand_M(epsilon, c, s, t) + integrand_M(epsilon, c, s, -t)
        mb = integrand_Mbar(epsilon, c, s, t) + integrand_Mbar(epsilon, c, s, -t)
        out[i] = np.dot(w, m) - np.dot(w, mb) - tail
    return -2.0 / a * out
