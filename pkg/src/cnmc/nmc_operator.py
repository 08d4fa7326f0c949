"""Nonlocal mean curvature of symmetric graphs over a slab.

For a positive symmetric field ``u`` the set ``E_u = {(s, z): |z| < u(s)}``
has boundary points ``(s, +-u(s))`` and the fractional mean curvature there
is written as the principal-value volume integral

    H(u)(s) = PV int_{R^d} 2 [Phi_c(u(s) + u(s-t)) + Phi(u(s) - u(s-t))] dt,

with ``Phi(x) = int_0^x k``, ``Phi_c(A) = int_A^inf k`` and the kernel
``k(xi) = (|t|^2 + xi^2)^-(N+alpha)/2``.  The integral is split at
``|t| = R``: the near part is computed on polar nodes by :mod:`cnmc._accel`
and the far part through the expansion of ``Phi`` in powers of ``x/|t|``,
whose coefficients are moments of ``u``.

The lattice correction ``Hl(tau, u)`` of the periodic stack
``E_u + (1/tau) e_N Z`` admits the same moment form once ``t`` is averaged
out, with the sum over copies given by Hurwitz zeta values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from . import _accel
from .core import (ModelParams, SymmetricField, fundamental_points, grid_points,
                   mode_classes, orbit)
from .quadrature import (QuadratureSpec, kernel_mass, near_field_nodes,
                         radial_fourier_tail, radial_power_tail)


@dataclass
class OperatorResult:
    """Operator values at a set of evaluation points.

    Attributes
    ----------
    values : ndarray
        Values at ``points``.
    points : ndarray (n, dim)
    fold : ndarray or None
        Map from full-grid points to rows of ``values`` when the points are
        the fundamental cell of a grid.
    grid_size : int or None
    info : dict
        Diagnostics (backend, node counts, far-field truncation estimate).
    """

    values: np.ndarray
    points: np.ndarray
    fold: np.ndarray | None = None
    grid_size: int | None = None
    info: dict = field(default_factory=dict)

    def on_grid(self) -> np.ndarray:
        """Values on the full grid, shape ``(M,) * dim``."""
        if self.grid_size is None:
            raise ValueError("result was not computed on a grid")
        dim = self.points.shape[1]
        flat = self.values if self.fold is None else self.values[self.fold]
        return flat.reshape((self.grid_size,) * dim)

    def field(self, kmax: int) -> SymmetricField:
        return SymmetricField.analyze(self.on_grid(), kmax)


def _points(dim, M, points):
    """Resolve the ``points`` argument into (pts, fold, grid_size)."""
    if points is None or (isinstance(points, str) and points == "fundamental"):
        pts, fold = fundamental_points(dim, M)
        return pts, fold, M
    if isinstance(points, str) and points == "all":
        return grid_points(dim, M), None, M
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != dim:
        raise ValueError("points have the wrong dimension")
    return pts, None, None


@lru_cache(maxsize=16)
def _nodes(dim, alpha, spec, kmax):
    return near_field_nodes(dim, alpha, spec, kmax)


def _check_field(u: SymmetricField, params: ModelParams):
    if u.dim != params.dim:
        raise ValueError(f"field has dim={u.dim}, expected {params.dim}")


# ---------------------------------------------------------- moments ----

def _cos_tensor(values: np.ndarray, K: int) -> np.ndarray:
    """Tensor cosine coefficients (degree <= K) of even grid data."""
    M = values.shape[0]
    x = -math.pi + 2 * math.pi * np.arange(M) / M
    k = np.arange(K + 1)
    C = np.cos(np.outer(k, x)) / M
    C[1:] *= 2.0
    F = values
    for _ in range(values.ndim):
        F = np.tensordot(F, C, axes=([0], [1]))
    return F


def _eval_tensor(T: np.ndarray, S: np.ndarray) -> np.ndarray:
    """``sum_m T[m] prod_i cos(m_i s_i)`` at the rows of ``S``."""
    k = np.arange(T.shape[0])
    tabs = [np.cos(np.outer(k, S[:, i])) for i in range(S.shape[1])]
    out = np.einsum("...k,kn->...n", T, tabs[-1])
    for tab in reversed(tabs[:-1]):
        out = np.einsum("...kn,kn->...n", out, tab)
    return out


@lru_cache(maxsize=64)
def _fourier_multiplier(dim, K, R, expo, eps):
    """``FT[1_{|t|>R} (|t|^2+eps^2)^-expo](|m|)`` on ``m in [0, K]^dim``."""
    k = np.arange(K + 1)
    mm = np.sqrt(sum(np.meshgrid(*([k * k] * dim), indexing="ij"))) if dim > 1 else k.astype(float)
    uniq, inv = np.unique(np.round(mm, 12), return_inverse=True)
    vals = radial_fourier_tail(uniq, dim, R, expo, eps)
    return vals[inv].reshape(mm.shape)


class _Moments:
    """Powers of ``w = u(sigma)`` on a fine periodic grid."""

    def __init__(self, u: SymmetricField, jmax: int, kextra: int = 0, fourier_deg: int = 0):
        K = max(u.kmax, 1)
        need = max(jmax * K + kextra + 2, 2 * (fourier_deg * K + kextra) + 2, 8)
        self.M = need + (need % 2)
        self.K = K
        self.w = u.synthesize(self.M) if u.kmax > 0 else np.full((self.M,) * u.dim, u.mean())
        self.pows = [np.ones_like(self.w)]
        for _ in range(jmax):
            self.pows.append(self.pows[-1] * self.w)
        self.dim = u.dim

    def mean(self, j, v=None) -> float:
        f = self.pows[j] if v is None else self.pows[j] * v
        return float(f.mean())

    def conv(self, j, expo, R, eps, S, v=None, kv=0) -> np.ndarray:
        """``int_{|t|>R} (w^j v)(s - t) (|t|^2+eps^2)^-expo dt`` at ``S``."""
        f = self.pows[j] if v is None else self.pows[j] * v
        K = j * self.K + kv
        T = _cos_tensor(f, K)
        H = _fourier_multiplier(self.dim, K, float(R), float(expo), float(eps))
        return _eval_tensor(T * H, S)


def _binom_neg(p, n):
    """Generalised binomial ``binom(-p, n)``."""
    out = 1.0
    for i in range(n):
        out *= -(p + i) / (i + 1)
    return out


def _far_plan(spec: QuadratureSpec):
    if spec.tail_mode == "none":
        return 0, 0
    nF = spec.far_fourier_terms if spec.tail_mode == "fourier" else 0
    return spec.far_terms, min(nF, spec.far_terms)


def _far_check(u_max, spec, nT):
    ratio = 2.0 * u_max / spec.trunc_radius
    if nT and ratio >= 0.5:
        raise ValueError(
            f"trunc_radius={spec.trunc_radius} too small for max|u|={u_max:.3g}; "
            "need trunc_radius > 4 max|u|")
    return ratio ** (2 * nT) if nT else None


def _far_values(mom: _Moments, us, S, p, spec, eps):
    nT, nF = _far_plan(spec)
    if nT == 0:
        return np.zeros(len(us))
    hB, _ = _accel.kernel_constants(p)
    R = spec.trunc_radius
    d = mom.dim
    out = np.full(len(us), 2.0 * hB * radial_power_tail(d, R, p - 0.5, eps))
    for n in range(nT):
        cn = _binom_neg(p, n) / (2 * n + 1)
        expo = p + n
        H0 = radial_power_tail(d, R, expo, eps)
        for j in range(1, 2 * n + 2, 2):
            if n < nF:
                conv = mom.conv(j, expo, R, eps, S)
            else:
                conv = mom.mean(j) * H0
            out += -4.0 * cn * math.comb(2 * n + 1, j) * us ** (2 * n + 1 - j) * conv
    return out


def _far_jacobian(mom: _Moments, us, S, p, spec, eps, vgrids, vs, kv):
    """Far-field derivative along each column of ``vs`` (n_s, n_v)."""
    nT, nF = _far_plan(spec)
    out = np.zeros_like(vs)
    if nT == 0:
        return out
    R = spec.trunc_radius
    d = mom.dim
    for n in range(nT):
        cn = _binom_neg(p, n) / (2 * n + 1)
        expo = p + n
        H0 = radial_power_tail(d, R, expo, eps)
        for j in range(1, 2 * n + 2, 2):
            c = -4.0 * cn * math.comb(2 * n + 1, j)
            if n < nF:
                conv = mom.conv(j, expo, R, eps, S)
            else:
                conv = mom.mean(j) * H0
            if 2 * n + 1 - j > 0:
                out += (c * (2 * n + 1 - j) * us ** (2 * n - j) * conv)[:, None] * vs
            for col, vg in enumerate(vgrids):
                if n < nF:
                    cv = mom.conv(j - 1, expo, R, eps, S, v=vg, kv=kv)
                else:
                    cv = mom.mean(j - 1, vg) * H0
                out[:, col] += c * j * us ** (2 * n + 1 - j) * cv
    return out


# ----------------------------------------------------------- volume H ----

def _volume_values(u, params, spec, S, p, eps):
    d = params.dim
    kn = max(u.kmax, 1)
    tn, r, W = _nodes(d, params.alpha, spec, kn)
    T = u.dense()
    near = _accel.near_values(S, T, tn, r, W, p, eps * eps)
    nT, nF = _far_plan(spec)
    mom = _Moments(u, 2 * nT + 1, fourier_deg=max(2 * nF - 1, 0))
    trunc = _far_check(float(np.abs(mom.w).max()), spec, nT)
    us = u.evaluate(S)
    far = _far_values(mom, us, S, p, spec, eps)
    return near + far, {"near_nodes": int(len(r)), "far_truncation": trunc,
                        "backend": _accel.BACKEND}


def _volume_jacobian(u, params, spec, S, p, eps, classes):
    """Derivative of the volume integral along each class in ``classes``."""
    d = params.dim
    kj = max(max(k) for k in classes)
    kn = max(u.kmax, kj, 1)
    tn, r, W = _nodes(d, params.alpha, spec, kn)
    Jt = _accel.near_jacobian(S, u.dense(), kj, tn, r, W, p, eps * eps)
    near = np.stack([np.mean([Jt[(slice(None),) + kk] for kk in orbit(k)], axis=0)
                     for k in classes], axis=1)
    nT, nF = _far_plan(spec)
    mom = _Moments(u, 2 * nT + 1, kextra=kj, fourier_deg=max(2 * nF - 2, 0))
    _far_check(float(np.abs(mom.w).max()), spec, nT)
    us = u.evaluate(S)
    vgrids = [SymmetricField.mode(d, kj, k).synthesize(mom.M) for k in classes]
    vs = np.stack([SymmetricField.mode(d, kj, k).evaluate(S) for k in classes], axis=1)
    return near + _far_jacobian(mom, us, S, p, spec, eps, vgrids, vs, kj)


def _regularized_parts(params, eps):
    """``[(p, weight)]`` such that ``H_eps = sum weight * h_p``."""
    p = params.p
    if eps == 0.0:
        return [(p, 1.0)]
    return [(p, 1.0), (p + 1.0, -(params.N + params.alpha) * eps * eps / params.alpha)]


def _check_positive(u: SymmetricField):
    M = 4 * max(u.kmax, 1) + 4
    if float(u.synthesize(M).min()) <= 0.0:
        raise ValueError("the graph function must be positive")


def nmc_graph(u: SymmetricField, params: ModelParams, spec: QuadratureSpec = QuadratureSpec(),
              points=None) -> OperatorResult:
    """Fractional mean curvature ``H(u)`` of ``E_u`` at ``(s, u(s))``.

    Parameters
    ----------
    points : None, "all" or array
        ``None`` evaluates on the fundamental cell of the grid given by
        ``spec.grid_size(u.kmax)``; ``"all"`` evaluates every grid point
        independently; an array gives explicit points.
    """
    return nmc_graph_regularized(u, params, spec.with_(epsilon=0.0), points=points)


def nmc_graph_regularized(u: SymmetricField, params: ModelParams,
                          spec: QuadratureSpec = QuadratureSpec(), epsilon: float | None = None,
                          points=None) -> OperatorResult:
    """Regularised curvature ``H_eps(u)``; equals :func:`nmc_graph` at ``eps = 0``."""
    _check_field(u, params)
    _check_positive(u)
    eps = spec.epsilon if epsilon is None else float(epsilon)
    if eps < 0:
        raise ValueError("epsilon must be >= 0")
    M = spec.grid_size(u.kmax)
    S, fold, gs = _points(params.dim, M, points)
    total = np.zeros(len(S))
    info = {}
    for p, wgt in _regularized_parts(params, eps):
        vals, info = _volume_values(u, params, spec, S, p, eps)
        total += wgt * vals
    info["epsilon"] = eps
    return OperatorResult(total, S, fold, gs, info)


def linearized_nmc_basis(u: SymmetricField, params: ModelParams,
                         spec: QuadratureSpec = QuadratureSpec(), classes=None,
                         points=None, epsilon: float = 0.0):
    """``DH(u)[sym_k]`` for every class ``k``.

    Returns
    -------
    values : ndarray (n_points, n_classes)
    classes : list of multi-indices
    S, fold, grid_size : evaluation points as in :class:`OperatorResult`
    """
    _check_field(u, params)
    if classes is None:
        classes = mode_classes(params.dim, u.kmax)
    M = spec.grid_size(max(u.kmax, max(max(k) for k in classes)))
    S, fold, gs = _points(params.dim, M, points)
    J = np.zeros((len(S), len(classes)))
    for p, wgt in _regularized_parts(params, epsilon):
        J += wgt * _volume_jacobian(u, params, spec, S, p, epsilon, classes)
    return J, classes, S, fold, gs


def linearized_nmc(u: SymmetricField, v: SymmetricField, params: ModelParams,
                   spec: QuadratureSpec = QuadratureSpec(), points=None,
                   epsilon: float = 0.0) -> OperatorResult:
    """Directional derivative ``DH(u)[v]``."""
    classes = [k for k, c in v.coeffs.items() if c != 0.0] or [(0,) * params.dim]
    kk = max(u.kmax, v.kmax)
    M = spec.grid_size(kk)
    S, fold, gs = _points(params.dim, M, points)
    J, classes, _, _, _ = linearized_nmc_basis(u, params, spec, classes, S, epsilon)
    vals = J @ np.array([v.get(k) for k in classes])
    return OperatorResult(vals, S, fold, gs, {"backend": _accel.BACKEND})


# -------------------------------------------------- lattice correction ----

def _lattice_terms(u_max, tau):
    x = 2.0 * u_max * abs(tau)
    if x >= 0.5:
        raise ValueError(f"tau={tau} too large for max|u|={u_max:.3g}; need 4 tau max|u| < 1")
    n = 1
    while x ** n > 1e-18 and n < 81:
        n += 2
    return n


def _lattice_coeff(params, tau, n):
    a = params.alpha
    om = kernel_mass(params.dim, a)
    return (2.0 * om / a * special.poch(a, n) / math.factorial(n)
            * special.zeta(a + n) * abs(tau) ** (a + n))


def _lattice_series(u, params, S, tau):
    nmax = _lattice_terms(float(np.abs(u.synthesize(4 * max(u.kmax, 1) + 4)).max()), tau)
    mom = _Moments(u, nmax)
    us = u.evaluate(S)
    out = np.zeros(len(S))
    last = 0.0
    for n in range(1, nmax + 1, 2):
        c = _lattice_coeff(params, tau, n)
        # <A^n - D^n> with A, D = u(s) +- w
        diff = sum(math.comb(n, j) * us ** (n - j) * 2.0 * mom.mean(j)
                   for j in range(1, n + 1, 2))
        last = c * diff
        out += last
    return out, float(np.max(np.abs(last))), nmax


def _lattice_direct(u, params, S, tau, Q):
    """Truncated sum over ``|q| <= Q`` with an integral tail correction."""
    a = params.alpha
    om = kernel_mass(params.dim, a)
    mom = _Moments(u, 12)
    w = mom.w.ravel()
    us = u.evaluate(S)
    A = us[:, None] + w[None, :]
    D = us[:, None] - w[None, :]

    def pair(c):
        # q and -q together, integrated in xi, averaged over sigma
        f = lambda x: c ** (-a) * np.expm1(-a * np.log1p(-x / c))
        g = lambda x: c ** (-a) * np.expm1(-a * np.log1p(x / c))
        return ((f(A) - f(D)) + (g(D) - g(A))).mean(axis=1) / a

    total = np.zeros(len(S))
    for q in range(1, Q + 1):
        total += pair(q / abs(tau))
    Y = (Q + 0.5) / abs(tau)
    b = 1.0 - a
    h = lambda x: Y ** b * np.expm1(b * np.log1p(x / Y))
    tail = abs(tau) / (a * b) * ((h(-D) - h(-A)) + (h(A) - h(D))).mean(axis=1)
    fQ = pair(Q / abs(tau))
    fQ1 = pair((Q + 1) / abs(tau))
    bound = om * float(np.max(np.abs(fQ1 - fQ))) / 12.0
    return om * (total + tail), bound


def lattice_correction(u: SymmetricField, tau: float, params: ModelParams,
                       spec: QuadratureSpec = QuadratureSpec(), points=None,
                       method: str = "series") -> OperatorResult:
    """Contribution ``Hl(tau, u)`` of the translated copies ``q/tau``, ``q != 0``.

    ``method="series"`` sums over all ``q`` exactly through Hurwitz zeta
    values; ``method="direct"`` truncates at ``spec.q_cutoff`` and adds an
    integral estimate of the remainder.  ``info["tail_bound"]`` bounds the
    neglected part of the chosen method.  Terms oscillating in ``s`` with
    size ``~exp(-1/tau)`` are not represented.
    """
    _check_field(u, params)
    _check_positive(u)
    M = spec.grid_size(u.kmax)
    S, fold, gs = _points(params.dim, M, points)
    if tau == 0:
        return OperatorResult(np.zeros(len(S)), S, fold, gs, {"tail_bound": 0.0})
    if method == "series":
        vals, last, nmax = _lattice_series(u, params, S, tau)
        info = {"tail_bound": last * 1e-2, "terms": nmax, "method": method}
    elif method == "direct":
        vals, bound = _lattice_direct(u, params, S, tau, spec.q_cutoff)
        info = {"tail_bound": bound, "q_cutoff": spec.q_cutoff, "method": method}
    else:
        raise ValueError(f"unknown method {method!r}")
    return OperatorResult(vals, S, fold, gs, info)


def lattice_correction_basis(u: SymmetricField, tau: float, params: ModelParams,
                             classes, S):
    """``D_u Hl(tau, u)[sym_k]`` at ``S`` for each class, shape (n_s, n_classes)."""
    out = np.zeros((len(S), len(classes)))
    if tau == 0:
        return out
    kj = max(max(k) for k in classes)
    nmax = _lattice_terms(float(np.abs(u.synthesize(4 * max(u.kmax, 1) + 4)).max()), tau)
    mom = _Moments(u, nmax, kextra=kj)
    us = u.evaluate(S)
    d = params.dim
    vgrids = [SymmetricField.mode(d, kj, k).synthesize(mom.M) for k in classes]
    vs = np.stack([SymmetricField.mode(d, kj, k).evaluate(S) for k in classes], axis=1)
    for n in range(1, nmax + 1, 2):
        c = _lattice_coeff(params, tau, n)
        for j in range(1, n + 1, 2):
            cj = c * math.comb(n, j) * 2.0
            if n - j > 0:
                out += (cj * (n - j) * us ** (n - j - 1) * mom.mean(j))[:, None] * vs
            mv = np.array([mom.mean(j - 1, vg) for vg in vgrids])
            out += cj * j * us[:, None] ** (n - j) * mv[None, :]
    return out


def linearized_lattice_correction(u: SymmetricField, v: SymmetricField, tau: float,
                                  params: ModelParams, spec: QuadratureSpec = QuadratureSpec(),
                                  points=None) -> OperatorResult:
    """Directional derivative ``D_u Hl(tau, u)[v]``."""
    classes = [k for k, c in v.coeffs.items() if c != 0.0] or [(0,) * params.dim]
    M = spec.grid_size(max(u.kmax, v.kmax))
    S, fold, gs = _points(params.dim, M, points)
    J = lattice_correction_basis(u, tau, params, classes, S)
    return OperatorResult(J @ np.array([v.get(k) for k in classes]), S, fold, gs, {})


def nmc_multiperiodic(u: SymmetricField, tau: float, params: ModelParams,
                      spec: QuadratureSpec = QuadratureSpec(), points=None) -> OperatorResult:
    """Curvature of the periodic stack: ``H(u) - 2 Hl(tau, u)``."""
    h = nmc_graph(u, params, spec, points)
    lc = lattice_correction(u, tau, params, spec, h.points)
    info = dict(h.info)
    info["lattice_tail_bound"] = lc.info.get("tail_bound", 0.0)
    return OperatorResult(h.values - 2.0 * lc.values, h.points, h.fold, h.grid_size, info)
