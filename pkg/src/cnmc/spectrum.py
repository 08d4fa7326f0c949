"""Dispersion relation of the linearised operator at constant graphs.

For a constant profile ``lam`` the linearised curvature is diagonal in the
cosine basis::

    lam^(1+alpha) DH(lam)[e_k] = nu(lam |k|) e_k,
    nu(R) = 2 R^(1+alpha) (A - B(R)),

    A    = int (1 - cos t_1) |t|^-(N+alpha) dt
    B(R) = int (1 + cos t_1) (|t|^2 + 4 R^2)^-(N+alpha)/2 dt

over ``R^(N-1)``.  Both integrals have Gamma/Bessel closed forms; the
quadrature route exists to cross-check them.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, special

from .core import ModelParams, SymmetricField
from .quadrature import (QuadratureSpec, half_sphere_rule, kernel_mass,
                         radial_fourier_tail, radial_power_tail, radial_rule,
                         sphere_area)

METHODS = ("closed", "quadrature")
LAMBDA_BRACKET = (1e-3, 50.0)


def _check(alpha, N):
    ModelParams(N, alpha)  # validates


# ------------------------------------------------------------ closed forms

def _A_closed(alpha: float, N: int) -> float:
    d, s = N - 1, 0.5 * (1.0 + alpha)
    return (math.pi ** (d / 2) * math.gamma(1.0 - s)
            / (2.0 ** (2 * s) * s * math.gamma(d / 2 + s)))


def _cos_part_closed(c: float, alpha: float, N: int) -> float:
    """``int cos(t_1) (|t|^2 + c^2)^-(N+alpha)/2 dt``."""
    d, s = N - 1, 0.5 * (1.0 + alpha)
    p = 0.5 * (N + alpha)
    return 2.0 * math.pi ** (d / 2) / math.gamma(p) * (0.5 / c) ** s * special.kv(s, c)


# ------------------------------------------------------------- quadrature

def _quad_spec(spec):
    return spec if spec is not None else QuadratureSpec(trunc_radius=40.0, radial_nodes=1200)


def _polar(d, alpha, spec, sing):
    """Radial/angular nodes for ``int_{|t|<R} f(t) dt`` written as
    ``sum w f(r theta)`` with both ``theta`` and ``-theta`` implied."""
    R = spec.trunc_radius
    r, wr = radial_rule(R, spec.radial_nodes, sing, spec.grading_exponent,
                        spec.first_panel, spec.panel_nodes)
    n_th = spec.angular_nodes or int(math.ceil(1.6 * R)) + 24
    th, wt = half_sphere_rule(d, n_th)
    return r, wr, th[:, 0], wt


def _A_quad(alpha, N, spec):
    d = N - 1
    spec = _quad_spec(spec)
    R = spec.trunc_radius
    # integrand ~ r^(1-alpha) * r^(d-1) r^-(d+1) -> r^-alpha near 0
    r, wr, c1, wt = _polar(d, alpha, spec, alpha)
    x = r[:, None] * c1[None, :]
    f = 2.0 * np.sin(0.5 * x) ** 2 * r[:, None] ** (-(N + alpha) + d - 1)
    near = 2.0 * np.sum(wr[:, None] * wt[None, :] * f)
    far = (radial_power_tail(d, R, 0.5 * (N + alpha))
           - radial_fourier_tail(1.0, d, R, 0.5 * (N + alpha))[0])
    return float(near + far)


def _B_quad(R_, alpha, N, spec):
    d = N - 1
    spec = _quad_spec(spec)
    R = spec.trunc_radius
    p = 0.5 * (N + alpha)
    c = 2.0 * R_
    r, wr, c1, wt = _polar(d, alpha, spec, 0.0)
    f = np.cos(r[:, None] * c1[None, :]) * ((r * r + c * c) ** (-p) * r ** (d - 1))[:, None]
    cos_part = 2.0 * np.sum(wr[:, None] * wt[None, :] * f)
    cos_part += radial_fourier_tail(1.0, d, R, p, c)[0]
    # the "1" part is exact (control variate)
    return float(kernel_mass(d, alpha, c) + cos_part)


# ---------------------------------------------------------------- public

def dispersion_A(alpha: float, N: int, spec: QuadratureSpec | None = None,
                 method: str = "closed") -> float:
    """``int_{R^(N-1)} (1 - cos t_1) |t|^-(N+alpha) dt``."""
    _check(alpha, N)
    if method == "closed":
        return _A_closed(alpha, N)
    if method == "quadrature":
        return _A_quad(alpha, N, spec)
    raise ValueError(f"method must be one of {METHODS}")


def dispersion_B(R: float, alpha: float, N: int, spec: QuadratureSpec | None = None,
                 method: str = "closed") -> float:
    """``int_{R^(N-1)} (1 + cos t_1) (|t|^2 + 4 R^2)^-(N+alpha)/2 dt``."""
    _check(alpha, N)
    if not R > 0:
        raise ValueError("R must be positive")
    if method == "closed":
        c = 2.0 * R
        return kernel_mass(N - 1, alpha, c) + _cos_part_closed(c, alpha, N)
    if method == "quadrature":
        return _B_quad(R, alpha, N, spec)
    raise ValueError(f"method must be one of {METHODS}")


def nu_zero_limit(alpha: float, N: int, method: str = "closed",
                  spec: QuadratureSpec | None = None) -> float:
    """``lim_{R -> 0} nu(R) = -4 int (|t|^2 + 4)^-(N+alpha)/2 dt``."""
    _check(alpha, N)
    if method == "closed":
        return -4.0 * kernel_mass(N - 1, alpha, 2.0)
    if method == "quadrature":
        spec = _quad_spec(spec)
        d, p = N - 1, 0.5 * (N + alpha)
        r, wr = radial_rule(spec.trunc_radius, spec.radial_nodes, 0.0,
                            spec.grading_exponent, spec.first_panel, spec.panel_nodes)
        near = sphere_area(d) * np.dot(wr, r ** (d - 1) * (r * r + 4.0) ** (-p))
        return float(-4.0 * (near + radial_power_tail(d, spec.trunc_radius, p, 2.0)))
    raise ValueError(f"method must be one of {METHODS}")


@dataclass
class DispersionTable:
    """``A``, ``nu0``, ``lambda*`` and optional samples of ``nu``."""

    alpha: float
    N: int
    A: float
    nu_zero: float
    lambda_star: float = float("nan")
    bracket: tuple = ()
    samples: list = field(default_factory=list)
    method: str = "closed"
    resolutions: dict = field(default_factory=dict)

    def nu(self, R, spec=None):
        return nu(R, self, spec)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bracket"] = list(self.bracket)
        d["samples"] = [list(map(float, s)) for s in self.samples]
        return d


def build_table(alpha: float, N: int, method: str = "closed",
                spec: QuadratureSpec | None = None, R_grid=None,
                tol: float = 1e-12) -> DispersionTable:
    tab = DispersionTable(alpha, N, dispersion_A(alpha, N, spec, method),
                          nu_zero_limit(alpha, N), method=method)
    lam, br = find_lambda_star(alpha, N, tol, table=tab, spec=spec, return_bracket=True)
    tab.lambda_star, tab.bracket = lam, br
    if R_grid is not None:
        tab.samples = [(float(R), nu(R, tab, spec)) for R in R_grid]
    return tab


def nu(R, table: DispersionTable, spec: QuadratureSpec | None = None):
    """``nu(R) = 2 R^(1+alpha) (A - B(R))``; ``R`` may be an array."""
    a, N = table.alpha, table.N
    Rs = np.atleast_1d(np.asarray(R, dtype=float))
    if np.any(Rs <= 0):
        raise ValueError("R must be positive")
    if table.method == "closed":
        c = 2.0 * Rs
        p = 0.5 * (N + a)
        d, s = N - 1, 0.5 * (1.0 + a)
        cos = 2.0 * math.pi ** (d / 2) / math.gamma(p) * (0.5 / c) ** s * special.kv(s, c)
        # R^(1+a) * one is a constant; keep it exact for small R
        out = 2.0 * (Rs ** (1.0 + a) * (table.A - cos)
                     - math.pi ** (d / 2) * math.gamma(s) / math.gamma(p) * 2.0 ** (-(1.0 + a)))
    else:
        out = np.array([2.0 * r ** (1.0 + a) * (table.A - dispersion_B(r, a, N, spec, "quadrature"))
                        for r in Rs])
    return float(out[0]) if np.ndim(R) == 0 else out


def find_lambda_star(alpha: float, N: int, tol: float = 1e-12, *,
                     table: DispersionTable | None = None,
                     spec: QuadratureSpec | None = None,
                     bracket=LAMBDA_BRACKET, return_bracket: bool = False):
    """Unique positive root of ``nu``.

    Bisection on ``bracket`` (grown if needed) until the bracket is 1e-3
    wide relative, then Brent's method on the narrowed bracket.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if table is None:
        table = DispersionTable(alpha, N, dispersion_A(alpha, N, spec), nu_zero_limit(alpha, N))
    f = lambda R: nu(R, table, spec)
    lo, hi = bracket
    flo, fhi = f(lo), f(hi)
    for _ in range(40):
        if flo < 0 < fhi:
            break
        if flo >= 0:
            lo *= 0.1
            flo = f(lo)
        if fhi <= 0:
            hi *= 2.0
            fhi = f(hi)
    else:
        raise RuntimeError(f"could not bracket the root of nu: nu({lo})={flo}, nu({hi})={fhi}")
    while hi - lo > 1e-3 * hi:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    root = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    if abs(f(root)) > tol:
        raise RuntimeError(f"|nu(lambda*)| = {abs(f(root)):.3e} exceeds tol")
    return (root, (lo, hi)) if return_bracket else root


def eigencheck(lam: float, k, params: ModelParams, spec: QuadratureSpec = QuadratureSpec(),
               table: DispersionTable | None = None) -> dict:
    """Compare ``DH(lam)[sym_k]`` with ``lam^-(1+alpha) nu(lam |k|) sym_k``.

    Returns
    -------
    dict
        ``error`` (sup over the grid), ``eigenvalue`` (the least-squares
        multiplier scaled by ``lam^(1+alpha)``) and ``predicted``
        (``nu(lam |k|)``).
    """
    from .nmc_operator import linearized_nmc_basis

    k = tuple(sorted(abs(int(x)) for x in k))
    if len(k) != params.dim or not any(k):
        raise ValueError("k must be a non-zero multi-index of length N-1")
    if table is None:
        table = DispersionTable(params.alpha, params.N, dispersion_A(params.alpha, params.N),
                                nu_zero_limit(params.alpha, params.N))
    kmax = max(k)
    u = SymmetricField.constant(params.dim, kmax, lam)
    J, _, S, _, _ = linearized_nmc_basis(u, params, spec, classes=[k])
    ek = SymmetricField.mode(params.dim, kmax, k).evaluate(S)
    scale = lam ** (1.0 + params.alpha)
    pred = nu(lam * math.sqrt(sum(x * x for x in k)), table)
    col = J[:, 0]
    return {
        "k": list(k),
        "lambda": lam,
        "error": float(np.max(np.abs(col - pred / scale * ek))),
        "eigenvalue": float(scale * np.dot(col, ek) / np.dot(ek, ek)),
        "predicted": float(pred),
    }
