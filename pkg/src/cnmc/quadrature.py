"""Quadrature rules and closed-form integrals over ``R^d``.

The singular integrals in this package are all written in polar form
``t = r theta`` with ``theta`` on (half of) the unit sphere.  Radial rules
use a power-graded first panel ``r = a x^g`` followed by composite
Gauss-Legendre panels; the angular rule for ``d = 2`` is the periodic
trapezoid rule, which is spectrally accurate for smooth periodic data.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import special

TAIL_MODES = ("none", "constant_u_asymptotic", "fourier")
GRADING_CAP = 24


@dataclass(frozen=True)
class QuadratureSpec:
    """Discretisation parameters shared by every operator.

    Attributes
    ----------
    trunc_radius : float
        Radius ``R`` separating the near field (integrated by quadrature)
        from the far field (integrated through a moment expansion).
    radial_nodes : int
        Total number of radial nodes on ``[0, R]``.
    angular_nodes : int or None
        Nodes on the half circle at ``r = R`` (only used when ``d = 2``);
        scaled linearly with ``r``.  ``None`` picks a value from ``kmax``.
    grading_exponent : float or None
        Exponent ``g`` of the first radial panel.  ``None`` uses
        ``min(ceil(6 / (1 - alpha)), 24)`` so the ``r^-alpha`` singularity is
        mapped to a smooth integrand.
    first_panel : float
        Length of the graded panel.
    panel_nodes : int
        Gauss-Legendre nodes per uniform panel.
    tail_mode : {"none", "constant_u_asymptotic", "fourier"}
        Far-field treatment.  ``"none"`` drops ``|t| > R``; the other two
        use the moment expansion, with ``"fourier"`` keeping the
        non-constant Fourier content of the first ``far_fourier_terms``
        moments and ``"constant_u_asymptotic"`` only their means.
    far_terms, far_fourier_terms : int
        Number of moment terms kept in the far-field expansion.
    q_cutoff : int
        Truncation of the lattice sum over ``q``.
    z_nodes : int
        Gauss-Legendre nodes for explicit ``z`` integrals.
    epsilon : float
        Regularisation parameter (0 for the principal-value operator).
    grid : int or None
        Grid size per periodic coordinate; ``None`` picks ``2 kmax + 8``
        rounded to an even number.
    """

    trunc_radius: float = 16.0
    radial_nodes: int = 320
    angular_nodes: int | None = None
    grading_exponent: float | None = None
    first_panel: float = 0.5
    panel_nodes: int = 10
    tail_mode: str = "fourier"
    far_terms: int = 10
    far_fourier_terms: int = 3
    q_cutoff: int = 64
    z_nodes: int = 32
    epsilon: float = 0.0
    grid: int | None = None

    def __post_init__(self):
        if self.tail_mode not in TAIL_MODES:
            raise ValueError(f"tail_mode must be one of {TAIL_MODES}")
        if self.trunc_radius <= self.first_panel:
            raise ValueError("trunc_radius must exceed first_panel")
        if self.radial_nodes < 16:
            raise ValueError("radial_nodes must be >= 16")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.q_cutoff < 1 or self.z_nodes < 1:
            raise ValueError("q_cutoff and z_nodes must be positive")
        if self.grid is not None and (self.grid < 2 or self.grid % 2):
            raise ValueError("grid must be an even integer")

    def with_(self, **kw) -> "QuadratureSpec":
        return replace(self, **kw)

    def refined(self, factor: int = 2) -> "QuadratureSpec":
        """Same spec with node counts multiplied by ``factor``."""
        return replace(
            self,
            radial_nodes=self.radial_nodes * factor,
            angular_nodes=None if self.angular_nodes is None else self.angular_nodes * factor,
            q_cutoff=self.q_cutoff * factor,
            z_nodes=self.z_nodes * factor,
            far_terms=self.far_terms + 2,
        )

    def grid_size(self, kmax: int) -> int:
        if self.grid is not None:
            if self.grid < 2 * kmax + 2:
                raise ValueError(f"grid={self.grid} too small for kmax={kmax}")
            return self.grid
        return 2 * kmax + 8

    def angular_count(self, kmax: int) -> int:
        if self.angular_nodes is not None:
            return int(self.angular_nodes)
        # the symmetrised integrand has angular bandwidth ~ |m| r
        return int(math.ceil(1.6 * max(kmax, 1) * self.trunc_radius)) + 24

    def to_dict(self) -> dict:
        return asdict(self)


# ------------------------------------------------------------ 1-D rules ----

@lru_cache(maxsize=64)
def _gl(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def gauss_legendre(a: float, b: float, n: int):
    """Gauss-Legendre nodes and weights on ``[a, b]``."""
    x, w = _gl(int(n))
    h = 0.5 * (b - a)
    return a + h * (x + 1.0), h * w


def gauss_legendre_z(f, a: float, b: float, n: int) -> float:
    """``int_a^b f(z) dz`` by an ``n``-point Gauss-Legendre rule.

    ``f`` must accept an array of nodes.
    """
    z, w = gauss_legendre(a, b, n)
    return float(np.dot(w, f(z)))


def graded_exponent(alpha: float, g: float | None) -> float:
    if g is not None:
        return float(g)
    # capped so that r = a x^g stays far from underflow for alpha near 1
    return float(min(math.ceil(6.0 / (1.0 - alpha)), GRADING_CAP))


def radial_rule(R: float, n_total: int, alpha: float, g: float | None = None,
                first_panel: float = 0.5, panel_nodes: int = 10):
    """Nodes and weights for ``int_0^R f(r) dr``.

    ``f`` may behave like ``r^-alpha`` times a smooth function of ``r^2``
    near the origin.  The first panel ``[0, a]`` uses ``r = a x^g`` with a
    Gauss-Legendre rule in ``x``; ``[a, R]`` is split into equal panels.
    """
    g = graded_exponent(alpha, g)
    a = min(first_panel, R)
    n0 = max(24, n_total // 8)
    x, wx = gauss_legendre(0.0, 1.0, n0)
    r0 = a * x ** g
    w0 = a * g * x ** (g - 1.0) * wx
    n_rest = max(1, (n_total - n0) // panel_nodes)
    edges = np.linspace(a, R, n_rest + 1)
    rs, ws = [r0], [w0]
    for lo, hi in zip(edges[:-1], edges[1:]):
        r, w = gauss_legendre(lo, hi, panel_nodes)
        rs.append(r)
        ws.append(w)
    return np.concatenate(rs), np.concatenate(ws)


def half_sphere_rule(dim: int, n_theta: int):
    """Directions covering half of ``S^{dim-1}`` with weights.

    Summing ``w * (F(r theta) + F(-r theta))`` over the directions gives the
    full spherical integral of ``F``.
    """
    if dim == 1:
        return np.ones((1, 1)), np.ones(1)
    if dim == 2:
        th = math.pi * (np.arange(n_theta) + 0.5) / n_theta
        return np.stack([np.cos(th), np.sin(th)], axis=-1), np.full(n_theta, math.pi / n_theta)
    raise NotImplementedError("only dim 1 and 2 are supported")


def near_field_nodes(dim: int, alpha: float, spec: QuadratureSpec, kmax: int):
    """Polar nodes on the half ball ``|t| < R``.

    Returns
    -------
    t : ndarray (n, dim)
        Nodes; the opposite nodes ``-t`` are implied.
    r : ndarray (n,)
    w : ndarray (n,)
        Weights including the Jacobian ``r^(dim-1)``.
    """
    r, wr = radial_rule(spec.trunc_radius, spec.radial_nodes, alpha,
                        spec.grading_exponent, spec.first_panel, spec.panel_nodes)
    if dim == 1:
        return r[:, None].copy(), r.copy(), wr.copy()
    n_R = spec.angular_count(kmax)
    ts, rr, ww = [], [], []
    for ri, wi in zip(r, wr):
        n = max(16, int(math.ceil(n_R * ri / spec.trunc_radius)))
        th, wt = half_sphere_rule(dim, n)
        ts.append(ri * th)
        rr.append(np.full(n, ri))
        ww.append(wi * ri ** (dim - 1) * wt)
    return np.concatenate(ts), np.concatenate(rr), np.concatenate(ww)


def integrate_radial_graded(f, dim: int, alpha: float, spec: QuadratureSpec,
                            tail=None, kmax: int = 8) -> float:
    """``PV int_{R^dim} f(t) dt`` on ``|t| < R`` plus an optional tail.

    Parameters
    ----------
    f : callable
        Vectorised integrand taking an ``(n, dim)`` array.  Odd parts
        cancel because ``t`` and ``-t`` are paired.
    tail : callable or float, optional
        Contribution of ``|t| > R``; called with ``R`` if callable.
    """
    t, _, w = near_field_nodes(dim, alpha, spec, kmax)
    val = float(np.dot(w, f(t) + f(-t)))
    if spec.tail_mode != "none" and tail is not None:
        val += tail(spec.trunc_radius) if callable(tail) else float(tail)
    return val


# ------------------------------------------------------- closed forms ----

def sphere_area(dim: int) -> float:
    """Area of ``S^{dim-1}`` (2 for ``dim = 1``)."""
    return 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)


def kernel_mass(dim: int, alpha: float, c: float = 1.0) -> float:
    """``int_{R^dim} (|t|^2 + c^2)^-(dim+1+alpha)/2 dt``."""
    p = 0.5 * (dim + 1 + alpha)
    return (math.pi ** (dim / 2) * math.gamma(0.5 * (1 + alpha)) / math.gamma(p)
            * c ** (-(1.0 + alpha)))


def radial_power_tail(dim: int, R: float, expo: float, eps: float = 0.0) -> float:
    """``int_{|t| > R} (|t|^2 + eps^2)^-expo dt`` in ``R^dim``."""
    a = expo - 0.5 * dim
    if a <= 0:
        raise ValueError("integral diverges")
    S = sphere_area(dim)
    if eps == 0.0:
        return S * R ** (-2 * a) / (2 * a)
    x = eps * eps / (R * R + eps * eps)
    if x < 0.5:
        # B_x(a, b) = x^a / a 2F1(a, 1 - b; a + 1; x) avoids eps^-2a overflow
        return (S * 0.5 * (R * R + eps * eps) ** (-a) / a
                * special.hyp2f1(a, 1.0 - 0.5 * dim, a + 1.0, x))
    return S * 0.5 * eps ** (-2 * a) * special.betainc(a, 0.5 * dim, x) * special.beta(a, 0.5 * dim)


def tail_constant_u(lam: float, alpha: float, N: int, T: float) -> float:
    """``int_{|t| > T} 2 lam (|t|^2 + 4 lam^2)^-(N+alpha)/2 dt``."""
    return 2.0 * lam * radial_power_tail(N - 1, T, 0.5 * (N + alpha), 2.0 * lam)


_LAG = np.polynomial.laguerre.laggauss(80)


def radial_fourier_tail(mu, dim: int, R: float, expo: float, eps: float = 0.0) -> np.ndarray:
    """``int_{|t| > R} cos(m . t) (|t|^2 + eps^2)^-expo dt`` for ``|m| = mu``.

    For ``mu > 0`` the radial integral is moved onto the ray ``R + i y``
    where the integrand decays like ``exp(-mu y)``, and evaluated by
    Gauss-Laguerre quadrature.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    out = np.empty_like(mu)
    zero = mu == 0
    if zero.any():
        out[zero] = radial_power_tail(dim, R, expo, eps)
    m = mu[~zero]
    if m.size:
        x, w = _LAG
        y = x[None, :] / m[:, None]
        z = R + 1j * y
        g = (z * z + eps * eps) ** (-expo)
        if dim == 1:
            vals = 2.0 * (1j * np.exp(1j * m * R) / m * (w * g).sum(axis=1)).real
        elif dim == 2:
            h = special.hankel1e(0, m[:, None] * z)
            vals = 2.0 * math.pi * (1j * np.exp(1j * m * R) / m
                                    * (w * h * g * z).sum(axis=1)).real
        else:
            raise NotImplementedError("only dim 1 and 2 are supported")
        out[~zero] = vals
    return out
