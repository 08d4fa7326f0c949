"""Branches of periodic graphs with constant fractional mean curvature.

A profile ``w = lam + b (vbar + v)`` (``vbar = sym_(1,0,..)``, ``v`` without a
``vbar`` component) is sought such that

    Psi(tau, lam, phi) = lam^(1+alpha) [G(lam + phi) - G(lam)],
    G(u) = H(u) - 2 Hl(tau, u),

vanishes, with ``phi = b (vbar + v)``.  Newton works on ``f = Psi / b``,
whose ``b -> 0`` limit is ``lam^(1+alpha) DG(lam)[vbar + v]``.  Unknowns are
``lam`` and every retained coefficient of ``v`` except the ``vbar`` class;
equations are every retained coefficient of ``f``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import ModelParams, SymmetricField, mode_classes, unit_mode
from .nmc_operator import (OperatorResult, lattice_correction_basis,
                           linearized_nmc_basis, nmc_multiperiodic)
from .quadrature import QuadratureSpec
from .spectrum import find_lambda_star

log = logging.getLogger(__name__)

ARMIJO_C = 1e-4
MAX_HALVINGS = 8


class TrustRegionError(RuntimeError):
    """The iterate left the region where the reduced equation is posed."""


class SingularJacobianError(RuntimeError):
    pass


class NewtonFailure(RuntimeError):
    pass


@dataclass
class BranchPoint:
    """A (possibly unconverged) solution of the reduced equation."""

    tau: float
    b: float
    lam: float
    v: SymmetricField
    residual_norm: float = float("nan")
    cnmc_deviation: float = float("nan")
    newton_iters: int = 0
    converged: bool = False
    history: list = field(default_factory=list)

    def profile(self) -> SymmetricField:
        d = self.v.dim
        phi = self.v + SymmetricField.mode(d, self.v.kmax, unit_mode(d))
        return SymmetricField.constant(d, self.v.kmax, self.lam) + phi * self.b

    def to_dict(self) -> dict:
        return {
            "tau": self.tau, "b": self.b, "lambda": self.lam,
            "v": self.v.to_dict(),
            "residual_norm": self.residual_norm,
            "cnmc_deviation": self.cnmc_deviation,
            "newton_iters": self.newton_iters,
            "converged": self.converged,
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, d) -> "BranchPoint":
        return cls(float(d["tau"]), float(d["b"]), float(d["lambda"]),
                   SymmetricField.from_dict(d["v"]),
                   float(d.get("residual_norm", "nan")),
                   float(d.get("cnmc_deviation", "nan")),
                   int(d.get("newton_iters", 0)), bool(d.get("converged", False)),
                   list(d.get("history", [])))


class ReducedProblem:
    """The reduced equation at fixed ``tau`` for a given truncation.

    Parameters
    ----------
    params : ModelParams
    spec : QuadratureSpec
    kmax : int
        Highest retained mode per coordinate.
    lambda_star : float, optional
        Bifurcation value; computed from the dispersion relation if omitted.
    """

    def __init__(self, params: ModelParams, spec: QuadratureSpec = QuadratureSpec(),
                 kmax: int = 8, lambda_star: float | None = None):
        self.params = params
        self.spec = spec
        self.kmax = kmax
        self.dim = params.dim
        self.classes = mode_classes(self.dim, kmax)
        self.vbar = unit_mode(self.dim)
        self.i_vbar = self.classes.index(self.vbar)
        self.v_classes = [k for k in self.classes if k != self.vbar]
        self.lambda_star = (find_lambda_star(params.alpha, params.N)
                            if lambda_star is None else float(lambda_star))
        self.M = spec.grid_size(kmax)

    # -- helpers
    def _v(self, v) -> SymmetricField:
        if isinstance(v, SymmetricField):
            if v.dim != self.dim:
                raise ValueError("v has the wrong dimension")
            v = v.truncate(self.kmax) if v.kmax > self.kmax else SymmetricField(
                self.dim, self.kmax, dict(v.coeffs))
        elif v is None:
            v = SymmetricField(self.dim, self.kmax)
        else:
            v = SymmetricField.from_vector(self.dim, self.kmax, self.v_classes, v)
        c = dict(v.coeffs)
        c[self.vbar] = 0.0
        return SymmetricField(self.dim, self.kmax, c)

    def phi(self, b, v) -> SymmetricField:
        v = self._v(v)
        return (v + SymmetricField.mode(self.dim, self.kmax, self.vbar)) * b

    def profile(self, b, lam, v) -> SymmetricField:
        return SymmetricField.constant(self.dim, self.kmax, lam) + self.phi(b, v)

    def coeffs(self, values: np.ndarray, fold) -> np.ndarray:
        """Analyse fundamental-cell values (one or several columns)."""
        vals = np.asarray(values)
        cols = vals[:, None] if vals.ndim == 1 else vals
        out = np.empty((len(self.classes), cols.shape[1]))
        for j in range(cols.shape[1]):
            g = cols[fold, j].reshape((self.M,) * self.dim)
            f = SymmetricField.analyze(g, self.kmax)
            out[:, j] = [f.get(k) for k in self.classes]
        return out[:, 0] if vals.ndim == 1 else out

    def check_admissible(self, tau, b, lam, v):
        ls = self.lambda_star
        if not 0.75 * ls < lam < 1.25 * ls:
            raise TrustRegionError(f"lambda={lam:.6g} left (3/4, 5/4) lambda*")
        phi = self.phi(b, v).synthesize(4 * self.kmax + 4)
        if np.abs(phi).max() >= 0.25 * ls:
            raise TrustRegionError("|b (vbar + v)| reached lambda*/4")
        w = lam + phi
        if w.min() <= 0:
            raise TrustRegionError("profile is not positive")
        if tau and 2.0 * abs(tau) * np.abs(w).max() >= 1.0:
            raise TrustRegionError("lattice copies overlap")

    def _G(self, u, tau, points=None) -> OperatorResult:
        return nmc_multiperiodic(u, tau, self.params, self.spec, points)

    def _DG(self, u, tau, classes):
        J, _, S, fold, _ = linearized_nmc_basis(u, self.params, self.spec, classes)
        if tau:
            J = J - 2.0 * lattice_correction_basis(u, tau, self.params, classes, S)
        return J, S, fold

    # -- residual
    def residual_values(self, tau, b, lam, v, scaled=True):
        """Values of ``Psi`` (or ``Psi / b``) on the fundamental cell."""
        v = self._v(v)
        scale = lam ** (1.0 + self.params.alpha)
        lam_f = SymmetricField.constant(self.dim, self.kmax, lam)
        if b == 0.0:
            if not scaled:
                S, fold = self._grid()
                return np.zeros(len(S)), fold
            dirn = v + SymmetricField.mode(self.dim, self.kmax, self.vbar)
            classes = [k for k in self.classes if dirn.get(k) != 0.0]
            J, _, fold = self._DG(lam_f, tau, classes)
            return scale * (J @ np.array([dirn.get(k) for k in classes])), fold
        w = self.profile(b, lam, v)
        gw = self._G(w, tau)
        g0 = self._G(lam_f, tau, gw.points)
        diff = scale * (gw.values - g0.values)
        return (diff / b if scaled else diff), gw.fold

    def _grid(self):
        from .core import fundamental_points
        return fundamental_points(self.dim, self.M)

    def residual(self, tau, b, lam, v, scaled=True) -> np.ndarray:
        vals, fold = self.residual_values(tau, b, lam, v, scaled)
        return self.coeffs(vals, fold)

    def jacobian(self, tau, b, lam, v, h_lam: float | None = None) -> np.ndarray:
        """Jacobian of ``f = Psi / b`` with respect to ``(lam, v)``.

        ``v``-columns are exact linearisations; the ``lam`` column is a
        central difference with step ``1e-5 lambda*``.
        """
        v = self._v(v)
        h = 1e-5 * self.lambda_star if h_lam is None else h_lam
        scale = lam ** (1.0 + self.params.alpha)
        u = self.profile(b, lam, v)
        Jv, _, fold = self._DG(u, tau, self.v_classes)
        cols = [(self.residual(tau, b, lam + h, v) - self.residual(tau, b, lam - h, v)) / (2 * h)]
        Jc = self.coeffs(scale * Jv, fold)
        return np.column_stack(cols + [Jc[:, j] for j in range(Jc.shape[1])])

    # -- Newton
    def newton(self, tau, b, lam0, v0=None, tol=1e-8, max_iter=10) -> BranchPoint:
        """Damped Newton on ``f(lam, v) = 0``.

        Converged when the sup over the grid of ``f`` is below ``tol``.
        Raises :class:`NewtonFailure`, :class:`TrustRegionError` or
        :class:`SingularJacobianError`.
        """
        lam = float(lam0)
        v = self._v(v0)
        x = np.concatenate([[lam], v.to_vector(self.v_classes)])
        self.check_admissible(tau, b, lam, v)
        vals, fold = self.residual_values(tau, b, lam, v)
        F = self.coeffs(vals, fold)
        hist = []
        for it in range(max_iter + 1):
            rnorm = float(np.abs(vals).max())
            hist.append(rnorm)
            log.debug("tau=%g b=%g it=%d |f|=%.3e lam=%.12g", tau, b, it, rnorm, x[0])
            if rnorm < tol:
                return BranchPoint(tau, b, x[0], self._v(x[1:]), rnorm, newton_iters=it,
                                   converged=True, history=hist)
            if it == max_iter:
                break
            J = self.jacobian(tau, b, x[0], x[1:])
            cond = np.linalg.cond(J)
            if not np.isfinite(cond) or cond > 1e13:
                raise SingularJacobianError(f"Jacobian condition number {cond:.3e}")
            dx = np.linalg.solve(J, -F)
            f0 = np.linalg.norm(F)
            t = 1.0
            for _ in range(MAX_HALVINGS + 1):
                xn = x + t * dx
                self.check_admissible(tau, b, xn[0], xn[1:])
                vals_n, fold = self.residual_values(tau, b, xn[0], xn[1:])
                Fn = self.coeffs(vals_n, fold)
                if np.linalg.norm(Fn) <= (1.0 - ARMIJO_C * t) * f0:
                    break
                t *= 0.5
            else:
                raise NewtonFailure(f"line search failed at iteration {it}")
            x, F, vals = xn, Fn, vals_n
        raise NewtonFailure(f"no convergence in {max_iter} iterations (|f|={hist[-1]:.3e})")


# --------------------------------------------------------- functional API

def reduced_residual(tau, b, lam, v, params: ModelParams, spec: QuadratureSpec = QuadratureSpec(),
                     kmax: int = 8, scaled: bool = False) -> np.ndarray:
    """Mode coefficients of ``Psi`` (``scaled=False``) or ``Psi / b``."""
    return ReducedProblem(params, spec, kmax).residual(tau, b, lam, v, scaled)


def reduced_jacobian(tau, b, lam, v, params: ModelParams, spec: QuadratureSpec = QuadratureSpec(),
                     kmax: int = 8) -> np.ndarray:
    """Jacobian of ``Psi / b``; rows follow ``mode_classes``, columns are
    ``lam`` then the non-``vbar`` classes."""
    return ReducedProblem(params, spec, kmax).jacobian(tau, b, lam, v)


def newton_solve(tau, b, initial: BranchPoint | None, params: ModelParams,
                 spec: QuadratureSpec = QuadratureSpec(), kmax: int = 8,
                 tol: float = 1e-8, max_iter: int = 10,
                 problem: ReducedProblem | None = None) -> BranchPoint:
    pb = problem or ReducedProblem(params, spec, kmax)
    if initial is None:
        lam0, v0 = pb.lambda_star, None
    else:
        lam0, v0 = initial.lam, initial.v
    return pb.newton(tau, b, lam0, v0, tol, max_iter)


def continue_branch(tau, b_grid, params: ModelParams, spec: QuadratureSpec = QuadratureSpec(),
                    kmax: int = 8, tol: float = 1e-8, max_iter: int = 10,
                    verify_spec: QuadratureSpec | None = None):
    """Natural continuation in ``b`` at fixed ``tau``.

    Returns
    -------
    points : list of BranchPoint
        Converged points in grid order.
    status : dict
        ``attained_b`` (last converged amplitude) and ``error`` (message of
        the first failure, or ``None``).
    """
    pb = ReducedProblem(params, spec, kmax)
    pts: list[BranchPoint] = []
    prev = None
    err = None
    for b in b_grid:
        try:
            pt = newton_solve(tau, float(b), prev, params, spec, kmax, tol, max_iter, pb)
        except (NewtonFailure, TrustRegionError, SingularJacobianError, ValueError) as e:
            if not pts:
                raise
            err = f"b={b}: {e}"
            log.warning("continuation stopped: %s", err)
            break
        if verify_spec is not None:
            rep = verify_cnmc(pt, params, verify_spec, kmax)
            pt.cnmc_deviation = rep["cnmc_deviation"]
        pts.append(pt)
        prev = pt
    return pts, {"attained_b": pts[-1].b if pts else None, "error": err}


def verify_cnmc(point: BranchPoint, params: ModelParams, fine_spec: QuadratureSpec | None = None,
                kmax: int | None = None, threshold: float = 1e-7,
                grid: int | None = None) -> dict:
    """Recompute the curvature of the stacked surface and compare with the
    straight lamella at the same ``(tau, lam)``.

    The comparison grid is twice as fine as the solver grid unless ``grid``
    is given, so points between collocation nodes are sampled too.
    """
    spec = fine_spec or QuadratureSpec().refined(2)
    kmax = point.v.kmax if kmax is None else kmax
    w = point.profile()
    M = grid or 2 * QuadratureSpec().grid_size(kmax)
    spec = spec.with_(grid=M)
    hw = nmc_multiperiodic(w, point.tau, params, spec)
    lam_f = SymmetricField.constant(params.dim, w.kmax, point.lam)
    h0 = float(nmc_multiperiodic(lam_f, point.tau, params, spec, hw.points[:1]).values[0])
    dev = float(np.max(np.abs(hw.values - h0)))
    spread = float(np.ptp(hw.values))
    # reduced residual at the fine resolution
    pb = ReducedProblem(params, spec.with_(grid=None), kmax, lambda_star=point.lam)
    fine_res = float(np.abs(pb.residual_values(point.tau, point.b, point.lam, point.v)[0]).max()) \
        if point.b != 0 else 0.0
    rel = dev / abs(h0)
    return {
        "tau": point.tau, "b": point.b, "lambda": point.lam,
        "H_lamella": h0,
        "max_abs_deviation": dev,
        "relative_deviation": rel,
        "cnmc_deviation": spread,
        "fine_residual": fine_res,
        "threshold": threshold,
        "passed": bool(rel < threshold),
        "spec": spec.to_dict(),
    }
