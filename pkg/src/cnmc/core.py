"""Model parameters, symmetric cosine fields and their I/O.

A field on the torus ``T^d = [-pi, pi]^d`` (``d = N - 1``) is stored through
its coefficients on the permutation-symmetrised cosine basis

    sym_k(s) = mean over permutations pi of prod_i cos(k_pi(i) s_i),

indexed by a non-decreasing multi-index ``k``.  Every such field is even in
each coordinate, ``2 pi``-periodic and invariant under permutation of the
coordinates.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Ambient dimension ``N`` and fractional order ``alpha``."""

    N: int
    alpha: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N!r}")
        if not (0.0 < float(self.alpha) < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def dim(self) -> int:
        """Dimension of the periodic variable ``s``."""
        return self.N - 1

    @property
    def p(self) -> float:
        """Half the kernel exponent, ``(N + alpha) / 2``."""
        return 0.5 * (self.N + self.alpha)

    def to_dict(self) -> dict:
        return {"N": self.N, "alpha": self.alpha}


# ---------------------------------------------------------------- basis ----

def mode_classes(dim: int, kmax: int) -> list[tuple[int, ...]]:
    """Sorted multi-indices with entries in ``0..kmax``.

    Ordered by ``|k|^2`` and then lexicographically, so the constant mode
    comes first and the first-harmonic class ``(0, ..., 0, 1)`` second.
    """
    out = [k for k in itertools.combinations_with_replacement(range(kmax + 1), dim)]
    out.sort(key=lambda k: (sum(x * x for x in k), k))
    return out


def unit_mode(dim: int) -> tuple[int, ...]:
    """Class of the first harmonic ``sum_i cos(s_i)``."""
    return (0,) * (dim - 1) + (1,)


def orbit(k: Iterable[int]) -> list[tuple[int, ...]]:
    """Distinct permutations of ``k``."""
    return sorted(set(itertools.permutations(tuple(k))))


def mode_norm2(k: Iterable[int]) -> float:
    """``||e_k||^2`` over ``[-pi, pi]^d`` for ``e_k = prod cos(k_i s_i)``.

    Equals ``pi^d`` only when every entry is non-zero; each zero entry
    contributes ``2 pi`` instead of ``pi``.
    """
    return float(np.prod([2 * math.pi if ki == 0 else math.pi for ki in k]))


def _canon(k) -> tuple[int, ...]:
    return tuple(sorted(int(x) for x in k))


# ----------------------------------------------------------------- grid ----

def axis_nodes(M: int) -> np.ndarray:
    """Uniform periodic nodes ``s_j = -pi + 2 pi j / M``."""
    return -math.pi + 2.0 * math.pi * np.arange(M) / M


def grid_points(dim: int, M: int) -> np.ndarray:
    """All ``M^dim`` grid points, C-ordered, shape ``(M**dim, dim)``."""
    x = axis_nodes(M)
    mesh = np.meshgrid(*([x] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _check_grid(M: int):
    if M < 2 or M % 2:
        raise ValueError(f"grid size must be an even integer >= 2, got {M}")


def fundamental_points(dim: int, M: int):
    """Grid points in the fundamental cell ``0 <= s_1 <= ... <= s_d <= pi``.

    Returns
    -------
    points : ndarray, shape (n_f, dim)
    fold : ndarray of int, shape (M**dim,)
        For each full-grid point (C order) the index of its representative.
    """
    _check_grid(M)
    half = M // 2
    # folded axis index 0..half  <->  s = 2 pi i / M
    idx = list(itertools.combinations_with_replacement(range(half + 1), dim))
    lookup = {k: n for n, k in enumerate(idx)}
    pts = 2.0 * math.pi * np.array(idx, dtype=float) / M
    j = np.arange(M)
    fold_axis = np.abs(j - half)  # s_j = 2 pi (j - half) / M
    fold = np.empty(M ** dim, dtype=np.int64)
    for n, jj in enumerate(itertools.product(range(M), repeat=dim)):
        fold[n] = lookup[tuple(sorted(int(fold_axis[x]) for x in jj))]
    return pts, fold


# ---------------------------------------------------------------- field ----

class SymmetricField:
    """Truncated symmetric cosine expansion.

    Parameters
    ----------
    dim : int
        Number of periodic variables (``N - 1``).
    kmax : int
        Largest frequency per coordinate.
    coeffs : mapping, optional
        ``{k: value}`` with ``k`` any ordering of a multi-index; stored
        under its sorted form.
    """

    def __init__(self, dim: int, kmax: int, coeffs: Mapping | None = None):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if kmax < 0:
            raise ValueError("kmax must be >= 0")
        self.dim = int(dim)
        self.kmax = int(kmax)
        self.coeffs: dict[tuple[int, ...], float] = {}
        for k, v in (coeffs or {}).items():
            kk = _canon(k)
            if len(kk) != self.dim:
                raise ValueError(f"multi-index {k} has wrong length for dim={dim}")
            if max(kk) > self.kmax or min(kk) < 0:
                raise ValueError(f"multi-index {k} outside 0..{kmax}")
            self.coeffs[kk] = self.coeffs.get(kk, 0.0) + float(v)

    # -- constructors
    @classmethod
    def constant(cls, dim: int, kmax: int, value: float) -> "SymmetricField":
        return cls(dim, kmax, {(0,) * dim: value})

    @classmethod
    def mode(cls, dim: int, kmax: int, k, value: float = 1.0) -> "SymmetricField":
        return cls(dim, kmax, {k: value})

    @classmethod
    def from_vector(cls, dim, kmax, classes, vec) -> "SymmetricField":
        return cls(dim, kmax, {k: float(x) for k, x in zip(classes, vec)})

    # -- basic algebra
    def classes(self) -> list[tuple[int, ...]]:
        return mode_classes(self.dim, self.kmax)

    def get(self, k) -> float:
        return self.coeffs.get(_canon(k), 0.0)

    def to_vector(self, classes=None) -> np.ndarray:
        classes = self.classes() if classes is None else classes
        return np.array([self.coeffs.get(k, 0.0) for k in classes])

    def copy(self) -> "SymmetricField":
        return SymmetricField(self.dim, self.kmax, dict(self.coeffs))

    def _binary(self, other, sign):
        if isinstance(other, (int, float)):
            other = SymmetricField.constant(self.dim, 0, other)
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        out = SymmetricField(self.dim, max(self.kmax, other.kmax), self.coeffs)
        for k, v in other.coeffs.items():
            out.coeffs[k] = out.coeffs.get(k, 0.0) + sign * v
        return out

    def __add__(self, other):
        return self._binary(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, -1.0)

    def __mul__(self, c: float):
        return SymmetricField(self.dim, self.kmax,
                              {k: c * v for k, v in self.coeffs.items()})

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        nz = {k: v for k, v in self.coeffs.items() if v != 0.0}
        return f"SymmetricField(dim={self.dim}, kmax={self.kmax}, coeffs={nz})"

    # -- dense tensor of e_k coefficients
    def dense(self, kmax: int | None = None) -> np.ndarray:
        """Coefficients on the full tensor basis ``prod cos(k_i s_i)``.

        Each class coefficient is spread evenly over its orbit.
        """
        kmax = self.kmax if kmax is None else kmax
        T = np.zeros((kmax + 1,) * self.dim)
        for k, v in self.coeffs.items():
            if v == 0.0:
                continue
            if max(k) > kmax:
                raise ValueError(f"mode {k} exceeds kmax={kmax}")
            ob = orbit(k)
            for kk in ob:
                T[kk] += v / len(ob)
        return T

    def mean(self) -> float:
        return self.get((0,) * self.dim)

    def sup_coeff(self, exclude=()) -> float:
        ex = {_canon(k) for k in exclude}
        vals = [abs(v) for k, v in self.coeffs.items() if k not in ex]
        return max(vals, default=0.0)

    # -- evaluation
    def evaluate(self, points) -> np.ndarray:
        """Values at ``points`` of shape ``(n, dim)`` (or ``(dim,)``)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[-1] != self.dim:
            raise ValueError("points have the wrong dimension")
        T = self.dense()
        ks = np.arange(self.kmax + 1)
        C = [np.cos(np.outer(ks, pts[:, i])) for i in range(self.dim)]
        return _contract(T, C)

    def gradient(self, points) -> np.ndarray:
        """Gradient at ``points``, shape ``(n, dim)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        T = self.dense()
        ks = np.arange(self.kmax + 1)
        C = [np.cos(np.outer(ks, pts[:, i])) for i in range(self.dim)]
        S = [-ks[:, None] * np.sin(np.outer(ks, pts[:, i])) for i in range(self.dim)]
        out = np.empty_like(pts)
        for j in range(self.dim):
            tabs = [S[i] if i == j else C[i] for i in range(self.dim)]
            out[:, j] = _contract(T, tabs)
        return out

    def synthesize(self, M: int) -> np.ndarray:
        """Values on the uniform grid, array of shape ``(M,) * dim``."""
        _check_grid(M)
        T = self.dense()
        ks = np.arange(self.kmax + 1)
        C = np.cos(np.outer(ks, axis_nodes(M)))
        out = T
        for _ in range(self.dim):
            # contract leading axis, append grid axis at the end
            out = np.tensordot(out, C, axes=([0], [0]))
        return out

    @classmethod
    def analyze(cls, values, kmax: int) -> "SymmetricField":
        """Discrete projection of grid values onto the symmetric basis.

        The grid values are first averaged over sign flips and coordinate
        permutations.  Exact for symmetric trigonometric polynomials of
        degree ``<= kmax`` when ``M >= 2 kmax + 2``.
        """
        f = np.asarray(values, dtype=float)
        dim = f.ndim
        M = f.shape[0]
        _check_grid(M)
        if any(n != M for n in f.shape):
            raise ValueError("grid must have equal size along every axis")
        if 2 * kmax + 2 > M:
            raise ValueError(f"grid size {M} too small for kmax={kmax}")
        f = symmetrize_grid(f)
        ks = np.arange(kmax + 1)
        C = np.cos(np.outer(ks, axis_nodes(M))) / M
        F = f
        for _ in range(dim):
            F = np.tensordot(F, C, axes=([0], [1]))
        # F[k] = grid mean of f * e_k
        coeffs = {}
        for k in mode_classes(dim, kmax):
            # grid mean of e_k^2 is 2^-(number of nonzero entries)
            e2 = 0.5 ** sum(1 for x in k if x)
            coeffs[k] = F[k] * len(orbit(k)) / e2
        return cls(dim, kmax, coeffs)

    def truncate(self, kmax: int) -> "SymmetricField":
        return SymmetricField(self.dim, kmax,
                              {k: v for k, v in self.coeffs.items() if max(k) <= kmax})

    # -- JSON
    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "kmax": self.kmax,
            "coefficients": [{"k": list(k), "value": v}
                             for k, v in sorted(self.coeffs.items())],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SymmetricField":
        return cls(int(d["dim"]), int(d["kmax"]),
                   {tuple(c["k"]): c["value"] for c in d["coefficients"]})


def _contract(T: np.ndarray, tables) -> np.ndarray:
    """``sum_k T[k] prod_i tables[i][k_i, n]`` for every column ``n``."""
    out = np.einsum("...k,kn->...n", T, tables[-1])
    for tab in reversed(tables[:-1]):
        out = np.einsum("...kn,kn->...n", out, tab)
    return out


def symmetrize_grid(f: np.ndarray) -> np.ndarray:
    """Average grid values over coordinate sign flips and permutations."""
    f = np.asarray(f, dtype=float)
    M = f.shape[0]
    flip = (-np.arange(M)) % M  # s_j -> -s_j
    g = f
    for ax in range(f.ndim):
        g = 0.5 * (g + np.take(g, flip, axis=ax))
    perms = list(itertools.permutations(range(f.ndim)))
    return sum(np.transpose(g, p) for p in perms) / len(perms)


def inner_product(u: SymmetricField, v: SymmetricField) -> float:
    """``int_{[-pi,pi]^d} u v ds`` computed from the coefficients."""
    if u.dim != v.dim:
        raise ValueError("dimension mismatch")
    total = 0.0
    for k, a in u.coeffs.items():
        b = v.coeffs.get(k)
        if b:
            total += a * b * mode_norm2(k) / len(orbit(k))
    return total


def project_out(u: SymmetricField, k) -> SymmetricField:
    """Remove the component of ``u`` along the class ``k``."""
    out = u.copy()
    out.coeffs.pop(_canon(k), None)
    return out


# ------------------------------------------------------------------- I/O ----

def write_json(path, payload: Mapping):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=_json_default)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _json_default(obj):
    if isinstance(obj, SymmetricField):
        return obj.to_dict()
    if isinstance(obj, ModelParams):
        return obj.to_dict()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{x:.17g}" if isinstance(x, float) else x for x in r])


def write_grid_csv(path, values: np.ndarray):
    """Write grid values with one row per point: ``s_1..s_d, value``."""
    dim = values.ndim
    M = values.shape[0]
    pts = grid_points(dim, M)
    header = [f"s{i + 1}" for i in range(dim)] + ["value"]
    write_csv(path, header, [tuple(map(float, p)) + (float(v),)
                             for p, v in zip(pts, values.ravel())])
