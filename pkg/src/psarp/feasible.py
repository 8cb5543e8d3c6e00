"""Kernel-centered convex feasible sets: whole space and boxes."""
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError

DYKSTRA_TOL = 1e-10
DYKSTRA_MAXITER = 5000


class FeasibleSet:
    n: int

    def project(self, y):
        raise NotImplementedError

    def contains(self, y, tol=0.0):
        raise NotImplementedError

    def to_json(self):
        raise NotImplementedError


@dataclass(frozen=True)
class WholeSpace(FeasibleSet):
    n: int

    def project(self, y):
        return np.array(y, dtype=float)

    def contains(self, y, tol=0.0):
        return True

    def bounds(self):
        return np.full(self.n, -np.inf), np.full(self.n, np.inf)

    def to_json(self):
        return {"kind": "whole"}


@dataclass(frozen=True, eq=False)
class Box(FeasibleSet):
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).copy()
        hi = np.asarray(self.hi, dtype=float).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DomainError("box bounds must be 1-d arrays of equal length")
        both = np.isfinite(lo) & np.isfinite(hi)
        if np.any(lo[both] >= hi[both]) or np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise DomainError("box is empty or degenerate (need lo < hi)")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n(self):
        return self.lo.size

    def project(self, y):
        return np.clip(np.asarray(y, dtype=float), self.lo, self.hi)

    def contains(self, y, tol=0.0):
        y = np.asarray(y, dtype=float)
        return bool(np.all(y >= self.lo - tol) and np.all(y <= self.hi + tol))

    def bounds(self):
        return self.lo, self.hi

    def to_json(self):
        def enc(v):
            return [None if not np.isfinite(t) else float(t) for t in v]
        return {"kind": "box", "lo": enc(self.lo), "hi": enc(self.hi)}


def from_json(doc, n):
    kind = doc.get("kind", "whole")
    if kind == "whole":
        return WholeSpace(n)
    if kind == "box":
        lo = [-np.inf if t is None else t for t in doc["lo"]]
        hi = [np.inf if t is None else t for t in doc["hi"]]
        return Box(np.asarray(lo, float), np.asarray(hi, float))
    raise DomainError(f"unknown feasible set kind {kind!r}")


def project(fset, y):
    """Euclidean projection of ``y`` onto the set."""
    return fset.project(y)


def _ball_subspace(d, Q, delta):
    # ball is centred at the origin, which lies in range(Q): composing the
    # two projections gives the projection onto their intersection
    if Q is not None:
        d = Q @ (Q.T @ d)
    nd = np.linalg.norm(d)
    if nd > delta:
        d = d * (delta / nd)
    return d


def project_intersection(fset, Q, x, delta, y, tol=DYKSTRA_TOL, maxiter=DYKSTRA_MAXITER):
    """Project ``y`` onto ``{x + d : x + d in F, ||d|| <= delta, d in range(Q)}``.

    Dykstra's algorithm between the shifted set ``F - x`` and the
    (ball intersect subspace) set. ``Q`` is a matrix with orthonormal
    columns or ``None`` for the whole space.

    Raises
    ------
    ConvergenceError
        After ``maxiter`` sweeps; carries the best iterate.
    """
    if delta <= 0:
        raise DomainError("radius must be positive")
    x = np.asarray(x, dtype=float)
    d = np.asarray(y, dtype=float) - x
    if isinstance(fset, WholeSpace):
        return x + _ball_subspace(d, Q, delta)
    lo, hi = fset.bounds()
    lo_d, hi_d = lo - x, hi - x
    p = np.zeros_like(d)
    q = np.zeros_like(d)
    b = d
    for _ in range(maxiter):
        a = np.clip(b + p, lo_d, hi_d)
        p = b + p - a
        b_new = _ball_subspace(a + q, Q, delta)
        q = a + q - b_new
        change = np.linalg.norm(b_new - b)
        gap = np.linalg.norm(a - b_new)
        b = b_new
        if change < tol and gap < tol:
            return x + b
    raise ConvergenceError("Dykstra projection did not converge", best=x + b, residual=gap)


def _is_selector(U):
    nz = np.abs(U) > 0
    return bool(np.all(nz.sum(axis=1) == 1) and np.allclose(np.abs(U[nz]), 1.0))


def is_kernel_centered(fset, hard, samples=10_000, seed=0):
    """Check ``U_i^+ b_i + P_ker(U_i)[F] subset F`` for every hard element.

    Exact for boxes with coordinate-selector rows (also requiring
    ``b_i in U_i F``); Monte-Carlo over points of F otherwise.
    """
    if isinstance(fset, WholeSpace):
        return True
    lo, hi = fset.bounds()
    rng = np.random.default_rng(seed)
    for el in hard:
        U, b = el.U, el.b
        target = U.T @ b
        if _is_selector(U):
            cols = np.flatnonzero(np.any(U != 0, axis=0))
            if np.any(target[cols] < lo[cols]) or np.any(target[cols] > hi[cols]):
                return False
            continue
        flo = np.where(np.isfinite(lo), lo, np.minimum(hi, 0.0) - 10.0)
        fhi = np.where(np.isfinite(hi), hi, np.maximum(lo, 0.0) + 10.0)
        Z = rng.uniform(flo, fhi, size=(samples, lo.size))
        shifted = Z - (Z @ U.T) @ U + target
        if np.any(shifted < lo - 1e-12) or np.any(shifted > hi + 1e-12):
            return False
    return True
