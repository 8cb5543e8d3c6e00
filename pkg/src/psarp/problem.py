"""Partially-separable problems with smooth and non-Lipschitz group elements.

The objective is

    f(x) = sum_{i in N} f_i(U_i x) + lam * sum_{i in H} ||U_i x - b_i||**a_i

over a convex feasible set F. Smooth elements are derivative oracles on
their own (small) range space; hard elements are fixed by ``(U, b, a)``.
"""
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from . import feasible as fs
from .errors import DomainError, InvalidProblemError, RankDeficiencyError, SingularityError
from .tensor_calc import SINGULAR_TOL

NORM_TOL = 1e-10
SPAN_TOL = 1e-10


# --------------------------------------------------------------------------
# local Taylor expansions of smooth elements


class DenseTaylor:
    """Degree-p Taylor polynomial ``T(s)`` of an element, from dense tensors.

    ``tensors[j-1]`` is the j-th derivative at the expansion point (``None``
    for identically zero orders).
    """

    def __init__(self, value, tensors):
        self.f0 = float(value)
        self.tensors = list(tensors)

    @property
    def degree(self):
        return len(self.tensors)

    def value(self, s):
        return self.f0 + self.increment(s)

    def increment(self, s):
        """``T(s) - T(0)``."""
        out = 0.0
        for j, D in enumerate(self.tensors, start=1):
            if D is None:
                continue
            t = D
            for _ in range(j):
                t = t @ s
            out += t / factorial(j)
        return float(out)

    def grad(self, s):
        g = np.zeros(s.size)
        for j, D in enumerate(self.tensors, start=1):
            if D is None:
                continue
            t = D
            for _ in range(j - 1):
                t = t @ s
            g += t / factorial(j - 1)
        return g

    def hess(self, s):
        Hm = np.zeros((s.size, s.size))
        for j, D in enumerate(self.tensors, start=1):
            if D is None or j < 2:
                continue
            t = D
            for _ in range(j - 2):
                t = t @ s
            Hm += t / factorial(j - 2)
        return Hm


class QuadraticTaylor:
    """Exact expansion of ``1/2 ||H y - B||^2`` (all orders above 2 vanish)."""

    def __init__(self, elem, y, order):
        self.H = elem.H
        self.res = elem.H @ y - elem.B
        self.f0 = 0.5 * float(self.res @ self.res)
        self.g = self.H.T @ self.res
        self.order = order

    def value(self, s):
        Hs = self.H @ s
        out = self.f0 + float(self.g @ s)
        if self.order >= 2:
            out += 0.5 * float(Hs @ Hs)
        return out

    def increment(self, s):
        """``T(s) - T(0)`` without forming ``f0``."""
        Hs = self.H @ s
        out = float(self.res @ Hs)
        if self.order >= 2:
            out += 0.5 * float(Hs @ Hs)
        return out

    def grad(self, s):
        if self.order >= 2:
            return self.g + self.H.T @ (self.H @ s)
        return self.g.copy()

    def hess(self, s):
        if self.order >= 2:
            return self.H.T @ self.H
        return np.zeros((s.size, s.size))


class QuarticTaylor:
    """Expansion of the separable well ``c/4 sum (y_k^2 - 1)^2``."""

    def __init__(self, elem, y, order):
        c = elem.c
        self.order = order
        self.f0 = 0.25 * c * float(np.sum((y * y - 1.0) ** 2))
        self.d1 = c * (y ** 3 - y)
        self.d2 = c * (3.0 * y * y - 1.0)
        self.d3 = 6.0 * c * y
        self.d4 = 6.0 * c

    def _w(self):
        w = [self.d1, self.d2, self.d3, self.d4]
        return [w[j] if j < self.order else 0.0 for j in range(4)]

    def increment(self, s):
        w = self._w()
        return float(np.sum(w[0] * s + w[1] * s ** 2 / 2 + w[2] * s ** 3 / 6 + w[3] * s ** 4 / 24))

    def value(self, s):
        return self.f0 + self.increment(s)

    def grad(self, s):
        w = self._w()
        return w[0] + w[1] * s + w[2] * s ** 2 / 2 + w[3] * s ** 3 / 6

    def hess(self, s):
        w = self._w()
        return np.diag(np.broadcast_to(w[1] + w[2] * s + w[3] * s ** 2 / 2, s.shape).astype(float))


# --------------------------------------------------------------------------
# elements


class SmoothElement:
    """A smooth element ``f_i(U_i x)``.

    Subclasses implement ``value`` and ``derivative`` (multilinear form on
    ``j`` directions). ``lipschitz`` is an optional known Lipschitz constant
    of the p-th derivative, keyed by ``p``; it is used for diagnostics only.
    """

    oracle = "callback"
    degree = None  # polynomial degree if known

    def __init__(self, U):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        self.U = U

    @property
    def size(self):
        return self.U.shape[0]

    def value(self, y):
        raise NotImplementedError

    def derivative(self, y, j, dirs):
        raise NotImplementedError

    def lipschitz(self, p, box=None):
        return None

    def tensor(self, y, j):
        """Dense j-th derivative, assembled from the multilinear oracle."""
        if self.degree is not None and j > self.degree:
            return None
        m = self.size
        eye = np.eye(m)
        T = np.empty((m,) * j)
        for idx in np.ndindex(*T.shape):
            T[idx] = self.derivative(y, j, [eye[k] for k in idx])
        return T

    def taylor(self, y, order):
        return DenseTaylor(self.value(y), [self.tensor(y, j) for j in range(1, order + 1)])

    def decrease(self, y, s):
        """``f(y) - f(y + s)``."""
        return self.value(y) - self.value(y + s)

    def derivative_norms(self, y, order):
        """Norms of the derivatives of orders 1..order at ``y``.

        Spectral norm for order 2; Frobenius (an upper bound of the induced
        norm) above.
        """
        out = []
        for j in range(1, order + 1):
            T = self.tensor(y, j)
            if T is None:
                out.append(0.0)
            elif j == 1:
                out.append(float(np.linalg.norm(T)))
            elif j == 2:
                out.append(float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (T + T.T))))))
            else:
                out.append(float(np.linalg.norm(T.ravel())))
        return out

    def to_json(self):
        raise DomainError(f"element oracle {self.oracle!r} is not serializable")


class QuadraticElement(SmoothElement):
    """``f(y) = 1/2 ||H y - B||^2``."""

    oracle = "quadratic"
    degree = 2

    def __init__(self, U, H, B):
        super().__init__(U)
        self.H = np.atleast_2d(np.asarray(H, dtype=float))
        self.B = np.asarray(B, dtype=float).reshape(-1)
        if self.H.shape[1] != self.size or self.H.shape[0] != self.B.size:
            raise DomainError("quadratic element dimensions do not match")

    def value(self, y):
        r = self.H @ y - self.B
        return 0.5 * float(r @ r)

    def derivative(self, y, j, dirs):
        if j == 1:
            return float((self.H @ y - self.B) @ (self.H @ dirs[0]))
        if j == 2:
            return float((self.H @ dirs[0]) @ (self.H @ dirs[1]))
        return 0.0

    def tensor(self, y, j):
        if j == 1:
            return self.H.T @ (self.H @ y - self.B)
        if j == 2:
            return self.H.T @ self.H
        return None

    def taylor(self, y, order):
        return QuadraticTaylor(self, y, order)

    def decrease(self, y, s):
        r = self.H @ y - self.B
        Hs = self.H @ s
        return -(float(r @ Hs) + 0.5 * float(Hs @ Hs))

    def lipschitz(self, p, box=None):
        if p >= 2:
            return 0.0
        return float(np.linalg.norm(self.H, 2) ** 2)

    def derivative_norms(self, y, order):
        out = [float(np.linalg.norm(self.H.T @ (self.H @ y - self.B)))]
        if order >= 2:
            out.append(float(np.linalg.norm(self.H, 2) ** 2))
        out += [0.0] * (order - 2)
        return out[:order]

    def to_json(self):
        return {"kind": "smooth", "U": self.U.tolist(), "oracle": "quadratic",
                "params": {"H": self.H.tolist(), "B": self.B.tolist()}}


class QuarticWellElement(SmoothElement):
    """Separable double well ``f(y) = c/4 sum_k (y_k^2 - 1)^2``."""

    oracle = "quartic"
    degree = 4

    def __init__(self, U, c=1.0):
        super().__init__(U)
        self.c = float(c)

    def value(self, y):
        return 0.25 * self.c * float(np.sum((y * y - 1.0) ** 2))

    def derivative(self, y, j, dirs):
        w = [self.c * (y ** 3 - y), self.c * (3 * y * y - 1), 6 * self.c * y,
             np.full(y.shape, 6 * self.c)]
        if j > 4:
            return 0.0
        prod = np.ones_like(y)
        for d in dirs:
            prod = prod * d
        return float(w[j - 1] @ prod)

    def tensor(self, y, j):
        if j > 4:
            return None
        w = [self.c * (y ** 3 - y), self.c * (3 * y * y - 1), 6 * self.c * y,
             np.full(y.shape, 6 * self.c)][j - 1]
        T = np.zeros((y.size,) * j)
        idx = np.arange(y.size)
        T[(idx,) * j] = w
        return T

    def taylor(self, y, order):
        return QuarticTaylor(self, y, order)

    def lipschitz(self, p, box=None):
        if p >= 4:
            return 0.0
        if p == 3:
            return 6.0 * self.c
        if box is None:
            return None
        # bound of the (p+1)-th derivative over the box image
        m = float(np.max(np.abs(box)))
        return self.c * (6.0 * m if p == 2 else abs(3.0 * m * m - 1.0) + 1.0)

    def derivative_norms(self, y, order):
        w = [np.linalg.norm(self.c * (y ** 3 - y)), np.max(np.abs(self.c * (3 * y * y - 1))),
             np.max(np.abs(6 * self.c * y)), 6 * self.c]
        return [float(w[j]) if j < 4 else 0.0 for j in range(order)]

    def to_json(self):
        return {"kind": "smooth", "U": self.U.tolist(), "oracle": "quartic",
                "params": {"c": self.c}}


class CallbackElement(SmoothElement):
    """User element given by ``value(y)`` and ``derivative(y, j, dirs)`` callables."""

    def __init__(self, U, value, derivative, degree=None, lipschitz=None):
        super().__init__(U)
        self._value = value
        self._derivative = derivative
        self.degree = degree
        self._lip = lipschitz or {}

    def value(self, y):
        return float(self._value(y))

    def derivative(self, y, j, dirs):
        return float(self._derivative(y, j, dirs))

    def lipschitz(self, p, box=None):
        return self._lip.get(p)


@dataclass(eq=False)
class HardElement:
    """``||U x - b||**a`` with orthonormal rows in ``U``."""

    U: np.ndarray
    b: np.ndarray
    a: float = 0.5

    def __post_init__(self):
        self.U = np.atleast_2d(np.asarray(self.U, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.b.size != self.U.shape[0]:
            raise DomainError("hard element: b length must equal the number of rows of U")

    @property
    def size(self):
        return self.U.shape[0]

    def residual(self, x):
        return self.U @ x - self.b

    def to_json(self):
        return {"kind": "hard", "U": self.U.tolist(), "b": self.b.tolist(), "a": self.a}


# --------------------------------------------------------------------------
# problem


@dataclass
class EvalCounter:
    """Per-solve evaluation counts (objective values, derivative sweeps)."""

    f: int = 0
    der: int = 0


@dataclass(eq=False)
class Problem:
    n: int
    smooth: list
    hard: list = field(default_factory=list)
    feasible: fs.FeasibleSet = None
    lam: float = 1.0
    x0: np.ndarray = None

    def __post_init__(self):
        if self.feasible is None:
            self.feasible = fs.WholeSpace(self.n)
        if self.x0 is not None:
            self.x0 = np.asarray(self.x0, dtype=float)

    # structure ----------------------------------------------------------

    def residuals(self, x):
        return [el.residual(x) for el in self.hard]

    def residual_norms(self, x):
        return np.array([np.linalg.norm(el.residual(x)) for el in self.hard])

    def smooth_stack(self):
        return np.vstack([el.U for el in self.smooth]) if self.smooth else np.zeros((0, self.n))

    def hard_stack(self, idx=None):
        idx = range(len(self.hard)) if idx is None else idx
        rows = [self.hard[i].U for i in idx]
        return np.vstack(rows) if rows else np.zeros((0, self.n))

    def exponents(self):
        return sorted({el.a for el in self.hard})

    # evaluation ---------------------------------------------------------

    def evaluate_f(self, x, hard=None, counter=None):
        """Objective restricted to all smooth elements plus the hard set ``hard``.

        ``hard=None`` means every hard element (full objective, where zero
        residuals are allowed). An explicit working set must not contain a
        zero residual.
        """
        x = np.asarray(x, dtype=float)
        total = sum(el.value(el.U @ x) for el in self.smooth)
        idx = range(len(self.hard)) if hard is None else hard
        for i in idx:
            el = self.hard[i]
            nr = float(np.linalg.norm(el.residual(x)))
            if hard is not None and nr < SINGULAR_TOL:
                raise SingularityError(f"hard element {i} has zero residual in the working set")
            total += self.lam * nr ** el.a
        if counter is not None:
            counter.f += 1
        return float(total)

    # assumptions --------------------------------------------------------

    def validate(self):
        """Return a list of violated structural assumptions (empty if none)."""
        out = []
        n = self.n
        if self.feasible.n != n:
            out.append(f"feasible set: dimension {self.feasible.n} != n={n}")
        if not self.lam > 0:
            out.append(f"lambda: must be positive, got {self.lam}")
        for i, el in enumerate(self.smooth):
            if el.U.shape[1] != n:
                out.append(f"smooth[{i}]: U has {el.U.shape[1]} columns, expected {n}")
                continue
            sv = np.linalg.svd(el.U, compute_uv=False)
            if abs(sv[0] - 1.0) > NORM_TOL:
                out.append(f"smooth[{i}]: ||U|| = {sv[0]:.12g}, expected 1")
            if sv[-1] <= SPAN_TOL or el.U.shape[0] > n:
                out.append(f"smooth[{i}]: U is not of full row rank")
        for i, el in enumerate(self.hard):
            if el.U.shape[1] != n:
                out.append(f"hard[{i}]: U has {el.U.shape[1]} columns, expected {n}")
                continue
            if not 0.0 < el.a < 1.0:
                out.append(f"hard[{i}]: exponent a={el.a} not in (0, 1)")
            if np.max(np.abs(el.U @ el.U.T - np.eye(el.size))) > NORM_TOL:
                out.append(f"hard[{i}]: rows of U are not orthonormal")
        for i in range(len(self.hard)):
            for j in range(i + 1, len(self.hard)):
                Ui, Uj = self.hard[i].U, self.hard[j].U
                if Ui.shape[1] == Uj.shape[1] == n and np.max(np.abs(Ui @ Uj.T)) > NORM_TOL:
                    out.append(f"hard[{i}], hard[{j}]: ranges of U^T are not orthogonal")
        if not self.smooth:
            out.append("smooth: no smooth elements, their ranges cannot span R^n")
        elif all(el.U.shape[1] == n for el in self.smooth):
            sv = np.linalg.svd(self.smooth_stack(), compute_uv=False)
            if sv.size < n or sv[min(n, sv.size) - 1] <= SPAN_TOL:
                out.append("smooth: ranges of U_i^T do not span R^n")
        if isinstance(self.feasible, fs.Box) and all(el.U.shape[1] == n for el in self.hard):
            for i, el in enumerate(self.hard):
                if not _b_in_UF(el, self.feasible):
                    out.append(f"hard[{i}]: b is not in U F")
            if not fs.is_kernel_centered(self.feasible, self.hard):
                out.append("feasible: set is not kernel-centered")
        if self.x0 is not None and not self.feasible.contains(self.x0, 1e-12):
            out.append("x0: starting point is infeasible")
        return out

    def check(self):
        bad = self.validate()
        if bad:
            raise InvalidProblemError(bad)
        return self

    def sigma_equiv_constant(self):
        """Certified ``c > 0`` with ``c ||s|| <= sum_{i in N} ||U_i s||``.

        Uses ``sigma_min(stack) / sqrt(|N|)``, which also gives
        ``c^v ||s||^v <= sum ||U_i s||^v`` for every ``v >= 1``.
        """
        if not self.smooth:
            raise RankDeficiencyError("no smooth elements")
        sv = np.linalg.svd(self.smooth_stack(), compute_uv=False)
        if sv.size < self.n or sv[self.n - 1] <= SPAN_TOL:
            raise RankDeficiencyError("smooth element ranges do not span R^n")
        return float(sv[self.n - 1] / np.sqrt(len(self.smooth)))

    # serialization ------------------------------------------------------

    def to_json(self):
        doc = {"n": self.n,
               "elements": [el.to_json() for el in self.smooth] + [el.to_json() for el in self.hard],
               "feasible": self.feasible.to_json(),
               "lambda": self.lam}
        if self.x0 is not None:
            doc["x0"] = self.x0.tolist()
        return doc

    @classmethod
    def from_json(cls, doc):
        n = int(doc["n"])
        smooth, hard = [], []
        for el in doc["elements"]:
            kind = el.get("kind")
            if kind == "hard":
                hard.append(HardElement(el["U"], el.get("b", [0.0] * len(el["U"])), el.get("a", 0.5)))
            elif kind == "smooth":
                oracle = el.get("oracle", "quadratic")
                params = el.get("params", {})
                if oracle == "quadratic":
                    smooth.append(QuadraticElement(el["U"], params["H"], params["B"]))
                elif oracle == "quartic":
                    smooth.append(QuarticWellElement(el["U"], params.get("c", 1.0)))
                else:
                    raise DomainError(f"unknown smooth oracle {oracle!r}")
            else:
                raise DomainError(f"unknown element kind {kind!r}")
        feas = fs.from_json(doc.get("feasible", {"kind": "whole"}), n)
        return cls(n, smooth, hard, feas, float(doc.get("lambda", 1.0)), doc.get("x0"))


def _b_in_UF(el, box):
    lo, hi = box.bounds()
    if fs._is_selector(el.U):
        target = el.U.T @ el.b
        cols = np.flatnonzero(np.any(el.U != 0, axis=0))
        return bool(np.all(target[cols] >= lo[cols]) and np.all(target[cols] <= hi[cols]))
    from scipy.optimize import lsq_linear

    res = lsq_linear(el.U, el.b, bounds=(lo, hi))
    return bool(np.linalg.norm(el.U @ res.x - el.b) <= 1e-8)

