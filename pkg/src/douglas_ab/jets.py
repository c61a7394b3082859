"""Truncated multivariate Taylor arithmetic and small dense linear algebra.

A :class:`Jet` stores the Taylor coefficients ``d^m f / m!`` of a scalar
function around a base point, for every multi-index ``m`` in a downward
closed set described by a :class:`JetSpace`.  Coefficient arrays may carry
trailing batch axes, so one jet can represent the same expansion at many
base points at once.

Every routine here also accepts plain floats and numpy arrays, which lets
geometric formulas be written once and evaluated either numerically or
with derivatives attached.
"""

from __future__ import annotations

import functools
import itertools
import math
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg, sparse

from .errors import DomainError, JetMismatchError, NotPositiveDefiniteError

__all__ = [
    "Jet",
    "JetSpace",
    "jet_space",
    "seed",
    "constant",
    "value_of",
    "is_jet",
    "sqrt",
    "exp",
    "log",
    "power",
    "cholesky",
    "solve_spd",
    "multi_index",
]


class JetSpace:
    """The set of tracked multi-indices and the product table between them.

    ``groups`` restricts the joint degree of selected variables, e.g.
    ``(((3, 4, 5), 1),)`` keeps at most first order in variables 3..5 while
    the others run up to ``order``.  Instances are interned through
    :func:`jet_space`; compare them with ``is``.
    """

    def __init__(self, nvars: int, order: int, groups: tuple = ()):
        if nvars < 0 or order < 0:
            raise ValueError("nvars and order must be non-negative")
        self.nvars = nvars
        self.order = order
        self.groups = groups

        indices = [
            m
            for m in itertools.product(range(order + 1), repeat=nvars)
            if self._admits(m)
        ]
        indices.sort(key=lambda m: (sum(m), tuple(-k for k in m)))
        self.indices = tuple(indices)
        self.size = len(indices)
        self.index = {m: k for k, m in enumerate(indices)}
        self.factorials = np.array(
            [math.prod(math.factorial(k) for k in m) for m in indices], dtype=float
        )

        rows, left, right = [], [], []
        for i, a in enumerate(indices):
            for j, b in enumerate(indices):
                k = self.index.get(tuple(p + q for p, q in zip(a, b)))
                if k is not None:
                    rows.append(k)
                    left.append(i)
                    right.append(j)
        self._rows = np.array(rows, dtype=np.intp)
        self._left = np.array(left, dtype=np.intp)
        self._right = np.array(right, dtype=np.intp)
        npairs = len(rows)
        self._reduce = sparse.csr_matrix(
            (np.ones(npairs), (np.array(rows, dtype=np.intp), np.arange(npairs))),
            shape=(self.size, npairs),
        )

    def _admits(self, m) -> bool:
        if sum(m) > self.order:
            return False
        return all(sum(m[v] for v in vars_) <= cap for vars_, cap in self.groups)

    def __repr__(self):
        return f"JetSpace(nvars={self.nvars}, order={self.order}, groups={self.groups})"

    def __reduce__(self):
        return (jet_space, (self.nvars, self.order, self.groups))

    def contains(self, m) -> bool:
        return m in self.index

    def derived(self, var: int) -> "JetSpace":
        """Space holding the partial derivative with respect to ``var``."""
        groups = tuple(
            (vars_, max(cap - 1, 0) if var in vars_ else cap) for vars_, cap in self.groups
        )
        return jet_space(self.nvars, max(self.order - 1, 0), groups)

    def multiply(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.ndim == 1 and b.ndim == 1:
            return np.bincount(self._rows, weights=a[self._left] * b[self._right], minlength=self.size)
        batch = np.broadcast_shapes(a.shape[1:], b.shape[1:])
        prod = _lift(a, batch)[self._left] * _lift(b, batch)[self._right]
        batch = prod.shape[1:]
        if not batch:
            return np.bincount(self._rows, weights=prod, minlength=self.size)
        out = self._reduce @ prod.reshape(prod.shape[0], -1)
        return np.asarray(out).reshape((self.size,) + batch)


def _lift(coef: np.ndarray, batch: tuple) -> np.ndarray:
    """Insert unit axes so ``coef``'s batch axes right-align with ``batch``."""
    pad = len(batch) - (coef.ndim - 1)
    if pad <= 0:
        return coef
    return coef.reshape(coef.shape[:1] + (1,) * pad + coef.shape[1:])


def _scale(coef: np.ndarray, factor) -> np.ndarray:
    if coef.ndim == 1 and np.ndim(factor) == 0:
        return coef * factor
    batch = np.broadcast_shapes(coef.shape[1:], np.shape(factor))
    return _lift(coef, batch) * factor


@functools.lru_cache(maxsize=None)
def jet_space(nvars: int, order: int, groups: tuple = ()) -> JetSpace:
    """Return the interned :class:`JetSpace` for these parameters."""
    groups = tuple((tuple(sorted(v)), int(c)) for v, c in groups)
    return _jet_space(nvars, order, groups)


@functools.lru_cache(maxsize=None)
def _jet_space(nvars, order, groups):
    return JetSpace(nvars, order, groups)


def multi_index(nvars: int, *vars_: int) -> tuple:
    """Multi-index with one unit per listed variable, e.g. ``(0, 0, 1)``."""
    m = [0] * nvars
    for v in vars_:
        m[v] += 1
    return tuple(m)


@functools.lru_cache(maxsize=None)
def _diff_map(space: JetSpace, var: int):
    target = space.derived(var)
    src, scale = [], []
    for m in target.indices:
        up = list(m)
        up[var] += 1
        src.append(space.index[tuple(up)])
        scale.append(up[var])
    return target, np.array(src, dtype=np.intp), np.array(scale, dtype=float)


@functools.lru_cache(maxsize=None)
def _project_map(source: JetSpace, target: JetSpace, var_map: tuple):
    src = []
    for m in target.indices:
        full = [0] * source.nvars
        for k, v in enumerate(var_map):
            full[v] = m[k]
        full = tuple(full)
        if full not in source.index:
            raise JetMismatchError(
                f"coefficient {m} of {target} is not tracked by {source}"
            )
        src.append(source.index[full])
    return np.array(src, dtype=np.intp)


class Jet:
    """Truncated Taylor expansion of a scalar, possibly batched."""

    __slots__ = ("space", "coef")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, space: JetSpace, coef):
        coef = np.asarray(coef, dtype=float)
        if coef.shape[:1] != (space.size,):
            raise ValueError(f"expected {space.size} coefficients, got shape {coef.shape}")
        self.space = space
        self.coef = coef

    @property
    def value(self):
        v = self.coef[0]
        return float(v) if v.ndim == 0 else v

    def coefficient(self, m) -> float | np.ndarray:
        """Taylor coefficient ``d^m f / m!``."""
        return self.coef[self.space.index[tuple(m)]]

    def derivative(self, m) -> float | np.ndarray:
        """Raw partial derivative ``d^m f`` at the base point."""
        k = self.space.index[tuple(m)]
        out = self.coef[k] * self.space.factorials[k]
        return float(out) if np.ndim(out) == 0 else out

    def diff(self, var: int) -> "Jet":
        """Partial derivative as a jet of one lower order."""
        target, src, scale = _diff_map(self.space, var)
        coef = self.coef[src] * scale.reshape((-1,) + (1,) * (self.coef.ndim - 1))
        return Jet(target, coef)

    def project(self, target: JetSpace, var_map: Sequence[int] | None = None) -> "Jet":
        """Restrict to ``target``; unmapped source variables are frozen at the base point."""
        if var_map is None:
            var_map = tuple(range(target.nvars))
        return Jet(target, self.coef[_project_map(self.space, target, tuple(var_map))])

    # -- arithmetic -----------------------------------------------------

    def _other(self, other):
        if isinstance(other, Jet):
            if other.space is not self.space:
                raise JetMismatchError(f"cannot combine {self.space} with {other.space}")
            return other
        return other

    def __neg__(self):
        return Jet(self.space, -self.coef)

    def __pos__(self):
        return self

    def __add__(self, other):
        other = self._other(other)
        if isinstance(other, Jet):
            if self.coef.ndim == 1 and other.coef.ndim == 1:
                return Jet(self.space, self.coef + other.coef)
            batch = np.broadcast_shapes(self.coef.shape[1:], other.coef.shape[1:])
            return Jet(self.space, _lift(self.coef, batch) + _lift(other.coef, batch))
        batch = np.broadcast_shapes(self.coef.shape[1:], np.shape(other))
        coef = np.broadcast_to(self.coef, (self.space.size,) + batch).copy()
        coef[0] += other
        return Jet(self.space, coef)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._other(other)
        if isinstance(other, Jet):
            return Jet(self.space, self.space.multiply(self.coef, other.coef))
        return Jet(self.space, _scale(self.coef, other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._other(other)
        if isinstance(other, Jet):
            return self * power(other, -1)
        return Jet(self.space, _scale(self.coef, 1.0 / np.asarray(other, dtype=float)))

    def __rtruediv__(self, other):
        return power(self, -1) * other

    def __pow__(self, exponent):
        if isinstance(exponent, Jet):
            return exp(log(self) * exponent)
        return power(self, exponent)

    def __bool__(self):
        raise TypeError("the truth value of a Jet is ambiguous; compare .value")

    def __repr__(self):
        return f"Jet(value={self.value!r}, order={self.space.order}, nvars={self.space.nvars})"


def is_jet(x) -> bool:
    return isinstance(x, Jet)


def value_of(x):
    """Base-point value of a jet, or ``x`` itself."""
    return x.value if isinstance(x, Jet) else x


def constant(space: JetSpace, value) -> Jet:
    value = np.asarray(value, dtype=float)
    coef = np.zeros((space.size,) + value.shape)
    coef[0] = value
    return Jet(space, coef)


def seed(space: JetSpace, values: Iterable, offset: int = 0) -> list[Jet]:
    """Independent variables ``values[k] + d_{offset+k}`` in ``space``."""
    out = []
    for k, v in enumerate(values):
        jet = constant(space, v)
        if space.order >= 1:
            m = multi_index(space.nvars, offset + k)
            if m in space.index:
                jet.coef[space.index[m]] = 1.0
        out.append(jet)
    return out


def _compose(x: Jet, taylor: Sequence) -> Jet:
    """``sum_k taylor[k] * (x - x0)**k`` truncated to the space order."""
    t = Jet(x.space, x.coef.copy())
    t.coef[0] = 0.0
    out = constant(x.space, np.broadcast_to(taylor[0], x.coef.shape[1:]))
    term = None
    for k in range(1, min(len(taylor), x.space.order + 1)):
        term = t if term is None else term * t
        out = out + term * taylor[k]
    return out


def _check_positive(x0, name):
    if np.any(np.asarray(x0) <= 0) or np.any(~np.isfinite(x0)):
        raise DomainError(f"{name} requires a strictly positive argument, got {x0!r}")


def power(x, c):
    """``x**c``; non-integer exponents need a positive base."""
    integral = float(c).is_integer()
    if not isinstance(x, Jet):
        if not integral:
            _check_positive(x, f"pow(., {c})")
        elif c < 0 and np.any(np.asarray(x) == 0):
            raise DomainError(f"pow(., {c}) of zero")
        return np.power(np.asarray(x, dtype=float), c) if np.ndim(x) else float(x) ** c
    x0 = x.coef[0]
    if integral and c >= 0:
        c = int(c)
        out = constant(x.space, np.ones_like(x0))
        base = x
        while c:
            if c & 1:
                out = out * base
            c >>= 1
            if c:
                base = base * base
        return out
    if integral:
        if np.any(x0 == 0):
            raise DomainError(f"division by a jet with zero value ({x0!r})")
    else:
        _check_positive(x0, f"pow(., {c})")
    taylor = []
    coeff = 1.0
    for k in range(x.space.order + 1):
        taylor.append(coeff * np.power(x0, c - k))
        coeff *= (c - k) / (k + 1)
    return _compose(x, taylor)


def sqrt(x):
    if not isinstance(x, Jet):
        _check_positive(x, "sqrt")
        return np.sqrt(x)
    return power(x, 0.5)


def exp(x):
    if not isinstance(x, Jet):
        return np.exp(x)
    e0 = np.exp(x.coef[0])
    return _compose(x, [e0 / math.factorial(k) for k in range(x.space.order + 1)])


def log(x):
    if not isinstance(x, Jet):
        _check_positive(x, "log")
        return np.log(x)
    x0 = x.coef[0]
    _check_positive(x0, "log")
    taylor = [np.log(x0)]
    for k in range(1, x.space.order + 1):
        taylor.append((-1.0) ** (k + 1) / (k * np.power(x0, k)))
    return _compose(x, taylor)


# -- linear algebra ------------------------------------------------------


def cholesky(m) -> list[list]:
    """Lower factor ``L`` with ``m = L L^T``; no pivoting.

    Entries may be floats, arrays or jets.  A non-positive pivot raises
    :class:`NotPositiveDefiniteError`.
    """
    n = len(m)
    low = [[0.0] * n for _ in range(n)]
    for j in range(n):
        d = m[j][j] - sum((low[j][k] * low[j][k] for k in range(j)), 0.0)
        d0 = value_of(d)
        if np.any(np.asarray(d0) <= 0) or np.any(~np.isfinite(d0)):
            raise NotPositiveDefiniteError(
                f"non-positive pivot {d0!r} at index {j}", pivot_index=j, pivot_value=d0
            )
        ljj = sqrt(d)
        low[j][j] = ljj
        inv = 1.0 / ljj
        for i in range(j + 1, n):
            off = m[i][j] - sum((low[i][k] * low[j][k] for k in range(j)), 0.0)
            low[i][j] = off * inv
    return low


def _pack(entries):
    if any(isinstance(e, Jet) for e in entries):
        return list(entries)
    return np.asarray(entries, dtype=float)


def solve_spd(m, rhs):
    """Solve ``m x = rhs`` for symmetric positive definite ``m``.

    ``m`` is an ``n x n`` nested sequence (or array) and ``rhs`` a vector;
    the result is a float array when no jets are involved, otherwise a list.
    """
    m = [list(row) for row in m]
    n = len(m)
    if n == 0 or any(len(row) != n for row in m):
        raise ValueError("solve_spd needs a square matrix")
    if len(rhs) != n:
        raise ValueError("right-hand side has the wrong length")
    if not _has_jets(m, rhs):
        return _cho_solve(np.asarray(m, dtype=float), np.asarray(rhs, dtype=float))
    return _pack(_substitute(cholesky(m), rhs))


def _substitute(low, rhs) -> list:
    """Forward and back substitution with a lower Cholesky factor."""
    n = len(low)
    z = [0.0] * n
    for i in range(n):
        z[i] = (rhs[i] - sum((low[i][k] * z[k] for k in range(i)), 0.0)) / low[i][i]
    x = [0.0] * n
    for i in reversed(range(n)):
        x[i] = (z[i] - sum((low[k][i] * x[k] for k in range(i + 1, n)), 0.0)) / low[i][i]
    return x


def _has_jets(m, rhs=()):
    return any(isinstance(e, Jet) for row in m for e in row) or any(isinstance(e, Jet) for e in rhs)


def _cho_solve(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        factor = linalg.cho_factor(m, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError):
        eig = np.linalg.eigvalsh(m) if np.all(np.isfinite(m)) else None
        raise NotPositiveDefiniteError("matrix is not positive definite", eigenvalues=eig) from None
    return linalg.cho_solve(factor, rhs)


def inverse_spd(m):
    """Inverse of a symmetric positive definite matrix via :func:`solve_spd`."""
    n = len(m)
    if not _has_jets(m):
        return _cho_solve(np.asarray(m, dtype=float), np.eye(n))
    low = cholesky([list(row) for row in m])
    cols = [_substitute(low, [1.0 if i == j else 0.0 for i in range(n)]) for j in range(n)]
    rows = [[cols[j][i] for j in range(n)] for i in range(n)]
    if any(isinstance(e, Jet) for row in rows for e in row):
        return rows
    return np.asarray(rows, dtype=float)
