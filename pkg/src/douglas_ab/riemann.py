"""Riemannian data: a_ij(x), Christoffel symbols, b_{i|j} and its r/s split."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import jets
from .errors import DegenerateFitError

__all__ = [
    "RiemannianMetric",
    "OneForm",
    "BetaDecomposition",
    "Condition03Fit",
    "metric_matrix",
    "christoffel",
    "alpha_spray",
    "covariant_derivative",
    "decompose_beta",
    "fit_condition03",
    "fit_decomposition",
]


def _always(x) -> bool:
    return True


@dataclass(frozen=True)
class RiemannianMetric:
    """``components(x)`` returns the nested ``n x n`` list ``a_ij(x)``.

    The callable must be written with operators and the elementary
    functions of :mod:`douglas_ab.jets` so that it also accepts jets.
    """

    dim: int
    components: Callable[[Sequence], list]
    admissible: Callable[[np.ndarray], bool] = _always
    name: str = "alpha"

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dimension must be at least 2")


@dataclass(frozen=True)
class OneForm:
    """``components(x)`` returns the list ``b_i(x)``; jet-compatible."""

    components: Callable[[Sequence], list]
    name: str = "beta"


def _as_point(x, n):
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"expected a point of dimension {n}, got shape {x.shape}")
    return x


def metric_matrix(metric: RiemannianMetric, x) -> np.ndarray:
    x = _as_point(x, metric.dim)
    return np.asarray(metric.components(list(x)), dtype=float)


def _first_jets(fn, x, n):
    """Values and first partials of ``fn`` evaluated on order-1 jets of x."""
    space = jets.jet_space(n, 1)
    out = np.asarray(fn(jets.seed(space, x)), dtype=object)
    values = np.vectorize(jets.value_of, otypes=[float])(out)
    grads = np.empty(out.shape + (n,))
    for idx in np.ndindex(out.shape):
        e = out[idx]
        for k in range(n):
            grads[idx + (k,)] = e.derivative(jets.multi_index(n, k)) if jets.is_jet(e) else 0.0
    return values, grads


def _metric_data(metric: RiemannianMetric, x):
    x = _as_point(x, metric.dim)
    a, da = _first_jets(metric.components, x, metric.dim)
    a_inv = jets.inverse_spd(a)
    return a, da, a_inv


def _christoffel_from(da, a_inv):
    # da[i, j, k] = d_k a_ij
    lowered = 0.5 * (
        np.einsum("lkj->ljk", da) + np.einsum("jlk->ljk", da) - np.einsum("jkl->ljk", da)
    )
    return np.einsum("il,ljk->ijk", a_inv, lowered)


def christoffel(metric: RiemannianMetric, x) -> np.ndarray:
    """``gamma[i, j, k]`` = Christoffel symbol of the second kind."""
    _, da, a_inv = _metric_data(metric, x)
    return _christoffel_from(da, a_inv)


def alpha_spray(metric: RiemannianMetric, x, y) -> np.ndarray:
    """Geodesic coefficients ``1/2 gamma^i_jk y^j y^k`` of the Riemannian metric."""
    y = np.asarray(y, dtype=float)
    return 0.5 * np.einsum("ijk,j,k->i", christoffel(metric, x), y, y)


def covariant_derivative(metric: RiemannianMetric, form: OneForm, x) -> np.ndarray:
    """``out[i, j] = b_{i|j} = d_j b_i - b_l gamma^l_ij``."""
    x = _as_point(x, metric.dim)
    b, db = _first_jets(form.components, x, metric.dim)
    gamma = christoffel(metric, x)
    return db - np.einsum("l,lij->ij", b, gamma)


@dataclass(frozen=True)
class BetaDecomposition:
    """Symmetric/antisymmetric split of b_{i|j} and its contractions."""

    a: np.ndarray
    a_inv: np.ndarray
    b: np.ndarray  # lower index
    b_up: np.ndarray
    b2: float
    bij: np.ndarray
    r_ij: np.ndarray
    s_ij: np.ndarray
    r_i: np.ndarray
    s_i: np.ndarray
    r_up: np.ndarray
    s_up: np.ndarray
    r: float
    gamma: np.ndarray

    def alpha_spray(self, y) -> np.ndarray:
        return 0.5 * np.einsum("ijk,j,k->i", self.gamma, y, y)

    def r00(self, y) -> float:
        return float(y @ self.r_ij @ y)

    def r0(self, y) -> float:
        return float(self.r_i @ y)

    def s0(self, y) -> float:
        return float(self.s_i @ y)

    def s_up0(self, y) -> np.ndarray:
        """``s^i_0 = a^{ij} s_jk y^k``."""
        return self.a_inv @ (self.s_ij @ y)


def decompose_beta(metric: RiemannianMetric, form: OneForm, x) -> BetaDecomposition:
    x = _as_point(x, metric.dim)
    a, da, a_inv = _metric_data(metric, x)
    b, db = _first_jets(form.components, x, metric.dim)
    gamma = _christoffel_from(da, a_inv)
    bij = db - np.einsum("l,lij->ij", b, gamma)
    b_up = a_inv @ b
    r_ij = 0.5 * (bij + bij.T)
    s_ij = 0.5 * (bij - bij.T)
    r_i = b_up @ r_ij
    s_i = b_up @ s_ij
    return BetaDecomposition(
        a=a,
        a_inv=a_inv,
        b=b,
        b_up=b_up,
        b2=float(b @ b_up),
        bij=bij,
        r_ij=r_ij,
        s_ij=s_ij,
        r_i=r_i,
        s_i=s_i,
        r_up=a_inv @ r_i,
        s_up=a_inv @ s_i,
        r=float(b_up @ r_i),
        gamma=gamma,
    )


@dataclass(frozen=True)
class Condition03Fit:
    """Result of fitting ``r_ij = lam a_ij + tau b_i b_j``.

    ``k = lam / b^2 + tau`` and ``c = lam / (b^2 k)``.  A parallel 1-form
    gives ``parallel=True`` with ``k = 0`` and ``c = nan``.
    """

    k: float
    c: float
    lam: float
    tau: float
    b2: float
    residual_norm: float
    closedness_norm: float
    parallel: bool = False
    gram_condition: float = field(default=float("nan"), compare=False)


def fit_condition03(
    metric: RiemannianMetric,
    form: OneForm,
    x,
    *,
    parallel_tol: float = 1e-12,
    max_condition: float = 1e12,
) -> Condition03Fit:
    return fit_decomposition(
        decompose_beta(metric, form, x), parallel_tol=parallel_tol, max_condition=max_condition
    )


def fit_decomposition(
    dec: BetaDecomposition, *, parallel_tol: float = 1e-12, max_condition: float = 1e12
) -> Condition03Fit:
    """The condition fit from an existing decomposition."""
    n = len(dec.b)
    closed = float(np.linalg.norm(dec.s_ij))
    if dec.b2 <= 0:
        raise DegenerateFitError(f"b^2 = {dec.b2!r} is not positive")
    if np.linalg.norm(dec.bij) <= parallel_tol * max(1.0, np.sqrt(dec.b2)):
        return Condition03Fit(
            k=0.0, c=float("nan"), lam=0.0, tau=0.0, b2=dec.b2,
            residual_norm=float(np.linalg.norm(dec.r_ij)),
            closedness_norm=closed, parallel=True,
        )
    iu = np.triu_indices(n)
    bb = np.outer(dec.b, dec.b)
    design = np.column_stack([dec.a[iu], bb[iu]])
    gram = design.T @ design
    cond = float(np.linalg.cond(gram))
    if not np.isfinite(cond) or cond > max_condition:
        raise DegenerateFitError(
            f"a_ij and b_i b_j are nearly dependent (Gram condition {cond:.3e})"
        )
    (lam, tau), *_ = np.linalg.lstsq(design, dec.r_ij[iu], rcond=None)
    lam, tau = float(lam), float(tau)
    residual = float(np.linalg.norm(dec.r_ij - lam * dec.a - tau * bb))
    k = lam / dec.b2 + tau
    c = lam / (dec.b2 * k) if k != 0.0 else float("nan")
    return Condition03Fit(
        k=k, c=c, lam=lam, tau=tau, b2=dec.b2,
        residual_norm=residual, closedness_norm=closed, gram_condition=cond,
    )
