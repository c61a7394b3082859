"""General (alpha, beta)-metrics F = alpha * phi(b^2, beta / alpha).

The first-principles spray and the Douglas tensor share one pipeline: F^2
is evaluated on a joint jet in (y, x) that keeps full order in y and first
order in x, and everything downstream (g_ij, the mixed x-y Hessian, the
linear solve, the trace term) stays in jet arithmetic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import jets
from .errors import AdmissibilityError, DomainError, NotPositiveDefiniteError, PreconditionError
from .phi import PdeParams, PhiModel, aux_quantities, pde02_residual
from .riemann import (
    OneForm,
    RiemannianMetric,
    decompose_beta,
    fit_decomposition,
)

__all__ = [
    "GeneralABMetric",
    "SprayResult",
    "DouglasTensorValue",
    "evaluate_F",
    "fundamental_tensor",
    "spray_first_principles",
    "spray_eq14",
    "spray_douglas_form",
    "douglas_tensor",
    "douglas_tensor_fd_oracle",
    "projective_deviation",
]

SprayMethod = Literal["first_principles", "eq14", "douglas_form"]


@dataclass(frozen=True)
class GeneralABMetric:
    alpha: RiemannianMetric
    beta: OneForm
    phi: PhiModel
    name: str = ""

    @property
    def dim(self) -> int:
        return self.alpha.dim

    def admissible(self, x) -> bool:
        return bool(self.alpha.admissible(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class SprayResult:
    G: np.ndarray
    method: SprayMethod


@dataclass(frozen=True)
class DouglasTensorValue:
    D: np.ndarray  # D[i, j, k, l]
    sup_norm: float

    @classmethod
    def of(cls, D: np.ndarray) -> "DouglasTensorValue":
        return cls(D, float(np.max(np.abs(D))))

    def asymmetry(self) -> float:
        base = self.D
        return max(
            float(np.max(np.abs(base - np.transpose(base, (0,) + p))))
            for p in itertools.permutations((1, 2, 3))
        )


def _vec(v, n, what):
    v = np.asarray(v, dtype=float)
    if v.shape[:1] != (n,):
        raise ValueError(f"{what} must have leading dimension {n}, got shape {v.shape}")
    return v


def _F2(metric: GeneralABMetric, X, Y):
    """F^2 and its ingredients on jets (or plain floats/arrays)."""
    n = metric.dim
    a = metric.alpha.components(X)
    b = metric.beta.components(X)
    b_up = jets.solve_spd(a, b)
    b2 = sum(b[i] * b_up[i] for i in range(n))
    alpha2 = sum(a[i][j] * Y[i] * Y[j] for i in range(n) for j in range(n))
    beta = sum(b[i] * Y[i] for i in range(n))
    b2_0 = np.asarray(jets.value_of(b2))
    alpha2_0 = np.asarray(jets.value_of(alpha2))
    if np.any(alpha2_0 <= 0):
        raise DomainError("y must be nonzero")
    s0 = np.asarray(jets.value_of(beta)) / np.sqrt(alpha2_0)
    if np.any(b2_0 <= 0) or np.any(np.abs(s0) > np.sqrt(b2_0) * (1 + 1e-12)):
        raise AdmissibilityError(f"|s| <= b violated (b^2={b2_0}, s={s0})", "|s| <= b")
    if np.any(np.sqrt(b2_0) >= metric.phi.b0):
        raise AdmissibilityError(f"b = {np.sqrt(b2_0)} exceeds b0 = {metric.phi.b0}", "b < b0")
    alpha = jets.sqrt(alpha2)
    phi = metric.phi(b2, beta / alpha)
    phi0 = np.asarray(jets.value_of(phi))
    if np.any(phi0 <= 0):
        raise AdmissibilityError(f"phi = {phi0} is not positive", "phi > 0", float(np.min(phi0)))
    return alpha2 * phi * phi


def evaluate_F(metric: GeneralABMetric, x, y) -> float:
    n = metric.dim
    x, y = _vec(x, n, "x"), _vec(y, n, "y")
    return math.sqrt(float(_F2(metric, list(x), list(y))))


def fundamental_tensor(metric: GeneralABMetric, x, y, *, check: bool = True) -> np.ndarray:
    """g_ij = 1/2 [F^2]_{y^i y^j}; raises if g is not positive definite."""
    n = metric.dim
    x, y = _vec(x, n, "x"), _vec(y, n, "y")
    space = jets.jet_space(n, 2)
    F2 = _F2(metric, list(x), jets.seed(space, y))
    g = np.array(
        [[0.5 * F2.derivative(jets.multi_index(n, i, j)) for j in range(n)] for i in range(n)]
    )
    if check:
        eig = np.linalg.eigvalsh(g)
        if eig[0] <= 0:
            raise NotPositiveDefiniteError(
                f"fundamental tensor is not positive definite (min eigenvalue {eig[0]:.3e})",
                eigenvalues=eig,
            )
    return g


def _spray_jets(metric: GeneralABMetric, x, y, order: int):
    """G^i as jets of the given order in y (plain arrays for order 0).

    ``y`` may carry trailing batch axes, shape ``(n, *batch)``.
    """
    n = metric.dim
    joint = jets.jet_space(2 * n, order + 2, ((tuple(range(n, 2 * n)), 1),))
    yspace = jets.jet_space(n, order)
    Y = jets.seed(joint, list(y))
    X = jets.seed(joint, list(x), offset=n)
    F2 = _F2(metric, X, Y)
    first_y = [F2.diff(i) for i in range(n)]
    g = [[0.5 * first_y[i].diff(j).project(yspace) for j in range(n)] for i in range(n)]
    dx = [F2.diff(n + l) for l in range(n)]
    Yo = jets.seed(yspace, list(y))
    rhs = []
    for l in range(n):
        mixed = sum(dx[m].diff(l).project(yspace) * Yo[m] for m in range(n))
        rhs.append(mixed - dx[l].project(yspace))
    G = [0.25 * e for e in jets.solve_spd(g, rhs)]
    return G, Yo


def spray_first_principles(metric: GeneralABMetric, x, y) -> SprayResult:
    n = metric.dim
    x, y = _vec(x, n, "x"), _vec(y, n, "y")
    G, _ = _spray_jets(metric, x, y, 0)
    return SprayResult(np.array([jets.value_of(e) for e in G], dtype=float), "first_principles")


def _spray_batch(metric: GeneralABMetric, x, ys: np.ndarray) -> np.ndarray:
    """G for a batch of y; ``ys`` has shape ``(n, B)``, result ``(n, B)``."""
    G, _ = _spray_jets(metric, x, ys, 0)
    return np.array([np.broadcast_to(jets.value_of(e), ys.shape[1:]) for e in G], dtype=float)


def _ab_data(metric: GeneralABMetric, x, y):
    dec = decompose_beta(metric.alpha, metric.beta, x)
    alpha = math.sqrt(float(y @ dec.a @ y))
    s = float(dec.b @ y) / alpha
    return dec, alpha, s


def spray_eq14(metric: GeneralABMetric, x, y) -> SprayResult:
    """Spray assembled from the auxiliary quantities and the r/s contractions."""
    n = metric.dim
    x, y = _vec(x, n, "x"), _vec(y, n, "y")
    dec, alpha, s = _ab_data(metric, x, y)
    aux = aux_quantities(metric.phi, dec.b2, s)
    s0, r0, r00 = dec.s0(y), dec.r0(y), dec.r00(y)
    common = -2 * alpha * aux.Q * s0 + r00 + 2 * alpha**2 * aux.R * dec.r
    G = (
        dec.alpha_spray(y)
        + alpha * aux.Q * dec.s_up0(y)
        + (aux.Theta * common + alpha * aux.Omega * (r0 + s0)) * y / alpha
        + (aux.Psi * common + alpha * aux.Pi * (r0 + s0)) * dec.b_up
        - alpha**2 * aux.R * (dec.r_up + dec.s_up)
    )
    return SprayResult(G, "eq14")


def spray_douglas_form(
    metric: GeneralABMetric,
    params: PdeParams,
    k: float | None,
    x,
    y,
    *,
    check: bool = True,
    tol: float = 1e-8,
) -> tuple[SprayResult, np.ndarray]:
    """Spray in the form G = Ghat + P y; returns ``(G, Ghat)``.

    ``k = None`` takes k from the condition fit.  With ``check`` the fit
    residual, the agreement of the fitted c with ``params.c(b^2)`` and the
    PDE residual are verified and a :class:`PreconditionError` is raised
    when any exceeds ``tol``.
    """
    G, ghat, _ = _douglas_form(metric, params, k, x, y, check=check, tol=tol)
    return G, ghat


def _douglas_form(metric, params, k, x, y, *, check, tol=1e-8):
    n = metric.dim
    x, y = _vec(x, n, "x"), _vec(y, n, "y")
    dec, alpha, s = _ab_data(metric, x, y)
    b2 = dec.b2
    c, mu, nu = params.at(b2)
    if k is None or check:
        fit = fit_decomposition(dec)
        if k is None:
            k = fit.k
        if check:
            residuals = {
                "condition03": fit.residual_norm,
                "closedness": fit.closedness_norm,
                "k": abs(fit.k - k) / max(1.0, abs(k)),
                "c": abs(fit.c - c) if not fit.parallel else 0.0,
                "pde02": abs(pde02_residual(metric.phi, params, b2, s)),
            }
            bad = {name: v for name, v in residuals.items() if not v <= tol}
            if bad:
                raise PreconditionError(f"preconditions violated: {bad}", residuals)
    b = math.sqrt(b2)
    aux = aux_quantities(metric.phi, b2, s)
    ghat = dec.alpha_spray(y) + (
        k * alpha**2 / (2 * b**3) * (nu * b2 - (nu - mu) * s * s)
    ) * dec.b_up
    P = k * alpha * (((1 - c) * s * s + c * b2) * aux.Theta + b2 * aux.Xi)
    return SprayResult(ghat + P * y, "douglas_form"), ghat, dec.a


def douglas_tensor(metric: GeneralABMetric, x, y) -> DouglasTensorValue:
    """D^i_jkl from an order-4 y-jet of the spray."""
    n = metric.dim
    x, y = _vec(x, n, "x"), _vec(y, n, "y")
    G, Y = _spray_jets(metric, x, y, 4)
    space3 = jets.jet_space(n, 3)
    div = sum(G[m].diff(m) for m in range(n))
    Y3 = jets.seed(space3, list(y))
    T = [G[i].project(space3) - div * Y3[i] / (n + 1) for i in range(n)]
    D = np.empty((n, n, n, n))
    for j, k, l in itertools.product(range(n), repeat=3):
        m = jets.multi_index(n, j, k, l)
        for i in range(n):
            D[i, j, k, l] = T[i].derivative(m)
    return DouglasTensorValue.of(D)


def douglas_tensor_fd_oracle(
    metric: GeneralABMetric, x, y, step: float | None = None, *, richardson: bool = True
) -> DouglasTensorValue:
    """D^i_jkl by nested central differences of the first-principles spray.

    The default step is ``5e-3 * |y|``.  With ``richardson`` the O(h^2)
    truncation error is cancelled by combining steps h and h/2.
    """
    n = metric.dim
    x, y = _vec(x, n, "x"), _vec(y, n, "y")
    h = 5e-3 * float(np.linalg.norm(y)) if step is None else float(step)
    if not richardson:
        return DouglasTensorValue.of(_fd_douglas(metric, x, y, h))
    coarse, fine = _fd_douglas(metric, x, y, h), _fd_douglas(metric, x, y, h / 2)
    return DouglasTensorValue.of((4 * fine - coarse) / 3)


def _fd_douglas(metric: GeneralABMetric, x, y, h: float) -> np.ndarray:
    """Nested central differences with all spray values from one batched evaluation."""
    n = metric.dim
    eye = np.eye(n, dtype=int)

    t_offsets = set()
    for j, k, l in itertools.product(range(n), repeat=3):
        for sg in itertools.product((-1, 1), repeat=3):
            t_offsets.add(tuple(sg[0] * eye[j] + sg[1] * eye[k] + sg[2] * eye[l]))
    g_offsets = set()
    for w in t_offsets:
        g_offsets.add(w)
        for m in range(n):
            for sg in (-1, 1):
                g_offsets.add(tuple(np.array(w) + sg * eye[m]))
    g_offsets = sorted(g_offsets)
    where = {w: i for i, w in enumerate(g_offsets)}
    ys = y[:, None] + h * np.array(g_offsets, dtype=float).T
    G = _spray_batch(metric, x, ys)

    def T(w):
        w = np.array(w)
        div = sum(
            (G[m, where[tuple(w + eye[m])]] - G[m, where[tuple(w - eye[m])]]) / (2 * h)
            for m in range(n)
        )
        return G[:, where[tuple(w)]] - div * (y + h * w) / (n + 1)

    cache = {w: T(w) for w in t_offsets}
    D = np.zeros((n, n, n, n))
    for j, k, l in itertools.product(range(n), repeat=3):
        acc = np.zeros(n)
        for sg in itertools.product((-1, 1), repeat=3):
            w = tuple(sg[0] * eye[j] + sg[1] * eye[k] + sg[2] * eye[l])
            acc += sg[0] * sg[1] * sg[2] * cache[w]
        D[:, j, k, l] = acc / (8 * h**3)
    return D


def projective_deviation(
    metric: GeneralABMetric, params: PdeParams, x, y, k: float | None = None
) -> float:
    """a-norm of the part of G - Ghat orthogonal to y.

    G comes from first principles, Ghat from the Douglas form; zero
    certifies G = Ghat + P y at this point.
    """
    n = metric.dim
    x, y = _vec(x, n, "x"), _vec(y, n, "y")
    G = spray_first_principles(metric, x, y).G
    _, ghat, a = _douglas_form(metric, params, k, x, y, check=False)
    v = G - ghat
    v_perp = v - (v @ a @ y) / (y @ a @ y) * y
    return math.sqrt(max(float(v_perp @ a @ v_perp), 0.0))
