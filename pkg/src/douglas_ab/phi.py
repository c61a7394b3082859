"""Profiles phi(b^2, s) of general (alpha, beta)-metrics.

Closed-form profiles are plain callables written with the operators of
:mod:`douglas_ab.jets`, so every partial derivative comes from one jet
evaluation.  Profiles defined through an s-quadrature (the general
solution of the Douglas PDE and the Psi-reduction) deliver their
s-partials through the identity ``phi - s phi_2 = xi * f(s)`` and their
b^2-partials through Richardson-extrapolated central differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate

from . import jets
from .errors import AdmissibilityError, DomainError, QuadratureError

__all__ = [
    "PhiPartials",
    "PhiModel",
    "QuadraturePhi",
    "AuxQuantities",
    "PdeParams",
    "GeneratorSpec",
    "PositivityPoint",
    "PositivityReport",
    "Lemma22Verdict",
    "as_function",
    "aux_quantities",
    "pde02_residual",
    "pde02cor_residual",
    "corollary_params",
    "lem17_ratio",
    "positivity_check",
    "zeta",
    "generator_terms",
    "phi_from_generator",
    "lemma22_reduction",
    "lemma23_phi",
    "lemma23_psi",
]

DEFAULT_B2_RANGE = (0.05, 0.81)
DEFAULT_S_FRACTION = 0.95


def as_function(f) -> Callable:
    """Wrap a constant as a function of b^2; pass callables through."""
    if callable(f):
        return f
    value = float(f)
    return lambda b2: value


@dataclass(frozen=True)
class PhiPartials:
    phi: float
    phi1: float
    phi2: float
    phi12: float
    phi22: float
    phi11: float = float("nan")


class PhiModel:
    """A positive profile phi(b^2, s) together with its admissible region.

    ``func(b2, s)`` must accept jets.  ``b2_range`` and ``s_fraction`` define
    the default sampling grid; ``b0`` bounds ``b`` as in the positivity
    lemma.
    """

    def __init__(
        self,
        func: Callable | None,
        *,
        name: str = "phi",
        b0: float = math.inf,
        b2_range: tuple[float, float] = DEFAULT_B2_RANGE,
        s_fraction: float = DEFAULT_S_FRACTION,
    ):
        self._func = func
        self.name = name
        self.b0 = b0
        self.b2_range = tuple(b2_range)
        self.s_fraction = s_fraction

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"

    @property
    def jet_capable(self) -> bool:
        return self._func is not None

    def __call__(self, b2, s):
        if self._func is None:
            raise TypeError(f"{self.name} has no closed form and cannot be evaluated on jets")
        return self._func(b2, s)

    def value(self, b2: float, s: float) -> float:
        return float(jets.value_of(self(b2, s)))

    def partials(self, b2: float, s: float) -> PhiPartials:
        space = jets.jet_space(2, 2)
        B, S = jets.seed(space, [b2, s])
        p = self(B, S)
        if not jets.is_jet(p):
            return PhiPartials(float(p), 0.0, 0.0, 0.0, 0.0, 0.0)
        return PhiPartials(
            phi=p.derivative((0, 0)),
            phi1=p.derivative((1, 0)),
            phi2=p.derivative((0, 1)),
            phi12=p.derivative((1, 1)),
            phi22=p.derivative((0, 2)),
            phi11=p.derivative((2, 0)),
        )

    def admissible(self, b2: float, s: float, *, slack: float = 1e-12) -> bool:
        if not b2 > 0:
            return False
        b = math.sqrt(b2)
        return abs(s) <= b * (1 + slack) and b < self.b0

    def in_range(self, b2: float) -> bool:
        lo, hi = self.b2_range
        return lo <= b2 <= hi and math.sqrt(b2) < self.b0

    def grid(self, nb: int = 40, ns: int = 40) -> list[tuple[float, float]]:
        """``nb x ns`` grid over the b^2 range with ``|s| <= s_fraction * b``."""
        pts = []
        for b2 in np.linspace(*self.b2_range, nb):
            b = math.sqrt(b2)
            for s in np.linspace(-self.s_fraction * b, self.s_fraction * b, ns):
                pts.append((float(b2), float(s)))
        return pts

    def perturbed(self, amplitude: float = 0.1) -> "PhiModel":
        """``phi + amplitude * s^3``: breaks the Douglas PDE generically."""
        base = self
        return PhiModel(
            lambda b2, s: base(b2, s) + amplitude * s * s * s,
            name=f"{self.name}+{amplitude:g}s^3",
            b0=self.b0,
            b2_range=self.b2_range,
            s_fraction=self.s_fraction,
        )


def _partials(phi, b2, s) -> PhiPartials:
    if isinstance(phi, PhiPartials):
        return phi
    return phi.partials(b2, s)


@dataclass(frozen=True)
class AuxQuantities:
    Q: float
    Theta: float
    Psi: float
    R: float
    Pi: float
    Omega: float
    Xi: float


def _denominators(p: PhiPartials, b2, s):
    d1 = p.phi - s * p.phi2
    d2 = d1 + (b2 - s * s) * p.phi22
    return d1, d2


def aux_quantities(phi: PhiModel | PhiPartials, b2: float, s: float) -> AuxQuantities:
    p = _partials(phi, b2, s)
    d1, d2 = _denominators(p, b2, s)
    if not p.phi > 0:
        raise AdmissibilityError(f"phi = {p.phi!r} is not positive", "phi > 0", p.phi)
    if not d1 > 0:
        raise AdmissibilityError(
            f"phi - s phi_2 = {d1!r} <= 0 at (b2={b2}, s={s})", "phi - s phi_2 > 0", d1
        )
    if not d2 > 0:
        raise AdmissibilityError(
            f"phi - s phi_2 + (b^2 - s^2) phi_22 = {d2!r} <= 0 at (b2={b2}, s={s})",
            "phi - s phi_2 + (b^2 - s^2) phi_22 > 0",
            d2,
        )
    phi, phi1, phi2, phi12, phi22 = p.phi, p.phi1, p.phi2, p.phi12, p.phi22
    Q = phi2 / d1
    Theta = (d1 * phi2 - s * phi * phi22) / (2 * phi * d2)
    Psi = phi22 / (2 * d2)
    R = phi1 / d1
    Pi = (d1 * phi12 - s * phi1 * phi22) / (d1 * d2)
    Omega = 2 * phi1 / phi - (s * phi + (b2 - s * s) * phi2) / phi * Pi
    Xi = (
        b2 * (phi1 - s * phi12) * phi2
        + s * (b2 - s * s) * phi1 * phi22
        + s * d1 * (2 * phi1 - s * phi12)
    ) / (phi * d2)
    return AuxQuantities(Q, Theta, Psi, R, Pi, Omega, Xi)


@dataclass(frozen=True)
class PdeParams:
    """The functions c, mu, nu of b^2 in the Douglas PDE."""

    c: Callable
    mu: Callable
    nu: Callable

    @classmethod
    def of(cls, c=1.0, mu=0.0, nu=0.0) -> "PdeParams":
        return cls(as_function(c), as_function(mu), as_function(nu))

    def at(self, b2: float) -> tuple[float, float, float]:
        return (
            float(jets.value_of(self.c(b2))),
            float(jets.value_of(self.mu(b2))),
            float(jets.value_of(self.nu(b2))),
        )

    def derivatives(self, b2: float) -> tuple[float, float, float]:
        """d/db^2 of (c, mu, nu); needs jet-compatible callables."""
        (t,) = jets.seed(jets.jet_space(1, 1), [b2])
        out = []
        for f in (self.c, self.mu, self.nu):
            v = f(t)
            out.append(v.derivative((1,)) if jets.is_jet(v) else 0.0)
        return tuple(out)


def pde02_residual(phi, params: PdeParams, b2: float, s: float) -> float:
    """Signed residual of the Douglas PDE for phi at (b^2, s); zero iff it holds."""
    p = _partials(phi, b2, s)
    c, mu, nu = params.at(b2)
    b = math.sqrt(b2)
    b3 = b2 * b
    b5 = b3 * b2
    A = (nu - mu) * s * s - nu * b2
    lhs = (b3 * ((1 - c) * s * s + c * b2) + A * (b2 - s * s)) * p.phi22
    return lhs - 2 * b5 * (p.phi1 - s * p.phi12) + A * (p.phi - s * p.phi2)


def pde02cor_residual(phi, f: Callable, eta: Callable, b2: float, s: float) -> float:
    """Residual of the spherically symmetric form of the PDE (parameters f, eta)."""
    p = _partials(phi, b2, s)
    w = float(jets.value_of(as_function(eta)(b2))) + float(jets.value_of(as_function(f)(b2))) * s * s
    return (
        (w * (b2 - s * s) - 1) * p.phi22
        + 2 * (p.phi1 - s * p.phi12)
        + w * (p.phi - s * p.phi2)
    )


def corollary_params(f, eta) -> PdeParams:
    """Map spherically symmetric parameters (f, eta) onto (c, mu, nu).

    With alpha = |y| and beta = <x, y> the 1-form satisfies b_{i|j} = a_ij,
    so c = 1, k = 1/b^2; then nu = eta b^3 and mu = nu + f b^5, and the two
    residuals differ by the factor -b^5.
    """
    f, eta = as_function(f), as_function(eta)

    def nu(b2):
        return eta(b2) * jets.power(b2, 1.5)

    def mu(b2):
        return nu(b2) + f(b2) * jets.power(b2, 2.5)

    return PdeParams(as_function(1.0), mu, nu)


def lem17_ratio(phi, params: PdeParams, b2: float, s: float) -> tuple[float, float]:
    """Both sides of the ratio identity implied by the PDE (left, right)."""
    p = _partials(phi, b2, s)
    c, mu, nu = params.at(b2)
    _, d2 = _denominators(p, b2, s)
    left = (((1 - c) * s * s + c * b2) * p.phi22 - 2 * b2 * (p.phi1 - s * p.phi12)) / d2
    right = (nu * b2 - (nu - mu) * s * s) / b2 ** 1.5
    return left, right


@dataclass(frozen=True)
class PositivityPoint:
    b2: float
    s: float
    phi: float
    cond1: float
    cond2: float
    passed: bool


@dataclass(frozen=True)
class PositivityReport:
    points: tuple[PositivityPoint, ...]
    min_margin: float
    passed: bool
    mode: int

    @property
    def failures(self) -> list[PositivityPoint]:
        return [p for p in self.points if not p.passed]


def positivity_check(
    phi: PhiModel, grid: Iterable[tuple[float, float]] | None = None, *, dim: int = 3
) -> PositivityReport:
    """Pointwise check of the two positivity inequalities (only the second when dim == 2)."""
    if grid is None:
        grid = phi.grid()
    points = []
    margin = math.inf
    for b2, s in grid:
        p = phi.partials(b2, s)
        d1, d2 = _denominators(p, b2, s)
        checked = (d2,) if dim == 2 else (d1, d2)
        m = min(checked + (p.phi,))
        margin = min(margin, m)
        points.append(PositivityPoint(b2, s, p.phi, d1, d2, m > 0))
    return PositivityReport(tuple(points), margin, all(p.passed for p in points), dim)


# -- quadrature-defined profiles ----------------------------------------


def _quad(fn, a, b, tol, what):
    if a == b:
        return 0.0
    val, err, info = integrate.quad(fn, a, b, epsabs=tol, epsrel=tol, limit=200, full_output=1)[:3]
    if not np.isfinite(val) or err > 100 * max(tol, tol * abs(val)):
        raise QuadratureError(f"{what}: quadrature on [{a}, {b}] failed (estimate {err:.2e})")
    return float(val)


def _signed_abs(x):
    """|x| that stays differentiable for jets away from zero."""
    x0 = jets.value_of(x)
    if np.any(np.asarray(x0) == 0):
        raise DomainError("bracket vanishes")
    return x * float(np.sign(x0)) if np.ndim(x0) == 0 else x * np.sign(x0)


_SERIES_ORDER = 10
_SERIES_RADIUS = 0.05


@dataclass(frozen=True)
class _Kernel:
    """Per-b^2 ingredients of phi = s h + xi (f0 - s int_0^s g) + anchor term."""

    f: Callable
    xi: float
    h: float
    b: float
    f0: float
    even: np.ndarray  # Taylor coefficients of f at 0

    def g(self, t: float) -> float:
        """(f(t) - f(0)) / t^2, evaluated by series near the origin."""
        if abs(t) < _SERIES_RADIUS * self.b:
            t2 = t * t
            return float(sum(self.even[k] * t2 ** (k // 2 - 1) for k in range(2, _SERIES_ORDER + 1, 2)))
        return (float(jets.value_of(self.f(t))) - self.f0) / (t * t)

    def fprime_over_t(self, t: float) -> float:
        if abs(t) < _SERIES_RADIUS * self.b:
            t2 = t * t
            return float(sum(k * self.even[k] * t2 ** (k // 2 - 1) for k in range(2, _SERIES_ORDER + 1, 2)))
        (tj,) = jets.seed(jets.jet_space(1, 1), [t])
        return self.f(tj).derivative((1,)) / t


class QuadraturePhi(PhiModel):
    """phi(b^2, s) = s * {h - xi * int f(t) / t^2 dt} with f even in t.

    ``kernel(b2)`` returns ``(f, xi, h)``.  The 1/t^2 pole is handled by
    subtracting f(0); by default the antiderivative is normalised so that the
    only odd part of phi is ``h s``.  A callable ``s_anchor(b)`` instead
    anchors the integral at that interior point.
    """

    def __init__(
        self,
        kernel: Callable[[float], tuple],
        *,
        name: str,
        s_anchor: Callable[[float], float] | None = None,
        tol: float = 1e-11,
        b0: float = math.inf,
        b2_range=DEFAULT_B2_RANGE,
        s_fraction=DEFAULT_S_FRACTION,
    ):
        super().__init__(None, name=name, b0=b0, b2_range=b2_range, s_fraction=s_fraction)
        self.kernel = kernel
        self.s_anchor = s_anchor
        self.tol = tol

    def _kernel(self, b2: float) -> _Kernel:
        if not b2 > 0:
            raise DomainError(f"b^2 = {b2!r} must be positive")
        f, xi, h = self.kernel(b2)
        (t,) = jets.seed(jets.jet_space(1, _SERIES_ORDER), [0.0])
        ft = f(t)
        even = np.array([ft.coefficient((k,)) for k in range(_SERIES_ORDER + 1)])
        return _Kernel(f=f, xi=float(xi), h=float(h), b=math.sqrt(b2), f0=float(even[0]), even=even)

    def _int_g(self, k: _Kernel, s: float) -> float:
        """int_0^s g(t) dt; g is even."""
        if s == 0:
            return 0.0
        val = _quad(k.g, 0.0, abs(s), self.tol, self.name)
        return val if s > 0 else -val

    def _h_eff(self, k: _Kernel) -> float:
        if self.s_anchor is None:
            return k.h
        s0 = float(self.s_anchor(k.b))
        if not 0 < s0 < k.b:
            raise DomainError(f"s anchor {s0!r} must lie in (0, b)")
        return k.h + k.xi * (self._int_g(k, s0) - k.f0 / s0)

    def _check(self, b2, s):
        if not (b2 > 0 and abs(s) < math.sqrt(b2)):
            raise DomainError(f"(b2={b2}, s={s}) outside |s| < b")

    def value(self, b2: float, s: float) -> float:
        self._check(b2, s)
        k = self._kernel(b2)
        return s * self._h_eff(k) + k.xi * (k.f0 - s * self._int_g(k, s))

    def __call__(self, b2, s):
        if jets.is_jet(b2) or jets.is_jet(s):
            return super().__call__(b2, s)
        return self.value(b2, s)

    def _phi2(self, b2: float, s: float) -> float:
        k = self._kernel(b2)
        return self._h_eff(k) - k.xi * (self._int_g(k, s) + s * k.g(s))

    def phi_minus_s_phi2(self, b2: float, s: float) -> float:
        """The combination phi - s phi_2 = xi f(s), free of the anchor."""
        self._check(b2, s)
        k = self._kernel(b2)
        return k.xi * float(jets.value_of(k.f(s)))

    def partials(self, b2: float, s: float) -> PhiPartials:
        self._check(b2, s)
        k = self._kernel(b2)
        h_eff = self._h_eff(k)
        ig = self._int_g(k, s)
        phi = s * h_eff + k.xi * (k.f0 - s * ig)
        phi2 = h_eff - k.xi * (ig + s * k.g(s))
        phi22 = -k.xi * k.fprime_over_t(s)
        phi1 = _richardson(lambda u: self.value(u, s), b2)
        phi12 = _richardson(lambda u: self._phi2(u, s), b2)
        return PhiPartials(phi=phi, phi1=phi1, phi2=phi2, phi12=phi12, phi22=phi22)


def _richardson(fn, x: float) -> float:
    """Central difference with one Richardson step; step max(1e-5, 1e-4 x)."""
    h = max(1e-5, 1e-4 * abs(x))
    d1 = (fn(x + h) - fn(x - h)) / (2 * h)
    d2 = (fn(x + h / 2) - fn(x - h / 2)) / h
    return (4 * d2 - d1) / 3


# -- general solution of the PDE ----------------------------------------


@dataclass(frozen=True)
class GeneratorSpec:
    """Data of the general solution: Phi(zeta), h(b^2), (c, mu, nu) and anchors.

    ``b2_anchor`` is the lower limit of every b^2 integral (default: the
    midpoint of ``b2_range``); ``i_offset`` is the value assigned to the
    (nu - mu) integral at that anchor.  ``s_anchor`` as in
    :class:`QuadraturePhi`.
    """

    Phi: Callable
    params: PdeParams
    h: Callable | float = 0.0
    b2_anchor: float | None = None
    s_anchor: Callable[[float], float] | None = None
    i_offset: float = 0.0
    tol: float = 1e-11
    b2_range: tuple[float, float] = DEFAULT_B2_RANGE
    b0: float = math.inf
    name: str = "generator"

    @property
    def anchor(self) -> float:
        if self.b2_anchor is not None:
            return self.b2_anchor
        lo, hi = self.b2_range
        return 0.5 * (lo + hi)


def _log_e(params: PdeParams, anchor: float, b2: float, tol: float) -> float:
    def rate(t):
        c, mu, _ = params.at(t)
        b = math.sqrt(t)
        return ((1 - c) * b + mu) / (t * b)

    return _quad(rate, anchor, b2, tol, "exponent integral")


def _i_term(params: PdeParams, anchor: float, b2: float, tol: float, offset: float) -> float:
    def integrand(t):
        _, mu, nu = params.at(t)
        if nu == mu:
            return 0.0
        return (nu - mu) / t ** 2.5 * math.exp(_log_e(params, anchor, t, tol))

    return offset + _quad(integrand, anchor, b2, tol, "nu - mu integral")


def _log_xi(params: PdeParams, anchor: float, b2: float, tol: float) -> float:
    return _quad(lambda t: (1 - params.at(t)[0]) / (2 * t), anchor, b2, tol, "xi integral")


def generator_terms(params: PdeParams, spec: GeneratorSpec, b2: float) -> tuple[float, float, float]:
    """(E, I, xi) at b^2: exponential factor, (nu - mu) integral, and xi."""
    E = math.exp(_log_e(params, spec.anchor, b2, spec.tol))
    I = _i_term(params, spec.anchor, b2, spec.tol, spec.i_offset)
    xi = math.exp(_log_xi(params, spec.anchor, b2, spec.tol))
    return E, I, xi


def _zeta_from(E, I, b2, s):
    w = b2 - s * s
    den = E + w * I
    if np.any(np.asarray(jets.value_of(den)) == 0):
        raise DomainError(f"zeta denominator vanishes at (b2={b2}, s={jets.value_of(s)})")
    return w / den


def zeta(params: PdeParams, spec: GeneratorSpec, b2: float, s):
    """The characteristic variable zeta(b^2, s); ``s`` may be a jet."""
    E, I, _ = generator_terms(params, spec, b2)
    return _zeta_from(E, I, b2, s)


def phi_from_generator(spec: GeneratorSpec) -> QuadraturePhi:
    """Profile built from (Phi, h, c, mu, nu) by quadrature."""
    h = as_function(spec.h)
    params = spec.params

    def kernel(b2):
        E, I, xi = generator_terms(params, spec, b2)

        def f(t):
            return spec.Phi(_zeta_from(E, I, b2, t)) / jets.sqrt(b2 - t * t)

        return f, xi, float(jets.value_of(h(b2)))

    return QuadraturePhi(
        kernel,
        name=spec.name,
        s_anchor=spec.s_anchor,
        tol=spec.tol,
        b0=spec.b0,
        b2_range=spec.b2_range,
    )


# -- reductions ------------------------------------------------------------


@dataclass(frozen=True)
class Lemma22Verdict:
    riemannian_type: bool
    iota1: float
    iota2: float
    deviation: float


def lemma22_reduction(
    phi: PhiModel, b2: float, s_samples: Sequence[float] | None = None, *, tol: float = 1e-10
) -> Lemma22Verdict:
    """Detect phi = iota2 sqrt(1 + iota1 s^2) by testing whether Q / s is constant."""
    b = math.sqrt(b2)
    if s_samples is None:
        s_samples = np.linspace(-0.9 * b, 0.9 * b, 12)
    ratios = []
    for s in s_samples:
        if s == 0:
            continue
        p = phi.partials(b2, float(s))
        ratios.append(p.phi2 / (p.phi - s * p.phi2) / s)
    ratios = np.array(ratios)
    iota1 = float(np.mean(ratios))
    deviation = float(np.max(np.abs(ratios - iota1)))
    iota2 = phi.value(b2, 0.0)
    return Lemma22Verdict(deviation <= tol * max(1.0, abs(iota1)), iota1, iota2, deviation)


def lemma23_phi(i3, i4, i5=1.0, i6=0.0, *, tol: float = 1e-11, b2_range=DEFAULT_B2_RANGE,
                s_anchor=None) -> QuadraturePhi:
    """Profile whose Psi equals i3 + i4 s^2 / (b^2 - s^2); iotas are functions of b^2."""
    i3, i4, i5, i6 = map(as_function, (i3, i4, i5, i6))

    def kernel(b2):
        a3, a4, a5 = (float(jets.value_of(f(b2))) for f in (i3, i4, i5))
        den = 2 * b2 * a4 - 1
        if den == 0:
            raise DomainError("exponent singularity 2 b^2 iota4 = 1")
        p_outer = -b2 * a4 / den
        p_bracket = 1.0 / (2 * den)

        def f(t):
            w = b2 - t * t
            bracket = 2 * (a4 - a3) * t * t + 2 * a3 * b2 - 1
            return jets.power(w, p_outer) * jets.power(_signed_abs(bracket), p_bracket) * a5

        return f, 1.0, float(jets.value_of(i6(b2)))

    return QuadraturePhi(kernel, name=f"lemma23({i3(0.5):g},{i4(0.5):g})", s_anchor=s_anchor,
                         tol=tol, b2_range=b2_range)


def lemma23_psi(i3, i4, b2: float, s: float) -> float:
    return float(jets.value_of(as_function(i3)(b2))) + float(jets.value_of(as_function(i4)(b2))) * s * s / (b2 - s * s)
