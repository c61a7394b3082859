"""Named constructions: profiles phi, (alpha, beta) pairs and their pairing.

Entries are addressed by selector strings such as ``ex72+ex63c0`` or
``ex71(delta1=1,delta2=0)+ex61(h=0.5)``.  Vector parameters use ``:`` as
separator, e.g. ``flat(b=0.3:0.2:0.1)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import jets
from .errors import ConfigError, DomainError
from .finsler import GeneralABMetric
from .phi import (
    GeneratorSpec,
    PdeParams,
    PhiModel,
    lemma23_phi,
)
from .riemann import OneForm, RiemannianMetric

__all__ = [
    "AlphaBetaEntry",
    "PhiEntry",
    "Pair",
    "constant_curvature_alpha",
    "euclidean_alpha",
    "example71",
    "example72",
    "example73",
    "flat_randers",
    "spherically_symmetric_pair",
    "spherically_symmetric",
    "phi_catalog",
    "alpha_beta_catalog",
    "ALPHA_BETA_IDS",
    "PHI_IDS",
    "parse_selector",
    "format_selector",
    "load_pair",
    "make_pair",
    "b2_at",
]


def _r2(x):
    return sum(xi * xi for xi in x)


def _dot(u, v):
    return sum(a * b for a, b in zip(u, v))


# -- Riemannian metrics and 1-forms ----------------------------------------


def euclidean_alpha(dim: int = 3) -> RiemannianMetric:
    def comps(x):
        return [[1.0 if i == j else 0.0 for j in range(dim)] for i in range(dim)]

    return RiemannianMetric(dim, comps, name="euclidean")


def constant_curvature_alpha(kappa: float, dim: int = 3) -> RiemannianMetric:
    """Projectively flat metric of constant sectional curvature ``kappa``."""

    def comps(x):
        w = 1 + kappa * _r2(x)
        if np.any(np.asarray(jets.value_of(w)) <= 0):
            raise DomainError("1 + kappa |x|^2 must be positive")
        inv2 = 1.0 / (w * w)
        return [
            [((w if i == j else 0.0) - kappa * x[i] * x[j]) * inv2 for j in range(dim)]
            for i in range(dim)
        ]

    def admissible(x):
        return 1 + kappa * float(x @ x) > 0

    return RiemannianMetric(dim, comps, admissible, name=f"cc({kappa:g})")


def _cc_inverse(kappa, x):
    """Inverse of the constant-curvature metric, (1 + k r^2)(I + k x x^T)."""
    n = len(x)
    w = 1 + kappa * _r2(x)
    return [[w * ((1.0 if i == j else 0.0) + kappa * x[i] * x[j]) for j in range(n)] for i in range(n)]


# -- catalog entries --------------------------------------------------------


@dataclass(frozen=True)
class AlphaBetaEntry:
    """An (alpha, beta) pair with its declared condition constants.

    ``expected(x)`` returns the declared ``(k, c)`` at x (``None`` when the
    1-form is parallel).  ``c_of_b2`` is the declared c as a function of
    b^2 when it is one (used for pairing), else ``None``.
    """

    id: str
    params: dict
    alpha: RiemannianMetric
    beta: OneForm
    expected: Callable[[np.ndarray], tuple[float, float] | None]
    admissible: Callable[[np.ndarray], bool]
    box: float = 1.0
    c_of_b2: Callable[[float], float] | None = None
    parallel: bool = False
    description: str = ""

    @property
    def dim(self) -> int:
        return self.alpha.dim

    @property
    def selector(self) -> str:
        return format_selector(self.id, self.params)


@dataclass(frozen=True)
class PhiEntry:
    """A profile with its declared PDE parameters (``None`` when not declared)."""

    id: str
    params: dict
    phi: PhiModel
    pde: PdeParams | None
    generator: GeneratorSpec | None = None
    riemannian: bool = False
    douglas_solution: bool = True
    lemma23: tuple | None = None
    grid_shape: tuple[int, int] = (40, 40)
    description: str = ""

    @property
    def selector(self) -> str:
        return format_selector(self.id, self.params)


@dataclass(frozen=True)
class Pair:
    ab: AlphaBetaEntry
    phi: PhiEntry
    metric: GeneralABMetric
    expected_douglas: bool
    reason: str

    @property
    def selector(self) -> str:
        return f"{self.ab.selector}+{self.phi.selector}"

    @property
    def douglas_form_applies(self) -> bool:
        """Whether G = Ghat + P y is expected with the profile's declared parameters."""
        if self.phi.pde is None:
            return False
        if self.ab.parallel or self.phi.id == "one":
            return True
        return self.phi.douglas_solution and _c_gap(self.ab, self.phi) <= 1e-12

    def admissible(self, x) -> bool:
        """x admissible for the pair: the entry's domain and b^2 inside phi's range."""
        x = np.asarray(x, dtype=float)
        if not self.ab.admissible(x):
            return False
        try:
            b2 = b2_at(self.ab, x)
        except (DomainError, ArithmeticError, ValueError):
            return False
        return self.phi.phi.in_range(b2)


def b2_at(entry: AlphaBetaEntry, x) -> float:
    x = list(np.asarray(x, dtype=float))
    a = np.asarray(entry.alpha.components(x), dtype=float)
    b = np.asarray(entry.beta.components(x), dtype=float)
    return float(b @ np.linalg.solve(a, b))


def example71(kappa=1.0, delta1=2.0, delta2=1.0, a=None, dim: int = 3) -> AlphaBetaEntry:
    """Constant-curvature alpha with a rescaled conformal 1-form.

    beta is built from the conformal form beta~ as beta~ sqrt(b~^2 - delta2) / b~,
    which gives b^2 = b~^2 - delta2.
    """
    a_vec = np.zeros(dim) if a is None else np.asarray(a, dtype=float)
    if a_vec.shape != (dim,):
        raise ConfigError(f"a must have {dim} components")
    alpha = constant_curvature_alpha(kappa, dim)
    av = [float(v) for v in a_vec]

    def tilde(x):
        w = 1 + kappa * _r2(x)
        ax = _dot(av, x)
        scale = jets.power(w, -1.5)
        return [(delta1 * x[i] + w * av[i] - kappa * ax * x[i]) * scale for i in range(dim)]

    def tilde_b2(x):
        bt = tilde(x)
        inv = _cc_inverse(kappa, x)
        return sum(bt[i] * inv[i][j] * bt[j] for i in range(dim) for j in range(dim))

    def comps(x):
        bt = tilde(x)
        tb2 = tilde_b2(x)
        if np.any(np.asarray(jets.value_of(tb2)) <= delta2):
            raise DomainError("b~^2 - delta2 must be positive")
        factor = jets.sqrt((tb2 - delta2) / tb2)
        return [e * factor for e in bt]

    def expected(x):
        x = np.asarray(x, dtype=float)
        b2 = float(tilde_b2(list(x))) - delta2
        w = 1 + kappa * float(x @ x)
        num = delta1 - kappa * float(a_vec @ x)
        k = (delta2 + b2) * num / (b2**1.5 * math.sqrt((b2 + delta2) * w))
        return k, b2 / (delta2 + b2)

    def admissible(x):
        w = 1 + kappa * float(x @ x)
        if w <= 0:
            return False
        if abs(delta1 - kappa * float(a_vec @ x)) < 1e-6:
            return False
        return float(tilde_b2(list(x))) - delta2 > 0

    params = {"kappa": kappa, "delta1": delta1, "delta2": delta2}
    if a is not None:
        params["a"] = list(av)
    return AlphaBetaEntry(
        id="ex71",
        params=params,
        alpha=alpha,
        beta=OneForm(comps, name="ex71"),
        expected=expected,
        admissible=admissible,
        c_of_b2=lambda b2: b2 / (delta2 + b2),
        description="constant-curvature alpha with a rescaled conformal 1-form",
    )


def example72(epsilon=1.0, dim: int = 3) -> AlphaBetaEntry:
    if epsilon == 0:
        raise ConfigError("epsilon must be nonzero")

    def a_comps(x):
        inv = 1.0 / (4 * _r2(x))
        return [[inv if i == j else 0.0 for j in range(dim)] for i in range(dim)]

    def b_comps(x):
        f = 2 * epsilon * jets.exp(-_r2(x))
        return [f * xi for xi in x]

    def expected(x):
        r2 = float(np.dot(x, x))
        return (1 - r2) * math.exp(r2) / (epsilon * r2), 0.0

    def admissible(x):
        r2 = float(np.dot(x, x))
        return 1e-6 < r2 and abs(1 - r2) > 1e-6 and r2 < 1

    return AlphaBetaEntry(
        id="ex72",
        params={"epsilon": epsilon},
        alpha=RiemannianMetric(dim, a_comps, name="|y|/(2|x|)"),
        beta=OneForm(b_comps, name="ex72"),
        expected=expected,
        admissible=admissible,
        c_of_b2=lambda b2: 0.0,
        description="alpha conformal to |y|, c = 0",
    )


def example73(dim: int = 3) -> AlphaBetaEntry:
    def a_comps(x):
        w = 1 + _r2(x)
        inv = 1.0 / (w * w)
        return [[inv if i == j else 0.0 for j in range(dim)] for i in range(dim)]

    def b_comps(x):
        r2 = _r2(x)
        f = (1 + r2) / (1 - r2)
        return [f * xi for xi in x]

    def expected(x):
        r2 = float(np.dot(x, x))
        b2 = (1 + r2) ** 4 * r2 / (1 - r2) ** 2
        lam = (1 + r2) ** 2
        tau = 4 * (2 - r2) / (1 + r2) ** 2
        k = lam / b2 + tau
        return k, lam / (b2 * k)

    def admissible(x):
        r2 = float(np.dot(x, x))
        return 1e-6 < r2 < 1 - 1e-6

    return AlphaBetaEntry(
        id="ex73",
        params={},
        alpha=RiemannianMetric(dim, a_comps, name="|y|/(1+|x|^2)"),
        beta=OneForm(b_comps, name="ex73"),
        expected=expected,
        admissible=admissible,
        description="alpha conformal to |y| with x-dependent c",
    )


def flat_randers(b=(0.3, 0.2, 0.1), dim: int = 3) -> AlphaBetaEntry:
    """Euclidean alpha with a constant (parallel) 1-form."""
    bv = [float(v) for v in b]
    if len(bv) != dim:
        raise ConfigError(f"b must have {dim} components")

    return AlphaBetaEntry(
        id="flat",
        params={"b": list(bv)},
        alpha=euclidean_alpha(dim),
        beta=OneForm(lambda x: list(bv), name="const"),
        expected=lambda x: None,
        admissible=lambda x: True,
        parallel=True,
        description="Euclidean alpha, constant beta",
    )


def spherically_symmetric_pair(dim: int = 3) -> AlphaBetaEntry:
    """alpha = |y|, beta = <x, y>: b_{i|j} = a_ij, so c = 1 and k = 1/b^2."""

    def expected(x):
        return 1.0 / float(np.dot(x, x)), 1.0

    return AlphaBetaEntry(
        id="ss",
        params={},
        alpha=euclidean_alpha(dim),
        beta=OneForm(lambda x: list(x), name="<x,y>"),
        expected=expected,
        admissible=lambda x: float(np.dot(x, x)) > 1e-6,
        c_of_b2=lambda b2: 1.0,
        description="spherically symmetric data",
    )


def spherically_symmetric(phi: PhiModel, dim: int = 3) -> GeneralABMetric:
    """F = |y| phi(|x|^2, <x, y> / |y|)."""
    e = spherically_symmetric_pair(dim)
    return GeneralABMetric(e.alpha, e.beta, phi, name=f"ss+{phi.name}")


# -- profiles ----------------------------------------------------------------


def _ex61(h=0.0):
    phi = PhiModel(lambda b2, s: 1 + h * s, name="ex61")
    gen = GeneratorSpec(lambda z: jets.sqrt(z), PdeParams.of(1.0, 0.0, 0.0), h=h, name="gen-ex61")
    return PhiEntry("ex61", {"h": h}, phi, PdeParams.of(1.0, 0.0, 0.0), generator=gen,
                    riemannian=(h == 0), description="Randers profile 1 + h s")


def _ex62(h=0.0):
    def f(b2, s):
        return h * s + jets.sqrt(1 - b2 + s * s) / (1 - b2)

    phi = PhiModel(f, name="ex62", b0=1.0)
    gen = GeneratorSpec(
        lambda z: jets.sqrt(z / (1 - z)), PdeParams.of(1.0, 0.0, 0.0), h=h, b0=1.0, name="gen-ex62"
    )
    return PhiEntry("ex62", {"h": h}, phi, PdeParams.of(1.0, 0.0, 0.0), generator=gen,
                    riemannian=(h == 0), description="Randers-type profile")


def _ex63(c=0.5, h=0.0, id_="ex63"):
    def f(b2, s):
        return 1 + jets.power(b2, c) + h * s + jets.power(b2, c - 1) * s * s

    phi = PhiModel(f, name=id_)
    pde = PdeParams.of(c, 0.0, 0.0)
    gen = GeneratorSpec(lambda z: (1 + z) * jets.sqrt(z), pde, h=h, b2_anchor=1.0, name=f"gen-{id_}")
    params = {"h": h} if id_ == "ex63c0" else {"c": c, "h": h}
    return PhiEntry(id_, params, phi, pde, generator=gen, description="quadratic profile, constant c")


def _ex64_params() -> PdeParams:
    return PdeParams(
        lambda t: 1 - t,
        lambda t: jets.power(t, 2.5) / (1 - t),
        lambda t: 2 * jets.power(t, 2.5) / (1 - t),
    )


def _ex64(h=0.0):
    def f(b2, s):
        b4 = b2 * b2
        q = 1 + b4 - b2 * s * s
        num = (1 + b2) * q + s * s * (1 - b2)
        return h * s + num / ((1 + b4) * (1 + b4)) * jets.sqrt((1 - b2) * jets.exp(b2) / q)

    phi = PhiModel(f, name="ex64", b0=1.0)
    gen = GeneratorSpec(
        lambda z: jets.sqrt(z) / jets.power(1 - z, 1.5),
        _ex64_params(),
        h=h,
        b2_anchor=0.0,
        i_offset=1.0,
        b0=1.0,
        name="gen-ex64",
    )
    return PhiEntry("ex64", {"h": h}, phi, _ex64_params(), generator=gen,
                    description="profile with c = 1 - b^2")


def _lem22(iota1=2.0, iota2=1.0):
    phi = PhiModel(lambda b2, s: iota2 * jets.sqrt(1 + iota1 * s * s), name="lem22")
    # c = 1 and mu = nu = iota1 b^3 / (iota1 b^2 + 1) solve the PDE for this profile
    nu = lambda b2: iota1 * jets.power(b2, 1.5) / (iota1 * b2 + 1)
    return PhiEntry("lem22", {"iota1": iota1, "iota2": iota2}, phi,
                    PdeParams(lambda b2: 1.0, nu, nu), riemannian=True,
                    description="Riemannian-type profile")


def _lem23(iota3=0.1, iota4=0.2, iota5=1.0, iota6=0.0):
    phi = lemma23_phi(iota3, iota4, iota5, iota6)
    return PhiEntry("lem23", {"iota3": iota3, "iota4": iota4, "iota5": iota5, "iota6": iota6},
                    phi, None, lemma23=(iota3, iota4), douglas_solution=False, grid_shape=(16, 16),
                    description="profile with prescribed Psi")


def _one():
    return PhiEntry("one", {}, PhiModel(lambda b2, s: 1.0 + 0.0 * s, name="one"),
                    PdeParams.of(1.0, 0.0, 0.0), riemannian=True, description="Riemannian profile")


def _perturbed(amplitude=0.1, h=0.0):
    base = _ex63(0.0, h, "ex63c0")
    return PhiEntry("perturbed", {"amplitude": amplitude, "h": h}, base.phi.perturbed(amplitude),
                    base.pde, douglas_solution=False, description="negative control")


_PHI_BUILDERS: dict[str, Callable[..., PhiEntry]] = {
    "ex61": _ex61,
    "ex62": _ex62,
    "ex63": _ex63,
    "ex63c0": lambda h=0.0: _ex63(0.0, h, "ex63c0"),
    "ex64": _ex64,
    "lem22": _lem22,
    "lem23": _lem23,
    "one": _one,
    "perturbed": _perturbed,
}

_AB_BUILDERS: dict[str, Callable[..., AlphaBetaEntry]] = {
    "ex71": example71,
    "ex71c1": lambda kappa=1.0, delta1=1.0, a=None, dim=3: _rename(
        example71(kappa, delta1, 0.0, a, dim), "ex71c1", drop=("delta2",)
    ),
    "ex72": example72,
    "ex73": example73,
    "flat": flat_randers,
    "ss": spherically_symmetric_pair,
}

PHI_IDS = tuple(_PHI_BUILDERS)
ALPHA_BETA_IDS = tuple(_AB_BUILDERS)


def _rename(entry: AlphaBetaEntry, new_id: str, drop=()) -> AlphaBetaEntry:
    params = {k: v for k, v in entry.params.items() if k not in drop}
    return AlphaBetaEntry(**{**entry.__dict__, "id": new_id, "params": params})


def phi_catalog(id: str, **params) -> PhiEntry:
    try:
        builder = _PHI_BUILDERS[id]
    except KeyError:
        raise ConfigError(f"unknown phi id {id!r}; known: {', '.join(PHI_IDS)}") from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {id}: {exc}") from None


def alpha_beta_catalog(id: str, dim: int = 3, **params) -> AlphaBetaEntry:
    try:
        builder = _AB_BUILDERS[id]
    except KeyError:
        raise ConfigError(f"unknown alpha/beta id {id!r}; known: {', '.join(ALPHA_BETA_IDS)}") from None
    if "a" in params:
        params["a"] = list(params["a"])
    try:
        return builder(**params, dim=dim)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {id}: {exc}") from None


# -- selectors ----------------------------------------------------------------

_TOKEN = re.compile(r"^\s*([A-Za-z][A-Za-z0-9_]*)\s*(?:\((.*)\))?\s*$")


def _parse_value(text: str) -> Any:
    text = text.strip()
    try:
        if ":" in text:
            return [float(v) for v in text.split(":")]
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse parameter value {text!r}") from None


def _format_value(v) -> str:
    if isinstance(v, (list, tuple)):
        return ":".join(repr(float(e)) for e in v)
    return repr(float(v))


def format_selector(id: str, params: dict) -> str:
    if not params:
        return id
    inner = ",".join(f"{k}={_format_value(v)}" for k, v in sorted(params.items()))
    return f"{id}({inner})"


def parse_selector(text: str) -> list[tuple[str, dict]]:
    """``"ex72(epsilon=2)+ex63c0"`` -> ``[("ex72", {"epsilon": 2.0}), ("ex63c0", {})]``."""
    if text.startswith("catalog:"):
        text = text[len("catalog:"):]
    parts = []
    for token in _split_plus(text):
        m = _TOKEN.match(token)
        if not m:
            raise ConfigError(f"malformed selector token {token!r}")
        name, inner = m.group(1), m.group(2)
        params = {}
        if inner and inner.strip():
            for item in inner.split(","):
                if "=" not in item:
                    raise ConfigError(f"expected key=value in {token!r}")
                k, v = item.split("=", 1)
                params[k.strip()] = _parse_value(v)
        parts.append((name, params))
    if not parts:
        raise ConfigError("empty selector")
    return parts


def _split_plus(text: str) -> list[str]:
    out, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "+" and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    out.append("".join(cur))
    return [t for t in out if t.strip()]


def _c_gap(ab: AlphaBetaEntry, ph: PhiEntry) -> float:
    """Largest gap between the 1-form's c and the profile's c over 7 probes."""
    if ab.c_of_b2 is None or ph.pde is None:
        return math.inf
    probes = np.linspace(*ph.phi.b2_range, 7)
    return max(abs(ab.c_of_b2(t) - ph.pde.at(t)[0]) for t in probes)


def _expected_douglas(ab: AlphaBetaEntry, ph: PhiEntry) -> tuple[bool, str]:
    if ab.parallel:
        return True, "parallel 1-form"
    if ph.riemannian:
        return True, "Riemannian profile"
    if not ph.douglas_solution or ph.pde is None:
        return False, "profile does not solve the PDE"
    diff = _c_gap(ab, ph)
    if math.isinf(diff):
        return False, "c of the 1-form is not a function of b^2"
    if diff > 1e-12:
        return False, f"c mismatch ({diff:.3g})"
    return True, "matching c"


def make_pair(ab: AlphaBetaEntry, ph: PhiEntry) -> Pair:
    metric = GeneralABMetric(ab.alpha, ab.beta, ph.phi, name=f"{ab.id}+{ph.id}")
    ok, why = _expected_douglas(ab, ph)
    return Pair(ab, ph, metric, ok, why)


def load_pair(selector: str, dim: int = 3) -> tuple[AlphaBetaEntry | None, PhiEntry | None]:
    """Resolve a selector into at most one alpha/beta entry and one phi entry."""
    ab = ph = None
    for name, params in parse_selector(selector):
        if name in _AB_BUILDERS:
            if ab is not None:
                raise ConfigError("selector names two alpha/beta entries")
            ab = alpha_beta_catalog(name, dim=dim, **params)
        elif name in _PHI_BUILDERS:
            if ph is not None:
                raise ConfigError("selector names two phi entries")
            ph = phi_catalog(name, **params)
        else:
            raise ConfigError(
                f"unknown catalog id {name!r}; known: {', '.join(ALPHA_BETA_IDS + PHI_IDS)}"
            )
    return ab, ph
