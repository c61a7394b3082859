"""Batch verification harness.

``verify --suite douglas --metric catalog:ex72+ex63c0 --samples 100 --seed 42``

Random points come from numpy's PCG64 generator, seeded per suite from
``SeedSequence([seed, suite_index])``; every sample is drawn before any
evaluation, so ``--threads`` never changes the report.  Exit codes: 0 pass,
1 check failure, 2 configuration error, 3 sampling exhaustion.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .catalog import AlphaBetaEntry, PhiEntry, b2_at, load_pair, make_pair
from .errors import ConfigError, DouglasError, SamplingExhaustedError
from .finsler import (
    douglas_tensor,
    douglas_tensor_fd_oracle,
    fundamental_tensor,
    projective_deviation,
    spray_douglas_form,
    spray_eq14,
    spray_first_principles,
)
from .phi import (
    DEFAULT_B2_RANGE,
    aux_quantities,
    lemma23_psi,
    pde02_residual,
    phi_from_generator,
    positivity_check,
)
from .riemann import fit_condition03, metric_matrix

log = logging.getLogger("douglas_ab")

SCHEMA_VERSION = 1
SUITES = ("pde02", "positivity", "spray-consistency", "condition03", "douglas", "generator-vs-closed")
DEFAULT_TOLERANCES = {
    "pde02": 1e-10,
    "positivity": 0.0,
    "spray-consistency": 1e-8,
    "condition03": 1e-10,
    "condition03-kc": 1e-8,
    "douglas": 1e-6,
    "douglas-fd": 1e-3,
    "projective": 1e-8,
    "generator-vs-closed": 1e-8,
    "generator-ratio": 1e-6,
}
MAX_REJECTIONS = 100_000

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_SAMPLING = 0, 1, 2, 3


# -- configuration -------------------------------------------------------------


@dataclass
class RunConfig:
    suite: str
    metric: str
    samples: int = 100
    seed: int = 0
    dimension: int = 3
    tolerances: dict = field(default_factory=dict)
    threads: int = 1
    report: str | None = None
    format: str = "text"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.suite not in SUITES + ("all",):
            raise ConfigError(f"suite: unknown suite {self.suite!r}; expected one of {SUITES + ('all',)}")
        if not isinstance(self.metric, str) or not self.metric.strip():
            raise ConfigError("metric: a selector string is required")
        for name, lo in (("samples", 1), ("dimension", 2), ("threads", 1)):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < lo:
                raise ConfigError(f"{name}: expected an integer >= {lo}, got {v!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed: expected an unsigned 64-bit integer, got {self.seed!r}")
        if self.format not in ("json", "text"):
            raise ConfigError(f"format: expected 'json' or 'text', got {self.format!r}")
        if not isinstance(self.tolerances, dict):
            raise ConfigError("tolerances: expected an object")
        for k, v in self.tolerances.items():
            if k not in DEFAULT_TOLERANCES:
                raise ConfigError(f"tolerances.{k}: unknown key; known: {sorted(DEFAULT_TOLERANCES)}")
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v >= 0:
                raise ConfigError(f"tolerances.{k}: expected a non-negative number")

    def tolerance(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def to_dict(self) -> dict:
        return asdict(self)


_CONFIG_KEYS = {f for f in RunConfig.__dataclass_fields__}


def _load_json(text: str) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - _CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    return data


def parse_config(text: str) -> RunConfig:
    """Parse a JSON run configuration, fill defaults and validate."""
    data = _load_json(text)
    for required in ("suite", "metric"):
        if required not in data:
            raise ConfigError(f"{required}: missing required key")
    return RunConfig(**data)


def emit_config(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"


# -- reports -----------------------------------------------------------------------


@dataclass
class SuiteReport:
    suite: str
    status: str  # "pass", "fail" or "skipped"
    tolerances: dict
    records: list
    aggregate: dict
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status != "fail"


@dataclass
class RunReport:
    config: RunConfig
    suites: list[SuiteReport]
    environment: dict

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def emit_report(report: RunReport, format: str = "json") -> str:
    if format == "json":
        cfg = report.config.to_dict()
        for volatile in ("threads", "report", "format"):
            cfg.pop(volatile)
        doc = {
            "schema_version": SCHEMA_VERSION,
            "passed": report.passed,
            "config": cfg,
            "environment": report.environment,
            "suites": [asdict(s) for s in report.suites],
        }
        return json.dumps(_clean(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if format != "text":
        raise ConfigError(f"unknown report format {format!r}")
    env = report.environment
    lines = [
        f"douglas-ab {env['version']}  metric={env['selector']}  seed={env['seed']}  dim={env['dimension']}",
    ]
    for s in report.suites:
        agg = s.aggregate
        if s.status == "skipped":
            lines.append(f"SKIP {s.suite:<20} {'; '.join(s.notes)}")
            continue
        lines.append(
            f"{s.status.upper():<4} {s.suite:<20} max={agg['max']:.3e} mean={agg['mean']:.3e} "
            f"n={agg['count']} failed={agg['failed']}"
        )
    lines.append("PASS" if report.passed else "FAIL")
    return "\n".join(lines) + "\n"


# -- sampling ------------------------------------------------------------------------


def _rng(seed: int, suite: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, SUITES.index(suite)])))


def _x_predicate(ab: AlphaBetaEntry, ph: PhiEntry | None) -> Callable[[np.ndarray], bool]:
    if ph is not None:
        pair = make_pair(ab, ph)
        return pair.admissible

    def pred(x):
        if not ab.admissible(x):
            return False
        try:
            b2 = b2_at(ab, x)
        except (DouglasError, ArithmeticError, ValueError):
            return False
        return DEFAULT_B2_RANGE[0] <= b2 <= DEFAULT_B2_RANGE[1]

    return pred


def sample_x(rng, ab: AlphaBetaEntry, predicate, count: int) -> list[np.ndarray]:
    out = []
    rejections = 0
    while len(out) < count:
        x = rng.uniform(-ab.box, ab.box, ab.dim)
        if predicate(x):
            out.append(x)
            continue
        rejections += 1
        if rejections >= MAX_REJECTIONS:
            raise SamplingExhaustedError(
                f"no admissible point for {ab.selector} after {rejections} rejections"
            )
    return out


def sample_y(rng, ab: AlphaBetaEntry, x) -> np.ndarray:
    """Uniform on the unit a-sphere at x, scaled by U[0.5, 2]."""
    a = metric_matrix(ab.alpha, x)
    low = np.linalg.cholesky(a)
    u = rng.standard_normal(ab.dim)
    u /= np.linalg.norm(u)
    return np.linalg.solve(low.T, u) * rng.uniform(0.5, 2.0)


def sample_points(rng, ab, ph, count):
    pred = _x_predicate(ab, ph)
    xs = sample_x(rng, ab, pred, count)
    return [(x, sample_y(rng, ab, x)) for x in xs]


# -- suites ----------------------------------------------------------------------------


def _aggregate(records: list[dict]) -> dict:
    values = [r["value"] for r in records if r.get("value") is not None and math.isfinite(r["value"])]
    return {
        "count": len(records),
        "failed": sum(not r["passed"] for r in records),
        "max": max(values) if values else float("nan"),
        "mean": math.fsum(values) / len(values) if values else float("nan"),
    }


def _finish(suite: str, records: list[dict], tolerances: dict, notes=()) -> SuiteReport:
    records = sorted(records, key=lambda r: r["index"])
    status = "pass" if all(r["passed"] for r in records) else "fail"
    return SuiteReport(suite, status, tolerances, records, _aggregate(records), list(notes))


def _skipped(suite: str, why: str) -> SuiteReport:
    return SuiteReport(suite, "skipped", {}, [], _aggregate([]), [why])


def _map(fn, items, threads: int) -> list:
    if threads <= 1:
        return [fn(i, item) for i, item in enumerate(items)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda a: fn(*a), enumerate(items)))


def _guard(fn):
    """Turn library errors at one sample into a failed record."""

    def wrapped(i, item):
        try:
            return fn(i, item)
        except DouglasError as exc:
            if isinstance(item, dict):
                point = item
            elif isinstance(item, tuple):
                point = _xy_point(item)
            else:
                point = {"x": list(map(float, item))}
            return {"index": i, "point": point, "value": None, "residuals": {},
                    "passed": False, "error": f"{type(exc).__name__}: {exc}"}

    return wrapped


def _xy_point(item):
    x, y = item
    return {"x": list(map(float, x)), "y": list(map(float, y))}


def suite_pde02(cfg: RunConfig, ab, ph: PhiEntry | None) -> SuiteReport:
    if ph is None or ph.pde is None:
        return _skipped("pde02", "no profile with declared (c, mu, nu)")
    tol = cfg.tolerance("pde02")
    grid = ph.phi.grid(*ph.grid_shape)

    @_guard
    def one(i, pt):
        b2, s = pt["b2"], pt["s"]
        r = pde02_residual(ph.phi, ph.pde, b2, s)
        return {"index": i, "point": pt, "value": abs(r), "residuals": {"pde02": r}, "passed": abs(r) < tol}

    pts = [{"b2": b2, "s": s} for b2, s in grid]
    return _finish("pde02", _map(one, pts, cfg.threads), {"pde02": tol})


def suite_positivity(cfg: RunConfig, ab, ph: PhiEntry | None) -> SuiteReport:
    if ph is None:
        return _skipped("positivity", "no profile selected")
    rep = positivity_check(ph.phi, ph.phi.grid(*ph.grid_shape), dim=cfg.dimension)
    records = []
    for i, p in enumerate(rep.points):
        margin = min((p.cond2,) if cfg.dimension == 2 else (p.cond1, p.cond2)) if p.phi > 0 else p.phi
        records.append({
            "index": i, "point": {"b2": p.b2, "s": p.s}, "value": margin,
            "residuals": {"phi": p.phi, "cond1": p.cond1, "cond2": p.cond2}, "passed": p.passed,
        })
    notes = [f"min margin {rep.min_margin!r}"]
    if ab is not None:
        pair = make_pair(ab, ph)
        pts = sample_points(_rng(cfg.seed, "positivity"), ab, ph, cfg.samples)

        @_guard
        def one(i, item):
            x, y = item
            g = fundamental_tensor(pair.metric, x, y, check=False)
            lo = float(np.linalg.eigvalsh(g)[0])
            return {"index": i, "point": _xy_point(item), "value": lo,
                    "residuals": {"min_eigenvalue": lo}, "passed": lo > 0}

        offset = len(records)
        for r in _map(one, pts, cfg.threads):
            r["index"] += offset
            records.append(r)
        notes.append(f"fundamental tensor checked at {len(pts)} samples (records from index {offset})")
    return _finish("positivity", records, {"positivity": cfg.tolerance("positivity")}, notes)


SPRAY_FLOOR = 1e-6


def relative_gap(u, v, floor: float = 0.0) -> float:
    """Relative gap of two vectors; ``floor`` guards sprays that vanish identically."""
    scale = max(float(np.linalg.norm(u)), float(np.linalg.norm(v)), floor)
    return float(np.linalg.norm(u - v)) / scale if scale > 0 else 0.0


def suite_spray(cfg: RunConfig, ab, ph) -> SuiteReport:
    if ab is None or ph is None or not ph.phi.jet_capable:
        return _skipped("spray-consistency", "needs an alpha/beta entry and a closed-form profile")
    tol = cfg.tolerance("spray-consistency")
    pair = make_pair(ab, ph)
    pts = sample_points(_rng(cfg.seed, "spray-consistency"), ab, ph, cfg.samples)

    @_guard
    def one(i, item):
        x, y = item
        floor = SPRAY_FLOOR * float(y @ metric_matrix(ab.alpha, x) @ y)
        g_fp = spray_first_principles(pair.metric, x, y).G
        res = {"eq14": relative_gap(g_fp, spray_eq14(pair.metric, x, y).G, floor)}
        if pair.douglas_form_applies:
            g_df, _ = spray_douglas_form(pair.metric, ph.pde, None, x, y, check=False)
            res["douglas_form"] = relative_gap(g_fp, g_df.G, floor)
        value = max(res.values())
        return {"index": i, "point": _xy_point(item), "value": value, "residuals": res, "passed": value < tol}

    notes = [] if pair.douglas_form_applies else ["douglas-form spray not compared (not expected to apply)"]
    return _finish("spray-consistency", _map(one, pts, cfg.threads), {"spray-consistency": tol}, notes)


def suite_condition03(cfg: RunConfig, ab, ph) -> SuiteReport:
    if ab is None:
        return _skipped("condition03", "no alpha/beta entry selected")
    tol, tol_kc = cfg.tolerance("condition03"), cfg.tolerance("condition03-kc")
    pred = _x_predicate(ab, ph)
    xs = sample_x(_rng(cfg.seed, "condition03"), ab, pred, cfg.samples)

    def rel(got, want):
        return abs(got - want) / abs(want) if want != 0 else abs(got)

    @_guard
    def one(i, x):
        fit = fit_condition03(ab.alpha, ab.beta, x)
        res = {"fit": fit.residual_norm, "closedness": fit.closedness_norm, "k": fit.k, "c": fit.c}
        ok = fit.residual_norm < tol and fit.closedness_norm < tol
        expected = ab.expected(x)
        if expected is None:
            ok = ok and fit.parallel
        else:
            res["k_error"] = rel(fit.k, expected[0])
            res["c_error"] = rel(fit.c, expected[1])
            ok = ok and res["k_error"] < tol_kc and res["c_error"] < tol_kc
        value = max(fit.residual_norm, fit.closedness_norm)
        return {"index": i, "point": {"x": list(map(float, x))}, "value": value, "residuals": res, "passed": ok}

    return _finish("condition03", _map(one, xs, cfg.threads), {"condition03": tol, "condition03-kc": tol_kc})


def suite_douglas(cfg: RunConfig, ab, ph) -> SuiteReport:
    if ab is None or ph is None or not ph.phi.jet_capable:
        return _skipped("douglas", "needs an alpha/beta entry and a closed-form profile")
    tol, tol_fd, tol_pd = (cfg.tolerance(k) for k in ("douglas", "douglas-fd", "projective"))
    pair = make_pair(ab, ph)
    pts = sample_points(_rng(cfg.seed, "douglas"), ab, ph, cfg.samples)

    @_guard
    def one(i, item):
        x, y = item
        d = douglas_tensor(pair.metric, x, y)
        fd = douglas_tensor_fd_oracle(pair.metric, x, y)
        res = {
            "sup_norm": d.sup_norm,
            "fd_sup_norm": fd.sup_norm,
            "fd_gap": float(np.max(np.abs(d.D - fd.D))),
            "asymmetry": d.asymmetry(),
        }
        ok = d.sup_norm < tol and res["fd_gap"] < tol_fd
        if ph.pde is not None:
            res["projective_deviation"] = projective_deviation(pair.metric, ph.pde, x, y)
            if pair.douglas_form_applies:
                ok = ok and res["projective_deviation"] < tol_pd
        return {"index": i, "point": _xy_point(item), "value": d.sup_norm, "residuals": res, "passed": ok}

    notes = [f"expected Douglas: {pair.expected_douglas} ({pair.reason})"]
    return _finish("douglas", _map(one, pts, cfg.threads),
                   {"douglas": tol, "douglas-fd": tol_fd, "projective": tol_pd}, notes)


def _bs_samples(rng, ph: PhiEntry, count: int):
    lo, hi = ph.phi.b2_range
    out = []
    for _ in range(count):
        b2 = float(rng.uniform(lo, hi))
        b = math.sqrt(b2)
        s, s2 = (float(v) for v in rng.uniform(-ph.phi.s_fraction * b, ph.phi.s_fraction * b, 2))
        out.append({"b2": b2, "s": s, "s_ref": s2})
    return out


def suite_generator(cfg: RunConfig, ab, ph) -> SuiteReport:
    if ph is None or (ph.generator is None and ph.lemma23 is None):
        return _skipped("generator-vs-closed", "profile has no quadrature construction")
    tol, tol_ratio = cfg.tolerance("generator-vs-closed"), cfg.tolerance("generator-ratio")
    pts = _bs_samples(_rng(cfg.seed, "generator-vs-closed"), ph, cfg.samples)

    if ph.lemma23 is not None:
        i3, i4 = ph.lemma23

        @_guard
        def one(i, pt):
            b2, s = pt["b2"], pt["s"]
            err = abs(aux_quantities(ph.phi, b2, s).Psi - lemma23_psi(i3, i4, b2, s))
            return {"index": i, "point": pt, "value": err, "residuals": {"psi": err}, "passed": err < tol}

        return _finish("generator-vs-closed", _map(one, pts, cfg.threads), {"generator-vs-closed": tol})

    gen = phi_from_generator(ph.generator)

    @_guard
    def one(i, pt):
        b2, s, s_ref = pt["b2"], pt["s"], pt["s_ref"]
        closed = ph.phi.partials(b2, s)
        want = closed.phi - s * closed.phi2
        e49 = abs(gen.phi_minus_s_phi2(b2, s) - want) / max(1.0, abs(want))
        ratio_gen = gen.value(b2, s) / s - gen.value(b2, s_ref) / s_ref
        ratio_cls = ph.phi.value(b2, s) / s - ph.phi.value(b2, s_ref) / s_ref
        er = abs(ratio_gen - ratio_cls) / max(1.0, abs(ratio_cls))
        res = {"identity": e49, "ratio": er}
        return {"index": i, "point": pt, "value": e49, "residuals": res,
                "passed": e49 < tol and er < tol_ratio}

    return _finish("generator-vs-closed", _map(one, pts, cfg.threads),
                   {"generator-vs-closed": tol, "generator-ratio": tol_ratio})


_RUNNERS = {
    "pde02": suite_pde02,
    "positivity": suite_positivity,
    "spray-consistency": suite_spray,
    "condition03": suite_condition03,
    "douglas": suite_douglas,
    "generator-vs-closed": suite_generator,
}


def run_suite(config: RunConfig) -> RunReport:
    """Run the configured suite(s); raises ConfigError or SamplingExhaustedError."""
    if config.dimension == 2:
        log.warning("dimension 2: Douglas metrics coincide with projectively flat ones here")
    ab, ph = load_pair(config.metric, dim=config.dimension)
    names = SUITES if config.suite == "all" else (config.suite,)
    reports = [_RUNNERS[name](config, ab, ph) for name in names]
    if config.suite != "all" and reports[0].status == "skipped":
        raise ConfigError(f"suite {config.suite} does not apply to {config.metric}: {reports[0].notes[0]}")
    env = {
        "version": __version__,
        "rng": "numpy PCG64, SeedSequence([seed, suite index])",
        "seed": config.seed,
        "dimension": config.dimension,
        "samples": config.samples,
        "selector": config.metric,
        "entries": [e.selector for e in (ab, ph) if e is not None],
    }
    if ab is not None and ph is not None:
        pair = make_pair(ab, ph)
        env["expected_douglas"] = pair.expected_douglas
        env["pairing"] = pair.reason
    return RunReport(config, reports, env)


# -- command line ------------------------------------------------------------------------


def _parse_tol(items: Sequence[str]) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--tol expects suite=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise ConfigError(f"--tol {k}: {v!r} is not a number") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="verify", description="Numerical checks for general (alpha, beta)-metrics.")
    p.add_argument("--suite", choices=SUITES + ("all",))
    p.add_argument("--metric", help="selector, e.g. catalog:ex72+ex63c0")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dim", dest="dimension", type=int)
    p.add_argument("--tol", action="append", default=[], metavar="SUITE=VALUE")
    p.add_argument("--threads", type=int)
    p.add_argument("--report", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "text"))
    p.add_argument("--config", help="JSON config file; explicit flags take precedence")
    p.add_argument("--version", action="version", version=__version__)
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    data = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = _load_json(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    for key in ("suite", "metric", "samples", "seed", "dimension", "threads", "report", "format"):
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    if args.tol:
        data["tolerances"] = {**data.get("tolerances", {}), **_parse_tol(args.tol)}
    for required in ("suite", "metric"):
        if required not in data:
            raise ConfigError(f"--{required} is required (flag or config file)")
    return RunConfig(**data)


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        report = run_suite(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SamplingExhaustedError as exc:
        print(f"sampling exhausted: {exc}", file=sys.stderr)
        return EXIT_SAMPLING
    text = emit_report(report, config.format)
    if config.report:
        with open(config.report, "w", encoding="utf-8") as fh:
            fh.write(text)
        if config.format == "json":
            sys.stdout.write(emit_report(report, "text"))
    else:
        sys.stdout.write(text)
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
