import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from douglas_ab import jets
from douglas_ab.catalog import PHI_IDS, phi_catalog
from douglas_ab.errors import AdmissibilityError, DomainError
from douglas_ab.phi import (
    GeneratorSpec,
    PdeParams,
    PhiModel,
    PhiPartials,
    aux_quantities,
    corollary_params,
    generator_terms,
    lem17_ratio,
    lemma22_reduction,
    lemma23_phi,
    lemma23_psi,
    pde02_residual,
    pde02cor_residual,
    phi_from_generator,
    positivity_check,
    zeta,
)

from conftest import central_diff

CLOSED_IDS = [i for i in PHI_IDS if phi_catalog(i).phi.jet_capable]
DOUGLAS_IDS = [i for i in CLOSED_IDS if phi_catalog(i).douglas_solution and phi_catalog(i).pde]


def ex62_closed(b2, s, h=0.0):
    return h * s + math.sqrt(1 - b2 + s * s) / (1 - b2)


def ex63_closed(b2, s, c, h=0.0):
    return 1 + b2**c + h * s + b2 ** (c - 1) * s * s


def ex64_closed(b2, s):
    q = 1 + b2 * b2 - b2 * s * s
    num = (1 + b2) * q + s * s * (1 - b2)
    return num / (1 + b2 * b2) ** 2 * math.sqrt((1 - b2) * math.exp(b2) / q)


def random_bs(rng, count, lo=0.05, hi=0.81, frac=0.95):
    b2 = rng.uniform(lo, hi, count)
    s = rng.uniform(-frac, frac, count) * np.sqrt(b2)
    return list(zip(b2.tolist(), s.tolist()))


@pytest.fixture(scope="module")
def generated():
    return {
        "ex61": phi_from_generator(phi_catalog("ex61", h=0.5).generator),
        "ex62": phi_from_generator(phi_catalog("ex62", h=0.5).generator),
        "ex63": phi_from_generator(phi_catalog("ex63", c=0.5).generator),
        "ex64": phi_from_generator(phi_catalog("ex64").generator),
    }


class TestPartials:
    @pytest.mark.parametrize("pid", CLOSED_IDS)
    def test_against_differences(self, pid, rng):
        model = phi_catalog(pid).phi
        for b2, s in random_bs(rng, 5, frac=0.8):
            p = model.partials(b2, s)
            f = lambda u, v: model.value(u, v)  # noqa: E731
            assert p.phi1 == pytest.approx(central_diff(lambda t: f(b2 + t, s), 0.0), rel=1e-7, abs=1e-8)
            assert p.phi2 == pytest.approx(central_diff(lambda t: f(b2, s + t), 0.0), rel=1e-7, abs=1e-8)
            phi22 = central_diff(lambda t: model.partials(b2, s + t).phi2, 0.0)
            phi12 = central_diff(lambda t: model.partials(b2 + t, s).phi2, 0.0)
            assert p.phi22 == pytest.approx(phi22, rel=1e-7, abs=1e-8)
            assert p.phi12 == pytest.approx(phi12, rel=1e-7, abs=1e-8)

    def test_constant_profile(self):
        p = PhiModel(lambda b2, s: 3.0).partials(0.5, 0.1)
        assert p == PhiPartials(3.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    def test_closed_form_evaluation(self):
        assert phi_catalog("ex61", h=1.0).phi.value(0.4, 0.3) == pytest.approx(1.3)
        assert phi_catalog("ex62").phi.value(0.5, 0.3) == pytest.approx(1.536229, abs=5e-7)

    def test_quadrature_model_rejects_jets(self):
        model = lemma23_phi(0.1, 0.2)
        X, S = jets.seed(jets.jet_space(2, 1), [0.5, 0.1])
        with pytest.raises(TypeError):
            model(X, S)


class TestAuxQuantities:
    def test_randers(self):
        model = PhiModel(lambda b2, s: 1 + s)
        for s in (-0.3, 0.0, 0.4):
            aux = aux_quantities(model, 0.5, s)
            assert aux.Q == pytest.approx(1.0)
            assert aux.Theta == pytest.approx(1 / (2 * (1 + s)))
            assert aux.Psi == 0.0

    def test_riemannian_type(self):
        model = phi_catalog("lem22").phi
        for s in (-0.5, 0.2, 0.6):
            assert aux_quantities(model, 0.5, s).Q == pytest.approx(2 * s, rel=1e-14)

    def test_b2_independent_profile(self):
        model = PhiModel(lambda b2, s: 1 + s + 0.5 * s * s)
        aux = aux_quantities(model, 0.6, 0.3)
        assert (aux.R, aux.Pi, aux.Omega, aux.Xi) == (0.0, 0.0, 0.0, 0.0)

    def test_first_condition_failure(self):
        with pytest.raises(AdmissibilityError) as info:
            aux_quantities(PhiModel(lambda b2, s: 0.5 + 3 * s * s), 0.5, 0.6)
        assert info.value.condition == "phi - s phi_2 > 0"

    def test_second_condition_failure(self):
        model = PhiModel(lambda b2, s: 1 - 2 * s * s + 0.0 * b2)
        with pytest.raises(AdmissibilityError) as info:
            aux_quantities(model, 0.81, 0.1)
        assert "phi_22" in info.value.condition


class TestPde02:
    def test_randers_exact(self, rng):
        entry = phi_catalog("ex61", h=0.7)
        for b2, s in random_bs(rng, 50):
            assert pde02_residual(entry.phi, entry.pde, b2, s) == 0.0

    @pytest.mark.parametrize("pid,params,tol", [("ex62", {"h": 0.3}, 1e-12), ("ex64", {}, 1e-10)])
    def test_closed_forms_on_grid(self, pid, params, tol):
        entry = phi_catalog(pid, **params)
        grid = [(b2, s) for b2 in np.linspace(0.1, 0.8, 15)
                for s in np.linspace(-0.95, 0.95, 15) * math.sqrt(b2)]
        assert max(abs(pde02_residual(entry.phi, entry.pde, b2, s)) for b2, s in grid) < tol

    def test_ex64_point(self):
        entry = phi_catalog("ex64")
        assert entry.phi.value(0.25, 0.2) == pytest.approx(ex64_closed(0.25, 0.2), rel=1e-15)
        assert abs(pde02_residual(entry.phi, entry.pde, 0.25, 0.2)) < 1e-10

    def test_lemma22_parameters(self, rng):
        for iota1 in (0.5, 2.0, 3.0):
            entry = phi_catalog("lem22", iota1=iota1, iota2=1.7)
            for b2, s in random_bs(rng, 20):
                assert abs(pde02_residual(entry.phi, entry.pde, b2, s)) < 1e-13

    def test_perturbation_breaks_pde(self):
        entry = phi_catalog("perturbed")
        assert abs(pde02_residual(entry.phi, entry.pde, 0.5, 0.3)) > 1e-3

    @given(b2=st.floats(0.05, 0.81), frac=st.floats(-0.95, 0.95), amp=st.floats(-2, 2))
    @settings(max_examples=40, deadline=None)
    def test_linear_in_phi(self, b2, frac, amp):
        s = frac * math.sqrt(b2)
        params = PdeParams(lambda t: 1 - t, lambda t: 0.3 * t, lambda t: jets.sqrt(t))
        fa = lambda u, v: jets.exp(u * v) + v * v * v  # noqa: E731
        fb = lambda u, v: amp * u * v * v + jets.sqrt(1 + v * v)  # noqa: E731
        total = pde02_residual(PhiModel(lambda u, v: fa(u, v) + fb(u, v)), params, b2, s)
        parts = pde02_residual(PhiModel(fa), params, b2, s) + pde02_residual(PhiModel(fb), params, b2, s)
        assert total == pytest.approx(parts, abs=1e-12)

    @pytest.mark.parametrize("pid", DOUGLAS_IDS)
    def test_ratio_identity_on_solutions(self, pid, rng):
        entry = phi_catalog(pid)
        for b2, s in random_bs(rng, 30):
            left, right = lem17_ratio(entry.phi, entry.pde, b2, s)
            assert left == pytest.approx(right, abs=1e-8)


class TestIdentities:
    @pytest.mark.parametrize("pid", CLOSED_IDS)
    def test_s_derivative_of_first_condition(self, pid, rng):
        model = phi_catalog(pid).phi
        space = jets.jet_space(2, 3)
        for b2, s in random_bs(rng, 200):
            B, S = jets.seed(space, [b2, s])
            p = model(B, S)
            low = jets.jet_space(2, 2)
            first = p.project(low) - S.project(low) * p.diff(1)  # phi - s phi_2
            lhs = first.derivative((0, 1))
            assert lhs == pytest.approx(-s * p.derivative((0, 2)), abs=1e-10)

    def test_s_derivative_for_quadrature_profile(self):
        model = lemma23_phi(0.1, 0.2)
        for s in (-0.4, 0.05, 0.5):
            d = central_diff(lambda t: model.phi_minus_s_phi2(0.5, s + t), 0.0, 1e-4)
            assert d == pytest.approx(-s * model.partials(0.5, s).phi22, abs=1e-9)


class TestPositivity:
    def test_randers(self):
        model = PhiModel(lambda b2, s: 1 + s, b0=1.0)
        rep = positivity_check(model, model.grid(10, 10))
        assert rep.passed
        assert all(p.cond1 == pytest.approx(1.0) and p.cond2 == pytest.approx(1.0) for p in rep.points)

    def test_quadratic_family_margin(self):
        entry = phi_catalog("ex63c0")
        rep = positivity_check(entry.phi, entry.phi.grid(20, 20))
        assert rep.passed
        assert min(p.cond1 for p in rep.points) >= 1 - 1e-12

    def test_boundary_profile_fails(self):
        rep = positivity_check(PhiModel(lambda b2, s: s + 0.0 * b2), [(0.36, 0.6)])
        assert not rep.passed and rep.min_margin <= 0
        assert rep.failures[0].cond1 == 0.0

    def test_dimension_two_mode(self):
        model = PhiModel(lambda b2, s: 1 + 4 * s * s)
        assert not positivity_check(model, [(0.5, 0.6)]).passed
        rep = positivity_check(model, [(0.5, 0.6)], dim=2)
        assert rep.passed and rep.mode == 2

    @pytest.mark.parametrize("pid", PHI_IDS)
    def test_catalog(self, pid):
        entry = phi_catalog(pid)
        rep = positivity_check(entry.phi, entry.phi.grid(12, 12))
        assert rep.passed and rep.min_margin > 0


class TestZeta:
    def test_randers_setting(self):
        spec = GeneratorSpec(jets.sqrt, PdeParams.of(1.0, 0.0, 0.0))
        assert zeta(spec.params, spec, 0.5, 0.3) == pytest.approx(0.5 - 0.09, rel=1e-15)

    def test_constant_c(self):
        c, anchor = 0.3, 0.4
        spec = GeneratorSpec(jets.sqrt, PdeParams.of(c, 0.0, 0.0), b2_anchor=anchor)
        for b2, s in [(0.2, 0.1), (0.7, -0.5)]:
            want = (b2 - s * s) * (b2 / anchor) ** (c - 1)
            assert zeta(spec.params, spec, b2, s) == pytest.approx(want, rel=1e-11)

    def test_example64_setting(self):
        spec = phi_catalog("ex64").generator
        for b2, s in [(0.3, 0.2), (0.6, -0.7)]:
            want = (b2 - s * s) * (1 - b2) / (1 + b2 - s * s)
            assert zeta(spec.params, spec, b2, s) == pytest.approx(want, rel=1e-11)
        E, I, xi = generator_terms(spec.params, spec, 0.5)
        assert (E, I, xi) == pytest.approx((2.0, 2.0, math.exp(0.25)), rel=1e-11)

    def test_vanishing_denominator(self):
        spec = GeneratorSpec(jets.sqrt, PdeParams.of(1.0, 0.0, 0.0), i_offset=-1 / 0.41)
        with pytest.raises(DomainError):
            zeta(spec.params, spec, 0.5, 0.3)


class TestGenerator:
    def test_randers_first_condition(self, generated):
        for b2, s in [(0.2, 0.1), (0.5, -0.6), (0.7, 0.0)]:
            assert generated["ex61"].phi_minus_s_phi2(b2, s) == pytest.approx(1.0, abs=1e-14)
            assert generated["ex61"].value(b2, s) == pytest.approx(1 + 0.5 * s, abs=1e-12)

    def test_ex62_at_point(self, generated):
        p = phi_catalog("ex62", h=0.5).phi.partials(0.5, 0.3)
        want = p.phi - 0.3 * p.phi2
        assert generated["ex62"].phi_minus_s_phi2(0.5, 0.3) == pytest.approx(want, abs=1e-10)
        assert want == pytest.approx(0.5 / (0.5 * math.sqrt(0.59)), rel=1e-14)

    def test_ex63_ratio_differences(self, generated, rng):
        for b2, s in random_bs(rng, 10):
            s_ref = 0.3 * math.sqrt(b2)
            got = generated["ex63"].value(b2, s) / s - generated["ex63"].value(b2, s_ref) / s_ref
            want = ex63_closed(b2, s, 0.5) / s - ex63_closed(b2, s_ref, 0.5) / s_ref
            assert got == pytest.approx(want, rel=1e-9, abs=1e-9)

    def test_ex64_closed_form(self, generated, rng):
        for b2, s in random_bs(rng, 10):
            assert generated["ex64"].value(b2, s) == pytest.approx(ex64_closed(b2, s), rel=1e-10)

    def test_quadrature_partials_against_differences(self, generated):
        model = generated["ex64"]
        for b2, s in [(0.3, 0.2), (0.6, -0.5), (0.5, 0.01)]:
            p = model.partials(b2, s)
            assert p.phi2 == pytest.approx(central_diff(lambda t: model.value(b2, s + t), 0.0, 1e-4), rel=1e-8)
            assert p.phi22 == pytest.approx(
                central_diff(lambda t: model.partials(b2, s + t).phi2, 0.0, 1e-4), rel=1e-7
            )
            want = (p.phi1, p.phi12)
            closed = phi_catalog("ex64").phi.partials(b2, s)
            assert want == pytest.approx((closed.phi1, closed.phi12), rel=1e-7)

    def test_residual_of_generated_profile(self, generated):
        entry = phi_catalog("ex64")
        for b2, s in [(0.3, 0.2), (0.6, -0.5)]:
            assert abs(pde02_residual(generated["ex64"], entry.pde, b2, s)) < 1e-8

    def test_anchor_invariance(self):
        base = phi_catalog("ex63", c=0.5).generator
        anchored = GeneratorSpec(**{**base.__dict__, "s_anchor": lambda b: 0.5 * b})
        p0, p1 = phi_from_generator(base), phi_from_generator(anchored)
        b2 = 0.45
        for s in (-0.5, 0.2, 0.6):
            assert p0.phi_minus_s_phi2(b2, s) == pytest.approx(p1.phi_minus_s_phi2(b2, s), rel=1e-14)
        d0 = p0.value(b2, 0.2) / 0.2 - p0.value(b2, 0.6) / 0.6
        d1 = p1.value(b2, 0.2) / 0.2 - p1.value(b2, 0.6) / 0.6
        assert d0 == pytest.approx(d1, rel=1e-10)

    def test_outside_domain(self, generated):
        with pytest.raises(DomainError):
            generated["ex62"].value(0.25, 0.6)


class TestLemma22:
    def test_detects_riemannian_type(self):
        v = lemma22_reduction(PhiModel(lambda b2, s: jets.sqrt(1 + 2 * s * s)), 0.5)
        assert v.riemannian_type and v.iota1 == pytest.approx(2.0) and v.deviation < 1e-12

    def test_rejects_randers(self):
        assert not lemma22_reduction(PhiModel(lambda b2, s: 1 + s), 0.5).riemannian_type

    def test_scaled(self):
        v = lemma22_reduction(PhiModel(lambda b2, s: 3 * jets.sqrt(1 + 0.5 * s * s)), 0.3)
        assert (v.iota1, v.iota2) == pytest.approx((0.5, 3.0))


class TestLemma23:
    def test_linear_when_psi_vanishes(self):
        model = lemma23_phi(0.0, 0.0, 1.3, 0.4)
        for s in (-0.5, 0.1, 0.6):
            p = model.partials(0.5, s)
            assert p.phi22 == 0.0
            assert p.phi == pytest.approx(1.3 + 0.4 * s)

    def test_constant_psi(self):
        model = lemma23_phi(0.3, 0.0)
        b = math.sqrt(0.5)
        for s in np.linspace(-0.9 * b, 0.9 * b, 20):
            assert aux_quantities(model, 0.5, s).Psi == pytest.approx(0.3, abs=1e-8)

    def test_generic_round_trip(self):
        model = lemma23_phi(0.1, 0.2)
        b = math.sqrt(0.5)
        for s in np.linspace(-0.9 * b, 0.9 * b, 15):
            got = aux_quantities(model, 0.5, s).Psi
            assert got == pytest.approx(lemma23_psi(0.1, 0.2, 0.5, s), abs=1e-8)

    def test_exponent_singularity(self):
        with pytest.raises(DomainError):
            lemma23_phi(0.1, 1.0).value(0.5, 0.2)


class TestCorollaryMap:
    @given(b2=st.floats(0.05, 0.81), frac=st.floats(-0.95, 0.95),
           f0=st.floats(-2, 2), e0=st.floats(-2, 2))
    @settings(max_examples=40, deadline=None)
    def test_residuals_are_proportional(self, b2, frac, f0, e0):
        s = frac * math.sqrt(b2)
        f = lambda t: f0 + 0.5 * t  # noqa: E731
        eta = lambda t: e0 * t  # noqa: E731
        model = PhiModel(lambda u, v: jets.exp(u * v) + v * v + 2)
        r02 = pde02_residual(model, corollary_params(f, eta), b2, s)
        rcor = pde02cor_residual(model, f, eta, b2, s)
        assert r02 == pytest.approx(-b2**2.5 * rcor, rel=1e-10, abs=1e-12)

    def test_zero_parameters(self):
        model = phi_from_generator(GeneratorSpec(lambda z: jets.sqrt(z / (1 - z)), PdeParams.of(1, 0, 0)))
        for b2, s in [(0.3, 0.1), (0.6, -0.4)]:
            r02 = pde02_residual(model, corollary_params(0.0, 0.0), b2, s)
            rcor = pde02cor_residual(model, 0.0, 0.0, b2, s)
            assert abs(r02) < 1e-9 and abs(rcor) < 1e-8
