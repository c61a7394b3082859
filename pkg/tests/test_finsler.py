import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from douglas_ab.catalog import euclidean_alpha, flat_randers, make_pair, phi_catalog
from douglas_ab.errors import AdmissibilityError, NotPositiveDefiniteError, PreconditionError
from douglas_ab.finsler import (
    GeneralABMetric,
    douglas_tensor,
    douglas_tensor_fd_oracle,
    evaluate_F,
    fundamental_tensor,
    projective_deviation,
    spray_douglas_form,
    spray_eq14,
    spray_first_principles,
)
from douglas_ab.phi import PhiModel
from douglas_ab.riemann import OneForm, decompose_beta, metric_matrix

from conftest import fd_gradient

FLAT_B = (0.3, 0.2, 0.1)


def flat_metric(phi_id="ex61", **params):
    return make_pair(flat_randers(FLAT_B), phi_catalog(phi_id, **params)).metric


class TestEvaluation:
    def test_euclidean_one(self):
        m = flat_metric("one")
        assert evaluate_F(m, [0.1, 0.2, 0.3], [3.0, 4.0, 0.0]) == pytest.approx(5.0)

    def test_randers_value(self):
        m = flat_metric("ex61", h=1.0)
        assert evaluate_F(m, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]) == pytest.approx(1.3)

    @given(lam=st.floats(0.01, 100), y=st.lists(st.floats(-2, 2), min_size=3, max_size=3))
    @settings(max_examples=50, deadline=None)
    def test_positive_homogeneity(self, lam, y):
        y = np.array(y)
        if np.linalg.norm(y) < 1e-3:
            return
        m = flat_metric("ex62", h=0.5)
        assert evaluate_F(m, np.zeros(3), lam * y) == pytest.approx(lam * evaluate_F(m, np.zeros(3), y), rel=1e-12)

    def test_zero_vector_rejected(self):
        with pytest.raises(Exception):
            evaluate_F(flat_metric(), np.zeros(3), np.zeros(3))

    def test_b_beyond_range(self):
        big = make_pair(flat_randers((0.9, 0.5, 0.0)), phi_catalog("ex62")).metric
        with pytest.raises(AdmissibilityError) as info:
            evaluate_F(big, np.zeros(3), [1.0, 0.0, 0.0])
        assert info.value.condition == "b < b0"

    def test_nonpositive_phi(self):
        m = GeneralABMetric(euclidean_alpha(), OneForm(lambda x: [0.5, 0.0, 0.0]), PhiModel(lambda b2, s: 1 + 4 * s))
        with pytest.raises(AdmissibilityError):
            evaluate_F(m, np.zeros(3), [-1.0, 0.0, 0.0])


class TestFundamentalTensor:
    def test_riemannian_profile(self, pair_factory, draw):
        pair = pair_factory("ex72", "one")
        for x, y in draw(pair, 5):
            g = fundamental_tensor(pair.metric, x, y)
            np.testing.assert_allclose(g, metric_matrix(pair.ab.alpha, x), rtol=1e-13, atol=1e-15)

    def test_randers_determinant(self, rng):
        m = flat_metric("ex61", h=1.0)
        b = np.array(FLAT_B)
        for _ in range(10):
            y = rng.normal(size=3)
            g = fundamental_tensor(m, np.zeros(3), y)
            ratio = 1 + b @ y / np.linalg.norm(y)
            assert np.linalg.det(g) == pytest.approx(ratio**4, rel=1e-12)

    @pytest.mark.parametrize("phi_id,params", [("ex62", {"h": 0.5}), ("ex63c0", {}), ("ex64", {})])
    def test_euler_identity(self, phi_id, params, pair_factory, draw):
        pair = pair_factory("ex72", phi_id, phi_params=params)
        for x, y in draw(pair, 5):
            g = fundamental_tensor(pair.metric, x, y)
            assert y @ g @ y == pytest.approx(evaluate_F(pair.metric, x, y) ** 2, rel=1e-12)

    def test_hessian_of_energy(self, rng):
        m = flat_metric("ex64")
        y = rng.normal(size=3)
        x = np.zeros(3)
        grad = lambda v: fd_gradient(lambda w: 0.5 * evaluate_F(m, x, w) ** 2, v, 1e-4)  # noqa: E731
        hess = fd_gradient(grad, y, 1e-4)
        np.testing.assert_allclose(fundamental_tensor(m, x, y), hess, rtol=1e-6, atol=1e-7)

    def test_indefinite_detected(self):
        m = GeneralABMetric(euclidean_alpha(), OneForm(lambda x: [0.8, 0.0, 0.0]),
                            PhiModel(lambda b2, s: 1 + 4 * s * s, b0=1.0))
        y = np.array([1.0, 0.1, 0.0])
        with pytest.raises(NotPositiveDefiniteError):
            fundamental_tensor(m, np.zeros(3), y)
        assert np.min(np.linalg.eigvalsh(fundamental_tensor(m, np.zeros(3), y, check=False))) < 0


class TestSpray:
    def test_constant_curvature(self, pair_factory, draw):
        pair = pair_factory("ex71", "one")
        for x, y in draw(pair, 5):
            dec = decompose_beta(pair.ab.alpha, pair.ab.beta, x)
            np.testing.assert_allclose(spray_first_principles(pair.metric, x, y).G, dec.alpha_spray(y),
                                       rtol=1e-12, atol=1e-13)

    def test_constant_coefficients_vanish(self, rng):
        m = flat_metric("ex62", h=0.5)
        G = spray_first_principles(m, rng.normal(size=3), rng.normal(size=3)).G
        np.testing.assert_allclose(G, 0.0, atol=1e-14)

    def test_randers_formula(self, pair_factory, draw):
        """G = G_alpha + (e00 / (2F) - s0) y + alpha s^i_0 for F = alpha + beta."""
        pair = pair_factory("ex72", "ex61", phi_params={"h": 1.0})
        for x, y in draw(pair, 10):
            dec = decompose_beta(pair.ab.alpha, pair.ab.beta, x)
            alpha = math.sqrt(y @ dec.a @ y)
            beta = dec.b @ y
            F = alpha + beta
            e00 = dec.r00(y) + 2 * beta * dec.s0(y)
            want = dec.alpha_spray(y) + (e00 / (2 * F) - dec.s0(y)) * y + alpha * dec.s_up0(y)
            np.testing.assert_allclose(spray_first_principles(pair.metric, x, y).G, want, rtol=1e-11, atol=1e-12)

    @pytest.mark.parametrize("ab_id,phi_id,params", [
        ("ex72", "ex63c0", {}),
        ("ex71c1", "ex62", {"h": 0.5}),
        ("ex73", "ex64", {"h": 0.3}),
        ("ex72", "perturbed", {}),
    ])
    def test_eq14_matches_first_principles(self, ab_id, phi_id, params, pair_factory, draw):
        pair = pair_factory(ab_id, phi_id, phi_params=params)
        for x, y in draw(pair, 5):
            G1 = spray_first_principles(pair.metric, x, y).G
            G2 = spray_eq14(pair.metric, x, y).G
            np.testing.assert_allclose(G2, G1, rtol=1e-9, atol=1e-10 * np.linalg.norm(G1))

    @pytest.mark.parametrize("ab_id,phi_id,params", [
        ("ex72", "ex63c0", {}),
        ("ex71c1", "ex61", {"h": 0.5}),
        ("ex71c1", "ex62", {"h": 0.5}),
        ("ss", "lem22", {}),
    ])
    def test_douglas_form_matches(self, ab_id, phi_id, params, pair_factory, draw):
        pair = pair_factory(ab_id, phi_id, phi_params=params)
        assert pair.douglas_form_applies
        for x, y in draw(pair, 5):
            G1 = spray_first_principles(pair.metric, x, y).G
            G3, _ = spray_douglas_form(pair.metric, pair.phi.pde, None, x, y)
            np.testing.assert_allclose(G3.G, G1, rtol=1e-9, atol=1e-10 * np.linalg.norm(G1))

    def test_quadratic_in_y(self, pair_factory, draw):
        pair = pair_factory("ex73", "ex64")
        for x, y in draw(pair, 3):
            for lam in (0.5, 3.0):
                np.testing.assert_allclose(spray_first_principles(pair.metric, x, lam * y).G,
                                           lam**2 * spray_first_principles(pair.metric, x, y).G, rtol=1e-11)

    def test_precondition_violated(self, pair_factory, draw):
        pair = pair_factory("ex72", "ex64")
        (x, y), = draw(pair, 1)
        with pytest.raises(PreconditionError) as info:
            spray_douglas_form(pair.metric, pair.phi.pde, None, x, y)
        assert info.value.residuals["c"] > 1e-3

    def test_wrong_profile(self, pair_factory, draw):
        pair = pair_factory("ex72", "perturbed")
        (x, y), = draw(pair, 1)
        with pytest.raises(PreconditionError) as info:
            spray_douglas_form(pair.metric, pair.phi.pde, None, x, y)
        assert info.value.residuals["pde02"] > 1e-3


class TestDouglasTensor:
    @pytest.mark.parametrize("ab_id,phi_id,params", [
        ("ex72", "ex63c0", {}),
        ("ex71c1", "ex62", {"h": 0.5}),
        ("ss", "lem22", {}),
        ("flat", "ex64", {}),
    ])
    def test_vanishes_on_solutions(self, ab_id, phi_id, params, pair_factory, draw):
        pair = pair_factory(ab_id, phi_id, phi_params=params)
        assert pair.expected_douglas
        for x, y in draw(pair, 3):
            assert douglas_tensor(pair.metric, x, y).sup_norm < 1e-6

    def test_negative_control(self, pair_factory, draw):
        pair = pair_factory("ex72", "perturbed")
        assert not pair.expected_douglas
        values = [douglas_tensor(pair.metric, x, y).sup_norm for x, y in draw(pair, 5)]
        assert min(values) > 1e-3

    def test_mismatched_c(self, pair_factory, draw):
        pair = pair_factory("ex72", "ex64", phi_params={"h": 0.5})
        assert not pair.expected_douglas
        assert max(douglas_tensor(pair.metric, x, y).sup_norm for x, y in draw(pair, 3)) > 1e-3

    def test_oracle_agreement(self, pair_factory, draw):
        pair = pair_factory("ex72", "perturbed")
        for x, y in draw(pair, 2):
            jet = douglas_tensor(pair.metric, x, y)
            fd = douglas_tensor_fd_oracle(pair.metric, x, y)
            assert np.max(np.abs(jet.D - fd.D)) < 1e-3 * max(1.0, jet.sup_norm)

    def test_symmetry(self, pair_factory, draw):
        pair = pair_factory("ex73", "perturbed")
        for x, y in draw(pair, 2):
            d = douglas_tensor(pair.metric, x, y)
            assert d.asymmetry() < 1e-10 * max(1.0, d.sup_norm)

    def test_trace_free(self, pair_factory, draw):
        pair = pair_factory("ex72", "perturbed")
        (x, y), = draw(pair, 1)
        D = douglas_tensor(pair.metric, x, y).D
        np.testing.assert_allclose(np.einsum("iikl->kl", D), 0.0, atol=1e-10)

    def test_euclidean_zero(self):
        m = GeneralABMetric(euclidean_alpha(), OneForm(lambda x: [0.0 * x[0] + 0.2, 0.0, 0.0]),
                            phi_catalog("one").phi)
        assert douglas_tensor(m, [0.1, 0.2, 0.3], [1.0, -0.5, 0.2]).sup_norm < 1e-14
        assert douglas_tensor_fd_oracle(m, [0.1, 0.2, 0.3], [1.0, -0.5, 0.2]).sup_norm < 1e-8

    def test_homogeneity(self, pair_factory, draw):
        pair = pair_factory("ex72", "perturbed")
        (x, y), = draw(pair, 1)
        D1 = douglas_tensor(pair.metric, x, y).D
        D2 = douglas_tensor(pair.metric, x, 2.5 * y).D
        np.testing.assert_allclose(D2, D1 / 2.5, rtol=1e-9, atol=1e-12)


class TestProjectiveDeviation:
    def test_zero_for_solution(self, pair_factory, draw):
        pair = pair_factory("ex71c1", "ex62", phi_params={"h": 0.5})
        for x, y in draw(pair, 5):
            assert projective_deviation(pair.metric, pair.phi.pde, x, y) < 1e-8

    def test_positive_for_perturbed(self, pair_factory, draw):
        pair = pair_factory("ex72", "perturbed")
        values = [projective_deviation(pair.metric, pair.phi.pde, x, y) for x, y in draw(pair, 5)]
        assert min(values) > 1e-4

    def test_invariant_under_y_shift(self, pair_factory, draw):
        pair = pair_factory("ex72", "ex63c0")
        (x, y), = draw(pair, 1)
        assert projective_deviation(pair.metric, pair.phi.pde, x, 2 * y) < 1e-8
