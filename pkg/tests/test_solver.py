"""Closed-form interpolation solver against its brute-force oracle.

Frozen expected values for the (0.6, 0.8) instance were produced by
oracle_alpha (grid plus bisection to 1e-12) and are pinned here so any
regression in either path is caught.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairsphere import (
    DegenerateInput,
    Embedding,
    closed_form_alpha,
    cross_utility_bound,
    debias,
    debias_batch,
    debias_extreme,
    normalized_leakage,
    normalized_loss,
    oracle_alpha,
    pareto_point,
    self_utility_loss,
)
from fairsphere.solver import MODE_FULL_PROJECTION, MODE_IDENTITY

from conftest import embedding_with_norms, random_subspace

# oracle_alpha(0.6, 0.8) and the quantities derived from it
ALPHA_STAR = 0.23915981312599022
LOSS_STAR = 0.0797199377086634
DOT_STAR = 1.0 - LOSS_STAR
CROSS_TERM_STAR = 0.39929923042416043


def norm_pair(theta: float) -> tuple[float, float]:
    return float(np.cos(theta)), float(np.sin(theta))


class TestClosedForm:
    def test_worked_instance(self):
        alpha = closed_form_alpha(0.6, 0.8)
        assert alpha == pytest.approx(ALPHA_STAR, abs=1e-12)
        assert alpha == pytest.approx(0.23916, abs=1e-4)

    def test_worked_instance_equalization(self):
        alpha = closed_form_alpha(0.6, 0.8)
        lt = normalized_leakage(alpha, 0.6)
        vt = normalized_loss(alpha, 0.6, 0.8)
        assert lt == pytest.approx(vt, abs=1e-9)
        assert lt == pytest.approx(0.39860, abs=1e-5)

    def test_symmetric_instance(self):
        p = q = 1.0 / np.sqrt(2.0)
        alpha = closed_form_alpha(p, q)
        assert 0.0 < alpha < p
        gap = normalized_leakage(alpha, p) - normalized_loss(alpha, p, q)
        assert abs(gap) < 1e-10

    def test_oracle_agreement_seeded(self):
        rng = np.random.default_rng(7)
        thetas = rng.uniform(1e-3, np.pi / 2 - 1e-3, size=2000)
        for theta in thetas:
            p, q = norm_pair(theta)
            closed = closed_form_alpha(p, q)
            brute = oracle_alpha(p, q)
            assert abs(closed - brute) <= 1e-9

    def test_near_degenerate_agreement(self):
        # just above the degenerate threshold on either side
        for p in (2e-6, 1 - 1e-9):
            q = float(np.sqrt(1.0 - p * p))
            if not (1e-6 < q < 1.0):
                continue
            closed = closed_form_alpha(p, q)
            brute = oracle_alpha(p, q)
            assert abs(closed - brute) <= 1e-8

    def test_rejects_degenerate_norms(self):
        with pytest.raises(DegenerateInput):
            closed_form_alpha(0.0, 1.0)
        with pytest.raises(DegenerateInput):
            closed_form_alpha(1e-7, np.sqrt(1 - 1e-14))
        with pytest.raises(DegenerateInput):
            closed_form_alpha(np.sqrt(1 - 1e-14), 1e-7)

    def test_rejects_non_unit_pair(self):
        with pytest.raises(DegenerateInput):
            closed_form_alpha(0.6, 0.7)

    def test_feasibility_strict(self):
        rng = np.random.default_rng(11)
        for theta in rng.uniform(1e-2, np.pi / 2 - 1e-2, size=500):
            p, q = norm_pair(theta)
            alpha = closed_form_alpha(p, q)
            e_const = p + (1.0 - q) / p
            assert alpha < p
            assert alpha < 1.0 / e_const

    # both component norms must stay inside (1e-6, 1 - 1e-6); the angular
    # margin arccos(1 - 1e-6) ~ 1.414e-3 keeps them there
    @given(st.floats(min_value=1.5e-3, max_value=np.pi / 2 - 1.5e-3))
    @settings(max_examples=200, deadline=None)
    def test_equalization_property(self, theta):
        p, q = norm_pair(theta)
        alpha = closed_form_alpha(p, q)
        assert 0.0 < alpha < p
        gap = normalized_leakage(alpha, p) - normalized_loss(alpha, p, q)
        assert abs(gap) <= 1e-9


class TestOracle:
    def test_grid_floor(self):
        with pytest.raises(ValueError):
            oracle_alpha(0.6, 0.8, grid_points=999)

    def test_worked_instance(self):
        assert oracle_alpha(0.6, 0.8) == pytest.approx(0.23916, abs=1e-4)

    def test_minimax_dominates_weighted_sums(self):
        # the equalized value is the minimax; no weighted-sum optimum can
        # have a smaller weighted objective than that ceiling
        rng = np.random.default_rng(3)
        p, q = 0.6, 0.8
        alpha_star = closed_form_alpha(p, q)
        ceiling = max(
            normalized_leakage(alpha_star, p), normalized_loss(alpha_star, p, q)
        )
        grid = np.linspace(0.0, p, 10_000)
        lt = normalized_leakage(grid, p)
        vt = normalized_loss(grid, p, q)
        for _ in range(100):
            w1 = rng.uniform()
            w2 = 1.0 - w1
            assert np.min(w1 * lt + w2 * vt) <= ceiling + 1e-9

    def test_monotone_curves(self):
        p, q = 0.6, 0.8
        grid = np.linspace(0.0, p, 10_000)
        leak = grid
        loss = self_utility_loss(grid, p, q)
        assert np.all(np.diff(leak) > 0)
        assert np.all(np.diff(loss) < 0)


class TestParetoPoint:
    def test_defining_formula(self):
        rng = np.random.default_rng(5)
        for theta in rng.uniform(1e-2, np.pi / 2 - 1e-2, size=200):
            p, q = norm_pair(theta)
            alpha = float(rng.uniform(0.0, p))
            pt = pareto_point(alpha, p, q)
            direct = 1.0 - alpha * p - np.sqrt(1.0 - alpha * alpha) * q
            assert pt.leakage == alpha
            assert pt.self_utility_loss == pytest.approx(direct, abs=1e-12)
            assert pt.normalized_leakage == pytest.approx(alpha / p, abs=1e-12)


class TestDebias:
    def test_worked_instance_geometry(self, axis_subspace):
        e = Embedding(id="w", vector=np.array([0.6, 0.8, 0.0]), modality="image")
        res = debias(e, axis_subspace)
        assert res.degenerate == "none"
        assert res.alpha_star == pytest.approx(ALPHA_STAR, abs=1e-12)
        expected = np.array(
            [res.alpha_star, np.sqrt(1 - res.alpha_star**2), 0.0]
        )
        np.testing.assert_allclose(res.u_star, expected, atol=1e-12)
        assert np.linalg.norm(res.u_star) == pytest.approx(1.0, abs=1e-9)
        assert float(res.u_star @ e.vector) == pytest.approx(DOT_STAR, abs=1e-9)
        assert float(res.u_star @ e.vector) == pytest.approx(
            1.0 - res.self_utility_loss, abs=1e-9
        )
        assert res.self_utility_loss == pytest.approx(
            0.2 * res.alpha_star / 0.6, abs=1e-9
        )
        assert res.cross_bound_term == pytest.approx(CROSS_TERM_STAR, abs=1e-9)

    def test_leakage_identity(self, rng):
        sub = random_subspace(rng, 16)
        for p in (0.1, 0.5, 0.9):
            e = embedding_with_norms(rng, sub, p)
            res = debias(e, sub)
            parallel = sub.basis @ (sub.basis.T @ res.u_star)
            assert np.linalg.norm(parallel) == pytest.approx(res.alpha_star, abs=1e-9)
            e_par = sub.basis @ (sub.basis.T @ e.vector)
            cosine = float(parallel @ e_par) / (
                np.linalg.norm(parallel) * np.linalg.norm(e_par)
            )
            assert cosine >= 1.0 - 1e-9

    def test_span_restriction(self, rng):
        sub = random_subspace(rng, 32)
        for p in (0.2, 0.7):
            e = embedding_with_norms(rng, sub, p)
            res = debias(e, sub)
            e_par = sub.basis @ (sub.basis.T @ e.vector)
            e_ort = e.vector - e_par
            par_hat = e_par / np.linalg.norm(e_par)
            ort_hat = e_ort / np.linalg.norm(e_ort)
            inside = (res.u_star @ par_hat) * par_hat + (res.u_star @ ort_hat) * ort_hat
            assert np.linalg.norm(res.u_star - inside) <= 1e-9
            # both coordinates land in the nonnegative quadrant
            assert float(res.u_star @ par_hat) >= 0.0
            assert float(res.u_star @ ort_hat) >= 0.0

    def test_fair_already_bit_identical(self, axis_subspace):
        e = Embedding(id="f", vector=np.array([0.0, 0.0, 1.0]), modality="image")
        res = debias(e, axis_subspace)
        assert res.degenerate == "fair_already"
        assert res.u_star.tobytes() == e.vector.tobytes()
        assert res.leakage == res.norm_parallel
        assert res.self_utility_loss == 0.0
        assert res.cross_bound_term == 0.0

    def test_pure_attribute_bit_identical(self, axis_subspace):
        e = Embedding(id="p", vector=np.array([1.0, 0.0, 0.0]), modality="text")
        res = debias(e, axis_subspace)
        assert res.degenerate == "pure_attribute"
        assert res.u_star.tobytes() == e.vector.tobytes()
        assert res.self_utility_loss == 0.0
        assert res.cross_bound_term == 0.0

    def test_near_degenerate_threshold(self, axis_subspace):
        tiny = 5e-7
        vec = np.array([tiny, np.sqrt(1 - tiny**2), 0.0])
        e = Embedding(id="t", vector=vec, modality="image")
        res = debias(e, axis_subspace)
        assert res.degenerate == "fair_already"
        assert res.u_star.tobytes() == vec.tobytes()

    def test_batch_sorted_and_thread_invariant(self, rng):
        sub = random_subspace(rng, 8)
        embs = [
            embedding_with_norms(rng, sub, float(rng.uniform(0.1, 0.9)), id=f"id{i:03d}")
            for i in rng.permutation(20)
        ]
        seq = debias_batch(embs, sub, threads=1)
        par = debias_batch(embs, sub, threads=4)
        assert [e.id for e, _ in seq] == sorted(e.id for e in embs)
        for (e1, r1), (e2, r2) in zip(seq, par):
            assert e1.id == e2.id
            assert r1.u_star.tobytes() == r2.u_star.tobytes()


class TestExtremes:
    def test_full_projection(self, axis_subspace):
        e = Embedding(id="w", vector=np.array([0.6, 0.8, 0.0]), modality="image")
        res = debias_extreme(e, axis_subspace, MODE_FULL_PROJECTION)
        np.testing.assert_allclose(res.u_star, [0.0, 1.0, 0.0], atol=1e-12)
        assert res.leakage == 0.0
        assert res.self_utility_loss == pytest.approx(0.2, abs=1e-12)
        assert res.cross_bound_term == pytest.approx(np.sqrt(0.4), abs=1e-12)

    def test_full_projection_of_contained_vector(self, axis_subspace):
        e = Embedding(id="c", vector=np.array([1.0, 0.0, 0.0]), modality="image")
        with pytest.raises(DegenerateInput):
            debias_extreme(e, axis_subspace, MODE_FULL_PROJECTION)

    def test_identity(self, axis_subspace):
        e = Embedding(id="w", vector=np.array([0.6, 0.8, 0.0]), modality="image")
        res = debias_extreme(e, axis_subspace, MODE_IDENTITY)
        assert res.u_star.tobytes() == e.vector.tobytes()
        assert res.self_utility_loss == 0.0
        assert res.leakage == pytest.approx(0.6, abs=1e-12)

    def test_unknown_mode(self, axis_subspace):
        e = Embedding(id="w", vector=np.array([0.6, 0.8, 0.0]), modality="image")
        with pytest.raises(ValueError):
            debias_extreme(e, axis_subspace, "middle")


class TestCrossUtilityBound:
    def test_sum_of_terms(self, axis_subspace):
        e = Embedding(id="w", vector=np.array([0.6, 0.8, 0.0]), modality="image")
        res = debias(e, axis_subspace)
        fair = debias(
            Embedding(id="f", vector=np.array([0.0, 0.0, 1.0]), modality="text"),
            axis_subspace,
        )
        assert cross_utility_bound(fair, fair) == 0.0
        assert cross_utility_bound(res, fair) == pytest.approx(
            CROSS_TERM_STAR, abs=1e-9
        )
        assert cross_utility_bound(res, res) == pytest.approx(
            2 * CROSS_TERM_STAR, abs=1e-9
        )

    def test_alignment_change_within_bound(self, rng):
        sub = random_subspace(rng, 24)
        for _ in range(200):
            ei = embedding_with_norms(rng, sub, float(rng.uniform(0.05, 0.95)), id="i")
            et = embedding_with_norms(rng, sub, float(rng.uniform(0.05, 0.95)), id="t")
            ri = debias(ei, sub)
            rt = debias(et, sub)
            change = abs(float(ri.u_star @ rt.u_star) - float(ei.vector @ et.vector))
            assert change <= cross_utility_bound(ri, rt) + 1e-9

    def test_tight_term_below_loose_term(self, rng):
        # the loose per-modality term uses the worst-case loss 1 - q
        sub = random_subspace(rng, 24)
        for _ in range(1000):
            e = embedding_with_norms(rng, sub, float(rng.uniform(0.05, 0.95)), id="x")
            res = debias(e, sub)
            loose = np.sqrt(2.0 * (1.0 - res.norm_orthogonal))
            assert res.cross_bound_term <= loose + 1e-12
