import math

import numpy as np
import pytest

from cwdyn import models, periodic
from cwdyn.cwmetric import calibrate
from cwdyn.models import BudgetError, make_model
from cwdyn.periodic import (
    KatokParams, find_return, katok_iterate, plan_katok, tail_exponent,
    validate_chain, verify_periodic,
)


@pytest.fixture(scope="module")
def cat():
    return make_model("cat-map")


@pytest.fixture(scope="module")
def pa():
    return make_model("sphere-pA")


@pytest.fixture(scope="module")
def consts(cat):
    return calibrate(cat)


@pytest.fixture(scope="module")
def consts_pa(pa):
    return calibrate(pa)


@pytest.fixture(scope="module")
def plan(cat, consts):
    return plan_katok(cat, consts, 1e-2, sample_budget=60, seed=1)


@pytest.fixture(scope="module")
def plan_pa(pa, consts_pa):
    return plan_katok(pa, consts_pa, 1e-2, sample_budget=60, seed=1)


class TestTailExponent:
    def test_hand_values(self):
        # a*b^k = 2*(1/2)^2 = 1/2, tail 0.5/0.5 = 1
        assert tail_exponent(2.0, 0.5, 1.0) == 2
        # tail at k=4 is (1/8)/(7/8) = 1/7 > 0.1, at k=5 it is 1/15
        assert tail_exponent(2.0, 0.5, 0.1) == 5

    def test_infinite_eps_only_needs_decay(self):
        assert tail_exponent(2.0, 0.5, math.inf) == 2
        assert tail_exponent(100.0, 0.5, math.inf) == 7

    def test_minimality(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            a = float(rng.uniform(1.5, 50.0))
            b = float(rng.uniform(0.05, 0.9))
            eps = float(rng.uniform(0.01, 5.0))
            k = tail_exponent(a, b, eps)
            r = a * b ** k
            assert r < 1.0 and r / (1.0 - r) <= eps
            if k > 1:
                r1 = a * b ** (k - 1)
                assert r1 >= 1.0 or r1 / (1.0 - r1) > eps

    def test_bounds_the_partial_sums(self):
        # the defining series: sum over n >= 1 of a^n b^(k n)
        rng = np.random.default_rng(11)
        for _ in range(30):
            a = float(rng.uniform(1.5, 20.0))
            b = float(rng.uniform(0.1, 0.9))
            eps = float(rng.uniform(0.05, 2.0))
            k = tail_exponent(a, b, eps)
            r = a * b ** k
            total = math.fsum(r ** n for n in range(1, 10001))
            assert total <= eps + 1e-12

    def test_validation(self):
        with pytest.raises(ValueError):
            tail_exponent(1.0, 0.5, 1.0)
        with pytest.raises(ValueError):
            tail_exponent(2.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            tail_exponent(2.0, 0.5, 0.0)


class TestPlan:
    def test_chain_holds(self, cat, consts, plan):
        validate_chain(plan, consts)
        assert plan.c == pytest.approx(min(consts.c, 0.45e-2))
        assert plan.eps == consts.c / 2.0
        assert plan.delta == plan.delta_prime / 2.0
        assert plan.gamma < plan.delta / 2.0
        assert plan.beta < plan.gamma / 3.0
        assert plan.k == plan.k0

    def test_k0_value(self, plan):
        assert plan.k0 == 27

    def test_tampered_chain_rejected(self, consts, plan):
        bad = KatokParams(alpha_target=plan.alpha_target, c=plan.c,
                          eps=plan.eps, delta_prime=plan.delta_prime,
                          delta=plan.delta, gamma=plan.delta,
                          beta=plan.beta, k0=plan.k0, k=plan.k)
        with pytest.raises(ValueError, match="gamma"):
            validate_chain(bad, consts)

    def test_param_validation(self, plan):
        with pytest.raises(ValueError):
            KatokParams(alpha_target=-1.0, c=plan.c, eps=plan.eps,
                        delta_prime=plan.delta_prime, delta=plan.delta,
                        gamma=plan.gamma, beta=plan.beta, k0=plan.k0, k=plan.k)
        with pytest.raises(ValueError):
            KatokParams(alpha_target=plan.alpha_target, c=plan.c, eps=plan.eps,
                        delta_prime=plan.delta_prime, delta=plan.delta,
                        gamma=plan.gamma, beta=plan.beta, k0=5, k=4)

    def test_alpha_validation(self, cat, consts):
        with pytest.raises(ValueError):
            plan_katok(cat, consts, 0.0)


class TestFindReturn:
    def test_fixed_point(self, cat):
        y, k = find_return(cat, cat.point(0.0, 0.0), 1e-3, 5)
        assert tuple(y.coords) == (0.0, 0.0)
        assert k == 5

    def test_period_two_orbit(self, cat):
        # (1/5, 2/5) has exact period 2; k rounds 27 up to 28
        y, k = find_return(cat, cat.point(0.2, 0.4), 1e-3, 27)
        assert y.coords == (0.2, 0.4)
        assert k == 28
        assert verify_periodic(cat, y, 2)["ok"]

    def test_float_point_is_its_own_return(self, cat):
        p = cat.point(0.37, 0.82)
        y, k = find_return(cat, p, 5e-3, 27)
        assert models.distance(cat, y, p) == 0.0
        assert k % 27 != 0 or k >= 27
        assert verify_periodic(cat, y, k, tol=1e-12)["ok"]

    def test_contract_on_random_targets(self, cat):
        rng = np.random.default_rng(23)
        for _ in range(20):
            p = cat.point(float(rng.uniform(0, 1)), float(rng.uniform(0, 1)))
            y, k = find_return(cat, p, 2e-2, 6)
            assert 6 <= k <= cat.horizon
            assert models.distance(cat, y, p) < 2e-2
            fky = models.iterate(cat, y, k)
            assert models.distance(cat, fky, p) < 2e-2
            assert verify_periodic(cat, y, k, tol=1e-12)["ok"]

    def test_quotient_fixed_class(self, pa):
        # (1/5, 2/5) maps to its mirror class, a quotient fixed point
        y, k = find_return(pa, pa.point(0.2, 0.4), 1e-3, 5)
        assert k == 5
        assert verify_periodic(pa, y, 1)["ok"]

    def test_budget_error_diagnostics(self, cat):
        p = cat.point(1.0 / math.pi, 1.0 / math.e)
        with pytest.raises(BudgetError) as exc:
            find_return(cat, p, 2e-2, 5, search_budget=3)
        diag = exc.value.diagnostics
        assert diag["candidates_tried"] >= 1
        assert diag["orbit_steps"] <= 3
        assert diag["bound"] == 2e-2
        assert diag["k_min"] == 5
        assert diag["nearest_distance"] < 2e-2

    def test_no_candidate_in_tiny_bound(self, cat):
        # no rational pair with shared denominator <= 200 sits this close
        p = cat.point(1.0 / math.pi, 1.0 / math.e)
        with pytest.raises(BudgetError) as exc:
            find_return(cat, p, 1e-6, 5)
        assert exc.value.diagnostics["candidates_tried"] == 0
        assert exc.value.diagnostics["nearest_distance"] == math.inf

    def test_validation(self, cat):
        with pytest.raises(ValueError):
            find_return(cat, cat.point(0.1, 0.1), 1e-3, 0)
        with pytest.raises(ValueError):
            find_return(cat, cat.point(0.1, 0.1), 0.0, 5)


class TestKatokIterate:
    def test_already_periodic_converges_at_once(self, cat, consts, plan):
        y, k = find_return(cat, cat.point(0.3, 0.7), 1e-3, plan.k0)
        res = katok_iterate(cat, y, k, plan, consts)
        assert res["converged"]
        assert res["steps"] == []
        assert res["residual"] == 0.0
        assert res["q"].coords == y.coords
        assert res["envelope_ok"]

    def test_small_perturbation_recovers_orbit(self, cat, consts, plan):
        # drift 1e-9 off the period-two point; the loop must land back on it
        y = cat.point(0.2 + 1e-9, 0.4 + 1.3e-9)
        res = katok_iterate(cat, y, 2, plan, consts)
        assert res["converged"]
        assert res["residual"] < 1e-9
        target = cat.point(0.2, 0.4)
        assert models.distance(cat, res["q"], target) < 1e-9
        assert res["envelope_ok"]
        gaps = [s["gap"] for s in res["steps"]]
        assert all(b < 0.2 * a for a, b in zip(gaps, gaps[1:]))

    def test_gap_ratio_bounded_by_envelope_rate(self, cat, consts, plan):
        es = cat.eigen_direction(stable=True)
        y = cat.point(*models._wrap1(0.005 * es))
        res = katok_iterate(cat, y, 7, plan, consts)
        assert res["converged"]
        assert res["residual"] < 1e-11
        gaps = [s["gap"] for s in res["steps"]]
        rate = 4.0 * (1.0 + plan.delta) ** 2 / consts.lam ** 7
        assert all(b <= rate * a for a, b in zip(gaps, gaps[1:]))

    def test_envelope_violations_are_recorded(self, cat, consts, plan):
        # desk-scale first steps overshoot the absolute envelope; the
        # run must report them, not hide them
        es = cat.eigen_direction(stable=True)
        y = cat.point(*models._wrap1(0.005 * es))
        res = katok_iterate(cat, y, 7, plan, consts)
        assert not res["envelope_ok"]
        assert res["counterexamples"]
        for rec in res["counterexamples"]:
            assert rec["D_F"] > rec["bound"]
            assert not rec["ok"]
            assert rec in res["steps"]
        for rec in res["steps"]:
            assert rec["ok"] == (rec["D_F"] <= rec["bound"])

    def test_large_k_first_contraction(self, cat, consts, plan):
        # at k = 28 the unstable rate ~5e11 amplifies coordinate ulps
        # to a gap floor near 1e-5, so only the first step sits above it
        y, k = find_return(cat, cat.point(0.334, 0.667), 5e-3, plan.k0)
        assert k == 28
        es = cat.eigen_direction(stable=True)
        yp = cat.point(*models._wrap1(y.xy() + 0.01 * es))
        res = katok_iterate(cat, yp, k, plan, consts, max_steps=2)
        gaps = [s["gap"] for s in res["steps"]]
        rate = 4.0 * (1.0 + plan.delta) ** 2 / consts.lam ** k
        assert len(gaps) == 2
        assert gaps[1] <= rate * gaps[0]

    def test_quotient_model_run(self, pa, consts_pa, plan_pa):
        xy = models.canonical_rep(np.array([0.2 + 1e-9, 0.4 + 1.3e-9]))
        res = katok_iterate(pa, pa.point(*xy), 1, plan_pa, consts_pa)
        assert res["converged"]
        assert res["residual"] < 1e-9
        target = pa.point(0.2, 0.4)
        assert models.distance(pa, res["q"], target) < 1e-9

    def test_sequence_tracks_steps(self, cat, consts, plan):
        y = cat.point(0.2 + 1e-9, 0.4 + 1.3e-9)
        res = katok_iterate(cat, y, 2, plan, consts)
        assert len(res["sequence"]) == len(res["steps"]) + 1
        assert res["sequence"][0].coords == y.coords
        assert res["sequence"][-1].coords == res["q"].coords


class TestVerifyPeriodic:
    def test_origin(self, cat):
        rec = verify_periodic(cat, cat.point(0.0, 0.0), 1)
        assert rec == {"ok": True, "residual": 0.0, "k": 1}

    def test_period_two(self, cat):
        y = cat.rational_point(1, 2, 5)
        assert verify_periodic(cat, y, 2)["ok"]
        rec = verify_periodic(cat, y, 3)
        assert not rec["ok"]
        # f^3 = f on this orbit; the miss is d((1/5,2/5),(4/5,3/5))
        assert rec["residual"] == pytest.approx(math.sqrt(0.2), rel=1e-12)

    def test_exact_period_matches_float_orbit(self, cat):
        rng = np.random.default_rng(5)
        for _ in range(10):
            den = int(rng.integers(2, 60))
            nx = int(rng.integers(0, den))
            ny = int(rng.integers(0, den))
            per = periodic._exact_period(cat, nx, ny, den, 10000)
            assert per is not None
            y = cat.rational_point(nx, ny, den)
            assert verify_periodic(cat, y, per, tol=1e-12)["ok"]
            if per > 1:
                assert not verify_periodic(cat, y, per - 1, tol=1e-12)["ok"]
