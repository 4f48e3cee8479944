import math

import numpy as np
import pytest

import oracles
from conftest import random_integer_space, random_space, weight_preserving_relabel
from lmms.core import FiniteLMMS
from lmms.coupling import Coupling, distortion_profile, eps_level, glue, lp_distortion
from lmms.reconstruct import isomorphy_test, make_rng
from lmms.solvers import DistanceResult, intrinsic_D, l0_of, lp_of, solve_l0, solve_linf, solve_lp

# Values from tests/oracles.py: a 1e-4 grid over pi[0, 0] of the 2 x 2 polytope,
# exact rational profiles and a bisection eps-level.  Frozen here.
FROZEN_2X2 = {
    "chain_vs_antichain": (([[0, 1], [0, 0]], [0.3, 0.7], [[0, 0], [0, 0]], [0.5, 0.5]),
                           0.21000000000003638, 0.20999999999999996, 0.45825756949558394, 1.0),
    "skew_weights": (([[0, 1], [0, 0]], [0.1, 0.9], [[0, 0], [1, 0]], [0.1, 0.9]),
                     0.160000000000025, 0.16000000000000003, 0.4, 1.0),
    "scaled": (([[0, 1], [0, 0]], [0.4, 0.6], [[0, 3], [0, 0]], [0.25, 0.75]),
               0.27750000000003183, 0.5025000000000001, 1.0136567466356647, 3.0),
}


def small_pair(rng, max_n=3):
    make = random_integer_space if rng.random() < 0.5 else random_space
    return make(rng, int(rng.integers(1, max_n + 1))), make(rng, int(rng.integers(1, max_n + 1)))


class TestFixtures:
    def test_i2_values(self, i2a, i2b):
        assert solve_l0(i2a, i2b).value == pytest.approx(0.25, abs=1e-9)
        assert solve_lp(i2a, i2b, p=1).value == pytest.approx(0.25, abs=1e-9)
        assert solve_lp(i2a, i2b, p=2).value == pytest.approx(0.5, abs=1e-9)
        assert solve_linf(i2a, i2b).value == 1.0

    def test_i2_witness_is_diagonal(self, i2a, i2b):
        for res in (solve_l0(i2a, i2b), solve_lp(i2a, i2b, p=2)):
            assert np.allclose(res.witness.pi, np.diag([0.5, 0.5]), atol=1e-12)
            assert res.certified and res.method == "exact"

    def test_i2_against_live_grid_oracle(self, i2a, i2b):
        cs = list(oracles.two_by_two_couplings([0.5, 0.5], [0.5, 0.5], 1e-3))
        assert oracles.min_over(cs, i2a.tau, i2b.tau, oracles.eps_level) == pytest.approx(0.25, abs=1e-9)
        assert oracles.min_over(cs, i2a.tau, i2b.tau, lambda law: oracles.lp(law, 2)) == pytest.approx(0.5)

    @pytest.mark.parametrize("p", [1, 2, 3, 5])
    def test_lp_closed_form(self, i2a, i2b, p):
        assert solve_lp(i2a, i2b, p=p).value == pytest.approx(0.25 ** (1 / p), abs=1e-9)

    def test_identical_spaces(self, i2a):
        assert solve_l0(i2a, i2a).value == 0
        assert solve_lp(i2a, i2a, p=3).value == 0
        assert solve_linf(i2a, i2a).value == 0

    @pytest.mark.parametrize("name", sorted(FROZEN_2X2))
    def test_frozen_oracle_values(self, name):
        (ta, wa, tb, wb), l0, l1, l2, linf = FROZEN_2X2[name]
        a, b = FiniteLMMS.from_matrix(ta, wa), FiniteLMMS.from_matrix(tb, wb)
        assert solve_l0(a, b).value == pytest.approx(l0, abs=1e-6)
        assert solve_lp(a, b, p=1).value == pytest.approx(l1, abs=1e-6)
        assert solve_lp(a, b, p=2).value == pytest.approx(l2, abs=1e-6)
        assert solve_linf(a, b).value == pytest.approx(linf, abs=1e-9)

    def test_q_transforms_tau(self, i2a, i2b):
        # |1 - 4| = 3 on a quarter of the mass under the diagonal coupling
        assert solve_lp(i2a, i2b, p=1, q=2).value == pytest.approx(0.75, abs=1e-9)
        assert solve_l0(i2a, i2b, q=2).value == pytest.approx(0.25, abs=1e-9)


class TestExactAgainstOracles:
    def test_exact_not_above_coarse_grid(self):
        rng = make_rng(41)
        for _ in range(12):
            a, b = small_pair(rng)
            cs = list(oracles.grid_couplings(a.weights, b.weights, 0.1))
            if not cs:
                continue
            grid_l0 = oracles.min_over(cs, a.tau, b.tau, oracles.eps_level)
            grid_l2 = oracles.min_over(cs, a.tau, b.tau, lambda law: oracles.lp(law, 2))
            assert solve_l0(a, b).value <= grid_l0 + 1e-9
            assert solve_lp(a, b, p=2).value <= grid_l2 + 1e-9

    def test_two_by_two_matches_fine_grid(self):
        rng = make_rng(43)
        for _ in range(4):
            a = random_integer_space(rng, 2)
            b = random_integer_space(rng, 2)
            if len(a.support) < 2 or len(b.support) < 2:
                continue
            cs = list(oracles.two_by_two_couplings(a.weights, b.weights, 2e-3))
            grid = oracles.min_over(cs, a.tau, b.tau, lambda law: oracles.lp(law, 1))
            # the objective is 2-Lipschitz in pi[0, 0] times the largest gap
            slack = 2e-3 * 4 * float(max(a.tau.max(), b.tau.max()))
            assert grid - slack <= solve_lp(a, b, p=1).value <= grid + 1e-9

    def test_heuristics_never_beat_exact(self):
        rng = make_rng(47)
        for _ in range(10):
            a, b = small_pair(rng)
            e0, e2 = solve_l0(a, b).value, solve_lp(a, b, p=2).value
            for method in ("frank_wolfe", "anneal", "grid"):
                assert solve_l0(a, b, method=method, budget=300).value >= e0 - 1e-9
                assert solve_lp(a, b, p=2, method=method, budget=300).value >= e2 - 1e-9
            assert solve_linf(a, b, method="greedy").value >= solve_linf(a, b).value - 1e-12

    def test_frank_wolfe_finds_the_optimum_of_simple_cases(self, i2a, i2b):
        assert solve_lp(i2a, i2b, p=2, method="frank_wolfe").value == pytest.approx(0.5, abs=1e-9)
        assert solve_l0(i2a, i2b, method="frank_wolfe").value == pytest.approx(0.25, abs=1e-9)


class TestProperties:
    def test_symmetry(self):
        rng = make_rng(53)
        for _ in range(25):
            a, b = small_pair(rng)
            assert solve_l0(a, b).value == pytest.approx(solve_l0(b, a).value, abs=1e-9)
            assert solve_lp(a, b, p=2).value == pytest.approx(solve_lp(b, a, p=2).value, abs=1e-9)
            assert solve_linf(a, b).value == pytest.approx(solve_linf(b, a).value, abs=1e-12)

    def test_isomorphic_copies_have_distance_zero(self):
        rng = make_rng(59)
        for _ in range(100):
            a = random_space(rng, int(rng.integers(1, 4)))
            b = weight_preserving_relabel(a, rng)
            assert isomorphy_test(a, b).isomorphic
            assert solve_l0(a, b).value <= 1e-9
            assert solve_lp(a, b, p=2).value <= 1e-9
            assert solve_linf(a, b).value <= 1e-9

    def test_relabeled_four_point_copy(self):
        rng = make_rng(61)
        a = random_space(rng, 4)
        b = weight_preserving_relabel(a, rng)
        # four distinct points exceed the exact scope; the frank-wolfe bound still reaches zero
        assert solve_lp(a, b, p=1, method="frank_wolfe").value <= 1e-9 or solve_l0(a, b, method="anneal").value <= 1e-9

    def test_witness_consistency(self):
        rng = make_rng(67)
        for _ in range(20):
            a, b = small_pair(rng)
            r0 = solve_l0(a, b)
            assert l0_of(a, b, r0.witness) == pytest.approx(r0.value, abs=1e-10)
            r2 = solve_lp(a, b, p=2, method="frank_wolfe", budget=200)
            assert lp_of(a, b, r2.witness, 2) == pytest.approx(r2.value, abs=1e-10)
            r2.witness.check(a.weights, b.weights)

    def test_constructive_triangle(self):
        rng = make_rng(71)
        for _ in range(100):
            a, b, c = (random_space(rng, int(rng.integers(1, 4))) for _ in range(3))
            r12, r23 = solve_l0(a, b), solve_l0(b, c)
            p13 = glue(r12.witness, r23.witness, b.weights)
            assert eps_level(distortion_profile(a, c, p13)) <= r12.value + r23.value + 1e-12

    def test_lp_sandwich_on_shared_witness(self):
        rng = make_rng(73)
        for _ in range(20):
            a, b = small_pair(rng)
            res = solve_linf(a, b)
            prof = distortion_profile(a, b, res.witness)
            assert lp_distortion(prof, 16) <= res.value + 1e-12
            assert solve_lp(a, b, p=16).value <= res.value + 1e-9

    def test_shifted_copy_within_shift(self):
        rng = make_rng(79)
        for _ in range(10):
            # bipartite orders have no composable relations, so adding c keeps them admissible
            n = int(rng.integers(2, 4))
            tau = np.zeros((n, n))
            tau[0, 1:] = rng.uniform(0.5, 1.5, n - 1) * (rng.random(n - 1) < 0.7)
            a = FiniteLMMS.from_matrix(tau, rng.dirichlet(np.ones(n)))
            c = float(rng.uniform(0.1, 0.5))
            b = FiniteLMMS.from_matrix(np.where(tau > 0, tau + c, 0.0), a.weights)
            for p in (1, 2):
                assert solve_lp(a, b, p=p).value <= c + 1e-9

    def test_linf_two_by_two_oracle(self):
        rng = make_rng(83)
        for _ in range(6):
            a, b = random_integer_space(rng, 2), random_integer_space(rng, 2)
            if min(a.weights.min(), b.weights.min()) == 0:
                continue
            assert solve_linf(a, b).value == oracles.linf_two_by_two(a.tau, b.tau, a.weights, b.weights)


class TestResultContract:
    def test_exact_scope(self):
        rng = make_rng(89)
        a = random_space(rng, 4)
        b = FiniteLMMS.from_matrix(np.triu(np.ones((4, 4)), 1) * np.arange(4))
        if a.n == 4:
            with pytest.raises(ValueError):
                solve_l0(a, b)

    def test_certified_only_for_exact(self, i2a):
        with pytest.raises(ValueError):
            DistanceResult(0.0, None, "anneal", True)
        with pytest.raises(ValueError):
            DistanceResult(0.0, None, "bogus", False)

    def test_witness_recheck(self, i2a, i2b):
        pi = Coupling(np.diag([0.5, 0.5]))
        with pytest.raises(ValueError):
            DistanceResult(0.3, pi, "exact", True, evaluate=lambda w: l0_of(i2a, i2b, w))

    def test_seeded_heuristics_are_deterministic(self):
        rng = make_rng(97)
        a, b = random_space(rng, 5), random_space(rng, 4)
        for method in ("frank_wolfe", "anneal"):
            r1 = solve_lp(a, b, p=2, method=method, budget=200, seed=7)
            r2 = solve_lp(a, b, p=2, method=method, budget=200, seed=7)
            assert r1.value == r2.value and r1.witness == r2.witness
            assert not r1.certified

    def test_to_dict(self, i2a, i2b):
        d = solve_l0(i2a, i2b).to_dict(i2a, i2b)
        assert set(d) >= {"value", "method", "certified", "witness", "seed"}
        assert d["witness"]["instances"] == [i2a.content_hash(), i2b.content_hash()]

    def test_bad_arguments(self, i2a):
        with pytest.raises(ValueError):
            solve_lp(i2a, i2a, p=math.inf)
        with pytest.raises(ValueError):
            solve_l0(i2a, i2a, q=0.5)
        with pytest.raises(ValueError):
            solve_linf(i2a, i2a, method="anneal")


class TestIntrinsic:
    def test_identical_and_relabeled(self):
        rng = make_rng(101)
        for _ in range(10):
            a = random_space(rng, int(rng.integers(1, 5)))
            assert intrinsic_D(a, a) == 0
            assert intrinsic_D(a, weight_preserving_relabel(a, rng)) <= 1e-12

    def test_i2_positive(self, i2a, i2b):
        assert intrinsic_D(i2a, i2b, k_max=2) > 0

    def test_symmetric(self):
        rng = make_rng(103)
        for _ in range(10):
            a, b = random_space(rng, 3), random_space(rng, 3)
            assert intrinsic_D(a, b) == pytest.approx(intrinsic_D(b, a), abs=1e-15)

    def test_bad_kmax(self, i2a):
        with pytest.raises(ValueError):
            intrinsic_D(i2a, i2a, k_max=0)
