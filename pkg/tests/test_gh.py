import math

import numpy as np
import pytest

import oracles
from conftest import random_integer_space, random_space, weight_preserving_relabel
from lmms.core import FiniteLMMS
from lmms.coupling import distortion_profile, lp_distortion, random_coupling
from lmms.gh import Correspondence, distortion, solve_lgh
from lmms.reconstruct import make_rng
from lmms.solvers import solve_linf


def full(n, m):
    return Correspondence(frozenset((i, j) for i in range(n) for j in range(m)))


class TestCorrespondence:
    def test_examples(self, i2a, i2b):
        assert distortion(i2a, i2b, full(2, 2)) == 2.0
        assert distortion(i2a, i2b, Correspondence({(0, 0), (1, 1)})) == 1.0
        assert distortion(i2a, i2a, Correspondence({(0, 0), (1, 1)})) == 0.0

    def test_must_be_onto(self, i2a):
        with pytest.raises(ValueError):
            distortion(i2a, i2a, Correspondence({(0, 0)}))
        with pytest.raises(ValueError):
            distortion(i2a, i2a, Correspondence({(0, 0), (1, 2)}))

    def test_json(self):
        r = Correspondence({(1, 0), (0, 1)})
        assert r.to_dict() == {"pairs": [[0, 1], [1, 0]]}
        assert Correspondence.from_dict(r.to_dict()) == r

    def test_monotone_under_inclusion(self):
        rng = make_rng(41)
        for _ in range(50):
            a, b = random_space(rng, 3), random_space(rng, 3)
            small = Correspondence({(0, 0), (1, 1), (2, 2)})
            big = Correspondence(small.pairs | {(int(rng.integers(3)), int(rng.integers(3)))})
            assert distortion(a, b, small) <= distortion(a, b, big)


class TestSolveLgh:
    def test_examples(self, i2a, i2b):
        res = solve_lgh(i2a, i2b)
        assert res.value == 1.0 and res.certified and res.metric == "lgh"
        assert solve_lgh(i2a, i2a).value == 0.0
        assert set(res.to_dict()["witness"]) == {"pairs"}

    def test_matches_relation_oracle(self):
        rng = make_rng(43)
        for _ in range(40):
            make = random_integer_space if rng.random() < 0.5 else random_space
            a, b = make(rng, int(rng.integers(1, 4))), make(rng, int(rng.integers(1, 4)))
            if a.n * b.n > 9:
                continue
            res = solve_lgh(a, b)
            assert res.value == pytest.approx(oracles.lgh(a.tau, b.tau), abs=1e-12)
            assert distortion(a, b, res.witness) == res.value

    def test_greedy_is_upper_bound(self):
        rng = make_rng(47)
        for _ in range(30):
            a, b = random_space(rng, 4), random_space(rng, 4)
            exact, greedy = solve_lgh(a, b), solve_lgh(a, b, method="greedy")
            assert not greedy.certified
            assert exact.value <= greedy.value + 1e-12

    def test_relabeled_copy_is_zero(self):
        rng = make_rng(53)
        for _ in range(20):
            a = random_space(rng, 5)
            assert solve_lgh(a, weight_preserving_relabel(a, rng)).value == 0.0

    def test_symmetric(self):
        rng = make_rng(59)
        for _ in range(20):
            a, b = random_space(rng, 3), random_space(rng, 4)
            assert solve_lgh(a, b).value == pytest.approx(solve_lgh(b, a).value, abs=1e-12)

    def test_bad_method(self, i2a):
        with pytest.raises(ValueError):
            solve_lgh(i2a, i2a, method="anneal")


class TestCouplingBounds:
    def test_support_distortion_is_profile_max(self):
        # with full-support weights, supp(pi) is a correspondence and pi x pi charges all its pairs
        rng = make_rng(61)
        for _ in range(500):
            a, b = random_space(rng, int(rng.integers(1, 7))), random_space(rng, int(rng.integers(1, 7)))
            pi = random_coupling(a.weights, b.weights, rng)
            r = Correspondence.from_coupling(pi)
            prof = distortion_profile(a, b, pi)
            assert distortion(a, b, r) == pytest.approx(lp_distortion(prof, math.inf), abs=1e-12)

    def test_lgh_below_linf(self):
        rng = make_rng(67)
        for _ in range(40):
            a, b = random_space(rng, int(rng.integers(1, 4))), random_space(rng, int(rng.integers(1, 4)))
            assert solve_lgh(a, b).value <= solve_linf(a, b).value + 1e-12

    def test_zero_weight_points_still_count(self):
        a = FiniteLMMS.from_matrix([[0, 5], [0, 0]], [1.0, 0.0])
        b = FiniteLMMS.from_matrix([[0.0]])
        assert solve_lgh(a, b).value == 5.0
        assert solve_linf(a, b).value == 0.0
        assert np.isfinite(solve_lgh(b, a).value)
