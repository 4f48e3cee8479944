"""Step-function parametrizations, the box discrepancy and the box distance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import _search
from .core import FiniteLMMS, quotient_classes
from .coupling import GAP_MERGE_TOL, cell_gaps, profile_from_atoms
from .solvers import DistanceResult

CLIQUE_CAP = 1 << 20


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass(frozen=True)
class Parametrization:
    """Consecutive segments of ``[0, 1]``, each mapped to one point."""

    segments: tuple  # ((point index, Fraction length), ...)

    def __post_init__(self):
        segs = tuple((int(i), _frac(length)) for i, length in self.segments)
        if any(length <= 0 for _, length in segs):
            raise ValueError("segment lengths must be positive")
        if abs(float(sum(length for _, length in segs)) - 1.0) > 1e-12:
            raise ValueError("segment lengths must sum to one")
        object.__setattr__(self, "segments", segs)

    def pushforward(self, n: int) -> np.ndarray:
        out = [Fraction(0)] * n
        for i, length in self.segments:
            out[i] += length
        return np.array([float(x) for x in out])

    def check(self, space: FiniteLMMS, tol: float = 1e-9) -> None:
        if any(not 0 <= i < space.n for i, _ in self.segments):
            raise ValueError("segment refers to a point outside the space")
        if np.abs(self.pushforward(space.n) - space.weights).max() > tol:
            raise ValueError("parametrization does not push Lebesgue measure to the weights")

    def breakpoints(self) -> list:
        out, acc = [], Fraction(0)
        for _, length in self.segments:
            acc += length
            out.append(acc)
        return out

    def point_at(self, t: Fraction) -> int:
        """Point of the segment containing ``[t, t + dt)``."""
        acc = Fraction(0)
        for i, length in self.segments:
            acc += length
            if t < acc:
                return i
        return self.segments[-1][0]

    def permuted(self, order: Sequence[int]) -> "Parametrization":
        return Parametrization(tuple(self.segments[k] for k in order))

    def to_dict(self) -> dict:
        return {"segments": [[i, float(length)] for i, length in self.segments]}

    @classmethod
    def from_dict(cls, data: dict) -> "Parametrization":
        return cls(tuple((int(i), Fraction(length)) for i, length in data["segments"]))


def canonical_parametrization(space: FiniteLMMS) -> Parametrization:
    """One segment per positive-weight point, in point order."""
    return Parametrization(tuple((int(i), Fraction(float(space.weights[i]))) for i in space.support))


def common_refinement(pa: Parametrization, pb: Parametrization) -> list:
    """Cells ``(start, length, point of a, point of b)`` of the joint step function."""
    cuts = sorted(set([Fraction(0)] + pa.breakpoints() + pb.breakpoints()))
    cuts[-1] = max(cuts[-1], Fraction(1))
    cells = []
    for lo, hi in zip(cuts, cuts[1:]):
        if hi > lo:
            cells.append((lo, hi - lo, pa.point_at(lo), pb.point_at(lo)))
    return cells


@dataclass
class BoxEvaluation:
    value: float
    deleted: list  # sub-intervals of [0, 1] removed at the optimum
    exact: bool


def _levels(gaps: np.ndarray) -> np.ndarray:
    lv = profile_from_atoms(gaps, np.ones_like(gaps)).gaps
    if len(lv) == 0 or lv[0] > GAP_MERGE_TOL:
        lv = np.concatenate([[0.0], lv])
    return lv


def _merge_intervals(intervals: list) -> list:
    out = []
    for lo, hi in sorted(intervals):
        if out and out[-1][1] == lo:
            out[-1] = (out[-1][0], hi)
        else:
            out.append((lo, hi))
    return out


def box_evaluation(a: FiniteLMMS, b: FiniteLMMS, pa: Parametrization, pb: Parametrization,
                   lam: float = 1.0) -> BoxEvaluation:
    """Exact scaled box discrepancy of the pulled-back time separations.

    For a threshold ``eps`` the kept part of ``[0, 1]`` must be a union of
    refinement cells whose pairwise gaps are all at most ``eps``; the best
    choice is a maximum-length clique, so the discrepancy is the least
    ``eps`` with ``1 - W(eps) <= lam * eps``.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    pa.check(a)
    pb.check(b)
    cells = common_refinement(pa, pb)
    # cells over the same pair of points are interchangeable; merge them
    pairs = sorted({(i, j) for _, _, i, j in cells})
    index = {p: k for k, p in enumerate(pairs)}
    length = [Fraction(0)] * len(pairs)
    for _, ln, i, j in cells:
        length[index[(i, j)]] += ln
    gaps = cell_gaps(a.tau, b.tau, pairs)
    lam_f = _frac(lam)
    best_eps, best_keep, exact = None, (), True
    for level in _levels(gaps):
        if best_eps is not None and level >= best_eps:
            break
        ok = (gaps <= level + GAP_MERGE_TOL) & (gaps.T <= level + GAP_MERGE_TOL)
        adj = [set(np.flatnonzero(ok[k]).tolist()) - {k} for k in range(len(pairs))]
        kept, clique, complete = _search.max_weight_clique(adj, length, CLIQUE_CAP)
        exact = exact and complete
        need = (1 - kept) / lam_f
        eps = max(_frac(float(level)), need)
        if best_eps is None or eps < best_eps:
            best_eps, best_keep = eps, clique
    keep = {pairs[k] for k in best_keep}
    deleted = _merge_intervals([(lo, lo + ln) for lo, ln, i, j in cells if (i, j) not in keep])
    return BoxEvaluation(float(best_eps), [(float(lo), float(hi)) for lo, hi in deleted], exact)


def box_discrepancy(a: FiniteLMMS, b: FiniteLMMS, pa: Parametrization, pb: Parametrization,
                    lam: float = 1.0) -> float:
    return box_evaluation(a, b, pa, pb, lam).value


def induced_coupling(a: FiniteLMMS, b: FiniteLMMS, pa: Parametrization, pb: Parametrization) -> np.ndarray:
    """Joint law of the two parametrizations under Lebesgue measure."""
    pi = [[Fraction(0)] * b.n for _ in range(a.n)]
    for _, ln, i, j in common_refinement(pa, pb):
        pi[i][j] += ln
    return np.array([[float(x) for x in row] for row in pi])


@dataclass(frozen=True)
class BoxWitness:
    first: Parametrization
    second: Parametrization
    deleted: tuple

    def to_dict(self) -> dict:
        return {
            "first": self.first.to_dict(),
            "second": self.second.to_dict(),
            "deleted": [list(iv) for iv in self.deleted],
        }


def _pair_from_coupling(x: np.ndarray, kept: Sequence[tuple], a: FiniteLMMS, b: FiniteLMMS,
                        members_a: list, members_b: list, wa_q, wb_q) -> tuple:
    """Lay the coupling's cells along ``[0, 1]``, kept cells first, lifted to the original points."""
    n, m = x.shape
    cells = [c for c in kept if x[c] > 0] + [(i, j) for i in range(n) for j in range(m)
                                              if (i, j) not in set(kept) and x[i, j] > 0]
    seg_a, seg_b = [], []
    for c, d in cells:
        for i in members_a[c]:
            for j in members_b[d]:
                share = Fraction(float(x[c, d])) * Fraction(float(a.weights[i])) / Fraction(float(wa_q[c])) \
                    * Fraction(float(b.weights[j])) / Fraction(float(wb_q[d]))
                if share > 0:
                    seg_a.append((i, share))
                    seg_b.append((j, share))
    total = sum(ln for _, ln in seg_a)
    # absorb float rounding so the lengths sum to exactly one
    seg_a[-1] = (seg_a[-1][0], seg_a[-1][1] + 1 - total)
    seg_b[-1] = (seg_b[-1][0], seg_b[-1][1] + 1 - total)
    return Parametrization(tuple(seg_a)), Parametrization(tuple(seg_b))


def solve_box(a: FiniteLMMS, b: FiniteLMMS, lam: float = 1.0, budget: int = 100_000, seed: int = 0) -> DistanceResult:
    """Box distance over step-function parametrization pairs.

    A pair only matters through its induced coupling, so the search runs over
    couplings: for each gap level the best coupling puts as much mass as
    possible on a set of cells with pairwise gaps below the level.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    qa, ma = quotient_classes(a)
    qb, mb = quotient_classes(b)
    n, m = qa.n, qb.n
    cells = [(i, j) for i in range(n) for j in range(m)]
    gaps = cell_gaps(qa.tau, qb.tau, cells)
    lam_f = _frac(lam)

    def evaluate(w: BoxWitness) -> float:
        return box_discrepancy(a, b, w.first, w.second, lam)

    pa0, pb0 = canonical_parametrization(a), canonical_parametrization(b)
    incumbent = box_evaluation(a, b, pa0, pb0, lam)
    best = (Fraction(incumbent.value), None, None)
    certified, examined = True, 0
    for level in _levels(gaps):
        if level >= best[0]:
            break
        graph = _search.compat_graph(gaps, level + GAP_MERGE_TOL)
        top, top_x, top_clique = 0.0, None, None
        for clique in _search.maximal_cliques(graph):
            examined += 1
            if examined > budget:
                certified = False
                break
            mass, x = _search.max_mass_on([cells[s] for s in clique], qa.weights, qb.weights)
            if mass > top + 1e-12:
                top, top_x, top_clique = mass, x, clique
        if top_x is None:
            continue
        eps = max(_frac(float(level)), (1 - _frac(min(top, 1.0))) / lam_f)
        if eps < best[0]:
            best = (eps, top_x, [cells[s] for s in top_clique])
        if not certified:
            break
    if best[1] is None:
        pa, pb = pa0, pb0
    else:
        x = _search.complete_coupling(best[1], qa.weights, qb.weights)
        pa, pb = _pair_from_coupling(x, best[2], a, b, ma, mb, qa.weights, qb.weights)
    ev = box_evaluation(a, b, pa, pb, lam)
    witness = BoxWitness(pa, pb, tuple(ev.deleted))
    return DistanceResult(ev.value, witness, "exact", certified and ev.exact, examined, seed, "box", evaluate)
