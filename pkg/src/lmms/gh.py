"""Correspondences and the unmeasured Lorentz-Gromov-Hausdorff semidistance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _search
from .core import FiniteLMMS
from .coupling import GAP_MERGE_TOL, Coupling, cell_gaps, profile_from_atoms
from .solvers import DistanceResult


@dataclass(frozen=True)
class Correspondence:
    """A relation between two point sets whose projections are both onto."""

    pairs: frozenset

    def __post_init__(self):
        object.__setattr__(self, "pairs", frozenset((int(i), int(j)) for i, j in self.pairs))

    def is_onto(self, n: int, m: int) -> bool:
        return {i for i, _ in self.pairs} == set(range(n)) and {j for _, j in self.pairs} == set(range(m))

    def check(self, a: FiniteLMMS, b: FiniteLMMS) -> None:
        if any(not (0 <= i < a.n and 0 <= j < b.n) for i, j in self.pairs):
            raise ValueError("pair index out of range")
        if not self.is_onto(a.n, b.n):
            raise ValueError("relation does not cover every point of both spaces")

    def to_dict(self) -> dict:
        return {"pairs": [list(p) for p in sorted(self.pairs)]}

    @classmethod
    def from_dict(cls, data: dict) -> "Correspondence":
        return cls(frozenset(tuple(p) for p in data["pairs"]))

    @classmethod
    def from_coupling(cls, pi: Coupling) -> "Correspondence":
        return cls(frozenset(pi.support()))


def distortion(a: FiniteLMMS, b: FiniteLMMS, r: Correspondence) -> float:
    """Largest tau gap between two related pairs."""
    r.check(a, b)
    pairs = sorted(r.pairs)
    return float(cell_gaps(a.tau, b.tau, pairs).max())


def _covering(clique: list, cells: list, n: int, m: int) -> bool:
    return len({cells[s][0] for s in clique}) == n and len({cells[s][1] for s in clique}) == m


def _level_witness(gaps: np.ndarray, cells: list, n: int, m: int, eps: float, budget: int,
                   exhaustive: bool) -> tuple:
    """A covering clique at threshold ``eps``; returns ``(cells or None, proven)``."""
    graph = _search.compat_graph(gaps, eps + GAP_MERGE_TOL)
    if exhaustive:
        for count, clique in enumerate(_search.maximal_cliques(graph)):
            if count >= budget:
                return None, False
            if _covering(clique, cells, n, m):
                return clique, True
        return None, True
    # greedy growth from each start cell
    for start in range(min(len(cells), budget)):
        clique = [start]
        for s in range(len(cells)):
            if s != start and all(graph.has_edge(s, t) for t in clique):
                clique.append(s)
        if _covering(clique, cells, n, m):
            return sorted(clique), False
    return None, False


def solve_lgh(a: FiniteLMMS, b: FiniteLMMS, method: str = "exact", budget: int = 100_000,
              seed: int = 0) -> DistanceResult:
    """Least distortion over correspondences of the full point sets.

    A correspondence has distortion at most ``eps`` exactly when its pairs are
    mutually compatible at ``eps``, so each gap level is decided by looking for
    a maximal clique of compatible pairs that covers both point sets.
    """
    if method not in ("exact", "greedy"):
        raise ValueError(f"method must be 'exact' or 'greedy', got {method!r}")
    n, m = a.n, b.n
    cells = [(i, j) for i in range(n) for j in range(m)]
    gaps = cell_gaps(a.tau, b.tau, cells)
    levels = profile_from_atoms(gaps, np.ones_like(gaps)).gaps
    if levels[0] > GAP_MERGE_TOL:
        levels = np.concatenate([[0.0], levels])
    exhaustive = method == "exact"
    certified = exhaustive
    found = {len(levels) - 1: list(range(len(cells)))}
    lo, hi, iters = 0, len(levels) - 1, 0
    while lo < hi:
        mid = (lo + hi) // 2
        iters += 1
        clique, proven = _level_witness(gaps, cells, n, m, levels[mid], budget, exhaustive)
        if clique is not None:
            found[mid] = clique
            hi = mid
        else:
            certified = certified and proven
            lo = mid + 1
    witness = Correspondence(frozenset(cells[s] for s in found[lo]))

    def evaluate(r):
        return distortion(a, b, r)

    return DistanceResult(evaluate(witness), witness, method, certified, iters, seed, "lgh", evaluate)
