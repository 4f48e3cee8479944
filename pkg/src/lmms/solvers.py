"""Minimize the distortion functionals over the coupling polytope.

All solvers first pass to the distance quotients of both spaces (after raising
tau to the power ``q``), optimize there, and lift the optimal coupling back to
the original points by splitting each class mass proportionally to weight.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import InitVar, dataclass
from typing import Any, Callable, Optional

import numpy as np
from scipy.optimize import linprog
from scipy.special import expit

from . import _search
from .core import FiniteLMMS, diameter, powered, quotient_classes
from .coupling import (
    GAP_MERGE_TOL,
    Coupling,
    cell_gaps,
    distortion_profile,
    eps_level,
    lp_distortion,
    northwest_corner,
    profile_from_atoms,
    random_coupling,
)
from .reconstruct import exact_matrix_law, family_gap, lipschitz_family, make_rng, sample_matrix_law

METHODS = ("exact", "frank_wolfe", "anneal", "grid", "greedy")
EXACT_MAX_POINTS = 3
WITNESS_TOL = 1e-10
DEFAULT_BUDGET = 2000


@dataclass
class DistanceResult:
    """A distance value with the witness that attains it.

    Passing ``evaluate`` re-computes the functional on the witness and
    rejects the result if the two disagree by more than ``1e-10``.
    """

    value: float
    witness: Any
    method: str
    certified: bool
    iterations: int = 0
    seed: Optional[int] = None
    metric: str = ""
    evaluate: InitVar[Optional[Callable]] = None

    def __post_init__(self, evaluate):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.certified and self.method != "exact":
            raise ValueError("only exhaustive methods can certify a value")
        if not self.value >= 0:
            raise ValueError(f"distance must be nonnegative, got {self.value}")
        if evaluate is not None:
            again = evaluate(self.witness)
            if abs(again - self.value) > WITNESS_TOL:
                raise ValueError(f"witness evaluates to {again}, not {self.value}")

    @property
    def coupling(self) -> Optional[Coupling]:
        return self.witness if isinstance(self.witness, Coupling) else None

    def to_dict(self, a: Optional[FiniteLMMS] = None, b: Optional[FiniteLMMS] = None) -> dict:
        w = self.witness
        if isinstance(w, Coupling):
            witness = w.to_dict(a, b)
        elif hasattr(w, "to_dict"):
            witness = w.to_dict()
        else:
            witness = w
        return {
            "metric": self.metric,
            "value": float(self.value),
            "method": self.method,
            "certified": bool(self.certified),
            "iterations": int(self.iterations),
            "seed": self.seed,
            "witness": witness,
        }


# -- functionals on a given coupling ---------------------------------------------


def l0_of(a: FiniteLMMS, b: FiniteLMMS, pi: Coupling, q: float = 1.0) -> float:
    return eps_level(distortion_profile(a, b, pi, q))


def lp_of(a: FiniteLMMS, b: FiniteLMMS, pi: Coupling, p: float, q: float = 1.0) -> float:
    return lp_distortion(distortion_profile(a, b, pi, q), p)


# -- quotient reduction and lifting ------------------------------------------------


@dataclass
class _Problem:
    """Both spaces reduced to their quotients, with the cell gap matrix."""

    a: FiniteLMMS
    b: FiniteLMMS
    qa: FiniteLMMS
    qb: FiniteLMMS
    members_a: list
    members_b: list
    gaps: np.ndarray  # (n m) x (n m), cell s = i * m + j

    @property
    def shape(self) -> tuple:
        return self.qa.n, self.qb.n

    @property
    def wa(self) -> np.ndarray:
        return self.qa.weights

    @property
    def wb(self) -> np.ndarray:
        return self.qb.weights

    def lift(self, x: np.ndarray) -> Coupling:
        n, m = self.shape
        x = np.asarray(x, dtype=float).reshape(n, m)
        pi = np.zeros((self.a.n, self.b.n))
        for c, ma in enumerate(self.members_a):
            fa = self.a.weights[list(ma)] / self.qa.weights[c]
            for d, mb in enumerate(self.members_b):
                if x[c, d] > 0:
                    fb = self.b.weights[list(mb)] / self.qb.weights[d]
                    pi[np.ix_(ma, mb)] = x[c, d] * np.outer(fa, fb)
        return Coupling(pi)

    def eps(self, x: np.ndarray) -> float:
        x = np.asarray(x).ravel()
        return eps_level(profile_from_atoms(self.gaps, np.outer(x, x)))

    def levels(self) -> np.ndarray:
        """Distinct gap values, merged the same way profiles merge them."""
        lv = profile_from_atoms(self.gaps, np.ones_like(self.gaps)).gaps
        if lv[0] > GAP_MERGE_TOL:
            lv = np.concatenate([[0.0], lv])
        return lv


def _prepare(a: FiniteLMMS, b: FiniteLMMS, q: float) -> _Problem:
    if q < 1:
        raise ValueError("q must be at least 1")
    pa, pb = powered(a, q), powered(b, q)
    qa, ma = quotient_classes(pa)
    qb, mb = quotient_classes(pb)
    n, m = qa.n, qb.n
    cells = [(i, j) for i in range(n) for j in range(m)]
    return _Problem(a, b, qa, qb, ma, mb, cell_gaps(qa.tau, qb.tau, cells))


def _check_method(method: str, allowed: tuple) -> None:
    if method not in allowed:
        raise ValueError(f"method must be one of {allowed}, got {method!r}")


# -- exact quadratic minimization by face enumeration ----------------------------


class _FaceTable:
    """Every face of the transportation polytope, as (support, point, nullspace).

    For a quadratic objective the global minimum sits in the relative interior
    of some face, where it is a stationary point of the restricted quadratic.
    All stationary points on an affine hull share one value, so scanning the
    stationary sets of all faces in order of value and returning the first one
    that meets the polytope gives the exact minimum.
    """

    def __init__(self, wa: np.ndarray, wb: np.ndarray):
        n, m = len(wa), len(wb)
        self.n, self.m = n, m
        self.wa, self.wb = wa, wb
        size = n * m
        cons = _search.transport_constraints(n, m)
        rhs = np.concatenate([wa, wb])
        self.faces = []
        for mask in range(1, 1 << size):
            cells = np.array([s for s in range(size) if mask >> s & 1])
            sub = cons[:, cells]
            x0 = np.linalg.lstsq(sub, rhs, rcond=None)[0]
            if np.abs(sub @ x0 - rhs).max() > 1e-12:
                continue
            _, sv, vt = np.linalg.svd(sub)
            rank = int((sv > 1e-10).sum())
            self.faces.append((cells, x0, vt[rank:].T))

    def minimize(self, h: np.ndarray) -> tuple:
        """Exact ``min x^T h x`` over the polytope; returns ``(value, x)``."""
        h = 0.5 * (h + h.T)
        size = self.n * self.m
        stationary = []
        for cells, x0, null in self.faces:
            hf = h[np.ix_(cells, cells)]
            if null.shape[1] == 0:
                stationary.append((float(x0 @ hf @ x0), cells, x0, None))
                continue
            red = null.T @ hf @ null
            rhs = -null.T @ (hf @ x0)
            lam, vec = np.linalg.eigh(red)
            big = np.abs(lam) > 1e-10 * max(1.0, np.abs(lam).max())
            proj = vec.T @ rhs
            if np.any(np.abs(proj[~big]) > 1e-9):
                continue  # no stationary point on this affine hull
            z = vec[:, big] @ (proj[big] / lam[big])
            x = x0 + null @ z
            flat = null @ vec[:, ~big] if (~big).any() else None
            stationary.append((float(x @ hf @ x), cells, x, flat))
        stationary.sort(key=lambda t: t[0])
        first, found = None, []
        for val, cells, x, flat in stationary:
            if first is not None and val > first + 1e-12:
                break
            point = self._feasible(x, flat)
            if point is None:
                continue
            full = np.zeros(size)
            full[cells] = point
            first = val if first is None else first
            found.append(full)
        if not found:  # cannot happen: vertices are always feasible stationary points
            raise RuntimeError("face enumeration found no feasible point")
        best = self._polish(min(found, key=_search.lex_key))
        return float(best @ h @ best), best

    def _polish(self, x: np.ndarray) -> np.ndarray:
        """Drop round-off entries; on a forest support recompute the point by leaf peeling."""
        x = np.where(x < 1e-12, 0.0, x)
        open_cells = {(int(s) // self.m, int(s) % self.m) for s in np.flatnonzero(x)}
        ra, rb = np.array(self.wa, dtype=float), np.array(self.wb, dtype=float)
        out = np.zeros((self.n, self.m))
        while open_cells:
            leaf = None
            for i, j in sorted(open_cells):
                if sum(1 for c in open_cells if c[0] == i) == 1:
                    leaf, value = (i, j), ra[i]
                    break
                if sum(1 for c in open_cells if c[1] == j) == 1:
                    leaf, value = (i, j), rb[j]
                    break
            if leaf is None or value < 0:
                return x  # support has a cycle: the point is not a vertex
            out[leaf] = value
            ra[leaf[0]] -= value
            rb[leaf[1]] -= value
            open_cells.discard(leaf)
        if np.abs(out.ravel() - x).max() > 1e-9:
            return x
        return out.ravel()

    @staticmethod
    def _feasible(x: np.ndarray, flat: Optional[np.ndarray]) -> Optional[np.ndarray]:
        if x.min() >= -1e-10:
            return np.maximum(x, 0.0)
        if flat is None:
            return None
        # search the flat stationary directions for a nonnegative point
        k = flat.shape[1]
        res = linprog(np.zeros(k), A_ub=-flat, b_ub=x, bounds=(None, None), method="highs")
        if res.status != 0:
            return None
        y = x + flat @ res.x
        if y.min() < -1e-10:
            return None
        return np.maximum(y, 0.0)


def _face_table(prob: _Problem) -> _FaceTable:
    n, m = prob.shape
    if n > EXACT_MAX_POINTS or m > EXACT_MAX_POINTS:
        raise ValueError(
            f"exact method supports at most {EXACT_MAX_POINTS} points per side after quotienting, got {n}x{m}")
    return _FaceTable(prob.wa, prob.wb)


def _exact_l0(prob: _Problem) -> tuple:
    table = _face_table(prob)
    levels = prob.levels()
    cache = {}

    def tail_min(k: int) -> tuple:
        if k not in cache:
            cache[k] = table.minimize((prob.gaps > levels[k]).astype(float))
        return cache[k]

    # smallest level k whose minimal tail mass falls below the next level
    lo, hi = 0, len(levels) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if max(levels[mid], tail_min(mid)[0]) < levels[mid + 1]:
            hi = mid
        else:
            lo = mid + 1
    return tail_min(lo)[1], len(cache)


def _exact_lp(prob: _Problem, p: float) -> np.ndarray:
    table = _face_table(prob)
    return table.minimize(prob.gaps ** p)[1]


# -- heuristics ----------------------------------------------------------------------


def _start_points(prob: _Problem, rng: np.random.Generator, restarts: int) -> list:
    n, m = prob.shape
    starts = [np.outer(prob.wa, prob.wb).ravel(), northwest_corner(prob.wa, prob.wb).ravel()]
    while len(starts) < restarts:
        starts.append(random_coupling(prob.wa, prob.wb, rng).pi.ravel())
    return starts[:max(restarts, 1)]


def _frank_wolfe(h: np.ndarray, prob: _Problem, x: np.ndarray, iters: int) -> tuple:
    """Conditional gradient on ``x^T h x``; returns ``(x, iterations used)``."""
    n, m = prob.shape
    h = 0.5 * (h + h.T)
    used = 0
    for used in range(1, iters + 1):
        grad = 2.0 * h @ x
        vertex = _search.transport_vertex(grad.reshape(n, m), prob.wa, prob.wb).ravel()
        d = vertex - x
        slope = float(grad @ d)
        if slope >= -1e-14:
            break
        curv = float(d @ h @ d)
        gamma = 1.0 if curv <= 0 else min(1.0, -slope / (2.0 * curv))
        x = np.maximum(x + gamma * d, 0.0)
    return x, used


def _fw_lp(prob: _Problem, p: float, budget: int, rng, restarts: int) -> tuple:
    h = prob.gaps ** p
    per = max(1, budget // restarts)
    best, total = None, 0
    for x0 in _start_points(prob, rng, restarts):
        x, used = _frank_wolfe(h, prob, x0, per)
        total += used
        val = float(x @ h @ x)
        if _search.better(val, x, best):
            best = (val, x)
    return best[1], total


def _fw_l0(prob: _Problem, budget: int, rng, restarts: int, stages: int = 5) -> tuple:
    """Push tail mass below successively smaller gap levels with a sigmoid surrogate."""
    levels = prob.levels()
    scale = max(float(prob.gaps.max()), 1e-12)
    sigmas = np.geomspace(0.25 * scale, 1e-3 * scale, stages)
    per = max(1, budget // (restarts * stages * max(1, len(levels))))
    best, total = None, 0
    for x in _start_points(prob, rng, restarts):
        cur = prob.eps(x)
        for level in levels[::-1]:
            if level >= cur:
                continue
            y = x
            for sigma in sigmas:
                y, used = _frank_wolfe(expit((prob.gaps - level) / sigma), prob, y, per)
                total += used
            e = prob.eps(y)
            if e < cur:
                x, cur = y, e
        if _search.better(cur, x, best):
            best = (cur, x)
    return best[1], total


def _anneal(objective: Callable, prob: _Problem, budget: int, rng, restarts: int) -> tuple:
    """Simulated annealing over northwest-corner vertices indexed by (row order, column order)."""
    n, m = prob.shape
    per = max(1, budget // restarts)
    best = None
    for _ in range(restarts):
        rows, cols = rng.permutation(n), rng.permutation(m)
        x = northwest_corner(prob.wa, prob.wb, rows, cols).ravel()
        f = objective(x)
        temp = max(f, 1e-3) * 0.5
        cool = (1e-3) ** (1.0 / per)
        for _ in range(per):
            new_rows, new_cols = rows.copy(), cols.copy()
            if n > 1 and (m == 1 or rng.random() < 0.5):
                i, j = rng.choice(n, 2, replace=False)
                new_rows[[i, j]] = new_rows[[j, i]]
            elif m > 1:
                i, j = rng.choice(m, 2, replace=False)
                new_cols[[i, j]] = new_cols[[j, i]]
            y = northwest_corner(prob.wa, prob.wb, new_rows, new_cols).ravel()
            g = objective(y)
            if g <= f or rng.random() < math.exp(-(g - f) / temp):
                rows, cols, x, f = new_rows, new_cols, y, g
                if _search.better(f, x, best):
                    best = (f, x)
            temp *= cool
        if _search.better(f, x, best):
            best = (f, x)
    return best[1], budget


def _grid_points(wa, wb, lower, upper, step):
    """Couplings whose free top-left block lies on a grid; the last row and column complete it."""
    n, m = len(wa), len(wb)
    axes = []
    for i in range(n - 1):
        for j in range(m - 1):
            lo = max(0.0, lower[i, j])
            hi = min(wa[i], wb[j], upper[i, j])
            count = int(math.floor((hi - lo) / step + 1e-9)) + 1
            axes.append(lo + step * np.arange(count))
            if axes[-1][-1] < hi - 1e-15:
                axes[-1] = np.append(axes[-1], hi)
    for values in itertools.product(*axes):
        x = np.zeros((n, m))
        if values:
            x[:n - 1, :m - 1] = np.reshape(values, (n - 1, m - 1))
        x[:n - 1, m - 1] = wa[:n - 1] - x[:n - 1, :m - 1].sum(axis=1)
        x[n - 1, :m - 1] = wb[:m - 1] - x[:n - 1, :m - 1].sum(axis=0)
        x[n - 1, m - 1] = wa[n - 1] - x[n - 1, :m - 1].sum()
        if x.min() >= -1e-12:
            yield np.maximum(x, 0.0).ravel()


def _grid(objective: Callable, prob: _Problem, budget: int, step: float = 1e-3, finest: float = 1e-6) -> tuple:
    """Grid over the free coordinates, then repeated local refinement around the incumbent."""
    n, m = prob.shape
    free = (n - 1) * (m - 1)
    if free:
        # coarsen until one sweep fits the budget
        while (1.0 / step + 1) ** free > budget:
            step *= 10
    lower, upper = np.full((n, m), -np.inf), np.full((n, m), np.inf)
    best, evals = None, 0
    while True:
        for x in _grid_points(prob.wa, prob.wb, lower, upper, step):
            evals += 1
            val = objective(x)
            if _search.better(val, x, best):
                best = (val, x)
            if evals >= budget:
                return best[1], evals
        if free == 0 or step <= finest:
            return best[1], evals
        centre = best[1].reshape(n, m)
        lower, upper = centre - step, centre + step
        step /= 10


def _lp_objective(prob: _Problem, p: float) -> Callable:
    h = prob.gaps ** p
    return lambda x: float(x @ h @ x)


# -- public solvers ----------------------------------------------------------------


def solve_l0(a: FiniteLMMS, b: FiniteLMMS, q: float = 1.0, method: str = "exact",
             budget: int = DEFAULT_BUDGET, seed: int = 0, restarts: int = 4) -> DistanceResult:
    """Distortion distance: the least eps-level over all couplings."""
    _check_method(method, ("exact", "frank_wolfe", "anneal", "grid"))
    prob = _prepare(a, b, q)
    rng = make_rng(seed)
    if method == "exact":
        x, iters = _exact_l0(prob)
    elif method == "frank_wolfe":
        x, iters = _fw_l0(prob, budget, rng, restarts)
    elif method == "anneal":
        x, iters = _anneal(prob.eps, prob, budget, rng, restarts)
    else:
        x, iters = _grid(prob.eps, prob, budget)
    pi = prob.lift(x)

    def evaluate(w):
        return l0_of(a, b, w, q)

    return DistanceResult(evaluate(pi), pi, method, method == "exact", iters, seed, "l0", evaluate)


def solve_lp(a: FiniteLMMS, b: FiniteLMMS, p: float = 1.0, q: float = 1.0, method: str = "exact",
             budget: int = DEFAULT_BUDGET, seed: int = 0, restarts: int = 4) -> DistanceResult:
    """L^p distortion distance for finite ``p >= 1``."""
    if not 1 <= p < math.inf:
        raise ValueError("p must be a finite number >= 1; use solve_linf for p = inf")
    _check_method(method, ("exact", "frank_wolfe", "anneal", "grid"))
    prob = _prepare(a, b, q)
    rng = make_rng(seed)
    if method == "exact":
        x, iters = _exact_lp(prob, p), 1
    elif method == "frank_wolfe":
        x, iters = _fw_lp(prob, p, budget, rng, restarts)
    elif method == "anneal":
        x, iters = _anneal(_lp_objective(prob, p), prob, budget, rng, restarts)
    else:
        x, iters = _grid(_lp_objective(prob, p), prob, budget)
    pi = prob.lift(x)

    def evaluate(w):
        return lp_of(a, b, w, p, q)

    return DistanceResult(evaluate(pi), pi, method, method == "exact", iters, seed, "lp", evaluate)


def _full_clique_coupling(cells: list, clique: list, prob: _Problem) -> Optional[np.ndarray]:
    mass, x = _search.max_mass_on([cells[s] for s in clique], prob.wa, prob.wb)
    if mass < 1.0 - 1e-9:
        return None
    return _search.complete_coupling(x, prob.wa, prob.wb).ravel()


def _linf_level(prob: _Problem, eps: float, budget: int, exhaustive: bool) -> tuple:
    """Look for a coupling whose support has all pairwise gaps at most ``eps``.

    Returns ``(x or None, proven)``; ``proven`` is false when the search gave
    up before ruling the level out.
    """
    n, m = prob.shape
    cells = [(i, j) for i in range(n) for j in range(m)]
    graph = _search.compat_graph(prob.gaps, eps + GAP_MERGE_TOL)
    if exhaustive:
        for count, clique in enumerate(_search.maximal_cliques(graph)):
            if count >= budget:
                return None, False
            rows = {cells[s][0] for s in clique}
            cols = {cells[s][1] for s in clique}
            if len(rows) < n or len(cols) < m:
                continue
            x = _full_clique_coupling(cells, clique, prob)
            if x is not None:
                return x, True
        return None, True
    # greedy: grow a clique from each start cell, heaviest product mass first
    mass = np.outer(prob.wa, prob.wb).ravel()
    order = sorted(range(len(cells)), key=lambda s: (-mass[s], s))
    for start in order[:budget]:
        clique = [start]
        for s in order:
            if s != start and all(graph.has_edge(s, t) for t in clique):
                clique.append(s)
        x = _full_clique_coupling(cells, sorted(clique), prob)
        if x is not None:
            return x, False
    return None, False


def solve_linf(a: FiniteLMMS, b: FiniteLMMS, q: float = 1.0, method: str = "exact",
               budget: int = 100_000, seed: int = 0) -> DistanceResult:
    """L^infinity distortion distance by bisection over gap levels."""
    _check_method(method, ("exact", "greedy"))
    prob = _prepare(a, b, q)
    levels = prob.levels()
    exhaustive = method == "exact"
    certified = exhaustive
    witness = {}
    lo, hi = 0, len(levels) - 1
    # the top level always admits the product coupling
    witness[hi] = np.outer(prob.wa, prob.wb).ravel()
    iters = 0
    while lo < hi:
        mid = (lo + hi) // 2
        iters += 1
        x, proven = _linf_level(prob, levels[mid], budget, exhaustive)
        if x is not None:
            witness[mid] = x
            hi = mid
        else:
            certified = certified and proven
            lo = mid + 1
    pi = prob.lift(witness[lo])

    def evaluate(w):
        return lp_of(a, b, w, math.inf, q)

    return DistanceResult(evaluate(pi), pi, method, certified, iters, seed, "linf", evaluate)


# -- intrinsic metric -------------------------------------------------------------------


def intrinsic_D(a: FiniteLMMS, b: FiniteLMMS, k_max: int = 3, family_size: int = 64, seed: int = 0,
                samples: int = 10_000, exact_cap: int = 10**6) -> float:
    """Truncated ``sum_k 2^-k d_k`` between the matrix laws with a tent-function family."""
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    diam = max(diameter(a), diameter(b))
    seeds = np.random.SeedSequence(seed).generate_state(2 * k_max, dtype=np.uint64)
    total = []
    for k in range(1, k_max + 1):
        if len(a.support) ** k <= exact_cap and len(b.support) ** k <= exact_cap:
            la, lb = exact_matrix_law(a, k), exact_matrix_law(b, k)
        else:
            la = sample_matrix_law(a, k, samples, int(seeds[2 * k - 2]))
            lb = sample_matrix_law(b, k, samples, int(seeds[2 * k - 1]))
        family = lipschitz_family(k, [la, lb], diam, family_size)
        total.append(0.5 ** k * family_gap(la, lb, family))
    return math.fsum(total)
