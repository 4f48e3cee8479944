"""Couplings of finite weight vectors and the per-coupling distortion functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import FiniteLMMS

MARGINAL_TOL = 1e-9
GAP_MERGE_TOL = 1e-12


class CouplingError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Coupling:
    """Joint probability matrix ``pi[i, i']`` between two weight vectors."""

    pi: np.ndarray

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float)
        if pi.ndim != 2:
            raise CouplingError("coupling must be a matrix")
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    @property
    def shape(self):
        return self.pi.shape

    @property
    def rows(self) -> np.ndarray:
        return self.pi.sum(axis=1)

    @property
    def cols(self) -> np.ndarray:
        return self.pi.sum(axis=0)

    def check(self, wa, wb, tol: float = MARGINAL_TOL) -> None:
        wa, wb = np.asarray(wa, dtype=float), np.asarray(wb, dtype=float)
        if self.pi.shape != (len(wa), len(wb)):
            raise CouplingError(f"coupling shape {self.pi.shape} vs marginals {(len(wa), len(wb))}")
        if np.any(self.pi < 0):
            raise CouplingError("coupling has negative entries")
        if np.abs(self.rows - wa).max() > tol or np.abs(self.cols - wb).max() > tol:
            raise CouplingError("coupling marginals do not match the weights")

    def is_coupling_of(self, a: FiniteLMMS, b: FiniteLMMS, tol: float = MARGINAL_TOL) -> bool:
        try:
            self.check(a.weights, b.weights, tol)
        except CouplingError:
            return False
        return True

    def support(self) -> list:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.pi > 0))]

    def to_dict(self, a: Optional[FiniteLMMS] = None, b: Optional[FiniteLMMS] = None) -> dict:
        out = {"pi": [[float(x) for x in row] for row in self.pi]}
        if a is not None and b is not None:
            out["instances"] = [a.content_hash(), b.content_hash()]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Coupling":
        return cls(np.asarray(data["pi"], dtype=float))

    def __eq__(self, other):
        return isinstance(other, Coupling) and np.array_equal(self.pi, other.pi)

    __hash__ = None


def product_coupling(a: FiniteLMMS, b: FiniteLMMS) -> Coupling:
    return Coupling(np.outer(a.weights, b.weights))


def glue(pi12: Coupling, pi23: Coupling, mid_weights, tol: float = MARGINAL_TOL) -> Coupling:
    """Compose two couplings through their shared middle marginal."""
    mid = np.asarray(mid_weights, dtype=float)
    if np.abs(pi12.cols - mid).max() > tol or np.abs(pi23.rows - mid).max() > tol:
        raise CouplingError("middle marginals of the two couplings disagree")
    inv = np.zeros_like(mid)
    pos = mid > 0
    inv[pos] = 1.0 / mid[pos]
    return Coupling((pi12.pi * inv) @ pi23.pi)


def northwest_corner(wa, wb, row_order=None, col_order=None) -> np.ndarray:
    """Vertex of the transportation polytope filled greedily in the given orders."""
    wa, wb = np.asarray(wa, dtype=float), np.asarray(wb, dtype=float)
    rows = list(range(len(wa))) if row_order is None else list(row_order)
    cols = list(range(len(wb))) if col_order is None else list(col_order)
    pi = np.zeros((len(wa), len(wb)))
    ra, rb = wa.copy(), wb.copy()
    r = c = 0
    while r < len(rows) and c < len(cols):
        i, j = rows[r], cols[c]
        m = min(ra[i], rb[j])
        pi[i, j] += m
        ra[i] -= m
        rb[j] -= m
        if ra[i] == 0:
            r += 1
        else:
            c += 1
    return pi


def random_coupling(wa, wb, rng: np.random.Generator, vertices: int = 3) -> Coupling:
    """Dirichlet mixture of northwest-corner vertices under random orders."""
    wa, wb = np.asarray(wa, dtype=float), np.asarray(wb, dtype=float)
    mix = rng.dirichlet(np.ones(vertices))
    pi = np.zeros((len(wa), len(wb)))
    for lam in mix:
        pi += lam * northwest_corner(wa, wb, rng.permutation(len(wa)), rng.permutation(len(wb)))
    return Coupling(pi)


# -- distortion profiles ---------------------------------------------------


def cell_gaps(ta: np.ndarray, tb: np.ndarray, cells: Sequence[tuple]) -> np.ndarray:
    """``G[s, t] = |ta[i_s, i_t] - tb[j_s, j_t]|`` for cells ``s = (i_s, j_s)``."""
    ii = np.array([c[0] for c in cells], dtype=int)
    jj = np.array([c[1] for c in cells], dtype=int)
    return np.abs(ta[np.ix_(ii, ii)] - tb[np.ix_(jj, jj)])


@dataclass(frozen=True, eq=False)
class DistortionProfile:
    """Law of the tau gap under the product coupling: sorted (gap, mass) atoms."""

    gaps: np.ndarray
    masses: np.ndarray

    @property
    def atoms(self) -> list:
        return list(zip(self.gaps.tolist(), self.masses.tolist()))

    def tail(self, eps: float) -> float:
        return math.fsum(self.masses[self.gaps > eps])


def profile_from_atoms(gaps, masses, merge_tol: float = GAP_MERGE_TOL) -> DistortionProfile:
    gaps = np.asarray(gaps, dtype=float).ravel()
    masses = np.asarray(masses, dtype=float).ravel()
    keep = masses > 0
    gaps, masses = gaps[keep], masses[keep]
    order = np.argsort(gaps, kind="stable")
    gaps, masses = gaps[order], masses[order]
    out_g, out_m = [], []
    start = 0
    for k in range(1, len(gaps) + 1):
        if k == len(gaps) or gaps[k] - gaps[start] > merge_tol:
            out_g.append(gaps[k - 1])
            out_m.append(math.fsum(masses[start:k]))
            start = k
    return DistortionProfile(np.array(out_g), np.array(out_m))


def distortion_profile(a: FiniteLMMS, b: FiniteLMMS, pi: Coupling, q: float = 1.0) -> DistortionProfile:
    """Aggregate ``|tau_a^q - tau_b^q|`` over pairs of coupled points, weighted by ``pi x pi``."""
    if pi.shape != (a.n, b.n):
        raise CouplingError(f"coupling shape {pi.shape} does not match spaces {(a.n, b.n)}")
    cells = pi.support()
    m = np.array([pi.pi[c] for c in cells])
    ta, tb = (a.tau, b.tau) if q == 1 else (a.tau ** q, b.tau ** q)
    return profile_from_atoms(cell_gaps(ta, tb, cells), np.outer(m, m))


def eps_level(profile: DistortionProfile) -> float:
    """Smallest ``eps >= 0`` whose gap tail mass is at most ``eps``; never above one."""
    gaps, masses = profile.gaps, profile.masses
    # tails[k] = mass of atoms with gap > gaps[k-1]; tails[0] is the total mass
    tails = np.append(np.cumsum(masses[::-1])[::-1], 0.0)
    candidates = np.unique(np.concatenate([[0.0], gaps, tails]))
    candidates = candidates[candidates <= 1.0]
    feasible = tails[np.searchsorted(gaps, candidates, side="right")] <= candidates
    if feasible.any():
        return float(candidates[np.argmax(feasible)])
    return 1.0


def lp_distortion(profile: DistortionProfile, p: float) -> float:
    """``(sum mass * gap**p) ** (1/p)``, or the largest charged gap for ``p = inf``."""
    if p < 1:
        raise ValueError("p must be at least 1")
    if len(profile.gaps) == 0:
        return 0.0
    if math.isinf(p):
        return float(profile.gaps[-1])
    total = math.fsum(profile.masses * profile.gaps ** p)
    return total ** (1.0 / p)
