"""Distance-matrix snapshots, their laws, and exact isomorphy of finite spaces."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import DEFAULT_TOL, FiniteLMMS, diameter, in_gk, noldus_metric, quotient_classes

ENUMERATION_CAP = 10**7
LAW_EQUAL_TOL = 1e-12


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox4x64 stream; identical draws on every platform."""
    return np.random.Generator(np.random.Philox(int(seed)))


def _fmt(x: float) -> str:
    s = f"{x:.12g}"
    return "0" if s == "-0" else s


def encode_matrix(matrix) -> str:
    """Row-major, 12 significant digits, ``,`` between entries and ``;`` between rows."""
    m = np.asarray(matrix, dtype=float)
    return ";".join(",".join(_fmt(x) for x in row) for row in m)


def decode_matrix(key: str) -> np.ndarray:
    return np.array([[float(x) for x in row.split(",")] for row in key.split(";")])


def matrix_snapshot(space: FiniteLMMS, indices: Sequence[int]) -> np.ndarray:
    idx = np.asarray(indices, dtype=int)
    return space.tau[np.ix_(idx, idx)].copy()


@dataclass(frozen=True)
class MatrixLaw:
    """Discrete law of ``k x k`` snapshot matrices, keyed by their encoding."""

    k: int
    atoms: dict

    def __post_init__(self):
        total = math.fsum(self.atoms.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"law masses sum to {total}")

    def matrices(self) -> list:
        return [(decode_matrix(key), mass) for key, mass in sorted(self.atoms.items())]

    def expectation(self, phi: Callable) -> float:
        return math.fsum(mass * phi(m) for m, mass in self.matrices())

    def to_dict(self) -> dict:
        return {"k": self.k,
                "atoms": [{"matrix": decode_matrix(key).tolist(), "mass": mass}
                          for key, mass in sorted(self.atoms.items())]}

    @classmethod
    def from_dict(cls, data: dict) -> "MatrixLaw":
        atoms: dict = {}
        for atom in data["atoms"]:
            key = encode_matrix(atom["matrix"])
            atoms[key] = atoms.get(key, 0.0) + float(atom["mass"])
        return cls(int(data["k"]), atoms)


def _law_from_tuples(space: FiniteLMMS, k: int, tuples: np.ndarray, masses=None) -> MatrixLaw:
    """Aggregate snapshots by matrix; ``masses=None`` means equal-weight draws."""
    # group identical index tuples first; far fewer of those than draws
    shape = (space.n,) * k
    codes, inverse = np.unique(np.ravel_multi_index(tuples.T, shape), return_inverse=True)
    inverse = inverse.ravel()
    if masses is None:
        counts = np.bincount(inverse)
    else:
        order = np.argsort(inverse, kind="stable")
        bounds = np.searchsorted(inverse[order], np.arange(len(codes) + 1))
        part = [math.fsum(masses[order[bounds[g]:bounds[g + 1]]]) for g in range(len(codes))]
    reps = np.stack(np.unravel_index(codes, shape), axis=1)
    mats = space.tau[reps[:, :, None], reps[:, None, :]].reshape(len(reps), k * k)
    uniq, group = np.unique(mats, axis=0, return_inverse=True)
    group = group.ravel()
    # distinct floats may share a 12-digit key, so accumulate per key
    pieces: dict = {}
    for g, row in enumerate(uniq):
        members = np.flatnonzero(group == g)
        if masses is None:
            piece = [int(counts[members].sum())]
        else:
            piece = [part[t] for t in members]
        pieces.setdefault(encode_matrix(row.reshape(k, k)), []).extend(piece)
    if masses is None:
        return MatrixLaw(k, {key: sum(c) / len(tuples) for key, c in pieces.items()})
    return MatrixLaw(k, {key: math.fsum(c) for key, c in pieces.items()})


def exact_matrix_law(space: FiniteLMMS, k: int, cap: int = ENUMERATION_CAP) -> MatrixLaw:
    """Push the ``k``-fold product of the weights through the snapshot map."""
    if k < 1:
        raise ValueError("k must be at least 1")
    sup = space.support
    if len(sup) ** k > cap:
        raise ValueError(f"{len(sup)}^{k} tuples exceed the enumeration cap {cap}")
    tuples = np.array(list(itertools.product(sup, repeat=k)), dtype=int).reshape(-1, k)
    w = space.weights[tuples]
    masses = w[:, 0].copy()
    for j in range(1, k):
        masses = masses * w[:, j]
    return _law_from_tuples(space, k, tuples, masses)


def sample_indices(space: FiniteLMMS, k: int, samples: int, seed: int) -> np.ndarray:
    if samples < 1:
        raise ValueError("samples must be positive")
    rng = make_rng(seed)
    p = space.weights / math.fsum(space.weights)
    return rng.choice(space.n, size=(samples, k), p=p)


def sample_matrix_law(space: FiniteLMMS, k: int, samples: int, seed: int) -> MatrixLaw:
    """Empirical law of ``samples`` i.i.d. snapshots."""
    tuples = sample_indices(space, k, samples, seed)
    return _law_from_tuples(space, k, tuples)


def tv_distance(p: MatrixLaw, q: MatrixLaw) -> float:
    keys = set(p.atoms) | set(q.atoms)
    return 0.5 * math.fsum(abs(p.atoms.get(x, 0.0) - q.atoms.get(x, 0.0)) for x in keys)


def evaluate_polynomial(space: FiniteLMMS, k: int, phi: Callable) -> float:
    """Integral of ``phi`` over snapshot matrices of ``k`` independent points."""
    return exact_matrix_law(space, k).expectation(phi)


# -- bounded Lipschitz test functions -----------------------------------------


@dataclass(frozen=True)
class TestFunctionFamily:
    """Tent functions ``max(0, 1 - |A - B|_max)`` centred at each ``B``."""

    __test__ = False  # not a pytest class

    k: int
    centers: tuple

    def __call__(self, i: int, matrix) -> float:
        return max(0.0, 1.0 - float(np.abs(np.asarray(matrix) - self.centers[i]).max()))

    def integrals(self, law: MatrixLaw) -> np.ndarray:
        mats = law.matrices()
        if not self.centers:
            return np.zeros(0)
        stack = np.array([m for m, _ in mats])
        mass = np.array([w for _, w in mats])
        out = []
        for c in self.centers:
            vals = np.maximum(0.0, 1.0 - np.abs(stack - c).max(axis=(1, 2)))
            out.append(math.fsum(vals * mass))
        return np.array(out)


def lipschitz_family(k: int, laws: Sequence[MatrixLaw], diam: float, cap: int = 64) -> TestFunctionFamily:
    """Centres: every atom of the given laws, then a 3-level admissible grid on ``[0, diam]``."""
    keys = sorted(set().union(*(law.atoms for law in laws)))
    centers = [decode_matrix(key) for key in keys]
    seen = set(keys)
    if len(centers) < cap:
        off = [(i, j) for i in range(k) for j in range(k) if i != j]
        grid = []
        for values in itertools.product((0.0, diam / 2, diam), repeat=len(off)):
            m = np.zeros((k, k))
            for (i, j), v in zip(off, values):
                m[i, j] = v
            key = encode_matrix(m)
            if key not in seen and in_gk(m):
                seen.add(key)
                grid.append((key, m))
                if len(centers) + len(grid) >= cap:
                    break
        centers.extend(m for _, m in sorted(grid, key=lambda t: t[0]))
    return TestFunctionFamily(k, tuple(centers[:cap]))


def family_gap(p: MatrixLaw, q: MatrixLaw, family: TestFunctionFamily) -> float:
    """``sum_i 2^-i |int phi_i dp - int phi_i dq|`` with ``i`` counted from one."""
    diffs = np.abs(family.integrals(p) - family.integrals(q))
    return math.fsum(diffs * 0.5 ** np.arange(1, len(diffs) + 1))


# -- isomorphy ---------------------------------------------------------------


@dataclass(frozen=True)
class IsomorphyResult:
    isomorphic: bool
    mapping: Optional[dict] = None  # quotient label of a -> quotient label of b
    index_map: Optional[tuple] = None  # quotient index of a -> quotient index of b
    classes_a: tuple = ()
    classes_b: tuple = ()

    def __bool__(self):
        return self.isomorphic


def _invariants(space: FiniteLMMS):
    nd = noldus_metric(space)
    return [(space.weights[i], np.sort(space.tau[i]), np.sort(space.tau[:, i]), np.sort(nd[i]))
            for i in range(space.n)]


def _match(u, v, tol) -> bool:
    return all(np.all(np.abs(np.asarray(x) - np.asarray(y)) <= tol) for x, y in zip(u, v))


def isomorphy_test(a: FiniteLMMS, b: FiniteLMMS, tol: float = DEFAULT_TOL) -> IsomorphyResult:
    """Decide isomorphy by backtracking over bijections of the distance quotients."""
    qa, ca = quotient_classes(a, tol)
    qb, cb = quotient_classes(b, tol)
    if qa.n != qb.n:
        return IsomorphyResult(False, classes_a=tuple(ca), classes_b=tuple(cb))
    n = qa.n
    inv_a, inv_b = _invariants(qa), _invariants(qb)
    cand = [[j for j in range(n) if _match(inv_a[i], inv_b[j], tol)] for i in range(n)]
    if any(not c for c in cand):
        return IsomorphyResult(False, classes_a=tuple(ca), classes_b=tuple(cb))
    order = sorted(range(n), key=lambda i: len(cand[i]))
    ta, tb = qa.tau, qb.tau
    sigma = [-1] * n
    used = [False] * n

    def extend(depth: int) -> bool:
        if depth == n:
            return True
        i = order[depth]
        for j in cand[i]:
            if used[j]:
                continue
            ok = True
            for prev in order[:depth]:
                sj = sigma[prev]
                if abs(ta[i, prev] - tb[j, sj]) > tol or abs(ta[prev, i] - tb[sj, j]) > tol:
                    ok = False
                    break
            if ok:
                sigma[i], used[j] = j, True
                if extend(depth + 1):
                    return True
                sigma[i], used[j] = -1, False
        return False

    if not extend(0):
        return IsomorphyResult(False, classes_a=tuple(ca), classes_b=tuple(cb))
    mapping = {qa.labels[i]: qb.labels[sigma[i]] for i in range(n)}
    return IsomorphyResult(True, mapping, tuple(sigma), tuple(ca), tuple(cb))


# -- reconstruction experiment ---------------------------------------------------


def bootstrap_distinguishable(sa: MatrixLaw, sb: MatrixLaw, samples: int, seed: int,
                              resamples: int = 200, sigmas: float = 3.0) -> tuple:
    """Compare an observed TV gap with its spread under the pooled law.

    Returns ``(distinguishable, bootstrap_mean, bootstrap_sd)``.
    """
    observed = tv_distance(sa, sb)
    keys = sorted(set(sa.atoms) | set(sb.atoms))
    pooled = np.array([0.5 * (sa.atoms.get(x, 0.0) + sb.atoms.get(x, 0.0)) for x in keys])
    pooled = pooled / pooled.sum()
    rng = make_rng(seed)
    stats = []
    for _ in range(resamples):
        c1 = rng.multinomial(samples, pooled) / samples
        c2 = rng.multinomial(samples, pooled) / samples
        stats.append(0.5 * np.abs(c1 - c2).sum())
    mean, sd = float(np.mean(stats)), float(np.std(stats))
    return observed > mean + sigmas * sd, mean, sd


@dataclass
class LevelReport:
    k: int
    mode: str  # "exact" or "sampled"
    tv: float
    family_gap: float
    laws_agree: bool
    bootstrap: Optional[dict] = None


@dataclass
class ReconstructionReport:
    levels: list = field(default_factory=list)
    intrinsic_estimate: float = 0.0
    isomorphic: bool = False
    laws_agree: bool = False
    agreement: bool = False

    def to_dict(self) -> dict:
        return {
            "levels": [vars(lv) for lv in self.levels],
            "intrinsic_estimate": self.intrinsic_estimate,
            "isomorphic": self.isomorphic,
            "laws_agree": self.laws_agree,
            "agreement": self.agreement,
        }


def reconstruction_experiment(a: FiniteLMMS, b: FiniteLMMS, k_max: int = 3, samples: int = 10_000,
                              seed: int = 0, exact_cap: int = 10**6, family_size: int = 64) -> ReconstructionReport:
    """Compare matrix laws level by level against the exact isomorphy verdict."""
    report = ReconstructionReport()
    diam = max(diameter(a), diameter(b))
    seeds = np.random.SeedSequence(seed).generate_state(3 * k_max, dtype=np.uint64)
    for k in range(1, k_max + 1):
        exact = len(a.support) ** k <= exact_cap and len(b.support) ** k <= exact_cap
        if exact:
            la, lb = exact_matrix_law(a, k), exact_matrix_law(b, k)
            tv = tv_distance(la, lb)
            level = LevelReport(k, "exact", tv, 0.0, tv <= LAW_EQUAL_TOL)
        else:
            sa, sb, sboot = (int(x) for x in seeds[3 * (k - 1):3 * k])
            la = sample_matrix_law(a, k, samples, sa)
            lb = sample_matrix_law(b, k, samples, sb)
            tv = tv_distance(la, lb)
            dist, mean, sd = bootstrap_distinguishable(la, lb, samples, sboot)
            level = LevelReport(k, "sampled", tv, 0.0, not dist,
                                {"mean": mean, "sd": sd, "distinguishable": dist})
        family = lipschitz_family(k, [la, lb], diam, family_size)
        level.family_gap = family_gap(la, lb, family)
        report.levels.append(level)
        report.intrinsic_estimate += 0.5 ** k * level.family_gap
    report.isomorphic = isomorphy_test(a, b).isomorphic
    report.laws_agree = all(lv.laws_agree for lv in report.levels)
    report.agreement = report.laws_agree == report.isomorphic
    return report
