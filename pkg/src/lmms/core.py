"""Finite bounded Lorentzian metric measure spaces.

A finite space is a time-separation matrix ``tau`` together with point labels,
probability weights and an optional spacelike-boundary index.  Construction
only checks shapes; the axioms are checked by :func:`validate`, so that broken
instances can still be loaded and reported on.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

DEFAULT_TOL = 1e-9
WEIGHT_TOL = 1e-9


class StructuralError(ValueError):
    """Inconsistent dimensions, duplicate labels or malformed input."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FiniteLMMS:
    """A weighted causet: time separation, labels, weights and boundary flag."""

    tau: np.ndarray
    labels: tuple
    weights: np.ndarray
    boundary: Optional[int] = None

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        if tau.ndim != 2 or tau.shape[0] != tau.shape[1] or tau.shape[0] == 0:
            raise StructuralError(f"tau must be a non-empty square matrix, got shape {tau.shape}")
        n = tau.shape[0]
        labels = tuple(str(x) for x in self.labels)
        if len(labels) != n:
            raise StructuralError(f"{len(labels)} labels for {n} points")
        if len(set(labels)) != n:
            raise StructuralError("labels must be distinct")
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (n,):
            raise StructuralError(f"{weights.shape[0] if weights.ndim else 0} weights for {n} points")
        if self.boundary is not None and not (0 <= int(self.boundary) < n):
            raise StructuralError(f"boundary index {self.boundary} out of range")
        object.__setattr__(self, "tau", _frozen(tau))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "weights", _frozen(weights))
        if self.boundary is not None:
            object.__setattr__(self, "boundary", int(self.boundary))

    @classmethod
    def from_matrix(cls, tau, weights=None, labels=None, boundary=None) -> "FiniteLMMS":
        tau = np.asarray(tau, dtype=float)
        n = tau.shape[0]
        if weights is None:
            weights = np.full(n, 1.0 / n)
        if labels is None:
            labels = [f"p{i}" for i in range(n)]
        return cls(tau, tuple(labels), weights, boundary)

    @property
    def n(self) -> int:
        return self.tau.shape[0]

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    def __eq__(self, other):
        if not isinstance(other, FiniteLMMS):
            return NotImplemented
        return (
            self.labels == other.labels
            and self.boundary == other.boundary
            and np.array_equal(self.tau, other.tau)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None

    def relabel(self, perm: Sequence[int], labels: Optional[Sequence[str]] = None) -> "FiniteLMMS":
        """Return the copy whose point ``i`` is this space's point ``perm[i]``."""
        perm = np.asarray(perm, dtype=int)
        boundary = None
        if self.boundary is not None:
            boundary = int(np.flatnonzero(perm == self.boundary)[0])
        new_labels = [self.labels[p] for p in perm] if labels is None else list(labels)
        return FiniteLMMS(self.tau[np.ix_(perm, perm)], tuple(new_labels), self.weights[perm], boundary)

    def restrict(self, idx: Sequence[int]) -> "FiniteLMMS":
        """Sub-space on ``idx`` with weights renormalized to total mass one."""
        idx = np.asarray(idx, dtype=int)
        w = self.weights[idx]
        total = w.sum()
        boundary = None
        if self.boundary is not None and self.boundary in idx:
            boundary = int(np.flatnonzero(idx == self.boundary)[0])
        return FiniteLMMS(self.tau[np.ix_(idx, idx)], tuple(self.labels[i] for i in idx),
                          w / total if total > 0 else w, boundary)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "tau": [[float(x) for x in row] for row in self.tau],
            "weights": [float(x) for x in self.weights],
            "boundary": self.boundary,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FiniteLMMS":
        try:
            tau = data["tau"]
            weights = data["weights"]
            labels = data.get("labels")
        except (KeyError, TypeError) as exc:
            raise StructuralError(f"malformed instance: {exc}") from None
        tau_arr = np.asarray(tau, dtype=float)
        w_arr = np.asarray(weights, dtype=float)
        if not (np.all(np.isfinite(tau_arr)) and np.all(np.isfinite(w_arr))):
            raise StructuralError("instance contains NaN or infinite entries")
        if np.any(tau_arr < 0) or np.any(w_arr < 0):
            raise StructuralError("instance contains negative entries")
        if labels is None:
            labels = [f"p{i}" for i in range(tau_arr.shape[0])]
        return cls(tau_arr, tuple(labels), w_arr, data.get("boundary"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "FiniteLMMS":
        def reject(token):
            raise StructuralError(f"non-finite number {token!r} in instance")

        return cls.from_dict(json.loads(text, parse_constant=reject))

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def load(path) -> FiniteLMMS:
    return FiniteLMMS.from_json(Path(path).read_text())


def save(space: FiniteLMMS, path) -> None:
    Path(path).write_text(space.to_json() + "\n")


# -- validation --------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    axiom: str
    indices: tuple
    detail: str


@dataclass(frozen=True)
class PointDistinctionReport:
    distinguished: bool
    merge_classes: tuple


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self):
        return len(self.violations)

    def to_dict(self) -> dict:
        def conv(v):
            return {"axiom": v.axiom, "indices": list(v.indices), "detail": v.detail}

        return {"ok": self.ok, "violations": [conv(v) for v in self.violations],
                "warnings": [conv(v) for v in self.warnings]}


def reverse_triangle_violations(tau: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Index triples ``(i, j, l)`` breaking the reverse triangle inequality."""
    pos = tau > 0
    lhs = tau[:, :, None] + tau[None, :, :]
    bad = pos[:, :, None] & pos[None, :, :] & (lhs > tau[:, None, :] + tol)
    return np.argwhere(bad)


def in_gk(matrix, tol: float = DEFAULT_TOL) -> bool:
    """Membership of a square matrix in the closed set of admissible distance matrices."""
    a = np.asarray(matrix, dtype=float)
    if np.any(np.abs(np.diag(a)) > tol) or np.any(a < -tol):
        return False
    return len(reverse_triangle_violations(a, tol)) == 0


def _classes(close: np.ndarray) -> list:
    """Connected components of a boolean adjacency matrix, in index order."""
    n = close.shape[0]
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in zip(*np.nonzero(np.triu(close, 1))):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [tuple(g) for g in sorted(groups.values())]


def point_distinction(space: FiniteLMMS, tol: float = DEFAULT_TOL) -> PointDistinctionReport:
    classes = _classes(noldus_metric(space) <= tol)
    return PointDistinctionReport(all(len(c) == 1 for c in classes), tuple(classes))


def validate(space: FiniteLMMS, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Check the finite axioms; indistinguishable points only produce warnings."""
    report = ValidationReport()
    tau, lab = space.tau, space.labels
    if not np.all(np.isfinite(tau)):
        report.violations.append(Violation("finite", (), "tau has non-finite entries"))
        return report
    for i, j in np.argwhere(tau < 0):
        report.violations.append(Violation("nonnegativity", (int(i), int(j)),
                                           f"tau({lab[i]},{lab[j]}) = {tau[i, j]} < 0"))
    for i in np.flatnonzero(np.abs(np.diag(tau)) > tol):
        report.violations.append(Violation("zero_diagonal", (int(i),), f"tau({lab[i]},{lab[i]}) = {tau[i, i]}"))
    for i, j, l in reverse_triangle_violations(tau, tol):
        report.violations.append(Violation(
            "reverse_triangle", (int(i), int(j), int(l)),
            f"tau({lab[i]},{lab[j]}) + tau({lab[j]},{lab[l]}) = {tau[i, j] + tau[j, l]}"
            f" > tau({lab[i]},{lab[l]}) = {tau[i, l]}"))
    w = space.weights
    if np.any(w < 0):
        for i in np.flatnonzero(w < 0):
            report.violations.append(Violation("weights", (int(i),), f"negative weight {w[i]}"))
    if abs(math.fsum(w) - 1.0) > WEIGHT_TOL:
        report.violations.append(Violation("weights", (), f"weights sum to {math.fsum(w)}, not 1"))
    b = space.boundary
    if b is not None and (np.any(tau[b] != 0) or np.any(tau[:, b] != 0)):
        report.violations.append(Violation("boundary", (b,), f"boundary {lab[b]} has nonzero tau"))
    for cls in point_distinction(space, tol).merge_classes:
        if len(cls) > 1:
            names = ",".join(lab[i] for i in cls)
            report.warnings.append(Violation("point_distinction", cls, f"points {names} indistinguishable"))
    return report


# -- derived structure -------------------------------------------------------


def noldus_metric(space: FiniteLMMS) -> np.ndarray:
    """Distinction metric: largest gap between two points' tau rows or columns."""
    tau = space.tau
    rows = np.abs(tau[:, None, :] - tau[None, :, :]).max(axis=2)
    cols = np.abs(tau.T[:, None, :] - tau.T[None, :, :]).max(axis=2)
    return np.maximum(rows, cols)


def diameter(space: FiniteLMMS) -> float:
    s = space.support
    if len(s) == 0:
        return 0.0
    return float(space.tau[np.ix_(s, s)].max())


def canonical_order(tau: np.ndarray, weights: np.ndarray) -> list:
    """Weight descending, then sorted tau row, then sorted tau column.

    The key does not depend on the current point order, and the sort is
    stable, so re-sorting a canonical space is the identity.
    """
    return sorted(range(len(weights)),
                  key=lambda i: (-weights[i], tuple(np.sort(tau[i])), tuple(np.sort(tau[:, i]))))


def quotient_classes(space: FiniteLMMS, tol: float = DEFAULT_TOL) -> tuple:
    """Distance quotient together with the original indices behind each point."""
    sup = space.support
    sub_tau = space.tau[np.ix_(sup, sup)]
    sub = FiniteLMMS(sub_tau, tuple(space.labels[i] for i in sup), space.weights[sup])
    classes = _classes(noldus_metric(sub) <= tol)
    m = len(classes)
    tau = np.empty((m, m))
    for a, ca in enumerate(classes):
        for b, cb in enumerate(classes):
            tau[a, b] = sub_tau[np.ix_(ca, cb)].mean()
    weights = np.array([math.fsum(space.weights[sup[list(c)]]) for c in classes])
    labels = [sub.labels[c[0]] for c in classes]
    boundary = None
    if space.boundary is not None and space.boundary in sup:
        bpos = int(np.flatnonzero(sup == space.boundary)[0])
        boundary = next(k for k, c in enumerate(classes) if bpos in c)
    order = canonical_order(tau, weights)
    if boundary is not None:
        boundary = order.index(boundary)
    quotient = FiniteLMMS(tau[np.ix_(order, order)], tuple(labels[i] for i in order), weights[order], boundary)
    members = [tuple(int(sup[i]) for i in classes[k]) for k in order]
    return quotient, members


def distance_quotient(space: FiniteLMMS, tol: float = DEFAULT_TOL) -> FiniteLMMS:
    """Restrict to the support and merge points that tau cannot tell apart.

    Merged tau entries are class means; points come out in canonical order
    and each class keeps the label of its first member.
    """
    return quotient_classes(space, tol)[0]


BOUNDARY_LABEL = "i0"


def one_point_compactification(space: FiniteLMMS) -> FiniteLMMS:
    """Adjoin a zero-weight spacelike boundary point with vanishing tau."""
    if space.boundary is not None:
        raise ValueError("space already has a spacelike boundary point")
    n = space.n
    tau = np.zeros((n + 1, n + 1))
    tau[:n, :n] = space.tau
    label = BOUNDARY_LABEL
    while label in space.labels:
        label += "'"
    return FiniteLMMS(tau, space.labels + (label,), np.append(space.weights, 0.0), n)


def disjoint_union(a: FiniteLMMS, b: FiniteLMMS, alpha: float) -> FiniteLMMS:
    """Glue two spaces at their spacelike boundaries with mixing weight ``alpha``.

    Labels are prefixed ``a/`` and ``b/``; the shared boundary point keeps the
    label of ``a``'s boundary.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if a.boundary is None:
        a = one_point_compactification(a)
    if b.boundary is None:
        b = one_point_compactification(b)
    ia = [i for i in range(a.n) if i != a.boundary]
    ib = [i for i in range(b.n) if i != b.boundary]
    na, nb = len(ia), len(ib)
    n = na + nb + 1
    tau = np.zeros((n, n))
    tau[:na, :na] = a.tau[np.ix_(ia, ia)]
    tau[na:na + nb, na:na + nb] = b.tau[np.ix_(ib, ib)]
    weights = np.concatenate([
        alpha * a.weights[ia],
        (1.0 - alpha) * b.weights[ib],
        [alpha * a.weights[a.boundary] + (1.0 - alpha) * b.weights[b.boundary]],
    ])
    labels = [f"a/{a.labels[i]}" for i in ia] + [f"b/{b.labels[i]}" for i in ib] + [a.labels[a.boundary]]
    return FiniteLMMS(tau, tuple(labels), weights, n - 1)


def scaled(space: FiniteLMMS, factor: float) -> FiniteLMMS:
    return FiniteLMMS(space.tau * factor, space.labels, space.weights, space.boundary)


def powered(space: FiniteLMMS, q: float) -> FiniteLMMS:
    """Entrywise ``tau ** q``; the reverse triangle survives for ``q >= 1``."""
    if q == 1:
        return space
    return FiniteLMMS(space.tau ** q, space.labels, space.weights, space.boundary)


def support_pairs(a: FiniteLMMS, b: FiniteLMMS) -> Iterable[tuple]:
    for i in a.support:
        for j in b.support:
            yield int(i), int(j)
