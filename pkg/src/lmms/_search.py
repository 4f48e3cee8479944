"""Combinatorial helpers shared by the solvers: cliques and small transport LPs."""

from __future__ import annotations

from typing import Iterator, Optional, Sequence

import networkx as nx
import numpy as np
from scipy.optimize import linprog


def compat_graph(gaps: np.ndarray, eps: float) -> nx.Graph:
    """Cells ``s, t`` are adjacent when both directed gaps are at most ``eps``."""
    ok = (gaps <= eps) & (gaps.T <= eps)
    g = nx.Graph()
    g.add_nodes_from(range(gaps.shape[0]))
    s, t = np.nonzero(np.triu(ok, 1))
    g.add_edges_from(zip(s.tolist(), t.tolist()))
    return g


def maximal_cliques(graph: nx.Graph) -> Iterator[list]:
    """Maximal cliques in a deterministic order (sorted node lists)."""
    for clique in nx.find_cliques(graph):
        yield sorted(clique)


def max_weight_clique(adj: Sequence[set], weights: Sequence, cap: int = 1 << 20) -> tuple:
    """Exhaustive branch and bound; ``weights`` may be exact fractions.

    Returns ``(best_weight, best_clique, complete)``; ``complete`` is false
    when more than ``cap`` search nodes were needed.
    """
    m = len(weights)
    order = sorted(range(m), key=lambda v: (-weights[v], v))
    zero = weights[0] * 0 if m else 0
    best = [zero, ()]
    visited = [0]

    def expand(cand: list, cur: tuple, cur_w) -> bool:
        visited[0] += 1
        if visited[0] > cap:
            return False
        if cur_w > best[0]:
            best[0], best[1] = cur_w, cur
        bound = cur_w + sum((weights[v] for v in cand), zero)
        if bound <= best[0]:
            return True
        for k, v in enumerate(cand):
            rest = [u for u in cand[k + 1:] if u in adj[v]]
            if not expand(rest, cur + (v,), cur_w + weights[v]):
                return False
        return True

    complete = expand(order, (), zero)
    return best[0], tuple(sorted(best[1])), complete


def transport_constraints(n: int, m: int) -> np.ndarray:
    a = np.zeros((n + m, n * m))
    for i in range(n):
        a[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        a[n + j, j::m] = 1.0
    return a


def transport_vertex(cost: np.ndarray, wa, wb) -> np.ndarray:
    """Optimal vertex of the linear transport problem with the given cost matrix."""
    n, m = cost.shape
    a = transport_constraints(n, m)
    rhs = np.concatenate([wa, wb])
    # one equality is redundant; dropping it keeps float marginals consistent
    res = linprog(cost.ravel(), A_eq=a[:-1], b_eq=rhs[:-1], bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return np.maximum(res.x, 0.0).reshape(n, m)


def max_mass_on(cells: Sequence[tuple], wa, wb) -> tuple:
    """Largest mass a coupling of ``wa, wb`` can place on ``cells``.

    Returns ``(mass, x)`` with ``x`` an ``n x m`` sub-coupling supported on the
    cells; it extends to a full coupling by adding the product of residuals.
    """
    wa, wb = np.asarray(wa, dtype=float), np.asarray(wb, dtype=float)
    n, m = len(wa), len(wb)
    k = len(cells)
    if k == 0:
        return 0.0, np.zeros((n, m))
    a = np.zeros((n + m, k))
    for col, (i, j) in enumerate(cells):
        a[i, col] = 1.0
        a[n + j, col] = 1.0
    res = linprog(-np.ones(k), A_ub=a, b_ub=np.concatenate([wa, wb]), bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"max-mass LP failed: {res.message}")
    x = np.zeros((n, m))
    for col, (i, j) in enumerate(cells):
        x[i, j] = max(res.x[col], 0.0)
    return float(x.sum()), x


def complete_coupling(x: np.ndarray, wa, wb, clean: float = 1e-13) -> np.ndarray:
    """Fill a sub-coupling up to the marginals with the product of residuals."""
    x = np.where(x < clean, 0.0, x)
    ra = np.maximum(np.asarray(wa) - x.sum(axis=1), 0.0)
    rb = np.maximum(np.asarray(wb) - x.sum(axis=0), 0.0)
    ra[ra < clean] = 0.0
    rb[rb < clean] = 0.0
    total = 0.5 * (ra.sum() + rb.sum())
    if total > 0 and ra.sum() > 0 and rb.sum() > 0:
        x = x + np.outer(ra, rb) / total
    return x


def lex_key(x: np.ndarray) -> tuple:
    return tuple(np.asarray(x).ravel().tolist())


def better(val: float, x, best: Optional[tuple], tol: float = 1e-12) -> bool:
    """Prefer the smaller value, then the lexicographically smaller witness."""
    if best is None:
        return True
    bval, bx = best
    if val < bval - tol:
        return True
    if val > bval + tol:
        return False
    return lex_key(x) < lex_key(bx)
