"""Random instances: sprinkled Minkowski diamonds and abstract weighted causets."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .core import FiniteLMMS
from .reconstruct import make_rng

MAX_RESAMPLES = 10**6


@dataclass(frozen=True)
class SprinkleConfig:
    """Exactly one of ``n`` (i.i.d. mode) and ``intensity`` (Poisson mode) is set."""

    dim: int = 1
    half_height: float = 1.0
    n: Optional[int] = None
    intensity: Optional[float] = None
    seed: int = 0
    drop_boundary: bool = True  # samples avoid the boundary almost surely; kept for API stability

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("spatial dimension must be at least 1")
        if not self.half_height > 0:
            raise ValueError("half height must be positive")
        if (self.n is None) == (self.intensity is None):
            raise ValueError("give exactly one of n and intensity")
        if self.n is not None and self.n < 1:
            raise ValueError("n must be at least 1")
        if self.intensity is not None and not self.intensity > 0:
            raise ValueError("intensity must be positive")

    @property
    def mode(self) -> str:
        return "iid" if self.n is not None else "poisson"

    def to_dict(self) -> dict:
        return asdict(self)


def diamond_volume(dim: int, half_height: float) -> float:
    """Volume of ``{|t| + |x| <= T}`` in ``1 + dim`` dimensions."""
    ball = 1.0 if dim % 2 == 0 else 2.0  # unit ball, by V_d = V_{d-2} 2 pi / d
    for d in range(2 + dim % 2, dim + 1, 2):
        ball *= 2.0 * math.pi / d
    return 2.0 * ball * half_height ** (dim + 1) / (dim + 1)


def minkowski_tau(p, q) -> float:
    """Proper time from event ``p`` to event ``q``, or 0 if ``q`` is not in the causal future."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    dt = q[0] - p[0]
    dx = float(np.linalg.norm(q[1:] - p[1:]))
    if dt < dx:
        return 0.0
    return math.sqrt(max(dt * dt - dx * dx, 0.0))


def minkowski_tau_matrix(coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    dt = coords[None, :, 0] - coords[:, None, 0]
    dx = np.linalg.norm(coords[None, :, 1:] - coords[:, None, 1:], axis=2)
    tau = np.sqrt(np.maximum(dt * dt - dx * dx, 0.0))
    tau[dt < dx] = 0.0
    np.fill_diagonal(tau, 0.0)
    return tau


def _diamond_points(rng: np.random.Generator, count: int, dim: int, half_height: float) -> np.ndarray:
    """Uniform points in the diamond by rejection from its bounding box."""
    out = []
    have = 0
    while have < count:
        batch = rng.uniform(-half_height, half_height, size=(2 * (count - have) + 8, dim + 1))
        keep = batch[np.abs(batch[:, 0]) + np.linalg.norm(batch[:, 1:], axis=1) <= half_height]
        out.append(keep)
        have += len(keep)
    return np.concatenate(out)[:count]


def sprinkle_with_coordinates(config: SprinkleConfig) -> tuple:
    """Sprinkled space together with its event coordinates, sorted by time."""
    rng = make_rng(config.seed)
    if config.mode == "iid":
        count = config.n
    else:
        mean = config.intensity * diamond_volume(config.dim, config.half_height)
        for _ in range(MAX_RESAMPLES):
            count = int(rng.poisson(mean))
            if count > 0:
                break
        else:
            raise RuntimeError("Poisson draw stayed empty; intensity too small")
    coords = _diamond_points(rng, count, config.dim, config.half_height)
    coords = coords[np.lexsort(coords.T[::-1])]
    space = FiniteLMMS.from_matrix(minkowski_tau_matrix(coords), np.full(count, 1.0 / count))
    return space, coords


def sprinkle(config: SprinkleConfig) -> FiniteLMMS:
    return sprinkle_with_coordinates(config)[0]


def sidecar(config: SprinkleConfig, coords: np.ndarray) -> dict:
    return {"config": config.to_dict(), "coordinates": [[float(x) for x in row] for row in coords]}


def random_causet(n: int, density: float, max_tau: float = 1.0, seed: int = 0,
                  random_weights: bool = False) -> FiniteLMMS:
    """Random partial order with longest-path time separation.

    Points are put in a random order; each forward pair becomes a relation
    with probability ``density`` and gets a length in ``(0, max_tau]``.  Time
    separation is the longest chain length between two points, so the reverse
    triangle inequality holds by construction.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0.0 <= density <= 1.0:
        raise ValueError("density must lie in [0, 1]")
    if not max_tau > 0:
        raise ValueError("max_tau must be positive")
    rng = make_rng(seed)
    order = rng.permutation(n)
    edges = np.triu((rng.random((n, n)) < density) * (1.0 - rng.random((n, n))) * max_tau, 1)
    longest = edges.copy()
    for v in range(n):
        via = longest[:, :v] + edges[:v, v]
        via[(longest[:, :v] <= 0) | (edges[:v, v] <= 0)[None, :]] = 0.0
        if v:
            longest[:, v] = np.maximum(longest[:, v], via.max(axis=1))
    tau = np.zeros((n, n))
    tau[np.ix_(order, order)] = longest
    weights = rng.dirichlet(np.ones(n)) if random_weights else np.full(n, 1.0 / n)
    return FiniteLMMS.from_matrix(tau, weights)
