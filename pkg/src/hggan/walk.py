"""Backtrack-terminated random walks on weighted graphs.

A walk starts at ``r0`` and keeps stepping along the row-normalized
connectivity until it steps back to the node it was at two steps earlier;
the node just before that backtrack is the walk's endpoint.  Endpoint
distributions are computed exactly through the absorbing chain on ordered
node pairs ``(previous, current)``, or estimated by sampling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CapacityError, DomainError, InputError, NoTerminationError, PathError

__all__ = [
    "WalkPath",
    "WalkBatch",
    "EndpointDistribution",
    "transition_matrix",
    "path_probability",
    "walk_rng",
    "sample_walk",
    "sample_walks",
    "endpoint_distribution_exact",
    "endpoint_distributions_exact",
    "empirical_distribution",
    "unterminated_mass",
    "expected_log_score",
    "tv_distance",
]

DEFAULT_CAP = 256
DEFAULT_RETRIES = 10
EXACT_MAX_N = 64


@dataclass(frozen=True)
class WalkPath:
    nodes: tuple[int, ...]
    truncated: bool = False

    @property
    def steps(self) -> int:
        """T: the number of moves before the terminating backtrack."""
        return len(self.nodes) - 2

    @property
    def endpoint(self) -> int:
        if self.truncated:
            raise PathError("a truncated walk has no endpoint")
        return self.nodes[-2]


@dataclass(frozen=True)
class EndpointDistribution:
    probs: np.ndarray
    start: int


def transition_matrix(c) -> np.ndarray:
    """Row-normalized ``|C|`` with a zero diagonal; all-zero rows become uniform over the other nodes."""
    c = np.abs(np.asarray(c, dtype=float))
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise InputError(f"connectivity must be square, got shape {c.shape}")
    n = c.shape[0]
    if n < 3:
        raise CapacityError(f"walks need at least 3 nodes, got {n}")
    if not np.isfinite(c).all():
        raise InputError("connectivity has non-finite entries")
    np.fill_diagonal(c, 0.0)
    sums = c.sum(axis=1)
    p = np.empty_like(c)
    live = sums > 0
    p[live] = c[live] / sums[live, None]
    p[~live] = 1.0 / (n - 1)
    np.fill_diagonal(p, 0.0)
    return p


def _check_start(p: np.ndarray, start: int) -> int:
    start = int(start)
    if not 0 <= start < p.shape[0]:
        raise InputError(f"start node {start} out of range 0..{p.shape[0] - 1}")
    return start


def path_probability(p: np.ndarray, path: WalkPath) -> float:
    """Product of the transition ratios along the path, final backtrack included."""
    nodes = path.nodes
    if path.truncated:
        raise PathError("truncated walks have no path probability")
    if len(nodes) < 3 or nodes[-1] != nodes[-3]:
        raise PathError(f"path {nodes} does not end with a backtrack")
    for t in range(1, len(nodes)):
        if nodes[t] == nodes[t - 1]:
            raise PathError(f"path {nodes} repeats node {nodes[t]} in consecutive positions")
    for t in range(2, len(nodes) - 1):
        if nodes[t] == nodes[t - 2]:
            raise PathError(f"path {nodes} backtracks early at position {t}")
    prob = 1.0
    for u, v in zip(nodes[:-1], nodes[1:]):
        prob *= p[u, v]
    return float(prob)


def walk_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, stream)``; independent streams for shards."""
    key = (int(seed) & (2**64 - 1)) | ((int(stream) & (2**64 - 1)) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def _draw(p_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(p_rows, axis=1)
    return np.argmax(cum > u[:, None] * cum[:, -1:], axis=1)


def sample_walk(p: np.ndarray, start: int, seed: int = 0, cap: int = DEFAULT_CAP) -> WalkPath:
    if cap < 2:
        raise InputError("cap must be at least 2")
    start = _check_start(p, start)
    rng = walk_rng(seed)
    nodes = [start]
    for _ in range(cap):
        nxt = int(_draw(p[nodes[-1]][None, :], rng.random(1))[0])
        nodes.append(nxt)
        if len(nodes) >= 3 and nxt == nodes[-3]:
            return WalkPath(tuple(nodes), False)
    return WalkPath(tuple(nodes), True)


@dataclass
class WalkBatch:
    """Many walks stored as a padded node array (-1 after the walk ends)."""

    starts: np.ndarray
    nodes: np.ndarray  # (count, cap + 1)
    moves: np.ndarray  # number of moves taken
    truncated: np.ndarray

    @property
    def endpoints(self) -> np.ndarray:
        idx = np.clip(self.moves - 1, 0, None)
        ends = self.nodes[np.arange(len(self.moves)), idx]
        return np.where(self.truncated, -1, ends)

    def transitions(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flattened ``(walk index, from, to)`` for every move taken."""
        count, width = self.nodes.shape
        t = np.arange(width - 1)
        valid = t[None, :] < self.moves[:, None]
        walk = np.broadcast_to(np.arange(count)[:, None], valid.shape)[valid]
        return walk, self.nodes[:, :-1][valid], self.nodes[:, 1:][valid]

    def path(self, i: int) -> WalkPath:
        return WalkPath(tuple(int(v) for v in self.nodes[i, : self.moves[i] + 1]), bool(self.truncated[i]))


def _simulate(p: np.ndarray, starts: np.ndarray, rng: np.random.Generator, cap: int) -> WalkBatch:
    count = len(starts)
    nodes = np.full((count, cap + 1), -1, dtype=np.int64)
    nodes[:, 0] = starts
    moves = np.zeros(count, dtype=np.int64)
    active = np.ones(count, dtype=bool)
    for step in range(cap):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        cur = nodes[idx, step]
        nxt = _draw(p[cur], rng.random(idx.size))
        nodes[idx, step + 1] = nxt
        moves[idx] = step + 1
        if step >= 1:
            done = nxt == nodes[idx, step - 1]
            active[idx[done]] = False
    return WalkBatch(np.asarray(starts), nodes, moves, active.copy())


def sample_walks(
    p: np.ndarray,
    starts,
    seed: int = 0,
    cap: int = DEFAULT_CAP,
    retries: int = DEFAULT_RETRIES,
    stream: int = 0,
) -> WalkBatch:
    """Sample one walk per entry of ``starts``.

    Walks that hit ``cap`` moves are redrawn up to ``retries`` times; any
    still unfinished keep ``truncated=True``.
    """
    if cap < 2:
        raise InputError("cap must be at least 2")
    starts = np.asarray(starts, dtype=np.int64)
    if starts.size and (starts.min() < 0 or starts.max() >= p.shape[0]):
        raise InputError("start node out of range")
    rng = walk_rng(seed, stream)
    batch = _simulate(p, starts, rng, cap)
    for _ in range(retries):
        redo = np.flatnonzero(batch.truncated)
        if redo.size == 0:
            break
        again = _simulate(p, starts[redo], rng, cap)
        batch.nodes[redo] = again.nodes
        batch.moves[redo] = again.moves
        batch.truncated[redo] = again.truncated
    return batch


def empirical_distribution(batch: WalkBatch, n: int) -> np.ndarray:
    ends = batch.endpoints
    ends = ends[ends >= 0]
    if ends.size == 0:
        return np.zeros(n)
    return np.bincount(ends, minlength=n) / ends.size


def _chain(p: np.ndarray):
    """Transient-to-transient matrix Q and absorption matrix R over pair states ``u*n + v``."""
    n = p.shape[0]
    rows, cols, vals = [], [], []
    r = np.zeros((n * n, n))
    for u in range(n):
        for v in range(n):
            if u == v:
                continue
            s = u * n + v
            r[s, v] = p[v, u]
            for w in np.flatnonzero(p[v]):
                if w != u:
                    rows.append(s)
                    cols.append(v * n + w)
                    vals.append(p[v, w])
    q = sp.csr_matrix((vals, (rows, cols)), shape=(n * n, n * n))
    return q, r


def _first_step(p: np.ndarray, start: int) -> np.ndarray:
    n = p.shape[0]
    init = np.zeros(n * n)
    init[start * n + np.arange(n)] = p[start]
    return init


def _reachable(q: sp.csr_matrix, seeds: np.ndarray) -> np.ndarray:
    seen = np.zeros(q.shape[0], dtype=bool)
    seen[seeds] = True
    frontier = seeds
    while frontier.size:
        nxt = np.unique(q[frontier].indices)
        nxt = nxt[~seen[nxt]]
        seen[nxt] = True
        frontier = nxt
    return seen


def endpoint_distributions_exact(p: np.ndarray, starts=None) -> np.ndarray:
    """Exact endpoint distributions, one row per start node (default: all nodes)."""
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    if n > EXACT_MAX_N:
        raise CapacityError(f"exact solver supports n <= {EXACT_MAX_N}, got {n}")
    if n < 3:
        raise CapacityError(f"walks need at least 3 nodes, got {n}")
    starts = np.arange(n) if starts is None else np.atleast_1d(np.asarray(starts, dtype=np.int64))
    for s in starts:
        _check_start(p, s)
    q, r = _chain(p)
    init = np.stack([_first_step(p, s) for s in starts])

    # states reachable from any start that can never reach absorption
    reach = _reachable(q, np.unique(np.flatnonzero(init.sum(axis=0) > 0)))
    can_absorb = _reachable(q.T.tocsr(), np.flatnonzero(r.sum(axis=1) > 0))
    stuck = np.flatnonzero(reach & ~can_absorb)
    stuck = stuck[(stuck // n) != (stuck % n)]
    if stuck.size:
        pairs = [(int(s // n), int(s % n)) for s in stuck[:10]]
        raise NoTerminationError(f"walk can circulate forever through (previous, current) states {pairs}", pairs)

    keep = np.flatnonzero(reach)
    q_sub = q[keep][:, keep]
    lhs = (sp.identity(keep.size, format="csc") - q_sub.tocsc())
    absorb = spla.spsolve(lhs, r[keep])
    absorb = np.asarray(absorb).reshape(keep.size, n)
    return init[:, keep] @ absorb


def endpoint_distribution_exact(p: np.ndarray, start: int) -> EndpointDistribution:
    probs = endpoint_distributions_exact(p, [start])[0]
    return EndpointDistribution(probs, int(start))


def unterminated_mass(p: np.ndarray, start: int, moves: int) -> float:
    """Probability that the walk has not terminated after ``moves`` moves."""
    p = np.asarray(p, dtype=float)
    start = _check_start(p, start)
    q, _ = _chain(p)
    mass = _first_step(p, start)
    qt = q.T.tocsr()
    for _ in range(moves - 1):
        mass = qt @ mass
    return float(mass.sum())


def expected_log_score(dist: EndpointDistribution, scorer: Callable[[int, int], float] | np.ndarray) -> float:
    """``sum_v dist(v) * log scorer(v, start)``.

    ``scorer`` is either a callable or an ``n x n`` table indexed ``[v, start]``.
    """
    probs = np.asarray(dist.probs, dtype=float)
    n = probs.size
    if callable(scorer):
        scores = np.array([scorer(v, dist.start) for v in range(n)], dtype=float)
    else:
        scores = np.asarray(scorer, dtype=float)[:, dist.start]
    support = probs > 0
    bad = support & ~((scores > 0) & (scores < 1))
    if bad.any():
        raise DomainError(f"scores must lie in (0, 1); got {scores[bad].tolist()}")
    return float(np.sum(probs[support] * np.log(scores[support])))


def tv_distance(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
