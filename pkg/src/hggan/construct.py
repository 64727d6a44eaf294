"""Per-subject hypergraph construction and the consensus (OHGH) search."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import CapacityError, ConfigError, DegenerateFeatureError, DimensionError, InputError
from .hgcore import Hypergraph, _jaccard_masks, concat, hypergraph_similarity

log = logging.getLogger(__name__)

__all__ = [
    "DhcConfig",
    "OhghConfig",
    "ConsensusResult",
    "dhc_construct",
    "medoid_init",
    "ohgh_consensus",
    "ohgh_exhaustive",
    "subject_hypergraphs",
    "consensus_objective",
]

_IMPROVE_TOL = 1e-12


@dataclass(frozen=True)
class DhcConfig:
    k: int = 4
    distance: str = "correlation"


@dataclass(frozen=True)
class OhghConfig:
    max_iterations: int = 50
    seed: int = 0
    min_edge_size: int = 2

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.min_edge_size < 1:
            raise ConfigError("min_edge_size must be >= 1")


@dataclass
class ConsensusResult:
    hypergraph: Hypergraph
    score: float
    iterations: int
    seed: int
    initial_score: float
    trace: list[float] = field(default_factory=list)  # objective after each accepted move

    def __iter__(self):
        # allows ``h, score = ohgh_consensus(...)``
        yield self.hypergraph
        yield self.score


def _correlation_distance(features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    centered = x - x.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    flat = np.flatnonzero(norms <= 1e-12 * max(1.0, float(np.abs(x).max())))
    if flat.size:
        raise DegenerateFeatureError(f"rows with zero variance: {flat.tolist()}")
    z = centered / norms[:, None]
    corr = np.clip(z @ z.T, -1.0, 1.0)
    return 1.0 - corr


def dhc_construct(features, cfg: DhcConfig = DhcConfig()) -> Hypergraph:
    """k-nearest-neighbour hypergraph: one hyperedge per node, the node plus its k neighbours.

    Neighbours are ranked by correlation distance ``1 - pearson`` between
    feature rows; equal distances go to the lower node index.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise DimensionError(f"features must be n x d with n, d >= 2, got {x.shape}")
    n = x.shape[0]
    if cfg.distance != "correlation":
        raise ConfigError(f"unsupported distance {cfg.distance!r}")
    if not 1 <= cfg.k <= n - 1:
        raise ConfigError(f"k must lie in 1..{n - 1}, got {cfg.k}")
    dist = _correlation_distance(x)
    edges = []
    for i in range(n):
        others = np.delete(np.arange(n), i)
        order = others[np.argsort(dist[i, others], kind="stable")]
        edges.append([i + 1] + [int(j) + 1 for j in order[: cfg.k]])
    return Hypergraph(n, edges)


def _check_cohort(cohort) -> tuple[int, int]:
    cohort = list(cohort)
    if not cohort:
        raise InputError("cohort is empty")
    n, m = cohort[0].n, cohort[0].m
    for idx, h in enumerate(cohort):
        if (h.n, h.m) != (n, m):
            raise DimensionError(f"cohort member {idx} has shape (n={h.n}, m={h.m}), expected (n={n}, m={m})")
    return n, m


def consensus_objective(h: Hypergraph, cohort) -> float:
    return float(sum(hypergraph_similarity(h, hk) for hk in cohort))


def medoid_init(cohort) -> Hypergraph:
    cohort = list(cohort)
    _check_cohort(cohort)
    k = len(cohort)
    sims = np.eye(k)
    for a, b in itertools.combinations(range(k), 2):
        sims[a, b] = sims[b, a] = hypergraph_similarity(cohort[a], cohort[b])
    totals = sims.sum(axis=1)
    return cohort[int(np.argmax(totals))]


class _Scorer:
    """Caches per-subject Jaccard tables so a toggle re-scores one row per subject."""

    def __init__(self, masks: np.ndarray, cohort_masks: np.ndarray):
        self.masks = masks.copy()
        self.subjects = cohort_masks  # (K, m, n)
        K, m, n = cohort_masks.shape
        self.m = m
        self.flat = cohort_masks.reshape(K * m, n).astype(np.int64)
        self.sizes = self.flat.sum(axis=1)
        self.tables = np.stack([_jaccard_masks(self.masks, s) for s in cohort_masks])
        self.values = np.array([self._solve(t) for t in self.tables])

    @staticmethod
    def _solve(table: np.ndarray) -> float:
        r, c = linear_sum_assignment(table, maximize=True)
        return table[r, c].sum() / len(r)

    def row_for(self, mask: np.ndarray) -> np.ndarray:
        inter = self.flat @ mask.astype(np.int64)
        union = self.sizes + int(mask.sum()) - inter
        return (inter / union).reshape(len(self.subjects), self.m)

    def try_row(self, j: int, mask: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        rows = self.row_for(mask)
        values = np.empty(len(self.subjects))
        for k, table in enumerate(self.tables):
            saved = table[j].copy()
            table[j] = rows[k]
            values[k] = self._solve(table)
            table[j] = saved
        return float(values.sum()), rows, values

    def accept(self, j: int, mask: np.ndarray, rows: np.ndarray, values: np.ndarray) -> None:
        self.masks[j] = mask
        self.tables[:, j, :] = rows
        self.values = values

    @property
    def total(self) -> float:
        return float(self.values.sum())


def ohgh_consensus(cohort, cfg: OhghConfig = OhghConfig()) -> ConsensusResult:
    """Local search for the hypergraph maximizing the summed similarity to a cohort.

    Starts from the cohort medoid, then sweeps single (edge, node) membership
    toggles in a seeded shuffled order, accepting any strict improvement.
    Stops at a sweep without accepted moves or after ``max_iterations``
    sweeps.  Edge count stays fixed.
    """
    cohort = list(cohort)
    n, m = _check_cohort(cohort)
    start = medoid_init(cohort)
    scorer = _Scorer(start.masks(), np.stack([h.masks() for h in cohort]))
    initial = scorer.total
    current = initial
    trace = []
    rng = np.random.default_rng(cfg.seed)
    moves = np.array([(j, v) for j in range(m) for v in range(n)])
    sweeps = 0
    for sweeps in range(1, cfg.max_iterations + 1):
        improved = False
        for j, v in moves[rng.permutation(len(moves))]:
            mask = scorer.masks[j].copy()
            if mask[v]:
                if mask.sum() - 1 < max(cfg.min_edge_size, 1):
                    continue
                mask[v] = False
            else:
                mask[v] = True
            total, rows, values = scorer.try_row(j, mask)
            if total > current + _IMPROVE_TOL:
                scorer.accept(j, mask, rows, values)
                assert total >= current
                current = total
                trace.append(current)
                improved = True
        log.debug("sweep %d objective %.6f", sweeps, current)
        if not improved:
            break
    result = Hypergraph.from_masks(scorer.masks)
    return ConsensusResult(result, current, sweeps, cfg.seed, initial, trace)


def _nonempty_subsets(n: int) -> list[tuple[int, ...]]:
    subsets = [c for r in range(1, n + 1) for c in itertools.combinations(range(1, n + 1), r)]
    return sorted(subsets)


def ohgh_exhaustive(cohort) -> ConsensusResult:
    """Global optimum by enumerating every m-tuple of non-empty node subsets (n <= 4, m <= 2)."""
    cohort = list(cohort)
    n, m = _check_cohort(cohort)
    if n > 4 or m > 2:
        raise CapacityError(f"exhaustive search supports n <= 4 and m <= 2, got n={n}, m={m}")
    best, best_h = -np.inf, None
    for edges in itertools.product(_nonempty_subsets(n), repeat=m):
        h = Hypergraph(n, edges)
        score = consensus_objective(h, cohort)
        if score > best + _IMPROVE_TOL:
            best, best_h = score, h
    return ConsensusResult(best_h, best, 1, 0, best)


def subject_hypergraphs(consensus: Hypergraph, cohort) -> list[Hypergraph]:
    """``H_k = consensus || H_k'`` for each subject."""
    cohort = list(cohort)
    n, m = _check_cohort(cohort)
    if (consensus.n, consensus.m) != (n, m):
        raise DimensionError(
            f"consensus shape (n={consensus.n}, m={consensus.m}) does not match cohort (n={n}, m={m})"
        )
    return [concat(consensus, h) for h in cohort]
