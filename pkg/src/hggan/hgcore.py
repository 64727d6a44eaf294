"""Hypergraphs, incidence matrices and assignment-based hypergraph similarity.

Node labels are 1-based (``1..n``) everywhere a hypergraph is built or
written to disk; matrix rows/columns are 0-based as usual in numpy.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionError, InputError, InvalidHyperedgeError

__all__ = [
    "Hypergraph",
    "EdgeMapping",
    "incidence_matrix",
    "jaccard",
    "similarity_table",
    "optimal_assignment",
    "assignment_value",
    "hypergraph_similarity",
    "concat",
    "read_hypergraph",
    "write_hypergraph",
    "format_hypergraph",
    "parse_hypergraph",
]

_TIE_TOL = 1e-9


@dataclass(frozen=True)
class Hypergraph:
    """Node count plus an ordered list of hyperedges (sorted label tuples).

    Duplicate hyperedges are allowed; duplicate labels inside one edge are not.
    """

    n: int
    edges: tuple[tuple[int, ...], ...]

    def __init__(self, n: int, edges: Iterable[Iterable[int]]):
        n = int(n)
        if n < 1:
            raise InvalidHyperedgeError(f"node count must be >= 1, got {n}")
        normalized = []
        for j, edge in enumerate(edges):
            labels = [int(v) for v in edge]
            if not labels:
                raise InvalidHyperedgeError(f"hyperedge {j} is empty")
            if len(set(labels)) != len(labels):
                raise InvalidHyperedgeError(f"hyperedge {j} repeats a node: {labels}")
            bad = [v for v in labels if v < 1 or v > n]
            if bad:
                raise InvalidHyperedgeError(f"hyperedge {j} has labels outside 1..{n}: {bad}")
            normalized.append(tuple(sorted(labels)))
        if not normalized:
            raise InvalidHyperedgeError("a hypergraph needs at least one hyperedge")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", tuple(normalized))

    @property
    def m(self) -> int:
        return len(self.edges)

    @classmethod
    def from_incidence(cls, a) -> "Hypergraph":
        a = np.asarray(a)
        if a.ndim != 2:
            raise DimensionError(f"incidence matrix must be 2-D, got shape {a.shape}")
        if not np.isin(a, (0, 1)).all():
            raise InvalidHyperedgeError("incidence entries must be 0 or 1")
        edges = [tuple(int(i) + 1 for i in np.flatnonzero(a[:, j])) for j in range(a.shape[1])]
        return cls(a.shape[0], edges)

    @classmethod
    def from_masks(cls, masks: np.ndarray) -> "Hypergraph":
        """Build from an (m, n) boolean membership array (row j = edge j)."""
        masks = np.asarray(masks, dtype=bool)
        return cls(masks.shape[1], [np.flatnonzero(row) + 1 for row in masks])

    def masks(self) -> np.ndarray:
        """(m, n) boolean membership array, the transpose of the incidence matrix."""
        out = np.zeros((self.m, self.n), dtype=bool)
        for j, edge in enumerate(self.edges):
            out[j, np.asarray(edge) - 1] = True
        return out

    def relabel(self, perm: Sequence[int]) -> "Hypergraph":
        """Apply a node relabeling; ``perm[i]`` is the new 0-based index of old node ``i``."""
        perm = list(perm)
        return Hypergraph(self.n, [[perm[v - 1] + 1 for v in e] for e in self.edges])


@dataclass(frozen=True)
class EdgeMapping:
    assignment: tuple[int, ...]  # 0-based: edge j of H -> edge assignment[j] of H'
    value: float


def incidence_matrix(h: Hypergraph) -> np.ndarray:
    """Binary n x m matrix with ``A[i, j] = 1`` iff node ``i+1`` is in edge ``j``."""
    return h.masks().T.astype(np.int8)


def jaccard(e: Iterable[int], e_prime: Iterable[int]) -> float:
    e, e_prime = set(e), set(e_prime)
    if not e or not e_prime:
        raise InvalidHyperedgeError("Jaccard similarity of an empty hyperedge is undefined")
    return len(e & e_prime) / len(e | e_prime)


def _jaccard_masks(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Pairwise Jaccard between two stacks of boolean masks, shape (len(rows), len(cols))."""
    rows = rows.astype(np.int64)
    cols = cols.astype(np.int64)
    inter = rows @ cols.T
    union = rows.sum(axis=1)[:, None] + cols.sum(axis=1)[None, :] - inter
    return inter / union


def _check_same_shape(h: Hypergraph, h_prime: Hypergraph) -> None:
    if h.n != h_prime.n:
        raise DimensionError(f"node counts differ: {h.n} vs {h_prime.n}")
    if h.m != h_prime.m:
        raise DimensionError(f"edge counts differ: {h.m} vs {h_prime.m}")


def similarity_table(h: Hypergraph, h_prime: Hypergraph) -> np.ndarray:
    _check_same_shape(h, h_prime)
    return _jaccard_masks(h.masks(), h_prime.masks())


def _check_square(score) -> np.ndarray:
    score = np.asarray(score, dtype=float)
    if score.ndim != 2 or score.shape[0] != score.shape[1] or score.shape[0] == 0:
        raise DimensionError(f"assignment needs a non-empty square matrix, got shape {score.shape}")
    if not np.isfinite(score).all():
        raise InputError("assignment scores must be finite")
    return score


def _hungarian_min(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost perfect matching on a square cost matrix.

    Shortest augmenting path with row/column potentials, O(m^3).  Returns
    ``col_of_row``.
    """
    m = cost.shape[0]
    u = np.zeros(m + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)  # p[col] = row matched to col, 1-based, 0 = free
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, m + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            used_idx = np.flatnonzero(used)
            u[p[used_idx]] += delta
            v[used_idx] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(m, dtype=np.int64)
    col_of_row[p[1:] - 1] = np.arange(m)
    return col_of_row


def assignment_value(score) -> float:
    """Maximum over permutations f of mean_j score[j, f(j)] (value only, no tie-breaking).

    This is the hot path of the consensus search, so it goes through scipy's
    solver; :func:`optimal_assignment` uses the local Hungarian routine.
    """
    score = _check_square(score)
    rows, cols = linear_sum_assignment(score, maximize=True)
    # exactly rounded sum, so Sim(H, H') == Sim(H', H) bit for bit
    return math.fsum(score[rows, cols]) / len(cols)


def optimal_assignment(score) -> EdgeMapping:
    """Maximum-mean assignment; ties go to the lexicographically smallest permutation.

    The optimum is found with the Hungarian method.  The tie-break then fixes
    rows in order, giving each the smallest column that still admits an
    optimal completion of the remaining rows.
    """
    score = _check_square(score)
    m = score.shape[0]
    cols = _hungarian_min(-score)
    total = score[np.arange(m), cols].sum()
    tol = _TIE_TOL * max(1.0, float(np.abs(score).max()) * m)

    rows_left = list(range(m))
    cols_left = list(range(m))
    remaining = total
    chosen = []
    for r in range(m):
        rows_left.remove(r)
        incumbent = int(cols[r])
        pick = incumbent
        sub_rows_max = score[rows_left][:, cols_left].max(axis=1).sum() if rows_left else 0.0
        for c in cols_left:
            if c >= incumbent:
                break
            if score[r, c] + sub_rows_max < remaining - tol:
                continue
            rest = [k for k in cols_left if k != c]
            sub = score[np.ix_(rows_left, rest)]
            rest_val = sub[np.arange(len(rest)), _hungarian_min(-sub)].sum() if rest else 0.0
            if score[r, c] + rest_val >= remaining - tol:
                pick = c
                break
        if pick != incumbent and rows_left:
            # re-solve the remainder so later incumbents stay consistent with this choice
            rest = [k for k in cols_left if k != pick]
            sub = score[np.ix_(rows_left, rest)]
            sub_cols = _hungarian_min(-sub)
            for rr, cc in zip(rows_left, sub_cols):
                cols[rr] = rest[cc]
        cols[r] = pick
        chosen.append(pick)
        cols_left.remove(pick)
        remaining -= score[r, pick]
    value = float(score[np.arange(m), chosen].sum() / m)
    return EdgeMapping(tuple(chosen), value)


def hypergraph_similarity(h: Hypergraph, h_prime: Hypergraph) -> float:
    return assignment_value(similarity_table(h, h_prime))


def brute_force_assignment(score) -> EdgeMapping:
    """Exhaustive search over permutations; first (lexicographic) optimum wins."""
    score = _check_square(score)
    m = score.shape[0]
    best, best_perm = -np.inf, None
    tol = _TIE_TOL * max(1.0, float(np.abs(score).max()) * m)
    for perm in itertools.permutations(range(m)):
        total = sum(score[j, perm[j]] for j in range(m))
        if total > best + tol:
            best, best_perm = total, perm
    return EdgeMapping(tuple(best_perm), float(best / m))


def concat(h: Hypergraph, h_prime: Hypergraph) -> Hypergraph:
    if h.n != h_prime.n:
        raise DimensionError(f"node counts differ: {h.n} vs {h_prime.n}")
    return Hypergraph(h.n, h.edges + h_prime.edges)


def format_hypergraph(h: Hypergraph) -> str:
    lines = [f"{h.n} {h.m}"]
    lines.extend(" ".join(str(v) for v in e) for e in h.edges)
    return "\n".join(lines) + "\n"


def parse_hypergraph(text: str) -> Hypergraph:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InputError("empty hypergraph file")
    try:
        n, m = (int(t) for t in lines[0].split())
        edges = [[int(t) for t in ln.split()] for ln in lines[1:]]
    except ValueError as exc:
        raise InputError(f"malformed hypergraph text: {exc}") from None
    if len(edges) != m:
        raise InputError(f"header declares {m} hyperedges but {len(edges)} lines follow")
    return Hypergraph(n, edges)


def write_hypergraph(h: Hypergraph, path) -> Path:
    path = Path(path)
    path.write_text(format_hypergraph(h))
    return path


def read_hypergraph(path) -> Hypergraph:
    return parse_hypergraph(Path(path).read_text())
