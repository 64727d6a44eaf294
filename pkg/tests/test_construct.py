import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hggan.construct import (
    DhcConfig,
    OhghConfig,
    consensus_objective,
    dhc_construct,
    medoid_init,
    ohgh_consensus,
    ohgh_exhaustive,
    subject_hypergraphs,
)
from hggan.errors import CapacityError, ConfigError, DegenerateFeatureError, DimensionError, InputError
from hggan.hgcore import Hypergraph, hypergraph_similarity, incidence_matrix, jaccard


def random_cohort(rng, n, m, size, min_edge=1):
    pool = [c for r in range(min_edge, n + 1) for c in itertools.combinations(range(1, n + 1), r)]
    return [Hypergraph(n, [pool[i] for i in rng.integers(0, len(pool), m)]) for _ in range(size)]


class TestDhc:
    def test_three_node_example(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal(200)
        a -= a.mean()
        b = rng.standard_normal(200)
        b -= b.mean()
        b -= (a @ b) / (a @ a) * a  # corr(a, b) = 0
        h = dhc_construct(np.stack([a, a, b]), DhcConfig(k=1))
        assert h.edges[0] == (1, 2)
        assert h.edges[1] == (1, 2)
        assert 3 in h.edges[2] and len(h.edges[2]) == 2
        # nodes 1 and 2 are equidistant from 3, so the lower index wins
        assert h.edges[2] == (1, 3)

    def test_full_neighbourhood(self):
        x = np.random.default_rng(1).standard_normal((6, 20))
        h = dhc_construct(x, DhcConfig(k=5))
        assert all(e == tuple(range(1, 7)) for e in h.edges)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(3, 9), st.integers(0, 10_000))
    def test_one_edge_per_node_containing_it(self, n, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, 15))
        k = int(rng.integers(1, n))
        h = dhc_construct(x, DhcConfig(k=k))
        assert h.m == n
        for j, e in enumerate(h.edges):
            assert j + 1 in e and len(e) == k + 1

    @settings(max_examples=40, deadline=None)
    @given(st.integers(3, 9), st.integers(0, 10_000))
    def test_permutation_equivariant(self, n, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, 25))
        perm = rng.permutation(n)
        h = dhc_construct(x, DhcConfig(k=2))
        hp = dhc_construct(x[perm], DhcConfig(k=2))
        # node i of the permuted input is node perm[i] of the original
        inv = np.argsort(perm)
        for i in range(n):
            expected = {int(inv[v - 1]) + 1 for v in h.edges[perm[i]]}
            assert set(hp.edges[i]) == expected

    def test_errors(self):
        with pytest.raises(DegenerateFeatureError):
            dhc_construct(np.vstack([np.ones(10), np.arange(10.0), np.arange(10.0) ** 2]), DhcConfig(k=1))
        with pytest.raises(ConfigError):
            dhc_construct(np.random.default_rng(0).standard_normal((4, 10)), DhcConfig(k=4))
        with pytest.raises(DimensionError):
            dhc_construct(np.ones((1, 10)))


class TestMedoid:
    def test_single(self):
        h = Hypergraph(4, [[1, 2], [3]])
        assert medoid_init([h]) == h

    def test_identical_takes_first(self):
        h = Hypergraph(4, [[1, 2], [3]])
        same = Hypergraph(4, [[1, 2], [3]])
        assert medoid_init([h, same, h]) is h

    def test_matches_pairwise_row_sums(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            cohort = random_cohort(rng, 5, 3, 3)
            totals = [sum(hypergraph_similarity(a, b) for b in cohort) for a in cohort]
            assert medoid_init(cohort) is cohort[int(np.argmax(totals))]

    def test_mismatch(self):
        with pytest.raises(DimensionError):
            medoid_init([Hypergraph(3, [[1]]), Hypergraph(3, [[1], [2]])])


class TestConsensus:
    def test_identical_cohort(self):
        h = Hypergraph(5, [[1, 2], [2, 3, 4], [4, 5]])
        res = ohgh_consensus([h] * 4)
        assert res.hypergraph == h
        assert res.score == pytest.approx(4.0)

    def test_unpacks(self):
        h = Hypergraph(4, [[1, 2]])
        got, score = ohgh_consensus([h])
        assert got == h and score == pytest.approx(1.0)

    def test_two_members_one_node_apart(self):
        h1 = Hypergraph(5, [[1, 2, 3], [4, 5]])
        h2 = Hypergraph(5, [[1, 2], [4, 5]])
        res = ohgh_consensus([h1, h2])
        assert res.score >= max(consensus_objective(h1, [h1, h2]), consensus_objective(h2, [h1, h2])) - 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_monotone_and_beats_medoid(self, seed):
        rng = np.random.default_rng(seed)
        cohort = random_cohort(rng, 6, 3, 4, min_edge=2)
        res = ohgh_consensus(cohort, OhghConfig(seed=seed))
        medoid_score = consensus_objective(medoid_init(cohort), cohort)
        assert res.initial_score == pytest.approx(medoid_score, abs=1e-12)
        assert res.score >= medoid_score - 1e-12
        assert all(b > a for a, b in zip([res.initial_score] + res.trace, res.trace))
        assert res.score == pytest.approx(consensus_objective(res.hypergraph, cohort), abs=1e-9)
        assert min(len(e) for e in res.hypergraph.edges) >= 2

    def test_reproducible(self):
        cohort = random_cohort(np.random.default_rng(7), 7, 4, 6, min_edge=2)
        a = ohgh_consensus(cohort, OhghConfig(seed=3))
        b = ohgh_consensus(cohort, OhghConfig(seed=3))
        assert a.hypergraph == b.hypergraph and a.trace == b.trace

    def test_empty(self):
        with pytest.raises(InputError):
            ohgh_consensus([])

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            OhghConfig(max_iterations=0)


def enumerate_optimum(cohort):
    n, m = cohort[0].n, cohort[0].m
    subsets = [c for r in range(1, n + 1) for c in itertools.combinations(range(1, n + 1), r)]
    best = -1.0
    for edges in itertools.product(subsets, repeat=m):
        h = Hypergraph(n, edges)
        best = max(best, sum(hypergraph_similarity(h, g) for g in cohort))
    return best


class TestExhaustive:
    def test_single(self):
        h = Hypergraph(3, [[1, 3], [2]])
        res = ohgh_exhaustive([h])
        assert res.score == pytest.approx(1.0)

    def test_disjoint_pair(self):
        cohort = [Hypergraph(4, [[1, 2]]), Hypergraph(4, [[3, 4]])]
        # one side scores 1 + 0; a size-2 bridge {1, 3} only 1/3 + 1/3
        assert jaccard({1, 3}, {1, 2}) + jaccard({1, 3}, {3, 4}) == pytest.approx(2 / 3)
        res = ohgh_exhaustive(cohort)
        assert res.score == pytest.approx(enumerate_optimum(cohort))
        assert res.score == pytest.approx(1.0)
        assert res.hypergraph == Hypergraph(4, [[1, 2]])  # first in lexicographic order

    def test_matches_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            cohort = random_cohort(rng, 3, 2, 3)
            assert ohgh_exhaustive(cohort).score == pytest.approx(enumerate_optimum(cohort), abs=1e-12)

    def test_duplicate_never_decreases(self):
        rng = np.random.default_rng(12)
        cohort = random_cohort(rng, 4, 2, 2)
        assert ohgh_exhaustive(cohort + [cohort[0]]).score >= ohgh_exhaustive(cohort).score

    def test_capacity(self):
        with pytest.raises(CapacityError):
            ohgh_exhaustive([Hypergraph(5, [[1]])])
        with pytest.raises(CapacityError):
            ohgh_exhaustive([Hypergraph(4, [[1], [2], [3]])])


class TestSubjectHypergraphs:
    def test_layout(self):
        rng = np.random.default_rng(2)
        cohort = random_cohort(rng, 5, 3, 4)
        consensus = ohgh_consensus(cohort).hypergraph
        out = subject_hypergraphs(consensus, cohort)
        first = incidence_matrix(consensus)
        for h, hk in zip(out, cohort):
            assert h.m == 2 * hk.m
            a = incidence_matrix(h)
            np.testing.assert_array_equal(a[:, :3], first)
            np.testing.assert_array_equal(a[:, 3:], incidence_matrix(hk))

    def test_mismatch(self):
        with pytest.raises(DimensionError):
            subject_hypergraphs(Hypergraph(4, [[1]]), [Hypergraph(4, [[1], [2]])])
