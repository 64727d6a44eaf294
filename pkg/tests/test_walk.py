import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hggan.errors import CapacityError, DomainError, InputError, NoTerminationError, PathError
from hggan.walk import (
    EndpointDistribution,
    WalkPath,
    empirical_distribution,
    endpoint_distribution_exact,
    endpoint_distributions_exact,
    expected_log_score,
    path_probability,
    sample_walk,
    sample_walks,
    transition_matrix,
    tv_distance,
    unterminated_mass,
)

K3 = transition_matrix(np.ones((3, 3)))


def random_symmetric(seed, n):
    x = np.random.default_rng(seed).random((n, n)) + 0.05
    return x + x.T


def enumerate_paths(p, start, max_moves):
    """All terminated paths with at most ``max_moves`` moves, with their probabilities."""
    out = []

    def extend(nodes, prob):
        moves = len(nodes) - 1
        if moves >= max_moves:
            return
        cur = nodes[-1]
        for w in np.flatnonzero(p[cur]):
            q = prob * p[cur, w]
            if len(nodes) >= 2 and w == nodes[-2]:
                out.append((tuple(nodes) + (int(w),), q))
            else:
                extend(nodes + [int(w)], q)

    extend([start], 1.0)
    return out


class TestTransition:
    def test_uniform(self):
        np.testing.assert_allclose(transition_matrix(np.ones((5, 5))), (np.ones((5, 5)) - np.eye(5)) / 4)

    def test_absolute_value(self):
        p = transition_matrix(np.array([[0, -0.5, 0.5], [1, 0, 1], [1, 1, 0]]))
        np.testing.assert_allclose(p[0], [0, 0.5, 0.5])

    def test_zero_matrix(self):
        np.testing.assert_allclose(transition_matrix(np.zeros((4, 4))), (np.ones((4, 4)) - np.eye(4)) / 3)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(3, 8), st.integers(0, 10_000))
    def test_stochastic(self, n, seed):
        rng = np.random.default_rng(seed)
        c = rng.standard_normal((n, n)) * (rng.random((n, n)) < 0.5)
        p = transition_matrix(c)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(np.diag(p) == 0) and np.all(p >= 0)

    def test_errors(self):
        with pytest.raises(CapacityError):
            transition_matrix(np.ones((2, 2)))
        with pytest.raises(InputError):
            transition_matrix(np.ones((3, 4)))


class TestPathProbability:
    def test_k3(self):
        assert path_probability(K3, WalkPath((0, 1, 0))) == pytest.approx(1 / 4)
        assert path_probability(K3, WalkPath((0, 1, 2, 1))) == pytest.approx(1 / 8)

    def test_zero_transition(self):
        p = transition_matrix(np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]))
        assert path_probability(p, WalkPath((0, 2, 0))) == 0

    @pytest.mark.parametrize("nodes", [(0, 1, 2), (0, 1), (0, 0, 1, 0), (0, 1, 0, 1)])
    def test_invalid(self, nodes):
        with pytest.raises(PathError):
            path_probability(K3, WalkPath(nodes))

    def test_truncated(self):
        with pytest.raises(PathError):
            path_probability(K3, WalkPath((0, 1, 2), truncated=True))
        with pytest.raises(PathError):
            WalkPath((0, 1, 2), truncated=True).endpoint


class TestExact:
    def test_k3_geometric_series(self):
        # from (v0 -> v1) the walk circles v1, v2, v0, ... ; each step backtracks with
        # probability 1/2, so the endpoints along the cycle carry 1/2, 1/4, 1/8, ... repeating
        # with period 3: sum_k (1/2)^(3k + j + 1) = (1/2)^(j + 1) * 8/7
        cycle = [(0.5) ** (j + 1) * 8 / 7 for j in range(3)]
        via_1 = {1: cycle[0], 2: cycle[1], 0: cycle[2]}
        via_2 = {2: cycle[0], 1: cycle[1], 0: cycle[2]}
        series = np.array([0.5 * via_1[v] + 0.5 * via_2[v] for v in range(3)])
        np.testing.assert_allclose(series, [1 / 7, 3 / 7, 3 / 7], atol=1e-15)
        dist = endpoint_distribution_exact(K3, 0)
        np.testing.assert_allclose(dist.probs, series, atol=1e-9)
        assert dist.start == 0

    def test_k3_matches_truncated_enumeration(self):
        total = np.zeros(3)
        for nodes, prob in enumerate_paths(K3, 0, 40):
            total[nodes[-2]] += prob
        np.testing.assert_allclose(total, [1 / 7, 3 / 7, 3 / 7], atol=1e-9)

    def test_star_from_centre(self):
        c = np.zeros((4, 4))
        c[0, 1:] = c[1:, 0] = 1.0
        p = transition_matrix(c)
        np.testing.assert_allclose(endpoint_distribution_exact(p, 0).probs, [0, 1 / 3, 1 / 3, 1 / 3], atol=1e-12)
        # from a leaf: back at the centre, one third of the time it returns to the start leaf
        np.testing.assert_allclose(endpoint_distribution_exact(p, 1).probs, [1 / 3, 0, 1 / 3, 1 / 3], atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(3, 8), st.integers(0, 10_000))
    def test_sums_to_one(self, n, seed):
        dists = endpoint_distributions_exact(transition_matrix(random_symmetric(seed, n)))
        np.testing.assert_allclose(dists.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(dists >= -1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_scale_invariance(self, seed):
        c = random_symmetric(seed, 6)
        a = endpoint_distributions_exact(transition_matrix(c))
        b = endpoint_distributions_exact(transition_matrix(2 * c))
        np.testing.assert_allclose(a, b, atol=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_depth_three_enumeration_plus_residual(self, seed):
        p = transition_matrix(random_symmetric(seed, 5))
        for start in range(5):
            mass = sum(prob for _, prob in enumerate_paths(p, start, 3))
            assert mass + unterminated_mass(p, start, 3) == pytest.approx(1.0, abs=1e-9)

    def test_no_termination(self):
        cycle = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=float)
        with pytest.raises(NoTerminationError) as info:
            endpoint_distribution_exact(transition_matrix(cycle), 0)
        assert info.value.states

    def test_capacity(self):
        with pytest.raises(CapacityError):
            endpoint_distributions_exact(np.ones((65, 65)) / 64)


class TestSampling:
    def test_forced_first_move(self):
        p = transition_matrix(np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]))
        batch = sample_walks(p, np.zeros(500, dtype=int), seed=1)
        assert np.all(batch.nodes[:, 1] == 1)
        assert sample_walk(p, 0, seed=4).nodes[1] == 1

    def test_single_walk_valid(self):
        for seed in range(20):
            path = sample_walk(K3, 0, seed=seed)
            assert not path.truncated
            assert path.nodes[-1] == path.nodes[-3]
            assert path_probability(K3, path) > 0

    def test_cap_two(self):
        batch = sample_walks(K3, np.zeros(1000, dtype=int), seed=2, cap=2, retries=0)
        assert np.all(batch.moves <= 2)
        done = ~batch.truncated
        assert np.all(batch.moves[done] == 2)  # T = 1
        assert batch.truncated.any()
        with pytest.raises(InputError):
            sample_walks(K3, [0], cap=1)

    def test_batch_paths_are_valid(self):
        p = transition_matrix(random_symmetric(3, 6))
        batch = sample_walks(p, np.arange(6).repeat(20), seed=5)
        for i in range(len(batch.moves)):
            path = batch.path(i)
            assert path.endpoint == batch.endpoints[i]
            assert path_probability(p, path) > 0

    @pytest.mark.parametrize("n", [3, 4, 6])
    def test_monte_carlo_matches_exact(self, n):
        p = transition_matrix(random_symmetric(n, n))
        exact = endpoint_distributions_exact(p, [0])[0]
        batch = sample_walks(p, np.zeros(100_000, dtype=int), seed=n)
        assert tv_distance(empirical_distribution(batch, n), exact) < 0.02

    def test_reproducible_and_streams_differ(self):
        p = transition_matrix(random_symmetric(0, 5))
        a = sample_walks(p, np.zeros(100, dtype=int), seed=3, stream=1)
        b = sample_walks(p, np.zeros(100, dtype=int), seed=3, stream=1)
        c = sample_walks(p, np.zeros(100, dtype=int), seed=3, stream=2)
        np.testing.assert_array_equal(a.nodes, b.nodes)
        assert not np.array_equal(a.nodes, c.nodes)


class TestExpectedLogScore:
    def test_constant_half(self):
        dist = endpoint_distribution_exact(K3, 0)
        assert expected_log_score(dist, lambda v, s: 0.5) == pytest.approx(math.log(0.5))

    def test_point_mass(self):
        dist = EndpointDistribution(np.array([0, 1.0, 0]), 0)
        assert expected_log_score(dist, lambda v, s: [0.2, 0.3, 0.4][v]) == pytest.approx(math.log(0.3))

    def test_k3_weighted(self):
        dist = endpoint_distribution_exact(K3, 0)
        table = np.full((3, 3), 0.5)
        table[0, 0] = 0.9
        expected = math.log(0.9) / 7 + 6 / 7 * math.log(0.5)
        assert expected_log_score(dist, table) == pytest.approx(expected, abs=1e-12)

    def test_domain(self):
        dist = endpoint_distribution_exact(K3, 0)
        with pytest.raises(DomainError):
            expected_log_score(dist, lambda v, s: 1.0)
