import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermoshadow.errors import InputError
from thermoshadow.lowerbound import (
    BinPartition,
    BooleanHamiltonian,
    InducedDistribution,
    bin_distribution,
    classical_gibbs,
    collision_probability,
    hybrid_bound,
    induced_bin_frequencies,
    query_sim_validate,
    random_unitary,
    read_boolean_hamiltonian,
    realize_subset,
    round_distribution,
    run_query_algorithm,
    splitting_expectation,
    temperature_threshold,
    tv_beta_vs_ground,
    tv_distance,
    uniform_zero_set_ensemble,
    write_boolean_hamiltonian,
)

from conftest import rng_for


class TestBooleanHamiltonian:
    def test_basic_properties(self):
        f = BooleanHamiltonian(n=3, zero_set=[5, 1])
        np.testing.assert_array_equal(f.zero_set, [1, 5])
        assert f.k == 2
        table = f.values()
        assert table[1] == 0 and table[5] == 0 and table.sum() == 6

    def test_validation(self):
        with pytest.raises(InputError):
            BooleanHamiltonian(n=25, zero_set=[0])
        with pytest.raises(InputError):
            BooleanHamiltonian(n=2, zero_set=[])
        with pytest.raises(InputError):
            BooleanHamiltonian(n=2, zero_set=[4])
        with pytest.raises(InputError):
            BooleanHamiltonian(n=2, zero_set=[1, 1])

    def test_file_roundtrip(self, tmp_path):
        f = BooleanHamiltonian(n=9, zero_set=[0, 17, 400])
        path = tmp_path / "f.txt"
        write_boolean_hamiltonian(f, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "9 3"
        assert lines[1] == "000"  # 9 bits -> 3 hex digits
        back = read_boolean_hamiltonian(path)
        assert back.n == 9
        np.testing.assert_array_equal(back.zero_set, f.zero_set)

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("3 2\n01\n")
        with pytest.raises(InputError, match="claims 2"):
            read_boolean_hamiltonian(path)


class TestClassicalGibbs:
    def test_infinite_temperature_is_uniform(self):
        f = BooleanHamiltonian(n=3, zero_set=[0])
        dist = classical_gibbs(f, 0.0)
        np.testing.assert_allclose(dist.probs, np.full(8, 1 / 8))

    def test_zero_temperature_is_uniform_on_zeros(self):
        f = BooleanHamiltonian(n=3, zero_set=[1, 6])
        dist = classical_gibbs(f, math.inf)
        expected = np.zeros(8)
        expected[[1, 6]] = 0.5
        np.testing.assert_allclose(dist.probs, expected)

    def test_closed_form_example(self):
        # n=2, k=1, beta=ln2: Z = 1 + 3/2 = 2.5
        f = BooleanHamiltonian(n=2, zero_set=[2])
        dist = classical_gibbs(f, math.log(2.0))
        assert dist.probs[2] == pytest.approx(0.4, abs=1e-14)
        assert dist.probs[0] == pytest.approx(0.2, abs=1e-14)

    def test_negative_beta_rejected(self):
        f = BooleanHamiltonian(n=2, zero_set=[0])
        with pytest.raises(InputError):
            classical_gibbs(f, -1.0)

    def test_binned_distribution_matches_dense_pushforward(self):
        rng = rng_for(71)
        f = BooleanHamiltonian(n=6, zero_set=rng.choice(64, size=9, replace=False))
        part = BinPartition(n=6, m=5)
        dense = classical_gibbs(f, 1.3)
        bins = part.bin_of(np.arange(64))
        expected = np.bincount(bins, weights=dense.probs, minlength=5)
        np.testing.assert_allclose(
            bin_distribution(f, 1.3, part).probs, expected, atol=1e-14
        )


class TestTvDistance:
    def test_identical(self):
        p = InducedDistribution(np.array([0.5, 0.5]))
        assert tv_distance(p, p) == 0.0

    def test_disjoint_supports(self):
        p = InducedDistribution(np.array([1.0, 0.0]))
        q = InducedDistribution(np.array([0.0, 1.0]))
        assert tv_distance(p, q) == 1.0

    def test_length_mismatch(self):
        p = InducedDistribution(np.array([1.0]))
        q = InducedDistribution(np.array([0.5, 0.5]))
        with pytest.raises(InputError):
            tv_distance(p, q)

    def test_closed_form_matches_dense_computation(self):
        n, k = 2, 1
        beta = 2 * math.log(2.0) + 3.0
        f = BooleanHamiltonian(n=n, zero_set=[3])
        dense = tv_distance(classical_gibbs(f, beta), classical_gibbs(f, math.inf))
        closed = tv_beta_vs_ground(n, k, beta)
        assert dense == pytest.approx(closed, rel=1e-12)
        assert closed <= math.exp(-3.0)

    def test_threshold_sweep_small(self):
        for n in range(1, 7):
            for k in sorted({1, 2 ** (n - 1), 2**n - 1}):
                for r in range(1, 11):
                    beta = temperature_threshold(n, r)
                    assert tv_beta_vs_ground(n, k, beta) <= math.exp(-r)


class TestRoundDistribution:
    def test_worked_example(self):
        p = InducedDistribution(np.array([0.26, 0.74]))
        q = round_distribution(p, 10)
        np.testing.assert_allclose(q.probs, [0.2, 0.8])

    def test_on_grid_fixed_point(self):
        p = InducedDistribution(np.array([0.3, 0.1, 0.6]))
        q = round_distribution(p, 10)
        np.testing.assert_array_equal(q.probs, p.probs)

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(min_value=0.01, max_value=10, allow_nan=False),
                 min_size=2, max_size=12),
        st.integers(min_value=1, max_value=500),
    )
    def test_invariants(self, weights, grid):
        p = InducedDistribution(np.array(weights) / sum(weights))
        q = round_distribution(p, grid)
        scaled = q.probs * grid
        assert np.max(np.abs(scaled - np.rint(scaled))) <= 1e-9  # on the grid
        assert np.max(np.abs(q.probs - p.probs)) <= 1.0 / grid + 1e-12
        assert abs(q.probs.sum() - 1.0) <= 1e-12
        again = round_distribution(q, grid)
        np.testing.assert_array_equal(again.probs, q.probs)  # idempotent


class TestRealizeSubset:
    def test_single_bin(self):
        q = InducedDistribution(np.array([1.0]))
        part = BinPartition(n=2, m=1)
        f = realize_subset(q, part, 4, rng_for(72))
        assert f.k == 4
        np.testing.assert_array_equal(f.zero_set, [0, 1, 2, 3])
        np.testing.assert_array_equal(induced_bin_frequencies(f, part).probs, [1.0])

    def test_one_zero_per_bin(self):
        q = InducedDistribution(np.array([0.5, 0.5]))
        part = BinPartition(n=2, m=2)
        f = realize_subset(q, part, 2, rng_for(73))
        counts = np.diff(np.searchsorted(f.zero_set, part.boundaries()))
        np.testing.assert_array_equal(counts, [1, 1])

    def test_reproduces_rounded_distribution_exactly(self):
        rng = rng_for(74)
        for _ in range(20):
            m = int(rng.integers(2, 7))
            part = BinPartition(n=8, m=m)
            grid = int(rng.integers(2, 32))
            p = InducedDistribution(rng.dirichlet(np.ones(m)))
            q = round_distribution(p, grid)
            f = realize_subset(q, part, grid, rng)
            induced = induced_bin_frequencies(f, part)
            np.testing.assert_array_equal(induced.probs, q.probs)

    def test_capacity_violation(self):
        q = InducedDistribution(np.array([1.0, 0.0]))
        part = BinPartition(n=2, m=2)
        with pytest.raises(InputError, match="bin 0"):
            realize_subset(q, part, 3, rng_for(75))

    def test_non_integer_mass_rejected(self):
        q = InducedDistribution(np.array([0.3, 0.7]))
        part = BinPartition(n=4, m=2)
        with pytest.raises(InputError, match="integer"):
            realize_subset(q, part, 5, rng_for(76))


class TestBinPartition:
    def test_sizes_differ_by_at_most_one(self):
        for n in (1, 2, 3, 4, 5):
            for m in range(1, 2**n + 1):
                part = BinPartition(n=n, m=m)
                sizes = part.sizes()
                assert sizes.sum() == 2**n
                assert sizes.max() - sizes.min() <= 1

    def test_bin_of_matches_boundaries(self):
        part = BinPartition(n=4, m=3)
        bounds = part.boundaries()
        for b in range(16):
            idx = part.bin_of(b)
            assert bounds[idx] <= b < bounds[idx + 1]


class TestSplittingExpectation:
    def test_all_ones(self):
        p = InducedDistribution(np.array([0.2, 0.3, 0.5]))
        assert splitting_expectation([1, 1, 1], p) == pytest.approx(1.0)

    def test_all_zeros(self):
        p = InducedDistribution(np.array([0.2, 0.8]))
        assert splitting_expectation([0, 0], p) == 0.0

    def test_single_indicator(self):
        p = InducedDistribution(np.array([0.2, 0.3, 0.5]))
        assert splitting_expectation([0, 1, 0], p) == pytest.approx(0.3)

    def test_length_mismatch(self):
        p = InducedDistribution(np.array([1.0]))
        with pytest.raises(InputError):
            splitting_expectation([1, 0], p)


class TestCollisionProbability:
    def test_single_draw_never_collides(self):
        stats = collision_probability(1, 8, 100, rng_for(77))
        assert stats.empirical == 0.0
        assert stats.bound == pytest.approx(1 / 16)

    def test_two_draws_two_slots(self):
        stats = collision_probability(2, 2, 20_000, rng_for(78))
        assert stats.empirical == pytest.approx(0.5, abs=4 * stats.standard_error)
        assert stats.bound == 1.0

    def test_birthday_regime_below_bound(self):
        stats = collision_probability(10, 10**6, 100_000, rng_for(79))
        # exact birthday probability ~ 4.5e-5, union bound 5e-5
        assert stats.bound == pytest.approx(5e-5)
        assert stats.empirical <= stats.bound + 3 * stats.standard_error


class TestHybridBound:
    def test_zero_queries(self):
        assert hybrid_bound([0.5, 0.5], 0) == 0.0

    def test_zero_flips(self):
        assert hybrid_bound([0.0, 0.0], 7) == 0.0

    def test_arithmetic_example(self):
        assert hybrid_bound([1 / 64, 1 / 128], 4) == pytest.approx(1.0)

    def test_domain(self):
        with pytest.raises(InputError):
            hybrid_bound([1.5], 1)


class TestQuerySimulator:
    def test_identical_function_gives_zero_distance(self):
        rng = rng_for(80)
        n, queries = 2, 2
        algorithm = [random_unitary(4, rng) for _ in range(queries + 1)]
        f0 = np.ones(4, dtype=np.uint8)
        report = query_sim_validate(
            n, queries, lambda s: f0.copy(), f0, algorithm, trials=8, stream=rng
        )
        assert report.trace_distance <= 1e-12
        assert report.bound == 0.0
        assert report.satisfied

    def test_grover_style_single_query_discriminator(self):
        # uniform preparation, one phase query, inversion about the mean
        n = 2
        dim = 4
        hadamard2 = np.ones((dim, dim)) / 2.0
        for i in range(dim):
            for j in range(dim):
                hadamard2[i, j] *= (-1) ** bin(i & j).count("1")
        uniform = np.full(dim, 0.5)
        diffusion = 2 * np.outer(uniform, uniform) - np.eye(dim)
        f0 = np.ones(dim, dtype=np.uint8)
        rng = rng_for(81)
        report = query_sim_validate(
            n,
            1,
            uniform_zero_set_ensemble(n, 1),
            f0,
            [hadamard2, diffusion],
            trials=64,
            stream=rng,
        )
        assert report.max_flip_probability == pytest.approx(0.25, abs=0.2)
        assert report.bound <= 2 * 1 * math.sqrt(0.5)
        assert report.trace_distance > 0.1  # the discriminator does see f
        assert report.satisfied

    def test_random_battery_never_violates(self):
        rng = rng_for(82)
        for _ in range(10):
            n = int(rng.integers(2, 5))
            queries = int(rng.integers(1, 4))
            workspace = int(rng.integers(0, 2))
            dim = 2 ** (n + workspace)
            algorithm = [random_unitary(dim, rng) for _ in range(queries + 1)]
            ensemble = uniform_zero_set_ensemble(n, int(rng.integers(1, 3)))
            f0 = np.ones(2**n, dtype=np.uint8)
            report = query_sim_validate(
                n, queries, ensemble, f0, algorithm, trials=16, stream=rng
            )
            assert report.satisfied

    def test_oracle_application_is_diagonal_phase(self):
        n = 1
        f = np.array([0, 1], dtype=np.uint8)
        state = run_query_algorithm([np.eye(2), np.eye(2)], f, n)
        # |0> picks up (+1); the prepared state is |0>, so nothing changes
        np.testing.assert_allclose(state, [1.0, 0.0])
        had = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
        state = run_query_algorithm([had, np.eye(2)], f, n)
        np.testing.assert_allclose(state, [1 / math.sqrt(2), -1 / math.sqrt(2)])

    def test_dimension_budget_enforced(self):
        rng = rng_for(83)
        with pytest.raises(InputError, match="budget"):
            query_sim_validate(
                1,
                1,
                lambda s: np.ones(2, dtype=np.uint8),
                np.ones(2, dtype=np.uint8),
                [random_unitary(8, rng), random_unitary(8, rng)],
                trials=2,
                stream=rng,
            )

    def test_non_unitary_rejected(self):
        rng = rng_for(84)
        with pytest.raises(InputError, match="non-unitary"):
            query_sim_validate(
                1,
                1,
                lambda s: np.ones(2, dtype=np.uint8),
                np.ones(2, dtype=np.uint8),
                [np.eye(2) * 2.0, np.eye(2)],
                trials=2,
                stream=rng,
            )
