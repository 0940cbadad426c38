import math

import pytest

from config import Budget
from errors import BudgetExceededError, DomainError
from models import LatticePoint
from monte_carlo import alpha_estimate
from spanning import (
    WIRED,
    WeightedGraph,
    build_box,
    edge_inclusion_probabilities,
    forest_stats,
    orthant_starts,
    tree_count_estimate,
    tree_weight_total,
    ust_exact,
    ust_samples,
    wilson_ust,
    wsf_z1_exact,
    wsf_z1_finite,
    wsf_z1_sample,
)


@pytest.fixture
def weighted_triangle():
    """Triangle with one doubled edge and unequal conductances."""
    return WeightedGraph.from_edges(
        [("a", "b", 1.0), ("b", "c", 2.0), ("a", "c", 3.0), ("a", "b", 0.5)]
    )


def _total_variation(p: dict, q: dict) -> float:
    return 0.5 * sum(abs(p.get(key, 0.0) - q.get(key, 0.0)) for key in p.keys() | q.keys())


class TestWeightedGraph:
    def test_parallel_edges_are_kept(self, weighted_triangle):
        """Test parallel edges get their own tags."""
        assert weighted_triangle.is_multigraph
        assert [edge.tag for edge in weighted_triangle.edges] == [0, 1, 2, 3]
        assert weighted_triangle.edge(3).conductance == 0.5

    def test_rejects_self_loops(self):
        """Test loops are not edges of a spanning-tree graph."""
        with pytest.raises(DomainError):
            WeightedGraph.from_edges([("a", "a", 1.0)])

    def test_rejects_nonpositive_conductance(self):
        """Test conductances must be positive."""
        with pytest.raises(DomainError):
            WeightedGraph.from_edges([("a", "b", 0.0)])

    def test_rejects_disconnected_graph(self):
        """Test the graph must be connected."""
        with pytest.raises(DomainError):
            WeightedGraph.from_edges([("a", "b", 1.0), ("c", "d", 1.0)])


class TestBuildBox:
    def test_free_box_edges(self):
        """Test the free cube [−1, 1]² has 12 edges with λ^(−|e|) conductances."""
        g = build_box(2, 1, 0.5, boundary="free")

        assert len(g.vertices) == 9
        assert len(g.edges) == 12
        assert g.root is None
        assert sorted(edge.conductance for edge in g.edges) == [1.0] * 4 + [2.0] * 8

    def test_wired_box_has_one_edge_per_crossing(self):
        """Test every lattice edge leaving the cube becomes an edge to the wired vertex."""
        g = build_box(2, 1, 0.5, boundary="wired")

        boundary_edges = [edge for edge in g.edges if WIRED in (edge.a, edge.b)]
        assert len(g.vertices) == 10
        assert len(boundary_edges) == 12
        assert g.root == WIRED
        assert g.is_multigraph

    def test_ball_shape(self):
        """Test the ℓ¹ ball B_G(1) in d = 2."""
        g = build_box(2, 1, 0.5, boundary="free", shape="ball")

        assert len(g.vertices) == 5
        assert len(g.edges) == 4

    def test_invalid_arguments(self):
        """Test size, boundary and shape are validated."""
        with pytest.raises(DomainError):
            build_box(2, 0, 0.5)
        with pytest.raises(DomainError):
            build_box(2, 1, 0.5, boundary="periodic")
        with pytest.raises(DomainError):
            build_box(2, 1, 0.5, shape="torus")


class TestUniformSpanningTree:
    def test_exact_law_on_triangle(self, weighted_triangle):
        """Test P(T) ∝ Π c(e) over the five spanning trees."""
        law = ust_exact(weighted_triangle)

        assert len(law) == 5
        assert math.fsum(law.values()) == pytest.approx(1.0)
        # bc + ac has weight 6 out of 2 + 3 + 6 + 1 + 1.5
        assert law[frozenset({1, 2})] == pytest.approx(6 / 13.5)

    def test_matrix_tree_theorem(self, weighted_triangle):
        """Test the Laplacian determinant equals the total tree weight."""
        assert tree_weight_total(weighted_triangle) == pytest.approx(13.5)

    def test_wilson_samples_match_exact_law(self, weighted_triangle):
        """Test Wilson's algorithm against enumeration."""
        trials = 20_000
        counts = ust_samples(weighted_triangle, trials, master_seed=3)
        empirical = {tree: count / trials for tree, count in counts.items()}

        assert _total_variation(empirical, ust_exact(weighted_triangle)) < 0.03

    def test_wilson_on_wired_ball(self):
        """Test edge frequencies of Wilson samples on a wired multigraph."""
        g = build_box(2, 1, 0.5, boundary="wired", shape="ball")
        trials = 20_000
        counts = ust_samples(g, trials, master_seed=5)
        marginals = edge_inclusion_probabilities(g)

        for edge in g.edges:
            hits = sum(count for tree, count in counts.items() if edge.tag in tree)
            assert hits / trials == pytest.approx(marginals[edge.tag], abs=0.02)

    def test_edge_marginals_match_enumeration(self):
        """Test P(e ∈ T) = c(e) R_eff(e) on the wired ball."""
        g = build_box(2, 1, 0.3, boundary="wired", shape="ball")
        law = ust_exact(g)
        marginals = edge_inclusion_probabilities(g)

        for edge in g.edges:
            enumerated = math.fsum(p for tree, p in law.items() if edge.tag in tree)
            assert marginals[edge.tag] == pytest.approx(enumerated, abs=1e-9)

    def test_samples_are_spanning_trees(self):
        """Test every Wilson sample is a spanning tree."""
        g = build_box(2, 2, 0.5, boundary="wired")

        for seed in range(5):
            assert wilson_ust(g, seed=seed).is_spanning_tree()

    def test_exact_enumeration_budget(self):
        """Test enumeration refuses graphs above the vertex limit."""
        g = build_box(2, 1, 0.5, boundary="free")

        with pytest.raises(BudgetExceededError):
            ust_exact(g)
        assert len(ust_exact(g, Budget(max_exact_tree_vertices=9))) > 0


class TestForestStats:
    def test_components_cover_the_box(self):
        """Test components of T ∖ ∂ partition the inner vertices."""
        g = build_box(2, 3, 0.5, boundary="wired")
        sample = wilson_ust(g, seed=4)

        stats = forest_stats(sample)

        assert stats.component_count == len(stats.component_sizes)
        assert sum(stats.component_sizes) == len(g.vertices) - 1
        assert list(stats.component_sizes) == sorted(stats.component_sizes, reverse=True)

    def test_needs_wired_sample(self):
        """Test free samples have no forest statistics."""
        sample = wilson_ust(build_box(2, 1, 0.5, boundary="free"), seed=1)

        with pytest.raises(DomainError):
            forest_stats(sample)


class TestWiredForestOnZ:
    def test_exact_law_sums_to_one(self):
        """Test Σ_i P[cut at i] = 1."""
        total = math.fsum(wsf_z1_exact(0.4, i) for i in range(-200, 202))

        assert total == pytest.approx(1.0)
        assert wsf_z1_exact(0.4, 0) == wsf_z1_exact(0.4, 1) == pytest.approx(0.3)

    def test_finite_law_converges(self):
        """Test the wired box law approaches the limit."""
        finite = wsf_z1_finite(0.5, 30)

        assert math.fsum(finite.values()) == pytest.approx(1.0)
        for i in range(-5, 7):
            assert finite[i] == pytest.approx(wsf_z1_exact(0.5, i), abs=1e-8)

    def test_sampled_law_matches_finite_law(self):
        """Test the cut position of Wilson samples on the wired segment."""
        law = wsf_z1_sample(0.5, 5, trials=4000, seed=2)
        empirical = {i: law.frequency(i) for i in law.exact}

        assert _total_variation(empirical, law.exact) < 0.05
        assert sum(law.counts.values()) == 4000
        assert [row[0] for row in law.rows()] == list(range(-5, 7))

    def test_exact_law_normalization_to_high_precision(self):
        """Test Σ_{|i|≤60} ½(1−λ)λ^(|i|∧|i−1|) = 1 to 1e−12 at λ = 1/2."""
        total = math.fsum(wsf_z1_exact(0.5, i) for i in range(-60, 61))

        assert total == pytest.approx(1.0, abs=1e-12)

    def test_finite_law_at_the_origin(self):
        """Test the wired 30-cycle already puts mass 1/4 on the cut at 0."""
        assert wsf_z1_finite(0.5, 14)[0] == pytest.approx(0.25, abs=1e-3)

    @pytest.mark.slow
    def test_sampled_law_on_the_thirty_cycle(self):
        """Test each cut frequency on the wired 30-cycle is within 4σ of the exact law."""
        trials = 40_000
        law = wsf_z1_sample(0.5, 14, trials=trials, seed=19, workers=2)

        assert len(law.exact) == 30
        for i, _, frequency, exact in law.rows():
            sigma = math.sqrt(exact * (1.0 - exact) / trials)
            # half a count of slack for the lattice of attainable frequencies
            assert abs(frequency - exact) <= 4 * sigma + 0.5 / trials, i


class TestTreeCount:
    def test_orthant_starts(self):
        """Test starts fill orthants first, then move outward."""
        starts = orthant_starts(2, 5, 3)

        assert starts == [
            LatticePoint.of(3, 3),
            LatticePoint.of(3, -3),
            LatticePoint.of(-3, 3),
            LatticePoint.of(-3, -3),
            LatticePoint.of(6, 6),
        ]
        assert len(set(orthant_starts(3, 20, 2))) == 20

    def test_estimate_counts_at_least_one_tree(self):
        """Test k = 1 always counts and the bound never exceeds k_max."""
        report = tree_count_estimate(2, 0.3, 100, trials=60, seed=7, k_max=3)

        assert 1 <= report.lower_bound_k <= 3
        assert report.alpha_table[1].point_estimate == 1.0
        assert report.relative_decay(1) == 0.0
        assert set(report.alpha_doubled) == {1, 2, 3}

    def test_needs_two_dimensions(self):
        """Test tree counts are not estimated on ℤ."""
        with pytest.raises(DomainError):
            tree_count_estimate(1, 0.5, 10, trials=5)

    @pytest.mark.slow
    def test_four_trees_in_the_plane(self):
        """Test four orthant walkers survive 10⁴ steps while a fifth keeps colliding."""
        report = tree_count_estimate(
            2, 0.5, 10_000, trials=2000, seed=23, k_max=5, start_distance=100
        )

        assert report.alpha_table[4].excludes_zero(0.99)
        at_horizon = report.alpha_table[5].point_estimate
        doubled = report.alpha_doubled[5].point_estimate
        assert isinstance(at_horizon, float) and isinstance(doubled, float)
        assert doubled < at_horizon < 0.25
        assert report.lower_bound_k == 4

    @pytest.mark.slow
    def test_twenty_walkers_in_four_dimensions(self):
        """Test twenty orthant walkers in d = 4 avoid each other with positive probability."""
        starts = orthant_starts(4, 20, 100)

        report = alpha_estimate(4, 0.5, 20, 2000, trials=200, starts=starts, master_seed=29)

        assert report.excludes_zero(0.99)
        assert report.point_estimate > 0.5
