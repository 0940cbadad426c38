import math

import pytest

from combinatorics import (
    LatticePath,
    OneDimPath,
    bnk_bound_holds,
    bnk_bound_report,
    bridge_count_closed_form,
    catalan,
    catalan_sequence,
    catalan_tail,
    closed_paths,
    count_bnk,
    eta_bound,
    path_probability,
    projection,
)
from config import Budget
from errors import BudgetExceededError, DomainError
from exact_kernel import heat_kernel
from models import LatticePoint


class TestCatalan:
    def test_first_values(self):
        """Test C_0..C_6."""
        assert [catalan(ell) for ell in range(7)] == [1, 1, 2, 5, 14, 42, 132]

    def test_recurrence_matches_closed_form(self):
        """Test the convolution recurrence."""
        assert catalan_sequence(25) == [catalan(ell) for ell in range(26)]

    def test_tail_increases_to_one_half(self):
        """Test Σ C_ℓ/4^(ℓ+1) is increasing and bounded by 1/2."""
        tails = [catalan_tail(L) for L in range(60)]

        assert tails[0] == 0.25
        assert all(a < b for a, b in zip(tails, tails[1:]))
        assert tails[-1] < 0.5
        assert tails[-1] > 0.45

    def test_negative_index(self):
        """Test negative indices are domain errors."""
        with pytest.raises(DomainError):
            catalan(-1)


class TestBridgeCounts:
    @pytest.mark.parametrize("n", range(0, 10))
    def test_brute_force_agrees_with_excursions(self, n):
        """Test both counting modes give the same numbers."""
        for k in range(n + 1):
            assert count_bnk(n, k, "brute") == count_bnk(n, k, "excursion")

    @pytest.mark.parametrize("n", [1, 2, 5, 12, 30])
    def test_closed_form(self, n):
        """Test 2^k·k/(2n−k)·C(2n−k, n) for k ≥ 1."""
        for k in range(n + 1):
            assert count_bnk(n, k) == bridge_count_closed_form(n, k)

    @pytest.mark.parametrize("n", [1, 4, 10, 40])
    def test_counts_partition_all_bridges(self, n):
        """Test Σ_k |B_{n,k}| = C(2n, n)."""
        assert sum(count_bnk(n, k) for k in range(n + 1)) == math.comb(2 * n, n)

    def test_small_values(self):
        """Test B_{1,1} and B_{2,·} by hand."""
        assert count_bnk(1, 1) == 2
        assert [count_bnk(2, k) for k in range(3)] == [0, 2, 4]

    def test_brute_force_budget(self):
        """Test brute mode refuses n above the limit."""
        with pytest.raises(BudgetExceededError):
            count_bnk(12, 3, "brute")
        with pytest.raises(BudgetExceededError):
            count_bnk(5, 3, "brute", Budget(max_brute_n=4))

    def test_invalid_arguments(self):
        """Test k outside [0, n] and unknown modes."""
        with pytest.raises(DomainError):
            count_bnk(3, 4)
        with pytest.raises(DomainError):
            count_bnk(3, 1, "guess")

    def test_bound_constant(self):
        """Test the measured constant and that a slightly larger one still holds."""
        assert bnk_bound_report(1) == pytest.approx(0.5)
        c_min = bnk_bound_report(9)

        assert c_min >= 0.5
        assert bnk_bound_holds(2 * c_min, 60)
        assert not bnk_bound_holds(0.9 * c_min, 9)

    def test_brute_bound_matches_excursion_bound(self):
        """Test the constant does not depend on the counting mode."""
        assert bnk_bound_report(8, "brute") == bnk_bound_report(8, "excursion")

    @pytest.mark.slow
    def test_doubled_constant_holds_to_two_hundred(self):
        """Test c = 2·c_min from n ≤ 9 still bounds every ratio up to n = 200."""
        c_min = bnk_bound_report(9)

        assert math.isfinite(c_min)
        assert bnk_bound_holds(2 * c_min, 200)


class TestPaths:
    def test_one_dimensional_returns(self):
        """Test visits to 0 after time 0."""
        path = OneDimPath((1, -1, -1, 1, 1, 1))

        assert path.values == (0, 1, 0, -1, 0, 1, 2)
        assert path.returns == 2
        assert not path.is_bridge

    def test_one_dimensional_steps_are_unit(self):
        """Test steps other than ±1 are refused."""
        with pytest.raises(DomainError):
            OneDimPath((1, 2))

    def test_lattice_path_must_be_connected(self):
        """Test consecutive vertices must be neighbors."""
        with pytest.raises(DomainError):
            LatticePath.of((0, 0), (1, 1))

    def test_projection_deletes_null_moves(self):
        """Test γ_i keeps only the moves of coordinate i."""
        path = LatticePath.of((0, 0), (1, 0), (1, 1), (0, 1), (0, 0))

        assert projection(path, 0).steps == (1, -1)
        assert projection(path, 1).steps == (1, -1)
        assert path.is_closed
        assert len(path) == 4

    def test_hits_count_positions_after_start(self):
        """Test n(γ) counts γ_1..γ_L on the axial set."""
        path = LatticePath.of((0, 0), (1, 0), (1, 1), (0, 1), (0, 0))

        assert path.hits == 3


class TestPathProbability:
    def test_out_and_back(self):
        """Test P(o → e₁ → o) = 1/4 · 1/7 at λ = 1/2 in d = 2."""
        path = LatticePath.of((0, 0), (1, 0), (0, 0))

        result = path_probability(path, 0.5)

        assert result.probability == pytest.approx(1 / 28)
        assert result.hits == 2
        assert result.projected_hits == (1, 0)

    def test_first_step_into_orthant(self):
        """Test n(γ) on ℤ is the number of returns to 0."""
        path = LatticePath.of((0,), (1,), (2,), (1,), (0,))

        result = path_probability(path, 0.5)

        assert result.hits == 1
        assert result.probability == pytest.approx(0.5 * (2 / 3) * (1 / 3) * (1 / 3))

    def test_must_start_at_origin(self):
        """Test paths from elsewhere are refused."""
        with pytest.raises(DomainError):
            path_probability(LatticePath.of((1, 0), (2, 0)), 0.5)

    @pytest.mark.parametrize("lam", [0.2, 0.5, 0.8])
    def test_eta_bound_dominates_closed_paths(self, lam):
        """Test P(γ) ≤ η^(Σ n(γ_i)) (√λ/(d(1+λ)))^(2n) for all closed paths."""
        for n in range(1, 4):
            for path in closed_paths(2, n):
                probability = path_probability(path, lam).probability
                assert probability <= eta_bound(path, lam) * (1 + 1e-12)

    def test_eta_bound_needs_closed_path(self):
        """Test open paths have no η bound."""
        with pytest.raises(DomainError):
            eta_bound(LatticePath.of((0, 0), (1, 0)), 0.5)


class TestClosedPaths:
    @pytest.mark.parametrize("n", range(0, 5))
    def test_counts_in_one_dimension(self, n):
        """Test there are C(2n, n) closed paths of length 2n on ℤ."""
        assert sum(1 for _ in closed_paths(1, n)) == math.comb(2 * n, n)

    @pytest.mark.parametrize("n", range(0, 4))
    def test_counts_in_two_dimensions(self, n):
        """Test there are C(2n, n)² closed paths of length 2n on ℤ²."""
        assert sum(1 for _ in closed_paths(2, n)) == math.comb(2 * n, n) ** 2

    def test_return_probability_is_sum_over_closed_paths(self):
        """Test Σ_γ P(γ) over closed paths equals p^(2n)(o,o) for λ = 1."""
        total = math.fsum(
            path_probability(path, 1.0).probability for path in closed_paths(1, 4)
        )

        assert total == pytest.approx(math.comb(8, 4) / 4**4)

    @pytest.mark.slow
    @pytest.mark.parametrize("lam", [0.3, 0.5])
    def test_closed_path_sum_matches_heat_kernel_on_the_plane(self, lam):
        """Test Σ_γ P(γ) over closed paths of length 2n ≤ 10 equals p^(2n)(o,o)."""
        for n in range(1, 6):
            total = math.fsum(
                path_probability(path, lam).probability for path in closed_paths(2, n)
            )
            exact = heat_kernel("biased", 2, lam, 2 * n).mass(LatticePoint.origin(2))

            assert total == pytest.approx(exact, abs=1e-10)
