import math

import numpy as np
import pytest

from errors import DomainError
from models import (
    DegreeProfile,
    EstimatorReport,
    Lattice,
    LatticePoint,
    StepDistribution,
    Trajectory,
)


class TestLatticePoint:
    def test_norm_and_axial_membership(self):
        """Test ℓ¹ norm and the axial set."""
        x = LatticePoint.of(2, -3, 1)

        assert x.norm == 6
        assert not x.is_axial
        assert x.in_open_orthant
        assert LatticePoint.of(0, 4, -1).is_axial
        assert LatticePoint.origin(3).is_origin

    def test_reflection_and_signature(self):
        """Test coordinatewise absolute value and the orthant signature."""
        x = LatticePoint.of(-2, 0, 5)

        assert x.reflected() == LatticePoint.of(2, 0, 5)
        assert x.orthant_signature() == ("-", "0", "+")

    def test_arithmetic_checks_dimension(self):
        """Test adding points of different dimension is a domain error."""
        assert LatticePoint.of(1, 2) + LatticePoint.of(0, -1) == LatticePoint.of(1, 1)
        with pytest.raises(DomainError):
            LatticePoint.of(1, 2) + LatticePoint.of(1, 2, 3)

    def test_adjacency(self):
        """Test neighbors differ by one unit vector."""
        x = LatticePoint.of(1, 1)

        assert x.is_adjacent(LatticePoint.of(1, 2))
        assert not x.is_adjacent(LatticePoint.of(2, 2))
        assert x.distance(LatticePoint.of(-1, 0)) == 3

    def test_label_and_str(self):
        """Test the text forms used in output files."""
        x = LatticePoint.of(1, -2)

        assert x.label() == "1,-2"
        assert str(x) == "(1,-2)"

    def test_empty_point_rejected(self):
        """Test ℤ⁰ points are not allowed."""
        with pytest.raises(DomainError):
            LatticePoint(())


class TestLattice:
    def test_neighbor_order(self):
        """Test neighbors come as +e₁, −e₁, +e₂, −e₂."""
        lattice = Lattice(2)

        assert lattice.neighbors(lattice.point(0, 0)) == [
            LatticePoint.of(1, 0),
            LatticePoint.of(-1, 0),
            LatticePoint.of(0, 1),
            LatticePoint.of(0, -1),
        ]

    def test_rejects_foreign_dimension(self):
        """Test a point of the wrong dimension is refused."""
        with pytest.raises(DomainError):
            Lattice(2).neighbors(LatticePoint.of(0, 0, 0))

    def test_box_ball_sphere_sizes(self):
        """Test counts of the cube, the ℓ¹ ball and its sphere."""
        lattice = Lattice(2)

        assert len(list(lattice.box(2))) == 25
        assert len(list(lattice.ball(2))) == 13
        assert len(list(lattice.sphere(2))) == 8

    def test_dimension_must_be_positive(self):
        """Test Lattice(0) is a domain error."""
        with pytest.raises(DomainError):
            Lattice(0)


class TestDegreeProfile:
    def test_inconsistent_profile_rejected(self):
        """Test degrees must add up."""
        with pytest.raises(DomainError):
            DegreeProfile(d_x=4, d_minus=1, d_zero=0, d_plus=2)


class TestStepDistribution:
    def test_valid_distribution(self):
        """Test probabilities keyed by target and by offset."""
        o = LatticePoint.of(0)
        step = StepDistribution(
            source=o, entries=((LatticePoint.of(1), 0.75), (LatticePoint.of(-1), 0.25))
        )

        assert step.probability(LatticePoint.of(1)) == 0.75
        assert step.probability(LatticePoint.of(5)) == 0
        assert step.offsets == {LatticePoint.of(1): 0.75, LatticePoint.of(-1): 0.25}

    def test_mass_must_be_one(self):
        """Test probabilities summing to less than one are rejected."""
        with pytest.raises(DomainError):
            StepDistribution(
                source=LatticePoint.of(0),
                entries=((LatticePoint.of(1), 0.5), (LatticePoint.of(-1), 0.25)),
            )

    def test_targets_must_be_adjacent(self):
        """Test a jump of length two is rejected."""
        with pytest.raises(DomainError):
            StepDistribution(source=LatticePoint.of(0), entries=((LatticePoint.of(2), 1.0),))


class TestTrajectory:
    def test_axial_statistics(self):
        """Test visits to the axial set and the last one."""
        points = np.array([[0, 0], [1, 0], [1, 1], [2, 1], [2, 0], [3, 0], [3, 1]])
        trajectory = Trajectory(kind="biased", points=points, seed=1, lam=0.5)

        assert trajectory.steps == 6
        assert trajectory.d == 2
        assert trajectory.axial_visits() == 4
        assert trajectory.last_axial_visit() == 5
        assert trajectory.final == LatticePoint.of(3, 1)
        np.testing.assert_array_equal(trajectory.norms, [0, 1, 2, 3, 2, 3, 4])

    def test_points_are_read_only(self):
        """Test trajectories cannot be mutated after construction."""
        trajectory = Trajectory(
            kind="drifted", points=np.zeros((2, 1), dtype=np.int64), seed=1, lam=0.5
        )

        with pytest.raises(ValueError):
            trajectory.points[0, 0] = 3

    def test_never_axial(self):
        """Test a walk staying inside an orthant has no last axial visit."""
        points = np.array([[1, 1], [2, 1], [2, 2]])

        assert Trajectory("biased", points, 1, 0.5).last_axial_visit() is None


class TestEstimatorReport:
    def test_from_scalar_samples(self):
        """Test mean and standard error of the mean."""
        samples = np.array([1.0, 0.0, 1.0, 0.0])
        report = EstimatorReport.from_samples(samples, horizon=10, master_seed=3)

        assert report.point_estimate == 0.5
        assert report.std_error == pytest.approx(math.sqrt(1 / 3) / 2)
        assert report.trials == 4

    def test_from_vector_samples(self):
        """Test one estimate per column."""
        samples = np.array([[1.0, 2.0], [3.0, 2.0]])
        report = EstimatorReport.from_samples(samples, horizon=1, master_seed=0)

        assert report.point_estimate == (2.0, 2.0)
        assert report.std_error == (1.0, 0.0)

    def test_confidence_interval(self):
        """Test the normal interval at 95%."""
        report = EstimatorReport(
            point_estimate=1.0, std_error=0.1, trials=100, horizon=5, master_seed=0
        )

        low, high = report.confidence_interval(0.95)

        assert low == pytest.approx(1.0 - 0.196, abs=1e-3)
        assert high == pytest.approx(1.0 + 0.196, abs=1e-3)
        assert report.excludes_zero(0.95)

    def test_interval_needs_scalar_estimate(self):
        """Test vector estimates have no single interval."""
        report = EstimatorReport(
            point_estimate=(1.0, 2.0),
            std_error=(0.1, 0.1),
            trials=2,
            horizon=1,
            master_seed=0,
        )

        with pytest.raises(DomainError):
            report.confidence_interval()

    def test_within(self):
        """Test the tolerance is the larger of the floor and k standard errors."""
        report = EstimatorReport(
            point_estimate=0.30, std_error=0.01, trials=100, horizon=5, master_seed=0
        )

        assert report.within(0.33, sigmas=4)
        assert not report.within(0.36, sigmas=4)
        assert report.within(0.36, sigmas=4, floor=0.1)

    def test_record_includes_parameters(self):
        """Test the record reproduces the run."""
        report = EstimatorReport.from_samples(
            np.ones(3), horizon=4, master_seed=9, parameters={"d": 2}
        )

        assert report.as_record() == {
            "point_estimate": 1.0,
            "std_error": 0.0,
            "trials": 3,
            "horizon": 4,
            "master_seed": 9,
            "d": 2,
        }
