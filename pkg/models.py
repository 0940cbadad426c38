import math
from dataclasses import dataclass, field
from itertools import product
from typing import Any, Iterator, Literal

import numpy as np
from scipy import stats

from errors import DomainError, require_dimension

Sign = Literal["-", "0", "+"]
WalkKind = Literal["biased", "drifted", "reflected"]

PROBABILITY_TOLERANCE = 1e-12


@dataclass(frozen=True, order=True)
class LatticePoint:
    """A point of ℤᵈ with ℓ¹ geometry."""

    coords: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.coords) < 1:
            raise DomainError("a lattice point needs at least one coordinate")
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))

    @classmethod
    def of(cls, *coords: int) -> "LatticePoint":
        return cls(tuple(coords))

    @classmethod
    def origin(cls, d: int) -> "LatticePoint":
        return cls((0,) * require_dimension(d))

    @classmethod
    def unit(cls, d: int, axis: int, sign: int = 1) -> "LatticePoint":
        coords = [0] * require_dimension(d)
        coords[axis] = sign
        return cls(tuple(coords))

    @property
    def d(self) -> int:
        return len(self.coords)

    @property
    def norm(self) -> int:
        """Graph distance to the origin."""
        return sum(abs(c) for c in self.coords)

    @property
    def is_origin(self) -> bool:
        return not any(self.coords)

    @property
    def is_axial(self) -> bool:
        """Membership in the axial set: some coordinate vanishes."""
        return any(c == 0 for c in self.coords)

    @property
    def in_open_orthant(self) -> bool:
        return not self.is_axial

    def reflected(self) -> "LatticePoint":
        return LatticePoint(tuple(abs(c) for c in self.coords))

    def orthant_signature(self) -> tuple[Sign, ...]:
        return tuple("+" if c > 0 else "-" if c < 0 else "0" for c in self.coords)

    def _check_same_dimension(self, other: "LatticePoint") -> None:
        if other.d != self.d:
            raise DomainError(
                f"dimension mismatch: {self.d} vs {other.d}", d=self.d, other_d=other.d
            )

    def __add__(self, other: "LatticePoint") -> "LatticePoint":
        self._check_same_dimension(other)
        return LatticePoint(tuple(a + b for a, b in zip(self.coords, other.coords)))

    def __sub__(self, other: "LatticePoint") -> "LatticePoint":
        self._check_same_dimension(other)
        return LatticePoint(tuple(a - b for a, b in zip(self.coords, other.coords)))

    def distance(self, other: "LatticePoint") -> int:
        return (self - other).norm

    def is_adjacent(self, other: "LatticePoint") -> bool:
        return self.distance(other) == 1

    def label(self) -> str:
        """Comma-joined coordinates, as written in graph files."""
        return ",".join(str(c) for c in self.coords)

    def __str__(self) -> str:
        return f"({self.label()})"


@dataclass(frozen=True)
class Lattice:
    """The dimension context: every point handed to an operation is checked against d."""

    d: int

    def __post_init__(self) -> None:
        require_dimension(self.d)

    @property
    def origin(self) -> LatticePoint:
        return LatticePoint.origin(self.d)

    def unit(self, axis: int, sign: int = 1) -> LatticePoint:
        return LatticePoint.unit(self.d, axis, sign)

    def point(self, *coords: int) -> LatticePoint:
        return self.require(LatticePoint(tuple(coords)))

    def require(self, x: LatticePoint) -> LatticePoint:
        if x.d != self.d:
            raise DomainError(
                f"point {x} has dimension {x.d}, expected {self.d}", d=self.d
            )
        return x

    def neighbors(self, x: LatticePoint) -> list[LatticePoint]:
        """Neighbors in the fixed order +e₁, −e₁, +e₂, −e₂, …"""
        self.require(x)
        result = []
        for axis in range(self.d):
            for sign in (1, -1):
                coords = list(x.coords)
                coords[axis] += sign
                result.append(LatticePoint(tuple(coords)))
        return result

    def box(self, n: int) -> Iterator[LatticePoint]:
        """Points of the cube [−n, n]^d in lexicographic order."""
        for coords in product(range(-n, n + 1), repeat=self.d):
            yield LatticePoint(coords)

    def ball(self, n: int) -> Iterator[LatticePoint]:
        """Points of B_G(n) = {x : |x| ≤ n}."""
        return (x for x in self.box(n) if x.norm <= n)

    def sphere(self, n: int) -> Iterator[LatticePoint]:
        """Points of ∂B_G(n) = {x : |x| = n}."""
        return (x for x in self.box(n) if x.norm == n)


@dataclass(frozen=True)
class DegreeProfile:
    d_x: int
    d_minus: int
    d_zero: int
    d_plus: int

    def __post_init__(self) -> None:
        if self.d_x != self.d_minus + self.d_zero + self.d_plus:
            raise DomainError("degree profile does not add up", profile=str(self))


@dataclass(frozen=True)
class StepDistribution:
    """One-step law from `source`: (neighbor, probability) pairs."""

    source: LatticePoint
    entries: tuple[tuple[LatticePoint, float], ...]

    def __post_init__(self) -> None:
        total = math.fsum(p for _, p in self.entries)
        if abs(total - 1.0) > PROBABILITY_TOLERANCE:
            raise DomainError(f"step probabilities sum to {total}, not 1")
        for neighbor, p in self.entries:
            if not self.source.is_adjacent(neighbor):
                raise DomainError(f"{neighbor} is not adjacent to {self.source}")
            if not 0.0 < p <= 1.0:
                raise DomainError(f"step probability {p} outside (0, 1]")

    def probability(self, y: LatticePoint) -> float:
        return sum(p for neighbor, p in self.entries if neighbor == y)

    def as_dict(self) -> dict[LatticePoint, float]:
        return dict(self.entries)

    @property
    def offsets(self) -> dict[LatticePoint, float]:
        """Probabilities keyed by increment rather than by target."""
        return {neighbor - self.source: p for neighbor, p in self.entries}


@dataclass(frozen=True, eq=False)
class KernelConstants:
    """Closed-form constants of the walk for a given (d, λ)."""

    d: int
    lam: float
    rho: float
    speed: float
    eta: float
    drift: np.ndarray
    covariance: np.ndarray

    @property
    def coordinate_drift(self) -> float:
        return float(self.drift[0])

    def gaussian_peak(self, n: int) -> float:
        """Local-limit prediction (2πn)^(−d/2) (det Σ)^(−1/2) for the peak of p^(n)."""
        det = float(np.linalg.det(self.covariance))
        return (2 * math.pi * n) ** (-self.d / 2) / math.sqrt(det)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One simulated walk; `points` has shape (steps + 1, d)."""

    kind: WalkKind
    points: np.ndarray
    seed: int
    lam: float

    def __post_init__(self) -> None:
        self.points.setflags(write=False)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def steps(self) -> int:
        return len(self) - 1

    @property
    def d(self) -> int:
        return int(self.points.shape[1])

    def point(self, t: int) -> LatticePoint:
        return LatticePoint(tuple(int(c) for c in self.points[t]))

    @property
    def final(self) -> LatticePoint:
        return self.point(-1)

    @property
    def norms(self) -> np.ndarray:
        return np.abs(self.points).sum(axis=1)

    @property
    def axial_mask(self) -> np.ndarray:
        return (self.points == 0).any(axis=1)

    def axial_visits(self) -> int:
        return int(self.axial_mask.sum())

    def last_axial_visit(self) -> int | None:
        hits = np.flatnonzero(self.axial_mask)
        return int(hits[-1]) if hits.size else None


@dataclass(frozen=True)
class EstimatorReport:
    """Monte Carlo estimate with its standard error and everything needed to rerun it."""

    point_estimate: float | tuple[float, ...]
    std_error: float | tuple[float, ...]
    trials: int
    horizon: int
    master_seed: int
    parameters: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_samples(
        cls,
        samples: np.ndarray,
        *,
        horizon: int,
        master_seed: int,
        parameters: dict[str, Any] | None = None,
    ) -> "EstimatorReport":
        """Mean and sd/√trials; samples of shape (trials,) or (trials, k)."""
        samples = np.asarray(samples, dtype=float)
        trials = samples.shape[0]
        mean = samples.mean(axis=0)
        sd = samples.std(axis=0, ddof=1) if trials > 1 else np.zeros_like(mean)
        se = sd / math.sqrt(trials)
        if samples.ndim == 1:
            estimate: float | tuple[float, ...] = float(mean)
            error: float | tuple[float, ...] = float(se)
        else:
            estimate = tuple(float(v) for v in mean)
            error = tuple(float(v) for v in se)
        return cls(
            point_estimate=estimate,
            std_error=error,
            trials=trials,
            horizon=horizon,
            master_seed=master_seed,
            parameters=dict(parameters or {}),
        )

    def confidence_interval(self, level: float = 0.99) -> tuple[float, float]:
        """Normal-approximation interval for a scalar estimate."""
        if not isinstance(self.point_estimate, float) or not isinstance(
            self.std_error, float
        ):
            raise DomainError("confidence intervals are defined for scalar estimates")
        z = float(stats.norm.ppf(0.5 + level / 2))
        return (
            self.point_estimate - z * self.std_error,
            self.point_estimate + z * self.std_error,
        )

    def excludes_zero(self, level: float = 0.99) -> bool:
        low, _ = self.confidence_interval(level)
        return low > 0.0

    def within(self, target: float, sigmas: float = 4.0, floor: float = 0.0) -> bool:
        """|estimate − target| ≤ max(floor, sigmas·se), scalar estimates only."""
        assert isinstance(self.point_estimate, float)
        assert isinstance(self.std_error, float)
        return abs(self.point_estimate - target) <= max(floor, sigmas * self.std_error)

    def as_record(self) -> dict[str, Any]:
        return {
            "point_estimate": self.point_estimate,
            "std_error": self.std_error,
            "trials": self.trials,
            "horizon": self.horizon,
            "master_seed": self.master_seed,
            **self.parameters,
        }
