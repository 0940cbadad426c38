"""Seeded simulation of biased, drifted and reflected walks, and the estimators built on it.

Every walker draws its uniforms from its own Philox stream keyed by
(master_seed, trial, walker), so results never depend on worker count.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Literal

import numpy as np
from loguru import logger
from numba import njit

from config import RunDefaults
from errors import DomainError, require_dimension, require_lambda
from models import EstimatorReport, Lattice, LatticePoint, Trajectory, WalkKind
from seeding import run_trials, trial_generator

CountKind = Literal["range", "coincidence"]

# Collision time recorded when walkers never meet within the simulated horizon
NO_COLLISION = np.iinfo(np.int64).max


@njit(cache=True)
def _biased_path(start, lam, uniforms):
    """RW_λ by inverse CDF; per coordinate the away-from-0 move precedes the inward one."""
    d = start.shape[0]
    steps = uniforms.shape[0]
    points = np.empty((steps + 1, d), dtype=np.int64)
    x = start.copy()
    points[0] = x
    for t in range(steps):
        nonzero = 0
        for i in range(d):
            if x[i] != 0:
                nonzero += 1
        target = uniforms[t] * (2 * d + (lam - 1.0) * nonzero)
        acc = 0.0
        axis = d - 1
        move = 0
        for i in range(d):
            away = 1 if x[i] >= 0 else -1
            acc += 1.0
            if target < acc:
                axis, move = i, away
                break
            acc += lam if x[i] != 0 else 1.0
            if target < acc:
                axis, move = i, -away
                break
        if move == 0:
            # Rounding left target at the top of the last interval: inward on the last axis
            move = -1 if x[axis] >= 0 else 1
        x[axis] += move
        points[t + 1] = x
    return points


def _drifted_path(start: np.ndarray, lam: float, uniforms: np.ndarray) -> np.ndarray:
    """Drifted walk on the same inverse-CDF layout: per coordinate +e_i then −e_i."""
    d = start.shape[0]
    steps = uniforms.shape[0]
    weight = 1.0 + lam
    target = uniforms * (d * weight)
    axis = np.minimum((target // weight).astype(np.int64), d - 1)
    forward = (target - axis * weight) < 1.0

    increments = np.zeros((steps, d), dtype=np.int64)
    increments[np.arange(steps), axis] = np.where(forward, 1, -1)
    points = np.empty((steps + 1, d), dtype=np.int64)
    points[0] = start
    np.cumsum(increments, axis=0, out=points[1:])
    points[1:] += start
    return points


def _validate_kind(kind: str, lam: float) -> float:
    if kind == "drifted":
        return require_lambda(lam)
    if kind in ("biased", "reflected"):
        return require_lambda(lam, allow_reference=True)
    raise DomainError(f"unknown walk kind {kind!r}", kind=kind)


def _walk_points(
    kind: WalkKind, start: np.ndarray, lam: float, steps: int, rng: np.random.Generator
) -> np.ndarray:
    uniforms = rng.random(steps)
    if kind == "drifted":
        return _drifted_path(start, lam, uniforms)
    points = _biased_path(start, lam, uniforms)
    return np.abs(points) if kind == "reflected" else points


def _start_array(start: LatticePoint | Sequence[int]) -> np.ndarray:
    coords = start.coords if isinstance(start, LatticePoint) else tuple(start)
    return np.asarray(coords, dtype=np.int64)


def simulate(
    kind: WalkKind,
    d: int,
    lam: float,
    steps: int,
    start: LatticePoint | None = None,
    seed: int = RunDefaults.SEED,
) -> Trajectory:
    d = require_dimension(d)
    lam = _validate_kind(kind, lam)
    if steps < 0:
        raise DomainError(f"steps must be nonnegative, got {steps}", steps=steps)
    start = Lattice(d).require(start) if start is not None else LatticePoint.origin(d)

    points = _walk_points(kind, _start_array(start), lam, steps, trial_generator(seed))
    return Trajectory(kind=kind, points=points, seed=seed, lam=lam)


def simulate_coupled(
    d: int,
    lam: float,
    steps: int,
    start: LatticePoint | None = None,
    seed: int = RunDefaults.SEED,
) -> tuple[Trajectory, Trajectory]:
    """A biased and a drifted walk driven by one shared stream of uniforms."""
    d = require_dimension(d)
    lam = require_lambda(lam)
    start = Lattice(d).require(start) if start is not None else LatticePoint.origin(d)

    uniforms = trial_generator(seed).random(steps)
    origin = _start_array(start)
    biased = _biased_path(origin, lam, uniforms)
    drifted = _drifted_path(origin, lam, uniforms)
    return (
        Trajectory(kind="biased", points=biased, seed=seed, lam=lam),
        Trajectory(kind="drifted", points=drifted, seed=seed, lam=lam),
    )


def first_axial_time(trajectory: Trajectory) -> int | None:
    """First time the walk sits on the axial set, or None."""
    hits = np.flatnonzero(trajectory.axial_mask)
    return int(hits[0]) if hits.size else None


def _site_ids(paths: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Integer ids of visited sites, consistent across the given paths."""
    d = paths[0].shape[1]
    bits = 63 // d
    offset = 1 << (bits - 1)
    extent = max(int(np.abs(path).max()) for path in paths)
    if extent < offset:
        shifts = np.arange(d, dtype=np.int64) * bits
        return [((path + offset) << shifts).sum(axis=1) for path in paths]

    _, inverse = np.unique(np.concatenate(paths), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    bounds = np.cumsum([len(path) for path in paths])[:-1]
    return np.split(inverse, bounds)


def _first_visits(ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(sorted distinct sites, first visit time of each)."""
    sites, first = np.unique(ids, return_index=True)
    return sites, first


@dataclass(frozen=True, eq=False)
class CountDistribution:
    """Per-trial counts observed at one horizon."""

    horizon: int
    counts: np.ndarray
    master_seed: int
    parameters: dict[str, Any] = field(default_factory=dict)

    @property
    def trials(self) -> int:
        return int(self.counts.size)

    @property
    def median(self) -> float:
        return float(np.median(self.counts))

    @property
    def mean(self) -> float:
        return float(self.counts.mean())

    def frequencies(self) -> dict[int, float]:
        values, counts = np.unique(self.counts, return_counts=True)
        return {int(v): c / self.trials for v, c in zip(values, counts)}

    def as_record(self) -> dict[str, Any]:
        return {
            "horizon": self.horizon,
            "trials": self.trials,
            "median": self.median,
            "mean": self.mean,
            "master_seed": self.master_seed,
            **self.parameters,
        }


@dataclass(frozen=True)
class SpeedReport:
    scalar: EstimatorReport
    per_coordinate: EstimatorReport


@dataclass(frozen=True)
class AxialVisitReport:
    visits: CountDistribution
    saturation: float


def total_variation(
    a: CountDistribution | np.ndarray, b: CountDistribution | np.ndarray
) -> float:
    """Total-variation distance between two empirical count distributions."""
    fa = a.frequencies() if isinstance(a, CountDistribution) else _frequencies(a)
    fb = b.frequencies() if isinstance(b, CountDistribution) else _frequencies(b)
    return 0.5 * sum(abs(fa.get(v, 0.0) - fb.get(v, 0.0)) for v in fa.keys() | fb.keys())


def _frequencies(samples: np.ndarray) -> dict[int, float]:
    values, counts = np.unique(np.asarray(samples), return_counts=True)
    return {int(v): c / counts.sum() for v, c in zip(values, counts)}


def _horizons(horizons: int | Sequence[int]) -> tuple[int, ...]:
    values = (horizons,) if isinstance(horizons, int) else tuple(horizons)
    if not values or min(values) < 0:
        raise DomainError(f"horizons must be nonnegative, got {values}")
    return tuple(sorted(set(values)))


def _speed_trial(
    trial: int, *, d: int, lam: float, steps: int, master_seed: int
) -> np.ndarray:
    rng = trial_generator(master_seed, trial)
    points = _walk_points("biased", np.zeros(d, dtype=np.int64), lam, steps, rng)
    return np.abs(points[-1])


def speed_estimate(
    d: int,
    lam: float,
    steps: int,
    trials: int,
    master_seed: int = RunDefaults.SEED,
    workers: int = RunDefaults.WORKERS,
) -> SpeedReport:
    """|X_n|/n and (|X_n^i|/n)_i over independent biased walks from o."""
    d = require_dimension(d)
    lam = require_lambda(lam)
    if trials < 2:
        raise DomainError(f"speed estimates need at least 2 trials, got {trials}")
    if steps < 1:
        raise DomainError(f"steps must be positive, got {steps}")

    trial = partial(_speed_trial, d=d, lam=lam, steps=steps, master_seed=master_seed)
    finals = np.array(run_trials(trial, trials, workers), dtype=float) / steps
    parameters = {"d": d, "lambda": lam}
    report = SpeedReport(
        scalar=EstimatorReport.from_samples(
            finals.sum(axis=1),
            horizon=steps,
            master_seed=master_seed,
            parameters=parameters,
        ),
        per_coordinate=EstimatorReport.from_samples(
            finals, horizon=steps, master_seed=master_seed, parameters=parameters
        ),
    )
    logger.info(
        "Speed estimated", d=d, lam=lam, steps=steps, estimate=report.scalar.point_estimate
    )
    return report


def _axial_trial(
    trial: int,
    *,
    d: int,
    lam: float,
    start: tuple[int, ...],
    horizons: tuple[int, ...],
    master_seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    rng = trial_generator(master_seed, trial)
    origin = np.asarray(start, dtype=np.int64)
    points = _walk_points("biased", origin, lam, horizons[-1], rng)
    hits = np.flatnonzero((points == 0).any(axis=1))
    visits = np.searchsorted(hits, horizons, side="right")
    last = np.array(
        [hits[v - 1] if v else -1 for v in visits], dtype=np.int64
    )
    return visits, last


def axial_visit_profile(
    d: int,
    lam: float,
    horizons: int | Sequence[int],
    trials: int,
    master_seed: int = RunDefaults.SEED,
    start: LatticePoint | None = None,
    workers: int = RunDefaults.WORKERS,
) -> dict[int, AxialVisitReport]:
    """#{n ≤ H : X_n ∈ 𝒳} at every requested horizon H, from one set of trials."""
    d = require_dimension(d)
    if d < 2:
        raise DomainError("axial visit statistics need d ≥ 2", d=d)
    lam = require_lambda(lam)
    start = Lattice(d).require(start) if start is not None else LatticePoint.origin(d)
    horizons = _horizons(horizons)

    trial = partial(
        _axial_trial,
        d=d,
        lam=lam,
        start=start.coords,
        horizons=horizons,
        master_seed=master_seed,
    )
    results = run_trials(trial, trials, workers)
    visits = np.array([v for v, _ in results], dtype=np.int64).reshape(trials, -1)
    last = np.array([last for _, last in results], dtype=np.int64).reshape(trials, -1)

    profile = {}
    for column, horizon in enumerate(horizons):
        # last = -1 for walks that never touched 𝒳
        saturated = last[:, column] <= horizon / 2
        profile[horizon] = AxialVisitReport(
            visits=CountDistribution(
                horizon=horizon,
                counts=visits[:, column],
                master_seed=master_seed,
                parameters={"d": d, "lambda": lam},
            ),
            saturation=float(saturated.mean()),
        )
    logger.info("Axial visits counted", d=d, lam=lam, horizons=horizons, trials=trials)
    return profile


def axial_visit_stats(
    d: int,
    lam: float,
    horizon: int,
    trials: int,
    master_seed: int = RunDefaults.SEED,
    start: LatticePoint | None = None,
    workers: int = RunDefaults.WORKERS,
) -> AxialVisitReport:
    return axial_visit_profile(d, lam, horizon, trials, master_seed, start, workers)[
        horizon
    ]


def _intersection_trial(
    trial: int,
    *,
    kind: WalkKind,
    lam: float,
    starts: tuple[tuple[int, ...], tuple[int, ...]],
    horizons: tuple[int, ...],
    count: CountKind,
    master_seed: int,
) -> np.ndarray:
    paths = [
        _walk_points(
            kind,
            np.asarray(start, dtype=np.int64),
            lam,
            horizons[-1],
            trial_generator(master_seed, trial, walker),
        )
        for walker, start in enumerate(starts)
    ]
    ids_a, ids_b = _site_ids(paths)

    if count == "coincidence":
        totals = []
        for horizon in horizons:
            sites_a, counts_a = np.unique(ids_a[: horizon + 1], return_counts=True)
            sites_b, counts_b = np.unique(ids_b[: horizon + 1], return_counts=True)
            _, ia, ib = np.intersect1d(
                sites_a, sites_b, assume_unique=True, return_indices=True
            )
            totals.append(int((counts_a[ia] * counts_b[ib]).sum()))
        return np.array(totals, dtype=np.int64)

    sites_a, first_a = _first_visits(ids_a)
    sites_b, first_b = _first_visits(ids_b)
    _, ia, ib = np.intersect1d(sites_a, sites_b, assume_unique=True, return_indices=True)
    shared_since = np.sort(np.maximum(first_a[ia], first_b[ib]))
    return np.searchsorted(shared_since, horizons, side="right").astype(np.int64)


def intersection_profile(
    kind: WalkKind,
    d: int,
    lam: float,
    horizons: int | Sequence[int],
    trials: int,
    starts: tuple[LatticePoint, LatticePoint] | None = None,
    master_seed: int = RunDefaults.SEED,
    count: CountKind = "range",
    workers: int = RunDefaults.WORKERS,
) -> dict[int, CountDistribution]:
    """|range(A) ∩ range(B)| (or Σ 1{A_m = B_n}) at every requested horizon."""
    d = require_dimension(d)
    lam = _validate_kind(kind, lam)
    if count not in ("range", "coincidence"):
        raise DomainError(f"unknown intersection count {count!r}", count=count)
    lattice = Lattice(d)
    if starts is None:
        starts = (lattice.origin, lattice.origin)
    if len(starts) != 2:
        raise DomainError("intersection statistics take exactly two starts")
    horizons = _horizons(horizons)

    trial = partial(
        _intersection_trial,
        kind=kind,
        lam=lam,
        starts=tuple(lattice.require(s).coords for s in starts),
        horizons=horizons,
        count=count,
        master_seed=master_seed,
    )
    table = np.array(run_trials(trial, trials, workers), dtype=np.int64).reshape(
        trials, -1
    )
    parameters = {"kind": kind, "d": d, "lambda": lam, "count": count}
    logger.info(
        "Intersections counted", kind=kind, d=d, lam=lam, horizons=horizons, trials=trials
    )
    return {
        horizon: CountDistribution(
            horizon=horizon,
            counts=table[:, column],
            master_seed=master_seed,
            parameters=parameters,
        )
        for column, horizon in enumerate(horizons)
    }


def intersection_stats(
    kind: WalkKind,
    d: int,
    lam: float,
    horizon: int,
    trials: int,
    starts: tuple[LatticePoint, LatticePoint] | None = None,
    master_seed: int = RunDefaults.SEED,
    count: CountKind = "range",
    workers: int = RunDefaults.WORKERS,
) -> CountDistribution:
    return intersection_profile(
        kind, d, lam, horizon, trials, starts, master_seed, count, workers
    )[horizon]


def _collision_trial(
    trial: int,
    *,
    lam: float,
    starts: tuple[tuple[int, ...], ...],
    horizon: int,
    master_seed: int,
) -> np.ndarray:
    """times[j] = first time two of the walkers 0..j share a visited site."""
    paths = [
        _walk_points(
            "biased",
            np.asarray(start, dtype=np.int64),
            lam,
            horizon,
            trial_generator(master_seed, trial, walker),
        )
        for walker, start in enumerate(starts)
    ]
    times = np.full(len(paths), NO_COLLISION, dtype=np.int64)
    seen_sites = np.empty(0, dtype=np.int64)
    seen_first = np.empty(0, dtype=np.int64)
    collision = NO_COLLISION

    for walker, ids in enumerate(_site_ids(paths)):
        sites, first = _first_visits(ids)
        _, ia, ib = np.intersect1d(sites, seen_sites, assume_unique=True, return_indices=True)
        if ia.size:
            collision = min(collision, int(np.maximum(first[ia], seen_first[ib]).min()))
        times[walker] = collision

        merged_sites = np.concatenate([seen_sites, sites])
        merged_first = np.concatenate([seen_first, first])
        order = np.lexsort((merged_first, merged_sites))
        seen_sites, keep = np.unique(merged_sites[order], return_index=True)
        seen_first = merged_first[order][keep]

    return times


def alpha_table(
    d: int,
    lam: float,
    starts: Sequence[LatticePoint],
    horizons: int | Sequence[int],
    trials: int,
    master_seed: int = RunDefaults.SEED,
    workers: int = RunDefaults.WORKERS,
) -> dict[int, dict[int, EstimatorReport]]:
    """α for the first k starts, k = 1..len(starts), at every horizon, from shared trials.

    A trial contributes 1 at horizon H when no two of the walkers have a common
    site that both reached by time H. Each trial records its first collision
    time per prefix, so the estimate is nonincreasing in H by construction.
    """
    d = require_dimension(d)
    lam = require_lambda(lam)
    lattice = Lattice(d)
    starts = [lattice.require(s) for s in starts]
    if not starts:
        raise DomainError("alpha needs at least one start")
    if len(set(starts)) != len(starts):
        raise DomainError("alpha starts must be distinct", starts=[str(s) for s in starts])
    if trials < 1:
        raise DomainError(f"trials must be positive, got {trials}")
    horizons = _horizons(horizons)

    trial = partial(
        _collision_trial,
        lam=lam,
        starts=tuple(s.coords for s in starts),
        horizon=horizons[-1],
        master_seed=master_seed,
    )
    collisions = np.array(run_trials(trial, trials, workers), dtype=np.int64).reshape(
        trials, -1
    )

    table: dict[int, dict[int, EstimatorReport]] = {}
    for k in range(1, len(starts) + 1):
        table[k] = {
            horizon: EstimatorReport.from_samples(
                (collisions[:, k - 1] > horizon).astype(float),
                horizon=horizon,
                master_seed=master_seed,
                parameters={"d": d, "lambda": lam, "k": k},
            )
            for horizon in horizons
        }
    logger.info(
        "Non-intersection probabilities estimated",
        d=d,
        lam=lam,
        k_max=len(starts),
        horizons=horizons,
        trials=trials,
    )
    return table


def alpha_estimate(
    d: int,
    lam: float,
    k: int,
    horizon: int,
    trials: int,
    starts: Sequence[LatticePoint],
    master_seed: int = RunDefaults.SEED,
    workers: int = RunDefaults.WORKERS,
) -> EstimatorReport:
    """Probability that k independent biased walks have pairwise disjoint ranges up to `horizon`."""
    if k < 1:
        raise DomainError(f"k must be positive, got {k}")
    if len(starts) != k:
        raise DomainError(f"expected {k} starts, got {len(starts)}")
    return alpha_table(d, lam, starts, horizon, trials, master_seed, workers)[k][horizon]


def _return_trial(
    trial: int, *, d: int, lam: float, n: int, master_seed: int
) -> float:
    rng = trial_generator(master_seed, trial)
    points = _walk_points("biased", np.zeros(d, dtype=np.int64), lam, n, rng)
    return float(not points[-1].any())


def empirical_return(
    d: int,
    lam: float,
    n: int,
    trials: int,
    master_seed: int = RunDefaults.SEED,
    workers: int = RunDefaults.WORKERS,
) -> EstimatorReport:
    """Fraction of biased walks from o sitting at o at time n."""
    d = require_dimension(d)
    lam = require_lambda(lam, allow_reference=True)
    if n < 0 or n % 2:
        raise DomainError(f"return probabilities need an even n ≥ 0, got {n}", n=n)
    if trials < 1:
        raise DomainError(f"trials must be positive, got {trials}")

    trial = partial(_return_trial, d=d, lam=lam, n=n, master_seed=master_seed)
    samples = np.array(run_trials(trial, trials, workers))
    return EstimatorReport.from_samples(
        samples, horizon=n, master_seed=master_seed, parameters={"d": d, "lambda": lam}
    )
