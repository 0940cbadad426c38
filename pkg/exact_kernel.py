"""Exact n-step transition probabilities and the diagnostics built on them.

The forward DP runs on the dense cube [−R, R]^d with R = n + |start|_∞. One step
moves a single coordinate by one, so nothing reaches the faces of the cube before
the last step and no mass is ever lost.
"""

import math
from collections import deque
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

import numpy as np
from loguru import logger
from scipy import stats

from config import Budget
from errors import (
    BudgetExceededError,
    DomainError,
    EmptyRegionError,
    require_dimension,
    require_lambda,
)
from lattice import derive_constants, spectral_radius
from models import Lattice, LatticePoint

KernelKind = Literal["biased", "drifted"]

MASS_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class HeatKernel:
    """p^(n)(start, ·) stored on the cube [−radius, radius]^d."""

    kind: KernelKind
    d: int
    lam: float
    n: int
    start: LatticePoint
    radius: int
    array: np.ndarray

    def mass(self, x: LatticePoint) -> float:
        if x.d != self.d:
            raise DomainError(f"point {x} has dimension {x.d}, expected {self.d}")
        if any(abs(c) > self.radius for c in x.coords):
            return 0.0
        return float(self.array[tuple(c + self.radius for c in x.coords)])

    @property
    def total_mass(self) -> float:
        return float(self.array.sum())

    def as_dict(self) -> dict[LatticePoint, float]:
        """Nonzero entries keyed by lattice point."""
        return {
            LatticePoint(tuple(int(i) - self.radius for i in index)): float(
                self.array[tuple(index)]
            )
            for index in np.argwhere(self.array > 0)
        }

    def grid(self) -> np.ndarray:
        """Coordinates of every cell, shape (d, side, ..., side)."""
        side = 2 * self.radius + 1
        return np.indices((side,) * self.d) - self.radius


@dataclass(frozen=True)
class RhoRow:
    n: int
    p2n: float
    root_estimate: float
    corrected_ratio: float
    hk_ratio: float


@dataclass(frozen=True)
class LltReport:
    n: int
    sup_scaled: float
    box_min_scaled: float
    tail_mass: float
    gaussian_peak_scaled: float


def _validate_lambda(kind: str, lam: float) -> float:
    if kind == "biased":
        return require_lambda(lam, allow_reference=True)
    if kind == "drifted":
        return require_lambda(lam)
    raise DomainError(f"unknown walk kind {kind!r}", kind=kind)


def _direction_probabilities(
    kind: KernelKind, d: int, lam: float, radius: int
) -> np.ndarray:
    """probs[2·axis + (0 for +, 1 for −)] = probability of that move from each cell."""
    side = 2 * radius + 1
    probs = np.empty((2 * d,) + (side,) * d)

    if kind == "drifted":
        forward = 1.0 / (d * (1.0 + lam))
        for axis in range(d):
            probs[2 * axis] = forward
            probs[2 * axis + 1] = lam * forward
        return probs

    grid = np.indices((side,) * d) - radius
    nonzero = (grid != 0).sum(axis=0)
    denominator = 2 * d + (lam - 1.0) * nonzero
    for axis in range(d):
        coordinate = grid[axis]
        for offset, sign in enumerate((1, -1)):
            inward = (coordinate != 0) & (np.sign(coordinate) == -sign)
            probs[2 * axis + offset] = np.where(inward, lam, 1.0) / denominator
    return probs


def _step(mass: np.ndarray, probs: np.ndarray) -> np.ndarray:
    d = mass.ndim
    new = np.zeros_like(mass)
    for axis in range(d):
        for offset, sign in enumerate((1, -1)):
            moved = mass * probs[2 * axis + offset]
            source = [slice(None)] * d
            target = [slice(None)] * d
            if sign > 0:
                source[axis], target[axis] = slice(0, -1), slice(1, None)
            else:
                source[axis], target[axis] = slice(1, None), slice(0, -1)
            new[tuple(target)] += moved[tuple(source)]
    return new


def _evolve(
    kind: KernelKind,
    d: int,
    lam: float,
    steps: int,
    start: LatticePoint,
    budget: Budget,
) -> Iterator[tuple[int, int, np.ndarray]]:
    """Yield (t, radius, p^(t)(start, ·)) for t = 0..steps."""
    if steps < 0:
        raise DomainError(f"number of steps must be nonnegative, got {steps}")
    radius = steps + max(abs(c) for c in start.coords)
    side = 2 * radius + 1
    states = side**d
    if states > budget.max_dp_states:
        raise BudgetExceededError(
            f"heat kernel for d={d}, n={steps} needs {states} DP states "
            f"(limit {budget.max_dp_states})",
            d=d,
            n=steps,
            states=states,
        )

    probs = _direction_probabilities(kind, d, lam, radius)
    mass = np.zeros((side,) * d)
    mass[tuple(c + radius for c in start.coords)] = 1.0
    yield 0, radius, mass
    for t in range(1, steps + 1):
        mass = _step(mass, probs)
        yield t, radius, mass


def heat_kernel(
    kind: KernelKind,
    d: int,
    lam: float,
    n: int,
    start: LatticePoint | None = None,
    budget: Budget | None = None,
) -> HeatKernel:
    d = require_dimension(d)
    lam = _validate_lambda(kind, lam)
    start = Lattice(d).require(start) if start is not None else LatticePoint.origin(d)
    budget = budget or Budget()

    [(_, radius, mass)] = deque(_evolve(kind, d, lam, n, start, budget), maxlen=1)

    kernel = HeatKernel(
        kind=kind, d=d, lam=lam, n=n, start=start, radius=radius, array=mass
    )
    logger.debug(
        "Heat kernel computed", kind=kind, d=d, lam=lam, n=n, states=mass.size
    )
    return kernel


def heat_kernel_exact(
    kind: KernelKind,
    d: int,
    lam: Fraction | str | int,
    n: int,
    start: LatticePoint | None = None,
) -> dict[LatticePoint, Fraction]:
    """Exact-rational mode, used to validate the floating-point DP."""
    d = require_dimension(d)
    lam = Fraction(lam)
    _validate_lambda(kind, float(lam))
    if n > Budget.MAX_RATIONAL_STEPS or d > Budget.MAX_RATIONAL_DIMENSION:
        raise BudgetExceededError(
            f"rational mode is limited to n ≤ {Budget.MAX_RATIONAL_STEPS}, "
            f"d ≤ {Budget.MAX_RATIONAL_DIMENSION}; got d={d}, n={n}",
            d=d,
            n=n,
        )
    lattice = Lattice(d)
    start = lattice.require(start) if start is not None else lattice.origin

    forward = 1 / (d * (1 + lam))

    def step_weight(x: LatticePoint, y: LatticePoint) -> Fraction:
        if kind == "drifted":
            return forward if sum(y.coords) > sum(x.coords) else lam * forward
        if x.is_origin:
            return Fraction(1, 2 * d)
        nonzero = sum(1 for c in x.coords if c != 0)
        denominator = 2 * d + (lam - 1) * nonzero
        return (lam if y.norm < x.norm else Fraction(1)) / denominator

    mass: dict[LatticePoint, Fraction] = {start: Fraction(1)}
    for _ in range(n):
        new: dict[LatticePoint, Fraction] = {}
        for x, p in mass.items():
            for y in lattice.neighbors(x):
                new[y] = new.get(y, Fraction(0)) + p * step_weight(x, y)
        mass = new
    return mass


def return_probabilities(
    kind: KernelKind,
    d: int,
    lam: float,
    steps: int,
    budget: Budget | None = None,
) -> np.ndarray:
    """p^(t)(o, o) for t = 0..steps from a single DP pass."""
    d = require_dimension(d)
    lam = _validate_lambda(kind, lam)
    origin = LatticePoint.origin(d)
    values = np.empty(steps + 1)
    for t, radius, mass in _evolve(kind, d, lam, steps, origin, budget or Budget()):
        values[t] = mass[(radius,) * d]
    return values


def rho_diagnostics(
    d: int, lam: float, n_max: int, budget: Budget | None = None
) -> list[RhoRow]:
    if n_max < 2:
        raise DomainError(f"n_max must be at least 2, got {n_max}", n_max=n_max)
    returns = return_probabilities("biased", d, lam, 2 * n_max + 2, budget)
    rho = spectral_radius(lam)
    exponent = 3 * d / 2

    rows = []
    for n in range(1, n_max + 1):
        p2n = float(returns[2 * n])
        rows.append(
            RhoRow(
                n=n,
                p2n=p2n,
                root_estimate=p2n ** (1.0 / (2 * n)),
                corrected_ratio=float(returns[2 * n + 2] / p2n)
                * ((n + 1) / n) ** exponent,
                hk_ratio=p2n * rho ** (-2 * n) * n**exponent,
            )
        )
    logger.info("Spectral radius diagnostics computed", d=d, lam=lam, n_max=n_max)
    return rows


def hk_band(rows: Iterable[RhoRow], n_min: int = 10, n_max: int | None = None) -> float:
    """Measured multiplicative band max/min of hk_ratio over n ∈ [n_min, n_max]."""
    ratios = [
        row.hk_ratio
        for row in rows
        if row.n >= n_min and (n_max is None or row.n <= n_max)
    ]
    if not ratios:
        raise DomainError("no diagnostic rows in the requested range")
    return max(ratios) / min(ratios)


def green_function(
    kind: KernelKind,
    d: int,
    lam: float,
    z: float,
    steps: int,
    budget: Budget | None = None,
) -> float:
    """Truncated Green function Σ_{t ≤ steps} p^(t)(o,o) z^t; converges iff z < 1/ρ."""
    returns = return_probabilities(kind, d, lam, steps, budget)
    return math.fsum(float(p) * z**t for t, p in enumerate(returns))


def _one_dimensional_kernels(lam: float, steps: int) -> np.ndarray:
    """kernels[a, steps + y] = P(a steps of the ±1 walk with up-probability 1/(1+λ) end at y)."""
    up = 1.0 / (1.0 + lam)
    kernels = np.zeros((steps + 1, 2 * steps + 1))
    for a in range(steps + 1):
        ups = np.arange(a + 1)
        kernels[a, steps + 2 * ups - a] = stats.binom.pmf(ups, a, up)
    return kernels


def _allocation_weights(total: int, coordinates: int) -> np.ndarray:
    """weights[m, a] = P(a of m steps land on one given coordinate out of `coordinates`)."""
    counts = np.arange(total + 1)
    return stats.binom.pmf(counts[None, :], counts[:, None], 1.0 / coordinates)


def intersection_table(
    d: int, lam: float, M: int, N: int, budget: Budget | None = None
) -> np.ndarray:
    """table[m, n] = Σ_x p^(m)(o,x) p^(n)(o,x) for the drifted walk.

    Coordinates of the drifted walk are independent once the number of steps
    spent on each coordinate is fixed, and those counts are multinomial. The
    table is built by peeling one coordinate at a time: a of the m steps of
    the first walk and b of the n steps of the second land on the peeled
    coordinate, where the two one-dimensional walks must meet.
    """
    d = require_dimension(d)
    lam = require_lambda(lam)
    budget = budget or Budget()
    if M < 0 or N < 0:
        raise DomainError(f"M and N must be nonnegative, got {M}, {N}")
    cells = (M + 1) * (N + 1)
    if cells > budget.max_pair_cells:
        raise BudgetExceededError(
            f"intersection series for d={d}, n={max(M, N)} needs {cells} cells "
            f"(limit {budget.max_pair_cells})",
            d=d,
            n=max(M, N),
        )

    kernels = _one_dimensional_kernels(lam, max(M, N))
    meet = kernels[: M + 1] @ kernels[: N + 1].T

    table = meet.copy()
    for coordinates in range(2, d + 1):
        weights_m = _allocation_weights(M, coordinates)
        weights_n = _allocation_weights(N, coordinates)
        peeled = np.zeros_like(table)
        for a, b in zip(*np.nonzero(meet)):
            peeled[a:, b:] += (
                meet[a, b]
                * weights_m[a:, a][:, None]
                * weights_n[b:, b][None, :]
                * table[: M + 1 - a, : N + 1 - b]
            )
        table = peeled

    logger.debug("Intersection table computed", d=d, lam=lam, M=M, N=N)
    return table


def expected_intersections(
    d: int, lam: float, M: int, N: int, budget: Budget | None = None
) -> float:
    """Partial sum Σ_{m≤M} Σ_{n≤N} Σ_x p^(m)(o,x) p^(n)(o,x)."""
    return math.fsum(intersection_table(d, lam, M, N, budget).ravel())


def diagonal_increments(
    d: int, lam: float, Ms: Iterable[int], budget: Budget | None = None
) -> dict[int, float]:
    """S(M, M) − S(M−1, M−1) for each requested M."""
    Ms = sorted(set(Ms))
    if not Ms or Ms[0] < 1:
        raise DomainError("increments need M ≥ 1")
    top = Ms[-1]
    table = intersection_table(d, lam, top, top, budget)
    return {
        M: math.fsum(table[M, : M + 1]) + math.fsum(table[:M, M]) for M in Ms
    }


def llt_diagnostics(
    d: int,
    lam: float,
    n: int,
    sigma: float,
    eps: float,
    budget: Budget | None = None,
) -> LltReport:
    """Scaled sup, scaled minimum over R_{n,σ} and tail mass outside Q_n(ε) of p^(n)."""
    if n < 1:
        raise DomainError(f"n must be positive, got {n}", n=n)
    constants = derive_constants(d, lam)
    kernel = heat_kernel("drifted", d, lam, n, budget=budget)
    grid = kernel.grid()
    mass = kernel.array

    centered = np.abs(grid - n * constants.coordinate_drift)
    norms = np.abs(grid).sum(axis=0)
    in_box = (centered <= sigma * math.sqrt(n)).all(axis=0)
    admissible = in_box & ((n + norms) % 2 == 0) & (norms <= n)
    if not admissible.any():
        raise EmptyRegionError(
            f"R_(n,sigma) has no parity-admissible point for n={n}, sigma={sigma}",
            n=n,
            sigma=sigma,
        )
    in_q = (centered < n ** ((1 + eps) / 2)).all(axis=0)

    scale = n ** (d / 2)
    report = LltReport(
        n=n,
        sup_scaled=scale * float(mass.max()),
        box_min_scaled=scale * float(mass[admissible].min()),
        tail_mass=float(mass[~in_q].sum()),
        gaussian_peak_scaled=scale * constants.gaussian_peak(n),
    )
    logger.debug("Local limit diagnostics computed", d=d, lam=lam, n=n)
    return report
