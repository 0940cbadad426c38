"""Lattice-path combinatorics: Catalan numbers, bridges with k returns, path probabilities."""

import math
from collections.abc import Iterator
from dataclasses import dataclass
from fractions import Fraction
from functools import cache
from typing import Literal

import numpy as np
from loguru import logger

from config import Budget
from errors import BudgetExceededError, DomainError, require_lambda
from lattice import transition_probability
from models import Lattice, LatticePoint

CountMode = Literal["brute", "excursion"]

# Sign patterns evaluated per numpy batch in brute mode
BRUTE_SHARD = 1 << 16


@dataclass(frozen=True)
class OneDimPath:
    """A ±1 path on ℤ started at 0."""

    steps: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(step not in (1, -1) for step in self.steps):
            raise DomainError("one-dimensional path steps must be ±1")

    @property
    def values(self) -> tuple[int, ...]:
        return (0, *np.cumsum(self.steps, dtype=np.int64).tolist())

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def returns(self) -> int:
        """Visits to 0 after time 0."""
        return sum(1 for v in self.values[1:] if v == 0)

    @property
    def is_bridge(self) -> bool:
        return sum(self.steps) == 0


@dataclass(frozen=True)
class LatticePath:
    vertices: tuple[LatticePoint, ...]

    def __post_init__(self) -> None:
        if not self.vertices:
            raise DomainError("a lattice path needs at least one vertex")
        lattice = Lattice(self.vertices[0].d)
        for a, b in zip(self.vertices, self.vertices[1:]):
            lattice.require(b)
            if not a.is_adjacent(b):
                raise DomainError(
                    f"consecutive vertices {a} and {b} are not adjacent",
                    a=a.label(),
                    b=b.label(),
                )

    @classmethod
    def of(cls, *points: tuple[int, ...]) -> "LatticePath":
        return cls(tuple(LatticePoint(p) for p in points))

    @property
    def d(self) -> int:
        return self.vertices[0].d

    def __len__(self) -> int:
        """Number of steps."""
        return len(self.vertices) - 1

    @property
    def is_closed(self) -> bool:
        return self.vertices[0] == self.vertices[-1]

    @property
    def hits(self) -> int:
        """n(γ): positions γ_1..γ_L lying on the axial set."""
        return sum(1 for x in self.vertices[1:] if x.is_axial)


@dataclass(frozen=True)
class PathProbability:
    probability: float
    hits: int
    projected_hits: tuple[int, ...]


def catalan(ell: int) -> int:
    if ell < 0:
        raise DomainError(f"Catalan index must be nonnegative, got {ell}")
    return math.comb(2 * ell, ell) // (ell + 1)


def catalan_sequence(L: int) -> list[int]:
    """C_0..C_L from C_{ℓ+1} = Σ C_i C_{ℓ−i}."""
    if L < 0:
        raise DomainError(f"L must be nonnegative, got {L}")
    values = [1]
    for ell in range(L):
        values.append(sum(values[i] * values[ell - i] for i in range(ell + 1)))
    return values


def catalan_tail(L: int) -> float:
    """Partial sum Σ_{ℓ=0}^{L} C_ℓ / 4^(ℓ+1), which increases to 1/2."""
    if L < 0:
        raise DomainError(f"L must be nonnegative, got {L}")
    total = sum(
        (Fraction(c, 4 ** (ell + 1)) for ell, c in enumerate(catalan_sequence(L))),
        Fraction(0),
    )
    return float(total)


@cache
def _composition_table(n_max: int) -> tuple[tuple[int, ...], ...]:
    """table[k][n] = Σ over compositions n = n_1+…+n_k of Π C_{n_i − 1}."""
    excursions = [0] + [catalan(m - 1) for m in range(1, n_max + 1)]
    table = [[1] + [0] * n_max]
    for _ in range(n_max):
        previous = table[-1]
        row = [0] * (n_max + 1)
        k = len(table)
        for n in range(k, n_max + 1):
            row[n] = sum(
                excursions[m] * previous[n - m] for m in range(1, n - k + 2)
            )
        table.append(row)
    return tuple(tuple(row) for row in table)


@cache
def _brute_return_histogram(n: int) -> tuple[int, ...]:
    """Bridges of length 2n grouped by their number of returns to 0."""
    if n == 0:
        return (1,)
    length = 2 * n
    total = 1 << length
    shard = min(total, BRUTE_SHARD)
    bits = np.arange(length, dtype=np.int64)
    histogram = np.zeros(n + 1, dtype=np.int64)
    for base in range(0, total, shard):
        patterns = np.arange(base, base + shard, dtype=np.int64)
        steps = ((patterns[:, None] >> bits) & 1) * 2 - 1
        walks = np.cumsum(steps, axis=1)
        bridges = walks[walks[:, -1] == 0]
        histogram += np.bincount((bridges == 0).sum(axis=1), minlength=n + 1)
    logger.debug("Enumerated sign patterns", n=n, patterns=total)
    return tuple(int(v) for v in histogram)


def count_bnk(
    n: int, k: int, mode: CountMode = "excursion", budget: Budget | None = None
) -> int:
    """|B_{n,k}|: length-2n bridges with exactly k returns to 0 at times 1..2n."""
    if n < 0 or not 0 <= k <= n:
        raise DomainError(f"need 0 ≤ k ≤ n, got n={n}, k={k}", n=n, k=k)
    if mode == "brute":
        budget = budget or Budget()
        if n > budget.max_brute_n:
            raise BudgetExceededError(
                f"brute enumeration of 4^{n} paths exceeds n ≤ {budget.max_brute_n}",
                n=n,
            )
        return _brute_return_histogram(n)[k]
    if mode == "excursion":
        # Tables are built for powers of two so sweeps over n share one table
        size = max(16, 1 << (n - 1).bit_length())
        return 2**k * _composition_table(size)[k][n]
    raise DomainError(f"unknown counting mode {mode!r}", mode=mode)


def bridge_count_closed_form(n: int, k: int) -> int:
    """2^k · k/(2n−k) · C(2n−k, n)."""
    if n < 0 or not 0 <= k <= n:
        raise DomainError(f"need 0 ≤ k ≤ n, got n={n}, k={k}", n=n, k=k)
    if k == 0:
        return 1 if n == 0 else 0
    return 2**k * k * math.comb(2 * n - k, n) // (2 * n - k)


def bound_ratio(count: int, n: int, k: int) -> float:
    return count / 4**n * n**1.5 / k**2.5


def bnk_bound_report(n_max: int, mode: CountMode = "excursion") -> float:
    """Smallest c with |B_{n,k}| ≤ c k^(5/2) 4^n / n^(3/2) for all 1 ≤ k ≤ n ≤ n_max."""
    if n_max < 1:
        raise DomainError(f"n_max must be positive, got {n_max}")
    c_min = max(
        bound_ratio(count_bnk(n, k, mode), n, k)
        for n in range(1, n_max + 1)
        for k in range(1, n + 1)
    )
    logger.info("Bridge bound constant measured", n_max=n_max, mode=mode, c_min=c_min)
    return c_min


def bnk_bound_holds(c: float, n_max: int, mode: CountMode = "excursion") -> bool:
    return all(
        bound_ratio(count_bnk(n, k, mode), n, k) <= c
        for n in range(1, n_max + 1)
        for k in range(1, n + 1)
    )


def projection(path: LatticePath, axis: int) -> OneDimPath:
    """γ_i: the moves of coordinate `axis`, null moves deleted."""
    if not 0 <= axis < path.d:
        raise DomainError(f"axis {axis} out of range for d={path.d}")
    steps = []
    for a, b in zip(path.vertices, path.vertices[1:]):
        move = b.coords[axis] - a.coords[axis]
        if move:
            steps.append(move)
    return OneDimPath(tuple(steps))


def path_probability(path: LatticePath, lam: float) -> PathProbability:
    """Probability that RW_λ started at o follows `path`, with n(γ) and n(γ_i)."""
    lam = require_lambda(lam, allow_reference=True)
    if not path.vertices[0].is_origin:
        raise DomainError(f"path must start at the origin, starts at {path.vertices[0]}")

    probability = 1.0
    for a, b in zip(path.vertices, path.vertices[1:]):
        probability *= transition_probability(a, b, lam)

    return PathProbability(
        probability=probability,
        hits=path.hits,
        projected_hits=tuple(projection(path, i).returns for i in range(path.d)),
    )


def eta_bound(path: LatticePath, lam: float) -> float:
    """η^(Σ n(γ_i)) · (√λ / (d(1+λ)))^(2n), an upper bound for closed paths of length 2n."""
    lam = require_lambda(lam)
    if not path.is_closed or len(path) % 2:
        raise DomainError("the η bound is stated for closed paths of even length")
    d = path.d
    eta = d * (1.0 + lam) / (d * (1.0 + lam) + 1.0 - lam)
    exponent = sum(projection(path, i).returns for i in range(d))
    return eta**exponent * (math.sqrt(lam) / (d * (1.0 + lam))) ** len(path)


def closed_paths(d: int, n: int) -> Iterator[LatticePath]:
    """Every closed path of length 2n from o, via depth-first search pruned by distance."""
    lattice = Lattice(d)
    if n < 0:
        raise DomainError(f"n must be nonnegative, got {n}")
    length = 2 * n
    trail = [lattice.origin]

    def extend(remaining: int) -> Iterator[LatticePath]:
        if remaining == 0:
            yield LatticePath(tuple(trail))
            return
        for y in lattice.neighbors(trail[-1]):
            if y.norm <= remaining - 1:
                trail.append(y)
                yield from extend(remaining - 1)
                trail.pop()

    yield from extend(length)
