"""Geometry of ℤᵈ, the biased and drifted step kernels, conductances and constants."""

import math
from dataclasses import dataclass

import numpy as np

from errors import DomainError, require_dimension, require_lambda
from models import (
    DegreeProfile,
    KernelConstants,
    Lattice,
    LatticePoint,
    Sign,
    StepDistribution,
)


@dataclass(frozen=True)
class Geometry:
    norm: int
    reflected: LatticePoint
    on_axial: bool
    orthant_signature: tuple[Sign, ...]


def _require_positive_lambda(lam: float) -> float:
    if not lam > 0.0:
        raise DomainError(f"lambda must be positive, got {lam}", lam=lam)
    return float(lam)


def degrees(x: LatticePoint) -> DegreeProfile:
    """Degree split of x by the norm of its neighbors; on ℤᵈ d_minus = #{i : x_i ≠ 0}."""
    d = x.d
    d_minus = sum(1 for c in x.coords if c != 0)
    return DegreeProfile(d_x=2 * d, d_minus=d_minus, d_zero=0, d_plus=2 * d - d_minus)


def transition_probability(x: LatticePoint, y: LatticePoint, lam: float) -> float:
    """p_λ(x, y) for adjacent x, y without building the whole step law."""
    if x.is_origin:
        return 1.0 / (2 * x.d)
    nonzero = sum(1 for c in x.coords if c != 0)
    denominator = 2 * x.d + (lam - 1.0) * nonzero
    return (lam if y.norm < x.norm else 1.0) / denominator


def biased_step(x: LatticePoint, lam: float) -> StepDistribution:
    """One-step law of RW_λ at x."""
    lam = _require_positive_lambda(lam)
    entries = tuple(
        (y, transition_probability(x, y, lam)) for y in Lattice(x.d).neighbors(x)
    )
    return StepDistribution(source=x, entries=entries)


def drifted_step(d: int, lam: float) -> StepDistribution:
    """Step law μ of the drifted walk, as a distribution from the origin."""
    d = require_dimension(d)
    lam = require_lambda(lam)
    lattice = Lattice(d)
    forward = 1.0 / (d * (1.0 + lam))
    backward = lam / (d * (1.0 + lam))
    entries = tuple(
        (lattice.unit(axis, sign), forward if sign > 0 else backward)
        for axis in range(d)
        for sign in (1, -1)
    )
    return StepDistribution(source=lattice.origin, entries=entries)


def geometry(x: LatticePoint) -> Geometry:
    return Geometry(
        norm=x.norm,
        reflected=x.reflected(),
        on_axial=x.is_axial,
        orthant_signature=x.orthant_signature(),
    )


def conductance(endpoint_a: LatticePoint, endpoint_b: LatticePoint, lam: float) -> float:
    """c(e) = λ^(−|e|) with |e| the smaller endpoint norm."""
    lam = _require_positive_lambda(lam)
    if not endpoint_a.is_adjacent(endpoint_b):
        raise DomainError(
            f"{endpoint_a} and {endpoint_b} are not adjacent",
            a=endpoint_a.label(),
            b=endpoint_b.label(),
        )
    return lam ** (-min(endpoint_a.norm, endpoint_b.norm))


def invariant_measure(x: LatticePoint, lam: float) -> float:
    """π(x) = (d_x⁺ + d_x⁻·λ)·λ^(−|x|)."""
    lam = require_lambda(lam, allow_reference=True)
    profile = degrees(x)
    return (profile.d_plus + profile.d_minus * lam) * lam ** (-x.norm)


def detailed_balance_defect(x: LatticePoint, y: LatticePoint, lam: float) -> float:
    """π(x)p(x,y) − π(y)p(y,x) for adjacent x, y."""
    if not x.is_adjacent(y):
        raise DomainError(f"{x} and {y} are not adjacent")
    forward = invariant_measure(x, lam) * biased_step(x, lam).probability(y)
    backward = invariant_measure(y, lam) * biased_step(y, lam).probability(x)
    return forward - backward


def spectral_radius(lam: float) -> float:
    lam = require_lambda(lam, allow_reference=True)
    return 2.0 * math.sqrt(lam) / (1.0 + lam)


def speed(lam: float) -> float:
    lam = require_lambda(lam, allow_reference=True)
    return (1.0 - lam) / (1.0 + lam)


def derive_constants(d: int, lam: float) -> KernelConstants:
    d = require_dimension(d)
    lam = require_lambda(lam)

    coordinate_drift = (1.0 - lam) / (d * (1.0 + lam))
    drift = np.full(d, coordinate_drift)
    covariance = np.eye(d) / d - coordinate_drift**2 * np.ones((d, d))

    return KernelConstants(
        d=d,
        lam=lam,
        rho=spectral_radius(lam),
        speed=speed(lam),
        eta=d * (1.0 + lam) / (d * (1.0 + lam) + 1.0 - lam),
        drift=drift,
        covariance=covariance,
    )
