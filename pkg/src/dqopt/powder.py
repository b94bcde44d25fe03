"""Crystallite orientation sets for powder averaging.

The workhorse is the ZCW low-discrepancy set on the hemisphere for
(alpha, beta), crossed with a small uniform gamma grid.  Gamma is the
angle the spinning phase composes with (see spincore), and the sevenfold
sequences are gamma-encoded, so very few gamma points suffice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spincore import Orientation

TWO_PI = 2.0 * math.pi

# ZCW orientation counts and their lattice generators (Fibonacci pairs)
ZCW_SETS = {21: 8, 34: 13, 55: 21, 89: 34, 144: 55,
            233: 89, 377: 144, 610: 233, 987: 377}


@dataclass(frozen=True, eq=False)
class PowderScheme:
    """Named crystallite set with normalised weights."""

    name: str
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        n = len(self.alpha)
        if n < 1:
            raise ValueError("powder scheme must contain at least one orientation")
        if not (len(self.beta) == len(self.gamma) == len(self.weights) == n):
            raise ValueError("powder scheme arrays must have equal lengths")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("powder weights must sum to 1")

    def __len__(self):
        return len(self.alpha)

    def orientations(self):
        return [Orientation(a % TWO_PI, b, g % TWO_PI)
                for a, b, g in zip(self.alpha, self.beta, self.gamma)]


def zcw_hemisphere(n_orientations: int):
    """Published ZCW (alpha, beta) set on the upper hemisphere.

    ``n_orientations`` must be one of the tabulated ZCW counts.
    """
    if n_orientations not in ZCW_SETS:
        raise ValueError(
            f"ZCW set size must be one of {sorted(ZCW_SETS)}, got {n_orientations}")
    g = ZCW_SETS[n_orientations]
    j = np.arange(n_orientations)
    alpha = TWO_PI * ((j * g / n_orientations) % 1.0)
    beta = np.arccos(1.0 - (j / n_orientations))  # uniform in cos(beta)
    return alpha, beta


def zcw_gamma_scheme(ab_points: int, gamma_points: int) -> PowderScheme:
    """ZCW (alpha, beta) hemisphere crossed with a uniform gamma grid."""
    if gamma_points < 1:
        raise ValueError(f"gamma_points must be >= 1, got {gamma_points}")
    a, b = zcw_hemisphere(ab_points)
    gammas = TWO_PI * np.arange(gamma_points) / gamma_points
    alpha = np.repeat(a, gamma_points)
    beta = np.repeat(b, gamma_points)
    gamma = np.tile(gammas, ab_points)
    n = ab_points * gamma_points
    return PowderScheme(
        name=f"zcw{ab_points}x{gamma_points}",
        alpha=alpha, beta=beta, gamma=gamma,
        weights=np.full(n, 1.0 / n),
    )


def single_orientation(alpha: float, beta: float, gamma: float) -> PowderScheme:
    """One-crystallite scheme, mainly for tests and debugging."""
    return PowderScheme(
        name="single",
        alpha=np.array([alpha]), beta=np.array([beta]), gamma=np.array([gamma]),
        weights=np.array([1.0]),
    )


def next_larger_scheme(scheme: PowderScheme) -> PowderScheme:
    """A finer scheme for convergence checks: next ZCW set, doubled gamma."""
    if not scheme.name.startswith("zcw"):
        raise ValueError(f"cannot refine non-ZCW scheme {scheme.name!r}")
    ab, ng = (int(x) for x in scheme.name[3:].split("x"))
    larger = [n for n in sorted(ZCW_SETS) if n > ab]
    if not larger:
        raise ValueError(f"no ZCW set larger than {ab} is tabulated")
    return zcw_gamma_scheme(larger[0], 2 * ng)


def default_scheme() -> PowderScheme:
    """Production default: 144 (alpha, beta) points times 8 gamma angles."""
    return zcw_gamma_scheme(144, 8)
