"""Closed-form parallel volumes for the right-angle Sierpinski gasket.

The gasket K generated by x/2, x/2 + (1/2, 0), x/2 + (0, 1/2) has convex hull
T0 = conv{(0,0), (1,0), (0,1)}. Its complement in T0 is a disjoint union of
open right triangles: at level k there are 3^k holes with legs 2^{-k-1}.
A point of a hole is nearest to the hole's boundary, and the inner parallel
body of a triangle with inradius rho at depth r is the similar triangle
scaled by (1 - r/rho) about the incentre. Hence

    V(r) = P0 r + pi r^2 + sum_k 3^k a_k [1 - (1 - r/rho_k)_+^2],

with a_k = 4^{-k}/8, rho_k = 2^{-k} rho_0. The hole-wise inner region is
split among the sides of the hole by its angle bisectors, which gives the
projective volumes of the four quadrants of [0,1]^2 in closed form.
"""
from __future__ import annotations

import math

import numpy as np

from .contents import VolumeFunction, kappa
from .localmeasure import CellPartition, GriddedMeasure

SQ2 = math.sqrt(2.0)
A0 = 1.0 / 8.0                     # area of the level-0 hole
RHO0 = (1.0 - SQ2 / 2.0) / 2.0     # its inradius
P_HULL = 2.0 + SQ2
COT_22 = 1.0 / math.tan(math.pi / 8)   # cot(22.5 deg)
DIMENSION = math.log(3) / math.log(2)

# sides of the level-0 hole: (length, sum of cot(half angle) at its ends, quadrant)
_HOLE_SIDES = (
    (SQ2 / 2.0, 2.0 * COT_22, 0),   # hypotenuse, part of the lower-left copy
    (0.5, COT_22 + 1.0, 1),         # vertical leg on x = 1/2, lower-right copy
    (0.5, COT_22 + 1.0, 2),         # horizontal leg on y = 1/2, upper-left copy
)


def _hole_sum(r: np.ndarray, deriv: bool = False) -> np.ndarray:
    # sum_k 3^k H_k(r): holes with rho_k <= r are fully covered
    out = np.zeros_like(r)
    for i, ri in enumerate(r):
        if ri <= 0:
            continue
        kstar = 0   # first level whose holes are fully covered
        while RHO0 * 2.0 ** -kstar > ri:
            kstar += 1
        total = 0.0
        for k in range(kstar):
            a, rho = A0 * 4.0 ** -k, RHO0 * 2.0 ** -k
            x = ri / rho
            total += 3.0 ** k * (a * (2 * x - x * x) if not deriv else a * (2 - 2 * x) / rho)
        if not deriv:
            total += 0.5 * 0.75 ** kstar   # sum_{k >= kstar} 3^k a_k
        out[i] = total
    return out


def _h0_side(r: np.ndarray, length: float, cots: float, deriv: bool = False) -> np.ndarray:
    rr = np.minimum(r, RHO0)
    if deriv:
        return np.where(r < RHO0, length - r * cots, 0.0)
    return length * rr - 0.5 * cots * rr ** 2


def _h0(r, deriv=False):
    x = np.minimum(r / RHO0, 1.0)
    if deriv:
        return np.where(r < RHO0, A0 * (2 - 2 * x) / RHO0, 0.0)
    return A0 * (2 * x - x * x)


class RightGasketTubes:
    """Exact V(r), S(r) = V'(r) and quadrant-wise projective versions."""

    dim = 2
    h = 0.0
    eps = 0.0
    dimension = DIMENSION

    def volume(self, r) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, float))
        return P_HULL * r + math.pi * r ** 2 + _hole_sum(r)

    def surface(self, r) -> np.ndarray:
        """H^1 of the boundary of K_r (equal to V'(r))."""
        r = np.atleast_1d(np.asarray(r, float))
        return P_HULL + 2 * math.pi * r + _hole_sum(r, deriv=True)

    def _sub(self, r, deriv):
        # holes of one first-level copy: (all holes - level-0 hole) / 3
        return (_hole_sum(r, deriv) - _h0(r, deriv)) / 3.0

    def quadrant_volumes(self, r, deriv: bool = False) -> np.ndarray:
        """(len(r), 4) projective volumes of the quadrant cells of the level-1 dyadic
        partition of [0,1]^2, in its flat order: lower-left, upper-left,
        lower-right, upper-right. With ``deriv`` the r-derivatives."""
        r = np.atleast_1d(np.asarray(r, float))
        sub = self._sub(r, deriv)
        p = 1.0 if deriv else r
        arc = (lambda c: 2 * c * r) if deriv else (lambda c: c * r ** 2)
        # outer strips go to the quadrant of their foot point, vertex sectors
        # to the quadrant of the vertex
        ll = 0.5 * p + 0.5 * p + arc(math.pi / 4) + sub
        lr = 0.5 * p + (SQ2 / 2) * p + arc(3 * math.pi / 8) + sub
        ul = 0.5 * p + (SQ2 / 2) * p + arc(3 * math.pi / 8) + sub
        cols = [ll, lr, ul]
        for length, cots, quad in _HOLE_SIDES:
            cols[quad] = cols[quad] + _h0_side(r, length, cots, deriv)
        return np.column_stack([cols[0], cols[2], cols[1], np.zeros_like(r)])

    def half_volume(self, r, deriv: bool = False) -> np.ndarray:
        """Projective volume of {anchor x < 1/2}: the lower-left and upper-left cells."""
        q = self.quadrant_volumes(r, deriv)
        return q[:, 0] + q[:, 1]

    def volume_function(self, half: bool = False):
        if half:
            return VolumeFunction(self.half_volume, 2, tag="half:0,0.5")
        return VolumeFunction(self.volume, 2, tag="all")

    def surface_function(self, half: bool = False):
        return (lambda r: self.half_volume(r, True)) if half else self.surface


QUADRANTS = CellPartition.dyadic([0.0, 0.0], [1.0, 1.0], 1)


def quadrant_measure(tubes: RightGasketTubes, r: float, s: float, surface: bool = False) -> GriddedMeasure:
    """Exact local volume (or surface) measure on the quadrant partition at radius r."""
    v = tubes.quadrant_volumes([r], deriv=surface)[0]
    if surface:
        norm = (2 - s) * kappa(2 - s) * r ** (1 - s)
    else:
        norm = kappa(2 - s) * r ** (2 - s)
    return GriddedMeasure(QUADRANTS, v / norm, "projective", "surface" if surface else "volume", r, s)
