"""Exact parallel volumes and boundary counts for self-similar subsets of the line.

For a compact null set K with convex hull [a, b], every point of the
complement inside the hull lies in a gap. A gap of length g contributes
min(g, 2r) to the r-parallel volume, so

    V(r) = 2r + sum_gaps min(g, 2r),     #boundary(K_r) = 2 + 2 #{g > 2r}.

For an IFS satisfying the strong separation condition the gaps are the images
S_w(G_j) of the first-level gaps, so the sum is organised by ratio classes with
multinomial multiplicities. Gaps shorter than a floor are never listed: their
total length is tracked exactly through the frontier of the address tree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import GeometryError
from .setspec import IFSAttractor


@dataclass(frozen=True)
class GapTable:
    lengths: np.ndarray   # ascending
    mult: np.ndarray      # multiplicity per length
    suffix_count: np.ndarray  # number of gaps with index >= i
    prefix_len: np.ndarray    # total length of gaps with index < i
    floor_total: float    # total length of gaps shorter than the floor
    floor: float

    def gap_sum(self, r) -> np.ndarray:
        """sum_g min(g, 2r) over all gaps of K."""
        r = np.asarray(r, dtype=float)
        if np.any(2 * r < self.floor * (1 - 1e-12)):
            raise ValueError(f"radius below table floor {self.floor / 2:.3g}")
        i = np.searchsorted(self.lengths, 2 * r, side="right")
        return 2 * r * self.suffix_count[i] + self.prefix_len[i] + self.floor_total

    def count_above(self, r) -> np.ndarray:
        """#{g > 2r}."""
        r = np.asarray(r, dtype=float)
        if np.any(2 * r < self.floor * (1 - 1e-12)):
            raise ValueError(f"radius below table floor {self.floor / 2:.3g}")
        i = np.searchsorted(self.lengths, 2 * r, side="right")
        return self.suffix_count[i]


@dataclass(frozen=True)
class LocalPlan:
    """r-independent description of pi_K^{-1}(Q) for an interval Q.

    ``ends``: hull endpoints inside Q (0, 1 or 2); ``gaps``: (length, number of
    endpoints in Q) for listed gaps; ``nodes``: scale factors of subtrees lying
    entirely inside Q."""

    ends: int
    gap_len: np.ndarray
    gap_ends: np.ndarray
    node_scale: np.ndarray


class SelfSimilarIntervals:
    """Exact oracle for a strongly separated self-similar set in R.

    Parameters
    ----------
    ratios, translations, signs:
        maps x -> sign_i * ratio_i * x + translation_i.
    r_min:
        smallest radius that will be queried.
    """

    def __init__(self, ratios: Sequence[float], translations: Sequence[float],
                 signs: Sequence[int] | None = None, r_min: float = 1e-13):
        self.ratios = np.asarray(ratios, dtype=float)
        self.translations = np.asarray(translations, dtype=float)
        self.signs = np.ones(len(self.ratios)) if signs is None else np.asarray(signs, dtype=float)
        if len(self.ratios) < 1 or np.any((self.ratios <= 0) | (self.ratios >= 1)):
            raise GeometryError("ratios must lie in (0, 1)")
        if self.ratios.sum() >= 1.0:
            raise GeometryError("sum of ratios must be < 1 for a null attractor")
        self.a, self.b = self._hull()
        self.L = self.b - self.a
        self._order, self.gaps = self._first_level()
        self.r_min = float(r_min)
        self.table = self._build_table(2.0 * self.r_min)

    @classmethod
    def from_spec(cls, spec: IFSAttractor, r_min: float = 1e-13) -> "SelfSimilarIntervals":
        if spec.dim != 1:
            raise GeometryError("interval oracle needs a 1D IFS")
        return cls([m.ratio for m in spec.maps], [float(m.translation[0]) for m in spec.maps],
                   [int(np.sign(m.rotation[0, 0])) for m in spec.maps], r_min=r_min)

    # -- construction -------------------------------------------------------

    def _map(self, i, x):
        return self.signs[i] * self.ratios[i] * x + self.translations[i]

    def _hull(self):
        # Hutchinson iteration on intervals converges geometrically to the hull
        fp = self.translations / (1 - self.signs * self.ratios)
        a, b = float(fp.min()), float(fp.max())
        R = max(b - a, 1.0)
        a, b = a - R / (1 - self.ratios.max()), b + R / (1 - self.ratios.max())
        for _ in range(4000):
            ends = np.concatenate([self._map(i, np.array([a, b])) for i in range(len(self.ratios))])
            na, nb = float(ends.min()), float(ends.max())
            if na == a and nb == b:
                break
            a, b = na, nb
        return a, b

    def _first_level(self):
        lo = np.array([min(self._map(i, self.a), self._map(i, self.b)) for i in range(len(self.ratios))])
        hi = np.array([max(self._map(i, self.a), self._map(i, self.b)) for i in range(len(self.ratios))])
        order = np.argsort(lo)
        g = lo[order][1:] - hi[order][:-1]
        if np.any(g < -1e-12 * self.L):
            raise GeometryError("first-level images overlap; strong separation fails")
        return order, np.clip(g, 0.0, None)

    def _build_table(self, floor: float) -> GapTable:
        classes, counts = np.unique(self.ratios, return_counts=True)
        m = len(classes)
        gmax = float(self.gaps.max()) if self.gaps.size else 0.0
        lengths: list[float] = []
        mults: list[float] = []
        frontier = 0.0
        # breadth-first over compositions k (number of uses of each ratio class)
        seen = {tuple([0] * m)}
        queue = [tuple([0] * m)]
        while queue:
            k = queue.pop()
            n = sum(k)
            mult = math.factorial(n)
            for kj in k:
                mult //= math.factorial(kj)
            for cj, kj in zip(counts, k):
                mult *= int(cj) ** kj
            rw = float(np.prod(classes ** np.array(k)))
            for g in self.gaps:
                if g > 0:
                    lengths.append(rw * g)
                    mults.append(float(mult))
            for j in range(m):
                child = list(k)
                child[j] += 1
                child = tuple(child)
                rc = rw * classes[j]
                if rc * gmax > floor:
                    if child not in seen:
                        seen.add(child)
                        queue.append(child)
                else:
                    frontier += float(mult * int(counts[j])) * rc * self.L
        lengths = np.asarray(lengths)
        mults = np.asarray(mults)
        order = np.argsort(lengths, kind="stable")
        lengths, mults = lengths[order], mults[order]
        # lengths at or below the floor are folded into the exact frontier total
        small = lengths <= floor
        frontier += float(np.sum(lengths[small] * mults[small]))
        lengths, mults = lengths[~small], mults[~small]
        suffix = np.concatenate([np.cumsum(mults[::-1])[::-1], [0.0]])
        prefix = np.concatenate([[0.0], np.cumsum(lengths * mults)])
        return GapTable(lengths, mults, suffix, prefix, frontier, floor)

    # -- global quantities ----------------------------------------------------

    def volume(self, r) -> np.ndarray:
        """lambda_1(K_r)."""
        r = np.asarray(r, dtype=float)
        return 2 * r + self.table.gap_sum(r)

    def boundary_count(self, r) -> np.ndarray:
        """H^0(boundary of K_r) (gaps of length exactly 2r excluded)."""
        return 2.0 + 2.0 * self.table.count_above(r)

    def distance(self, x: np.ndarray, max_depth: int = 200) -> np.ndarray:
        """Exact distance to K by descending the address tree."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        for n, xi in enumerate(x):
            out[n] = self._dist1(xi, max_depth)
        return out

    def _dist1(self, x, max_depth):
        lo, hi = self.a, self.b
        sign, scale, shift = 1.0, 1.0, 0.0  # current node map: y -> sign*scale*y + shift
        if x <= lo:
            return lo - x
        if x >= hi:
            return x - hi
        for _ in range(max_depth):
            best = None
            for i in self._order:
                s = sign * self.signs[i]
                sc = scale * self.ratios[i]
                sh = sign * scale * self.translations[i] + shift
                e = sorted((s * sc * self.a + sh, s * sc * self.b + sh))
                if e[0] <= x <= e[1]:
                    best = (s, sc, sh, e)
                    break
            if best is None:
                # x lies in a gap of the current node: nearest endpoint
                ends = []
                for i in self._order:
                    s = sign * self.signs[i]
                    sc = scale * self.ratios[i]
                    sh = sign * scale * self.translations[i] + shift
                    ends += [s * sc * self.a + sh, s * sc * self.b + sh]
                return float(np.min(np.abs(np.asarray(ends) - x)))
            sign, scale, shift, e = best
            if e[1] - e[0] <= 1e-300:
                return 0.0
        return 0.0

    # -- local quantities ---------------------------------------------------

    def local_plan(self, lo: float, hi: float, closed_hi: bool = False,
                   min_scale: float = 1e-17) -> LocalPlan:
        """Decompose pi_K^{-1}([lo, hi)) into listed gaps and whole subtrees.

        Subtrees smaller than ``min_scale * L`` straddling an edge of Q are
        assigned wholly to the cell containing their midpoint, so plans for a
        partition of the line stay additive."""

        def inside(x):
            return (lo <= x <= hi) if closed_hi else (lo <= x < hi)

        ends = int(inside(self.a)) + int(inside(self.b))
        gl: list[float] = []
        ge: list[int] = []
        nodes: list[float] = []
        # stack of nodes (sign, scale, shift)
        stack = [(1.0, 1.0, 0.0)]
        while stack:
            sign, scale, shift = stack.pop()
            e0 = sign * scale * self.a + shift
            e1 = sign * scale * self.b + shift
            nlo, nhi = min(e0, e1), max(e0, e1)
            if inside(nlo) and inside(nhi):
                nodes.append(scale)
                continue
            if nhi < lo or nlo > hi or (not closed_hi and nlo >= hi):
                continue
            if scale * self.L < min_scale * self.L:
                if inside(0.5 * (nlo + nhi)):
                    nodes.append(scale)
                continue
            # listed gaps of this node: image of each first-level gap
            for j in range(len(self.gaps)):
                if self.gaps[j] <= 0:
                    continue
                i0, i1 = self._order[j], self._order[j + 1]
                u0 = max(self._map(i0, self.a), self._map(i0, self.b))
                v0 = min(self._map(i1, self.a), self._map(i1, self.b))
                u, v = sign * scale * u0 + shift, sign * scale * v0 + shift
                k = int(inside(u)) + int(inside(v))
                if k:
                    gl.append(scale * self.gaps[j])
                    ge.append(k)
            for i in self._order:
                stack.append((sign * self.signs[i], scale * self.ratios[i],
                              sign * scale * self.translations[i] + shift))
        return LocalPlan(ends, np.asarray(gl), np.asarray(ge, dtype=float), np.sort(np.asarray(nodes)))

    def local_volume(self, plan: LocalPlan, r) -> np.ndarray:
        """lambda_1(K_r intersected with pi_K^{-1}(Q)) for the plan of Q."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = plan.ends * r
        if plan.gap_len.size:
            out = out + np.sum(plan.gap_ends[None, :] * np.minimum(r[:, None], plan.gap_len[None, :] / 2), axis=1)
        for w in plan.node_scale:
            out = out + w * self.table.gap_sum(np.maximum(r / w, self.r_min))
        return out

    def local_count(self, plan: LocalPlan, r) -> np.ndarray:
        """Number of boundary points of K_r whose projection lies in Q."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = plan.ends * np.ones_like(r)
        if plan.gap_len.size:
            out = out + np.sum(plan.gap_ends[None, :] * (plan.gap_len[None, :] > 2 * r[:, None]), axis=1)
        for w in plan.node_scale:
            out = out + 2.0 * self.table.count_above(np.maximum(r / w, self.r_min))
        return out

    # -- brute force cross-check ---------------------------------------------

    def level_endpoints(self, depth: int) -> np.ndarray:
        """Endpoints of the depth-n cylinder intervals (all points of K), sorted."""
        lo = np.array([self.a])
        hi = np.array([self.b])
        for _ in range(depth):
            nlo, nhi = [], []
            for i in range(len(self.ratios)):
                p, q = self._map(i, lo), self._map(i, hi)
                nlo.append(np.minimum(p, q))
                nhi.append(np.maximum(p, q))
            lo, hi = np.concatenate(nlo), np.concatenate(nhi)
        order = np.argsort(lo)
        return np.column_stack([lo[order], hi[order]])


def merged_volume(points: np.ndarray, r: float) -> float:
    """Length of the union of (p - r, p + r) over sorted points ``points``."""
    p = np.sort(np.ravel(points))
    gaps = np.diff(p)
    return float(2 * r + np.sum(np.minimum(gaps, 2 * r)))


def bracket_volume(oracle: SelfSimilarIntervals, depth: int, r: float) -> tuple[float, float]:
    """Lower/upper bounds on lambda_1(K_r) from the depth-n cylinder endpoints.

    Endpoints E lie in K and every point of K is within delta of E, delta the
    largest half cylinder length, so V_E(r) <= V_K(r) <= V_E(r + delta)."""
    iv = oracle.level_endpoints(depth)
    pts = iv.ravel()
    delta = 0.5 * float(np.max(iv[:, 1] - iv[:, 0]))
    return merged_volume(pts, r), merged_volume(pts, r + delta)
