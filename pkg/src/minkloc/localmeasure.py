"""Local Minkowski / S measures on cell partitions, their averages, and flat distances.

For a partition {Q_j} the rescaled volume measure assigns to Q_j

    spatial:     lambda_d(A_r cap Q_j) / (kappa_{d-s} r^{d-s})
    projective:  lambda_d(A_r cap pi_A^{-1}(Q_j)) / (kappa_{d-s} r^{d-s})

and the surface measure uses the boundary of A_r with the normalizer
(d-s) kappa_{d-s} r^{d-1-s}. Projective surface masses come from the mean of
the one-sided derivatives of the per-cell volume functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .contents import kappa, Q_DEFAULT
from .distfield import DistanceField, Region, _edge_layer, contour_length_by_cell, richardson
from .errors import EstimationError, GeometryError, MarginError
from .interval import SelfSimilarIntervals
from .setspec import IFSAttractor, natural_measure

#: Flat-distance threshold for a converged family.
DELTA_CONV = 0.05


# --------------------------------------------------------------------------
# partitions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CellPartition:
    """Product partition of a box by per-axis edge sequences; cells are half-open."""

    edges: tuple[np.ndarray, ...]
    id: str = "partition"

    @classmethod
    def dyadic(cls, lo: Sequence[float], hi: Sequence[float], level: int, offset: float = 0.0) -> "CellPartition":
        """2^level cells per axis of edge (hi - lo)/2^level, shifted by ``offset`` cells.

        A nonzero offset adds one cell per axis so the box stays covered; the
        outermost edges are clipped to the box."""
        lo, hi = np.atleast_1d(np.asarray(lo, float)), np.atleast_1d(np.asarray(hi, float))
        n = 2 ** level
        edges = []
        for a, b in zip(lo, hi):
            w = (b - a) / n
            if offset:
                e = a + w * (np.arange(n + 2) - offset)
                e[0], e[-1] = a, b
                e = e[(e >= a) & (e <= b)]
                e = np.unique(np.concatenate([[a], e, [b]]))
            else:
                e = a + w * np.arange(n + 1)
                e[-1] = b
            edges.append(e)
        return cls(tuple(edges), f"dyadic{level}{'+off' + repr(offset) if offset else ''}")

    @classmethod
    def from_window(cls, window, level: int, offset: float = 0.0) -> "CellPartition":
        return cls.dyadic(window.lo, window.hi, level, offset)

    @classmethod
    def cell_aligned(cls, window, n: int) -> "CellPartition":
        """n cells per axis with edges on grid-cell faces (halfway between cell centres).

        No anchor at a cell centre lies on an edge, so whole-cell motions of
        the window map partition cells onto partition cells exactly."""
        edges = []
        for k, m in enumerate(window.shape):
            if m % n:
                raise GeometryError(f"axis {k}: {m} grid cells do not split into {n} parts")
            face0 = window.origin[k] - window.h / 2
            edges.append(face0 + window.h * np.arange(0, m + 1, m // n, dtype=float))
        return cls(tuple(edges), f"aligned{n}")

    @classmethod
    def from_edges(cls, *edges: Sequence[float], id: str = "custom") -> "CellPartition":
        return cls(tuple(np.asarray(e, float) for e in edges), id)

    @property
    def dim(self) -> int:
        return len(self.edges)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(e) - 1 for e in self.edges)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Flat cell index per point; -1 outside. The last edge is closed."""
        p = np.atleast_2d(np.asarray(points, float))
        if p.shape[1] != self.dim and self.dim == 1:
            p = p.reshape(-1, 1)
        idx = []
        ok = np.ones(len(p), dtype=bool)
        for k, e in enumerate(self.edges):
            i = np.searchsorted(e, p[:, k], side="right") - 1
            i = np.where(p[:, k] == e[-1], len(e) - 2, i)
            ok &= (i >= 0) & (i < len(e) - 1)
            idx.append(np.clip(i, 0, len(e) - 2))
        flat = np.ravel_multi_index(tuple(idx), self.shape)
        return np.where(ok, flat, -1)

    def centers(self) -> np.ndarray:
        mids = [0.5 * (e[1:] + e[:-1]) for e in self.edges]
        grids = np.meshgrid(*mids, indexing="ij")
        return np.column_stack([g.ravel() for g in grids])

    def bounds(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        idx = np.unravel_index(j, self.shape)
        lo = np.array([e[i] for e, i in zip(self.edges, idx)])
        hi = np.array([e[i + 1] for e, i in zip(self.edges, idx)])
        return lo, hi

    def same_as(self, other: "CellPartition") -> bool:
        return len(self.edges) == len(other.edges) and all(
            np.array_equal(a, b) for a, b in zip(self.edges, other.edges))


@dataclass
class GriddedMeasure:
    partition: CellPartition
    masses: np.ndarray
    mode: str            # "spatial" | "projective"
    source: str          # "volume" | "surface" | "average-volume" | "average-surface" | "reference"
    param: float = float("nan")   # r or t
    s: float = float("nan")
    exo: float = 0.0     # mass carried by exoskeleton cells

    def __post_init__(self):
        if np.any(self.masses < -1e-12 * max(1.0, float(np.abs(self.masses).max(initial=0)))):
            raise GeometryError("negative mass")

    @property
    def total(self) -> float:
        return float(math.fsum(self.masses))

    def restricted_total(self, region: Region) -> float:
        sel = region.contains(self.partition.centers())
        return float(math.fsum(self.masses[sel]))


# --------------------------------------------------------------------------
# volume functions per partition cell (grid fields)
# --------------------------------------------------------------------------


class PartitionedVolume:
    """Per-cell volume functions r -> lambda_d(A_r cap X_j) from one field.

    projective: X_j = pi_A^{-1}(Q_j); exoskeleton cells either split their
    volume between the cells of both anchors (``exo="split"``) or go to a
    separate bucket (``exo="bucket"``). spatial: X_j = Q_j by cell centre."""

    def __init__(self, fld: DistanceField, partition: CellPartition, mode: str = "projective",
                 exo: str = "split"):
        if partition.dim != fld.window.dim:
            raise GeometryError("partition and field dimensions differ")
        if mode not in ("projective", "spatial"):
            raise ValueError("mode must be projective or spatial")
        if exo not in ("split", "bucket"):
            raise ValueError("exo policy must be split or bucket")
        self.h = fld.h
        self.dim = fld.window.dim
        self.eps = fld.eps
        self.partition = partition
        self.mode = mode
        self.exo_policy = exo
        d = fld.dist.ravel()
        n = partition.n_cells
        bucket = n  # index of the exoskeleton bucket
        if mode == "spatial":
            part = partition.locate(fld.window.centers())
            keys, wts, ds = part, np.ones(len(d)), d
        else:
            p1 = partition.locate(fld.anchor)
            ex = fld.exo.ravel()
            if exo == "bucket":
                keys = np.where(ex, bucket, p1)
                wts, ds = np.ones(len(d)), d
            else:
                p2 = partition.locate(fld.second_anchor(np.flatnonzero(ex)))
                keys = np.concatenate([np.where(ex, -2, p1), p1[ex], p2])
                wts = np.concatenate([np.ones(len(d)), np.full(2 * ex.sum(), 0.5)])
                ds = np.concatenate([d, d[ex], d[ex]])
                keep = keys != -2
                keys, wts, ds = keys[keep], wts[keep], ds[keep]
            self.exo_count = int(ex.sum())
        if np.any(keys == -1):
            # volume projecting outside the partition is tracked, not dropped
            keys = np.where(keys == -1, n + 1, keys)
        order = np.lexsort((ds, wts, keys))
        self._keys, self._w, self._d = keys[order], wts[order], ds[order]
        starts = np.flatnonzero(np.r_[True, (self._keys[1:] != self._keys[:-1]) | (self._w[1:] != self._w[:-1])])
        ends = np.r_[starts[1:], len(self._keys)]
        self._segments = [(int(self._keys[a]), float(self._w[a]), a, b) for a, b in zip(starts, ends)]
        edge = _edge_layer(fld.window.shape).ravel()
        self._edge_min = float(d[edge].min())
        self.n_parts = n

    def volumes(self, r: float) -> tuple[np.ndarray, float, float]:
        """(per-cell volumes, exoskeleton-bucket volume, volume outside the partition)."""
        h = self.h
        if r + h / 2 > self._edge_min:
            raise MarginError(f"r={r:.6g} reaches the window edge")
        out = np.zeros(self.n_parts + 2)
        D = self._d
        for key, w, a, b in self._segments:
            seg = D[a:b]
            lo = np.searchsorted(seg, r - h / 2, side="right")
            hi = np.searchsorted(seg, r + h / 2, side="left")
            out[key] += w * (float(lo) + float(np.sum(0.5 + (r - seg[lo:hi]) / h)))
        out *= h ** self.dim
        return out[: self.n_parts], float(out[self.n_parts]), float(out[self.n_parts + 1])

    def volume_matrix(self, radii: Sequence[float]) -> np.ndarray:
        """(len(radii), n_parts + 2) array: per-cell volumes, then bucket, then outside."""
        rows = []
        for r in radii:
            v, e, o = self.volumes(float(r))
            rows.append(np.concatenate([v, [e, o]]))
        return np.array(rows)


def local_volume_measure(fld: DistanceField, r: float, s: float, partition: CellPartition,
                         mode: str = "projective", exo: str = "split",
                         pv: PartitionedVolume | None = None) -> GriddedMeasure:
    pv = PartitionedVolume(fld, partition, mode, exo) if pv is None else pv
    v, e, _ = pv.volumes(r)
    norm = kappa(pv.dim - s) * r ** (pv.dim - s)
    return GriddedMeasure(partition, v / norm, mode, "volume", r, s, e / norm)


def _surface_norm(d, s, r):
    if s >= d:
        return math.inf
    return (d - s) * kappa(d - s) * r ** (d - 1 - s)


def local_surface_measure(fld: DistanceField, r: float, s: float, partition: CellPartition,
                          mode: str = "projective", levels: int = 2, q: float = Q_DEFAULT,
                          exo: str = "split", pv: PartitionedVolume | None = None) -> GriddedMeasure:
    """Projective: per-cell mean of one-sided derivatives of the cell volume
    functions. Spatial: isocontour measure attributed to cells by position."""
    d = fld.window.dim
    norm = _surface_norm(d, s, r)
    if mode == "spatial":
        per = contour_length_by_cell(fld, r)
        part = partition.locate(fld.window.centers())
        keep = part >= 0
        order = np.lexsort((per[keep], part[keep]))
        masses = np.zeros(partition.n_cells)
        pk, vk = part[keep][order], per[keep][order]
        if len(pk):
            starts = np.flatnonzero(np.r_[True, pk[1:] != pk[:-1]])
            masses[pk[starts]] = np.add.reduceat(vk, starts)
        return GriddedMeasure(partition, masses / norm, "spatial", "surface", r, s)
    pv = PartitionedVolume(fld, partition, "projective", exo) if pv is None else pv
    vals = _cellwise_stacho(pv.volume_matrix, r, levels, q)
    vals = np.maximum(vals, 0.0)
    return GriddedMeasure(partition, vals[: pv.n_parts] / norm, "projective", "surface", r, s,
                          float(vals[pv.n_parts]) / norm)


def _cellwise_stacho(matrix_fn, r, levels, q):
    t0 = r * (1 - q)
    steps = np.array([t0 / 2 ** k for k in range(levels + 1)])
    M = matrix_fn(np.concatenate([[r], r - steps, r + steps]))
    v0, vm, vp = M[0], M[1:levels + 2], M[levels + 2:]
    out = np.empty(M.shape[1])
    for j in range(M.shape[1]):
        left = richardson(list((v0[j] - vm[:, j]) / steps), 1, 1)
        right = richardson(list((vp[:, j] - v0[j]) / steps), 1, 1)
        out[j] = 0.5 * (left + right)
    return out


# --------------------------------------------------------------------------
# exact one-dimensional local measures
# --------------------------------------------------------------------------


class ExactLocalVolumes:
    """Per-cell projective volumes of a self-similar subset of R, from local plans."""

    def __init__(self, oracle: SelfSimilarIntervals, partition: CellPartition):
        if partition.dim != 1:
            raise GeometryError("exact local volumes need a 1D partition")
        self.oracle = oracle
        self.partition = partition
        e = partition.edges[0]
        self.plans = [oracle.local_plan(e[j], e[j + 1], closed_hi=(j == len(e) - 2))
                      for j in range(len(e) - 1)]
        outside_lo = oracle.local_plan(-math.inf, e[0]) if oracle.a < e[0] else None
        outside_hi = oracle.local_plan(e[-1], math.inf) if oracle.b > e[-1] else None
        self.outside = [p for p in (outside_lo, outside_hi) if p is not None]
        self.dim = 1
        self.h = 0.0
        self.eps = 0.0

    def volume_matrix(self, radii) -> np.ndarray:
        radii = np.atleast_1d(np.asarray(radii, float))
        cols = [self.oracle.local_volume(p, radii) for p in self.plans]
        out = np.zeros(len(radii))
        for p in self.outside:
            out = out + self.oracle.local_volume(p, radii)
        cols += [np.zeros(len(radii)), out]
        return np.column_stack(cols)

    def counts(self, r: float) -> np.ndarray:
        return np.array([self.oracle.local_count(p, r)[0] for p in self.plans])


def exact_local_volume_measure(lv: ExactLocalVolumes, r: float, s: float) -> GriddedMeasure:
    v = lv.volume_matrix([r])[0, : lv.partition.n_cells]
    return GriddedMeasure(lv.partition, v / (kappa(1 - s) * r ** (1 - s)), "projective", "volume", r, s)


def exact_local_surface_measure(lv: ExactLocalVolumes, r: float, s: float, q: float = Q_DEFAULT,
                                estimator: str = "volume-difference") -> GriddedMeasure:
    """Per-cell surface masses: symmetric volume quotient with step r (1 - q)
    (``volume-difference``) or exact boundary-point counts (``count``)."""
    norm = _surface_norm(1, s, r)
    n = lv.partition.n_cells
    if estimator == "count":
        vals = lv.counts(r)
    else:
        t = r * (1 - q)
        M = lv.volume_matrix([r + t, r - t])
        vals = (M[0, :n] - M[1, :n]) / (2 * t)
    return GriddedMeasure(lv.partition, vals / norm, "projective", "surface", r, s)


# --------------------------------------------------------------------------
# averages and references
# --------------------------------------------------------------------------


def average_local_measure(family: Sequence[GriddedMeasure], source: str | None = None,
                          threshold: float = 0.02) -> list[GriddedMeasure]:
    """Cellwise logarithmic averages (1/log(R/t)) int_t^R m_r dr/r, one per t in the family's radii.

    ``family`` must be indexed by a geometric radius sequence. The returned
    measures carry a ``stable`` list attribute on the last element: cells whose
    average over the last third varies by less than ``threshold``."""
    fam = sorted(family, key=lambda m: -m.param)
    if len(fam) < 3:
        raise EstimationError("need >= 3 family members")
    part = fam[0].partition
    r = np.array([m.param for m in fam])
    M = np.array([m.masses for m in fam])
    E = np.array([m.exo for m in fam])
    x = np.log(r)
    dx = (x[:-1] - x[1:])[:, None]
    cum = np.cumsum(0.5 * (M[1:] + M[:-1]) * dx, axis=0)
    cume = np.cumsum(0.5 * (E[1:] + E[:-1]) * dx[:, 0])
    L = (x[0] - x[1:])
    src = source or ("average-" + fam[0].source)
    out = [GriddedMeasure(part, cum[k] / L[k], fam[0].mode, src, float(r[k + 1]), fam[0].s, float(cume[k] / L[k]))
           for k in range(len(L))]
    n = max(2, len(out) // 3)
    tail = np.array([m.masses for m in out[-n:]])
    mean = np.abs(tail.mean(axis=0))
    spread = tail.max(axis=0) - tail.min(axis=0)
    total = max(float(np.sum(mean)), 1e-300)
    # cells carrying negligible mass count as stable
    stable = (spread <= threshold * np.maximum(mean, 1e-3 * total))
    out[-1].stable = stable.tolist()  # type: ignore[attr-defined]
    return out


def reference_measure(spec: IFSAttractor, partition: CellPartition, total: float, depth: int = 12) -> GriddedMeasure:
    """total * natural measure, as a projective measure."""
    nm = natural_measure(spec, partition, depth)
    return GriddedMeasure(partition, total * nm.masses, "projective", "reference", float("nan"), float("nan"))


# --------------------------------------------------------------------------
# flat distance
# --------------------------------------------------------------------------


def flat_distance(m1: GriddedMeasure, m2: GriddedMeasure, cap: float = 2.0) -> float:
    """Bounded-Lipschitz distance between two measures on the same partition.

    Solved as a transport problem on cell centres with cost min(|x - y|, cap)
    where unmatched mass is created or destroyed at unit cost."""
    if not m1.partition.same_as(m2.partition):
        raise GeometryError("measures live on different partitions")
    if m1.mode != m2.mode and "reference" not in (m1.source, m2.source):
        raise GeometryError("measures have different modes")
    a = np.asarray(m1.masses, float)
    b = np.asarray(m2.masses, float)
    ia, ib = np.flatnonzero(a > 0), np.flatnonzero(b > 0)
    if len(ia) == 0 or len(ib) == 0:
        return float(a.sum() + b.sum())
    X = m1.partition.centers()
    C = np.minimum(np.linalg.norm(X[ia][:, None, :] - X[ib][None, :, :], axis=2), cap)
    na, nb = len(ia), len(ib)
    # variables: plan (na*nb), destroy (na), create (nb)
    cost = np.concatenate([C.ravel(), np.ones(na), np.ones(nb)])
    rows_a = np.repeat(np.arange(na), nb)
    cols_plan = np.arange(na * nb)
    rows_b = na + np.tile(np.arange(nb), na)
    data = np.ones(2 * na * nb + na + nb)
    rows = np.concatenate([rows_a, rows_b, np.arange(na), na + np.arange(nb)])
    cols = np.concatenate([cols_plan, cols_plan, na * nb + np.arange(na), na * nb + na + np.arange(nb)])
    A = sparse.csr_matrix((data, (rows, cols)), shape=(na + nb, na * nb + na + nb))
    res = linprog(cost, A_eq=A, b_eq=np.concatenate([a[ia], b[ib]]), bounds=(0, None), method="highs")
    if res.status != 0:
        raise EstimationError(f"transport solver failed: {res.message}")
    return float(res.fun)


# --------------------------------------------------------------------------
# convergence
# --------------------------------------------------------------------------


@dataclass
class ConvergenceReport:
    params: np.ndarray
    distances: np.ndarray
    window_totals: dict
    reference_totals: dict
    mass_preserved: bool
    decreasing_tail: bool
    below_threshold: bool
    delta: float = DELTA_CONV
    mass_tolerance: float = 0.05

    def to_record(self) -> dict:
        return {"params": self.params.tolist(), "distances": self.distances.tolist(),
                "window_totals": {k: list(v) for k, v in self.window_totals.items()},
                "reference_totals": self.reference_totals,
                "mass_preserved": self.mass_preserved, "decreasing_tail": self.decreasing_tail,
                "below_threshold": self.below_threshold, "delta": self.delta}


def convergence_report(family: Sequence[GriddedMeasure], reference: GriddedMeasure,
                       windows: Sequence[tuple[str, Region]] | None = None,
                       delta: float = DELTA_CONV, mass_tolerance: float = 0.05) -> ConvergenceReport:
    """Flat distances of a family to a reference, plus per-window mass checks on the last third."""
    fam = sorted(family, key=lambda m: -m.param)
    if len(fam) < 5:
        raise EstimationError("need >= 5 family members")
    dist = np.array([flat_distance(m, reference) for m in fam])
    n = max(1, int(math.ceil(len(fam) / 3)))
    totals, refs = {}, {}
    preserved = True
    wins = list(windows or []) + [("all", None)]
    for name, reg in wins:
        seq = [m.total if reg is None else m.restricted_total(reg) for m in fam]
        ref = reference.total if reg is None else reference.restricted_total(reg)
        totals[name] = seq
        refs[name] = ref
        tail = np.asarray(seq[-n:])
        scale = max(abs(ref), 1e-300)
        if np.any(np.abs(tail - ref) > mass_tolerance * scale):
            preserved = False
    tail = dist[-n:]
    head = dist[:n]
    decreasing = bool(np.mean(tail) <= np.mean(head) + 1e-12)
    return ConvergenceReport(np.array([m.param for m in fam]), dist, totals, refs, preserved, decreasing,
                             bool(np.all(tail < delta)), delta, mass_tolerance)
