"""Grids, sampled distance fields, parallel-set masks and surface estimators.

A :class:`DistanceField` stores, for every cell centre x of a regular grid,
the distance D(x) to the set A, a nearest point (anchor) of A, and a second
anchor with its distance excess (the gap). Cells with a small gap are near
the exoskeleton, where the metric projection is not unique.

Volumes are computed from sorted distance values with a linear sub-cell ramp:
a cell whose centre lies at distance D contributes the fraction
clip(1/2 + (r - D)/h, 0, 1) of its volume to the r-parallel set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .edt import squared_edt
from .errors import GeometryError, MarginError, ResourceError
from .setspec import DistanceOracle

#: Default cap on the number of grid cells.
DEFAULT_CELL_CAP = 80_000_000

_CHUNK = 1 << 18


# --------------------------------------------------------------------------
# windows
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GridWindow:
    """Regular grid of cells; ``origin`` is the centre of cell (0, ..., 0)."""

    origin: tuple[float, ...]
    h: float
    shape: tuple[int, ...]

    def __post_init__(self):
        if not self.h > 0:
            raise GeometryError("grid spacing must be > 0")
        if len(self.origin) != len(self.shape) or len(self.shape) not in (1, 2, 3):
            raise GeometryError("window dimension must be 1, 2 or 3")
        if any(n < 2 for n in self.shape):
            raise GeometryError("window needs at least 2 cells per axis")

    @classmethod
    def covering(cls, lo: Sequence[float], hi: Sequence[float], h: float,
                 cap: int = DEFAULT_CELL_CAP) -> "GridWindow":
        """Cells tiling the box [lo, hi] (centres at lo + h/2 + k h)."""
        lo, hi = np.atleast_1d(np.asarray(lo, float)), np.atleast_1d(np.asarray(hi, float))
        shape = tuple(int(round(n)) for n in (hi - lo) / h)
        w = cls(tuple(lo + h / 2), float(h), shape)
        w.check_cap(cap)
        return w

    @classmethod
    def nodes(cls, lo: Sequence[float], hi: Sequence[float], h: float,
              cap: int = DEFAULT_CELL_CAP) -> "GridWindow":
        """Cells centred on the nodes lo + k h, k = 0..(hi-lo)/h."""
        lo, hi = np.atleast_1d(np.asarray(lo, float)), np.atleast_1d(np.asarray(hi, float))
        shape = tuple(int(round(n)) + 1 for n in (hi - lo) / h)
        w = cls(tuple(lo), float(h), shape)
        w.check_cap(cap)
        return w

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.origin) - self.h / 2

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.origin) + self.h * (np.asarray(self.shape) - 0.5)

    def check_cap(self, cap: int = DEFAULT_CELL_CAP) -> None:
        if self.n_cells > cap:
            raise ResourceError(f"window has {self.n_cells} cells, cap is {cap}")

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.h * np.arange(self.shape[axis])

    def centers(self, flat_index: np.ndarray | None = None) -> np.ndarray:
        """Cell centres, shape (n, d), for the given flat indices (default all, C order)."""
        if flat_index is None:
            flat_index = np.arange(self.n_cells)
        idx = np.unravel_index(flat_index, self.shape)
        return np.column_stack([self.origin[k] + self.h * idx[k] for k in range(self.dim)])

    def cell_of(self, points: np.ndarray) -> np.ndarray:
        """Integer index of the cell containing each point (may be out of range)."""
        p = np.atleast_2d(points)
        return np.rint((p - np.asarray(self.origin)) / self.h).astype(np.int64)

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "h": self.h, "shape": list(self.shape)}


# --------------------------------------------------------------------------
# regions (predicates over anchor coordinates)
# --------------------------------------------------------------------------


class Region:
    tag = "generic"

    def contains(self, pts: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass(frozen=True)
class Everything(Region):
    tag = "all"

    def contains(self, pts):
        return np.ones(len(np.atleast_2d(pts)), dtype=bool)


@dataclass(frozen=True)
class BoxRegion(Region):
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    closed: bool = False

    @property
    def tag(self):
        br = "[]" if self.closed else "()"
        return f"box{br[0]}{','.join(map(repr, self.lo))};{','.join(map(repr, self.hi))}{br[1]}"

    def contains(self, pts):
        p = np.atleast_2d(pts)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        if self.closed:
            return np.all((p >= lo) & (p <= hi), axis=1)
        return np.all((p > lo) & (p < hi), axis=1)


@dataclass(frozen=True)
class BallRegion(Region):
    center: tuple[float, ...]
    radius: float
    closed: bool = False

    @property
    def tag(self):
        return f"ball({','.join(map(repr, self.center))};{self.radius!r})"

    def contains(self, pts):
        n = np.linalg.norm(np.atleast_2d(pts) - np.asarray(self.center), axis=1)
        return n <= self.radius if self.closed else n < self.radius


@dataclass(frozen=True)
class HalfSpace(Region):
    """{x : x[axis] < value} (or > value with ``below=False``)."""

    axis: int
    value: float
    below: bool = True

    @property
    def tag(self):
        return f"half(x{self.axis}{'<' if self.below else '>'}{self.value!r})"

    def contains(self, pts):
        c = np.atleast_2d(pts)[:, self.axis]
        return c < self.value if self.below else c > self.value


@dataclass(frozen=True)
class RegionUnion(Region):
    parts: tuple[Region, ...]

    @property
    def tag(self):
        return "|".join(p.tag for p in self.parts)

    def contains(self, pts):
        out = np.zeros(len(np.atleast_2d(pts)), dtype=bool)
        for p in self.parts:
            out |= p.contains(pts)
        return out


def parse_region(text: str) -> Region:
    """Parse ``all``, ``box:lo1,lo2;hi1,hi2[:closed]``, ``ball:c1,c2;R[:closed]``,
    ``half:axis,value[,>]``; ``+`` joins a union."""
    text = text.strip()
    if "+" in text:
        return RegionUnion(tuple(parse_region(t) for t in text.split("+")))
    if text in ("all", "everything", ""):
        return Everything()
    kind, _, rest = text.partition(":")
    closed = rest.endswith(":closed")
    if closed:
        rest = rest[: -len(":closed")]
    try:
        if kind == "box":
            a, b = rest.split(";")
            return BoxRegion(tuple(map(float, a.split(","))), tuple(map(float, b.split(","))), closed)
        if kind == "ball":
            a, b = rest.split(";")
            return BallRegion(tuple(map(float, a.split(","))), float(b), closed)
        if kind == "half":
            bits = rest.split(",")
            below = not (len(bits) > 2 and bits[2].strip() == ">")
            return HalfSpace(int(bits[0]), float(bits[1]), below)
    except ValueError as exc:
        raise GeometryError(f"cannot parse region {text!r}: {exc}") from exc
    raise GeometryError(f"unknown region kind {kind!r}")


# --------------------------------------------------------------------------
# fields
# --------------------------------------------------------------------------


@dataclass
class DistanceField:
    """Sampled distance data on a window.

    Second anchors are kept only for cells whose gap is below ``4 tau_exo``
    (``second_idx`` sorted flat indices, ``second`` their coordinates)."""

    window: GridWindow
    dist: np.ndarray          # shape = window.shape
    anchor: np.ndarray        # (n_cells, d)
    gap: np.ndarray           # shape = window.shape, inf when no distinct second anchor
    second_idx: np.ndarray
    second: np.ndarray
    eps: float
    tau_exo: float
    method: str = "exact"
    exo: np.ndarray = field(init=False)

    def __post_init__(self):
        self.exo = self.gap < self.tau_exo

    @property
    def h(self) -> float:
        return self.window.h

    @property
    def stored_tau(self) -> float:
        return 4.0 * self.tau_exo

    def second_anchor(self, flat_idx: np.ndarray) -> np.ndarray:
        """Second anchors of the given cells (all must have gap < 4 tau_exo)."""
        flat_idx = np.asarray(flat_idx, dtype=np.int64)
        pos = np.searchsorted(self.second_idx, flat_idx)
        pos = np.clip(pos, 0, max(len(self.second_idx) - 1, 0))
        if len(flat_idx) and (len(self.second_idx) == 0 or np.any(self.second_idx[pos] != flat_idx)):
            raise KeyError("second anchor not stored for some cells")
        return self.second[pos]

    def with_tau(self, tau_exo: float) -> "DistanceField":
        if tau_exo > self.stored_tau:
            raise ValueError("tau_exo beyond the stored second-anchor range")
        return DistanceField(self.window, self.dist, self.anchor, self.gap, self.second_idx, self.second,
                             self.eps, tau_exo, self.method)


def sample_field(oracle: DistanceOracle, window: GridWindow, tau_exo: float | None = None,
                 method: str | None = None, cap: int = DEFAULT_CELL_CAP) -> DistanceField:
    """Sample distance, anchors and gaps at every cell centre.

    ``method`` is "exact" (evaluate the oracle) or "raster" (snap the oracle's
    point cloud to cells and run the exact distance transform); clouds default
    to raster."""
    if oracle.dim != window.dim:
        raise GeometryError("oracle and window dimensions differ")
    window.check_cap(cap)
    tau = 2.0 * window.h if tau_exo is None else float(tau_exo)
    if method is None:
        method = "raster" if oracle.kind == "cloud" else "exact"
    if method == "raster":
        if oracle.points is None:
            raise GeometryError("raster sampling needs a point-cloud oracle")
        return _raster_field(oracle.points, window, tau, oracle.eps)
    n = window.n_cells
    d = window.dim
    dist = np.empty(n)
    anchor = np.empty((n, d))
    gap = np.empty(n)
    sidx, sec = [], []
    for start in range(0, n, _CHUNK):
        sl = slice(start, min(n, start + _CHUNK))
        res = oracle.evaluate(window.centers(np.arange(sl.start, sl.stop)))
        dist[sl], anchor[sl], gap[sl] = res.distance, res.nearest, res.gap
        keep = np.flatnonzero(res.gap < 4 * tau)
        sidx.append(keep + start)
        sec.append(res.second[keep])
    return DistanceField(window, dist.reshape(window.shape), anchor, gap.reshape(window.shape),
                         np.concatenate(sidx), np.concatenate(sec).reshape(-1, d), oracle.eps, tau, "exact")


def raster_sites(points: np.ndarray, window: GridWindow) -> np.ndarray:
    idx = window.cell_of(points)
    if np.any(idx < 0) or np.any(idx >= np.asarray(window.shape)):
        raise GeometryError("point cloud extends beyond the window")
    sites = np.zeros(window.shape, dtype=bool)
    sites[tuple(idx.T)] = True
    return sites


def _raster_field(points: np.ndarray, window: GridWindow, tau: float, eps_cloud: float) -> DistanceField:
    sites = raster_sites(points, window)
    f2, anc = squared_edt(sites)
    h = window.h
    dist = h * np.sqrt(f2.astype(np.float64))
    anc_flat = anc.ravel()
    anchor = window.centers(anc_flat)
    gap = np.full(window.n_cells, np.inf)
    best_nb = np.full(window.n_cells, -1, dtype=np.int64)
    base_d = dist.ravel()
    # second anchor: the nearest distinct anchor among face neighbours
    for axis in range(window.dim):
        for shift in (1, -1):
            nb = np.roll(anc, shift, axis=axis)
            valid = np.ones(window.shape, dtype=bool)
            edge = [slice(None)] * window.dim
            edge[axis] = 0 if shift == 1 else -1
            valid[tuple(edge)] = False
            nb = nb.ravel()
            valid = valid.ravel()
            cand = window.centers(nb)
            sep = np.linalg.norm(cand - anchor, axis=1)
            ok = valid & (sep > 2 * tau)
            del sep
            g = np.full(window.n_cells, np.inf)
            if ok.any():
                cells = np.flatnonzero(ok)
                g[cells] = np.linalg.norm(window.centers(cells) - cand[cells], axis=1) - base_d[cells]
            upd = g < gap
            gap[upd] = g[upd]
            best_nb[upd] = nb[upd]
    gap = np.maximum(gap, 0.0)
    sidx = np.flatnonzero(gap < 4 * tau)
    second = window.centers(best_nb[sidx])
    eps = eps_cloud + h * math.sqrt(window.dim) / 2
    return DistanceField(window, dist, anchor, gap.reshape(window.shape), sidx, second, eps, tau, "raster")


# --------------------------------------------------------------------------
# masks
# --------------------------------------------------------------------------


@dataclass
class RegionMask:
    window: GridWindow
    cells: np.ndarray
    tag: str = "generic"

    @property
    def count(self) -> int:
        return int(self.cells.sum())

    def measure(self) -> float:
        return self.count * self.window.cell_volume

    def __and__(self, other: "RegionMask") -> "RegionMask":
        return RegionMask(self.window, self.cells & other.cells, f"{self.tag}&{other.tag}")

    def __or__(self, other: "RegionMask") -> "RegionMask":
        return RegionMask(self.window, self.cells | other.cells, f"{self.tag}|{other.tag}")

    def dilate(self, steps: int = 1) -> "RegionMask":
        """Grow by ``steps`` cells along the face neighbourhood."""
        from scipy.ndimage import binary_dilation
        c = binary_dilation(self.cells, iterations=steps) if steps > 0 else self.cells.copy()
        return RegionMask(self.window, c, self.tag + f"+{steps}")


def _edge_layer(shape) -> np.ndarray:
    m = np.zeros(shape, dtype=bool)
    for axis in range(len(shape)):
        sl = [slice(None)] * len(shape)
        sl[axis] = 0
        m[tuple(sl)] = True
        sl[axis] = -1
        m[tuple(sl)] = True
    return m


def check_margin(fld: DistanceField, r: float, restrict: np.ndarray | None = None) -> None:
    """Raise MarginError if the r-parallel set (restricted) reaches the window's edge layer."""
    edge = _edge_layer(fld.window.shape)
    if restrict is not None:
        edge &= restrict.reshape(fld.window.shape)
    if not edge.any():
        return
    reach = float(fld.dist[edge].min())
    if r + fld.h / 2 > reach:
        raise MarginError(f"r={r:.6g} reaches the window edge (edge distance {reach:.6g})")


def exoskeleton_mask(fld: DistanceField, tau_exo: float | None = None) -> RegionMask:
    tau = fld.tau_exo if tau_exo is None else tau_exo
    return RegionMask(fld.window, fld.gap < tau, "exoskeleton")


def parallel_mask(fld: DistanceField, r: float, restrict: np.ndarray | None = None) -> RegionMask:
    """Cells with D < r."""
    check_margin(fld, r, restrict)
    return RegionMask(fld.window, fld.dist < r, "parallel")


def preimage_mask(fld: DistanceField, B: Region) -> RegionMask:
    """Cells whose anchor lies in B, exoskeleton cells excluded."""
    inside = B.contains(fld.anchor).reshape(fld.window.shape)
    return RegionMask(fld.window, inside & ~fld.exo, "preimage")


def _level_crossing(values: np.ndarray, r: float) -> np.ndarray:
    ins = values < r
    out = np.zeros_like(ins)
    for axis in range(values.ndim):
        a = [slice(None)] * values.ndim
        b = [slice(None)] * values.ndim
        a[axis] = slice(0, -1)
        b[axis] = slice(1, None)
        diff = ins[tuple(a)] != ins[tuple(b)]
        out[tuple(a)] |= diff
        out[tuple(b)] |= diff
    return out


def boundary_cells(fld: DistanceField, r: float) -> RegionMask:
    """Cells on either side of a face across which D - r changes sign."""
    check_margin(fld, r)
    return RegionMask(fld.window, _level_crossing(fld.dist, r), "boundary")


def positive_boundary_cells(fld: DistanceField, r: float) -> RegionMask:
    b = boundary_cells(fld, r)
    return RegionMask(fld.window, b.cells & ~fld.exo, "positive-boundary")


# --------------------------------------------------------------------------
# volumes
# --------------------------------------------------------------------------


def region_weights(fld: DistanceField, B: Region | None) -> np.ndarray:
    """Per-cell share of pi_A^{-1}(B): 1 or 0 off the exoskeleton, and the
    average over both anchors (0, 1/2 or 1) on it."""
    if B is None or isinstance(B, Everything):
        return np.ones(fld.window.n_cells)
    w = B.contains(fld.anchor).astype(float)
    exo = fld.exo.ravel()
    if exo.any():
        w2 = B.contains(fld.second_anchor(np.flatnonzero(exo))).astype(float)
        w[exo] = 0.5 * (w[exo] + w2)
    return w


def _ramp_sum(sorted_d: np.ndarray, r: float, h: float) -> float:
    lo = np.searchsorted(sorted_d, r - h / 2, side="right")
    hi = np.searchsorted(sorted_d, r + h / 2, side="left")
    band = sorted_d[lo:hi]
    return float(lo) + float(np.sum(0.5 + (r - band) / h))


class GridVolume:
    """r -> lambda_d(A_r restricted by per-cell weights), from one field.

    Weights are grouped into classes (typically 1 and 1/2); values are
    computed from sorted distances, so the result depends only on the
    multiset of (distance, weight) pairs."""

    def __init__(self, fld: DistanceField, weights: np.ndarray | None = None, tag: str = "all"):
        w = np.ones(fld.window.n_cells) if weights is None else np.asarray(weights, float).ravel()
        d = fld.dist.ravel()
        self.h = fld.h
        self.dim = fld.window.dim
        self.eps = fld.eps
        self.tag = tag
        self.classes = []
        for c in np.unique(w[w > 0]):
            self.classes.append((float(c), np.sort(d[w == c])))
        edge = _edge_layer(fld.window.shape).ravel() & (w > 0)
        self.reach = float(d[edge].min()) if edge.any() else math.inf

    def __call__(self, r) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(r + self.h / 2 > self.reach):
            raise MarginError(f"radius {r.max():.6g} reaches the window edge (edge distance {self.reach:.6g})")
        out = np.empty(len(r))
        for i, ri in enumerate(r):
            out[i] = sum(c * _ramp_sum(s, ri, self.h) for c, s in self.classes)
        return out * self.h ** self.dim

    @property
    def r_limit(self) -> float:
        """Largest admissible radius."""
        return self.reach - self.h / 2


def volume_function(fld: DistanceField, B: Region | None = None) -> GridVolume:
    tag = "all" if B is None else B.tag
    return GridVolume(fld, region_weights(fld, B), tag)


def surface_area_volume_difference(V: Callable, r: float, t: float, levels: int = 2) -> float:
    """Symmetric quotient [V(r+t) - V(r-t)]/(2t), Richardson-extrapolated over t, t/2, ..."""
    if not 0 < t < r:
        raise ValueError("need 0 < t < r")
    steps = [t / 2 ** k for k in range(levels + 1)]
    vals = V(np.array([r + s for s in steps] + [r - s for s in steps]))
    k = len(steps)
    plus, minus = vals[:k], vals[k:]
    if np.any(np.diff(plus) > 0) or np.any(np.diff(minus) < 0):
        from .errors import DataError
        raise DataError("volume function is not monotone in r")
    est = [(p - m) / (2 * s) for p, m, s in zip(plus, minus, steps)]
    return richardson(est, order_start=2, order_step=2)


def richardson(values: Sequence[float], order_start: int, order_step: int) -> float:
    """Extrapolate estimates at steps t, t/2, t/4, ... with error series t^p, t^{p+step}, ..."""
    cur = list(values)
    p = order_start
    while len(cur) > 1:
        f = 2.0 ** p
        cur = [(f * cur[i + 1] - cur[i]) / (f - 1) for i in range(len(cur) - 1)]
        p += order_step
    return float(cur[0])


# --------------------------------------------------------------------------
# contour surface estimators
# --------------------------------------------------------------------------


def _interp(a, b, fa, fb):
    # point on segment a-b where the linear interpolant of f vanishes
    t = fa / (fa - fb)
    return a + t[:, None] * (b - a)


def contour_segments_2d(values: np.ndarray, level: float, origin, h: float):
    """Marching squares on the lattice of cell centres.

    Returns (segments (n, 2, 2), weights (n,)). Nodes with value == level count
    as outside; a segment lying on a lattice edge that both adjacent squares
    produce has weight 1/2 in each."""
    F = values - level
    ins = F < 0
    c00, c10, c01, c11 = ins[:-1, :-1], ins[1:, :-1], ins[:-1, 1:], ins[1:, 1:]
    code = c00.astype(np.uint8) | (c10.astype(np.uint8) << 1) | (c11.astype(np.uint8) << 2) | (c01.astype(np.uint8) << 3)
    mixed = (code != 0) & (code != 15)
    I, J = np.nonzero(mixed)
    code = code[I, J]
    f00, f10, f01, f11 = F[I, J], F[I + 1, J], F[I, J + 1], F[I + 1, J + 1]
    o = np.asarray(origin, float)
    p00 = np.column_stack([o[0] + h * I, o[1] + h * J])
    p10 = p00 + [h, 0.0]
    p01 = p00 + [0.0, h]
    p11 = p00 + [h, h]
    # crossing points on the four edges: bottom (00-10), right (10-11), top (01-11), left (00-01)
    with np.errstate(divide="ignore", invalid="ignore"):
        eb = _interp(p00, p10, f00, f10)
        er = _interp(p10, p11, f10, f11)
        et = _interp(p01, p11, f01, f11)
        el = _interp(p00, p01, f00, f01)
    E = np.stack([eb, er, et, el], axis=1)  # (n, 4, 2)
    # edge pairs per case (corner bits: 1=00, 2=10, 4=11, 8=01)
    table = {
        1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)], 6: [(0, 2)], 7: [(3, 2)],
        8: [(2, 3)], 9: [(2, 0)], 11: [(2, 1)], 12: [(1, 3)], 13: [(1, 0)], 14: [(0, 3)],
    }
    segs = []
    for cval, pairs in table.items():
        sel = code == cval
        if not sel.any():
            continue
        for a, b in pairs:
            segs.append(np.stack([E[sel, a], E[sel, b]], axis=1))
    # saddles: resolve by the centre value
    for cval in (5, 10):
        sel = code == cval
        if not sel.any():
            continue
        centre_in = (f00[sel] + f10[sel] + f01[sel] + f11[sel]) / 4 < 0
        Es = E[sel]
        # pairs isolating corners 10 and 01, or corners 00 and 11
        iso_10_01 = ((0, 1), (2, 3))
        iso_00_11 = ((3, 0), (1, 2))
        use_first = centre_in if cval == 5 else ~centre_in
        for pairs, pick in ((iso_10_01, use_first), (iso_00_11, ~use_first)):
            if pick.any():
                for a, b in pairs:
                    segs.append(np.stack([Es[pick, a], Es[pick, b]], axis=1))
    if not segs:
        return np.zeros((0, 2, 2)), np.zeros(0)
    S = np.concatenate(segs, axis=0)
    # a segment on a lattice line may come from both adjacent squares (a ridge
    # touching the level); such duplicates share the weight
    rel = (S - o) / h
    on_line = np.zeros(len(S), dtype=bool)
    for ax in range(2):
        x0, x1 = rel[:, 0, ax], rel[:, 1, ax]
        on_line |= (x0 == x1) & (x0 == np.rint(x0))
    w = np.ones(len(S))
    k = np.flatnonzero(on_line)
    if len(k):
        ends = np.sort(rel[k].reshape(len(k), 2, 2).view([("x", float), ("y", float)]).reshape(len(k), 2), axis=1)
        keys = ends.view(float).reshape(len(k), 4)
        _, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        w[k] = 1.0 / counts[inv.ravel()]
    return S, w


def contour_length_by_cell(fld: DistanceField, r: float, restrict: np.ndarray | None = None) -> np.ndarray:
    """Contour measure of {D = r} attributed to cells (flat array over the window).

    d=1: number of level crossings (each assigned to the cell nearest the
    crossing point); d=2: marching-squares length; d=3: marching-cubes area.
    With ``restrict`` only those cells need to clear the window edge."""
    w = fld.window
    check_margin(fld, r, restrict)
    out = np.zeros(w.n_cells)
    if w.dim == 1:
        D = fld.dist
        ins = D < r
        k = np.flatnonzero(ins[:-1] != ins[1:])
        t = (r - D[k]) / (D[k + 1] - D[k])
        cell = k + (t >= 0.5)
        np.add.at(out, cell, 1.0)
        return out
    if w.dim == 2:
        S, wt = contour_segments_2d(fld.dist, r, w.origin, w.h)
        if len(S) == 0:
            return out
        length = np.linalg.norm(S[:, 1] - S[:, 0], axis=1) * wt
        mids = S.mean(axis=1)
        idx = np.clip(w.cell_of(mids), 0, np.asarray(w.shape) - 1)
        flat = np.ravel_multi_index(tuple(idx.T), w.shape)
        np.add.at(out, flat, length)
        return out
    from skimage.measure import marching_cubes
    verts, faces, _, _ = marching_cubes(fld.dist, level=r, spacing=(w.h,) * 3)
    tri = verts[faces]
    area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    cent = tri.mean(axis=1) + np.asarray(w.origin)
    idx = np.clip(w.cell_of(cent), 0, np.asarray(w.shape) - 1)
    np.add.at(out, np.ravel_multi_index(tuple(idx.T), w.shape), area)
    return out


def surface_area_contour(fld: DistanceField, r: float, restriction: RegionMask | None = None) -> float:
    """H^{d-1}(boundary of A_r within the restriction), from the isocontour D = r."""
    per = contour_length_by_cell(fld, r, None if restriction is None else restriction.cells)
    if restriction is None:
        return float(np.sum(per))
    return float(np.sum(per[restriction.cells.ravel()]))
