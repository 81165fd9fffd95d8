"""Declarative set descriptions, distance oracles and IFS reference quantities.

Three kinds of closed sets are supported:

* ``PrimitiveUnion``: finite unions of balls, axis boxes, segments and points,
  with exact closed-form distances and nearest points;
* ``IFSAttractor``: attractors of finitely many contracting similarities,
  approximated by the depth-n address cloud;
* ``UnboundedAnalytic``: integer lattices, lines and hyperplanes.

All lengths are in one abstract unit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from .errors import GeometryError, ResourceError, SchemaError

#: Maximum number of address points generated for an IFS cloud.
DEFAULT_POINT_CAP = 20_000_000

# relative tolerance deciding whether two nearest points are "the same"
_SAME_POINT_RTOL = 1e-9


# --------------------------------------------------------------------------
# primitives
# --------------------------------------------------------------------------


def _as_vec(x: Sequence[float]) -> tuple[float, ...]:
    return tuple(float(v) for v in x)


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    @property
    def dim(self) -> int:
        return len(self.center)

    def project(self, x: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center)
        v = x - c
        n = np.linalg.norm(v, axis=-1)
        out = x.copy()
        outside = n > self.radius
        with np.errstate(invalid="ignore", divide="ignore"):
            out[outside] = c + v[outside] * (self.radius / n[outside])[:, None]
        # queries at the center of a degenerate (radius 0) ball are exactly c
        return out

    def distance(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(np.linalg.norm(x - np.asarray(self.center), axis=-1) - self.radius, 0.0)

    def bbox(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def contains(self, x: np.ndarray, closed: bool = True) -> np.ndarray:
        n = np.linalg.norm(x - np.asarray(self.center), axis=-1)
        return n <= self.radius if closed else n < self.radius


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.lo)

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, np.asarray(self.lo), np.asarray(self.hi))

    def distance(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.norm(x - self.project(x), axis=-1)

    def bbox(self):
        return np.asarray(self.lo), np.asarray(self.hi)

    def contains(self, x: np.ndarray, closed: bool = True) -> np.ndarray:
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        if closed:
            return np.all((x >= lo) & (x <= hi), axis=-1)
        return np.all((x > lo) & (x < hi), axis=-1)


@dataclass(frozen=True)
class Segment:
    p: tuple[float, ...]
    q: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.p)

    def project(self, x: np.ndarray) -> np.ndarray:
        p, q = np.asarray(self.p), np.asarray(self.q)
        u = q - p
        uu = float(u @ u)
        if uu == 0.0:
            return np.broadcast_to(p, x.shape).copy()
        t = np.clip(((x - p) @ u) / uu, 0.0, 1.0)
        return p + t[:, None] * u

    def distance(self, x: np.ndarray) -> np.ndarray:
        p, q = np.asarray(self.p), np.asarray(self.q)
        u = q - p
        uu = float(u @ u)
        v = x - p
        if uu == 0.0:
            return np.linalg.norm(v, axis=-1)
        t = np.clip((v @ u) / uu, 0.0, 1.0)
        return np.linalg.norm(v - t[:, None] * u, axis=-1)

    def bbox(self):
        p, q = np.asarray(self.p), np.asarray(self.q)
        return np.minimum(p, q), np.maximum(p, q)


@dataclass(frozen=True)
class Point:
    p: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.p)

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.p), x.shape).copy()

    def distance(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.norm(x - np.asarray(self.p), axis=-1)

    def bbox(self):
        p = np.asarray(self.p)
        return p, p


Primitive = Union[Ball, Box, Segment, Point]


# --------------------------------------------------------------------------
# set specs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Similarity:
    """x -> ratio * R x + translation, with R orthogonal."""

    ratio: float
    rotation: np.ndarray
    translation: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.translation)

    @property
    def linear(self) -> np.ndarray:
        return self.ratio * self.rotation

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.linear.T + self.translation

    def fixed_point(self) -> np.ndarray:
        d = self.dim
        return np.linalg.solve(np.eye(d) - self.linear, self.translation)


@dataclass(frozen=True)
class PrimitiveUnion:
    primitives: tuple[Primitive, ...]
    dim: int

    variant = "primitive_union"


@dataclass(frozen=True)
class IFSAttractor:
    maps: tuple[Similarity, ...]
    separation: str  # "osc" | "ssc" | "unknown"
    dim: int

    variant = "ifs_attractor"

    @property
    def ratios(self) -> np.ndarray:
        return np.array([m.ratio for m in self.maps])

    def bounding_ball(self) -> tuple[np.ndarray, float]:
        """Ball B(c, R) with S_i(B) inside B for every map; it contains K.

        c is the centroid of the maps' fixed points."""
        c = np.mean([m.fixed_point() for m in self.maps], axis=0)
        R = max(np.linalg.norm(m(c[None, :])[0] - c) / (1.0 - m.ratio) for m in self.maps)
        return c, float(R)


@dataclass(frozen=True)
class UnboundedAnalytic:
    kind: str  # "lattice" | "hyperplane" | "line"
    params: dict
    dim: int

    variant = "unbounded_analytic"


SetSpec = Union[PrimitiveUnion, IFSAttractor, UnboundedAnalytic]


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

_VARIANT_ALIASES = {
    "primitive_union": "primitive_union",
    "primitiveunion": "primitive_union",
    "primitives": "primitive_union",
    "ifs_attractor": "ifs_attractor",
    "ifsattractor": "ifs_attractor",
    "ifs": "ifs_attractor",
    "unbounded_analytic": "unbounded_analytic",
    "unboundedanalytic": "unbounded_analytic",
    "unbounded": "unbounded_analytic",
}


def _req(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise SchemaError(f"{where}: missing field '{key}'")
    return d[key]


def _vector(v: Any, where: str) -> tuple[float, ...]:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return (float(v),)
    if not isinstance(v, (list, tuple)) or not v:
        raise SchemaError(f"{where}: expected a nonempty list of numbers")
    for c in v:
        if not isinstance(c, (int, float)) or isinstance(c, bool):
            raise SchemaError(f"{where}: expected numbers, got {c!r}")
    return _as_vec(v)


def _number(v: Any, where: str) -> float:
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise SchemaError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _parse_primitive(item: dict, i: int) -> Primitive:
    where = f"primitives[{i}]"
    kind = _req(item, "type", where)
    params = _req(item, "params", where)
    if not isinstance(params, dict):
        raise SchemaError(f"{where}.params: expected an object")
    if kind == "ball":
        c = _vector(_req(params, "center", where), where + ".center")
        r = _number(_req(params, "radius", where), where + ".radius")
        if not r >= 0:
            raise GeometryError(f"{where}: ball radius must be >= 0, got {r}")
        return Ball(c, r)
    if kind in ("box", "axis-box", "axis_box"):
        lo = _vector(_req(params, "min", where) if "min" in params else _req(params, "lo", where), where + ".min")
        hi = _vector(_req(params, "max", where) if "max" in params else _req(params, "hi", where), where + ".max")
        if len(lo) != len(hi):
            raise SchemaError(f"{where}: min/max dimension mismatch")
        if any(a > b for a, b in zip(lo, hi)):
            raise GeometryError(f"{where}: empty box (min > max on some axis)")
        return Box(lo, hi)
    if kind == "segment":
        p = _vector(_req(params, "p", where), where + ".p")
        q = _vector(_req(params, "q", where), where + ".q")
        if len(p) != len(q):
            raise SchemaError(f"{where}: p/q dimension mismatch")
        return Segment(p, q)
    if kind == "point":
        return Point(_vector(_req(params, "p", where), where + ".p"))
    raise SchemaError(f"{where}: unknown primitive type {kind!r}")


def _rotation_from(item: dict, dim: int, where: str) -> np.ndarray:
    if "rotation_matrix" in item:
        R = np.asarray(item["rotation_matrix"], dtype=float)
        if R.shape != (dim, dim):
            raise SchemaError(f"{where}.rotation_matrix: expected {dim}x{dim}")
        if not np.allclose(R @ R.T, np.eye(dim), atol=1e-9):
            raise GeometryError(f"{where}: rotation_matrix is not orthogonal")
        return R
    if "rotation_deg" in item:
        if dim != 2:
            raise SchemaError(f"{where}: rotation_deg only valid in 2D")
        a = math.radians(_number(item["rotation_deg"], where + ".rotation_deg"))
        return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    return np.eye(dim)


def _parse_ifs(doc: dict) -> IFSAttractor:
    items = _req(doc, "ifs", "document")
    if not isinstance(items, list) or not items:
        raise SchemaError("ifs: expected a nonempty list of maps")
    maps = []
    dim = None
    for i, item in enumerate(items):
        where = f"ifs[{i}]"
        ratio = _number(_req(item, "ratio", where), where + ".ratio")
        t = _vector(_req(item, "translation", where), where + ".translation")
        if dim is None:
            dim = len(t)
        elif len(t) != dim:
            raise SchemaError(f"{where}: translation dimension mismatch")
        if not 0.0 < ratio < 1.0:
            raise GeometryError(f"{where}: map {i} ratio {ratio} not in (0, 1)")
        R = _rotation_from(item, dim, where)
        maps.append(Similarity(ratio, R, np.asarray(t)))
    sep = doc.get("separation", "unknown")
    if sep not in ("osc", "ssc", "unknown"):
        raise SchemaError(f"separation: expected osc|ssc|unknown, got {sep!r}")
    spec = IFSAttractor(tuple(maps), sep, dim)
    if sep == "ssc":
        check_ssc(spec)
    return spec


def _parse_unbounded(doc: dict) -> UnboundedAnalytic:
    u = _req(doc, "unbounded", "document")
    kind = _req(u, "type", "unbounded")
    params = dict(_req(u, "params", "unbounded"))
    if kind == "lattice":
        dim = int(params.get("dim", doc.get("dim", 2)))
        a = _number(params.get("spacing", 1.0), "unbounded.params.spacing")
        if not a > 0:
            raise GeometryError("lattice spacing must be > 0")
        params = {"spacing": a, "dim": dim}
    elif kind == "hyperplane":
        n = np.asarray(_vector(_req(params, "normal", "unbounded.params"), "normal"))
        if not np.linalg.norm(n) > 0:
            raise GeometryError("hyperplane normal must be nonzero")
        dim = len(n)
        params = {"normal": tuple(n / np.linalg.norm(n)),
                  "offset": _number(params.get("offset", 0.0), "offset") / float(np.linalg.norm(n))}
    elif kind == "line":
        p = _vector(_req(params, "point", "unbounded.params"), "point")
        v = np.asarray(_vector(_req(params, "direction", "unbounded.params"), "direction"))
        if len(v) != len(p) or not np.linalg.norm(v) > 0:
            raise GeometryError("line direction must be nonzero and match point dimension")
        dim = len(p)
        params = {"point": p, "direction": tuple(v / np.linalg.norm(v))}
    else:
        raise SchemaError(f"unbounded.type: unknown kind {kind!r}")
    return UnboundedAnalytic(kind, params, dim)


def parse_setspec(text: str | dict) -> SetSpec:
    """Parse and validate a set-spec document (JSON text or an already-loaded dict)."""
    if isinstance(text, (str, bytes)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from exc
    else:
        doc = text
    if not isinstance(doc, dict):
        raise SchemaError("document must be an object")
    raw = _req(doc, "variant", "document")
    variant = _VARIANT_ALIASES.get(str(raw).replace("-", "_").lower())
    if variant is None:
        raise SchemaError(f"variant: unknown value {raw!r}")
    if variant == "primitive_union":
        items = _req(doc, "primitives", "document")
        if not isinstance(items, list) or not items:
            raise SchemaError("primitives: expected a nonempty list")
        prims = tuple(_parse_primitive(it, i) for i, it in enumerate(items))
        dims = {p.dim for p in prims}
        if len(dims) != 1:
            raise SchemaError("primitives: mixed dimensions")
        return PrimitiveUnion(prims, dims.pop())
    if variant == "ifs_attractor":
        return _parse_ifs(doc)
    return _parse_unbounded(doc)


def spec_to_dict(spec: SetSpec) -> dict:
    """Inverse of :func:`parse_setspec` (up to aliases)."""
    if isinstance(spec, PrimitiveUnion):
        prims = []
        for p in spec.primitives:
            if isinstance(p, Ball):
                prims.append({"type": "ball", "params": {"center": list(p.center), "radius": p.radius}})
            elif isinstance(p, Box):
                prims.append({"type": "box", "params": {"min": list(p.lo), "max": list(p.hi)}})
            elif isinstance(p, Segment):
                prims.append({"type": "segment", "params": {"p": list(p.p), "q": list(p.q)}})
            else:
                prims.append({"type": "point", "params": {"p": list(p.p)}})
        return {"variant": "primitive_union", "primitives": prims}
    if isinstance(spec, IFSAttractor):
        return {
            "variant": "ifs_attractor",
            "separation": spec.separation,
            "ifs": [{"ratio": m.ratio, "rotation_matrix": m.rotation.tolist(),
                     "translation": m.translation.tolist()} for m in spec.maps],
        }
    params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in spec.params.items()}
    return {"variant": "unbounded_analytic", "unbounded": {"type": spec.kind, "params": params}}


# --------------------------------------------------------------------------
# IFS machinery
# --------------------------------------------------------------------------


def check_ssc(spec: IFSAttractor, depth: int = 6) -> None:
    """Raise GeometryError unless first-level images of the attractor's bounding box are disjoint.

    The box is the bounding box of the depth-``depth`` cloud widened by the
    covering radius; images are bounded by their own axis boxes, which is
    exact for rotation-free maps and conservative otherwise."""
    pts, eps = attractor_points(spec, depth)
    lo, hi = pts.min(axis=0) - eps, pts.max(axis=0) + eps
    corners = np.array(np.meshgrid(*[[a, b] for a, b in zip(lo, hi)], indexing="ij")).reshape(spec.dim, -1).T
    boxes = []
    for m in spec.maps:
        img = m(corners)
        boxes.append((img.min(axis=0), img.max(axis=0)))
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            (a0, a1), (b0, b1) = boxes[i], boxes[j]
            separated = np.any((a1 < b0) | (b1 < a0))
            if not separated:
                raise GeometryError(f"ssc flag: images of maps {i} and {j} intersect")


def attractor_points(spec: IFSAttractor, depth: int, cap: int = DEFAULT_POINT_CAP,
                     with_weights: bool = False, dimension: float | None = None):
    """Points S_w(c) for all length-``depth`` addresses w, c the seed point.

    Returns ``(points, covering_radius)``, or ``(points, covering_radius, weights)``
    when ``with_weights`` is set (weights are prod r_i^D, D the Moran dimension
    unless ``dimension`` is given). Every attractor point lies within the
    covering radius of some listed point."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    n_maps = len(spec.maps)
    if n_maps ** depth > cap:
        raise ResourceError(f"{n_maps}^{depth} address points exceed cap {cap}")
    c, R = spec.bounding_ball()
    pts = c[None, :]
    w = np.ones(1)
    if with_weights:
        D = moran_dimension(spec) if dimension is None else dimension
        sw = spec.ratios ** D
    for _ in range(depth):
        pts = np.concatenate([m(pts) for m in spec.maps], axis=0)
        if with_weights:
            w = np.concatenate([wi * w for wi in sw])
    eps = 2.0 * R * float(spec.ratios.max()) ** depth
    if with_weights:
        return pts, eps, w
    return pts, eps


def moran_dimension(spec_or_ratios) -> float:
    """Root D of sum_i r_i^D = 1 by bracketed bisection (absolute accuracy 1e-12 or better)."""
    if isinstance(spec_or_ratios, IFSAttractor):
        r = spec_or_ratios.ratios
    else:
        r = np.asarray(spec_or_ratios, dtype=float)
    if r.size == 0:
        raise ValueError("need at least one ratio")
    if r.size == 1:
        return 0.0
    phi = lambda t: float(np.sum(r ** t)) - 1.0  # noqa: E731  decreasing in t
    lo, hi = 0.0, 1.0
    while phi(hi) > 0:
        hi *= 2.0
    while hi - lo > 1e-14:
        mid = 0.5 * (lo + hi)
        if phi(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class LatticeResult:
    kind: str  # "lattice" | "nonlattice"
    witnesses: tuple[Fraction | None, ...]
    errors: tuple[float, ...]
    inconclusive: bool


def lattice_check(spec_or_ratios, tolerance: float = 1e-9, max_denominator: int = 64) -> LatticeResult:
    """Classify an IFS as lattice (all log r_i / log r_1 rational) or nonlattice.

    Each log-ratio is approximated by the best rational with denominator
    <= ``max_denominator`` (continued fractions); the IFS is lattice when all
    approximation errors are below ``tolerance``. The result is flagged
    inconclusive when some error lies within a factor 2 of the tolerance."""
    r = spec_or_ratios.ratios if isinstance(spec_or_ratios, IFSAttractor) else np.asarray(spec_or_ratios, float)
    if r.size < 2:
        raise ValueError("lattice_check needs at least two maps")
    base = math.log(r[0])
    witnesses, errors = [], []
    inconclusive = False
    lattice = True
    for ri in r:
        x = math.log(ri) / base
        frac = Fraction(x).limit_denominator(max_denominator)
        err = abs(x - float(frac))
        errors.append(err)
        if err < tolerance:
            witnesses.append(frac)
        else:
            witnesses.append(None)
            lattice = False
        if tolerance / 2.0 < err < 2.0 * tolerance:
            inconclusive = True
    return LatticeResult("lattice" if lattice else "nonlattice", tuple(witnesses), tuple(errors), inconclusive)


@dataclass(frozen=True)
class NaturalMeasureTable:
    partition_id: str
    masses: np.ndarray
    depth: int

    def __post_init__(self):
        if np.any(self.masses < 0):
            raise ValueError("negative mass")


def natural_measure(spec: IFSAttractor, partition, depth: int, cap: int = DEFAULT_POINT_CAP) -> NaturalMeasureTable:
    """Self-similar measure with weights r_i^D, binned by representative points.

    ``partition`` needs ``locate(points) -> int array`` (-1 = outside) and
    ``n_cells``."""
    if spec.separation not in ("osc", "ssc"):
        raise GeometryError("natural_measure requires an osc or ssc separation flag")
    pts, _, w = attractor_points(spec, depth, cap=cap, with_weights=True)
    idx = partition.locate(pts)
    if np.any(idx < 0):
        lost = math.fsum(w[idx < 0])
        if lost > 1e-12:
            raise GeometryError(f"partition does not cover the attractor (lost mass {lost:.3g})")
    masses = np.zeros(partition.n_cells)
    keep = idx >= 0
    order = np.lexsort((w[keep], idx[keep]))
    ii, ww = idx[keep][order], w[keep][order]
    starts = np.flatnonzero(np.r_[True, ii[1:] != ii[:-1]])
    masses[ii[starts]] = np.add.reduceat(ww, starts)
    total = masses.sum()
    if abs(total - 1.0) > 1e-12:
        masses = masses / total
    return NaturalMeasureTable(getattr(partition, "id", "partition"), masses, depth)


# --------------------------------------------------------------------------
# distance oracles
# --------------------------------------------------------------------------


def _lex_argmin(dist: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Index (along axis 0) of the smallest distance; ties go to the lexicographically smallest point.

    dist: (k, n), pts: (k, n, d)."""
    best = dist.min(axis=0)
    tie = dist <= best[None, :]
    k, n = dist.shape
    choice = np.argmax(tie, axis=0)
    multi = tie.sum(axis=0) > 1
    if np.any(multi):
        cols = np.flatnonzero(multi)
        for j in cols:
            cand = np.flatnonzero(tie[:, j])
            keys = pts[cand, j, :]
            order = np.lexsort(keys.T[::-1])
            choice[j] = cand[order[0]]
    return choice


@dataclass
class OracleResult:
    distance: np.ndarray
    nearest: np.ndarray
    gap: np.ndarray
    second: np.ndarray  # nearest point realising the gap (nan where gap is inf)


@dataclass
class DistanceOracle:
    """Distance to a closed set, with nearest points and anchor gaps.

    ``kind`` is "exact" (closed form, ``eps`` = 0) or "cloud" (distance to a
    finite point cloud approximating the set to within ``eps``)."""

    dim: int
    eps: float
    kind: str
    spec: SetSpec
    points: np.ndarray | None = None
    _tree: Any = field(default=None, repr=False)

    def evaluate(self, x: np.ndarray) -> OracleResult:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}")
        spec = self.spec
        if self.kind == "cloud":
            return self._eval_cloud(x)
        if isinstance(spec, PrimitiveUnion):
            return _eval_primitives(spec, x)
        return _eval_unbounded(spec, x)

    def distance(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x).distance

    def nearest(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x).nearest

    def _eval_cloud(self, x: np.ndarray, k: int = 8) -> OracleResult:
        if self._tree is None:
            self._tree = cKDTree(self.points)
        k = min(k, len(self.points))
        dist, idx = self._tree.query(x, k=k)
        dist = np.asarray(dist).reshape(len(x), k)
        idx = np.asarray(idx).reshape(len(x), k)
        nearest = self.points[idx[:, 0]]
        gap = np.full(len(x), np.inf)
        second = np.full_like(x, np.nan)
        sep = 4.0 * max(self.eps, 1e-300)
        for j in range(1, k):
            cand = self.points[idx[:, j]]
            far = np.linalg.norm(cand - nearest, axis=1) > sep
            upd = far & ~np.isfinite(gap)
            gap[upd] = dist[upd, j] - dist[upd, 0]
            second[upd] = cand[upd]
        return OracleResult(dist[:, 0], nearest, gap, second)


def _eval_primitives(spec: PrimitiveUnion, x: np.ndarray) -> OracleResult:
    projs = np.stack([p.project(x) for p in spec.primitives])  # (k, n, d)
    # distances from relative coordinates, so whole-cell motions of a dyadic
    # configuration reproduce them bit for bit
    dists = np.stack([p.distance(x) for p in spec.primitives])  # (k, n)
    n = len(x)
    if len(spec.primitives) == 1:
        best = np.zeros(n, dtype=int)
    else:
        best = _lex_argmin(dists, projs)
    cols = np.arange(n)
    d0 = dists[best, cols]
    a0 = projs[best, cols]
    gap = np.full(n, np.inf)
    second = np.full_like(x, np.nan)
    scale = 1.0 + np.abs(x).max(axis=1)
    # gap: distance excess of the best primitive whose nearest point differs
    for k in range(len(spec.primitives)):
        differs = np.linalg.norm(projs[k] - a0, axis=1) > _SAME_POINT_RTOL * scale
        g = np.where(differs, dists[k] - d0, np.inf)
        upd = g < gap
        gap[upd] = g[upd]
        second[upd] = projs[k][upd]
    return OracleResult(d0, a0, gap, second)


def _eval_unbounded(spec: UnboundedAnalytic, x: np.ndarray) -> OracleResult:
    n, d = x.shape
    if spec.kind == "lattice":
        a = spec.params["spacing"]
        base = a * np.ceil(x / a - 0.5)  # ties resolved towards the smaller coordinate
        d0 = np.linalg.norm(x - base, axis=1)
        gap = np.full(n, np.inf)
        second = np.full_like(x, np.nan)
        offsets = np.array(np.meshgrid(*[[-1, 0, 1]] * d, indexing="ij")).reshape(d, -1).T
        for off in offsets:
            if not np.any(off):
                continue
            cand = base + a * off
            g = np.linalg.norm(x - cand, axis=1) - d0
            upd = g < gap
            gap[upd] = g[upd]
            second[upd] = cand[upd]
        return OracleResult(d0, base, gap, second)
    if spec.kind == "hyperplane":
        nrm = np.asarray(spec.params["normal"])
        t = x @ nrm - spec.params["offset"]
        return OracleResult(np.abs(t), x - t[:, None] * nrm, np.full(n, np.inf), np.full_like(x, np.nan))
    p = np.asarray(spec.params["point"])
    v = np.asarray(spec.params["direction"])
    foot = p + ((x - p) @ v)[:, None] * v
    return OracleResult(np.linalg.norm(x - foot, axis=1), foot, np.full(n, np.inf), np.full_like(x, np.nan))


def distance_oracle(spec: SetSpec, depth: int = 8, cap: int = DEFAULT_POINT_CAP) -> DistanceOracle:
    """Distance oracle for ``spec``; IFS attractors are replaced by their depth-``depth`` cloud."""
    if isinstance(spec, IFSAttractor):
        pts, eps = attractor_points(spec, depth, cap=cap)
        return DistanceOracle(spec.dim, eps, "cloud", spec, points=pts)
    return DistanceOracle(spec.dim, 0.0, "exact", spec)


def cloud_oracle(points: np.ndarray, eps: float, spec: SetSpec | None = None) -> DistanceOracle:
    """Oracle for an explicit point cloud that approximates a set to within ``eps``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) == 0:
        raise GeometryError("empty point cloud")
    return DistanceOracle(pts.shape[1], float(eps), "cloud", spec, points=pts)


def bounding_box(spec: SetSpec, depth: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Axis box containing a bounded spec."""
    if isinstance(spec, PrimitiveUnion):
        boxes = [p.bbox() for p in spec.primitives]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)
    if isinstance(spec, IFSAttractor):
        pts, eps = attractor_points(spec, min(depth, 8))
        return pts.min(axis=0) - eps, pts.max(axis=0) + eps
    raise GeometryError("unbounded specs have no bounding box")


# --------------------------------------------------------------------------
# canonical specs
# --------------------------------------------------------------------------


def ifs_1d(ratios: Sequence[float], translations: Sequence[float], separation: str = "ssc") -> IFSAttractor:
    maps = tuple(Similarity(float(r), np.eye(1), np.array([float(t)])) for r, t in zip(ratios, translations))
    spec = IFSAttractor(maps, separation, 1)
    if separation == "ssc":
        check_ssc(spec)
    return spec


def cantor_set() -> IFSAttractor:
    """Middle-third Cantor set {x/3, x/3 + 2/3}."""
    return ifs_1d([1 / 3, 1 / 3], [0.0, 2 / 3])


def nonlattice_1d() -> IFSAttractor:
    """{x/2, x/3 + 2/3}: log 2 / log 3 is irrational."""
    return ifs_1d([1 / 2, 1 / 3], [0.0, 2 / 3])


def sierpinski_gasket() -> IFSAttractor:
    """Right-angle gasket with vertices (0,0), (1,0), (0,1)."""
    maps = tuple(Similarity(0.5, np.eye(2), np.array(t, float)) for t in ((0, 0), (0.5, 0), (0, 0.5)))
    return IFSAttractor(maps, "osc", 2)


def two_squares() -> PrimitiveUnion:
    return PrimitiveUnion((Box((-3.0, -1.0), (-1.0, 1.0)), Box((1.0, -1.0), (3.0, 1.0))), 2)


def integer_lattice(dim: int = 2, spacing: float = 1.0) -> UnboundedAnalytic:
    return UnboundedAnalytic("lattice", {"spacing": float(spacing), "dim": dim}, dim)
