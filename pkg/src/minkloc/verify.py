"""Named pass/fail experiments built from the estimators, with margins.

A check takes a scenario (a canonical set plus window, resolution ladder,
restriction regions and expected values) and returns a :class:`CheckResult`.
Each check is a list of components ``error <= tolerance``; the first
component's error is the reported margin. Checks flagged ``ladder`` are run
at every grid spacing of the tier and must not get worse by more than 0.01
as h halves.
"""
from __future__ import annotations

import dataclasses
import json
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import io as mio
from .contents import (RadiusSchedule, VolumeFunction, average_content, average_s_content, kappa, kneser_check,
                       minkowski_ratio, one_sided_derivatives, relative_content, s_content, s_ratio,
                       stacho_value, surface_curve, surface_curve_from, volume_curve, vw_identity_check,
                       dimension_estimate)
from .distfield import (BallRegion, BoxRegion, DistanceField, Everything, GridWindow, HalfSpace,
                        boundary_cells, parallel_mask, preimage_mask, sample_field,
                        surface_area_contour, volume_function)
from .errors import EstimationError, MinklocError, SchemaError
from .gasket import QUADRANTS, RightGasketTubes, quadrant_measure
from .interval import SelfSimilarIntervals, bracket_volume
from .localmeasure import (CellPartition, GriddedMeasure, PartitionedVolume, average_local_measure,
                           convergence_report, exact_local_surface_measure, exact_local_volume_measure,
                           ExactLocalVolumes, flat_distance, local_volume_measure,
                           reference_measure)
from .setspec import (Ball, Box, PrimitiveUnion, Segment, attractor_points, cantor_set, cloud_oracle,
                      distance_oracle, integer_lattice, moran_dimension, nonlattice_1d, sierpinski_gasket,
                      two_squares)

TIERS = ("smoke", "desk", "deep")
PROVENANCE_KINDS = ("published", "trivial", "derived")
TREND_SLACK = 0.01
EXACT_FLOOR = 1e-3
FINE_Q = 2.0 ** (-1 / 16)


# --------------------------------------------------------------------------
# scenarios
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Expectation:
    value: float
    tolerance: float
    provenance: str  # published, trivial or derived:<oracle id>

    def __post_init__(self):
        if self.provenance.split(":")[0] not in PROVENANCE_KINDS:
            raise SchemaError(f"unknown provenance {self.provenance!r}")
        if self.provenance.startswith("derived") and ":" not in self.provenance:
            raise SchemaError("derived expectations must name their oracle")


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str                         # grid, raster, exact-1d, exact-gasket
    spec: object = None
    window: tuple | None = None       # (lo, hi) of a node window
    ladder: dict = field(default_factory=dict)   # tier -> tuple of h
    regions: dict = field(default_factory=dict)  # name -> Region
    exponents: tuple = ()
    expected: dict = field(default_factory=dict)  # quantity -> Expectation
    period: float | None = None       # log-period of lattice self-similar sets
    r_max: float = 0.1

    def hs(self, tier: str) -> tuple:
        return tuple(self.ladder.get(tier, ()))

    def with_expected(self, **overrides) -> "Scenario":
        exp = dict(self.expected)
        exp.update(overrides)
        return dataclasses.replace(self, expected=exp)


_EDGE = BoxRegion((-1.0 - 1e-9, -1.0), (-1.0 + 1e-9, 1.0))  # open segment {-1} x (-1, 1)

_LADDERS_2D = {"smoke": (1 / 64, 1 / 128), "desk": (1 / 256, 1 / 512), "deep": (1 / 512, 1 / 1024)}


def _motion_union(scale=1.0, shift=(0.0, 0.0), flip=False, swap=False) -> PrimitiveUnion:
    def T(p):
        p = np.array(p, float) * scale
        if flip:
            p[0] = -p[0]
        if swap:
            p = p[::-1]
        return tuple(p + np.asarray(shift))
    lo, hi = np.array(T((-1, -1))), np.array(T((-0.5, 0)))
    return PrimitiveUnion((Segment(T((0, 0)), T((1, 0))), Ball(T((2, 1)), 0.5 * scale),
                           Box(tuple(np.minimum(lo, hi)), tuple(np.maximum(lo, hi)))), 2)


def _build_scenarios() -> dict[str, Scenario]:
    D_c = math.log(2) / math.log(3)
    D_g = math.log(3) / math.log(2)
    D_n = moran_dimension([0.5, 1 / 3])
    sc = [
        Scenario("ball", "grid", PrimitiveUnion((Ball((0.0, 0.0), 1.0),), 2), ((-2, -2), (2, 2)), _LADDERS_2D,
                 {"all": Everything()}, (1.0,),
                 {"surface(r)": Expectation(math.nan, 0.03, "trivial")}, r_max=0.8),
        Scenario("segment", "grid", PrimitiveUnion((Segment((-1.0, 0.0), (1.0, 0.0)),), 2),
                 ((-2, -1.25), (2, 1.25)), _LADDERS_2D, {"all": Everything()}, (1.0,),
                 {"content": Expectation(2.0, 0.03, "trivial")}, r_max=0.8),
        Scenario("two-squares", "grid", two_squares(), ((-4.5, -2.5), (4.5, 2.5)), _LADDERS_2D,
                 {"all": Everything(), "edge": _EDGE,
                  "away": BoxRegion((3.25, -2.0), (4.25, 2.0))}, (1.0,),
                 {"stacho(1)": Expectation(1.0, 0.03, "published"),
                  "open(1)": Expectation(0.0, 10.0, "published"),
                  "closure(1)": Expectation(2.0, 0.03, "published")}, r_max=0.8),
        Scenario("cantor", "exact-1d", cantor_set(), None, {}, {"all": Everything(), "half": HalfSpace(0, 0.5),
                 "away": BoxRegion((2.0,), (3.0,))}, (D_c,),
                 {"period": Expectation(math.log(3), 0.0, "trivial")}, period=math.log(3)),
        Scenario("nonlattice", "exact-1d", nonlattice_1d(), None, {},
                 {"all": Everything(), "half": HalfSpace(0, 0.5)}, (D_n,),
                 {"difference": Expectation(0.0, 0.05, "derived:interval-oracle")}),
        Scenario("gasket", "exact-gasket", sierpinski_gasket(), None, {},
                 {"all": Everything(), "half": HalfSpace(0, 0.5)}, (D_g,),
                 {"difference": Expectation(0.0, 0.05, "derived:gasket-tubes")}, period=math.log(2)),
        Scenario("gasket-grid", "raster", sierpinski_gasket(), ((-0.5, -0.5), (1.5, 1.5)),
                 {"smoke": (1 / 256,), "desk": (1 / 512,), "deep": (1 / 1024,)}, {"all": Everything()}, (D_g,),
                 {"shape": Expectation(0.0, 0.05, "derived:natural-measure")}, r_max=0.25),
        Scenario("lattice", "grid", integer_lattice(2), ((-9, -9), (9, 9)),
                 {"smoke": (1 / 32,), "desk": (1 / 64, 1 / 128), "deep": (1 / 128, 1 / 256)},
                 {f"ball{n}": BallRegion((0.0, 0.0), float(n)) for n in (2, 4, 8)}, (0.0,),
                 {"dimension": Expectation(0.0, 0.05, "trivial")}, r_max=0.4),
        Scenario("motion", "grid", _motion_union(), ((-2.0, -2.0), (-2.0 + 383 / 64, -2.0 + 383 / 64)),
                 {"smoke": (1 / 64,), "desk": (1 / 64,), "deep": (1 / 64,)}, {}, (1.0,),
                 {"bit-identity": Expectation(0.0, 0.0, "trivial")}),
        Scenario("cantor-locality", "raster", cantor_set(), ((-2.0,), (9.0,)),
                 {"smoke": (2.0 ** -12,), "desk": (2.0 ** -14,), "deep": (2.0 ** -16,)},
                 {"shared": BoxRegion((0.0,), (1.0,), closed=True)}, (D_c,),
                 {"mask-equality": Expectation(0.0, 0.0, "trivial")}),
    ]
    return {s.name: s for s in sc}


SCENARIOS = _build_scenarios()


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise SchemaError(f"unknown scenario {name!r}") from None


# --------------------------------------------------------------------------
# results
# --------------------------------------------------------------------------


@dataclass
class Component:
    name: str
    error: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return bool(self.error <= self.tolerance)


@dataclass
class CheckResult:
    check: str
    scenario: str
    passed: bool
    margin: float
    tolerance: float
    details: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    h: float | None = None
    runtime: float = 0.0
    trend: list | None = None   # (h, margin) pairs when a ladder was run

    def to_record(self) -> dict:
        return {"check": self.check, "scenario": self.scenario, "passed": self.passed, "margin": self.margin,
                "tolerance": self.tolerance, "h": self.h, "runtime": self.runtime, "trend": self.trend,
                "details": self.details, "artifacts": [str(a) for a in self.artifacts]}


@dataclass
class VerifyConfig:
    tier: str = "desk"
    out: str | Path | None = None
    seed: int = 0
    trials: int = 100_000
    jobs: int = 1
    h: float | None = None          # run a single spacing instead of the tier ladder
    overrides: dict = field(default_factory=dict)   # scenario -> {quantity: expected value}

    def __post_init__(self):
        if self.tier not in TIERS:
            raise SchemaError(f"unknown tier {self.tier!r}; expected one of {TIERS}")


class Outcome:
    """Collects components, details and artifacts for one check run."""

    def __init__(self):
        self.components: list[Component] = []
        self.details: dict = {}
        self.artifacts: list[Path] = []

    def add(self, name: str, error: float, tolerance: float) -> None:
        err = float(error)
        self.components.append(Component(name, err if math.isfinite(err) else math.inf, float(tolerance)))

    def flag(self, name: str, ok: bool) -> None:
        self.add(name, 0.0 if ok else 1.0, 0.0)

    @property
    def passed(self) -> bool:
        return bool(self.components) and all(c.ok for c in self.components)


# --------------------------------------------------------------------------
# shared data
# --------------------------------------------------------------------------


class Context:
    """Per-suite cache of fields and exact oracles (small LRU for grid fields)."""

    def __init__(self, config: VerifyConfig, max_fields: int = 3):
        self.config = config
        self._fields: dict = {}
        self._order: list = []
        self._oracles: dict = {}
        self._lock = threading.RLock()
        self.max_fields = max_fields

    def field(self, sc: Scenario, h: float, key_extra: tuple = (), builder: Callable | None = None) -> DistanceField:
        key = (sc.name, h) + key_extra
        with self._lock:
            if key in self._fields:
                self._order.remove(key)
                self._order.append(key)
                return self._fields[key]
            fld = builder(sc, h) if builder else _default_field(sc, h)
            self._fields[key] = fld
            self._order.append(key)
            while len(self._order) > self.max_fields:
                self._fields.pop(self._order.pop(0))
            return fld

    def intervals(self, sc: Scenario) -> SelfSimilarIntervals:
        with self._lock:
            if sc.name not in self._oracles:
                self._oracles[sc.name] = SelfSimilarIntervals.from_spec(sc.spec)
            return self._oracles[sc.name]

    def artifact_dir(self, check: str, sc: Scenario, h: float | None) -> Path | None:
        if self.config.out is None:
            return None
        tag = sc.name if not h else f"{sc.name}_h{int(round(1 / h))}"
        p = Path(self.config.out) / check / tag
        p.mkdir(parents=True, exist_ok=True)
        return p


def raster_depth(spec, h: float) -> int:
    """Smallest IFS depth whose cylinders are below h/2."""
    rmax = float(np.max(spec.ratios))
    _, R = spec.bounding_ball()
    return max(1, int(math.ceil(math.log(h / (4 * R)) / math.log(rmax))))


def _default_field(sc: Scenario, h: float) -> DistanceField:
    lo, hi = sc.window
    if sc.kind == "raster":
        pts, eps = attractor_points(sc.spec, raster_depth(sc.spec, h))
        win = GridWindow.covering(lo, hi, h)
        return sample_field(cloud_oracle(pts, eps, sc.spec), win)
    return sample_field(distance_oracle(sc.spec), GridWindow.nodes(lo, hi, h))


def _grid_schedule(sc: Scenario, h: float, count: int | None = None, q: float = 2 ** -0.25) -> RadiusSchedule:
    if count:
        return RadiusSchedule(sc.r_max, q, count)
    return RadiusSchedule.for_grid(sc.r_max, h, q)


def _exact_schedule(r_max: float = 0.1, r_min: float = 1e-12, q: float = 2 ** -0.25) -> RadiusSchedule:
    return RadiusSchedule.down_to(r_max, r_min, q)


def _exact_volume(ctx: Context, sc: Scenario, region: str = "all") -> VolumeFunction:
    """Exact parallel-volume function restricted to a named region."""
    if sc.kind == "exact-gasket":
        return RightGasketTubes().volume_function(half=(region == "half"))
    ora = ctx.intervals(sc)
    if region == "all":
        return VolumeFunction(ora.volume, 1, tag="all")
    B = sc.regions[region]
    if isinstance(B, HalfSpace):
        plan = ora.local_plan(-math.inf, B.value)
    else:
        plan = ora.local_plan(B.lo[0], B.hi[0], closed_hi=True)
    return VolumeFunction(lambda r: ora.local_volume(plan, r), 1, tag=B.tag)


def _exact_surface_curve(sc: Scenario, V: VolumeFunction, sched: RadiusSchedule, region: str = "all"):
    if sc.kind == "exact-gasket":
        fn = RightGasketTubes().surface_function(half=(region == "half"))
        return surface_curve_from(lambda r: fn(r)[0], sched.radii, 2, "exact", V.tag)
    return surface_curve(V, sched, levels=0)


def _dump_curves(out: Outcome, ctx: Context, check: str, sc: Scenario, h, curves: dict, meta: dict | None = None):
    d = ctx.artifact_dir(check, sc, h)
    if d is None:
        return
    prov = mio.provenance(sc.spec, h, **(meta or {}))
    for name, c in curves.items():
        out.artifacts.append(mio.write_curve_csv(d / f"{name}.csv", c, prov))


# --------------------------------------------------------------------------
# checks
# --------------------------------------------------------------------------


def check_kneser(sc: Scenario, ctx: Context, h: float | None) -> Outcome:
    out = Outcome()
    if sc.kind.startswith("exact"):
        V = _exact_volume(ctx, sc)
        vc = volume_curve(V, _exact_schedule())
    else:
        fld = ctx.field(sc, h)
        vc = volume_curve(volume_function(fld), _grid_schedule(sc, h))
    rep = kneser_check(vc, trials=ctx.config.trials, seed=ctx.config.seed)
    out.add("violations", rep.violations, 0)
    out.details.update(trials=rep.trials, worst_margin=rep.worst_margin, worst_excess=rep.worst_excess,
                       slack=rep.slack_used)
    _dump_curves(out, ctx, "kneser", sc, h, {"volume": vc})
    return out


def _stacho_vs_contour(fld, V, radii, restriction=None):
    st = np.array([stacho_value(V, r) for r in radii])
    co = np.array([surface_area_contour(fld, r, restriction) for r in radii])
    return st, co


def check_stacho_local(sc: Scenario, ctx: Context, h: float) -> Outcome:
    out = Outcome()
    fld = ctx.field(sc, h)
    sched = _grid_schedule(sc, h, count=10)
    errs = {}
    for name, B in sc.regions.items():
        if name == "away":
            continue
        V = volume_function(fld, None if name == "all" else B)
        restr = None if name == "all" else preimage_mask(fld, B)
        st, co = _stacho_vs_contour(fld, V, sched.radii, restr)
        errs[name] = float(np.max(np.abs(st - co) / np.maximum(np.abs(co), 1e-300)))
        out.details[f"stacho[{name}]"] = st.tolist()
        out.details[f"contour[{name}]"] = co.tolist()
    if "stacho(1)" in sc.expected:
        e = sc.expected["stacho(1)"]
        val = stacho_value(volume_function(fld, sc.regions["edge"]), 1.0)
        out.add("stacho(1) vs expected", abs(val - e.value) / abs(e.value), e.tolerance)
        out.details["stacho(1)"] = val
    for name, err in errs.items():
        out.add(f"stacho vs contour [{name}]", err, 0.03)
    out.details["radii"] = sched.radii.tolist()
    return out


def check_diff_points(sc: Scenario, ctx: Context, h: float) -> Outcome:
    """One-sided derivatives agree (and match the contour) away from the exceptional radii."""
    out = Outcome()
    fld = ctx.field(sc, h)
    kinks = [1.0] if sc.name == "two-squares" else []
    radii = np.geomspace(1.3 if kinks else sc.r_max, 0.2, 16)
    q = 2 ** -0.25
    worst_lr, worst_c = 0.0, 0.0
    for name, B in sc.regions.items():
        if name == "away":
            continue
        Bx = None if name == "all" else B
        V = volume_function(fld, Bx)
        restr = None if Bx is None else preimage_mask(fld, B)
        smooth = [r for r in radii if all(abs(r - k) > 4 * r * (1 - q) for k in kinks)]
        for r in smooth:
            left, right = one_sided_derivatives(V, r)
            c = surface_area_contour(fld, r, restr)
            scale = max(abs(c), abs(left), 1e-12)
            if scale < 10 * h:    # nothing left in this restriction
                continue
            worst_lr = max(worst_lr, abs(right - left) / scale)
            worst_c = max(worst_c, abs(0.5 * (left + right) - c) / scale)
        for k in kinks:
            left, right = one_sided_derivatives(V, k)
            out.details[f"jump[{name}]@{k}"] = [left, right]
    out.add("left vs right at smooth radii", worst_lr, 0.03)
    out.add("mean vs contour at smooth radii", worst_c, 0.03)
    return out


def check_pos_boundary(sc: Scenario, ctx: Context, h: float) -> Outcome:
    """Boundary cells off the exoskeleton are touched from outside by a metric segment; ties are not."""
    out = Outcome()
    fld = ctx.field(sc, h)
    orc = distance_oracle(sc.spec)
    radii = {"two-squares": (0.5, 1.0, 1.3), "ball": (0.3, 0.6), "segment": (0.3, 0.6)}.get(sc.name, (0.5,))
    total, miss_unp, miss_tie, band = 0, 0, 0, 0
    for r in radii:
        idx = np.flatnonzero(boundary_cells(fld, r).cells.ravel())
        x, a = fld.window.centers(idx), fld.anchor[idx]
        u = x - a
        n = np.linalg.norm(u, axis=1)
        ok = n > 0
        delta = 0.5 * h
        y = a + ((n + delta) / np.where(ok, n, 1.0))[:, None] * u
        touch = ok & (np.abs(orc.distance(y) - (n + delta)) <= 1e-9 * (1 + n))
        gap = fld.gap.ravel()[idx]
        clear, tie = gap >= fld.tau_exo, gap == 0
        total += len(idx)
        miss_unp += int(np.sum(clear & ~touch))
        miss_tie += int(np.sum(tie & touch))
        band += int(np.sum(~clear & ~tie))
    out.add("boundary off exoskeleton not touched", miss_unp / max(total, 1), 0.0)
    out.add("exoskeleton ties touched", miss_tie / max(total, 1), 0.0)
    out.details.update(boundary_cells=total, ambiguous_band=band, radii=list(radii))
    return out


def check_measure_additivity(sc: Scenario, ctx: Context, h: float | None) -> Outcome:
    out = Outcome()
    worst = 0.0
    if sc.kind == "exact-gasket":
        T = RightGasketTubes()
        r = np.geomspace(0.3, 1e-10, 40)
        Q = T.quadrant_volumes(r)
        worst = float(np.max(np.abs(Q.sum(1) - T.volume(r)) / T.volume(r)))
        out.add("quadrant sum vs total", worst, 1e-12)
        out.flag("nonnegative", bool(np.all(Q >= 0)))
        return out
    if sc.kind == "exact-1d":
        ora = ctx.intervals(sc)
        P = CellPartition.dyadic([0.0], [1.0], 4, offset=0.5)
        lv = ExactLocalVolumes(ora, P)
        r = np.geomspace(0.3, 1e-11, 40)
        M = lv.volume_matrix(r)
        worst = float(np.max(np.abs(M.sum(1) - ora.volume(r)) / ora.volume(r)))
        out.add("cell sum vs total", worst, 1e-12)
        return out
    fld = ctx.field(sc, h)
    P = CellPartition.from_window(fld.window, 3, offset=0.5)
    pv = PartitionedVolume(fld, P)
    V = volume_function(fld)
    lo, hi = fld.window.lo, fld.window.hi
    mid = 0.5 * (lo[0] + hi[0]) + 0.3
    B1, B2 = HalfSpace(0, mid), HalfSpace(0, mid, below=False)   # disjoint up to {x = mid}
    V1, V2 = volume_function(fld, B1), volume_function(fld, B2)
    for r in np.geomspace(sc.r_max, 4 * h, 12):
        cells, bucket, outside = pv.volumes(r)
        tot = float(V(r)[0])
        worst = max(worst, abs(cells.sum() + bucket + outside - tot) / tot)
        worst = max(worst, abs(float(V1(r)[0] + V2(r)[0]) - tot) / tot)
    out.add("additivity", worst, 1e-9)
    return out


def _chain_values(sc: Scenario, ctx: Context, region: str):
    s = sc.exponents[0]
    V = _exact_volume(ctx, sc, region)
    sched = _exact_schedule()
    vc = volume_curve(V, sched)
    scv = _exact_surface_curve(sc, V, sched, region)
    return vc, scv, relative_content(vc, s), s_content(scv, s)


def check_chain_upper(sc: Scenario, ctx: Context, h) -> Outcome:
    out = Outcome()
    for region in ("all", "half"):
        vc, scv, M, S = _chain_values(sc, ctx, region)
        d, s = vc.dim, sc.exponents[0]
        Mu, Su = M.upper.value, S.upper.value
        left = ((d - s) / d * Su - Mu) / Mu
        right = (Mu - Su) / Mu
        out.add(f"((d-s)/d) S_upper <= M_upper [{region}]", left, 0.05)
        out.add(f"M_upper <= S_upper [{region}]", right, 0.05)
        out.details[region] = {"M_upper": Mu, "S_upper": Su}
        _dump_curves(out, ctx, "chain-upper", sc, None, {f"volume_{region}": vc, f"surface_{region}": scv})
    return out


def check_chain_lower(sc: Scenario, ctx: Context, h) -> Outcome:
    out = Outcome()
    for region in ("all", "half"):
        _, _, M, S = _chain_values(sc, ctx, region)
        Ml, Sl = M.lower.value, S.lower.value
        out.add(f"S_lower <= M_lower [{region}]", (Sl - Ml) / Ml, 0.05)
        out.details[region] = {"M_lower": Ml, "S_lower": Sl}
    return out


def _is_zero(ratios: np.ndarray, floor: float) -> bool:
    """Tail (last quarter) below 10 floor relative to the head (first quarter) scale."""
    n = max(len(ratios) // 4, 2)
    head = float(np.mean(np.abs(ratios[:n])))
    return bool(np.max(np.abs(ratios[-n:])) <= 10 * floor * head)


def check_zero_equivalence(sc: Scenario, ctx: Context, h: float | None) -> Outcome:
    """Zero Minkowski content and zero S-content are detected together."""
    out = Outcome()
    cases = []
    if sc.kind == "exact-1d":
        sched = _exact_schedule()
        D = sc.exponents[0]
        for region in ("all", "away"):
            V = _exact_volume(ctx, sc, region)
            vc = volume_curve(V, sched)
            scv = surface_curve(V, sched, levels=0)
            for s in (D, 0.95, 1.0):
                gm = minkowski_ratio(vc.radii, vc.values, 1, s)
                gs = s_ratio(scv.radii, scv.values, 1, s)
                cases.append((f"{region} s={s:.4g}", _is_zero(gm, EXACT_FLOOR), _is_zero(gs, EXACT_FLOOR)))
    else:
        fld = ctx.field(sc, h)
        sched = _grid_schedule(sc, h)
        for name in ("all", "away"):
            B = None if name == "all" else sc.regions[name]
            V = volume_function(fld, B)
            vc = volume_curve(V, sched)
            scv = surface_curve(V, sched, levels=2)
            s = sc.exponents[0]
            gm = minkowski_ratio(vc.radii, vc.values, 2, s)
            gs = s_ratio(scv.radii, scv.values, 2, s)
            cases.append((f"{name} s={s:.4g}", _is_zero(gm, h), _is_zero(gs, h)))
    mismatch = sum(zm != zs for _, zm, zs in cases)
    out.add("zero classification mismatches", mismatch / len(cases), 0.0)
    out.details["cases"] = [{"case": c, "M_zero": zm, "S_zero": zs} for c, zm, zs in cases]
    return out


def check_content_equivalence(sc: Scenario, ctx: Context, h) -> Outcome:
    out = Outcome()
    t0 = time.perf_counter()
    vc, scv, M, S = _chain_values(sc, ctx, "all")
    ma = M.limit.value if M.limit else float("nan")
    sa = S.limit.value if S.limit else float("nan")
    out.add("|M - S| / M", abs(ma - sa) / ma if M.limit and S.limit else math.inf, 0.05)
    out.add("M tail oscillation", M.oscillation, 0.02)
    out.add("S tail oscillation", S.oscillation, 0.02)
    runtime = time.perf_counter() - t0
    # independent cross-check against unions of depth-14 cylinder endpoints
    ora = ctx.intervals(sc)
    worst = 0.0
    for r in np.geomspace(1e-3, 1e-2, 8):
        lo, hi = bracket_volume(ora, 14, r)
        v = float(np.atleast_1d(ora.volume(r))[0])
        worst = max(worst, max(lo - v, v - hi, 0.0) / v)
    out.add("exact volume inside depth-14 bracket", worst, 1e-12)
    out.details.update(M=ma, S=sa, M_osc=M.oscillation, S_osc=S.oscillation, exact_path_seconds=runtime)
    return out


def _two_sided_class(radii: np.ndarray, g: np.ndarray, delta: float) -> tuple[bool, bool, float]:
    """(upper finite, lower positive, slope) from the log-log slope of the ratio.

    A ratio behaving like r^a has slope a: a < -delta means it blows up,
    a > delta means it vanishes."""
    ok = g > 0
    if ok.sum() < 2:
        return True, False, math.inf
    a = float(np.polyfit(np.log(radii[ok]), np.log(g[ok]), 1)[0])
    return a >= -delta, a <= delta, a


def check_two_sided(sc: Scenario, ctx: Context, h) -> Outcome:
    """Finiteness of the upper and positivity of the lower contents agree between M and S."""
    out = Outcome()
    D = sc.exponents[0]
    mism, cases = 0, []
    for region in ("all", "half"):
        V = _exact_volume(ctx, sc, region)
        sched = _exact_schedule()
        vc = volume_curve(V, sched)
        scv = _exact_surface_curve(sc, V, sched, region)
        step = min(0.2, 0.5 * (vc.dim - D), 0.5 * D)
        for s in (D - step, D, D + step):
            cm = _two_sided_class(vc.radii, minkowski_ratio(vc.radii, vc.values, vc.dim, s), step / 2)
            cs = _two_sided_class(scv.radii, s_ratio(scv.radii, scv.values, vc.dim, s), step / 2)
            mism += int(cm[:2] != cs[:2])
            cases.append({"region": region, "s": s, "M(finite,positive)": cm[:2], "S(finite,positive)": cs[:2],
                          "slopes": [cm[2], cs[2]]})
    out.add("classification mismatches", mism / len(cases), 0.0)
    exp_ok = all(tuple(c["M(finite,positive)"]) == (c["s"] >= D, c["s"] <= D) for c in cases)
    out.flag("classification matches the dimension", exp_ok)
    out.details["cases"] = cases
    return out


def check_vw_identity(sc: Scenario, ctx: Context, h: float | None) -> Outcome:
    out = Outcome()
    s = sc.exponents[0]
    if sc.kind.startswith("exact"):
        sched = _exact_schedule(q=FINE_Q)
        V = _exact_volume(ctx, sc)
        vc = volume_curve(V, sched)
        scv = _exact_surface_curve(sc, V, sched)
    else:
        fld = ctx.field(sc, h)
        sched = RadiusSchedule.down_to(sc.r_max, 4 * h, FINE_Q)
        V = volume_function(fld)
        vc = volume_curve(V, sched)
        scv = surface_curve(V, sched, levels=2)
    res = vw_identity_check(vc, scv, s)
    out.add("max residual", res.max_residual, 0.03)
    out.details.update(radii=len(sched.radii), residual_tail=float(res.residual[-1]))
    return out


def _cesaro_reference(V: Callable, d: int, s: float, period: float, r0: float = 1e-9, n: int = 20001) -> float:
    """Exact one-period logarithmic average of the Minkowski ratio at small scales."""
    x = np.linspace(math.log(r0), math.log(r0) - period, n)
    r = np.exp(x)
    g = minkowski_ratio(r, V(r), d, s)
    return float(np.trapezoid(g[::-1], x[::-1]) / period) if hasattr(np, "trapezoid") else \
        float(np.trapz(g[::-1], x[::-1]) / period)


def check_average_equivalence(sc: Scenario, ctx: Context, h) -> Outcome:
    out = Outcome()
    s = sc.exponents[0]
    V = _exact_volume(ctx, sc)
    sched = _exact_schedule()
    vc = volume_curve(V, sched)
    scv = _exact_surface_curve(sc, V, sched)
    a, b = average_content(vc, s), average_s_content(scv, s)
    ref = _cesaro_reference(V, vc.dim, s, sc.period)
    if a.value is not None and b.value is not None:
        out.add("|M~ - S~| / M~", abs(a.value - b.value) / a.value, 0.03)
        out.add("|M~ - exact| / exact", abs(a.value - ref) / ref, 0.02)
    else:
        out.add("|M~ - S~| / M~", math.inf, 0.03)
    out.flag("average Minkowski content stabilized", a.value is not None)
    out.flag("average S-content stabilized", b.value is not None)
    M, S = relative_content(vc, s), s_content(scv, s)
    out.details.update(M_avg=a.value, S_avg=b.value, exact=ref, M_avg_osc=a.oscillation, S_avg_osc=b.oscillation,
                       M_osc=M.oscillation, S_osc=S.oscillation,
                       M_limit=None if M.limit is None else M.limit.value,
                       S_limit=None if S.limit is None else S.limit.value)
    return out


def _exact_1d_families(ctx: Context, sc: Scenario, P: CellPartition, radii):
    s = sc.exponents[0]
    lv = ExactLocalVolumes(ctx.intervals(sc), P)
    mus = [exact_local_volume_measure(lv, r, s) for r in radii]
    sgs = [exact_local_surface_measure(lv, r, s) for r in radii]
    return mus, sgs


def _family_components(out: Outcome, fams: dict, ref: GriddedMeasure, label: str = ""):
    for name, fam in fams.items():
        rep = convergence_report(fam, ref)
        n = max(1, int(math.ceil(len(fam) / 3)))
        out.add(f"{label}{name} flat distance (last third)", float(np.max(rep.distances[-n:])), rep.delta)
        tail = np.array(rep.window_totals["all"][-n:])
        out.add(f"{label}{name} total mass", float(np.max(np.abs(tail - ref.total)) / ref.total), 0.05)
        out.details[f"{label}{name}_distances"] = rep.distances.tolist()


def check_local_equivalence(sc: Scenario, ctx: Context, h) -> Outcome:
    out = Outcome()
    s = sc.exponents[0]
    sched = _exact_schedule(1e-2, 1e-12)
    vc = volume_curve(_exact_volume(ctx, sc), sched)
    M = relative_content(vc, s)
    if M.limit is None:
        raise EstimationError("Minkowski content did not stabilize; local equivalence needs a limit")
    P = CellPartition.dyadic([0.0], [1.0], 4, offset=0.5)
    mus, sgs = _exact_1d_families(ctx, sc, P, sched.radii)
    ref = reference_measure(sc.spec, P, M.limit.value, depth=14)
    _family_components(out, {"mu": mus, "sigma": sgs}, ref)
    out.details["M"] = M.limit.value
    d = ctx.artifact_dir("local-equivalence", sc, None)
    if d is not None:
        prov = mio.provenance(sc.spec, None, sched, partition=P.id)
        out.artifacts.append(mio.write_measure_csv(d / "mu.csv", mus[-3:], prov))
        out.artifacts.append(mio.write_measure_csv(d / "sigma.csv", sgs[-3:], prov))
    return out


def check_local_unbounded(sc: Scenario, ctx: Context, h: float) -> Outcome:
    out = Outcome()
    fld = ctx.field(sc, h)
    sched = RadiusSchedule.for_grid(sc.r_max, h)
    n = max(1, len(sched.radii) // 3)
    s = sc.exponents[0]
    worst_dim, worst_mass = 0.0, 0.0
    for name, B in sc.regions.items():
        V = volume_function(fld, B)
        vc = volume_curve(V, sched)
        de = dimension_estimate(vc)
        pre = preimage_mask(fld, B)
        mu = vc.values / (kappa(2 - s) * sched.radii ** (2 - s))
        sg = np.array([surface_area_contour(fld, r, pre) for r in sched.radii]) / (
            (2 - s) * kappa(2 - s) * sched.radii ** (1 - s))
        worst_dim = max(worst_dim, abs(de.value))
        worst_mass = max(worst_mass, float(np.max(np.abs(mu[-n:] - sg[-n:]) / mu[-n:])))
        out.details[name] = {"dimension": de.value, "mu_tail": mu[-n:].tolist(), "sigma_tail": sg[-n:].tolist()}
    out.add("|dimension|", worst_dim, 0.05)
    out.add("mu vs sigma window mass", worst_mass, 0.05)
    return out


def check_average_local(sc: Scenario, ctx: Context, h) -> Outcome:
    out = Outcome()
    s = sc.exponents[0]
    sched = _exact_schedule(1e-3 if sc.kind == "exact-gasket" else 1e-2, 1e-12)
    vc = volume_curve(_exact_volume(ctx, sc), sched)
    av = average_content(vc, s)
    if av.value is None:
        raise EstimationError("average Minkowski content did not stabilize")
    if sc.kind == "exact-gasket":
        T = RightGasketTubes()
        mus = [quadrant_measure(T, r, s) for r in sched.radii]
        sgs = [quadrant_measure(T, r, s, surface=True) for r in sched.radii]
        P = QUADRANTS
    else:
        P = CellPartition.dyadic([0.0], [1.0], 3, offset=0.5)
        mus, sgs = _exact_1d_families(ctx, sc, P, sched.radii)
    ref = reference_measure(sc.spec, P, av.value, depth=12 if sc.kind == "exact-1d" else 9)
    _family_components(out, {"mu~": average_local_measure(mus), "sigma~": average_local_measure(sgs)}, ref)
    # the plain families are expected to keep oscillating in the lattice case
    d_plain = [flat_distance(m, ref) for m in mus[-len(mus) // 3:]]
    out.details.update(M_avg=av.value, plain_mu_tail_distance=[min(d_plain), max(d_plain)])
    return out


def check_locality(sc: Scenario, ctx: Context, h: float) -> Outcome:
    """Adding a far-away ball leaves the local data near the set unchanged."""
    out = Outcome()
    lo, hi = sc.window
    pts, eps = attractor_points(sc.spec, raster_depth(sc.spec, h))
    ball = np.arange(6.0, 7.0 + h / 4, h / 2)[:, None]   # [6, 7]: distance 5 from conv(K)
    win = GridWindow.nodes(lo, hi, h)
    f1 = ctx.field(sc, h, ("alone",), lambda s, hh: sample_field(cloud_oracle(pts, eps, sc.spec), win))
    f2 = ctx.field(sc, h, ("with-ball",), lambda s, hh: sample_field(cloud_oracle(np.vstack([pts, ball]), eps), win))
    B = sc.regions["shared"]
    P = CellPartition.dyadic([0.0], [1.0], 3)
    pv1, pv2 = PartitionedVolume(f1, P), PartitionedVolume(f2, P)
    diff = 0
    radii = np.geomspace(5.0 / 3.0 * (1 - 1e-6), 4 * h, 30)
    for r in radii:
        m1 = (preimage_mask(f1, B) & parallel_mask(f1, r)).cells
        m2 = (preimage_mask(f2, B) & parallel_mask(f2, r)).cells
        diff += int(np.sum(m1 != m2))
        diff += int(np.sum(pv1.volumes(r)[0] != pv2.volumes(r)[0]))
    out.add("differing cells", diff, 0)
    out.details.update(radii=len(radii), r_max=float(radii[0]))
    return out


def check_homogeneity_motion(sc: Scenario, ctx: Context, h: float) -> Outcome:
    out = Outcome()
    lo, hi = np.asarray(sc.window[0]), np.asarray(sc.window[1])
    s = sc.exponents[0]
    radii = [0.5, 0.3, 0.25, 0.125]

    def masses(spec, wlo, whi, hh, rr):
        f = sample_field(distance_oracle(spec), GridWindow.nodes(wlo, whi, hh))
        P = CellPartition.cell_aligned(f.window, 8)
        pv = PartitionedVolume(f, P)
        return [local_volume_measure(f, r, s, P, pv=pv).masses.reshape(8, 8) for r in rr]

    base = masses(sc.spec, lo, hi, h, radii)
    scaled = masses(_motion_union(2.0), 2 * lo, 2 * hi, 2 * h, [2 * r for r in radii])
    sh = np.array([5 * h, -3 * h])
    shifted = masses(_motion_union(shift=tuple(sh)), lo + sh, hi + sh, h, radii)
    flipped = masses(_motion_union(flip=True), np.array([-hi[0], lo[1]]), np.array([-lo[0], hi[1]]), h, radii)
    swapped = masses(_motion_union(swap=True), lo[::-1], hi[::-1], h, radii)

    def worst(pairs):
        return max(float(np.max(np.abs(a - b))) for a, b in pairs)

    out.add("homogeneity lambda=2", worst((2.0 ** s * a, b) for a, b in zip(base, scaled)), 0.0)
    out.add("translation", worst(zip(base, shifted)), 0.0)
    out.add("reflection", worst((a[::-1], b) for a, b in zip(base, flipped)), 0.0)
    out.add("axis swap", worst((a.T, b) for a, b in zip(base, swapped)), 0.0)
    return out


def check_two_squares(sc: Scenario, ctx: Context, h: float) -> Outcome:
    out = Outcome()
    fld = ctx.field(sc, h)
    B = sc.regions["edge"]
    st = stacho_value(volume_function(fld, B), 1.0)
    pre = preimage_mask(fld, B)
    open_len = surface_area_contour(fld, 1.0, pre)
    closed_len = surface_area_contour(fld, 1.0, pre.dilate(1))
    e1, e2, e3 = sc.expected["stacho(1)"], sc.expected["open(1)"], sc.expected["closure(1)"]
    out.add("stacho at r=1", abs(st - e1.value) / e1.value, e1.tolerance)
    out.add("open preimage length / floor", open_len / h, e2.tolerance)
    out.add("closure preimage length", abs(closed_len - e3.value) / e3.value, e3.tolerance)
    out.details.update(triple=[st, open_len, closed_len], floor=h, exo_cells=int(fld.exo.sum()))
    return out


def check_selfsimilar_local(sc: Scenario, ctx: Context, h: float | None) -> Outcome:
    """The normalized local volume measures approach the natural measure."""
    out = Outcome()
    s = sc.exponents[0]
    if sc.kind == "exact-1d":
        sched = _exact_schedule(1e-2, 1e-12)
        P = CellPartition.dyadic([0.0], [1.0], 4, offset=0.5)
        mus, _ = _exact_1d_families(ctx, sc, P, sched.radii)
    else:
        fld = ctx.field(sc, h)
        sched = _grid_schedule(sc, h)
        P = QUADRANTS
        pv = PartitionedVolume(fld, P)
        mus = [local_volume_measure(fld, r, s, P, pv=pv) for r in sched.radii]
    ref = reference_measure(sc.spec, P, 1.0, depth=12 if sc.spec.dim == 1 else 9)
    normed = [GriddedMeasure(P, m.masses / m.total, m.mode, m.source, m.param, s) for m in mus]
    n = max(1, len(normed) // 3)
    dist = [flat_distance(m, ref) for m in normed[-n:]]
    out.add("flat distance of normalized measure (last third)", max(dist), 0.05)
    out.details["distances"] = dist
    return out


@dataclass(frozen=True)
class CheckDef:
    fn: Callable
    scenarios: tuple
    ladder: bool = False     # run across the tier's h ladder and require a nonincreasing trend
    anchor: str = ""


CHECKS: dict[str, CheckDef] = {
    "kneser": CheckDef(check_kneser, ("ball", "segment", "cantor", "two-squares"), anchor="Kneser inequality"),
    "stacho-local": CheckDef(check_stacho_local, ("ball", "segment", "two-squares"), ladder=True,
                             anchor="localized Stacho formula"),
    "diff-points": CheckDef(check_diff_points, ("two-squares", "ball"), anchor="differentiability off exceptions"),
    "pos-boundary": CheckDef(check_pos_boundary, ("two-squares", "ball", "segment"),
                             anchor="boundary off the exoskeleton is positive"),
    "measure-additivity": CheckDef(check_measure_additivity, ("two-squares", "cantor", "gasket"),
                                   anchor="restricted volume is a measure"),
    "chain-upper": CheckDef(check_chain_upper, ("cantor", "nonlattice", "gasket"), anchor="upper content chain"),
    "chain-lower": CheckDef(check_chain_lower, ("cantor", "nonlattice", "gasket"), anchor="lower content chain"),
    "zero-equivalence": CheckDef(check_zero_equivalence, ("cantor", "two-squares"), anchor="zero contents"),
    "content-equivalence": CheckDef(check_content_equivalence, ("nonlattice",), anchor="measurability"),
    "two-sided": CheckDef(check_two_sided, ("cantor", "nonlattice", "gasket"), anchor="two-sided bounds"),
    "vw-identity": CheckDef(check_vw_identity, ("ball", "segment", "cantor", "nonlattice", "gasket"),
                            anchor="log-integral identity"),
    "average-equivalence": CheckDef(check_average_equivalence, ("cantor", "gasket"), anchor="average contents"),
    "local-equivalence": CheckDef(check_local_equivalence, ("nonlattice",), anchor="local contents"),
    "local-equivalence-unbounded": CheckDef(check_local_unbounded, ("lattice",), anchor="unbounded windows"),
    "average-local-equivalence": CheckDef(check_average_local, ("cantor", "gasket"), anchor="average local"),
    "locality": CheckDef(check_locality, ("cantor-locality",), anchor="local determination"),
    "homogeneity-motion": CheckDef(check_homogeneity_motion, ("motion",), anchor="homogeneity and motions"),
    "two-squares": CheckDef(check_two_squares, ("two-squares",), ladder=True, anchor="two-squares triple"),
    "selfsimilar-local": CheckDef(check_selfsimilar_local, ("nonlattice", "gasket-grid"),
                                  anchor="natural measure"),
}

SUITES = {
    "all": tuple(CHECKS),
    "default": tuple(CHECKS),
    "paper": ("stacho-local", "two-squares", "chain-upper", "chain-lower", "content-equivalence",
              "average-equivalence", "local-equivalence", "average-local-equivalence"),
    "exact": ("chain-upper", "chain-lower", "content-equivalence", "two-sided", "average-equivalence",
              "local-equivalence", "average-local-equivalence"),
}


# --------------------------------------------------------------------------
# runners
# --------------------------------------------------------------------------


def _single(check: str, cdef: CheckDef, sc: Scenario, ctx: Context, h) -> CheckResult:
    t0 = time.perf_counter()
    try:
        out = cdef.fn(sc, ctx, h)
    except (MinklocError, ValueError) as exc:
        return CheckResult(check, sc.name, False, math.inf, math.nan, {"error": f"{type(exc).__name__}: {exc}"},
                           h=h, runtime=time.perf_counter() - t0)
    comp = out.components
    details = dict(out.details)
    details["components"] = [{"name": c.name, "error": c.error, "tolerance": c.tolerance, "ok": c.ok} for c in comp]
    return CheckResult(check, sc.name, out.passed, comp[0].error, comp[0].tolerance, details, out.artifacts,
                       h=h, runtime=time.perf_counter() - t0)


def run_check(check: str, scenario: str | Scenario, config: VerifyConfig | None = None,
              context: Context | None = None) -> CheckResult:
    """Run one registered check on one scenario at the configured tier."""
    config = config or VerifyConfig()
    if check not in CHECKS:
        raise SchemaError(f"unknown check {check!r}")
    cdef = CHECKS[check]
    sc = get_scenario(scenario) if isinstance(scenario, str) else scenario
    for q, v in config.overrides.get(sc.name, {}).items():
        if q not in sc.expected:
            raise SchemaError(f"scenario {sc.name!r} has no expected quantity {q!r}")
        e = sc.expected[q]
        sc = sc.with_expected(**{q: Expectation(float(v), e.tolerance, e.provenance)})
    ctx = context or Context(config)
    needs_grid = sc.kind in ("grid", "raster")
    if not needs_grid:
        return _single(check, cdef, sc, ctx, None)
    hs = (config.h,) if config.h else sc.hs(config.tier)
    if not hs:
        raise SchemaError(f"scenario {sc.name!r} has no spacing for tier {config.tier!r}")
    if not cdef.ladder:
        hs = hs[-1:]
    results = [_single(check, cdef, sc, ctx, h) for h in hs]
    final = results[-1]
    if len(results) > 1:
        trend = [(r.h, r.margin) for r in results]
        ok = all(b.margin <= a.margin + TREND_SLACK for a, b in zip(results, results[1:]))
        final.trend = [list(t) for t in trend]
        final.details["trend_ok"] = ok
        final.runtime = sum(r.runtime for r in results)
        final.passed = final.passed and ok
    if final.artifacts or ctx.config.out is not None:
        d = ctx.artifact_dir(check, sc, final.h)
        if d is not None:
            p = mio.write_records(d / "result.json", [final.to_record()], mio.provenance(sc.spec, final.h))
            final.artifacts.append(p)
    return final


@dataclass
class SuiteResult:
    suite: str
    tier: str
    results: list
    runtime: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def summary_rows(self) -> list:
        return [(r.check, r.scenario, r.passed, r.margin, r.tolerance, "" if r.h is None else r.h,
                 "" if r.trend is None else r.details.get("trend_ok"), round(r.runtime, 3)) for r in self.results]

    def write(self, out: str | Path) -> Path:
        cols = ("check", "scenario", "passed", "margin", "tolerance", "h", "trend_ok", "runtime_s")
        meta = mio.provenance(None, None, suite=self.suite, tier=self.tier)
        # runtimes vary between runs, so they go to the records file only
        rows = [row[:-1] for row in self.summary_rows()]
        path = mio.write_csv(Path(out) / "summary.csv", cols[:-1], rows, meta)
        mio.write_records(Path(out) / "results.json", [r.to_record() for r in self.results], meta)
        return path


def resolve_suite(suite: str) -> list[tuple[str, str]]:
    """(check, scenario) pairs of a named suite, a single check id, or a JSON manifest path."""
    if suite in SUITES:
        return [(c, s) for c in SUITES[suite] for s in CHECKS[c].scenarios]
    if suite in CHECKS:
        return [(suite, s) for s in CHECKS[suite].scenarios]
    p = Path(suite)
    if p.suffix == ".json" and p.exists():
        doc = json.loads(p.read_text())
        pairs = []
        for item in doc.get("checks", []):
            c = item["check"]
            if c not in CHECKS:
                raise SchemaError(f"manifest: unknown check {c!r}")
            for s in item.get("scenarios", CHECKS[c].scenarios):
                get_scenario(s)
                pairs.append((c, s))
        return pairs
    raise SchemaError(f"unknown suite {suite!r}")


def run_suite(suite: str = "all", tier: str = "desk", config: VerifyConfig | None = None) -> SuiteResult:
    config = dataclasses.replace(config, tier=tier) if config else VerifyConfig(tier=tier)
    pairs = resolve_suite(suite)
    ctx = Context(config)
    t0 = time.perf_counter()
    # grid checks of one scenario share fields, so keep them adjacent
    order = sorted(range(len(pairs)), key=lambda i: (pairs[i][1], i))
    if config.jobs > 1:
        with ThreadPoolExecutor(config.jobs) as ex:
            futs = {i: ex.submit(run_check, pairs[i][0], pairs[i][1], config, ctx) for i in order}
            res = {i: f.result() for i, f in futs.items()}
    else:
        res = {i: run_check(pairs[i][0], pairs[i][1], config, ctx) for i in order}
    results = [res[i] for i in range(len(pairs))]
    out = SuiteResult(suite, tier, results, time.perf_counter() - t0)
    if config.out is not None:
        out.write(config.out)
    return out
