"""Command-line front end.

Commands: ``validate``, ``field``, ``contents``, ``local``, ``average`` and
``verify``. Every file written carries a ``# key: value`` provenance header;
identical arguments give byte-identical files.

Exit codes: 0 ok, 1 check failure, 2 schema error, 3 geometry error,
4 resource cap exceeded.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import io as mio
from .contents import (RadiusSchedule, VolumeFunction, average_content, average_s_content, kneser_check,
                       relative_content, s_content, stacho_value, surface_curve, surface_curve_from,
                       volume_curve, dimension_estimate)
from .distfield import (DEFAULT_CELL_CAP, BoxRegion, Everything, GridWindow, HalfSpace, Region,
                        exoskeleton_mask, parse_region, preimage_mask, sample_field, surface_area_contour,
                        volume_function)
from .errors import (DataError, EstimationError, GeometryError, MarginError, MinklocError, ResourceError,
                     SchemaError)
from .gasket import QUADRANTS, RightGasketTubes, quadrant_measure
from .interval import SelfSimilarIntervals
from .localmeasure import (CellPartition, PartitionedVolume, average_local_measure, convergence_report,
                           exact_local_surface_measure, exact_local_volume_measure, ExactLocalVolumes,
                           local_surface_measure, local_volume_measure, reference_measure)
from .setspec import (Ball, IFSAttractor, PrimitiveUnion, Segment, SetSpec, UnboundedAnalytic, attractor_points,
                      bounding_box, cantor_set, check_ssc, cloud_oracle, distance_oracle, integer_lattice,
                      lattice_check, moran_dimension, nonlattice_1d, parse_setspec, sierpinski_gasket, two_squares)

EXIT_OK, EXIT_CHECK, EXIT_SCHEMA, EXIT_GEOMETRY, EXIT_RESOURCE = 0, 1, 2, 3, 4
Q_CLI = 2.0 ** -0.25
EXACT_R_MIN = 1e-12

BUILTINS = {
    "ball": lambda: PrimitiveUnion((Ball((0.0, 0.0), 1.0),), 2),
    "segment": lambda: PrimitiveUnion((Segment((-1.0, 0.0), (1.0, 0.0)),), 2),
    "two-squares": two_squares,
    "cantor": cantor_set,
    "nonlattice": nonlattice_1d,
    "gasket": sierpinski_gasket,
    "lattice": lambda: integer_lattice(2),
}


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass
class RunConfig:
    spec: SetSpec
    spec_source: str
    window: tuple | None = None
    h: float | None = None
    r_max: float | None = None
    q: float = Q_CLI
    count: int | None = None
    regions: list = field(default_factory=lambda: [Everything()])
    exponents: list | None = None
    partition_level: int | None = None
    partition_offset: float | None = None
    out: Path = Path("minkloc_out")
    max_cells: int = DEFAULT_CELL_CAP
    seed: int = 0
    trials: int = 100_000

    def __post_init__(self):
        if self.max_cells <= 0 or self.trials <= 0:
            raise SchemaError("caps must be positive")
        if self.h is not None and not self.h > 0:
            raise SchemaError("--h must be positive")
        if self.r_max is not None and not self.r_max > 0:
            raise SchemaError("--rmax must be positive")
        if not 0 < self.q < 1:
            raise SchemaError("--q must lie in (0, 1)")
        if self.count is not None and self.count < 3:
            raise SchemaError("--K must be at least 3")


def load_spec(text: str) -> SetSpec:
    """``builtin:NAME`` or a path to a JSON set-spec document."""
    if text.startswith("builtin:"):
        name = text.split(":", 1)[1]
        if name not in BUILTINS:
            raise SchemaError(f"unknown builtin {name!r}; choose from {sorted(BUILTINS)}")
        return BUILTINS[name]()
    try:
        body = Path(text).read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read spec {text!r}: {exc.strerror}") from exc
    return parse_setspec(body)


def parse_window(text: str) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """``x0,y0;x1,y1`` -> (lo, hi)."""
    try:
        a, b = text.split(";")
        lo, hi = tuple(map(float, a.split(","))), tuple(map(float, b.split(",")))
    except ValueError:
        raise SchemaError(f"window: expected 'lo1,lo2;hi1,hi2', got {text!r}") from None
    if len(lo) != len(hi) or not all(x < y for x, y in zip(lo, hi)):
        raise GeometryError(f"window: empty or mismatched box {text!r}")
    return lo, hi


def config_from_args(args) -> RunConfig:
    spec = load_spec(args.spec)
    regions = [parse_region(b) for b in (args.B or ["all"])]
    return RunConfig(spec, args.spec, parse_window(args.window) if args.window else None, args.h, args.rmax,
                     args.q, args.K, regions, args.s, args.partition_level, args.partition_offset,
                     Path(args.out or "minkloc_out"), args.max_cells, args.seed, args.trials)


# --------------------------------------------------------------------------
# volume sources
# --------------------------------------------------------------------------


def _is_right_gasket(spec: SetSpec) -> bool:
    ref = sierpinski_gasket()
    if not isinstance(spec, IFSAttractor) or spec.dim != 2 or len(spec.maps) != 3:
        return False
    key = lambda m: (m.ratio, tuple(m.translation), tuple(m.rotation.ravel()))
    return sorted(map(key, spec.maps)) == sorted(map(key, ref.maps))


def exact_available(cfg: RunConfig) -> bool:
    """No grid spacing given and a closed-form oracle exists for the set."""
    if cfg.h is not None or not isinstance(cfg.spec, IFSAttractor):
        return False
    return (cfg.spec.dim == 1 and cfg.spec.separation == "ssc") or _is_right_gasket(cfg.spec)


def _hull_box(spec: SetSpec) -> tuple[np.ndarray, np.ndarray]:
    """Axis box of the set; for attractors the box of the maps' fixed points
    when it holds the whole sample cloud (exact for the canonical sets)."""
    if isinstance(spec, IFSAttractor):
        fp = np.array([m.fixed_point() for m in spec.maps])
        lo, hi = fp.min(axis=0), fp.max(axis=0)
        pts, eps = attractor_points(spec, 8)
        tol = 1e-12 * float(np.max(hi - lo))
        if np.all(pts >= lo - tol) and np.all(pts <= hi + tol):
            return lo, hi
        return pts.min(axis=0) - eps, pts.max(axis=0) + eps
    return bounding_box(spec)


def default_h(cfg: RunConfig) -> float:
    if cfg.h is not None:
        return cfg.h
    lo, hi = cfg.window if cfg.window else _hull_box(cfg.spec)
    extent = float(np.max(np.asarray(hi) - np.asarray(lo)))
    return 2.0 ** math.floor(math.log2(extent / (1024 if cfg.spec.dim == 2 else 4096)))


def default_rmax(cfg: RunConfig, exact: bool) -> float:
    if cfg.r_max is not None:
        return cfg.r_max
    if exact:
        return 0.1
    if isinstance(cfg.spec, UnboundedAnalytic):
        return 0.4 * float(cfg.spec.params.get("spacing", 1.0))
    lo, hi = _hull_box(cfg.spec)
    return max(0.05 * float(np.max(np.asarray(hi) - np.asarray(lo))), 16 * default_h(cfg))


def schedule(cfg: RunConfig, exact: bool, h: float | None, r_max: float | None = None) -> RadiusSchedule:
    r0 = r_max if r_max is not None else default_rmax(cfg, exact)
    if cfg.count:
        return RadiusSchedule(r0, cfg.q, cfg.count)
    if exact:
        return RadiusSchedule.down_to(r0, EXACT_R_MIN, cfg.q)
    return RadiusSchedule.for_grid(r0, h, cfg.q)


def grid_window(cfg: RunConfig, h: float, r_max: float) -> tuple[tuple, tuple]:
    if cfg.window is not None:
        return cfg.window
    if isinstance(cfg.spec, UnboundedAnalytic):
        raise SchemaError("unbounded sets need an explicit --window")
    lo, hi = bounding_box(cfg.spec)
    # curves difference volumes up to r (2 - q); leave room beyond that
    pad = 1.5 * r_max + 8 * h
    return tuple(lo - pad), tuple(hi + pad)


def build_field(cfg: RunConfig, h: float, r_max: float):
    lo, hi = grid_window(cfg, h, r_max)
    spec = cfg.spec
    if isinstance(spec, IFSAttractor):
        from .verify import raster_depth
        win = GridWindow.covering(lo, hi, h)
        win.check_cap(cfg.max_cells)
        pts, eps = attractor_points(spec, raster_depth(spec, h))
        return sample_field(cloud_oracle(pts, eps, spec), win, cap=cfg.max_cells)
    win = GridWindow.nodes(lo, hi, h)
    return sample_field(distance_oracle(spec), win, cap=cfg.max_cells)


def _exact_1d_volume(ora: SelfSimilarIntervals, B: Region) -> VolumeFunction:
    def plan_volume(*plans_signs):
        return lambda r: sum(sg * ora.local_volume(p, r) for p, sg in plans_signs)

    if isinstance(B, Everything):
        return VolumeFunction(ora.volume, 1, tag=B.tag)
    if isinstance(B, HalfSpace) and B.axis == 0:
        if B.below:
            fn = plan_volume((ora.local_plan(-math.inf, B.value), 1.0))
        else:
            fn = plan_volume((ora.local_plan(B.value, math.inf, closed_hi=True), 1.0),
                             (ora.local_plan(B.value, B.value, closed_hi=True), -1.0))
        return VolumeFunction(fn, 1, tag=B.tag)
    if isinstance(B, BoxRegion):
        lo, hi = B.lo[0], B.hi[0]
        if B.closed:
            fn = plan_volume((ora.local_plan(lo, hi, closed_hi=True), 1.0))
        else:
            # [lo, hi) minus the preimage of the single point lo
            fn = plan_volume((ora.local_plan(lo, hi), 1.0), (ora.local_plan(lo, lo, closed_hi=True), -1.0))
        return VolumeFunction(fn, 1, tag=B.tag)
    raise GeometryError(f"exact 1D volumes support all, half-lines and intervals, not {B.tag}; pass --h")


def _gasket_half(B: Region) -> bool:
    if isinstance(B, Everything):
        return False
    if isinstance(B, HalfSpace) and B.axis == 0 and B.value == 0.5 and B.below:
        return True
    raise GeometryError(f"exact gasket volumes support B=all or half:0,0.5, not {B.tag}; pass --h")


class Curves:
    """Volume and surface curves for one (set, B) on one schedule."""

    def __init__(self, volume, surfaces: dict, primary: str, stacho):
        self.volume = volume
        self.surfaces = surfaces
        self.primary = primary
        self.stacho = stacho

    @property
    def surface(self):
        return self.surfaces[self.primary]


def _stacho_curve(V, radii, dim, tag, h, eps, levels):
    return surface_curve_from(lambda r: stacho_value(V, r, levels=levels), radii, dim, "stacho", tag, h, eps)


def compute_curves(cfg: RunConfig) -> tuple[list[Curves], dict]:
    """Curves for every --B region, plus provenance fields."""
    exact = exact_available(cfg)
    out = []
    if exact and cfg.spec.dim == 1:
        ora = SelfSimilarIntervals.from_spec(cfg.spec)
        sched = schedule(cfg, True, None)
        for B in cfg.regions:
            V = _exact_1d_volume(ora, B)
            vc = volume_curve(V, sched)
            vd = surface_curve(V, sched, levels=0)
            st = _stacho_curve(V, sched.radii, 1, V.tag, 0.0, 0.0, 0)
            out.append(Curves(vc, {"volume-difference": vd}, "volume-difference", st))
        return out, {"h": None, "schedule": sched, "oracle": "interval"}
    if exact:
        T = RightGasketTubes()
        sched = schedule(cfg, True, None)
        for B in cfg.regions:
            half = _gasket_half(B)
            V = T.volume_function(half)
            vc = volume_curve(V, sched)
            fn = T.surface_function(half)
            ex = surface_curve_from(lambda r: fn(r)[0], sched.radii, 2, "exact", V.tag)
            st = _stacho_curve(V, sched.radii, 2, V.tag, 0.0, 0.0, 0)
            out.append(Curves(vc, {"exact": ex}, "exact", st))
        return out, {"h": None, "schedule": sched, "oracle": "gasket-tubes"}
    h = default_h(cfg)
    sched = schedule(cfg, False, h)
    fld = build_field(cfg, h, sched.r_max)
    fractal = isinstance(cfg.spec, IFSAttractor)
    levels = 0 if fractal else 2
    for B in cfg.regions:
        V = volume_function(fld, None if isinstance(B, Everything) else B)
        vc = volume_curve(V, sched)
        surfs = {"volume-difference": surface_curve(V, sched, levels=levels)}
        primary = "volume-difference"
        if fld.window.dim == 2:
            pre = None if isinstance(B, Everything) else preimage_mask(fld, B)
            surfs["contour"] = surface_curve_from(lambda r: surface_area_contour(fld, r, pre), sched.radii, 2,
                                                  "contour", V.tag, fld.h, fld.eps)
            primary = "contour"
        st = _stacho_curve(V, sched.radii, fld.window.dim, V.tag, fld.h, fld.eps, levels)
        out.append(Curves(vc, surfs, primary, st))
    return out, {"h": h, "schedule": sched, "oracle": fld.method}


def exponents_for(cfg: RunConfig, curves: Curves) -> list[float]:
    if cfg.exponents:
        return list(cfg.exponents)
    if isinstance(cfg.spec, IFSAttractor):
        return [moran_dimension(cfg.spec)]
    return [float(round(dimension_estimate(curves.volume).value))]


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_validate(args) -> int:
    spec = load_spec(args.spec)
    print(f"variant: {type(spec).__name__}")
    print(f"dimension: {spec.dim}")
    if isinstance(spec, PrimitiveUnion):
        print(f"primitives: {len(spec.primitives)}")
        lo, hi = bounding_box(spec)
        print(f"bounding box: {mio.fmt(tuple(lo))} {mio.fmt(tuple(hi))}")
    elif isinstance(spec, IFSAttractor):
        print(f"maps: {len(spec.maps)}")
        print(f"separation: {spec.separation}")
        if spec.separation == "ssc":
            check_ssc(spec)
            print("strong separation: holds")
        print(f"similarity dimension: {mio.fmt(moran_dimension(spec))}")
        lat = lattice_check(spec)
        print(f"lattice type: {lat.kind}{' (inconclusive)' if lat.inconclusive else ''}")
    else:
        print(f"unbounded kind: {spec.kind}")
    print("valid")
    return EXIT_OK


def cmd_field(args) -> int:
    cfg = config_from_args(args)
    h = default_h(cfg)
    r_max = default_rmax(cfg, False)
    fld = build_field(cfg, h, r_max)
    meta = mio.provenance(cfg.spec, h, None, method=fld.method, tau_exo=fld.tau_exo)
    path = mio.dump_field(cfg.out / "field", fld, meta)
    exo = exoskeleton_mask(fld)
    print(f"cells: {fld.window.n_cells} shape: {fld.window.shape}")
    print(f"h: {mio.fmt(h)} oracle eps: {mio.fmt(fld.eps)} method: {fld.method}")
    print(f"exoskeleton cells (gap < {mio.fmt(fld.tau_exo)}): {exo.count}")
    print(f"wrote {path}")
    return EXIT_OK


def _gnuplot_stub(files: list[tuple[str, float, int]]) -> str:
    lines = ["# log-log scaling plot of V(r) / r^(d-s); columns: r, value, estimator, B_tag, h, eps_oracle",
             "# run from the output directory: gnuplot -p plot.gp",
             "set datafile separator ','", "set logscale xy", "set xlabel 'r'",
             "set ylabel 'V(r) / r^(d-s)'", "set key left"]
    plots = [f"'{f}' using 1:($2/$1**({d}-{s!r})) with linespoints title '{Path(f).stem} s={s:.4g}'"
             for f, s, d in files]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def cmd_contents(args) -> int:
    cfg = config_from_args(args)
    curves, info = compute_curves(cfg)
    out = cfg.out
    rows, records, plot_files = [], [], []
    for bi, cv in enumerate(curves):
        meta = mio.provenance(cfg.spec, info["h"], info["schedule"], B=cv.volume.tag, oracle=info["oracle"])
        vpath = mio.write_curve_csv(out / f"curves/volume_B{bi}.csv", cv.volume, meta)
        for name, sc in cv.surfaces.items():
            mio.write_curve_csv(out / f"curves/surface_B{bi}_{name}.csv", sc, meta)
        mio.write_curve_csv(out / f"curves/stacho_B{bi}.csv", cv.stacho, meta)
        kn = kneser_check(cv.volume, cfg.trials, cfg.seed)
        records.append({"B_tag": cv.volume.tag, "kind": "kneser", "trials": kn.trials,
                        "violations": kn.violations, "worst_excess": kn.worst_excess})
        for s in exponents_for(cfg, cv):
            ests = relative_content(cv.volume, s).estimates() + s_content(cv.surface, s).estimates()
            ests += [average_content(cv.volume, s), average_s_content(cv.surface, s)]
            for e in ests:
                rows.append((cv.volume.tag, e.s, e.kind, e.bound, "" if e.value is None else e.value,
                             e.oscillation, e.tail[0], e.tail[1], e.kappa))
                rec = e.to_record()
                rec.pop("sequence_t", None)
                rec.pop("sequence", None)
                records.append({"B_tag": cv.volume.tag, "surface_estimator": cv.primary, **rec})
                shown = "oscillating" if e.value is None else f"{e.value:.6g}"
                print(f"B={cv.volume.tag} s={s:.6g} {e.kind:9s} {e.bound:7s} {shown} "
                      f"(oscillation {e.oscillation:.3g})")
            plot_files.append((str(vpath.relative_to(out)), s, cv.volume.dim))
        st = cv.stacho
        print(f"B={cv.volume.tag} stacho at r={st.radii[0]:.6g}: {st.values[0]:.6g}; "
              f"kneser violations {kn.violations}/{kn.trials}")
    meta = mio.provenance(cfg.spec, info["h"], info["schedule"], oracle=info["oracle"])
    cols = ("B_tag", "s", "kind", "bound", "value", "oscillation", "tail_r_min", "tail_r_max", "kappa")
    mio.write_csv(out / "contents.csv", cols, rows, meta)
    mio.write_records(out / "contents.json", records, meta)
    if args.gnuplot_stub:
        stub = _gnuplot_stub(plot_files)
        (out / "plot.gp").write_text(stub)
        sys.stdout.write(stub)
    print(f"wrote {out / 'contents.csv'}")
    return EXIT_OK


def _partition(cfg: RunConfig, fld=None) -> CellPartition:
    d = cfg.spec.dim
    level = cfg.partition_level if cfg.partition_level is not None else (4 if d == 1 else 2)
    offset = cfg.partition_offset if cfg.partition_offset is not None else (0.5 if d == 1 else 0.0)
    if isinstance(cfg.spec, UnboundedAnalytic):
        lo, hi = (fld.window.lo, fld.window.hi) if cfg.window is None else cfg.window
    else:
        lo, hi = _hull_box(cfg.spec)
    return CellPartition.dyadic(lo, hi, level, offset=offset)


def local_families(cfg: RunConfig, s: float):
    """(mu family, sigma family, partition, schedule, h or None, total volume function)."""
    exact = exact_available(cfg)
    if exact and cfg.spec.dim == 1:
        sched = schedule(cfg, True, None, cfg.r_max or 1e-2)
        P = _partition(cfg)
        lv = ExactLocalVolumes(SelfSimilarIntervals.from_spec(cfg.spec), P)
        mus = [exact_local_volume_measure(lv, r, s) for r in sched.radii]
        sgs = [exact_local_surface_measure(lv, r, s) for r in sched.radii]
        return mus, sgs, P, sched, None, VolumeFunction(lv.oracle.volume, 1)
    if exact:
        if (cfg.partition_level or 1) != 1 or (cfg.partition_offset or 0.0) != 0.0:
            raise GeometryError("exact gasket measures live on the quadrant partition; pass --h for others")
        sched = schedule(cfg, True, None, cfg.r_max or 1e-3)
        T = RightGasketTubes()
        mus = [quadrant_measure(T, r, s) for r in sched.radii]
        sgs = [quadrant_measure(T, r, s, surface=True) for r in sched.radii]
        return mus, sgs, QUADRANTS, sched, None, T.volume_function()
    h = default_h(cfg)
    sched = schedule(cfg, False, h)
    fld = build_field(cfg, h, sched.r_max)
    P = _partition(cfg, fld)
    pv = PartitionedVolume(fld, P)
    levels = 0 if isinstance(cfg.spec, IFSAttractor) else 2
    mus = [local_volume_measure(fld, r, s, P, pv=pv) for r in sched.radii]
    sgs = [local_surface_measure(fld, r, s, P, levels=levels, pv=pv) for r in sched.radii]
    return mus, sgs, P, sched, h, volume_function(fld)


def _local_run(args, averaged: bool) -> int:
    cfg = config_from_args(args)
    cmd = "average" if averaged else "local"
    s = cfg.exponents[0] if cfg.exponents else (
        moran_dimension(cfg.spec) if isinstance(cfg.spec, IFSAttractor) else float(cfg.spec.dim - 1))
    mus, sgs, P, sched, h, V = local_families(cfg, s)
    if averaged:
        mus, sgs = average_local_measure(mus), average_local_measure(sgs)
    meta = mio.provenance(cfg.spec, h, sched, partition=P.id, s=s, command=cmd)
    out = cfg.out
    mio.write_measure_csv(out / "mu.csv", mus, meta)
    mio.write_measure_csv(out / "sigma.csv", sgs, meta)
    if not isinstance(cfg.spec, IFSAttractor):
        print(f"{cmd}: wrote {len(mus)} measures per family on {P.n_cells} cells; no reference measure")
        print("verdict: no-reference")
        return EXIT_OK
    # reference: content times the natural measure, from the (possibly averaged) total
    vol = volume_curve(V, sched)
    if averaged:
        est = average_content(vol, s)
    else:
        est = relative_content(vol, s).limit
    records = []
    if est is None or est.value is None:
        verdict = "oscillating"
        total = float(np.mean([m.total for m in mus[-max(1, len(mus) // 3):]]))
    else:
        total = est.value
        verdict = None
    ref = reference_measure(cfg.spec, P, total, depth=12 if cfg.spec.dim == 1 else 9)
    ok = True
    for name, fam in (("mu", mus), ("sigma", sgs)):
        rep = convergence_report(fam, ref)
        n = max(1, int(math.ceil(len(fam) / 3)))
        tail = float(np.max(rep.distances[-n:]))
        ok = ok and rep.below_threshold and rep.mass_preserved
        records.append({"family": name, **rep.to_record()})
        print(f"{name}: flat distance to reference over last third <= {tail:.3g} (threshold {rep.delta:.3g}); "
              f"mass preserved: {rep.mass_preserved}")
    if verdict is None:
        verdict = "below-threshold" if ok else "not-converged"
    mio.write_records(out / "report.json", records, {**meta, "verdict": verdict, "reference_total": mio.fmt(total)})
    print(f"verdict: {verdict}")
    return EXIT_CHECK if verdict == "not-converged" else EXIT_OK


def cmd_local(args) -> int:
    return _local_run(args, averaged=False)


def cmd_average(args) -> int:
    return _local_run(args, averaged=True)


def _parse_overrides(items) -> dict:
    out: dict = {}
    for item in items or []:
        try:
            key, value = item.split("=", 1)
            sc, qty = key.split(":", 1)
            out.setdefault(sc, {})[qty] = float(value)
        except ValueError:
            raise SchemaError(f"override: expected scenario:quantity=value, got {item!r}") from None
    return out


def cmd_verify(args) -> int:
    from .verify import VerifyConfig, run_suite
    cfg = VerifyConfig(args.tier, args.out, args.seed, args.trials, max(1, args.threads or 1), args.h,
                       _parse_overrides(args.override))
    res = run_suite(args.suite, args.tier, cfg)
    for r in res.results:
        status = "PASS" if r.passed else "FAIL"
        err = r.details.get("error", "")
        print(f"{status} {r.check:28s} {r.scenario:16s} margin {r.margin:.4g} / {r.tolerance:.4g} {err}".rstrip())
    n_pass = sum(r.passed for r in res.results)
    print(f"{n_pass}/{len(res.results)} passed (suite {args.suite}, tier {args.tier})")
    return EXIT_OK if res.passed else EXIT_CHECK


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, grid: bool = True) -> None:
    p.add_argument("--spec", required=True, help="set-spec JSON path or builtin:NAME")
    p.add_argument("--window", help="grid window 'lo1,lo2;hi1,hi2' (default: bounding box plus margin)")
    p.add_argument("--h", type=float, help="grid spacing; omit to use an exact oracle when one exists")
    p.add_argument("--rmax", type=float, help="largest radius of the schedule")
    p.add_argument("--q", type=float, default=Q_CLI, help="schedule ratio r_{k+1}/r_k")
    p.add_argument("--K", type=int, help="number of radii (default: down to the resolution floor)")
    p.add_argument("--B", action="append", help="restriction region, repeatable (see parse_region)")
    p.add_argument("--s", type=float, action="append", help="exponent, repeatable")
    p.add_argument("--partition-level", type=int, help="dyadic level of the partition")
    p.add_argument("--partition-offset", type=float, help="partition shift in units of one cell")
    p.add_argument("--max-cells", type=int, default=DEFAULT_CELL_CAP, help="cap on grid cells")
    p.add_argument("--trials", type=int, default=100_000, help="Kneser triples per curve")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="minkloc", description="Parallel-set volumes, contents and local measures.")
    ap.add_argument("--version", action="version", version=f"minkloc {__version__}")
    ap.add_argument("--threads", type=int, help="cap on worker threads")
    ap.add_argument("--out", help="output directory (default minkloc_out; verify writes nothing without it)")
    ap.add_argument("--seed", type=int, default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a set spec")
    p.add_argument("--spec", required=True)
    p.set_defaults(fn=cmd_validate)

    for name, fn, hlp in (("field", cmd_field, "sample and dump a distance field"),
                          ("contents", cmd_contents, "volume/surface curves and content estimates"),
                          ("local", cmd_local, "local volume and surface measures"),
                          ("average", cmd_average, "logarithmically averaged local measures")):
        p = sub.add_parser(name, help=hlp)
        _common(p)
        if name == "contents":
            p.add_argument("--gnuplot-stub", action="store_true", help="also emit a gnuplot script")
        p.set_defaults(fn=fn)

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("--suite", default="all", help="suite name, check id, or JSON manifest")
    p.add_argument("--tier", default="smoke", choices=("smoke", "desk", "deep"))
    p.add_argument("--h", type=float, help="single grid spacing instead of the tier ladder")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--override", action="append", help="scenario:quantity=value replaces an expected value")
    p.set_defaults(fn=cmd_verify)
    return ap


def _hoist(argv: list[str]) -> list[str]:
    # global options may also follow the subcommand
    glob = {"--threads", "--out", "--seed"}
    head, rest = [], []
    it = iter(argv)
    for a in it:
        key = a.split("=", 1)[0]
        if key in glob:
            head.append(a)
            if "=" not in a:
                head.append(next(it, ""))
        else:
            rest.append(a)
    return head + rest


def _set_threads(n: int | None) -> None:
    if not n:
        return
    if n < 1:
        raise SchemaError("--threads must be positive")
    import numba
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(_hoist(argv))
    try:
        _set_threads(args.threads)
        return args.fn(args)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (GeometryError, MarginError) as exc:
        print(f"geometry error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (EstimationError, DataError) as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except MinklocError as exc:   # pragma: no cover - all subclasses handled above
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
