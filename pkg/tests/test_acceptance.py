"""End-to-end acceptance checks, one test per criterion, at the stated tolerances.

Each test records a PASS/FAIL line (printed in the terminal summary) before asserting.
"""
import math
import time

import numpy as np
import pytest

from minkloc.contents import (RadiusSchedule, VolumeFunction, average_content, average_s_content, dimension_estimate,
                              kappa, kneser_check, relative_content, s_content, stacho_value, surface_curve,
                              surface_curve_from, volume_curve, vw_identity_check)
from minkloc.distfield import (BallRegion, BoxRegion, GridWindow, HalfSpace, parallel_mask, preimage_mask,
                               raster_sites, sample_field, surface_area_contour, volume_function)
from minkloc.edt import squared_edt
from minkloc.gasket import QUADRANTS, RightGasketTubes, quadrant_measure
from minkloc.interval import SelfSimilarIntervals, bracket_volume
from minkloc.localmeasure import (CellPartition, ExactLocalVolumes, PartitionedVolume, average_local_measure,
                                  convergence_report, exact_local_surface_measure, exact_local_volume_measure,
                                  local_volume_measure, reference_measure)
from minkloc.setspec import (Ball, Box, PrimitiveUnion, Segment, attractor_points, cantor_set, cloud_oracle,
                             distance_oracle, integer_lattice, nonlattice_1d, sierpinski_gasket, two_squares)
from minkloc.verify import VerifyConfig, run_suite

from reference import renewal_content

D_CANTOR = math.log(2) / math.log(3)
D_GASKET = math.log(3) / math.log(2)
EDGE = BoxRegion((-1.0 - 1e-9, -1.0), (-1.0 + 1e-9, 1.0))  # open edge {-1} x (-1, 1)
H = 1 / 256

BALL = PrimitiveUnion((Ball((0.0, 0.0), 1.0),), 2)
SEGMENT = PrimitiveUnion((Segment((-1.0, 0.0), (1.0, 0.0)),), 2)


def grid_field(spec, lo, hi, h=H):
    return sample_field(distance_oracle(spec), GridWindow.nodes(lo, hi, h))


@pytest.fixture(scope="module")
def ball_field():
    return grid_field(BALL, (-2, -2), (2, 2))


@pytest.fixture(scope="module")
def segment_field():
    return grid_field(SEGMENT, (-2, -1.25), (2, 1.25))


@pytest.fixture(scope="module")
def squares_field():
    return grid_field(two_squares(), (-4.5, -2.5), (4.5, 2.5))


def exact_schedule(r_max=0.1, r_min=1e-12, q=2 ** -0.25):
    return RadiusSchedule.down_to(r_max, r_min, q)


def interval_volume(spec, region=None):
    ora = SelfSimilarIntervals.from_spec(spec)
    if region is None:
        return ora, VolumeFunction(ora.volume, 1, tag="all")
    plan = ora.local_plan(-math.inf, region.value)
    return ora, VolumeFunction(lambda r: ora.local_volume(plan, r), 1, tag=region.tag)


def exact_curves(name, half=False, sched=None):
    """(volume curve, surface curve, exponent) of an exact 1D set or the gasket."""
    sched = sched or exact_schedule()
    if name == "gasket":
        T = RightGasketTubes()
        V = T.volume_function(half=half)
        fn = T.surface_function(half=half)
        vc = volume_curve(V, sched)
        return vc, surface_curve_from(lambda r: fn(r)[0], sched.radii, 2, "exact", V.tag), D_GASKET
    spec = cantor_set() if name == "cantor" else nonlattice_1d()
    _, V = interval_volume(spec, HalfSpace(0, 0.5) if half else None)
    s = D_CANTOR if name == "cantor" else renewal_content([0.5, 1 / 3], [1 / 6])[0]
    return volume_curve(V, sched), surface_curve(V, sched, levels=0), s


# 1 ---------------------------------------------------------------------------------------


def test_two_squares_triple(criterion):
    t0 = time.perf_counter()
    fld = grid_field(two_squares(), (-5, -5), (5, 5))
    st = stacho_value(volume_function(fld, EDGE), 1.0)
    pre = preimage_mask(fld, EDGE)
    open_len = surface_area_contour(fld, 1.0, pre)
    closed_len = surface_area_contour(fld, 1.0, pre.dilate(1))
    dt = time.perf_counter() - t0
    ok = (abs(st - 1) <= 0.03 and open_len < 10 * fld.h and abs(closed_len - 2) / 2 <= 0.03 and dt < 30)
    criterion(1, ok, f"triple ({st:.4f}, {open_len:.2e}, {closed_len:.4f}) vs (1, <{10 * fld.h:.3g}, 2); {dt:.1f}s")
    assert ok


# 2 ---------------------------------------------------------------------------------------


def test_stacho_matches_contour(criterion, ball_field, segment_field, squares_field):
    t0 = time.perf_counter()
    cases = [("ball", ball_field, None), ("segment", segment_field, None),
             ("two-squares", squares_field, None), ("two-squares|edge", squares_field, EDGE)]
    radii = RadiusSchedule(0.8, 2 ** -0.25, 10).radii
    worst = {}
    for name, fld, B in cases:
        V = volume_function(fld, B)
        restr = None if B is None else preimage_mask(fld, B)
        st = np.array([stacho_value(V, r) for r in radii])
        co = np.array([surface_area_contour(fld, r, restr) for r in radii])
        worst[name] = float(np.max(np.abs(st - co) / co))
    dt = time.perf_counter() - t0
    ok = max(worst.values()) <= 0.03 and dt < 120
    criterion(2, ok, "max rel. error " + ", ".join(f"{k} {v:.4f}" for k, v in worst.items()) + f"; {dt:.1f}s")
    assert ok


# 3 ---------------------------------------------------------------------------------------


def test_kneser_no_violations(criterion, ball_field, segment_field, squares_field):
    curves = {
        "ball": volume_curve(volume_function(ball_field), RadiusSchedule.for_grid(0.8, H)),
        "segment": volume_curve(volume_function(segment_field), RadiusSchedule.for_grid(0.8, H)),
        "two-squares": volume_curve(volume_function(squares_field), RadiusSchedule.for_grid(0.8, H)),
        "cantor": volume_curve(interval_volume(cantor_set())[1], exact_schedule()),
    }
    viol = {k: kneser_check(c, trials=100_000, seed=0).violations for k, c in curves.items()}
    ok = all(v == 0 for v in viol.values())
    criterion(3, ok, "violations / 1e5 triples: " + ", ".join(f"{k} {v}" for k, v in viol.items()))
    assert ok


# 4 ---------------------------------------------------------------------------------------


def test_inequality_chain(criterion):
    worst, rows = -math.inf, []
    for name in ("cantor", "nonlattice", "gasket"):
        for half in (False, True):
            vc, scv, s = exact_curves(name, half)
            d = vc.dim
            M, S = relative_content(vc, s), s_content(scv, s)
            Mu, Su, Ml, Sl = M.upper.value, S.upper.value, M.lower.value, S.lower.value
            excess = max(((d - s) / d * Su - Mu) / Mu, (Mu - Su) / Mu, (Sl - Ml) / Ml)
            worst = max(worst, excess)
            rows.append(f"{name}{'|half' if half else ''} {excess:+.3f}")
    ok = worst <= 0.05
    criterion(4, ok, f"worst relative excess {worst:+.4f} (budget 0.05): " + ", ".join(rows))
    assert ok


# 5 ---------------------------------------------------------------------------------------


def test_nonlattice_content_equivalence(criterion):
    t0 = time.perf_counter()
    vc, scv, s = exact_curves("nonlattice")
    M, S = relative_content(vc, s), s_content(scv, s)
    dt = time.perf_counter() - t0
    ora = SelfSimilarIntervals.from_spec(nonlattice_1d())
    outside = 0.0
    for r in np.geomspace(1e-3, 1e-2, 8):
        lo, hi = bracket_volume(ora, 14, r)
        v = float(np.atleast_1d(ora.volume(r))[0])
        outside = max(outside, max(lo - v, v - hi, 0.0) / v)
    renewal = renewal_content([0.5, 1 / 3], [1 / 6])[1]
    stable = M.limit is not None and S.limit is not None
    agree = stable and abs(M.limit.value - S.limit.value) / M.limit.value <= 0.05
    ok = (stable and agree and M.oscillation < 0.02 and S.oscillation < 0.02 and outside <= 1e-12 and dt < 10)
    mv = M.limit.value if M.limit else float("nan")
    sv = S.limit.value if S.limit else float("nan")
    criterion(5, ok, f"M {mv:.5f} (osc {M.oscillation:.4f}), S {sv:.5f} (osc {S.oscillation:.4f}), "
                     f"renewal {renewal:.5f}; depth-14 bracket miss {outside:.1e}; {dt:.2f}s")
    assert ok


# 6 ---------------------------------------------------------------------------------------


def test_cantor_oscillates_but_averages_agree(criterion):
    vc, scv, s = exact_curves("cantor")
    M, S = relative_content(vc, s), s_content(scv, s)
    a, b = average_content(vc, s), average_s_content(scv, s)
    cesaro = renewal_content([1 / 3, 1 / 3], [1 / 3])[1]
    osc_ok = M.oscillation > 0.05 and S.oscillation > 0.05
    avg_ok = (a.value is not None and b.value is not None and abs(a.value - b.value) / a.value <= 0.03
              and abs(a.value - cesaro) / cesaro <= 0.02)
    ok = osc_ok and avg_ok
    criterion(6, ok, f"osc M {M.oscillation:.4f}, S {S.oscillation:.4f} (need > 0.05); averages "
                     f"M~ {a.value}, S~ {b.value}, exact {cesaro:.5f}")
    assert ok


# 7 ---------------------------------------------------------------------------------------


def test_vw_identity(criterion, ball_field, segment_field):
    q = 2.0 ** (-1 / 16)
    res = {}
    for name, fld in (("ball", ball_field), ("segment", segment_field)):
        sched = RadiusSchedule.down_to(0.8, 4 * H, q)
        V = volume_function(fld)
        res[name] = vw_identity_check(volume_curve(V, sched), surface_curve(V, sched, levels=2), 1.0).max_residual
    for name in ("cantor", "nonlattice"):
        vc, scv, s = exact_curves(name, sched=exact_schedule(q=q))
        res[name] = vw_identity_check(vc, scv, s).max_residual
    ok = max(res.values()) <= 0.03
    criterion(7, ok, "max residual " + ", ".join(f"{k} {v:.4f}" for k, v in res.items()))
    assert ok


# 8 ---------------------------------------------------------------------------------------


def _exact_families(spec, P, radii, s):
    lv = ExactLocalVolumes(SelfSimilarIntervals.from_spec(spec), P)
    return ([exact_local_volume_measure(lv, r, s) for r in radii],
            [exact_local_surface_measure(lv, r, s) for r in radii])


def test_local_measures_converge(criterion):
    rows, ok = [], True
    # plain families on the nonlattice set
    sched = exact_schedule(1e-2, 1e-12)
    vc, _, s = exact_curves("nonlattice", sched=sched)
    M = relative_content(vc, s).limit.value
    P = CellPartition.dyadic([0.0], [1.0], 4, offset=0.5)
    mus, sgs = _exact_families(nonlattice_1d(), P, sched.radii, s)
    ref = reference_measure(nonlattice_1d(), P, M, depth=14)
    for name, fam in (("mu", mus), ("sigma", sgs)):
        rep = convergence_report(fam, ref)
        n = math.ceil(len(fam) / 3)
        ok &= rep.below_threshold and rep.mass_preserved
        rows.append(f"nonlattice {name} {max(rep.distances[-n:]):.4f}")
    # averaged families on Cantor and the gasket
    for name in ("cantor", "gasket"):
        sched = exact_schedule(1e-3 if name == "gasket" else 1e-2, 1e-12)
        vc, _, s = exact_curves(name, sched=sched)
        Mav = average_content(vc, s).value
        if name == "gasket":
            T = RightGasketTubes()
            P = QUADRANTS
            mus = [quadrant_measure(T, r, s) for r in sched.radii]
            sgs = [quadrant_measure(T, r, s, surface=True) for r in sched.radii]
            ref = reference_measure(sierpinski_gasket(), P, Mav, depth=9)
        else:
            P = CellPartition.dyadic([0.0], [1.0], 3, offset=0.5)
            mus, sgs = _exact_families(cantor_set(), P, sched.radii, s)
            ref = reference_measure(cantor_set(), P, Mav, depth=12)
        for fname, fam in (("mu~", average_local_measure(mus)), ("sigma~", average_local_measure(sgs))):
            rep = convergence_report(fam, ref)
            n = math.ceil(len(fam) / 3)
            ok &= rep.below_threshold and rep.mass_preserved
            rows.append(f"{name} {fname} {max(rep.distances[-n:]):.4f}")
    criterion(8, ok, "flat distance over last third (< 0.05): " + ", ".join(rows))
    assert ok


# 9 ---------------------------------------------------------------------------------------


def test_locality_far_ball(criterion):
    h = 2.0 ** -14
    spec = cantor_set()
    depth = math.ceil(math.log(h / 4) / math.log(1 / 3))
    pts, eps = attractor_points(spec, depth)
    ball = np.arange(6.0, 7.0 + h / 4, h / 2)[:, None]   # [6, 7], distance 5 from [0, 1]
    win = GridWindow.nodes((-2.0,), (9.0,), h)
    f1 = sample_field(cloud_oracle(pts, eps, spec), win)
    f2 = sample_field(cloud_oracle(np.vstack([pts, ball]), eps), win)
    B = BoxRegion((0.0,), (1.0,), closed=True)
    P = CellPartition.dyadic([0.0], [1.0], 3)
    pv1, pv2 = PartitionedVolume(f1, P), PartitionedVolume(f2, P)
    pre1, pre2 = preimage_mask(f1, B), preimage_mask(f2, B)
    diff, radii = 0, np.geomspace(5.0 / 3.0 * (1 - 1e-6), 4 * h, 30)
    for r in radii:
        diff += int(np.sum((pre1 & parallel_mask(f1, r)).cells != (pre2 & parallel_mask(f2, r)).cells))
        diff += int(np.sum(pv1.volumes(r)[0] != pv2.volumes(r)[0]))
    ok = diff == 0
    criterion(9, ok, f"{diff} differing cells/masses over {len(radii)} radii up to {radii[0]:.4f}")
    assert ok


# 10 --------------------------------------------------------------------------------------


def test_lattice_windows(criterion):
    h = 1 / 64
    fld = grid_field(integer_lattice(2), (-9, -9), (9, 9), h)
    sched = RadiusSchedule.for_grid(0.4, h)
    n = max(1, len(sched.radii) // 3)
    rows, worst_dim, worst_mass = [], 0.0, 0.0
    for k in (2, 4, 8):
        B = BallRegion((0.0, 0.0), float(k))
        vc = volume_curve(volume_function(fld, B), sched)
        dim = dimension_estimate(vc).value
        pre = preimage_mask(fld, B)
        mu = vc.values / (kappa(2) * sched.radii ** 2)
        sg = np.array([surface_area_contour(fld, r, pre) for r in sched.radii]) / (2 * kappa(2) * sched.radii)
        mass = float(np.max(np.abs(mu[-n:] - sg[-n:]) / mu[-n:]))
        worst_dim, worst_mass = max(worst_dim, abs(dim)), max(worst_mass, mass)
        rows.append(f"n={k}: dim {dim:+.4f}, mass {mass:.4f}")
    ok = worst_dim <= 0.05 and worst_mass <= 0.05
    criterion(10, ok, "; ".join(rows))
    assert ok


# 11 --------------------------------------------------------------------------------------


def _mixed_union(scale=1.0, shift=(0.0, 0.0), flip=False, swap=False):
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


def test_homogeneity_and_motions(criterion):
    h, s = 1 / 64, 1.0
    lo, hi = np.array([-2.0, -2.0]), np.array([-2.0, -2.0]) + 383 / 64
    radii = [0.5, 0.3, 0.25, 0.125]

    def masses(spec, wlo, whi, hh, rr):
        f = sample_field(distance_oracle(spec), GridWindow.nodes(wlo, whi, hh))
        P = CellPartition.cell_aligned(f.window, 8)
        pv = PartitionedVolume(f, P)
        return [local_volume_measure(f, r, s, P, pv=pv).masses.reshape(8, 8) for r in rr]

    base = masses(_mixed_union(), lo, hi, h, radii)
    scaled = masses(_mixed_union(2.0), 2 * lo, 2 * hi, 2 * h, [2 * r for r in radii])
    sh = np.array([5 * h, -3 * h])
    shifted = masses(_mixed_union(shift=tuple(sh)), lo + sh, hi + sh, h, radii)
    flipped = masses(_mixed_union(flip=True), np.array([-hi[0], lo[1]]), np.array([-lo[0], hi[1]]), h, radii)
    swapped = masses(_mixed_union(swap=True), lo[::-1], hi[::-1], h, radii)
    gaps = {
        "scale 2": max(float(np.max(np.abs(2.0 ** s * a - b))) for a, b in zip(base, scaled)),
        "translation": max(float(np.max(np.abs(a - b))) for a, b in zip(base, shifted)),
        "reflection": max(float(np.max(np.abs(a[::-1] - b))) for a, b in zip(base, flipped)),
        "swap": max(float(np.max(np.abs(a.T - b))) for a, b in zip(base, swapped)),
    }
    ok = all(v == 0.0 for v in gaps.values())
    criterion(11, ok, "max |difference| " + ", ".join(f"{k} {v:g}" for k, v in gaps.items()))
    assert ok


# 12 --------------------------------------------------------------------------------------


def test_performance(criterion):
    squared_edt(np.eye(8, dtype=bool))   # compile outside the timed call
    pts, _ = attractor_points(sierpinski_gasket(), 10)
    win = GridWindow.covering((-0.01, -0.01), (1.01, 1.01), 1.02 / 4096)
    sites = raster_sites(pts, win)
    assert sites.shape == (4096, 4096)
    t0 = time.perf_counter()
    squared_edt(sites)
    t_edt = time.perf_counter() - t0
    t0 = time.perf_counter()
    suite = run_suite("default", "desk", VerifyConfig(tier="desk"))
    t_suite = time.perf_counter() - t0
    n_pass = sum(r.passed for r in suite.results)
    ok = t_edt < 10 and t_suite < 15 * 60
    criterion(12, ok, f"EDT 4096^2 {t_edt:.2f}s (< 10s); desk suite {t_suite:.0f}s (< 900s), "
                      f"{n_pass}/{len(suite.results)} checks pass")
    assert ok
