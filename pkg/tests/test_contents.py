import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minkloc.contents import (RadiusSchedule, VolumeFunction, average_content, average_s_content,
                              cesaro_sequence, dimension_estimate, kappa, kneser_check, one_sided_derivatives,
                              relative_content, s_content, stacho_value, surface_curve, surface_curve_from,
                              volume_curve, vw_identity_check)
from minkloc.distfield import BallRegion, BoxRegion, GridWindow, sample_field, volume_function
from minkloc.errors import DataError, EstimationError
from minkloc.interval import SelfSimilarIntervals
from minkloc.setspec import (Ball, PrimitiveUnion, Segment, cantor_set, distance_oracle, ifs_1d, integer_lattice,
                             nonlattice_1d, two_squares)

from reference import renewal_content

D_CANTOR = math.log(2) / math.log(3)
EDGE = BoxRegion((-1.0 - 1e-9, -1.0), (-1.0 + 1e-9, 1.0))


def cantor_volume_brute(r, level=16):
    # union of the level-n intervals' r-neighbourhoods; exact while 2r exceeds the level-n gaps
    lo = np.zeros(1)
    for k in range(level):
        lo = np.concatenate([lo, lo + 2 * 3.0 ** -(k + 1)])
    lo.sort()
    w = 3.0 ** -level
    a, b = lo - r, lo + w + r
    total, cur_a, cur_b = 0.0, a[0], b[0]
    for x, y in zip(a[1:], b[1:]):
        if x > cur_b:
            total += cur_b - cur_a
            cur_a, cur_b = x, y
        else:
            cur_b = max(cur_b, y)
    return total + cur_b - cur_a


def exact_curve(spec, r_max=0.1, r_min=1e-12):
    ora = SelfSimilarIntervals.from_spec(spec)
    V = VolumeFunction(ora.volume, 1, tag="all")
    sched = RadiusSchedule.down_to(r_max, r_min)
    return ora, volume_curve(V, sched), surface_curve_from(lambda r: ora.boundary_count(r), sched.radii, 1, "count")


@pytest.fixture(scope="module")
def cantor_curves():
    return exact_curve(cantor_set())


@pytest.fixture(scope="module")
def nonlattice_curves():
    return exact_curve(nonlattice_1d())


@pytest.fixture(scope="module")
def segment_field():
    spec = PrimitiveUnion((Segment((-1.0, 0.0), (1.0, 0.0)),), 2)
    return sample_field(distance_oracle(spec), GridWindow.nodes((-2, -1.5), (2, 1.5), 1 / 128))


@pytest.fixture(scope="module")
def squares_field():
    return sample_field(distance_oracle(two_squares()), GridWindow.nodes((-4.5, -2.5), (4.5, 2.5), 1 / 128))


def ball_volume(r):
    return math.pi * (1 + np.asarray(r)) ** 2


def segment_volume(r):
    r = np.asarray(r)
    return 4 * r + math.pi * r ** 2


# --- basics -----------------------------------------------------------------------------------

@pytest.mark.parametrize("t,value", [(0, 1.0), (1, 2.0), (2, math.pi), (3, 4 * math.pi / 3)])
def test_kappa(t, value):
    assert kappa(t) == pytest.approx(value, rel=1e-14)


def test_kappa_rejects_negative():
    with pytest.raises(ValueError):
        kappa(-0.5)


def test_schedule():
    s = RadiusSchedule(1.0, 0.5, 4)
    assert s.radii.tolist() == [1.0, 0.5, 0.25, 0.125]
    g = RadiusSchedule.for_grid(0.5, 1 / 64)
    assert g.radii.min() == pytest.approx(2 / 64, rel=1e-12)
    with pytest.raises(ValueError):
        RadiusSchedule(1.0, 1.0)


def test_volume_curve_rejects_decreasing():
    with pytest.raises(DataError):
        volume_curve(VolumeFunction(lambda r: 1 / r, 2), RadiusSchedule(1.0, 0.5, 5))


# --- volume curves from fields ------------------------------------------------------------

def test_ball_volume_curve():
    spec = PrimitiveUnion((Ball((0.0, 0.0), 1.0),), 2)
    fld = sample_field(distance_oracle(spec), GridWindow.nodes((-2.5, -2.5), (2.5, 2.5), 1 / 64))
    c = volume_curve(volume_function(fld), np.linspace(0.5, 0.125, 6))
    assert np.allclose(c.values, ball_volume(c.radii), rtol=0.01)


def test_two_squares_restricted_volume(squares_field):
    # the edge column itself adds O(h) of area, so radii stay well above h
    c = volume_curve(volume_function(squares_field, EDGE), [1.4, 1.2, 1.0, 0.8, 0.5, 0.25])
    assert np.allclose(c.values, 2 * np.minimum(c.radii, 1.0), rtol=0.02)


def test_cantor_raster_volume_curve():
    from minkloc.setspec import attractor_points, cloud_oracle
    spec, h = cantor_set(), 2.0 ** -14
    pts, eps = attractor_points(spec, 12)
    fld = sample_field(cloud_oracle(pts, eps, spec), GridWindow.covering((-0.25,), (1.25,), h))
    k = np.arange(1, 7)
    radii = 0.45 * 3.0 ** -k
    c = volume_curve(volume_function(fld), radii)
    err = np.abs(c.values - np.array([cantor_volume_brute(r) for r in radii]))
    # each of the 2^k components has two rasterized ends
    assert np.all(err[:3] <= 2 * h + 2 * eps)
    assert np.all(err <= 2.0 ** k * (h + 2 * eps))


def test_exact_oracle_matches_brute_force():
    ora = SelfSimilarIntervals.from_spec(cantor_set())
    for r in (0.1, 0.013, 2e-4, 3.7e-6):
        assert float(np.atleast_1d(ora.volume(r))[0]) == pytest.approx(cantor_volume_brute(r), rel=1e-12)


# --- Kneser -------------------------------------------------------------------------------------

def test_kneser_ball():
    c = volume_curve(VolumeFunction(ball_volume, 2), RadiusSchedule(0.5, 2 ** -0.25, 30))
    rep = kneser_check(c, 20_000)
    assert rep.violations == 0 and rep.worst_margin <= 1e-12


def test_kneser_homogeneous_equality():
    # f = r^d is the equality case for every lambda
    c = volume_curve(VolumeFunction(lambda r: r ** 2, 2), RadiusSchedule(1.0, 0.5, 20))
    rep = kneser_check(c, 10_000)
    assert abs(rep.worst_margin) < 1e-12 and rep.violations == 0


def test_kneser_cantor_exact(cantor_curves):
    rep = kneser_check(cantor_curves[1], 100_000)
    assert rep.violations == 0


def test_kneser_detects_violation():
    # a concave-up jump near the top violates the scaling bound
    c = volume_curve(VolumeFunction(lambda r: np.where(r > 0.5, 10.0, 0.0) + r, 1), RadiusSchedule(1.0, 0.7, 10))
    assert kneser_check(c, 5_000).violations > 0


def test_kneser_needs_three_radii():
    with pytest.raises(EstimationError):
        kneser_check(volume_curve(VolumeFunction(ball_volume, 2), [0.5, 0.25]))


# --- derivatives -------------------------------------------------------------------------------

def test_one_sided_ball():
    left, right = one_sided_derivatives(VolumeFunction(ball_volume, 2), 1.0)
    assert left == pytest.approx(4 * math.pi, rel=1e-10) and right == pytest.approx(4 * math.pi, rel=1e-10)


def test_one_sided_two_squares_kink():
    # the window only needs to hold the edge's preimage; distances come from the exact oracle
    fld = sample_field(distance_oracle(two_squares()), GridWindow.nodes((-2.5, -1.5), (0.5, 1.5), 1 / 512))
    left, right = one_sided_derivatives(volume_function(fld, EDGE), 1.0)
    assert left == pytest.approx(2.0, rel=0.05)
    assert abs(right) < 0.1


def test_one_sided_linear():
    left, right = one_sided_derivatives(lambda r: 3.5 * np.asarray(r), 0.7)
    assert left == pytest.approx(3.5, rel=1e-12) and right == pytest.approx(3.5, rel=1e-12)


def test_stacho_two_squares(squares_field):
    assert stacho_value(volume_function(squares_field, EDGE), 1.0) == pytest.approx(1.0, rel=0.03)


def test_stacho_ball_grid():
    spec = PrimitiveUnion((Ball((0.0, 0.0), 1.0),), 2)
    fld = sample_field(distance_oracle(spec), GridWindow.nodes((-3, -3), (3, 3), 1 / 64))
    assert stacho_value(volume_function(fld), 1.0) == pytest.approx(4 * math.pi, rel=0.01)


def test_stacho_segment(segment_field):
    assert stacho_value(volume_function(segment_field), 0.25) == pytest.approx(4 + math.pi / 2, rel=0.02)


# --- relative and S-contents ------------------------------------------------------------------

def test_relative_content_segment_closed_form():
    c = volume_curve(VolumeFunction(segment_volume, 2), RadiusSchedule.down_to(0.05, 1e-4))
    summ = relative_content(c, 1.0)
    assert summ.limit is not None and summ.limit.value == pytest.approx(2.0, rel=0.02)
    assert summ.lower.value <= summ.limit.value <= summ.upper.value


def test_relative_content_segment_grid():
    spec = PrimitiveUnion((Segment((-1.0, 0.0), (1.0, 0.0)),), 2)
    fld = sample_field(distance_oracle(spec), GridWindow.nodes((-1.1, -0.1), (1.1, 0.1), 1 / 1024))
    c = volume_curve(volume_function(fld), RadiusSchedule.for_grid(0.03, fld.h))
    summ = relative_content(c, 1.0)
    assert summ.limit is not None and summ.limit.value == pytest.approx(2.0, rel=0.02)


def test_relative_content_cantor_oscillates(cantor_curves):
    summ = relative_content(cantor_curves[1], D_CANTOR)
    assert summ.limit is None
    assert summ.upper.value > summ.lower.value


def test_relative_content_nonlattice_matches_renewal(nonlattice_curves):
    D, M = renewal_content((0.5, 1 / 3), (1 / 6,))
    summ = relative_content(nonlattice_curves[1], D)
    assert summ.limit is not None
    assert summ.limit.value == pytest.approx(M, rel=0.01)


def test_relative_content_short_tail():
    c = volume_curve(VolumeFunction(segment_volume, 2), RadiusSchedule(0.1, 0.5, 6))
    with pytest.raises(EstimationError):
        relative_content(c, 1.0)


def test_s_content_segment():
    sched = RadiusSchedule.down_to(0.05, 1e-4)
    sc = surface_curve(VolumeFunction(segment_volume, 2), sched)
    summ = s_content(sc, 1.0)
    assert summ.limit is not None and summ.limit.value == pytest.approx(2.0, rel=0.02)


def test_s_content_full_dimension_is_zero():
    sc = surface_curve(VolumeFunction(ball_volume, 2), RadiusSchedule.down_to(0.1, 1e-3))
    summ = s_content(sc, 2.0)
    assert summ.upper.value == 0.0 and summ.limit.value == 0.0
    assert summ.upper.diagnostics["sup_rS"] > 0


def test_s_content_two_squares_perimeter():
    fld = sample_field(distance_oracle(two_squares()), GridWindow.nodes((-3.25, -1.25), (3.25, 1.25), 1 / 256))
    sc = surface_curve(volume_function(fld), RadiusSchedule.for_grid(0.08, fld.h))
    summ = s_content(sc, 1.0)
    # perimeter of the r-neighbourhood is 16 + 2 pi r, normalized by (d - s) kappa_1 = 2
    assert summ.limit is not None and summ.limit.value == pytest.approx(8.0, rel=0.02)


# --- dimension ------------------------------------------------------------------------------------

def test_dimension_ball():
    c = volume_curve(VolumeFunction(ball_volume, 2), RadiusSchedule.down_to(0.1, 1e-4))
    est = dimension_estimate(c)
    assert est.value == pytest.approx(2.0, abs=0.02)


def test_dimension_cantor(cantor_curves):
    est = dimension_estimate(cantor_curves[1])
    assert est.value == pytest.approx(D_CANTOR, abs=0.01)
    assert est.lower <= est.value <= est.upper


def test_dimension_constant_curve_flagged():
    c = volume_curve(VolumeFunction(lambda r: np.ones_like(r), 2), RadiusSchedule(0.1, 0.8, 20))
    est = dimension_estimate(c)
    assert est.value == pytest.approx(2.0) and est.flag


@pytest.mark.parametrize("n", [1.0, 2.0, 3.0])
def test_dimension_lattice_windows(n):
    fld = sample_field(distance_oracle(integer_lattice(2)), GridWindow.nodes((-4, -4), (4, 4), 1 / 128))
    V = volume_function(fld, BallRegion((0.0, 0.0), n + 0.1))
    c = volume_curve(V, RadiusSchedule.for_grid(0.4, fld.h))
    assert dimension_estimate(c).value == pytest.approx(0.0, abs=0.05)


# --- averages ---------------------------------------------------------------------------------------

def test_average_segment():
    c = volume_curve(VolumeFunction(segment_volume, 2), RadiusSchedule.down_to(0.05, 1e-9))
    est = average_content(c, 1.0)
    assert est.value == pytest.approx(2.0, rel=0.02)
    sc = surface_curve(VolumeFunction(segment_volume, 2), RadiusSchedule.down_to(0.05, 1e-9))
    assert average_s_content(sc, 1.0).value == pytest.approx(2.0, rel=0.02)


def test_average_constant_ratio_exact():
    # V = c kappa_{d-s} r^{d-s} has Minkowski ratio identically c
    c = volume_curve(VolumeFunction(lambda r: 1.7 * kappa(1.0) * r, 2), RadiusSchedule(0.1, 0.8, 40))
    t, avg = cesaro_sequence(c.radii, np.full(40, 1.7))
    assert np.allclose(avg, 1.7, rtol=1e-14)
    assert average_content(c, 1.0).value == pytest.approx(1.7, rel=1e-13)


def test_average_cantor_matches_renewal(cantor_curves):
    _, curve, scurve = cantor_curves
    _, M_avg = renewal_content((1 / 3, 1 / 3), (1 / 3,))
    summ = relative_content(curve, D_CANTOR)
    est = average_content(curve, D_CANTOR)
    assert est.value is not None
    assert summ.lower.value < est.value < summ.upper.value
    assert est.value == pytest.approx(M_avg, rel=0.01)
    assert average_s_content(scurve, D_CANTOR).value == pytest.approx(est.value, rel=0.02)


def test_average_s_full_dimension():
    sc = surface_curve(VolumeFunction(ball_volume, 2), RadiusSchedule.down_to(0.1, 1e-3))
    assert average_s_content(sc, 2.0).value == 0.0


# --- v-w identity -------------------------------------------------------------------------------------

@pytest.mark.parametrize("V", [segment_volume, ball_volume])
def test_vw_identity_closed_forms(V):
    sched = RadiusSchedule.down_to(0.1, 1e-5)
    c = volume_curve(VolumeFunction(V, 2), sched)
    sc = surface_curve(VolumeFunction(V, 2), sched)
    assert vw_identity_check(c, sc, 1.0).max_residual < 0.01


def test_vw_identity_synthetic_pair():
    s, d = 0.4, 2
    V = VolumeFunction(lambda r: kappa(d - s) * r ** (d - s), d)
    sched = RadiusSchedule.down_to(0.1, 1e-6, q=0.95)
    sc = surface_curve_from(lambda r: (d - s) * kappa(d - s) * r ** (d - s - 1), sched.radii, d, "exact")
    res = vw_identity_check(volume_curve(V, sched), sc, s)
    assert res.max_residual < 1e-3


def test_vw_identity_mismatched_schedules():
    c = volume_curve(VolumeFunction(ball_volume, 2), RadiusSchedule(0.1, 0.5, 10))
    sc = surface_curve(VolumeFunction(ball_volume, 2), RadiusSchedule(0.1, 0.6, 10))
    with pytest.raises(ValueError):
        vw_identity_check(c, sc, 1.0)


# --- invariants over random self-similar sets ----------------------------------------------------

ratios_1d = st.tuples(st.floats(0.1, 0.6), st.floats(0.1, 0.6)).filter(lambda t: t[0] + t[1] < 0.9)


@settings(max_examples=15)
@given(ratios_1d)
def test_chain_and_brackets(ratios):
    r1, r2 = ratios
    spec = ifs_1d([r1, r2], [0.0, 1.0 - r2])
    D, _ = renewal_content(ratios, (1 - r1 - r2,))
    _, c, sc = exact_curve(spec, r_min=1e-10)
    M, S = relative_content(c, D), s_content(sc, D)
    tol = 0.05
    assert (1 - D) * S.upper.value <= M.upper.value * (1 + tol)
    assert M.upper.value <= S.upper.value * (1 + tol)
    assert S.lower.value <= M.lower.value * (1 + tol)
    assert 0 < M.lower.value <= M.upper.value < 10
    full_M = relative_content(c, D, tail_fraction=1.0)
    full_S = s_content(sc, D, tail_fraction=1.0)
    am, as_ = average_content(c, D, threshold=1.0), average_s_content(sc, D, threshold=1.0)
    assert full_M.lower.value <= am.value <= full_M.upper.value
    assert full_S.lower.value <= as_.value <= full_S.upper.value


@settings(max_examples=10)
@given(ratios_1d)
def test_average_equality_and_renewal(ratios):
    r1, r2 = ratios
    D, M_avg = renewal_content(ratios, (1 - r1 - r2,))
    _, c, sc = exact_curve(ifs_1d([r1, r2], [0.0, 1.0 - r2]), r_max=(1 - r1 - r2) / 2, r_min=1e-13)
    am, as_ = average_content(c, D, threshold=1.0), average_s_content(sc, D, threshold=1.0)
    assert as_.value == pytest.approx(am.value, rel=0.03)
    assert am.value == pytest.approx(M_avg, rel=0.05)
