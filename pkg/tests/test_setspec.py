import json
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from minkloc.errors import GeometryError, ResourceError, SchemaError
from minkloc.localmeasure import CellPartition
from minkloc.setspec import (IFSAttractor, PrimitiveUnion, UnboundedAnalytic, attractor_points, cantor_set,
                             distance_oracle, ifs_1d, lattice_check, moran_dimension, natural_measure,
                             nonlattice_1d, parse_setspec, sierpinski_gasket, spec_to_dict, two_squares)

BALL_DOC = {"variant": "primitive_union",
            "primitives": [{"type": "ball", "params": {"center": [0, 0], "radius": 1}}]}
TWO_SQUARES_DOC = {"variant": "primitive_union", "primitives": [
    {"type": "box", "params": {"min": [-3, -1], "max": [-1, 1]}},
    {"type": "box", "params": {"min": [1, -1], "max": [3, 1]}}]}


def _ifs_doc(ratios, translations, sep="ssc"):
    return {"variant": "ifs_attractor", "separation": sep,
            "ifs": [{"ratio": r, "translation": [t]} for r, t in zip(ratios, translations)]}


# --- parsing ---------------------------------------------------------------

def test_parse_ball():
    spec = parse_setspec(json.dumps(BALL_DOC))
    assert isinstance(spec, PrimitiveUnion)
    assert len(spec.primitives) == 1


def test_parse_two_squares():
    spec = parse_setspec(TWO_SQUARES_DOC)
    assert isinstance(spec, PrimitiveUnion)
    assert len(spec.primitives) == 2
    assert spec_to_dict(spec) == spec_to_dict(two_squares())


def test_parse_nonlattice_ssc_passes():
    spec = parse_setspec(_ifs_doc([0.5, 1 / 3], [0.0, 2 / 3]))
    assert isinstance(spec, IFSAttractor)
    assert spec.separation == "ssc"
    # first-level images [0, 1/2] and [2/3, 1] are disjoint
    pts, _ = attractor_points(spec, 1)
    assert sorted(pts.ravel().tolist()) == pytest.approx([0.25, 2 / 3 + 1 / 6])


def test_ssc_flag_rejected_for_overlapping_images():
    with pytest.raises(GeometryError):
        parse_setspec(_ifs_doc([0.6, 0.6], [0.0, 0.4]))


def test_ratio_out_of_range_names_map():
    with pytest.raises(GeometryError, match="map 1"):
        parse_setspec(_ifs_doc([0.5, 1.2], [0.0, 0.6], sep="unknown"))


@pytest.mark.parametrize("doc", [
    "{not json", "[]", {"primitives": []}, {"variant": "nope"},
    {"variant": "primitive_union", "primitives": []},
    {"variant": "primitive_union", "primitives": [{"type": "ball", "params": {"center": [0, 0]}}]},
    {"variant": "ifs_attractor", "ifs": [{"ratio": "half", "translation": [0]}]},
])
def test_schema_errors(doc):
    with pytest.raises(SchemaError):
        parse_setspec(doc if isinstance(doc, str) else json.dumps(doc))


@pytest.mark.parametrize("spec", [two_squares(), cantor_set(), nonlattice_1d(), sierpinski_gasket()])
def test_spec_roundtrip(spec):
    again = parse_setspec(json.dumps(spec_to_dict(spec)))
    assert spec_to_dict(again) == spec_to_dict(spec)


def test_unbounded_lattice_parses():
    spec = parse_setspec({"variant": "unbounded_analytic",
                          "unbounded": {"type": "lattice", "params": {"spacing": 1.0, "dim": 2}}})
    assert isinstance(spec, UnboundedAnalytic)
    assert spec.dim == 2


# --- distance oracles -------------------------------------------------------

def test_ball_oracle_collinear():
    ora = distance_oracle(parse_setspec(BALL_DOC))
    res = ora.evaluate(np.array([[3.0, 0.0]]))
    assert res.distance[0] == 2.0
    assert res.nearest[0].tolist() == [1.0, 0.0]


def test_segment_oracle_perpendicular_foot():
    spec = parse_setspec({"variant": "primitive_union",
                          "primitives": [{"type": "segment", "params": {"p": [0, 0], "q": [2, 0]}}]})
    res = distance_oracle(spec).evaluate(np.array([[1.0, 5.0]]))
    assert res.distance[0] == 5.0
    assert res.nearest[0].tolist() == [1.0, 0.0]


def test_cantor_cloud_oracle_gap_midpoint():
    ora = distance_oracle(cantor_set(), depth=12)
    assert ora.eps <= 3.0 ** -12 * 1.0 + 1e-15
    # 1/2 is the midpoint of the gap (1/3, 2/3)
    assert abs(ora.distance(np.array([[0.5]]))[0] - 1 / 6) <= ora.eps


def test_equidistant_tie_is_lexicographic():
    spec = parse_setspec({"variant": "primitive_union", "primitives": [
        {"type": "point", "params": {"p": [4, 0]}}, {"type": "point", "params": {"p": [0, 0]}}]})
    res = distance_oracle(spec).evaluate(np.array([[2.0, 1.0]]))
    assert res.distance[0] == pytest.approx(math.sqrt(5))
    assert res.nearest[0].tolist() == [0.0, 0.0]
    assert res.gap[0] == 0.0


# --- attractor points ---------------------------------------------------------

def test_cantor_points_depth_one():
    pts, _ = attractor_points(cantor_set(), 1)
    assert len(pts) == 2


def test_cantor_points_depth_ten_cover_endpoints():
    pts, eps = attractor_points(cantor_set(), 10)
    assert len(pts) == 1024
    assert eps <= 3.0 ** -10 * 1.0 + 1e-15
    # every left/right endpoint of the level-10 intervals is within eps of a point
    words = np.array(np.meshgrid(*[[0, 2]] * 10, indexing="ij")).reshape(10, -1)
    left = (words * 3.0 ** -np.arange(1, 11)[:, None]).sum(axis=0)
    ends = np.concatenate([left, left + 3.0 ** -10])
    d = np.min(np.abs(ends[:, None] - pts.ravel()[None, :]), axis=1)
    assert d.max() <= eps


def test_gasket_points_depth_eight():
    pts, _ = attractor_points(sierpinski_gasket(), 8)
    assert pts.shape == (6561, 2)


def test_point_cap():
    with pytest.raises(ResourceError):
        attractor_points(sierpinski_gasket(), 12, cap=1000)


@pytest.mark.parametrize("spec", [cantor_set(), nonlattice_1d(), sierpinski_gasket()])
def test_attractor_points_contract(spec):
    rmax = float(spec.ratios.max())
    for n in (3, 5):
        p0, e0 = attractor_points(spec, n)
        p1, e1 = attractor_points(spec, n + 1)
        assert e1 == pytest.approx(rmax * e0)
        d = np.min(np.linalg.norm(p1[:, None, :] - p0[None, :, :], axis=2), axis=1)
        assert d.max() <= rmax * e0 + 1e-12


# --- Moran dimension ----------------------------------------------------------

def test_moran_two_halves():
    assert moran_dimension([0.5, 0.5]) == pytest.approx(1.0, abs=1e-12)


def test_moran_gasket():
    assert moran_dimension(sierpinski_gasket()) == pytest.approx(1.584962500721, abs=1e-12)
    assert moran_dimension(sierpinski_gasket()) == pytest.approx(math.log(3) / math.log(2), abs=1e-12)


def test_moran_nonlattice_against_brentq():
    ref = brentq(lambda D: 0.5 ** D + (1 / 3) ** D - 1, 0.0, 1.0, xtol=1e-15)
    assert moran_dimension([0.5, 1 / 3]) == pytest.approx(ref, abs=1e-12)
    assert moran_dimension([0.5, 1 / 3]) == pytest.approx(0.7878849110, abs=1e-9)


# --- lattice classification -------------------------------------------------------

@pytest.mark.parametrize("ratios,kind", [([0.5] * 3, "lattice"), ([0.5, 0.25], "lattice"),
                                         ([0.5, 1 / 3], "nonlattice")])
def test_lattice_check(ratios, kind):
    res = lattice_check(ratios)
    assert res.kind == kind
    assert not res.inconclusive


def test_lattice_witness_rational():
    res = lattice_check([0.5, 0.25])
    assert res.witnesses[-1] == 2


# --- natural measure ----------------------------------------------------------------

def test_cantor_natural_measure_halves():
    P = CellPartition.from_edges([0.0, 0.5, 1.0])
    nm = natural_measure(cantor_set(), P, 6)
    assert nm.masses == pytest.approx([0.5, 0.5], abs=1e-12)


def test_cantor_natural_measure_thirds():
    P = CellPartition.from_edges([0.0, 1 / 3, 2 / 3, 1.0])
    nm = natural_measure(cantor_set(), P, 6)
    assert nm.masses == pytest.approx([0.5, 0.0, 0.5], abs=1e-12)


def test_gasket_natural_measure_quadrants():
    P = CellPartition.dyadic([0.0, 0.0], [1.0, 1.0], 1)
    nm = natural_measure(sierpinski_gasket(), P, 7)
    # flat order: lower-left, upper-left, lower-right, upper-right
    assert nm.masses == pytest.approx([1 / 3, 1 / 3, 1 / 3, 0.0], abs=1e-12)
    assert nm.masses.sum() == pytest.approx(1.0, abs=1e-12)


def test_natural_measure_needs_separation():
    spec = ifs_1d([0.5, 0.5], [0.0, 0.5], separation="unknown")
    with pytest.raises(GeometryError):
        natural_measure(spec, CellPartition.from_edges([0.0, 1.0]), 4)


@pytest.mark.parametrize("spec,level", [(cantor_set(), 3), (nonlattice_1d(), 3), (sierpinski_gasket(), 2)])
def test_natural_measure_depth_consistency(spec, level):
    P = CellPartition.dyadic([0.0] * spec.dim, [1.0] * spec.dim, level, offset=0.5 if spec.dim == 1 else 0.0)
    n = 6
    a = natural_measure(spec, P, n).masses
    b = natural_measure(spec, P, n + 2).masses
    # mass of depth-n cylinders whose representative point lies within eps of a cell edge
    pts, eps, w = attractor_points(spec, n, with_weights=True)
    near = np.zeros(len(pts), dtype=bool)
    for k, e in enumerate(P.edges):
        near |= np.min(np.abs(pts[:, k][:, None] - e[None, :]), axis=1) <= eps
    assert np.abs(a - b).sum() <= 2 * w[near].sum() + 1e-12
