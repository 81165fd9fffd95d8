"""Volume and surface curves over radius schedules, and the contents built from them.

Normalizations, for a set in R^d and exponent s:

* Minkowski ratio  g(r) = V(r) / (kappa_{d-s} r^{d-s})
* S ratio          sigma(r) = S(r) / ((d-s) kappa_{d-s} r^{d-1-s})   (zero for s = d)

Upper/lower contents are tail extremes over the schedule; a limit is reported
only when the tail oscillation is small. Averages are logarithmic (Cesaro)
means normalized by log(r_max / t).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .distfield import richardson
from .errors import DataError, EstimationError

#: Default schedule ratio.
Q_DEFAULT = 2.0 ** -0.25
#: Tail oscillation below which a limit is reported.
LIMIT_THRESHOLD = 0.02
MIN_TAIL = 5


def kappa(t: float) -> float:
    """Volume of the unit ball in R^t (extended to real t >= 0)."""
    if t < 0:
        raise ValueError("kappa needs t >= 0")
    return math.exp(0.5 * t * math.log(math.pi) - math.lgamma(1.0 + 0.5 * t))


@dataclass(frozen=True)
class RadiusSchedule:
    r_max: float
    q: float = Q_DEFAULT
    count: int = 40

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise ValueError("schedule ratio must lie in (0, 1)")
        if self.count < 1 or not self.r_max > 0:
            raise ValueError("schedule needs r_max > 0 and count >= 1")

    @property
    def radii(self) -> np.ndarray:
        return self.r_max * self.q ** np.arange(self.count)

    @classmethod
    def down_to(cls, r_max: float, r_min: float, q: float = Q_DEFAULT) -> "RadiusSchedule":
        """Longest schedule r_max q^k with every radius >= r_min."""
        count = int(math.floor(math.log(r_min / r_max) / math.log(q) + 1e-9)) + 1
        return cls(r_max, q, max(count, 1))

    @classmethod
    def for_grid(cls, r_max: float, h: float, q: float = Q_DEFAULT) -> "RadiusSchedule":
        """Schedule stopping at the resolution floor 2h."""
        return cls.down_to(r_max, 2.0 * h, q)


class VolumeFunction:
    """Callable r -> V(r) with the metadata the estimators need."""

    def __init__(self, fn: Callable, dim: int, h: float = 0.0, eps: float = 0.0, tag: str = "all"):
        self.fn = fn
        self.dim = dim
        self.h = h
        self.eps = eps
        self.tag = tag

    def __call__(self, r):
        return np.asarray(self.fn(np.atleast_1d(np.asarray(r, float))), dtype=float)


@dataclass
class VolumeCurve:
    radii: np.ndarray
    values: np.ndarray
    dim: int
    tag: str = "all"
    h: float = 0.0
    eps: float = 0.0
    q: float = Q_DEFAULT
    source: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if np.any(self.values < 0):
            raise DataError("negative volume")
        order = np.argsort(self.radii)
        tol = 1e-12 * max(1.0, float(np.max(np.abs(self.values)))) if self.values.size else 0
        if np.any(np.diff(self.values[order]) < -tol):
            raise DataError("volume curve is not nondecreasing in r")

    @property
    def r_max(self) -> float:
        return float(self.radii.max())

    def __call__(self, r):
        if self.source is None:
            raise EstimationError("curve has no underlying volume function")
        return self.source(r)


@dataclass
class SurfaceCurve:
    radii: np.ndarray
    values: np.ndarray
    dim: int
    estimator: str = "volume-difference"
    tag: str = "all"
    h: float = 0.0
    eps: float = 0.0

    def __post_init__(self):
        if np.any(self.values < -1e-9 * max(1.0, float(np.abs(self.values).max(initial=0)))):
            raise DataError("negative surface value")


@dataclass
class ContentEstimate:
    s: float
    kind: str        # "Minkowski" | "S"
    bound: str       # "upper" | "lower" | "limit" | "average"
    value: float | None
    tail: tuple[float, float]
    oscillation: float
    kappa: float
    diagnostics: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {"s": self.s, "kind": self.kind, "bound": self.bound, "value": self.value,
                "tail_r_min": self.tail[0], "tail_r_max": self.tail[1],
                "oscillation": self.oscillation, "kappa": self.kappa, **self.diagnostics}


@dataclass
class ContentSummary:
    upper: ContentEstimate
    lower: ContentEstimate
    limit: ContentEstimate | None
    ratios: np.ndarray

    @property
    def oscillation(self) -> float:
        return self.upper.oscillation

    def estimates(self) -> list[ContentEstimate]:
        return [e for e in (self.upper, self.lower, self.limit) if e is not None]


# --------------------------------------------------------------------------
# curves
# --------------------------------------------------------------------------


def _meta(vf, name, default):
    return getattr(vf, name, default)


def volume_curve(V: Callable, schedule: RadiusSchedule | Sequence[float], dim: int | None = None) -> VolumeCurve:
    """Evaluate a volume function on the schedule radii."""
    if isinstance(schedule, RadiusSchedule):
        radii, q = schedule.radii, schedule.q
    else:
        radii = np.asarray(schedule, float)
        q = float(radii[1] / radii[0]) if len(radii) > 1 else Q_DEFAULT
    d = _meta(V, "dim", dim) if dim is None else dim
    return VolumeCurve(radii, V(radii), d, _meta(V, "tag", "all"), _meta(V, "h", 0.0),
                       _meta(V, "eps", 0.0), q, V)


def surface_curve(V: Callable, schedule: RadiusSchedule | Sequence[float], levels: int = 0,
                  dim: int | None = None) -> SurfaceCurve:
    """Surface curve by symmetric volume differences with step t = r (1 - q)."""
    from .distfield import surface_area_volume_difference
    if isinstance(schedule, RadiusSchedule):
        radii, q = schedule.radii, schedule.q
    else:
        radii = np.asarray(schedule, float)
        q = float(radii[1] / radii[0])
    vals = np.array([surface_area_volume_difference(V, r, r * (1 - q), levels=levels) for r in radii])
    d = _meta(V, "dim", dim) if dim is None else dim
    return SurfaceCurve(radii, vals, d, "volume-difference", _meta(V, "tag", "all"),
                        _meta(V, "h", 0.0), _meta(V, "eps", 0.0))


def surface_curve_from(fn: Callable, radii: Sequence[float], dim: int, estimator: str,
                       tag: str = "all", h: float = 0.0, eps: float = 0.0) -> SurfaceCurve:
    """Surface curve from any per-radius evaluator (contour, exact counts...)."""
    radii = np.asarray(radii, float)
    return SurfaceCurve(radii, np.array([float(fn(r)) for r in radii]), dim, estimator, tag, h, eps)


# --------------------------------------------------------------------------
# Kneser property
# --------------------------------------------------------------------------


@dataclass
class KneserReport:
    trials: int
    violations: int
    worst_margin: float       # max of (lhs - rhs) / scale; <= 0 means no excess at all
    worst_excess: float       # max of (lhs - rhs - slack) / scale
    slack_used: float


def kneser_check(curve: VolumeCurve, trials: int = 100_000, seed: int = 0,
                 surface_scale: float | None = None) -> KneserReport:
    """Test f(lb) - f(la) <= l^d (f(b) - f(a)) on random schedule triples.

    lambda = q^{-m} keeps every argument on the schedule. Slack per triple is
    4 h S_max lambda^d (S_max: largest available surface scale), plus rounding."""
    r = curve.radii
    order = np.argsort(-r)
    r, f = r[order], curve.values[order]  # decreasing radii, index k <-> r_max q^k
    K = len(r)
    if K < 3:
        raise EstimationError("kneser_check needs >= 3 radii")
    q = r[1] / r[0]
    rng = np.random.default_rng(seed)
    kb = rng.integers(0, K, trials)
    ka = kb + (rng.random(trials) * (K - kb)).astype(np.int64)
    m = (rng.random(trials) * (kb + 1)).astype(np.int64)
    lam = q ** (-m.astype(float))
    lhs = f[kb - m] - f[ka - m]
    rhs = lam ** curve.dim * (f[kb] - f[ka])
    scale = max(float(np.max(np.abs(f))), 1e-300)
    if surface_scale is None:
        dv = np.abs(np.diff(f)) / np.abs(np.diff(r))
        surface_scale = float(dv.max()) if dv.size else 0.0
    slack = 4.0 * curve.h * surface_scale * lam ** curve.dim + 1e-12 * scale * lam ** curve.dim
    excess = lhs - rhs
    viol = int(np.sum(excess > slack))
    return KneserReport(trials, viol, float(np.max(excess) / scale), float(np.max(excess - slack) / scale),
                        float(np.max(slack)))


# --------------------------------------------------------------------------
# derivatives
# --------------------------------------------------------------------------


def one_sided_derivatives(curve: VolumeCurve | Callable, r: float, levels: int = 2,
                          q: float | None = None) -> tuple[float, float]:
    """Left and right difference quotients at r, Richardson-extrapolated.

    Steps t0, t0/2, ... with t0 = r (1 - q); stencils never cross r."""
    q = (curve.q if isinstance(curve, VolumeCurve) else Q_DEFAULT) if q is None else q
    V = curve
    t0 = r * (1 - q)
    steps = np.array([t0 / 2 ** k for k in range(levels + 1)])
    vals = V(np.concatenate([[r], r - steps, r + steps]))
    v0, vm, vp = vals[0], vals[1:levels + 2], vals[levels + 2:]
    left = richardson(list((v0 - vm) / steps), order_start=1, order_step=1)
    right = richardson(list((vp - v0) / steps), order_start=1, order_step=1)
    return left, right


def stacho_value(curve: VolumeCurve | Callable, r: float, levels: int = 2, q: float | None = None) -> float:
    """Mean of the one-sided derivatives of the (restricted) volume function at r."""
    left, right = one_sided_derivatives(curve, r, levels, q)
    return 0.5 * (left + right)


# --------------------------------------------------------------------------
# contents
# --------------------------------------------------------------------------


def minkowski_ratio(radii, values, d: int, s: float) -> np.ndarray:
    return np.asarray(values) / (kappa(d - s) * np.asarray(radii) ** (d - s))


def s_ratio(radii, values, d: int, s: float) -> np.ndarray:
    if s >= d:
        return np.zeros(len(radii))
    return np.asarray(values) / ((d - s) * kappa(d - s) * np.asarray(radii) ** (d - 1 - s))


def _tail(radii, ratios, tail_fraction):
    order = np.argsort(-np.asarray(radii))
    r, g = np.asarray(radii)[order], np.asarray(ratios)[order]
    n = int(math.ceil(tail_fraction * len(r)))
    if n < MIN_TAIL:
        raise EstimationError(f"tail has {n} points, need >= {MIN_TAIL}")
    return r[-n:], g[-n:]


def _oscillation(g):
    mean = float(np.mean(g))
    if mean == 0:
        return 0.0
    return float((np.max(g) - np.min(g)) / abs(mean))


def _summarize(radii, ratios, s, kind, tail_fraction, threshold, kap, extra=None) -> ContentSummary:
    r, g = _tail(radii, ratios, tail_fraction)
    osc = _oscillation(g)
    tail = (float(r.min()), float(r.max()))
    diag = {"threshold": threshold, **(extra or {})}
    up = ContentEstimate(s, kind, "upper", float(np.max(g)), tail, osc, kap, dict(diag))
    lo = ContentEstimate(s, kind, "lower", float(np.min(g)), tail, osc, kap, dict(diag))
    lim = None
    if osc < threshold:
        lim = ContentEstimate(s, kind, "limit", float(np.mean(g)), tail, osc, kap, dict(diag))
    return ContentSummary(up, lo, lim, np.asarray(ratios))


def relative_content(curve: VolumeCurve, s: float, tail_fraction: float = 0.5,
                     threshold: float = LIMIT_THRESHOLD) -> ContentSummary:
    """Upper/lower (and, if the tail is flat enough, limit) Minkowski content."""
    d = curve.dim
    if not 0 <= s <= d:
        raise ValueError("need 0 <= s <= d")
    g = minkowski_ratio(curve.radii, curve.values, d, s)
    return _summarize(curve.radii, g, s, "Minkowski", tail_fraction, threshold, kappa(d - s))


def s_content(scurve: SurfaceCurve, s: float, tail_fraction: float = 0.5,
              threshold: float = LIMIT_THRESHOLD) -> ContentSummary:
    """Upper/lower/limit S-content; identically 0 for s = d."""
    d = scurve.dim
    if not 0 <= s <= d:
        raise ValueError("need 0 <= s <= d")
    if s >= d:
        r, S = _tail(scurve.radii, scurve.values, tail_fraction)
        extra = {"sup_rS": float(np.max(r * S))}
        g = np.zeros(len(scurve.radii))
        return _summarize(scurve.radii, g, s, "S", tail_fraction, threshold, kappa(0.0), extra)
    g = s_ratio(scurve.radii, scurve.values, d, s)
    return _summarize(scurve.radii, g, s, "S", tail_fraction, threshold, kappa(d - s))


@dataclass
class DimensionEstimate:
    value: float
    upper: float
    lower: float
    slopes: np.ndarray
    flag: str = ""


def dimension_estimate(curve: VolumeCurve, tail_fraction: float = 0.5, window: int = 8) -> DimensionEstimate:
    """d minus the log-log slope of V over the tail; upper/lower from sliding windows."""
    if len(curve.radii) < 8:
        raise EstimationError("dimension estimate needs >= 8 radii")
    r, V = _tail(curve.radii, curve.values, tail_fraction)
    if np.any(V <= 0):
        raise EstimationError("volume vanishes on the tail")
    x, y = np.log(r), np.log(V)
    slope = float(np.polyfit(x, y, 1)[0])
    w = min(window, len(x))
    local = np.array([np.polyfit(x[i:i + w], y[i:i + w], 1)[0] for i in range(len(x) - w + 1)])
    d = curve.dim
    flag = "full-dimensional or resolution floor" if abs(slope) < 1e-3 else ""
    return DimensionEstimate(d - slope, float(d - local.min()), float(d - local.max()), local, flag)


# --------------------------------------------------------------------------
# averages
# --------------------------------------------------------------------------


def cesaro_sequence(radii: np.ndarray, ratios: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """t_k and (1/log(r_max/t_k)) * integral_{t_k}^{r_max} ratio dr/r (trapezoid in log r)."""
    order = np.argsort(-np.asarray(radii))
    r, g = np.asarray(radii, float)[order], np.asarray(ratios, float)[order]
    x = np.log(r)
    steps = x[:-1] - x[1:]
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * steps)])
    L = x[0] - x
    return r[1:], cum[1:] / L[1:]


def _average(radii, ratios, s, kind, kap, threshold, tail_fraction):
    t, avg = cesaro_sequence(radii, ratios)
    n = max(int(math.ceil(len(t) * tail_fraction)), 2)
    tail = avg[-n:]
    osc = _oscillation(tail)
    value = float(avg[-1]) if osc < threshold else None
    return ContentEstimate(s, kind, "average", value, (float(t[-n:].min()), float(t[-n:].max())), osc, kap,
                           {"r_max": float(np.max(radii)), "sequence_t": t.tolist(), "sequence": avg.tolist(),
                            "stabilized": value is not None})


def average_content(curve: VolumeCurve, s: float, threshold: float = LIMIT_THRESHOLD,
                    tail_fraction: float = 1 / 3) -> ContentEstimate:
    """Logarithmic average of the Minkowski ratio; value set when the t-sequence stabilizes."""
    g = minkowski_ratio(curve.radii, curve.values, curve.dim, s)
    return _average(curve.radii, g, s, "Minkowski", kappa(curve.dim - s), threshold, tail_fraction)


def average_s_content(scurve: SurfaceCurve, s: float, threshold: float = LIMIT_THRESHOLD,
                      tail_fraction: float = 1 / 3) -> ContentEstimate:
    g = s_ratio(scurve.radii, scurve.values, scurve.dim, s)
    return _average(scurve.radii, g, s, "S", kappa(max(scurve.dim - s, 0.0)), threshold, tail_fraction)


@dataclass
class VWResult:
    t: np.ndarray
    v: np.ndarray
    w: np.ndarray
    correction: np.ndarray
    residual: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual))


def _log_integral(radii, ratios):
    # integral_{t_k}^{r_max} ratio dr/r for every schedule point t_k below r_max
    order = np.argsort(-np.asarray(radii))
    r, g = np.asarray(radii, float)[order], np.asarray(ratios, float)[order]
    x = np.log(r)
    cum = np.cumsum(0.5 * (g[1:] + g[:-1]) * (x[:-1] - x[1:]))
    return r[1:], cum, g


def vw_identity_check(curve: VolumeCurve, scurve: SurfaceCurve, s: float) -> VWResult:
    """Compare the log-integrals of the Minkowski and S ratios,

        v(t) = int_t^R g(r) dr/r,   w(t) = int_t^R sigma(r) dr/r,

    through the integration-by-parts identity v = w + (g(t) - g(R)) / (d - s),
    R = r_max. The residual is |v - w - correction| / max(|v|, 1)."""
    if not np.array_equal(np.sort(curve.radii), np.sort(scurve.radii)):
        raise ValueError("curves must share the schedule")
    d = curve.dim
    if s >= d:
        raise ValueError("identity needs s < d")
    t, v, g = _log_integral(curve.radii, minkowski_ratio(curve.radii, curve.values, d, s))
    _, w, _ = _log_integral(scurve.radii, s_ratio(scurve.radii, scurve.values, d, s))
    corr = (g[1:] - g[0]) / (d - s)
    res = np.abs(v - w - corr) / np.maximum(np.abs(v), 1.0)
    return VWResult(t, v, w, corr, res)
