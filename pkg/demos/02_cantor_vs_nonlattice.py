"""Lattice versus nonlattice: the Cantor set and {x/2, x/3 + 2/3}.

The Minkowski ratio V(r) / (kappa r^(1-D)) of a self-similar set in the line
converges when the log-ratios are rationally independent and oscillates
log-periodically otherwise. Logarithmic averages converge in both cases.
"""
import math

from minkloc.contents import (RadiusSchedule, VolumeFunction, average_content, average_s_content, relative_content,
                              s_content, surface_curve, volume_curve)
from minkloc.interval import SelfSimilarIntervals
from minkloc.setspec import cantor_set, lattice_check, moran_dimension, nonlattice_1d

sched = RadiusSchedule.down_to(0.1, 1e-12)
for name, spec in (("Cantor", cantor_set()), ("nonlattice", nonlattice_1d())):
    ora = SelfSimilarIntervals.from_spec(spec)
    V = VolumeFunction(ora.volume, 1)
    D = moran_dimension(spec)
    vc, sc = volume_curve(V, sched), surface_curve(V, sched, levels=0)
    M, S = relative_content(vc, D), s_content(sc, D)
    a, b = average_content(vc, D), average_s_content(sc, D)
    lat = lattice_check(spec)
    print(f"{name}: D = {D:.6f}, {lat.kind}")
    print(f"  Minkowski ratio  upper {M.upper.value:.4f}  lower {M.lower.value:.4f}  tail oscillation {M.oscillation:.3f}")
    print(f"  S ratio          upper {S.upper.value:.4f}  lower {S.lower.value:.4f}  tail oscillation {S.oscillation:.3f}")
    print(f"  limits: M {None if M.limit is None else round(M.limit.value, 5)}, "
          f"S {None if S.limit is None else round(S.limit.value, 5)}")
    print(f"  log averages: M~ {a.value:.5f}, S~ {b.value:.5f}")
    print()

print("for the nonlattice set the limits agree; for the Cantor set only the averages do.")
print(f"(log-period of the Cantor oscillation: log 3 = {math.log(3):.4f})")
