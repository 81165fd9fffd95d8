"""Two unit-distance squares: where the parallel volume fails to be differentiable.

The union of [-3,-1]x[-1,1] and [1,3]x[-1,1] has parallel sets whose boundaries
meet on the bisector x = 0 when r = 1. Restricting the volume to points whose
nearest point lies on the inner edge {-1} x (-1, 1) isolates that kink.
"""
import numpy as np

from minkloc.contents import RadiusSchedule, one_sided_derivatives, stacho_value, volume_curve
from minkloc.distfield import BoxRegion, GridWindow, preimage_mask, sample_field, surface_area_contour, volume_function
from minkloc.setspec import distance_oracle, two_squares

h = 1 / 256
edge = BoxRegion((-1 - 1e-9, -1.0), (-1 + 1e-9, 1.0))
fld = sample_field(distance_oracle(two_squares()), GridWindow.nodes((-5, -5), (5, 5), h))
V = volume_function(fld, edge)
pre = preimage_mask(fld, edge)

print("restricted volume V_B(r) grows like 2r until the strips meet at r = 1:")
for r in (0.25, 0.5, 0.75, 1.0, 1.25):
    print(f"  r={r:4.2f}  V_B={float(np.atleast_1d(V(r))[0]):.4f}  2r={2 * r:.4f}")

left, right = one_sided_derivatives(V, 1.0)
print(f"\none-sided derivatives at r=1: left {left:.3f}, right {right:.3f}")
print(f"their average (the symmetric derivative): {stacho_value(V, 1.0):.4f}")
print(f"contour length on the open preimage at r=1: {surface_area_contour(fld, 1.0, pre):.4f}")
print(f"contour length on its closure at r=1:       {surface_area_contour(fld, 1.0, pre.dilate(1)):.4f}")

sched = RadiusSchedule(0.8, 2 ** -0.25, 8)
curve = volume_curve(V, sched)
print("\naway from r=1 the derivative matches the contour length:")
for r in curve.radii[::2]:
    print(f"  r={r:.3f}  dV/dr={stacho_value(V, r):.4f}  contour={surface_area_contour(fld, r, pre):.4f}")
