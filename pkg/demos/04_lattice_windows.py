"""An unbounded set: the integer lattice Z^2 seen through growing windows.

Each window B_n (the disc of radius n) sees finitely many points, so within
each window the set looks zero dimensional and the volume and surface
normalizations both count its points (the grid adds a bias of about 1%).
"""
from minkloc.contents import RadiusSchedule, dimension_estimate, kappa, volume_curve
from minkloc.distfield import BallRegion, GridWindow, preimage_mask, sample_field, surface_area_contour, volume_function
from minkloc.setspec import distance_oracle, integer_lattice

h = 1 / 64
fld = sample_field(distance_oracle(integer_lattice(2)), GridWindow.nodes((-9, -9), (9, 9), h))
sched = RadiusSchedule.for_grid(0.4, h)
for n in (2, 4, 8):
    B = BallRegion((0.0, 0.0), float(n))
    vc = volume_curve(volume_function(fld, B), sched)
    pre = preimage_mask(fld, B)
    i = len(sched.radii) // 2
    r = sched.radii[i]
    count_v = float(vc.values[i]) / (kappa(2) * r ** 2)
    count_s = surface_area_contour(fld, r, pre) / (2 * kappa(2) * r)
    inside = sum(1 for i in range(-n, n + 1) for j in range(-n, n + 1) if i * i + j * j < n * n)
    print(f"n={n}: dimension {dimension_estimate(vc).value:+.4f}, points from volume {count_v:.2f}, "
          f"from contour {count_s:.2f}, lattice points strictly inside {inside}")
