"""Local parallel-volume measures of the right-angle Sierpinski gasket.

The gasket is generated by x/2, x/2 + (1/2, 0) and x/2 + (0, 1/2). Its parallel
volume has a closed form, split here over the four quadrants around (1/2, 1/2).
The quadrant masses of the normalized local measure oscillate with r, but their
logarithmic averages approach (average content) x (natural measure).
"""
import math

import numpy as np

from minkloc.contents import RadiusSchedule, average_content, volume_curve
from minkloc.gasket import QUADRANTS, RightGasketTubes, quadrant_measure
from minkloc.localmeasure import average_local_measure, flat_distance, reference_measure
from minkloc.setspec import sierpinski_gasket

s = math.log(3) / math.log(2)
T = RightGasketTubes()
sched = RadiusSchedule.down_to(1e-3, 1e-12)
Mav = average_content(volume_curve(T.volume_function(), sched), s).value
ref = reference_measure(sierpinski_gasket(), QUADRANTS, Mav, depth=9)
print(f"average Minkowski content {Mav:.5f}")
print("reference quadrant masses:", np.round(ref.masses, 5))

mus = [quadrant_measure(T, r, s) for r in sched.radii]
avg = average_local_measure(mus)
print("\n        r    plain distance   averaged distance")
for i in range(0, len(mus), len(mus) // 8):
    print(f"  {sched.radii[i]:.2e}   {flat_distance(mus[i], ref):.5f}          {flat_distance(avg[i], ref):.5f}")
