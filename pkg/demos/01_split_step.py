"""Free and harmonic evolution with the split-step propagator.

A free Gaussian packet spreads exactly as the closed form says; the
harmonic ground state does not move at all.
"""
import math

import numpy as np

from bgqt.quantum import GridSpec, PotentialSpec, density, init_state, step

grid = GridSpec(dims=1, points_per_dim=512, box_length=40.0, dt=1e-3)
x = grid.axis()

psi = init_state(grid, {"type": "gaussian_packet", "center": 0.0, "width": 1.0})
free = PotentialSpec.make("free")
for t in (0.5, 1.0, 2.0):
    later = step(psi, free, int(round(t / grid.dt)))
    s = math.sqrt(1 + t * t)  # amplitude width of the spreading packet
    exact = np.exp(-x ** 2 / s ** 2) / (math.sqrt(math.pi) * s)
    err = np.max(np.abs(density(later) - exact))
    print(f"free packet  t={t:3.1f}  width={s:.4f}  max density error={err:.1e}")

harmonic = PotentialSpec.make("harmonic", omega=1.0)
ground = init_state(grid, {"type": "harmonic_ground", "omega": 1.0})
later = step(ground, harmonic, 1000)
# stationary up to the global phase exp(-i E t), so compare densities
print(f"harmonic ground state after t=1: max density change = "
      f"{np.max(np.abs(density(later) - density(ground))):.1e}")
print(f"norm drift: {abs(later.norm2() - 1):.1e}")
