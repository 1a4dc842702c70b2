"""GRW flashes: Poisson times, collapse centres drawn from the smeared density."""
import numpy as np

from bgqt.grw import CollapseParams, GRWConfig, run_grw_ensemble
from bgqt.quantum import GridSpec, PotentialSpec

grid = GridSpec(1, 256, 40.0, 1e-2)
cat_state = {"type": "superposition", "packets": [
    {"type": "gaussian_packet", "center": -6.0, "width": 1.0},
    {"type": "gaussian_packet", "center": 6.0, "width": 1.0}]}
cfg = GRWConfig(grid, PotentialSpec.make("free"), cat_state,
                CollapseParams(rate=2.0, sigma=1.0), horizon=2.0)

ens = run_grw_ensemble(cfg, 400, master_seed=5, keep_states=True)
counts = np.array([len(c.flashes) for c in ens])
print(f"mean flash count {counts.mean():.2f} (expected {2.0 * 2.0:.2f})")

# after the first flash the packet is almost entirely on one side
sides = []
for c in ens:
    if c.flashes:
        rho = np.abs(c.final_state.amplitudes) ** 2
        left = rho[grid.axis() < 0].sum() / rho.sum()
        sides.append(left)
sides = np.array(sides)
print(f"members with flashes: {len(sides)}; "
      f"fraction localized (>99% on one side): {np.mean((sides > 0.99) | (sides < 0.01)):.2f}")
print(f"left/right split: {np.mean(sides > 0.5):.2f} / {np.mean(sides <= 0.5):.2f}")
