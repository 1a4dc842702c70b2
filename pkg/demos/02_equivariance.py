"""Bohmian trajectories carry |psi|^2 along with them.

Positions drawn from |psi_0|^2 and moved by the guidance field stay
distributed as |psi_t|^2; a non-equilibrium start does not.
"""
from bgqt.bohm import (BohmConfig, InitialDistribution, coarse_h_function, run_bohm_ensemble,
                       tv_distance)
from bgqt.quantum import GridSpec, PotentialSpec, step

grid = GridSpec(1, 256, 20.0, 1e-2)
potential = PotentialSpec.make("double_well", a4=0.05, a2=0.5)
state = {"type": "superposition", "packets": [
    {"type": "gaussian_packet", "center": -2.0, "width": 0.8, "momentum": 1.0},
    {"type": "gaussian_packet", "center": 2.5, "width": 1.0}]}

for label, dist in [
    ("equilibrium", InitialDistribution.equilibrium()),
    ("uniform on [-3, 3]", InitialDistribution.nonequilibrium({"type": "uniform_box",
                                                               "low": -3.0, "high": 3.0})),
]:
    cfg = BohmConfig(grid, potential, state, horizon=1.0, initial_distribution=dist)
    ens = run_bohm_ensemble(cfg, 5000, master_seed=11)
    psi_t = step(cfg.psi0(), potential, 100)
    final = [c.trajectory.positions[-1] for c in ens]
    print(f"{label:20s}  TV(t=1) = {tv_distance(psi_t, final):.3f}   "
          f"coarse H = {coarse_h_function(psi_t, final):.3f}")
