import math

import numpy as np
import pytest

from bgqt.beables import Trajectory, write_trajectories_csv
from bgqt.bohm import (BohmConfig, InitialDistribution, binned_quantum_probabilities,
                       coarse_h_function, integrate_trajectories, integrate_trajectory,
                       run_bohm_ensemble, sample_initial, tv_distance, velocity_field)
from bgqt.errors import DescriptorError
from bgqt.quantum import GridSpec, PotentialSpec, init_state, step

GRID = GridSpec(1, 256, 20.0, 1e-3)
FREE = PotentialSpec.make("free")
PACKET = {"type": "gaussian_packet", "center": 0.0, "width": 1.0, "momentum": 0.0}


def free_width(t, s0=1.0, m=1.0):
    """Amplitude width of a free Gaussian packet."""
    return s0 * math.sqrt(1 + (t / (m * s0 * s0)) ** 2)


def free_width_rate(t, s0=1.0, m=1.0):
    return (t / (m * m * s0 ** 3)) / math.sqrt(1 + (t / (m * s0 * s0)) ** 2)


# -- velocity field -------------------------------------------------------------

@pytest.mark.filterwarnings("ignore:density at the periodic boundary")
def test_plane_wave_velocity_is_k_over_m():
    k = 2 * math.pi * 3 / GRID.box_length
    grid = GridSpec(1, 256, 20.0, 1e-3, masses=(2.0,))
    v = velocity_field(init_state(grid, {"type": "plane_wave", "k": k}))
    assert np.max(np.abs(v.components[0] - k / 2.0)) < 1e-10
    assert not v.singular.any()


@pytest.mark.parametrize("desc,pot", [
    ({"type": "harmonic_ground", "omega": 1.0}, PotentialSpec.make("harmonic", omega=1.0)),
    (PACKET, PotentialSpec.make("double_well", a4=0.05, a2=0.5)),
    ({"type": "superposition", "packets": [dict(PACKET, center=-3.0), dict(PACKET, center=3.0)]},
     PotentialSpec.make("barrier", height=2.0, center=0.0, width=0.5)),
])
def test_real_state_has_zero_velocity(desc, pot):
    psi = init_state(GRID, desc)
    v = velocity_field(psi)
    ok = ~v.singular
    assert np.max(np.abs(v.components[0][ok])) < 1e-9


@pytest.mark.parametrize("omega,mass", [(1.0, 1.0), (0.5, 2.0), (2.0, 1.0)])
def test_harmonic_ground_velocity_vanishes(omega, mass):
    grid = GridSpec(1, 256, 20.0, 1e-3, masses=(mass,))
    v = velocity_field(init_state(grid, {"type": "harmonic_ground", "omega": omega}))
    assert np.max(np.abs(v.components[0])) <= 1e-10


def test_spreading_gaussian_velocity_matches_phase_gradient():
    t = 0.7
    psi = step(init_state(GRID, PACKET), FREE, 700)
    v = velocity_field(psi).components[0]
    x = GRID.axis()
    expected = x * free_width_rate(t) / free_width(t)
    core = (np.abs(x) < 3 * free_width(t)) & (np.abs(x) > 0.05)
    rel = np.abs(v[core] - expected[core]) / np.abs(expected[core])
    assert rel.max() < 1e-4


def test_nodes_are_flagged_and_capped():
    psi = init_state(GRID, {"type": "superposition", "packets": [
        dict(PACKET, center=-3.0), dict(PACKET, center=3.0, coefficient=-1.0)]})
    v = velocity_field(psi)
    assert v.singular.any()
    assert np.all(np.abs(v.components[0][v.singular]) <= v.v_max)
    assert v.v_max == pytest.approx(0.25 * GRID.spacing / GRID.dt)


# -- initial sampling -------------------------------------------------------------

def test_equilibrium_sample_moments():
    psi0 = init_state(GRID, PACKET)
    rng = np.random.default_rng(123)
    xs = np.array([sample_initial(InitialDistribution.equilibrium(), psi0, rng)[0]
                   for _ in range(100_000)])
    assert abs(xs.mean()) < 0.01
    assert xs.var() == pytest.approx(0.5, rel=0.02)  # density variance of a width-1 packet


def test_nonequilibrium_point_like_box():
    psi0 = init_state(GRID, PACKET)
    dist = InitialDistribution.nonequilibrium({"type": "uniform_box", "center": 2.0, "width": 1e-3})
    xs = np.array([sample_initial(dist, psi0, s)[0] for s in range(2000)])
    assert np.all((xs >= 2.0 - 5e-4) & (xs <= 2.0 + 5e-4))


def test_nonequilibrium_gaussian_width_convention():
    psi0 = init_state(GRID, PACKET)
    dist = InitialDistribution.nonequilibrium({"type": "gaussian", "center": 1.0, "width": 0.5})
    rng = np.random.default_rng(9)
    xs = np.array([sample_initial(dist, psi0, rng)[0] for _ in range(40_000)])
    assert xs.mean() == pytest.approx(1.0, abs=0.01)
    assert xs.var() == pytest.approx(0.125, rel=0.03)


@pytest.mark.parametrize("desc", [
    {"type": "uniform_box", "center": 9.9, "width": 1.0},
    {"type": "gaussian", "center": 8.0, "width": 1.0},
    {"type": "uniform_box", "center": 0.0, "width": 0.0},
    {"type": "cauchy", "center": 0.0, "width": 1.0},
])
def test_nonequilibrium_support_checked(desc):
    dist = InitialDistribution.nonequilibrium(desc)
    with pytest.raises(DescriptorError):
        sample_initial(dist, init_state(GRID, PACKET), 0)


def test_sample_initial_is_deterministic():
    psi0 = init_state(GRID, PACKET)
    a = sample_initial(InitialDistribution.equilibrium(), psi0, 42)
    b = sample_initial(InitialDistribution.equilibrium(), psi0, 42)
    assert np.array_equal(a, b)


def test_initial_distribution_dict_roundtrip():
    d = InitialDistribution.nonequilibrium({"type": "gaussian", "center": [1.0, 2.0], "width": 0.5})
    assert InitialDistribution.from_dict(d.to_dict()) == d
    assert InitialDistribution.from_dict(None) == InitialDistribution.equilibrium()


# -- trajectories ---------------------------------------------------------------

@pytest.mark.filterwarnings("ignore:density at the periodic boundary")
def test_plane_wave_trajectory_moves_at_constant_speed():
    grid = GridSpec(1, 256, 8 * math.pi, 1e-3)
    psi0 = init_state(grid, {"type": "plane_wave", "k": 1.0})
    tr = integrate_trajectory(psi0, FREE, [0.0], 1.0, record_stride=100)
    assert tr.positions[-1, 0] == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(tr.times, np.linspace(0, 1, 11))


def test_ground_state_trajectory_is_still():
    pot = PotentialSpec.make("harmonic", omega=1.0)
    psi0 = init_state(GRID, {"type": "harmonic_ground", "omega": 1.0})
    tr = integrate_trajectory(psi0, pot, [0.7], 1.0, record_stride=50)
    assert np.max(np.abs(tr.positions[:, 0] - 0.7)) < 1e-8


@pytest.mark.parametrize("x0", [0.5, 1.0, 2.0])
def test_free_gaussian_scaling_trajectory(x0):
    tr = integrate_trajectory(init_state(GRID, PACKET), FREE, [x0], 1.0, record_stride=250)
    expected = x0 * np.array([free_width(t) for t in tr.times])
    assert np.max(np.abs(tr.positions[:, 0] - expected)) < 1e-3


def test_trajectories_do_not_cross():
    psi0 = init_state(GRID, {"type": "superposition", "packets": [
        dict(PACKET, center=-2.0, momentum=1.5), dict(PACKET, center=2.0, momentum=-1.5)]})
    x0 = np.linspace(-3.0, 3.0, 41)[:, None]
    batch = integrate_trajectories(psi0, FREE, x0, 2.0, record_stride=20)
    gaps = np.diff(batch.positions[:, :, 0], axis=1)
    assert np.all(gaps > -1e-6)


def test_trajectory_through_node_region_stays_finite():
    psi0 = init_state(GRID, {"type": "superposition", "packets": [
        dict(PACKET, center=-3.0), dict(PACKET, center=3.0, coefficient=-1.0)]})
    x0 = np.array([[0.0], [1e-4], [-2.0]])
    batch = integrate_trajectories(psi0, FREE, x0, 0.5, record_stride=50)
    assert np.all(np.isfinite(batch.positions))
    assert batch.subdivided[0] > 0


def test_wraps_are_counted():
    grid = GridSpec(1, 128, 10.0, 1e-3)
    psi0 = init_state(grid, {"type": "plane_wave", "k": 2 * math.pi * 5 / 10.0})
    batch = integrate_trajectories(psi0, FREE, np.array([[4.0]]), 1.0, record_stride=100)
    # speed 2 pi, starts at 4: wraps once within t = 1
    assert batch.wraps[0] == 1
    assert -5.0 <= batch.positions[-1, 0, 0] < 5.0


def test_integration_input_checks():
    psi0 = init_state(GRID, PACKET)
    with pytest.raises(ValueError):
        integrate_trajectory(psi0, FREE, [20.0], 0.1)
    with pytest.raises(ValueError):
        integrate_trajectory(psi0, FREE, [0.0], 0.1005)
    with pytest.raises(ValueError):
        integrate_trajectory(psi0, FREE, [0.0], 0.1, record_stride=7)


def test_trajectory_type_invariants():
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.2, 0.1]), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.1]), np.array([[0.0], [np.nan]]))


# -- ensembles ------------------------------------------------------------------

def free_config(**kw):
    return BohmConfig(GRID, FREE, PACKET, horizon=1.0, record_stride=kw.pop("record_stride", 100), **kw)


def test_ensemble_members_are_order_independent():
    cfg = free_config()
    full = run_bohm_ensemble(cfg, 6, master_seed=5)
    tail = run_bohm_ensemble(cfg, 2, master_seed=5, start=4)
    single = run_bohm_ensemble(cfg, 1, master_seed=5, start=3)
    assert full[4].trajectory == tail[0].trajectory and full[5].trajectory == tail[1].trajectory
    assert full[3].trajectory == single[0].trajectory
    assert [c.index for c in full] == list(range(6))


def test_ensemble_is_reproducible_bitwise():
    cfg = free_config()
    a = run_bohm_ensemble(cfg, 20, master_seed=99)
    b = run_bohm_ensemble(cfg, 20, master_seed=99)
    assert all(x.same_beables(y) and x.seed == y.seed for x, y in zip(a, b))
    c = run_bohm_ensemble(cfg, 20, master_seed=100)
    assert not all(x.same_beables(y) for x, y in zip(a, c))


def test_singleton_ensemble():
    (only,) = run_bohm_ensemble(free_config(), 1, master_seed=3)
    assert only.kind == "bohm" and only.trajectory.particle_count == 1
    assert only.diagnostics["record_stride"] == 100
    with pytest.raises(ValueError):
        run_bohm_ensemble(free_config(), 0, master_seed=3)


def test_free_equivariance_tv():
    cfg = free_config()
    ens = run_bohm_ensemble(cfg, 10_000, master_seed=2024)
    psi1 = step(cfg.psi0(), FREE, 1000)
    final = np.array([c.trajectory.positions[-1] for c in ens])
    assert tv_distance(psi1, final) < 0.05


EQUIVARIANCE_CASES = [
    ("harmonic", GRID, PotentialSpec.make("harmonic", omega=1.0),
     dict(PACKET, center=1.0, width=1.2)),
    ("barrier", GRID, PotentialSpec.make("barrier", height=2.0, center=0.5, width=0.5),
     dict(PACKET, center=-2.0, momentum=1.5)),
    ("double_well", GRID, PotentialSpec.make("double_well", a4=0.05, a2=0.5),
     dict(PACKET, center=1.0)),
    ("pairwise", GridSpec(2, 64, 20.0, 1e-3, masses=(1.0, 1.0)),
     PotentialSpec.make("pairwise_harmonic", k=1.0),
     {"type": "gaussian_packet", "center": [-1.0, 1.0], "width": 1.0}),
]


@pytest.mark.parametrize("name,grid,pot,desc", EQUIVARIANCE_CASES, ids=[c[0] for c in EQUIVARIANCE_CASES])
def test_equivariance_for_each_potential(name, grid, pot, desc):
    cfg = BohmConfig(grid, pot, desc, horizon=1.0, record_stride=500)
    ens = run_bohm_ensemble(cfg, 10_000, master_seed=77)
    pos = np.array([c.trajectory.positions for c in ens])  # (M, K+1, D)
    psi = cfg.psi0()
    for k, t in enumerate(ens[0].trajectory.times):
        if k:
            psi = step(psi, pot, 500)
        for d in range(grid.dims):
            assert tv_distance(psi, pos[:, k, :], coordinate=d) < 0.05, (t, d)


def test_nonequilibrium_ensemble_and_h_function():
    dist = InitialDistribution.nonequilibrium({"type": "uniform_box", "center": 0.0, "width": 2.0})
    cfg = free_config(initial_distribution=dist)
    ens = run_bohm_ensemble(cfg, 2000, master_seed=1)
    x0 = np.array([c.trajectory.positions[0] for c in ens])
    assert np.all(np.abs(x0) <= 1.0)
    psi0 = cfg.psi0()
    assert coarse_h_function(psi0, x0) > 0.05
    eq = run_bohm_ensemble(free_config(), 2000, master_seed=1)
    x_eq = np.array([c.trajectory.positions[0] for c in eq])
    assert coarse_h_function(psi0, x_eq) < coarse_h_function(psi0, x0)


def test_binned_probabilities_sum_to_one():
    psi = init_state(GRID, PACKET)
    assert binned_quantum_probabilities(psi).sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        binned_quantum_probabilities(psi, bins=100)


def test_trajectory_csv(tmp_path):
    ens = run_bohm_ensemble(free_config(), 2, master_seed=4)
    path = tmp_path / "traj.csv"
    write_trajectories_csv(ens, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "run_id,t,x_1"
    assert len(lines) == 1 + 2 * 11
    run_id, t, x = lines[12].split(",")
    assert int(run_id) == 1 and float(t) == 0.0
    assert float(x) == ens[1].trajectory.positions[0, 0]
