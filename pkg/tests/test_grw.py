import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from bgqt.beables import write_flashes_csv
from bgqt.errors import CollapseError, DescriptorError
from bgqt.grw import (CollapseParams, GRWConfig, apply_collapse, collapse_center_density,
                      ensemble_density, run_grw_ensemble, sample_flash_times)
from bgqt.quantum import (GridSpec, PotentialSpec, Wavefunction, init_state, integrate,
                          marginal_density, step)
from bgqt.seeding import derive_seed

GRID = GridSpec(1, 256, 20.0, 1e-2)
WIDE = GridSpec(1, 512, 40.0, 1e-3)
PACKET = {"type": "gaussian_packet", "center": 0.0, "width": 1.0}
FREE = PotentialSpec.make("free")


# -- flash times ----------------------------------------------------------------

def test_zero_rate_gives_no_flashes():
    assert sample_flash_times(CollapseParams(rate=0.0), 2, 10.0, 1) == []


def test_flash_times_are_sorted_and_labelled():
    events = sample_flash_times(CollapseParams(rate=3.0), 2, 4.0, 5)
    times = [t for t, _ in events]
    assert times == sorted(times) and len(set(times)) == len(times)
    assert all(0 <= t <= 4.0 for t in times)
    assert {i for _, i in events} <= {1, 2}


def test_flash_times_deterministic():
    p = CollapseParams(rate=2.0)
    assert sample_flash_times(p, 2, 5.0, 123) == sample_flash_times(p, 2, 5.0, 123)
    assert sample_flash_times(p, 2, 5.0, 123) != sample_flash_times(p, 2, 5.0, 124)


@pytest.mark.parametrize("rate,horizon,n", [(5.0, 10.0, 2), (1.0, 5.0, 2), (0.3, 20.0, 1)])
def test_poisson_mean_count(rate, horizon, n):
    runs = 1000
    counts = [len(sample_flash_times(CollapseParams(rate=rate), n, horizon, derive_seed(3, k)))
              for k in range(runs)]
    mean = n * rate * horizon
    assert abs(np.mean(counts) - mean) < 3 * math.sqrt(mean / runs)


def test_particle_labels_uniform():
    events = [i for k in range(300)
              for _, i in sample_flash_times(CollapseParams(rate=2.0), 2, 5.0, k)]
    share = np.mean(np.array(events) == 1)
    assert abs(share - 0.5) < 3 * math.sqrt(0.25 / len(events))


def test_inter_flash_intervals_are_exponential():
    params, n, horizon = CollapseParams(rate=1.0), 2, 50.0
    gaps = []
    for k in range(120):  # 120 * 100 expected events > 1e4
        times = [t for t, _ in sample_flash_times(params, n, horizon, derive_seed(17, k))]
        gaps.extend(np.diff([0.0] + times))
    assert len(gaps) >= 10_000
    res = stats.kstest(gaps, "expon", args=(0, 1 / (n * params.rate)))
    assert res.pvalue > 0.01


def test_resource_guard_and_param_checks():
    with pytest.raises(DescriptorError):
        sample_flash_times(CollapseParams(rate=1e6), 2, 1.0, 0)
    with pytest.raises(DescriptorError):
        CollapseParams(rate=-1.0)
    with pytest.raises(DescriptorError):
        CollapseParams(sigma=0.0)
    with pytest.raises(DescriptorError):
        CollapseParams(sigma=0.1).check(GRID, 1.0)
    with pytest.raises(ValueError):
        sample_flash_times(CollapseParams(), 1, 0.0, 0)


# -- single collapses ---------------------------------------------------------------

def brute_force_density(psi, particle, sigma):
    """O(n^2) periodic convolution with the minimal-image Gaussian, normalized on the grid."""
    grid = psi.grid
    rho = marginal_density(psi, particle - 1)
    x = grid.axis()
    d = x[:, None] - x[None, :]
    d = d - grid.box_length * np.round(d / grid.box_length)
    g = np.exp(-d * d / (2 * sigma * sigma))
    g /= g[0].sum() * grid.spacing
    return g @ rho * grid.spacing


@pytest.mark.parametrize("sigma", [0.5, 1.0, 3.0])
def test_center_density_matches_direct_convolution(sigma):
    psi = init_state(GRID, {"type": "superposition", "packets": [
        dict(PACKET, center=-3.0, width=0.7), dict(PACKET, center=2.0, momentum=1.0)]})
    p = collapse_center_density(psi, 1, sigma)
    assert np.max(np.abs(p - brute_force_density(psi, 1, sigma))) < 1e-12


def test_collapse_center_variance():
    width, sigma = 0.3, 1.0
    psi = init_state(WIDE, dict(PACKET, width=width))
    rng = np.random.default_rng(2)
    xs = np.array([apply_collapse(psi, 1, CollapseParams(sigma=sigma), rng)[1]
                   for _ in range(10_000)])
    # brute-force oracle for the variance of the centre density
    p = brute_force_density(psi, 1, sigma)
    x = WIDE.axis()
    oracle = np.sum(p * x * x) * WIDE.spacing - (np.sum(p * x) * WIDE.spacing) ** 2
    assert oracle == pytest.approx(sigma ** 2 + width ** 2 / 2, rel=1e-6)
    assert abs(xs.var() / oracle - 1) < 0.05


def test_collapse_concentrates_superposition():
    psi = init_state(GRID, {"type": "superposition", "packets": [
        dict(PACKET, center=-5.0), dict(PACKET, center=5.0)]})
    sigma = 1.0
    for seed in range(20):
        post, x = apply_collapse(psi, 1, CollapseParams(sigma=sigma), seed)
        rho = marginal_density(post, 0)
        d = np.abs(GRID.axis() - x)
        d = np.minimum(d, GRID.box_length - d)
        assert np.sum(rho[d <= 3 * sigma]) * GRID.spacing > 0.99


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), sigma=st.floats(0.2, 5.0))
def test_completeness_property(seed, sigma):
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=256) + 1j * rng.normal(size=256)
    psi = Wavefunction(GRID, amps / math.sqrt(np.sum(np.abs(amps) ** 2) * GRID.spacing))
    assert abs(integrate(GRID, collapse_center_density(psi, 1, sigma)) - 1) < 1e-9


@pytest.mark.parametrize("particle", [1, 2])
def test_norm_restored_after_collapse(particle):
    grid = GridSpec(2, 64, 20.0, 1e-2, masses=(1.0, 1.0))
    psi = init_state(grid, {"type": "gaussian_packet", "center": [-2.0, 2.0], "width": 1.5})
    for seed in range(10):
        post, x = apply_collapse(psi, particle, CollapseParams(sigma=1.0), seed)
        assert abs(post.norm2() - 1) < 1e-9
        assert grid.x_min <= x < grid.x_min + grid.box_length


def test_collapse_rejects_bad_particle():
    psi = init_state(GRID, PACKET)
    with pytest.raises(IndexError):
        apply_collapse(psi, 2, CollapseParams(), 0)
    with pytest.raises(IndexError):
        apply_collapse(psi, 0, CollapseParams(), 0)


def test_degenerate_collapse_carries_diagnostics(monkeypatch):
    import bgqt.grw as grw
    psi = init_state(GRID, PACKET)
    monkeypatch.setattr(grw, "DEGENERATE_NORM", 2.0)
    with pytest.raises(CollapseError) as info:
        apply_collapse(psi, 1, CollapseParams(), 0)
    assert set(info.value.diagnostics) >= {"norm2", "center", "particle", "time"}


# -- ensembles --------------------------------------------------------------------

def config(rate, horizon=1.0, potential=FREE, grid=GRID, state=PACKET):
    return GRWConfig(grid, potential, state, CollapseParams(rate=rate, sigma=1.0), horizon)


@pytest.mark.parametrize("potential", [FREE, PotentialSpec.make("harmonic", omega=1.0)])
def test_zero_rate_is_unitary(potential):
    cfg = config(0.0, potential=potential, state=dict(PACKET, center=1.0, momentum=0.5))
    ens = run_grw_ensemble(cfg, 3, master_seed=1, keep_states=True)
    expected = step(cfg.psi0(), potential, 100)
    for c in ens:
        assert c.flashes == ()
        assert np.max(np.abs(c.final_state.amplitudes - expected.amplitudes)) < 1e-9


def test_ensemble_mean_flash_count():
    grid = GridSpec(2, 32, 20.0, 0.05, masses=(1.0, 1.0))
    cfg = GRWConfig(grid, FREE, {"type": "gaussian_packet", "center": 0.0, "width": 1.5},
                    CollapseParams(rate=1.0, sigma=1.5), 5.0)
    counts = [len(c.flashes) for c in run_grw_ensemble(cfg, 1000, master_seed=8)]
    assert abs(np.mean(counts) - 10) < 3 * math.sqrt(10 / 1000)


def test_collapses_heat_the_free_particle():
    def spread(rate):
        ens = run_grw_ensemble(config(rate, horizon=2.0), 1000, master_seed=21, keep_states=True)
        rho = ensemble_density(ens)
        x = GRID.axis()
        mean = np.sum(rho * x) * GRID.spacing
        return np.sum(rho * (x - mean) ** 2) * GRID.spacing

    assert spread(1.0) > spread(0.0)


def test_ensemble_is_deterministic_and_order_independent():
    cfg = config(2.0, potential=PotentialSpec.make("harmonic", omega=0.5))
    a = run_grw_ensemble(cfg, 6, master_seed=4)
    b = run_grw_ensemble(cfg, 6, master_seed=4, workers=3)
    tail = run_grw_ensemble(cfg, 2, master_seed=4, start=4)
    assert all(x.same_beables(y) for x, y in zip(a, b))
    assert a[4].same_beables(tail[0]) and a[5].same_beables(tail[1])
    assert any(c.flashes for c in a)
    for c in a:
        assert all(0 <= f.t <= cfg.horizon for f in c.flashes)
        assert c.diagnostics["flash_count"] == len(c.flashes)


def test_flash_csv(tmp_path):
    ens = run_grw_ensemble(config(3.0), 3, master_seed=6)
    path = tmp_path / "flashes.csv"
    write_flashes_csv(ens, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "run_id,t,particle,x"
    assert len(lines) - 1 == sum(len(c.flashes) for c in ens)


def test_ensemble_density_needs_states():
    with pytest.raises(ValueError):
        ensemble_density(run_grw_ensemble(config(0.0), 1, master_seed=0))
