"""GRW collapse dynamics with the flash ontology.

Collapses hit particle ``i`` (1-based) as a Poisson process of total rate
``N * lambda``.  A collapse with width ``sigma`` picks its centre ``x`` from
``p(x) = (rho_i * g_sigma)(x)`` where ``rho_i`` is the marginal density of
particle ``i`` and ``g_sigma`` the normalized Gaussian of variance
``sigma^2``; the state is then multiplied by ``sqrt(g_sigma(q_i - x))`` and
renormalized.  Distances are minimal-image on the periodic box.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .beables import BeableConfiguration, FlashRecord
from .errors import CollapseError, DescriptorError
from .quantum import (GridSpec, PotentialSpec, Wavefunction, init_state, marginal_density,
                      propagator)
from .seeding import as_generator, derive_seed

MAX_EXPECTED_FLASHES = 1e6
DEGENERATE_NORM = 1e-12


@dataclass(frozen=True)
class CollapseParams:
    rate: float = 1.0  # lambda, per particle
    sigma: float = 1.0

    def __post_init__(self):
        if self.rate < 0:
            raise DescriptorError("collapse rate must be non-negative")
        if not self.sigma > 0:
            raise DescriptorError("collapse width sigma must be positive")

    @classmethod
    def from_dict(cls, d: Mapping) -> "CollapseParams":
        return cls(rate=float(d.get("lambda", 1.0)), sigma=float(d.get("sigma", 1.0)))

    def to_dict(self) -> dict:
        return {"lambda": self.rate, "sigma": self.sigma}

    def check(self, grid: GridSpec, horizon: float) -> None:
        if self.sigma < 2 * grid.spacing:
            raise DescriptorError(f"sigma={self.sigma} is below two grid spacings "
                                  f"({2 * grid.spacing:.4g})")
        expected = self.rate * horizon * grid.dims
        if expected >= MAX_EXPECTED_FLASHES:
            raise DescriptorError(f"expected flash count {expected:.3g} exceeds the "
                                  f"{MAX_EXPECTED_FLASHES:.0e} resource guard")


def sample_flash_times(params: CollapseParams, n_particles: int, horizon: float, seed) -> list:
    """Flash times and particle labels as a sorted list of ``(t, particle)``."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    rng = as_generator(seed)
    rate = params.rate * n_particles
    if rate == 0:
        return []
    if rate * horizon >= MAX_EXPECTED_FLASHES:
        raise DescriptorError("expected flash count exceeds the resource guard")
    count = rng.poisson(rate * horizon)
    times = np.sort(rng.uniform(0.0, horizon, count))
    particles = rng.integers(1, n_particles + 1, count)
    return [(float(t), int(i)) for t, i in zip(times, particles)]


def _offsets(grid: GridSpec) -> np.ndarray:
    """Minimal-image displacement of each grid index from index 0."""
    j = np.arange(grid.points_per_dim)
    j = np.where(j > grid.points_per_dim // 2, j - grid.points_per_dim, j)
    return j * grid.spacing


def _min_image(grid: GridSpec, d):
    return d - grid.box_length * np.round(d / grid.box_length)


def collapse_center_density(psi: Wavefunction, particle: int, sigma: float) -> np.ndarray:
    """Collapse-centre density ``p`` on the grid for a hit on ``particle``."""
    grid = psi.grid
    rho = marginal_density(psi, particle - 1)
    d = _offsets(grid)
    kernel = np.exp(-d * d / (2 * sigma * sigma))
    # normalized on the grid, so the minimal-image tail cut keeps completeness exact
    kernel /= kernel.sum() * grid.spacing
    p = np.fft.irfft(np.fft.rfft(rho) * np.fft.rfft(kernel), n=grid.points_per_dim) * grid.spacing
    return np.maximum(p, 0.0)


def apply_collapse(psi: Wavefunction, particle: int, params: CollapseParams, seed):
    """Collapse ``particle`` (1-based) once; returns ``(post_state, centre)``."""
    grid = psi.grid
    if not 1 <= particle <= grid.dims:
        raise IndexError(f"particle {particle} out of range for {grid.dims} particles")
    if params.sigma < 2 * grid.spacing:
        raise DescriptorError("sigma is below two grid spacings")
    rng = as_generator(seed)
    p = collapse_center_density(psi, particle, params.sigma)
    cdf = np.cumsum(p)
    idx = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), cdf.size - 1)
    x = grid.x_min + grid.spacing * (idx + rng.random() - 0.5)
    if x < grid.x_min:
        x = float(grid.wrap(x))

    q = grid.axis() - x
    q = _min_image(grid, q)
    factor = (2 * np.pi * params.sigma ** 2) ** -0.25 * np.exp(-q * q / (4 * params.sigma ** 2))
    shape = [1] * grid.dims
    shape[particle - 1] = grid.points_per_dim
    amps = psi.amplitudes * factor.reshape(shape)
    n2 = float(np.sum(np.abs(amps) ** 2) * grid.cell_volume)
    if not n2 >= DEGENERATE_NORM:
        raise CollapseError("post-collapse norm is numerically degenerate",
                            {"norm2": n2, "center": x, "particle": particle, "time": psi.time})
    return Wavefunction(grid, amps / np.sqrt(n2), psi.time), float(x)


@dataclass
class GRWConfig:
    grid: GridSpec
    potential: PotentialSpec
    initial_state: Mapping
    collapse: CollapseParams
    horizon: float

    def psi0(self) -> Wavefunction:
        return init_state(self.grid, self.initial_state)

    @property
    def n_total(self) -> int:
        n = int(round(self.horizon / self.grid.dt))
        if n < 1 or abs(n * self.grid.dt - self.horizon) > 1e-9 * max(1.0, self.horizon):
            raise ValueError(f"horizon {self.horizon} is not a multiple of dt={self.grid.dt}")
        return n


def _run_chunk(config: GRWConfig, psi0: Wavefunction, seeds, indices, keep_states):
    grid, dt = config.grid, config.grid.dt
    prop = propagator(grid, config.potential)
    n_total = config.n_total
    rngs = [np.random.default_rng(s) for s in seeds]
    schedules = []
    for rng in rngs:
        events = sample_flash_times(config.collapse, grid.dims, config.horizon, rng)
        schedules.append([(min(int(np.floor(t / dt)), n_total), t, i) for t, i in events])
    amps = np.broadcast_to(psi0.amplitudes, (len(seeds),) + grid.shape).copy()
    flashes = [[] for _ in seeds]

    def collapse(r, clock, t, i):
        psi = Wavefunction(grid, amps[r], clock * dt)
        post, x = apply_collapse(psi, i, config.collapse, rngs[r])
        amps[r] = post.amplitudes
        flashes[r].append(FlashRecord(x=x, particle=i, t=t))

    if prop.is_free:
        # exact free evolution: each row jumps straight between its own events
        for r, sched in enumerate(schedules):
            clock = 0
            for s, t, i in sched:
                if s > clock:
                    amps[r] = prop.advance(amps[r], s - clock)
                    clock = s
                collapse(r, clock, t, i)
            if n_total > clock:
                amps[r] = prop.advance(amps[r], n_total - clock)
    else:
        cursor = [0] * len(seeds)
        clock = 0
        event_steps = sorted({s for sched in schedules for s, _, _ in sched})
        for target in event_steps + [n_total]:
            if target > clock:
                amps = prop.advance(amps, target - clock)
                clock = target
            for r, sched in enumerate(schedules):
                while cursor[r] < len(sched) and sched[cursor[r]][0] == clock:
                    _, t, i = sched[cursor[r]]
                    collapse(r, clock, t, i)
                    cursor[r] += 1
    out = []
    for r, (s, k) in enumerate(zip(seeds, indices)):
        final = Wavefunction(grid, amps[r], n_total * dt) if keep_states else None
        out.append(BeableConfiguration(
            kind="grw", seed=s, horizon=config.horizon, index=k, flashes=tuple(flashes[r]),
            particle_count=grid.dims, final_state=final,
            diagnostics={"flash_count": len(flashes[r])}))
    return out


def run_grw_ensemble(config: GRWConfig, m: int, master_seed: int, keep_states: bool = False,
                     workers: int = 1, start: int = 0) -> list[BeableConfiguration]:
    """Sample ``m`` flash histories; between flashes the state evolves unitarily.

    Members are stepped in batches; each row of a batch sees exactly the
    operations it would see alone, so results depend only on
    ``(config, master_seed, member index)``.
    """
    if m < 1:
        raise ValueError("ensemble size must be >= 1")
    config.collapse.check(config.grid, config.horizon)
    psi0 = config.psi0()
    seeds = [derive_seed(master_seed, k) for k in range(start, start + m)]
    indices = list(range(start, start + m))
    chunk = max(1, min(256, (1 << 20) // int(np.prod(config.grid.shape))))
    jobs = [(seeds[i:i + chunk], indices[i:i + chunk]) for i in range(0, m, chunk)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda j: _run_chunk(config, psi0, j[0], j[1], keep_states), jobs))
    else:
        parts = [_run_chunk(config, psi0, s, i, keep_states) for s, i in jobs]
    return [c for part in parts for c in part]


def ensemble_density(configs, coordinate: int = 0) -> np.ndarray:
    """Ensemble-averaged marginal density of the stored final states."""
    states = [c.final_state for c in configs]
    if any(s is None for s in states):
        raise ValueError("configurations were sampled without keep_states=True")
    return np.mean([marginal_density(s, coordinate) for s in states], axis=0)
