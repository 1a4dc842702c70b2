"""De Broglie-Bohm trajectory beables.

Trajectories follow the guidance law ``v_i = Im(d_i psi / psi) / m_i`` while
the state evolves under the split-step propagator.  The velocity field is
refreshed once per quantum step, interpolated multilinearly in space and
linearly in time, and integrated with classical RK4.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .beables import BeableConfiguration, Trajectory
from .errors import DescriptorError
from .quantum import (GridSpec, PotentialSpec, Wavefunction, _as_tuple, density,
                      gradient, init_state, marginal_density, propagator)
from .seeding import as_generator, derive_seed

NODE_EPSILON = 1e-12
SUBDIVISIONS = 8


@dataclass(frozen=True, eq=False)
class VelocityField:
    """Guidance velocity on the grid.

    ``components[d]`` is the velocity of coordinate ``d``; ``singular`` marks
    cells with ``|psi|^2 < node_epsilon * max|psi|^2`` where the value has been
    capped at ``v_max`` in magnitude.
    """

    components: np.ndarray
    singular: np.ndarray
    v_max: float


def velocity_field(psi: Wavefunction, node_epsilon: float = NODE_EPSILON) -> VelocityField:
    grid = psi.grid
    amps = psi.amplitudes
    rho = np.abs(amps) ** 2
    singular = rho < node_epsilon * rho.max()
    v_max = 0.25 * grid.spacing / grid.dt
    comps = np.empty((grid.dims,) + grid.shape)
    safe = np.where(singular, 1.0, rho)
    for d in range(grid.dims):
        dpsi = gradient(grid, amps, d)
        v = np.imag(np.conj(amps) * dpsi) / safe / grid.masses[d]
        if singular.any():
            capped = np.clip(np.nan_to_num(v, nan=0.0, posinf=v_max, neginf=-v_max), -v_max, v_max)
            v = np.where(singular, capped, v)
        comps[d] = v
    return VelocityField(comps, singular, v_max)


def _stencil(grid: GridSpec, x: np.ndarray):
    """Corner indices and weights for periodic multilinear interpolation at ``x`` (M, D)."""
    n = grid.points_per_dim
    u = (x - grid.x_min) / grid.spacing
    fl = np.floor(u)
    frac = u - fl
    i0 = fl.astype(np.int64) % n
    i1 = (i0 + 1) % n
    return i0, i1, frac


def _interp(grid: GridSpec, fields: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Interpolate ``fields`` (C, *shape) at positions ``x`` (M, D) -> (M, C)."""
    i0, i1, f = _stencil(grid, x)
    if grid.dims == 1:
        a, b = fields[:, i0[:, 0]], fields[:, i1[:, 0]]
        w = f[:, 0]
        return ((1 - w) * a + w * b).T
    fx, fy = f[:, 0], f[:, 1]
    c00 = fields[:, i0[:, 0], i0[:, 1]]
    c10 = fields[:, i1[:, 0], i0[:, 1]]
    c01 = fields[:, i0[:, 0], i1[:, 1]]
    c11 = fields[:, i1[:, 0], i1[:, 1]]
    out = (1 - fx) * ((1 - fy) * c00 + fy * c01) + fx * ((1 - fy) * c10 + fy * c11)
    return out.T


def _touches(grid: GridSpec, mask: np.ndarray, x: np.ndarray) -> np.ndarray:
    """True where any interpolation corner of ``x`` lies in a flagged cell."""
    i0, i1, _ = _stencil(grid, x)
    if grid.dims == 1:
        return mask[i0[:, 0]] | mask[i1[:, 0]]
    return (mask[i0[:, 0], i0[:, 1]] | mask[i1[:, 0], i0[:, 1]]
            | mask[i0[:, 0], i1[:, 1]] | mask[i1[:, 0], i1[:, 1]])


def _rk4(grid, v_a, v_mid, v_b, x, h):
    k1 = _interp(grid, v_a, x)
    k2 = _interp(grid, v_mid, x + 0.5 * h * k1)
    k3 = _interp(grid, v_mid, x + 0.5 * h * k2)
    k4 = _interp(grid, v_b, x + h * k3)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _blend(grid, v_a, v_b, theta, x):
    return (1 - theta) * _interp(grid, v_a, x) + theta * _interp(grid, v_b, x)


def _rk4_subdivided(grid, v_a, v_b, x, dt, parts):
    h = dt / parts
    for s in range(parts):
        t0, tm, t1 = s / parts, (s + 0.5) / parts, (s + 1) / parts
        k1 = _blend(grid, v_a, v_b, t0, x)
        k2 = _blend(grid, v_a, v_b, tm, x + 0.5 * h * k1)
        k3 = _blend(grid, v_a, v_b, tm, x + 0.5 * h * k2)
        k4 = _blend(grid, v_a, v_b, t1, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def _n_steps(grid: GridSpec, horizon: float, record_stride: int) -> int:
    n = int(round(horizon / grid.dt))
    if n < 1 or abs(n * grid.dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not a positive multiple of dt={grid.dt}")
    if record_stride < 1 or n % record_stride:
        raise ValueError(f"{n} steps are not a multiple of record_stride={record_stride}")
    return n


@dataclass
class TrajectoryBatch:
    """Trajectories of many ensemble members integrated in lockstep."""

    times: np.ndarray
    positions: np.ndarray  # (K+1, M, D)
    wraps: np.ndarray  # per-member wrap events
    subdivided: np.ndarray  # per-member count of subdivided steps
    final_state: Wavefunction

    def trajectory(self, k: int) -> Trajectory:
        return Trajectory(self.times, self.positions[:, k, :])


def integrate_trajectories(psi0: Wavefunction, potential: PotentialSpec, x0, horizon: float,
                           record_stride: int = 1,
                           node_epsilon: float = NODE_EPSILON) -> TrajectoryBatch:
    """Integrate guidance trajectories for all rows of ``x0`` (M, D).

    Each row is integrated with exactly the operations it would see alone,
    so member results do not depend on batch composition.
    """
    grid = psi0.grid
    x = np.array(x0, dtype=float).reshape(-1, grid.dims)
    if np.any(x < grid.x_min) or np.any(x >= grid.x_min + grid.box_length):
        raise ValueError("initial positions must lie inside the box")
    n_total = _n_steps(grid, horizon, record_stride)
    prop = propagator(grid, potential)
    dt = grid.dt
    m = x.shape[0]
    n_rec = n_total // record_stride
    record = np.empty((n_rec + 1, m, grid.dims))
    record[0] = x
    wraps = np.zeros(m, dtype=np.int64)
    subdivided = np.zeros(m, dtype=np.int64)

    amps = np.asarray(psi0.amplitudes)
    field_a = velocity_field(Wavefunction(grid, amps, psi0.time), node_epsilon)
    for n in range(1, n_total + 1):
        amps = prop.advance(amps, 1)
        field_b = velocity_field(Wavefunction(grid, amps, psi0.time + n * dt), node_epsilon)
        va, vb = field_a.components, field_b.components
        vmid = 0.5 * (va + vb)
        nodes = field_a.singular | field_b.singular
        if nodes.any():
            near = _touches(grid, nodes, x)
        else:
            near = np.zeros(m, dtype=bool)
        x_new = np.empty_like(x)
        regular = ~near
        if regular.any():
            x_new[regular] = _rk4(grid, va, vmid, vb, x[regular], dt)
        if near.any():
            x_new[near] = _rk4_subdivided(grid, va, vb, x[near], dt, SUBDIVISIONS)
            subdivided += near
        outside = (x_new < grid.x_min) | (x_new >= grid.x_min + grid.box_length)
        if outside.any():
            x_new = np.where(outside, grid.wrap(x_new), x_new)
            wraps += np.any(outside, axis=1)
        x = x_new
        field_a = field_b
        if n % record_stride == 0:
            record[n // record_stride] = x
    times = np.arange(n_rec + 1) * (record_stride * dt)
    final = Wavefunction(grid, amps, psi0.time + n_total * dt)
    return TrajectoryBatch(times, record, wraps, subdivided, final)


def integrate_trajectory(psi0: Wavefunction, potential: PotentialSpec, x0, horizon: float,
                         record_stride: int = 1) -> Trajectory:
    batch = integrate_trajectories(psi0, potential, np.atleast_1d(x0)[None, :], horizon,
                                   record_stride)
    return batch.trajectory(0)


@dataclass(frozen=True)
class InitialDistribution:
    """Equilibrium (``|psi0|^2``) or a non-equilibrium product density.

    Non-equilibrium descriptors: ``{"type": "gaussian", "center", "width"}``
    (the density of a ``gaussian_packet`` of that width, i.e. standard
    deviation ``width / sqrt(2)``) or ``{"type": "uniform_box", "center",
    "width"}`` (full width), per coordinate.
    """

    variant: str = "equilibrium"
    descriptor: tuple = ()

    @classmethod
    def equilibrium(cls) -> "InitialDistribution":
        return cls("equilibrium")

    @classmethod
    def nonequilibrium(cls, descriptor: Mapping) -> "InitialDistribution":
        return cls("nonequilibrium", tuple(sorted(
            (k, tuple(v) if isinstance(v, (list, tuple)) else v) for k, v in descriptor.items())))

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "InitialDistribution":
        if not d or d.get("type", "equilibrium") == "equilibrium":
            return cls.equilibrium()
        if d["type"] != "nonequilibrium":
            raise DescriptorError(f"unknown initial distribution {d['type']!r}")
        return cls.nonequilibrium(d["descriptor"])

    def to_dict(self) -> dict:
        if self.variant == "equilibrium":
            return {"type": "equilibrium"}
        return {"type": "nonequilibrium",
                "descriptor": {k: list(v) if isinstance(v, tuple) else v for k, v in self.descriptor}}

    def check_support(self, grid: GridSpec) -> None:
        if self.variant == "equilibrium":
            return
        d = dict(self.descriptor)
        kind = d.get("type")
        if kind not in ("gaussian", "uniform_box"):
            raise DescriptorError(f"unknown non-equilibrium descriptor {kind!r}")
        centers = _as_tuple(d.get("center", 0.0), grid.dims, "center")
        widths = _as_tuple(d.get("width", 1.0), grid.dims, "width")
        lo_box, hi_box = grid.x_min, grid.x_min + grid.box_length
        for c, w in zip(centers, widths):
            if not w > 0:
                raise DescriptorError("distribution width must be positive")
            half = 5 * w if kind == "gaussian" else 0.5 * w
            if c - half < lo_box or c + half >= hi_box:
                raise DescriptorError(f"descriptor support [{c - half}, {c + half}] "
                                      f"leaves the box [{lo_box}, {hi_box})")


def _equilibrium_cdf(psi0: Wavefunction) -> np.ndarray:
    p = density(psi0).ravel()
    cdf = np.cumsum(p)
    return cdf / cdf[-1]


def _draw(dist: InitialDistribution, grid: GridSpec, cdf, rng: np.random.Generator) -> np.ndarray:
    if dist.variant == "equilibrium":
        idx = min(int(np.searchsorted(cdf, rng.random(), side="right")), cdf.size - 1)
        cell = np.array(np.unravel_index(idx, grid.shape), dtype=float)
        x = grid.x_min + grid.spacing * (cell + rng.random(grid.dims) - 0.5)
        return np.where(x < grid.x_min, grid.wrap(x), x)
    d = dict(dist.descriptor)
    centers = np.array(_as_tuple(d.get("center", 0.0), grid.dims, "center"))
    widths = np.array(_as_tuple(d.get("width", 1.0), grid.dims, "width"))
    if d["type"] == "gaussian":
        return centers + widths / np.sqrt(2.0) * rng.standard_normal(grid.dims)
    return centers + widths * (rng.random(grid.dims) - 0.5)


def sample_initial(dist: InitialDistribution, psi0: Wavefunction, seed) -> np.ndarray:
    """Draw one initial configuration (a position per coordinate)."""
    if psi0.time != 0:
        raise ValueError("initial positions are sampled from the time-zero state")
    dist.check_support(psi0.grid)
    cdf = _equilibrium_cdf(psi0) if dist.variant == "equilibrium" else None
    return _draw(dist, psi0.grid, cdf, as_generator(seed))


@dataclass
class BohmConfig:
    grid: GridSpec
    potential: PotentialSpec
    initial_state: Mapping
    horizon: float
    record_stride: int = 1
    initial_distribution: InitialDistribution = field(default_factory=InitialDistribution)
    node_epsilon: float = NODE_EPSILON

    def psi0(self) -> Wavefunction:
        return init_state(self.grid, self.initial_state)


def run_bohm_ensemble(config: BohmConfig, m: int, master_seed: int,
                      start: int = 0) -> list[BeableConfiguration]:
    """Sample members ``start .. start+m-1`` of the trajectory ensemble.

    Member ``k`` uses the seed ``derive_seed(master_seed, k)`` for its initial
    position; integration is deterministic given that position.
    """
    if m < 1:
        raise ValueError("ensemble size must be >= 1")
    psi0 = config.psi0()
    dist = config.initial_distribution
    dist.check_support(config.grid)
    cdf = _equilibrium_cdf(psi0) if dist.variant == "equilibrium" else None
    seeds = [derive_seed(master_seed, k) for k in range(start, start + m)]
    x0 = np.array([_draw(dist, config.grid, cdf, np.random.default_rng(s)) for s in seeds])
    batch = integrate_trajectories(psi0, config.potential, x0, config.horizon,
                                   config.record_stride, config.node_epsilon)
    out = []
    for j, s in enumerate(seeds):
        out.append(BeableConfiguration(
            kind="bohm", seed=s, horizon=config.horizon, index=start + j,
            trajectory=batch.trajectory(j),
            diagnostics={"wraps": int(batch.wraps[j]), "subdivided_steps": int(batch.subdivided[j]),
                         "record_stride": config.record_stride}))
    return out


def binned_quantum_probabilities(psi: Wavefunction, coordinate: int = 0, bins: int = 64) -> np.ndarray:
    """Probability of each of ``bins`` uniform bins of one coordinate under ``|psi|^2``.

    Grid cell ``j`` is ``[x_j - h/2, x_j + h/2)``; bins are aligned with cells.
    """
    n = psi.grid.points_per_dim
    if n % bins:
        raise ValueError(f"bins={bins} must divide points_per_dim={n}")
    rho = marginal_density(psi, coordinate) * psi.grid.spacing
    return rho.reshape(bins, n // bins).sum(axis=1)


def binned_sample_probabilities(grid: GridSpec, positions, coordinate: int = 0,
                                bins: int = 64) -> np.ndarray:
    x = np.asarray(positions, dtype=float).reshape(-1, grid.dims)[:, coordinate]
    u = np.mod(x + 0.5 * grid.spacing - grid.x_min, grid.box_length)
    idx = np.minimum((u / (grid.box_length / bins)).astype(np.int64), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    return counts / counts.sum()


def tv_distance(psi: Wavefunction, positions, coordinate: int = 0, bins: int = 64) -> float:
    """Total-variation distance between a position histogram and ``|psi|^2``."""
    q = binned_quantum_probabilities(psi, coordinate, bins)
    p = binned_sample_probabilities(psi.grid, positions, coordinate, bins)
    return 0.5 * float(np.abs(p - q).sum())


def coarse_h_function(psi: Wavefunction, positions, coordinate: int = 0, bins: int = 64) -> float:
    """Coarse-grained relaxation H-function ``sum p ln(p / |psi|^2)`` over bins.

    A diagnostic for non-equilibrium ensembles; zero for an exact equilibrium
    histogram and not guaranteed to decrease monotonically.
    """
    q = binned_quantum_probabilities(psi, coordinate, bins)
    p = binned_sample_probabilities(psi.grid, positions, coordinate, bins)
    keep = p > 0
    return float(np.sum(p[keep] * np.log(p[keep] / np.maximum(q[keep], 1e-300))))
