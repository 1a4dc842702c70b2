"""Wavefunctions on a periodic configuration-space grid and their unitary evolution.

Units: hbar = 1.  Configuration coordinate ``d`` belongs to particle ``d + 1``
(one spatial dimension per particle, at most two particles).  The grid for
each coordinate is ``x_j = -L/2 + j*h`` with ``h = L/n``; boundaries are
periodic.  Evolution uses symmetric (Strang) split-step stepping with the
kinetic factor applied exactly in Fourier space.
"""
from __future__ import annotations

import csv
import functools
import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DescriptorError, StateError

BOUNDARY_DENSITY_WARN = 1e-6
NORM_TOL = 1e-9


def _as_tuple(value, n: int, name: str) -> tuple:
    if np.isscalar(value):
        return (float(value),) * n
    out = tuple(float(v) for v in value)
    if len(out) != n:
        raise DescriptorError(f"{name}: expected {n} values, got {len(out)}")
    return out


@dataclass(frozen=True)
class GridSpec:
    dims: int
    points_per_dim: int
    box_length: float
    dt: float = 1e-3
    masses: tuple = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        n = self.points_per_dim
        if self.dims not in (1, 2):
            raise StateError(f"dims must be 1 or 2, got {self.dims}")
        if n < 8 or n & (n - 1):
            raise StateError(f"points_per_dim must be a power of two >= 8, got {n}")
        if not self.box_length > 0:
            raise StateError("box_length must be positive")
        if not self.dt > 0:
            raise StateError("dt must be positive")
        if len(self.masses) != self.dims or any(m <= 0 for m in self.masses):
            raise StateError(f"need {self.dims} positive masses, got {self.masses}")

    @classmethod
    def from_dict(cls, d: Mapping) -> "GridSpec":
        dims = int(d.get("dims", 1))
        masses = d.get("masses", [1.0] * dims)
        return cls(dims=dims, points_per_dim=int(d["points_per_dim"]),
                   box_length=float(d["box_length"]), dt=float(d.get("dt", 1e-3)),
                   masses=tuple(masses))

    @property
    def spacing(self) -> float:
        return self.box_length / self.points_per_dim

    @property
    def shape(self) -> tuple:
        return (self.points_per_dim,) * self.dims

    @property
    def x_min(self) -> float:
        return -0.5 * self.box_length

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dims

    def axis(self) -> np.ndarray:
        return self.x_min + self.spacing * np.arange(self.points_per_dim)

    def mesh(self) -> list[np.ndarray]:
        """Coordinate arrays broadcastable to ``shape``, one per coordinate."""
        x = self.axis()
        out = []
        for d in range(self.dims):
            s = [1] * self.dims
            s[d] = self.points_per_dim
            out.append(x.reshape(s))
        return out

    def wavenumbers(self) -> list[np.ndarray]:
        k = 2 * np.pi * np.fft.fftfreq(self.points_per_dim, d=self.spacing)
        out = []
        for d in range(self.dims):
            s = [1] * self.dims
            s[d] = self.points_per_dim
            out.append(k.reshape(s))
        return out

    def wrap(self, x):
        """Map positions into ``[x_min, x_min + L)``."""
        return self.x_min + np.mod(np.asarray(x) - self.x_min, self.box_length)

    def to_dict(self) -> dict:
        return {"dims": self.dims, "points_per_dim": self.points_per_dim,
                "box_length": self.box_length, "dt": self.dt, "masses": list(self.masses)}


_POTENTIAL_PARAMS = {
    "free": (),
    "harmonic": ("omega",),
    "barrier": ("height", "center", "width"),
    "double_well": ("a4", "a2"),
    "pairwise_harmonic": ("k",),
}


@dataclass(frozen=True)
class PotentialSpec:
    """Time-independent potential.

    ``harmonic``: ``sum_d m_d omega_d^2 x_d^2 / 2``.
    ``barrier``: Gaussian bump ``height * exp(-(x-center)^2 / (2 width^2))`` on every coordinate.
    ``double_well``: ``sum_d a4 x_d^4 - a2 x_d^2``.
    ``pairwise_harmonic``: ``k (x_1 - x_2)^2 / 2`` (two particles only).
    """

    kind: str = "free"
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in _POTENTIAL_PARAMS:
            raise DescriptorError(f"unknown potential kind {self.kind!r}")
        params = dict(self.params)
        missing = set(_POTENTIAL_PARAMS[self.kind]) - set(params)
        if missing:
            raise DescriptorError(f"potential {self.kind!r} missing {sorted(missing)}")
        if self.kind == "barrier" and not float(params["width"]) > 0:
            raise DescriptorError("barrier width must be positive")
        frozen = []
        for key in sorted(params):
            v = params[key]
            frozen.append((key, tuple(float(x) for x in v) if not np.isscalar(v) else float(v)))
        object.__setattr__(self, "params", tuple(frozen))

    @classmethod
    def make(cls, kind: str = "free", **params) -> "PotentialSpec":
        return cls(kind, tuple(params.items()))

    @classmethod
    def from_dict(cls, d: Mapping) -> "PotentialSpec":
        d = dict(d)
        kind = d.pop("kind", "free")
        return cls(kind, tuple(d.items()))

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for k, v in self.params:
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    def values(self, grid: GridSpec) -> np.ndarray:
        p = dict(self.params)
        xs = grid.mesh()
        V = np.zeros(grid.shape)
        if self.kind == "harmonic":
            omega = _as_tuple(p["omega"], grid.dims, "omega")
            for x, w, m in zip(xs, omega, grid.masses):
                V = V + 0.5 * m * w * w * x * x
        elif self.kind == "barrier":
            for x in xs:
                V = V + p["height"] * np.exp(-((x - p["center"]) ** 2) / (2 * p["width"] ** 2))
        elif self.kind == "double_well":
            for x in xs:
                V = V + p["a4"] * x ** 4 - p["a2"] * x ** 2
        elif self.kind == "pairwise_harmonic":
            if grid.dims != 2:
                raise DescriptorError("pairwise_harmonic needs two particles")
            V = V + 0.5 * p["k"] * (xs[0] - xs[1]) ** 2
        return V


@dataclass(frozen=True, eq=False)
class Wavefunction:
    grid: GridSpec
    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != self.grid.shape:
            raise StateError(f"amplitudes shape {amps.shape} != grid shape {self.grid.shape}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.cell_volume)


def _check_boundary(grid: GridSpec, rho: np.ndarray) -> None:
    edge = 0.0
    for d in range(grid.dims):
        edge = max(edge, float(np.take(rho, [0, -1], axis=d).max()))
    if edge > BOUNDARY_DENSITY_WARN:
        warnings.warn(f"density at the periodic boundary is {edge:.3g}; keep support "
                      "5+ widths from the box edge", RuntimeWarning, stacklevel=3)


def _normalize(grid: GridSpec, amps: np.ndarray) -> np.ndarray:
    n2 = np.sum(np.abs(amps) ** 2) * grid.cell_volume
    if not n2 > 0:
        raise StateError("initial state has zero norm on this grid")
    return amps / np.sqrt(n2)


def _packet_1d(x, center, width, momentum):
    # amplitude width: |psi|^2 ~ exp(-(x-c)^2 / width^2), density std = width / sqrt(2)
    return np.exp(-((x - center) ** 2) / (2 * width * width) + 1j * momentum * x)


def _packet(grid: GridSpec, desc: Mapping) -> np.ndarray:
    centers = _as_tuple(desc.get("center", 0.0), grid.dims, "center")
    widths = _as_tuple(desc.get("width", 1.0), grid.dims, "width")
    moms = _as_tuple(desc.get("momentum", 0.0), grid.dims, "momentum")
    for w in widths:
        if not w > 0:
            raise StateError(f"packet width must be positive, got {w}")
        if w < 2 * grid.spacing:
            raise StateError(f"packet width {w} is below two grid spacings "
                             f"({2 * grid.spacing:.4g}); refine the grid")
    amps = np.ones(grid.shape, dtype=complex)
    for x, c, w, k in zip(grid.mesh(), centers, widths, moms):
        amps = amps * _packet_1d(x, c, w, k)
    # each factor normalized analytically so superposition coefficients are meaningful
    return amps * np.prod([(np.pi * w * w) ** -0.25 for w in widths])



@functools.lru_cache(maxsize=16)
def _stepper_ground(n: int, box_length: float, dt: float, mass: float, omega: float) -> np.ndarray:
    """Ground state of one split step for ``V = m omega^2 x^2 / 2`` on one coordinate.

    The continuum Gaussian ``exp(-m omega x^2 / 2)`` is only stationary up to
    the O(dt^2) splitting error, which shows up as a slow drift of Bohmian
    trajectories.  The eigenvector of the discrete one-step operator closest to
    it is exactly stationary under :func:`step`.  The operator is complex
    symmetric and unitary, so the eigenvector is real up to a global phase.
    """
    grid = GridSpec(1, n, box_length, dt, masses=(mass,))
    x = grid.axis()
    gauss = np.exp(-0.5 * mass * omega * x * x)
    prop = Propagator(grid, PotentialSpec.make("harmonic", omega=omega))
    U = prop.advance(np.eye(n, dtype=complex))  # rows are U applied to unit vectors
    _, vecs = np.linalg.eig(U.T)
    v = vecs[:, np.argmax(np.abs(vecs.conj().T @ gauss))]
    v = v * np.exp(-1j * np.angle(v[np.argmax(np.abs(v))]))
    v = v.real
    return v * (np.sum(gauss * gauss) / np.sum(v * v)) ** 0.5 * np.sign(v[n // 2])

def init_state(grid: GridSpec, shape: Mapping) -> Wavefunction:
    """Build a unit-norm state at ``time = 0`` from a descriptor.

    Descriptor ``type`` is one of ``gaussian_packet`` (``center``, ``width``,
    ``momentum``; ``psi ~ exp(-(x-center)^2 / (2 width^2) + i momentum x)``,
    so the density has standard deviation ``width / sqrt(2)``),
    ``plane_wave`` (``k``), ``harmonic_ground`` (``omega``) or
    ``superposition`` (``packets``: up to four gaussian packets, each with an
    optional ``coefficient`` given as a real number or ``[re, im]``).
    Scalars are broadcast over coordinates.
    """
    kind = shape.get("type")
    if kind == "gaussian_packet":
        amps = _packet(grid, shape)
    elif kind == "plane_wave":
        ks = _as_tuple(shape.get("k", 0.0), grid.dims, "k")
        amps = np.ones(grid.shape, dtype=complex)
        for x, k in zip(grid.mesh(), ks):
            modes = k * grid.box_length / (2 * np.pi)
            if abs(modes - round(modes)) > 1e-9:
                warnings.warn(f"k={k} is not a Fourier mode of the periodic box; the "
                              "plane wave is discontinuous at the boundary", RuntimeWarning,
                              stacklevel=2)
            amps = amps * np.exp(1j * k * x)
    elif kind == "harmonic_ground":
        omegas = _as_tuple(shape.get("omega", 1.0), grid.dims, "omega")
        amps = np.ones(grid.shape, dtype=complex)
        for d, (w, m) in enumerate(zip(omegas, grid.masses)):
            if not w > 0:
                raise StateError("omega must be positive")
            width = (m * w) ** -0.5
            if width < 2 * grid.spacing:
                raise StateError(f"ground-state width {width:.4g} is below two grid spacings")
            amps = amps * _stepper_ground(grid.points_per_dim, grid.box_length, grid.dt, m, w)[
                tuple(slice(None) if i == d else None for i in range(grid.dims))]
    elif kind == "superposition":
        packets = list(shape.get("packets", []))
        if not 1 <= len(packets) <= 4:
            raise StateError("superposition takes 1 to 4 packets")
        amps = np.zeros(grid.shape, dtype=complex)
        for p in packets:
            c = p.get("coefficient", 1.0)
            c = complex(*c) if not np.isscalar(c) else complex(c)
            amps = amps + c * _packet(grid, p)
    else:
        raise StateError(f"unknown initial-state type {kind!r}")
    amps = _normalize(grid, amps)
    if kind != "plane_wave":
        _check_boundary(grid, np.abs(amps) ** 2)
    return Wavefunction(grid, amps, 0.0)


class Propagator:
    """Strang split-step propagator for a fixed (grid, potential, dt).

    ``advance`` works on arrays whose trailing axes are the grid shape, so a
    batch of independent states can be stepped together; every row sees the
    same floating-point operations as when stepped alone.
    """

    def __init__(self, grid: GridSpec, potential: PotentialSpec, dt: float | None = None):
        self.grid = grid
        self.potential = potential
        self.dt = grid.dt if dt is None else float(dt)
        V = potential.values(grid)
        kin = np.zeros(grid.shape)
        for k, m in zip(grid.wavenumbers(), grid.masses):
            kin = kin + k * k / (2 * m)
        self.V = V
        self.kinetic = kin
        self.half_potential = np.exp(-0.5j * self.dt * V)
        self.full_kinetic = np.exp(-1j * self.dt * kin)
        self.axes = tuple(range(-grid.dims, 0))

    @property
    def is_free(self) -> bool:
        return not np.any(self.V)

    def advance(self, amps: np.ndarray, n_steps: int = 1) -> np.ndarray:
        out = np.asarray(amps, dtype=complex)
        if self.is_free:
            # kinetic factor is exact; n steps collapse to one phase multiplication
            phase = self.full_kinetic if n_steps == 1 else np.exp(-1j * (self.dt * n_steps) * self.kinetic)
            return np.fft.ifftn(np.fft.fftn(out, axes=self.axes) * phase, axes=self.axes)
        for _ in range(int(n_steps)):
            out = out * self.half_potential
            out = np.fft.ifftn(np.fft.fftn(out, axes=self.axes) * self.full_kinetic, axes=self.axes)
            out = out * self.half_potential
        return out


@functools.lru_cache(maxsize=32)
def propagator(grid: GridSpec, potential: PotentialSpec, dt: float | None = None) -> Propagator:
    return Propagator(grid, potential, dt)


def step(psi: Wavefunction, potential: PotentialSpec, n_steps: int = 1,
         dt: float | None = None) -> Wavefunction:
    """Advance ``psi`` by ``n_steps`` steps of size ``dt`` (default ``grid.dt``).

    A negative ``dt`` runs the evolution backwards in time.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    prop = propagator(psi.grid, potential, dt)
    amps = prop.advance(psi.amplitudes, n_steps)
    _check_boundary(psi.grid, np.abs(amps) ** 2)
    return Wavefunction(psi.grid, amps, psi.time + n_steps * prop.dt)


def density(psi: Wavefunction) -> np.ndarray:
    return np.abs(psi.amplitudes) ** 2


def marginal_density(psi: Wavefunction, coordinate: int) -> np.ndarray:
    """Density of one configuration coordinate, the others integrated out."""
    dims = psi.grid.dims
    if not 0 <= coordinate < dims:
        raise IndexError(f"coordinate {coordinate} out of range for dims={dims}")
    rho = density(psi)
    others = tuple(d for d in range(dims) if d != coordinate)
    if not others:
        return rho
    return rho.sum(axis=others) * psi.grid.spacing ** len(others)


def integrate(grid: GridSpec, values: np.ndarray) -> float:
    """Trapezoidal quadrature over the periodic grid (rectangle rule coincides)."""
    return float(np.sum(values) * grid.spacing ** np.ndim(values))


def energy(psi: Wavefunction, potential: PotentialSpec) -> float:
    """Expectation value of the Hamiltonian."""
    grid = psi.grid
    prop = propagator(grid, potential)
    axes = tuple(range(grid.dims))
    phi = np.fft.fftn(psi.amplitudes, axes=axes)
    # Parseval: sum |psi|^2 = sum |phi|^2 / N
    kinetic = np.sum(prop.kinetic * np.abs(phi) ** 2) / phi.size
    pot = np.sum(prop.V * np.abs(psi.amplitudes) ** 2)
    return float((kinetic + pot) * grid.cell_volume)


def gradient(grid: GridSpec, amps: np.ndarray, coordinate: int) -> np.ndarray:
    """Spectral derivative along one coordinate (Nyquist mode dropped).

    Real and imaginary parts are differentiated separately with real FFTs, so
    a real input gives a real derivative with no round-off imaginary part.
    """
    n = grid.points_per_dim
    k = 2 * np.pi * np.fft.rfftfreq(n, d=grid.spacing)
    if n % 2 == 0:
        k[-1] = 0.0
    shape = [1] * grid.dims
    shape[coordinate] = k.size
    axis = coordinate - grid.dims
    ik = 1j * k.reshape(shape)

    def real_derivative(a):
        return np.fft.irfft(ik * np.fft.rfft(a, axis=axis), n=n, axis=axis)

    amps = np.asarray(amps)
    if not np.iscomplexobj(amps):
        return real_derivative(amps)
    return real_derivative(amps.real) + 1j * real_derivative(amps.imag)


def write_state_csv(psi: Wavefunction, path) -> None:
    """Snapshot export: one row per grid point, columns ``i_1..i_N, re, im``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"i_{d + 1}" for d in range(psi.grid.dims)] + ["re", "im"])
        for idx in np.ndindex(*psi.grid.shape):
            a = psi.amplitudes[idx]
            w.writerow(list(idx) + [repr(float(a.real)), repr(float(a.imag))])
