"""Beable configuration records and their CSV exports."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded particle positions; ``positions[k, i]`` is particle ``i+1`` at ``times[k]``."""

    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.positions, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] != t.shape[0]:
            raise ValueError("times and positions disagree in length")
        if t.shape[0] > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite trajectory position")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", x)

    @property
    def particle_count(self) -> int:
        return self.positions.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (np.array_equal(self.times, other.times)
                and np.array_equal(self.positions, other.positions))


@dataclass(frozen=True)
class FlashRecord:
    """A collapse event for particle ``particle`` (1-based) centred at ``x`` at time ``t``."""

    x: float
    particle: int
    t: float


@dataclass(frozen=True, eq=False)
class CosmoSequence:
    volumes: np.ndarray
    deltas: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.volumes, dtype=float)
        d = np.asarray(self.deltas, dtype=float)
        if v.shape != d.shape:
            raise ValueError("volumes and deltas disagree in length")
        if np.any(v <= 0) or np.any(np.diff(v) <= 0):
            raise ValueError("volumes must be positive and strictly increasing")
        if np.any(d <= 0):
            raise ValueError("deltas must be positive")
        object.__setattr__(self, "volumes", v)
        object.__setattr__(self, "deltas", d)
        object.__setattr__(self, "levels", np.asarray(self.levels, dtype=int))

    @property
    def n(self) -> int:
        return len(self.deltas)

    def __eq__(self, other):
        if not isinstance(other, CosmoSequence):
            return NotImplemented
        return (np.array_equal(self.volumes, other.volumes)
                and np.array_equal(self.deltas, other.deltas)
                and np.array_equal(self.levels, other.levels))


KINDS = ("bohm", "grw", "cosmo")


@dataclass(eq=False)
class BeableConfiguration:
    """One sampled beable configuration.

    Exactly one of ``trajectory`` (kind ``bohm``), ``flashes`` (kind ``grw``)
    or ``sequence`` (kind ``cosmo``) is populated.  ``index`` is the member
    index inside its ensemble; ``seed`` regenerates it together with the
    model parameters.
    """

    kind: str
    seed: int
    horizon: float
    index: int = 0
    trajectory: Trajectory | None = None
    flashes: tuple = ()
    sequence: CosmoSequence | None = None
    particle_count: int = 0
    diagnostics: dict = field(default_factory=dict)
    final_state: Any = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown beable kind {self.kind!r}")
        present = {"bohm": self.trajectory is not None, "grw": bool(self.flashes),
                   "cosmo": self.sequence is not None}
        others = [k for k, v in present.items() if v and k != self.kind]
        if others:
            raise ValueError(f"{self.kind} configuration also holds {others} payload")
        if self.kind != "grw" and not present[self.kind]:
            raise ValueError(f"{self.kind} configuration has no payload")
        self.flashes = tuple(self.flashes)
        if self.kind == "bohm" and not self.particle_count:
            self.particle_count = self.trajectory.particle_count

    def flashes_of(self, particle: int) -> list[FlashRecord]:
        return [f for f in self.flashes if f.particle == particle]

    def same_beables(self, other: "BeableConfiguration") -> bool:
        """Bit-exact equality of the beable content (diagnostics ignored)."""
        return (self.kind == other.kind and self.seed == other.seed
                and self.horizon == other.horizon and self.trajectory == other.trajectory
                and self.flashes == other.flashes and self.sequence == other.sequence)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_trajectories_csv(configs: Iterable[BeableConfiguration], path) -> None:
    """Columns ``run_id, t, x_1, ..., x_N``."""
    configs = list(configs)
    n = configs[0].trajectory.particle_count if configs else 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "t"] + [f"x_{i + 1}" for i in range(n)])
        for c in configs:
            tr = c.trajectory
            for t, row in zip(tr.times, tr.positions):
                w.writerow([c.index, _fmt(t)] + [_fmt(v) for v in row])


def write_flashes_csv(configs: Iterable[BeableConfiguration], path) -> None:
    """Columns ``run_id, t, particle, x``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "t", "particle", "x"])
        for c in configs:
            for f in c.flashes:
                w.writerow([c.index, _fmt(f.t), f.particle, _fmt(f.x)])


def write_sequences_csv(configs: Iterable[BeableConfiguration], path) -> None:
    """Columns ``run_id, step, volume, level, delta``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "step", "volume", "level", "delta"])
        for c in configs:
            s = c.sequence
            for i in range(s.n):
                w.writerow([c.index, i + 1, _fmt(s.volumes[i]), int(s.levels[i]), _fmt(s.deltas[i])])
