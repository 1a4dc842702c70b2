"""Deterministic self-checks run by ``bgqt validate``.

Each check runs a small fixed-seed experiment against an independent
reference (a closed-form solution, a Poisson moment, exhaustive path
enumeration) and reports the measured value next to its threshold.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import bohm, cosmo, grw, quantum
from .reweight import estimate_arrays
from .seeding import derive_seed


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}  {self.name:<20} {self.detail}: {self.value:.3g} "
                f"(threshold {self.threshold:.3g}, {self.seconds:.2f} s)")


def _gaussian_density(x, center, width, t, mass=1.0):
    # amplitude width s(t) = s0 sqrt(1 + (t / (m s0^2))^2); density exp(-x^2/s^2)/(sqrt(pi) s)
    s = width * math.sqrt(1 + (t / (mass * width ** 2)) ** 2)
    return np.exp(-(x - center) ** 2 / (s * s)) / (math.sqrt(math.pi) * s)


def check_unitarity():
    grid1 = quantum.GridSpec(1, 256, 20.0, 1e-3)
    grid2 = quantum.GridSpec(2, 256, 20.0, 1e-3, masses=(1.0, 1.0))
    packet = {"type": "gaussian_packet", "center": 0.5, "width": 1.0, "momentum": 1.0}
    cases = [
        (grid1, quantum.PotentialSpec.make("free")),
        (grid1, quantum.PotentialSpec.make("harmonic", omega=1.0)),
        (grid1, quantum.PotentialSpec.make("barrier", height=5.0, center=1.0, width=0.5)),
        (grid1, quantum.PotentialSpec.make("double_well", a4=0.05, a2=0.5)),
        (grid2, quantum.PotentialSpec.make("pairwise_harmonic", k=1.0)),
    ]
    worst = 0.0
    for grid, pot in cases:
        psi = quantum.step(quantum.init_state(grid, packet), pot, 1000)
        worst = max(worst, abs(psi.norm2() - 1.0))
    return worst, 1e-8, "max |norm^2 - 1| over 5 potentials, 1000 steps"


def check_free_gaussian():
    grid = quantum.GridSpec(1, 256, 20.0, 1e-3)
    psi = quantum.step(quantum.init_state(grid, {"type": "gaussian_packet", "center": 0.0,
                                                 "width": 1.0, "momentum": 0.0}),
                       quantum.PotentialSpec.make("free"), 1000)
    err = float(np.max(np.abs(quantum.density(psi) - _gaussian_density(grid.axis(), 0.0, 1.0, 1.0))))
    return err, 1e-6, "max density error vs closed form at t=1"


def _free_bohm_config():
    grid = quantum.GridSpec(1, 256, 20.0, 1e-3)
    return bohm.BohmConfig(grid, quantum.PotentialSpec.make("free"),
                           {"type": "gaussian_packet", "center": 0.0, "width": 1.0, "momentum": 0.0},
                           horizon=1.0, record_stride=100)


def check_equivariance():
    cfg = _free_bohm_config()
    ens = bohm.run_bohm_ensemble(cfg, 10_000, master_seed=20240601)
    final = np.array([c.trajectory.positions[-1] for c in ens])
    psi1 = quantum.step(cfg.psi0(), cfg.potential, 1000)
    return bohm.tv_distance(psi1, final), 0.05, "TV distance at t=1, M=1e4, 64 bins"


def check_bohm_trajectory():
    cfg = _free_bohm_config()
    x0 = np.array([[0.5], [1.0], [2.0]])
    batch = bohm.integrate_trajectories(cfg.psi0(), cfg.potential, x0, 1.0, 100)
    exact = x0[:, 0] * math.sqrt(2.0)  # s(1)/s(0) for s0 = 1
    return float(np.max(np.abs(batch.positions[-1, :, 0] - exact))), 1e-3, \
        "max |x(1) - x0 s(1)/s(0)|"


def check_poisson():
    params = grw.CollapseParams(rate=1.0, sigma=1.0)
    runs, n, horizon = 1000, 2, 5.0
    counts = [len(grw.sample_flash_times(params, n, horizon, derive_seed(7, k))) for k in range(runs)]
    mean = n * params.rate * horizon
    z = abs(np.mean(counts) - mean) / math.sqrt(mean / runs)
    return float(z), 3.0, "|mean count - N lambda T| / sigma over 1e3 runs"


def check_collapse_variance():
    grid = quantum.GridSpec(1, 512, 40.0, 1e-3)
    width, sigma = 0.3, 1.0
    psi = quantum.init_state(grid, {"type": "gaussian_packet", "center": 0.0, "width": width})
    params = grw.CollapseParams(rate=1.0, sigma=sigma)
    rng = np.random.default_rng(11)
    xs = np.array([grw.apply_collapse(psi, 1, params, rng)[1] for _ in range(10_000)])
    predicted = sigma ** 2 + width ** 2 / 2  # packet density variance is width^2 / 2
    return abs(xs.var() / predicted - 1), 0.05, "relative error of collapse-centre variance"


def check_completeness():
    grid = quantum.GridSpec(1, 128, 20.0, 1e-3)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        amps = rng.normal(size=128) + 1j * rng.normal(size=128)
        psi = quantum.Wavefunction(grid, amps / math.sqrt(np.sum(np.abs(amps) ** 2) * grid.spacing))
        p = grw.collapse_center_density(psi, 1, float(rng.uniform(0.4, 3.0)))
        worst = max(worst, abs(quantum.integrate(grid, p) - 1))
    return worst, 1e-9, "max |int p(x) dx - 1| over 100 random states"


def _markov_toy():
    rng = np.random.default_rng(2024)
    chain = cosmo.random_chain(5, rng)
    tables = rng.uniform(0.2, 1.5, size=(4, 5))
    return chain, tables


def _enumerate_mean(chain, tables, step):
    num = den = 0.0
    for path in itertools.product(range(chain.n_levels), repeat=tables.shape[0]):
        p = chain.initial[path[0]]
        for i in range(1, len(path)):
            p *= chain.step_matrix(i - 1)[path[i - 1], path[i]]
        w = p * np.prod([tables[i, l] for i, l in enumerate(path)])
        num += w * path[step]
        den += w
    return num / den


def check_is_oracle():
    chain, tables = _markov_toy()
    exact = _enumerate_mean(chain, tables, 3)
    levels = cosmo.sample_levels(chain, 4, 100_000, master_seed=99)
    log_w = np.log(tables)[np.arange(4)[None, :], levels].sum(axis=1)
    e = estimate_arrays(log_w, {"level4": levels[:, 3].astype(float)}).estimates[0]
    return abs(e.estimate - exact) / e.std_error, 3.0, "|IS - enumeration| / SE, M=1e5"


def check_forward_backward():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(5):
        chain = cosmo.random_chain(3, rng)
        d = chain.deltas
        spec = cosmo.ConstraintSpec.hard([None, (d[0] * 0.9, d[1] * 1.1), None])
        post = cosmo.exact_posterior(chain, spec).marginals
        f = spec.step_factors(d)
        brute = np.zeros((3, 3))
        for path in itertools.product(range(3), repeat=3):
            p = chain.initial[path[0]] * f[0, path[0]]
            for i in (1, 2):
                p *= chain.step_matrix(i - 1)[path[i - 1], path[i]] * f[i, path[i]]
            for i, l in enumerate(path):
                brute[i, l] += p
        brute /= brute.sum(axis=1, keepdims=True)
        worst = max(worst, float(np.max(np.abs(post - brute))))
    return worst, 1e-10, "max |forward-backward - enumeration|, L=3, n=3"


CHECKS: dict[str, Callable] = {
    "unitarity": check_unitarity,
    "free_gaussian": check_free_gaussian,
    "equivariance": check_equivariance,
    "bohm_trajectory": check_bohm_trajectory,
    "poisson": check_poisson,
    "collapse_variance": check_collapse_variance,
    "completeness": check_completeness,
    "is_oracle": check_is_oracle,
    "forward_backward": check_forward_backward,
}


def run_checks(name_filter: str | None = None) -> list[CheckResult]:
    """Run every check whose name contains ``name_filter`` (all if None)."""
    out = []
    for name, fn in CHECKS.items():
        if name_filter and name_filter not in name:
            continue
        t0 = time.perf_counter()
        value, threshold, detail = fn()
        out.append(CheckResult(name, bool(value < threshold), float(value), threshold, detail,
                               time.perf_counter() - t0))
    return out
