"""Beable-guided quantum theory simulations.

Quantum states on a periodic grid (:mod:`bgqt.quantum`), two beable samplers
(Bohmian trajectories in :mod:`bgqt.bohm`, GRW flashes in :mod:`bgqt.grw`), a
weight-expression language (:mod:`bgqt.weightlang`), self-normalized
importance reweighting (:mod:`bgqt.reweight`) and a Markov-chain cosmology
toy (:mod:`bgqt.cosmo`).
"""
__version__ = "0.1.0"

from .beables import BeableConfiguration, CosmoSequence, FlashRecord, Trajectory
from .bohm import (BohmConfig, InitialDistribution, integrate_trajectory, run_bohm_ensemble,
                   sample_initial, velocity_field)
from .cosmo import BaselineChain, ConstraintSpec, constrain, exact_posterior, sample_sequences
from .errors import (BGQTError, CollapseError, ConfigError, DegenerateMeasureError,
                     DescriptorError, StateError)
from .grw import CollapseParams, GRWConfig, apply_collapse, run_grw_ensemble, sample_flash_times
from .quantum import (GridSpec, PotentialSpec, Wavefunction, density, init_state,
                      marginal_density, step)
from .reweight import ObservableSpec, WeightSpec, compare, estimate
from .weightlang import builtin_weight, evaluate, parse, typecheck

__all__ = [
    "__version__", "BeableConfiguration", "CosmoSequence", "FlashRecord", "Trajectory",
    "BohmConfig", "InitialDistribution", "integrate_trajectory", "run_bohm_ensemble",
    "sample_initial", "velocity_field", "BaselineChain", "ConstraintSpec", "constrain",
    "exact_posterior", "sample_sequences", "BGQTError", "CollapseError", "ConfigError",
    "DegenerateMeasureError", "DescriptorError", "StateError", "CollapseParams", "GRWConfig",
    "apply_collapse", "run_grw_ensemble", "sample_flash_times", "GridSpec", "PotentialSpec",
    "Wavefunction", "density", "init_state", "marginal_density", "step", "ObservableSpec",
    "WeightSpec", "compare", "estimate", "builtin_weight", "evaluate", "parse", "typecheck",
]
