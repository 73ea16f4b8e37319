"""CTMC model checking of network-key update policies.

Typical use::

    from zigcheck import assemble, scenario, StrategyConfig, q1_confidentiality

    ctmc = assemble(scenario("ha"), StrategyConfig("time", 12))
    q1_confidentiality(ctmc, 12)      # probability the key is compromised after a year
"""
from .advisor import Advice, Candidate, Requirement, advise, max_network_size
from .gcm import Command, CompositeModel, Ctmc, ModuleSpec, RewardStruct, StateVar, compose, explore
from .kernels import BACKEND
from .oracle import SimEstimate, estimate, simulate_path
from .queries import (
    QueryResult,
    q1_confidentiality,
    q1_curve,
    q2_longrun,
    q3_curve,
    q3_recovery,
    q4_efficiency,
)
from .solver import (
    SolverSettings,
    poisson_weights,
    steady_state,
    transient_backward,
    transient_forward,
    unbounded_until,
    uniformize,
)
from .sweep import SweepPlan, run_sweep
from .zigbee import ScenarioParams, StrategyConfig, ThresholdGrid, assemble, scenario, threshold_grid

__version__ = "0.1.0"

__all__ = [
    "Advice", "Candidate", "Requirement", "advise", "max_network_size",
    "Command", "CompositeModel", "Ctmc", "ModuleSpec", "RewardStruct", "StateVar", "compose", "explore",
    "BACKEND",
    "SimEstimate", "estimate", "simulate_path",
    "QueryResult", "q1_confidentiality", "q1_curve", "q2_longrun", "q3_curve", "q3_recovery", "q4_efficiency",
    "SolverSettings", "poisson_weights", "steady_state", "transient_backward", "transient_forward",
    "unbounded_until", "uniformize",
    "SweepPlan", "run_sweep",
    "ScenarioParams", "StrategyConfig", "ThresholdGrid", "assemble", "scenario", "threshold_grid",
]
