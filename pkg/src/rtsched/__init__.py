"""Relax-then-truncate status-update scheduling toolkit.

Plans command policies for fleets of energy-harvesting sensors whose
battery levels are only partially known at the edge, evaluates them
exactly, and simulates them at slot level against greedy and
exact-knowledge benchmarks.
"""

from .belief import BeliefAtlas, BeliefIndex, build_atlas
from .harness import (ExperimentConfig, EpisodeMetrics, run_episode,
                      run_experiment, sweep, verify_concentration)
from .model import SensorParams
from .planner import (ArtifactCache, PlannerConfig, RelaxedPolicyBundle,
                      lower_bound, plan)
from .solver import PerSensorPolicy, evaluate_policy, rvia_solve

__all__ = [
    "ArtifactCache", "BeliefAtlas", "BeliefIndex", "EpisodeMetrics",
    "ExperimentConfig", "PerSensorPolicy", "PlannerConfig",
    "RelaxedPolicyBundle", "SensorParams", "build_atlas", "evaluate_policy",
    "lower_bound", "plan", "run_episode", "run_experiment", "rvia_solve",
    "sweep", "verify_concentration",
]
