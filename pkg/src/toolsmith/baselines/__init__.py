"""Comparison methods: evolutionary search baselines and architecture ablations."""

from toolsmith.baselines.cma import CmaState, cma_init, cma_ask, cma_tell
from toolsmith.baselines.cma_rl import cma_rl
from toolsmith.baselines.hwasp import (
    constant_designer_policy,
    frozen_design_weights,
    hwasp_minimal,
)
from toolsmith.baselines.shared import (
    load_shared_params,
    shared_arch,
    shared_features,
    shared_policy,
)
from toolsmith.baselines.single_traj import (
    FlatEpisodePlan,
    plan_dim,
    plan_from_vector,
    single_traj_cmaes,
)

__all__ = [
    "CmaState",
    "FlatEpisodePlan",
    "cma_ask",
    "cma_init",
    "cma_rl",
    "cma_tell",
    "constant_designer_policy",
    "frozen_design_weights",
    "hwasp_minimal",
    "load_shared_params",
    "plan_dim",
    "plan_from_vector",
    "shared_arch",
    "shared_features",
    "shared_policy",
    "single_traj_cmaes",
]
