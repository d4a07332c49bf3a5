"""Single-trunk ablation: design and control heads on one shared network.

Both phases read the phase-flagged value-style input, pass through one
shared stack of hidden layers, and branch only at the last affine layer.
The trunk arrays are literally the same objects in the designer and the
controller, so gradient accumulation and deduplicated optimizer stepping
fall out of the ordinary update path. The trunk is widened until the
trainable parameter count at least matches the separate-network method,
which keeps the comparison fair.
"""

from __future__ import annotations

import numpy as np

from toolsmith.envs import default_config, make_env
from toolsmith.neural import (
    HIDDEN,
    GaussianHead,
    Network,
    PolicyParams,
    init_network,
    param_count,
    params_from_state,
    load_checkpoint,
)
from toolsmith.ppo import TASK_POLICY, TrainConfig, policy_for_env, train


def shared_features(env):
    """Both phases consume the phase-flagged input of the value network."""
    return env.value_input, env.value_input


def separate_param_count(env) -> int:
    """Trainable scalar count of the standard two-network method."""
    return param_count(policy_for_env(env, np.random.default_rng(0)))


def shared_policy(env, rng: np.random.Generator, hidden=None,
                  **overrides) -> PolicyParams:
    """Build the tied-trunk bundle, widening until the size bar is met."""
    kw = dict(TASK_POLICY[env.task_name])
    kw.update(overrides)
    floor = separate_param_count(env)
    widths = tuple(hidden) if hidden is not None else HIDDEN

    while True:
        candidate = _build(env, np.random.default_rng(0), widths, kw)
        if param_count(candidate) >= floor:
            break
        widths = tuple(w + 16 for w in widths)
    built = _build(env, rng, widths, kw)
    assert param_count(built) >= floor, \
        f"shared architecture {param_count(built)} params < separate {floor}"
    return built


def _build(env, rng, widths, kw) -> PolicyParams:
    d_out = env.design_action_dim
    c_out = env.control_action_dim
    v_in = env.value_input_dim
    trunk_and_design = init_network((v_in, *widths, d_out), rng,
                                    output_gain=0.01)
    control_head = init_network((widths[-1], c_out), rng, output_gain=0.01)
    controller = Network(
        sizes=(v_in, *widths, c_out),
        weights=trunk_and_design.weights[:-1] + control_head.weights,
        biases=trunk_and_design.biases[:-1] + control_head.biases,
    )
    return PolicyParams(
        designer=trunk_and_design,
        designer_head=GaussianHead(np.full(d_out, float(kw["design_log_std"])),
                                   kw["fix_std"]),
        controller=controller,
        controller_head=GaussianHead(np.full(c_out, float(kw["control_log_std"])),
                                     kw["fix_std"]),
        value=init_network((v_in, *widths, 1), rng, output_gain=1.0),
    )


def retie_trunk(params: PolicyParams) -> PolicyParams:
    """Point the controller's hidden layers back at the designer's arrays.

    Checkpoints store each network separately, so loading one duplicates
    the trunk; call this after decoding to restore the weight sharing.
    """
    n_trunk = len(params.designer.weights) - 1
    for i in range(n_trunk):
        if not np.array_equal(params.controller.weights[i],
                              params.designer.weights[i]):
            raise ValueError("checkpoint trunks diverged; not a tied bundle")
        params.controller.weights[i] = params.designer.weights[i]
        params.controller.biases[i] = params.designer.biases[i]
    return params


def load_shared_params(checkpoint_path) -> PolicyParams:
    state = load_checkpoint(checkpoint_path)
    return retie_trunk(params_from_state(state["params"]))


def shared_arch(task: str, cfg: TrainConfig, total_steps: int, out_dir,
                seed: int = 0, task_cfg=None, n_envs: int = 16,
                **train_kw) -> dict:
    """Train the tied-trunk variant with the standard update machinery."""
    task_cfg = task_cfg or default_config(task)
    env = make_env(task_cfg)
    params = shared_policy(env, np.random.default_rng(seed))
    out = train(task, cfg, total_steps, out_dir, seed=seed, task_cfg=task_cfg,
                n_envs=n_envs, params=params, features=shared_features,
                **train_kw)
    out["param_count"] = param_count(params)
    out["separate_param_count"] = separate_param_count(env)
    return out
