"""Shared fixed-goal evaluation used by all methods for comparable curves.

Every method is scored the same way: deterministic rollouts on a fixed list
of goals with fixed reset seeds, so curves over env steps are directly
comparable and rerunning a command reproduces identical numbers.
"""

from __future__ import annotations

import numpy as np

from toolsmith.ppo import default_features, run_episode

EVAL_GOAL_SEED = 20000
EVAL_RESET_SEED = 30000


def evaluation_goals(env, n: int = 16) -> list:
    """Fixed goal set: goal k is drawn from its own seeded generator."""
    return [env.sample_goal(np.random.default_rng(EVAL_GOAL_SEED + k))
            for k in range(n)]


def evaluate_policy(env, params, goals, fixed_design=None,
                    features=default_features) -> dict:
    """Deterministic episodes on each goal; returns aggregate statistics."""
    episodes = []
    for k, goal in enumerate(goals):
        episodes.append(run_episode(env, params, goal=goal,
                                    seed=EVAL_RESET_SEED + k,
                                    fixed_design=fixed_design,
                                    features=features))
    returns = np.array([e["return"] for e in episodes])
    return {
        "mean_return": float(returns.mean()),
        "returns": [float(r) for r in returns],
        "success_rate": float(np.mean([e["success"] for e in episodes])),
        "mean_d_used": float(np.mean([e["d_used"] for e in episodes])),
        "env_steps": int(sum(1 + e["steps"] for e in episodes)),
        "episodes": episodes,
    }


def run_plan(env, design_action, controls, goal, seed) -> dict:
    """Execute an open-loop plan: one design step, then scripted controls."""
    env.reset(goal=goal, seed=seed)
    res = env.step_design(np.asarray(design_action, dtype=np.float64))
    total = res.reward
    c_used = []
    t = 0
    while not env.done:
        res = env.step_control(controls[t])
        total += res.reward
        c_used.append(res.info["c_used"])
        t += 1
    return {
        "return": float(total),
        "success": float(res.info["success"]),
        "steps": t,
        "d_used": float(res.info["d_used"]),
        "mean_c_used": float(np.mean(c_used)) if c_used else 0.0,
    }


def evaluate_plan(env, design_action, controls, goals) -> dict:
    """Mean statistics of one plan over the fixed goal set."""
    episodes = [run_plan(env, design_action, controls, goal,
                         EVAL_RESET_SEED + k)
                for k, goal in enumerate(goals)]
    return {
        "mean_return": float(np.mean([e["return"] for e in episodes])),
        "success_rate": float(np.mean([e["success"] for e in episodes])),
        "mean_d_used": float(np.mean([e["d_used"] for e in episodes])),
        "mean_c_used": float(np.mean([e["mean_c_used"] for e in episodes])),
        "env_steps": int(sum(1 + e["steps"] for e in episodes)),
    }
