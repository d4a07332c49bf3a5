"""Experiment orchestration: multi-seed training for every method, region
based evaluation, fine-tuning comparisons, the material/effort sweep, and
fabrication export.

All commands write a manifest before any long computation, derive every
random stream from the configured seeds, and emit deterministic CSV/JSON so
reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from toolsmith import __version__
from toolsmith.baselines import cma_rl, hwasp_minimal, shared_arch, single_traj_cmaes
from toolsmith.baselines.shared import retie_trunk, shared_features
from toolsmith.baselines.single_traj import plan_fitness
from toolsmith.envs import default_config, make_env
from toolsmith.envs.push import GOAL_HIGH, GOAL_LOW
from toolsmith.evaluation import EVAL_RESET_SEED, evaluate_policy, evaluation_goals
from toolsmith.geometry import build_tool, export_stl
from toolsmith.neural import forward, load_checkpoint, params_from_state
from toolsmith.ppo import (
    METRICS_HEADER,
    Optimizers,
    TrainConfig,
    collect_batch,
    default_train_config,
    policy_for_env,
    ppo_update,
    prepare_batch,
    train,
)

OUTPUT_ROOT_VAR = "TOOLSMITH_OUT"
ALLOWED_FRACTIONS = (0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 0.9)
METHODS = ("ours", "single_traj", "cma_rl", "hwasp", "shared")
DEFAULT_ALPHAS = (0.0, 0.3, 0.7, 1.0)

# Desk-scale policy adjustments applied when no explicit overrides are given.
# The catch designer explores with a smaller step so its action mean cannot
# random-walk past the design clamp bounds within a small-batch budget.
DESK_POLICY_OVERRIDES = {
    "catch": {"design_log_std": -1.2},
}

# Four push goals outside the training rectangle, two past each x edge,
# used as the default fine-tuning targets.
DEFAULT_FINETUNE_GOALS = ((13.5, 5.0), (13.5, 15.0), (2.5, 6.0), (2.5, 14.0))


def output_root() -> str:
    return os.environ.get(OUTPUT_ROOT_VAR, "runs")


# ---------------------------------------------------------------------------
# Cutout regions over the push goal rectangle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutoutSpec:
    """Axis-aligned rectangles removed from the goal region for training."""

    rectangles: tuple
    fraction: float

    def __post_init__(self):
        if self.fraction not in ALLOWED_FRACTIONS:
            raise ValueError(
                f"cutout fraction {self.fraction} not one of {ALLOWED_FRACTIONS}")
        for rect in self.rectangles:
            x0, y0, x1, y1 = rect
            if not (x0 < x1 and y0 < y1):
                raise ValueError(f"degenerate cutout rectangle {rect}")
            if x0 < GOAL_LOW[0] or y0 < GOAL_LOW[1] \
                    or x1 > GOAL_HIGH[0] or y1 > GOAL_HIGH[1]:
                raise ValueError(f"cutout rectangle {rect} leaves the goal region")


def centered_cutout(fraction: float) -> CutoutSpec:
    """One rectangle of the requested area share, centred in the goal region."""
    if fraction == 0.0:
        return CutoutSpec(rectangles=(), fraction=0.0)
    w = GOAL_HIGH[0] - GOAL_LOW[0]
    h = GOAL_HIGH[1] - GOAL_LOW[1]
    cx = (GOAL_LOW[0] + GOAL_HIGH[0]) / 2.0
    cy = (GOAL_LOW[1] + GOAL_HIGH[1]) / 2.0
    scale = fraction ** 0.5
    half_w, half_h = w * scale / 2.0, h * scale / 2.0
    return CutoutSpec(
        rectangles=((cx - half_w, cy - half_h, cx + half_w, cy + half_h),),
        fraction=fraction)


def in_cutout(spec: CutoutSpec, goal) -> bool:
    x, y = float(goal[0]), float(goal[1])
    return any(x0 <= x <= x1 and y0 <= y <= y1
               for x0, y0, x1, y1 in spec.rectangles)


def classify_goal(spec: CutoutSpec, goal) -> str:
    """Exhaustive, disjoint region label for one goal."""
    if in_cutout(spec, goal):
        return "cutout"
    x, y = float(goal[0]), float(goal[1])
    if GOAL_LOW[0] <= x <= GOAL_HIGH[0] and GOAL_LOW[1] <= y <= GOAL_HIGH[1]:
        return "training"
    return "outside"


def cutout_goal_sampler(spec: CutoutSpec):
    """Rejection sampler over the goal region with the cutout removed."""
    def sample(env, rng: np.random.Generator):
        while True:
            goal = env.sample_goal(rng)
            if not in_cutout(spec, goal):
                return goal
    return sample


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    task: str = "push"
    method: str = "ours"
    scale: str = "desk"
    total_steps: int = 200000
    seeds: tuple = (0,)
    cutout_fraction: float = 0.0
    tradeoff_k: float = 0.0
    tradeoff_alpha: float = 0.5
    n_envs: int = 16
    out_dir: str = ""
    train: TrainConfig | None = None
    policy_overrides: dict | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected {METHODS}")
        if len(self.seeds) == 0:
            raise ValueError("at least one seed is required")
        if self.cutout_fraction not in ALLOWED_FRACTIONS:
            raise ValueError(
                f"cutout fraction {self.cutout_fraction} not one of "
                f"{ALLOWED_FRACTIONS}")
        if self.train is None:
            self.train = default_train_config(self.task, scale=self.scale)
        if self.policy_overrides is None:
            self.policy_overrides = DESK_POLICY_OVERRIDES.get(self.task, {}) \
                if self.scale == "desk" else {}
        if not self.out_dir:
            self.out_dir = os.path.join(output_root(),
                                        f"{self.task}_{self.method}")


_CONFIG_KEYS = {f.name for f in fields(ExperimentConfig)}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from plain keys, rejecting anything unrecognized."""
    data = dict(data)
    train_overrides = {}
    for key in list(data):
        if key in _TRAIN_KEYS:
            train_overrides[key] = data.pop(key)
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "seeds" in data:
        data["seeds"] = tuple(int(s) for s in data["seeds"])
    cfg = ExperimentConfig(**data)
    if train_overrides:
        cfg.train = default_train_config(cfg.task, scale=cfg.scale,
                                         **train_overrides)
    return cfg


def write_manifest(out_dir, command: str, payload: dict) -> str:
    """Record what is about to run; no clocks, so reruns match bytewise."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "manifest.json")
    body = {"command": command, "code_version": __version__}
    body.update(payload)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=1, sort_keys=True, default=_jsonable)
        fh.write("\n")
    return path


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, TrainConfig):
        return asdict(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _run_one_seed(config: ExperimentConfig, seed: int, out_dir) -> dict:
    task_cfg = default_config(config.task,
                              tradeoff_k=config.tradeoff_k,
                              tradeoff_alpha=config.tradeoff_alpha)
    sampler = None
    if config.cutout_fraction > 0.0:
        sampler = cutout_goal_sampler(centered_cutout(config.cutout_fraction))
    if config.method == "ours":
        return train(config.task, config.train, config.total_steps, out_dir,
                     seed=seed, task_cfg=task_cfg, n_envs=config.n_envs,
                     goal_sampler=sampler,
                     policy_overrides=config.policy_overrides)
    if config.method == "hwasp":
        return hwasp_minimal(config.task, config.train, config.total_steps,
                             out_dir, seed=seed, task_cfg=task_cfg,
                             n_envs=config.n_envs, goal_sampler=sampler)
    if config.method == "shared":
        return shared_arch(config.task, config.train, config.total_steps,
                           out_dir, seed=seed, task_cfg=task_cfg,
                           n_envs=config.n_envs, goal_sampler=sampler)
    if config.method == "single_traj":
        return single_traj_cmaes(config.task, config.total_steps, out_dir,
                                 seed=seed, task_cfg=task_cfg)
    if config.method == "cma_rl":
        return cma_rl(config.task, config.total_steps, out_dir, seed=seed,
                      task_cfg=task_cfg, cfg=config.train)
    raise ValueError(f"unknown method {config.method!r}")


def aggregate_metrics(seed_csvs: list, out_path) -> int:
    """Row-aligned mean and standard error across per-seed curves."""
    tables = []
    for path in seed_csvs:
        with open(path, encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == METRICS_HEADER, path
        tables.append(np.array(rows[1:], dtype=np.float64))
    n_rows = min(t.shape[0] for t in tables)
    stack = np.stack([t[:n_rows] for t in tables])  # (seeds, rows, cols)
    mean = stack.mean(axis=0)
    if stack.shape[0] > 1:
        err = stack.std(axis=0, ddof=1) / np.sqrt(stack.shape[0])
    else:
        err = np.zeros_like(mean)
    header = ["env_steps"]
    for name in ("mean_return", "success_rate"):
        header += [f"{name}_mean", f"{name}_stderr"]
    ret_i = METRICS_HEADER.index("mean_return")
    suc_i = METRICS_HEADER.index("success_rate")
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in range(n_rows):
            writer.writerow([
                f"{mean[r, 0]:.1f}",
                f"{mean[r, ret_i]:.6f}", f"{err[r, ret_i]:.6f}",
                f"{mean[r, suc_i]:.6f}", f"{err[r, suc_i]:.6f}",
            ])
    return n_rows


def cmd_train(config: ExperimentConfig) -> dict:
    """Run the configured method for every seed, then aggregate the curves."""
    write_manifest(config.out_dir, "train", {
        "config": {**asdict(config), "train": asdict(config.train)},
    })
    seed_dirs, seed_csvs, results = [], [], []
    for seed in config.seeds:
        seed_dir = os.path.join(config.out_dir, f"seed_{seed}")
        res = _run_one_seed(config, seed, seed_dir)
        seed_dirs.append(seed_dir)
        seed_csvs.append(os.path.join(seed_dir, "metrics.csv"))
        results.append(res)
    agg_path = os.path.join(config.out_dir, "aggregate.csv")
    aggregate_metrics(seed_csvs, agg_path)
    return {
        "seed_dirs": seed_dirs,
        "seed_csvs": seed_csvs,
        "aggregate_path": agg_path,
        "results": results,
    }


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _load_for_eval(checkpoint_path, task: str | None = None):
    state = load_checkpoint(checkpoint_path)
    ck_task = state.get("task")
    if task is not None and ck_task != task:
        raise ValueError(
            f"checkpoint was trained on {ck_task!r}, not {task!r}")
    params = params_from_state(state["params"])
    env = make_env(default_config(ck_task))
    features = None
    if params.designer.sizes[0] == env.value_input_dim \
            and env.value_input_dim != env.design_input_dim:
        params = retie_trunk(params)
        features = shared_features
    return env, params, features, ck_task


def goal_grid(n: int) -> np.ndarray:
    """n x n goals spanning the push goal region corner to corner."""
    xs = np.linspace(GOAL_LOW[0], GOAL_HIGH[0], n)
    ys = np.linspace(GOAL_LOW[1], GOAL_HIGH[1], n)
    return np.array([(x, y) for y in ys for x in xs])


def cmd_eval(checkpoint_path, out_dir, goals=None, grid: int | None = None,
             cutout_fraction: float = 0.0, task: str | None = None) -> dict:
    """Deterministic rollouts per goal with region classification."""
    env, params, features, ck_task = _load_for_eval(checkpoint_path, task)
    spec = centered_cutout(cutout_fraction)
    if goals is None:
        if grid is not None:
            if ck_task != "push":
                raise ValueError("goal grids are only defined for push")
            goals = goal_grid(grid)
        else:
            goals = evaluation_goals(env, 16)
    write_manifest(out_dir, "eval", {
        "checkpoint": str(checkpoint_path),
        "task": ck_task,
        "n_goals": len(goals),
        "cutout_fraction": cutout_fraction,
    })
    kw = {"features": features} if features is not None else {}
    result = evaluate_policy(env, params, goals, **kw)

    regions = {"training": [], "cutout": [], "outside": []}
    per_goal_path = os.path.join(out_dir, "per_goal.csv")
    with open(per_goal_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["goal", "region", "return", "success", "d_used",
                         "design"])
        for goal, episode in zip(goals, result["episodes"]):
            region = classify_goal(spec, goal) if ck_task == "push" \
                else "training"
            regions[region].append(episode)
            writer.writerow([
                " ".join(f"{g:.6f}" for g in np.atleast_1d(goal)),
                region,
                f"{episode['return']:.6f}",
                f"{episode['success']:.6f}",
                f"{episode['d_used']:.6f}",
                " ".join(f"{v:.6f}" for v in episode["design"]),
            ])

    designs = np.array([e["design"] for e in result["episodes"]])
    report = {
        "task": ck_task,
        "checkpoint": str(checkpoint_path),
        "cutout_fraction": cutout_fraction,
        "n_goals": len(goals),
        "mean_return": result["mean_return"],
        "success_rate": result["success_rate"],
        "regions": {
            name: {
                "count": len(eps),
                "mean_return": float(np.mean([e["return"] for e in eps]))
                if eps else None,
                "success_rate": float(np.mean([e["success"] for e in eps]))
                if eps else None,
            }
            for name, eps in regions.items()
        },
        "design_mean": [float(x) for x in designs.mean(axis=0)],
        "design_std": [float(x) for x in designs.std(axis=0)],
    }
    report_path = os.path.join(out_dir, "eval_report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return {"report": report, "report_path": report_path,
            "per_goal_path": per_goal_path}


# ---------------------------------------------------------------------------
# finetune
# ---------------------------------------------------------------------------

def _eval_on_goals(env, params, goals) -> tuple:
    res = evaluate_policy(env, params, goals)
    per_goal = [float(e["success"]) for e in res["episodes"]]
    return res["mean_return"], per_goal


def _finetune_arm(env_template, params, cfg, goals, budget: int, seed: int,
                  csv_path, label: str) -> dict:
    """Train on the fixed goal set for budget updates, logging eval curves."""
    task_cfg = env_template.cfg
    n_envs = 4
    envs = [make_env(task_cfg) for _ in range(n_envs)]
    for env, ss in zip(envs, np.random.SeedSequence(seed).spawn(n_envs)):
        env.reset(seed=ss)
    rng = np.random.default_rng(seed)
    goal_arr = [np.asarray(g, dtype=np.float64) for g in goals]

    def sampler(env, sample_rng):
        return goal_arr[int(sample_rng.integers(len(goal_arr)))]

    eval_env = make_env(task_cfg)
    optimizers = Optimizers(params, cfg)
    rows = []
    ret0, per_goal = _eval_on_goals(eval_env, params, goal_arr)
    rows.append((0, 0, ret0, float(np.mean(per_goal))))
    steps = 0
    for update in range(1, budget + 1):
        trajs = collect_batch(envs, params, cfg, rng, goal_sampler=sampler)
        batch = prepare_batch(trajs, cfg)
        steps += batch.env_steps
        params, _ = ppo_update(params, batch, cfg, optimizers, rng)
        ret, per_goal = _eval_on_goals(eval_env, params, goal_arr)
        rows.append((update, steps, ret, float(np.mean(per_goal))))
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["update", "env_steps", "eval_return", "success_rate"])
        for row in rows:
            writer.writerow([row[0], row[1], f"{row[2]:.6f}", f"{row[3]:.6f}"])
    return {"label": label, "rows": rows, "final_return": rows[-1][2],
            "per_goal_success": per_goal, "params": params}


def cmd_finetune(checkpoint_path, out_dir, goals=None, budget: int = 50,
                 seed: int = 0, cfg: TrainConfig | None = None) -> dict:
    """Adapt a trained checkpoint to held-out goals versus a cold start."""
    env, params, features, ck_task = _load_for_eval(checkpoint_path)
    if features is not None:
        raise ValueError("fine-tuning expects the separate-network method")
    goals = [np.asarray(g, dtype=np.float64)
             for g in (goals if goals is not None else DEFAULT_FINETUNE_GOALS)]
    if ck_task == "push":
        for g in goals:
            if classify_goal(centered_cutout(0.0), g) == "training":
                raise ValueError(
                    f"fine-tune goal {g.tolist()} lies inside the training region")
    cfg = cfg or default_train_config(ck_task, scale="desk")
    write_manifest(out_dir, "finetune", {
        "checkpoint": str(checkpoint_path),
        "task": ck_task,
        "goals": [list(map(float, g)) for g in goals],
        "budget": budget,
        "seed": seed,
    })
    os.makedirs(out_dir, exist_ok=True)
    tuned = _finetune_arm(env, params, cfg, goals, budget, seed,
                          os.path.join(out_dir, "finetuned.csv"), "finetuned")
    scratch_params = policy_for_env(env, np.random.default_rng(seed),
                                    **DESK_POLICY_OVERRIDES.get(ck_task, {}))
    scratch = _finetune_arm(env, scratch_params, cfg, goals, budget, seed,
                            os.path.join(out_dir, "scratch.csv"), "scratch")
    report = {
        "task": ck_task,
        "budget": budget,
        "goals": [list(map(float, g)) for g in goals],
        "finetuned_final_return": tuned["final_return"],
        "scratch_final_return": scratch["final_return"],
        "finetuned_per_goal_success": tuned["per_goal_success"],
        "scratch_per_goal_success": scratch["per_goal_success"],
    }
    report_path = os.path.join(out_dir, "finetune_report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return {"report": report, "report_path": report_path,
            "finetuned": tuned, "scratch": scratch}


# ---------------------------------------------------------------------------
# alpha sweep
# ---------------------------------------------------------------------------

def cmd_alpha_sweep(out_dir, task: str = "catch", alphas=DEFAULT_ALPHAS,
                    k: float = 1.0, budget: int = 200000, seeds=(0,),
                    cfg: TrainConfig | None = None, n_envs: int = 16) -> list:
    """Train one agent per tradeoff weight and tabulate the usage ratio."""
    if k <= 0.0:
        raise ValueError("the sweep needs K > 0; the tradeoff is inactive at 0")
    cfg = cfg or default_train_config(task, scale="desk")
    write_manifest(out_dir, "alpha-sweep", {
        "task": task, "alphas": list(alphas), "k": k,
        "budget": budget, "seeds": list(seeds),
    })
    rows = []
    for alpha in alphas:
        for seed in seeds:
            run_dir = os.path.join(out_dir, f"alpha_{alpha:g}", f"seed_{seed}")
            task_cfg = default_config(task, tradeoff_k=k, tradeoff_alpha=alpha)
            out = train(task, cfg, budget, run_dir, seed=seed,
                        task_cfg=task_cfg, n_envs=n_envs,
                        policy_overrides=DESK_POLICY_OVERRIDES.get(task, {}))
            env = make_env(task_cfg)
            goals = evaluation_goals(env, 16)
            res = evaluate_policy(env, out["params"], goals)
            d_hat = res["mean_d_used"] / env.tradeoff.d_max
            c_per_step = np.mean([
                np.mean([r for r in _per_step_c(env, out["params"], g, i)])
                for i, g in enumerate(goals)])
            c_hat = float(c_per_step) / env.tradeoff.c_max
            ratio = d_hat / c_hat if c_hat > 0 else float("inf")
            goal = goals[0]
            stl_path = os.path.join(out_dir, f"alpha_{alpha:g}",
                                    f"tool_seed_{seed}.stl")
            _export_design(env, out["params"], goal, stl_path)
            rows.append({"alpha": alpha, "seed": seed, "k": k,
                         "ratio": float(ratio), "d_hat": float(d_hat),
                         "c_hat": float(c_hat),
                         "mean_return": res["mean_return"],
                         "success_rate": res["success_rate"]})
    table_path = os.path.join(out_dir, "alpha_sweep.csv")
    with open(table_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "seed", "k", "ratio", "d_hat", "c_hat",
                         "mean_return", "success_rate"])
        for row in rows:
            writer.writerow([
                f"{row['alpha']:g}", row["seed"], f"{row['k']:g}",
                f"{row['ratio']:.6f}", f"{row['d_hat']:.6f}",
                f"{row['c_hat']:.6f}", f"{row['mean_return']:.6f}",
                f"{row['success_rate']:.6f}"])
    return rows


def _per_step_c(env, params, goal, index: int):
    obs = env.reset(goal=goal, seed=EVAL_RESET_SEED + index)
    mu = forward(params.designer, env.design_input(obs))
    res = env.step_design(mu)
    obs = res.observation
    cs = []
    while not env.done:
        a = forward(params.controller, env.control_input(obs))
        res = env.step_control(a)
        cs.append(res.info["c_used"])
        obs = res.observation
    return cs


# ---------------------------------------------------------------------------
# export-tool
# ---------------------------------------------------------------------------

def _export_design(env, params, goal, stl_path,
                   features=None) -> dict:
    obs = env.reset(goal=goal)
    x = env.value_input(obs) if features is shared_features \
        else env.design_input(obs)
    mu = forward(params.designer, x)
    design = env.space.realize(mu)
    geom = build_tool(design)
    data = export_stl(geom)
    os.makedirs(os.path.dirname(stl_path) or ".", exist_ok=True)
    with open(stl_path, "wb") as fh:
        fh.write(data)
    return {
        "goal": [float(g) for g in np.atleast_1d(goal)],
        "design_action": [float(v) for v in np.atleast_1d(mu)],
        "design": [float(v) for v in design.as_array()],
        "stl_path": str(stl_path),
        "stl_bytes": len(data),
    }


def cmd_export_tool(checkpoint_path, goal, out_dir) -> dict:
    """Run the designer on one goal and write the printable mesh."""
    env, params, features, ck_task = _load_for_eval(checkpoint_path)
    goal = env.validate_goal(np.asarray(goal, dtype=np.float64))
    os.makedirs(out_dir, exist_ok=True)
    record = _export_design(env, params, goal,
                            os.path.join(out_dir, "tool.stl"),
                            features=features)
    record["task"] = ck_task
    record_path = os.path.join(out_dir, "design.json")
    with open(record_path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return {"record": record, "record_path": record_path,
            "stl_path": record["stl_path"]}


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def cmd_compare(run_dirs: list, out_dir, task: str, n_goals: int = 16) -> list:
    """Score trained artifacts from several runs on one shared goal set."""
    env = make_env(default_config(task))
    goals = evaluation_goals(env, n_goals)
    write_manifest(out_dir, "compare", {
        "task": task, "n_goals": n_goals,
        "run_dirs": [str(d) for d in run_dirs],
    })
    rows = []
    for run_dir in run_dirs:
        run_dir = str(run_dir)
        row = {"run_dir": run_dir, "env_steps": None,
               "train_mean_return": None, "eval_mean_return": None}
        metrics = os.path.join(run_dir, "metrics.csv")
        if os.path.exists(metrics):
            with open(metrics, encoding="utf-8") as fh:
                last = list(csv.DictReader(fh))[-1]
            row["env_steps"] = int(last["env_steps"])
            row["train_mean_return"] = float(last["mean_return"])
        checkpoint = os.path.join(run_dir, "checkpoint.json")
        best_plan = os.path.join(run_dir, "best_plan.json")
        if os.path.exists(checkpoint):
            _, params, features, ck_task = _load_for_eval(checkpoint, task)
            kw = {"features": features} if features is not None else {}
            res = evaluate_policy(env, params, goals, **kw)
            row["eval_mean_return"] = res["mean_return"]
        elif os.path.exists(best_plan):
            with open(best_plan, encoding="utf-8") as fh:
                vec = np.asarray(json.load(fh)["vector"], dtype=np.float64)
            res = plan_fitness(env, vec, goals)
            row["eval_mean_return"] = res["mean_return"]
        rows.append(row)
    table_path = os.path.join(out_dir, "compare.csv")
    with open(table_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run_dir", "env_steps", "train_mean_return",
                         "eval_mean_return"])
        for row in rows:
            writer.writerow([
                row["run_dir"],
                "" if row["env_steps"] is None else row["env_steps"],
                "" if row["train_mean_return"] is None
                else f"{row['train_mean_return']:.6f}",
                "" if row["eval_mean_return"] is None
                else f"{row['eval_mean_return']:.6f}"])
    return rows
