import math

import numpy as np
import pytest

from toolsmith.envs import default_config, make_env
from toolsmith.neural import (
    GaussianHead,
    clone_params,
    forward,
    gaussian_logprob,
    init_network,
    load_checkpoint,
    parameters,
)
from toolsmith.ppo import (
    DESIGN_MEANS_HEADER,
    METRICS_HEADER,
    Optimizers,
    TrainConfig,
    Trajectory,
    collect_batch,
    compute_gae,
    default_train_config,
    policy_for_env,
    ppo_update,
    prepare_batch,
    run_episode,
    train,
    _policy_loss_grads,
)


def small_cfg(**overrides):
    kw = dict(batch_size=256, minibatch_size=128, ppo_epochs=2)
    kw.update(overrides)
    return default_train_config("push", **kw)


def make_setup(seed=11, n_envs=2, task="push", **cfg_overrides):
    rng = np.random.default_rng(seed)
    envs = [make_env(default_config(task)) for _ in range(n_envs)]
    for env, ss in zip(envs, np.random.SeedSequence(seed).spawn(n_envs)):
        env.reset(seed=ss)
    cfg = small_cfg(**cfg_overrides) if task == "push" else \
        default_train_config(task, batch_size=256, minibatch_size=128, ppo_epochs=2)
    params = policy_for_env(envs[0], rng)
    return rng, envs, params, cfg


def all_params(params):
    arrs = list(params.trainable()) + list(parameters(params.value))
    return [a.copy() for a in arrs]


def params_equal(params, snapshot) -> bool:
    arrs = list(params.trainable()) + list(parameters(params.value))
    return all(np.array_equal(a, b) for a, b in zip(arrs, snapshot))


# ---------------------------------------------------------------------------
# GAE
# ---------------------------------------------------------------------------

def gae_reference(rewards, values, dones, gamma, lam):
    """Direct double-sum evaluation of the advantage recursion."""
    T = len(rewards)
    deltas = [rewards[t] + gamma * values[t + 1] * (1 - dones[t]) - values[t]
              for t in range(T)]
    adv = []
    for t in range(T):
        total, weight = 0.0, 1.0
        for k in range(t, T):
            total += weight * deltas[k]
            if dones[k]:
                break
            weight *= gamma * lam
        adv.append(total)
    return np.array(adv)


def test_gae_two_step_example():
    adv, ret = compute_gae([1.0, 1.0], [0.0, 0.0, 0.0], [0.0, 1.0], 0.5, 0.5)
    assert adv[0] == pytest.approx(1.25, abs=0)
    assert adv[1] == pytest.approx(1.0, abs=0)
    assert np.array_equal(ret, adv)


def test_gae_lambda_one_gamma_one_telescopes():
    rng = np.random.default_rng(3)
    rewards = rng.standard_normal(40)
    values = rng.standard_normal(41)
    dones = np.zeros(40)
    dones[-1] = 1.0
    adv, ret = compute_gae(rewards, values, dones, 1.0, 1.0)
    tail = np.cumsum(rewards[::-1])[::-1]
    assert np.allclose(adv, tail - values[:-1], atol=1e-12)
    assert np.allclose(ret, tail, atol=1e-12)


def test_gae_matches_reference_with_midstream_done():
    rng = np.random.default_rng(4)
    rewards = rng.standard_normal(25)
    values = rng.standard_normal(26)
    dones = np.zeros(25)
    dones[9] = 1.0
    dones[-1] = 1.0
    adv, ret = compute_gae(rewards, values, dones, 0.97, 0.9)
    expect = gae_reference(rewards, values, dones, 0.97, 0.9)
    assert np.allclose(adv, expect, atol=1e-12)
    assert np.allclose(ret, expect + values[:-1], atol=1e-12)


def test_gae_zero_rewards_zero_values():
    adv, ret = compute_gae(np.zeros(7), np.zeros(8), np.zeros(7), 0.99, 0.95)
    assert np.all(adv == 0.0)
    assert np.all(ret == 0.0)


def test_gae_rejects_mismatched_lengths():
    with pytest.raises(ValueError):
        compute_gae(np.zeros(5), np.zeros(5), np.zeros(5), 0.9, 0.9)
    with pytest.raises(ValueError):
        compute_gae(np.zeros(5), np.zeros(6), np.zeros(4), 0.9, 0.9)


def test_design_advantage_depends_on_control_rewards():
    rewards = np.array([0.5, 0.1, 0.1, 0.1, 2.0])
    values = np.zeros(6)
    dones = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
    adv_a, _ = compute_gae(rewards, values, dones, 0.99, 0.95)
    bumped = rewards.copy()
    bumped[-1] += 1.0
    adv_b, _ = compute_gae(bumped, values, dones, 0.99, 0.95)
    assert adv_b[0] > adv_a[0]
    assert adv_b[0] - adv_a[0] == pytest.approx((0.99 * 0.95) ** 4, rel=1e-12)


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=10, minibatch_size=20)
    with pytest.raises(ValueError):
        TrainConfig(kl_threshold=0.0)
    with pytest.raises(ValueError):
        TrainConfig(gamma=1.5)
    with pytest.raises(ValueError):
        TrainConfig(gae_lambda=0.0)


def test_task_train_configs():
    push = default_train_config("push")
    assert push.kl_threshold == 0.005 and push.value_lr == 1e-4
    catch = default_train_config("catch")
    assert catch.kl_threshold == 0.002 and catch.value_lr == 1e-4
    scoop = default_train_config("scoop")
    assert scoop.kl_threshold == 0.1 and scoop.value_lr == 3e-4
    paper = default_train_config("push", scale="paper")
    assert paper.batch_size == 50_000 and paper.minibatch_size == 2_000
    assert paper.policy_lr == 2e-5 and paper.ppo_epochs == 10
    with pytest.raises(ValueError):
        default_train_config("juggle")
    with pytest.raises(ValueError):
        default_train_config("push", scale="warehouse")


def test_task_policy_heads_are_fixed_with_published_stds():
    rng, envs, params, _ = make_setup(task="push")
    assert params.designer_head.fixed and params.controller_head.fixed
    assert np.all(params.designer_head.log_std == -2.3)
    assert np.all(params.controller_head.log_std == -1.0)
    _, _, params, _ = make_setup(task="catch")
    assert np.all(params.designer_head.log_std == 0.0)
    assert np.all(params.controller_head.log_std == 0.0)


# ---------------------------------------------------------------------------
# Collection
# ---------------------------------------------------------------------------

def test_collect_batch_structure():
    rng, envs, params, cfg = make_setup()
    trajs = collect_batch(envs, params, cfg, rng)
    steps = sum(t.length for t in trajs)
    assert steps >= cfg.batch_size
    for t in trajs:
        assert t.rewards.size == 1 + t.control_actions.shape[0]
        assert t.value_inputs.shape[0] == t.rewards.size
        assert t.values.size == t.rewards.size
        assert t.dones[-1] == 1.0 and np.all(t.dones[:-1] == 0.0)
        assert np.all(np.isfinite(t.rewards))
        assert t.design_input.shape == (envs[0].design_input_dim,)
        assert t.design_action.shape == (5,)


def test_collect_batch_deterministic():
    rng1, envs1, params1, cfg = make_setup()
    rng2, envs2, params2, _ = make_setup()
    t1 = collect_batch(envs1, params1, cfg, rng1)
    t2 = collect_batch(envs2, params2, cfg, rng2)
    assert len(t1) == len(t2)
    for x, y in zip(t1, t2):
        assert np.array_equal(x.rewards, y.rewards)
        assert np.array_equal(x.design_action, y.design_action)
        assert np.array_equal(x.control_actions, y.control_actions)
        assert np.array_equal(x.design_echo, y.design_echo)


def test_trajectory_rejects_nonfinite_rewards():
    with pytest.raises(ValueError):
        Trajectory(
            design_input=np.zeros(4), design_action=np.zeros(5), design_logp=0.0,
            control_inputs=np.zeros((1, 4)), control_actions=np.zeros((1, 2)),
            control_logps=np.zeros(1), value_inputs=np.zeros((2, 5)),
            rewards=np.array([0.0, np.nan]), values=np.zeros(2),
            dones=np.array([0.0, 1.0]), design_echo=np.zeros(5),
            success=0.0, d_used=0.0, mean_c_used=0.0)


def test_goal_sampler_overrides_goals():
    rng, envs, params, cfg = make_setup()
    fixed_goal = np.array([5.0, 12.0])

    def sampler(env, sampler_rng):
        return fixed_goal

    trajs = collect_batch(envs, params, cfg, rng, goal_sampler=sampler)
    for env in envs:
        assert np.array_equal(env.goal, fixed_goal)
    assert len(trajs) >= 1


def test_prepare_batch_normalizes_advantages_jointly():
    rng, envs, params, cfg = make_setup()
    batch = prepare_batch(collect_batch(envs, params, cfg, rng), cfg)
    alladv = np.concatenate([batch.design_adv, batch.control_adv])
    assert abs(alladv.mean()) < 1e-10
    assert abs(alladv.std() - 1.0) < 1e-10
    assert batch.num_rows == batch.design_adv.size + batch.control_adv.size
    assert batch.value_inputs.shape[0] == batch.returns.size == batch.num_rows


def test_prepare_batch_row_alignment():
    """Value rows must line up with policy rows: designs first, then controls."""
    rng, envs, params, cfg = make_setup()
    trajs = collect_batch(envs, params, cfg, rng)
    batch = prepare_batch(trajs, cfg)
    nd = batch.num_design
    assert nd == len(trajs)
    phase_flag = batch.value_inputs[:, 0]
    assert np.all(phase_flag[:nd] == 0.0)
    assert np.all(phase_flag[nd:] == 1.0)
    assert batch.control_inputs.shape[0] == batch.num_rows - nd


# ---------------------------------------------------------------------------
# Updates
# ---------------------------------------------------------------------------

def test_surrogate_clipping_zeroes_gradient():
    rng = np.random.default_rng(5)
    net = init_network((3, 8, 2), rng)
    head = GaussianHead(np.zeros(2))
    X = rng.standard_normal((4, 3))
    acts = forward(net, X) + 0.1
    logp = gaussian_logprob(head, forward(net, X), acts)

    # old logp shifted so the ratio exp(+0.5) > 1.2 lands in the clipped band
    obj, grads, _, _ = _policy_loss_grads(
        net, head, X, acts, logp - 0.5, np.ones(4), 0.2, 4)
    assert obj == pytest.approx(1.2, rel=1e-12)
    assert all(np.all(g == 0.0) for g in grads)

    # unshifted ratio 1 stays unclipped and drives a nonzero gradient
    obj2, grads2, _, _ = _policy_loss_grads(
        net, head, X, acts, logp, np.ones(4), 0.2, 4)
    assert obj2 == pytest.approx(1.0, rel=1e-12)
    assert any(np.any(g != 0.0) for g in grads2)


def test_surrogate_negative_advantage_keeps_gradient_when_ratio_high():
    """With adv < 0 and ratio above the band, min picks the unclipped branch."""
    rng = np.random.default_rng(6)
    net = init_network((3, 8, 2), rng)
    head = GaussianHead(np.zeros(2))
    X = rng.standard_normal((3, 3))
    acts = forward(net, X) + 0.2
    logp = gaussian_logprob(head, forward(net, X), acts)
    obj, grads, _, _ = _policy_loss_grads(
        net, head, X, acts, logp - 0.5, -np.ones(3), 0.2, 3)
    rho = math.exp(0.5)
    assert obj == pytest.approx(-rho, rel=1e-12)
    assert any(np.any(g != 0.0) for g in grads)


def test_identity_update_zero_lr_keeps_kl_zero():
    rng, envs, params, _ = make_setup()
    cfg = small_cfg(policy_lr=0.0, value_lr=0.0, ppo_epochs=3,
                    kl_threshold=10.0)
    batch = prepare_batch(collect_batch(envs, params, cfg, rng), cfg)
    params, stats = ppo_update(params, batch, cfg, None, np.random.default_rng(0))
    assert abs(stats["approx_kl"]) < 1e-15
    assert stats["epochs_run"] == 3


def test_zero_advantages_leave_policy_untouched():
    rng, envs, params, cfg = make_setup()
    cfg = small_cfg(entropy_beta=0.0, ppo_epochs=2, kl_threshold=10.0)
    batch = prepare_batch(collect_batch(envs, params, cfg, rng), cfg)
    batch.design_adv[...] = 0.0
    batch.control_adv[...] = 0.0
    pol_before = [a.copy() for a in params.trainable()]
    val_before = [a.copy() for a in parameters(params.value)]
    params, stats = ppo_update(params, batch, cfg, None, np.random.default_rng(0))
    assert all(np.array_equal(a, b) for a, b in zip(params.trainable(), pol_before))
    assert not all(np.array_equal(a, b)
                   for a, b in zip(parameters(params.value), val_before))
    assert abs(stats["approx_kl"]) < 1e-15


def test_kl_early_stop_keeps_epoch_boundary_params():
    rng, envs, params, cfg = make_setup()
    batch = prepare_batch(collect_batch(envs, params, cfg, rng), cfg)

    tight = small_cfg(policy_lr=3e-3, ppo_epochs=6, kl_threshold=1e-7)
    p1 = clone_params(params)
    p1, s1 = ppo_update(p1, batch, tight, None, np.random.default_rng(9))
    assert s1["epochs_run"] < 6
    assert s1["approx_kl"] > tight.kl_threshold

    unbounded = small_cfg(policy_lr=3e-3, ppo_epochs=s1["epochs_run"],
                          kl_threshold=1e9)
    p2 = clone_params(params)
    p2, s2 = ppo_update(p2, batch, unbounded, None, np.random.default_rng(9))
    assert s2["epochs_run"] == s1["epochs_run"]
    assert params_equal(p1, all_params(p2))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_loss_restores_params_and_optimizer():
    rng, envs, params, cfg = make_setup()
    batch = prepare_batch(collect_batch(envs, params, cfg, rng), cfg)
    batch.design_adv[0] = np.inf
    opt = Optimizers(params, cfg)
    before = all_params(params)
    params, stats = ppo_update(params, batch, cfg, opt, np.random.default_rng(0))
    assert stats["aborted"]
    assert params_equal(params, before)
    assert opt.policy.t == 0 and opt.value.t == 0


def test_update_reduces_value_loss():
    rng, envs, params, cfg = make_setup()
    cfg = small_cfg(value_lr=1e-4, ppo_epochs=1, kl_threshold=10.0)
    batch = prepare_batch(collect_batch(envs, params, cfg, rng), cfg)

    def value_loss():
        err = forward(params.value, batch.value_inputs)[:, 0] - batch.returns
        return float(err @ err) / err.size

    before = value_loss()
    params, _ = ppo_update(params, batch, cfg, None, np.random.default_rng(0))
    assert value_loss() < before


def test_update_routes_design_rows_to_designer_head():
    """Batches with identical control rows but different design advantages
    must move the designer net differently while the controller matches."""
    rng, envs, params, cfg = make_setup()
    cfg = small_cfg(entropy_beta=0.0, ppo_epochs=1, kl_threshold=10.0,
                    policy_lr=1e-3)
    batch = prepare_batch(collect_batch(envs, params, cfg, rng), cfg)

    variants = []
    for sign in (1.0, -1.0):
        p = clone_params(params)
        b_adv = batch.design_adv.copy()
        saved = batch.design_adv
        batch.design_adv = sign * np.abs(b_adv) + 1.0
        p, _ = ppo_update(p, batch, cfg, None, np.random.default_rng(1))
        batch.design_adv = saved
        variants.append(p)
    a, b = variants
    assert not all(np.array_equal(x, y) for x, y in
                   zip(parameters(a.designer), parameters(b.designer)))
    assert all(np.array_equal(x, y) for x, y in
               zip(parameters(a.controller), parameters(b.controller)))


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def test_train_single_batch_when_total_below_batch_size(tmp_path):
    cfg = small_cfg()
    out = train("push", cfg, total_steps=1, out_dir=tmp_path / "run",
                seed=5, n_envs=2)
    assert out["batches"] == 1
    assert out["env_steps"] >= cfg.batch_size
    with open(out["metrics_path"], encoding="utf-8") as fh:
        lines = fh.read().strip().splitlines()
    assert lines[0] == ",".join(METRICS_HEADER)
    assert lines[0] == "env_steps,mean_return,success_rate,approx_kl,entropy,mean_d_used,mean_c_used"
    assert len(lines) == 2
    with open(tmp_path / "run" / "design_means.csv", encoding="utf-8") as fh:
        means_lines = fh.read().strip().splitlines()
    assert means_lines[0] == ",".join(DESIGN_MEANS_HEADER)
    state = load_checkpoint(out["checkpoint_path"])
    assert state["env_steps"] == out["env_steps"]
    assert state["param_count"] == out["param_count"]


def test_train_rerun_is_byte_identical(tmp_path):
    cfg = small_cfg()
    train("push", cfg, total_steps=300, out_dir=tmp_path / "a", seed=3, n_envs=2)
    train("push", cfg, total_steps=300, out_dir=tmp_path / "b", seed=3, n_envs=2)
    for name in ("metrics.csv", "design_means.csv", "checkpoint.json"):
        wa = (tmp_path / "a" / name).read_bytes()
        wb = (tmp_path / "b" / name).read_bytes()
        assert wa == wb, name


def test_train_resume_matches_straight_run(tmp_path):
    cfg = small_cfg()
    train("push", cfg, total_steps=600, out_dir=tmp_path / "a", seed=3, n_envs=2)
    train("push", cfg, total_steps=1, out_dir=tmp_path / "c", seed=3, n_envs=2)
    train("push", cfg, total_steps=600, out_dir=tmp_path / "c", seed=3, n_envs=2,
          resume=True)
    assert (tmp_path / "a" / "checkpoint.json").read_bytes() == \
        (tmp_path / "c" / "checkpoint.json").read_bytes()
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == \
        (tmp_path / "c" / "metrics.csv").read_bytes()


def test_train_resume_rejects_config_change(tmp_path):
    cfg = small_cfg()
    train("push", cfg, total_steps=1, out_dir=tmp_path / "r", seed=3, n_envs=2)
    other = small_cfg(gamma=0.9)
    with pytest.raises(ValueError):
        train("push", other, total_steps=600, out_dir=tmp_path / "r", seed=3,
              n_envs=2, resume=True)


def test_run_episode_deterministic_eval():
    rng, envs, params, cfg = make_setup()
    env = envs[0]
    a = run_episode(env, params, goal=np.array([8.0, 12.0]), seed=4)
    b = run_episode(env, params, goal=np.array([8.0, 12.0]), seed=4)
    assert a["return"] == b["return"]
    assert np.array_equal(a["design"], b["design"])
    assert a["steps"] == b["steps"]
