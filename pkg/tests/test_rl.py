import math

import numpy as np
import pytest
import torch
from scipy.stats import chisquare

from elasticgait.cpg import CpgParams
from elasticgait.env import ACT_DIM, OBS_DIM, EnvConfig, LocomotionEnv, run_episode
from elasticgait.rl.learner import LearnerConfig, TQCLearner, squashed_gaussian, truncate_atoms
from elasticgait.rl.quantile import quantile_huber_loss, quantile_huber_loss_reference, quantile_midpoints
from elasticgait.rl.replay import ReplayBuffer
from elasticgait.rl.train import SmoothNoise, TrainConfig, make_policy, train

TROT = CpgParams.from_durations(0.2, 0.2, 0.03, 0.005, 0.04)


# -- replay -----------------------------------------------------------------

@pytest.mark.parametrize("n,cap", [(10, 100), (100, 100), (250, 100)])
def test_replay_size(n, cap):
    buf = ReplayBuffer(3, 2, cap)
    for i in range(n):
        buf.add(np.full(3, i), np.zeros(2), float(i), np.zeros(3), False)
    assert len(buf) == min(n, cap)
    # the oldest entries are overwritten first
    assert set(buf.rew.tolist()) == set(float(i) for i in range(max(0, n - cap), n))


def test_replay_uniform_sampling(rng):
    buf = ReplayBuffer(1, 1, 50)
    for i in range(80):
        buf.add([i], [0], 0.0, [0], False)
    idx = np.concatenate([buf.sample_indices(32, rng) for _ in range(1000)])
    counts = np.bincount(idx, minlength=50)
    assert chisquare(counts).pvalue > 0.01


def test_replay_rejects_oversized_batch(rng):
    buf = ReplayBuffer(1, 1, 10)
    buf.add([0], [0], 0.0, [0], True)
    with pytest.raises(ValueError):
        buf.sample(2, rng)


def test_replay_save_load(tmp_path, rng):
    buf = ReplayBuffer(2, 1, 20)
    for i in range(7):
        buf.add(rng.normal(size=2), [0.1 * i], float(i), rng.normal(size=2), i == 6)
    buf.save(tmp_path / "r.npz")
    back = ReplayBuffer.load(tmp_path / "r.npz", 20)
    assert len(back) == 7 and np.array_equal(back.obs[:7], buf.obs[:7])
    assert back.done[6] == 1.0


# -- quantile loss ---------------------------------------------------------------

def test_fused_loss_matches_reference(rng):
    cur = torch.tensor(rng.normal(size=(6, 2, 5)) * 2)
    tgt = torch.tensor(rng.normal(size=(6, 8)) * 2)
    assert float(quantile_huber_loss(cur, tgt)) == pytest.approx(
        float(quantile_huber_loss_reference(cur, tgt)), rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_loss_gradient_vs_finite_differences(seed):
    r = np.random.default_rng(seed)
    cur = torch.tensor(r.normal(size=(3, 2, 4)) * 1.5, requires_grad=True)
    tgt = torch.tensor(r.normal(size=(3, 5)) * 1.5)
    quantile_huber_loss(cur, tgt).backward()
    g = cur.grad.numpy()
    base = cur.detach().numpy()
    h = 1e-6
    num = np.empty_like(base)
    for i in np.ndindex(base.shape):
        p, m = base.copy(), base.copy()
        p[i] += h
        m[i] -= h
        fp = float(quantile_huber_loss(torch.tensor(p), tgt))
        fm = float(quantile_huber_loss(torch.tensor(m), tgt))
        num[i] = (fp - fm) / (2 * h)
    assert np.linalg.norm(g - num) / np.linalg.norm(num) < 1e-5


def test_loss_shape_checks():
    with pytest.raises(ValueError):
        quantile_huber_loss(torch.zeros(2, 3), torch.zeros(2, 3))


def test_truncation_without_drop_is_mixture_mean(rng):
    q = torch.tensor(rng.normal(size=(4, 2, 25)))
    z = truncate_atoms(q, 0)
    assert torch.allclose(z.mean(1), q.reshape(4, -1).mean(1))
    assert torch.all(z[:, 1:] >= z[:, :-1])


def test_truncation_drops_top_atoms(rng):
    q = torch.tensor(rng.normal(size=(4, 2, 25)))
    z = truncate_atoms(q, 2)
    assert z.shape == (4, 46)
    pooled = torch.sort(q.reshape(4, -1), dim=1).values
    assert torch.equal(z, pooled[:, :46])


# -- learner oracles --------------------------------------------------------------

def fixed_batch(n, obs_dim, act_dim, rew, done):
    return (np.ones((n, obs_dim)), np.zeros((n, act_dim)), np.asarray(rew, dtype=float),
            np.ones((n, obs_dim)), np.full(n, float(done)))


def test_constant_reward_loss_vanishes():
    cfg = LearnerConfig(gamma=0.0, lr=3e-3, batch_size=32)
    learner = TQCLearner(3, 1, cfg, seed=0)
    batch = fixed_batch(32, 3, 1, np.full(32, 0.5), False)
    first = learner.critic_update(batch)
    for _ in range(400):
        last = learner.critic_update(batch)
    assert last < 1e-3 * first


def test_single_transition_fixed_point():
    learner = TQCLearner(3, 1, LearnerConfig(lr=3e-3), seed=1)
    batch = fixed_batch(16, 3, 1, np.full(16, 0.7), True)
    for _ in range(500):
        learner.critic_update(batch)
    q = learner.critics(torch.ones(1, 3), torch.zeros(1, 1)).detach().numpy()
    assert np.max(np.abs(q - 0.7)) < 1e-2


def test_bernoulli_reward_expectile_fixed_point():
    # with targets inside the Huber radius the loss is an asymmetric square,
    # so each quantile head settles on the matching expectile
    p = 0.25
    rew = np.zeros(64)
    rew[:16] = 1.0
    learner = TQCLearner(3, 1, LearnerConfig(lr=3e-3, n_quantiles=5), seed=2)
    batch = fixed_batch(64, 3, 1, rew, True)
    for _ in range(1500):
        learner.critic_update(batch)
    tau = quantile_midpoints(5)
    expected = tau * p / (tau * p + (1 - tau) * (1 - p))
    q = learner.critics(torch.ones(1, 3), torch.zeros(1, 1)).detach().numpy()[0]
    assert np.max(np.abs(q - expected[None, :])) < 1e-2


@pytest.mark.parametrize("seed", [0, 3])
def test_bandit_actor_mean(seed):
    # reward -a^2 has its optimum at a = 0; the stochastic iterate jitters
    # around it, so the mean action is averaged over the last 200 updates
    learner = TQCLearner(1, 1, LearnerConfig(lr=1e-3), seed=seed)
    with torch.no_grad():
        learner.actor.mu.bias.fill_(0.5)
    buf = ReplayBuffer(1, 1, 10_000)
    rng = np.random.default_rng(seed)
    obs = np.ones(1)
    tail = []
    for step in range(2000):
        a = learner.act(obs, rng.standard_normal(1))
        buf.add(obs, a, -float(a[0] ** 2), obs, True)
        if len(buf) >= 256:
            learner.update(buf.sample(256, rng))
        if step >= 1800:
            tail.append(learner.act(obs)[0])
    assert abs(np.mean(tail)) < 1e-2


def test_zero_critics_leave_only_entropy_gradient():
    learner = TQCLearner(4, 2, seed=4)
    with torch.no_grad():
        for p in learner.critics.parameters():
            p.zero_()
    obs = torch.tensor(np.random.default_rng(0).normal(size=(8, 4)), dtype=torch.float32)
    state = learner.gen.get_state()
    loss, _ = learner.actor_loss(obs)
    grads = torch.autograd.grad(loss, list(learner.actor.parameters()))
    learner.gen.set_state(state)
    noise = torch.randn((8, 2), generator=learner.gen)
    _, logp = learner.actor.sample(obs, noise)
    ent = torch.autograd.grad((learner.alpha * logp).mean(), list(learner.actor.parameters()))
    for g, e in zip(grads, ent):
        assert torch.allclose(g, e, atol=1e-7)


def test_policy_gradient_vs_finite_differences():
    """Three-parameter toy policy: mean = w * obs + b, state-free log std."""
    r = np.random.default_rng(5)
    obs = torch.tensor(r.normal(size=(16, 1)))
    noise = torch.tensor(r.normal(size=(16, 1)))

    def objective(theta):
        w, b, log_std = theta[0], theta[1], theta[2]
        a, logp = squashed_gaussian(w * obs + b, log_std.expand(16, 1), noise)
        return (0.2 * logp + ((a - 0.3) ** 2).sum(-1)).mean()

    theta = torch.tensor([0.4, -0.2, math.log(0.3)], dtype=torch.float64, requires_grad=True)
    (g,) = torch.autograd.grad(objective(theta), theta)
    h = 1e-6
    num = torch.empty(3, dtype=torch.float64)
    for i in range(3):
        e = torch.zeros(3, dtype=torch.float64)
        e[i] = h
        num[i] = (objective(theta.detach() + e) - objective(theta.detach() - e)) / (2 * h)
    assert float(torch.linalg.norm(g - num) / torch.linalg.norm(num)) < 1e-4


def test_squashed_log_density_matches_numeric(rng):
    """The tanh change of variables integrates to one over (-1, 1)."""
    mu, log_std = torch.tensor([[0.3]], dtype=torch.float64), torch.tensor([[-0.5]], dtype=torch.float64)
    a = torch.linspace(-0.999, 0.999, 20001, dtype=torch.float64)[:, None]
    u = torch.atanh(a)
    noise = (u - mu) / log_std.exp()
    _, logp = squashed_gaussian(mu.expand_as(noise), log_std.expand_as(noise), noise)
    mass = torch.trapezoid(logp.exp(), a[:, 0])
    assert float(mass) == pytest.approx(1.0, abs=2e-3)


def test_initial_policy_is_zero():
    learner = TQCLearner(OBS_DIM, ACT_DIM, seed=9)
    obs = np.random.default_rng(0).normal(size=OBS_DIM)
    assert np.all(learner.act(obs) == 0.0)


def test_smooth_noise_stationary_variance():
    n = SmoothNoise(3, 0.8, np.random.default_rng(0))
    xs = np.array([n() for _ in range(20_000)])
    assert np.allclose(xs.var(0), 1.0, atol=0.1)
    lag1 = np.mean([np.corrcoef(xs[:-1, i], xs[1:, i])[0, 1] for i in range(3)])
    assert lag1 == pytest.approx(0.8, abs=0.03)


# -- environment coupling -------------------------------------------------------------

def test_zero_policy_matches_open_loop():
    env = LocomotionEnv(TROT, EnvConfig(task="trot"))
    policy = make_policy(TQCLearner(OBS_DIM, ACT_DIM, seed=0).actor)
    a = run_episode(env, None, seed=3).trace.to_array()
    b = run_episode(env, policy, seed=3).trace.to_array()
    assert a.tobytes() == b.tobytes()


def test_actions_respect_offset_bound():
    env = LocomotionEnv(TROT, EnvConfig(task="trot"))
    learner = TQCLearner(OBS_DIM, ACT_DIM, seed=1)
    rng = np.random.default_rng(1)
    obs = env.reset(0)
    for _ in range(100):
        a = learner.act(obs, 5.0 * rng.standard_normal(ACT_DIM))
        off = env.scale_action(a)
        assert np.all(np.abs(off) <= env.config.max_offset)
        obs, _, term, trunc, _ = env.step(a)
        if term or trunc:
            obs = env.reset(1)


def small_config(budget):
    return TrainConfig(budget=budget, learning_starts=100, eval_every=150, eval_seeds=(1,),
                       learner=LearnerConfig(batch_size=32, hidden=16))


def test_zero_budget_returns_untrained_policy():
    env = LocomotionEnv(TROT, EnvConfig(task="trot"))
    res = train(env, small_config(0), seed=0)
    obs = np.random.default_rng(0).normal(size=OBS_DIM)
    assert np.all(res.policy()(obs) == 0.0)
    assert res.best_step == 0 and len(res.curve) == 1


def test_training_is_deterministic():
    env = LocomotionEnv(TROT, EnvConfig(task="trot"))
    a = train(env, small_config(300), seed=5)
    b = train(env, small_config(300), seed=5)
    assert [vars(p) for p in a.curve] == [vars(p) for p in b.curve]
    for k in a.best_actor:
        assert torch.equal(a.best_actor[k], b.best_actor[k])


def test_scratch_mode_uses_ten_updates():
    env = LocomotionEnv(None, EnvConfig(task="trot", mode="scratch"))
    cfg = TrainConfig(budget=120, mode="scratch", learning_starts=100, eval_every=1000, eval_seeds=(1,),
                      learner=LearnerConfig(batch_size=32, hidden=16))
    res = train(env, cfg, seed=0)
    assert res.learner.updates == 10 * 21
