"""Actor-critic with truncated quantile critics and automatic entropy tuning."""
from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .quantile import quantile_huber_loss

LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0


@dataclass
class LearnerConfig:
    n_critics: int = 2
    n_quantiles: int = 25
    drop_per_critic: int = 2
    hidden: int = 64
    gamma: float = 0.98
    batch_size: int = 256
    buffer_size: int = 100_000
    tau: float = 0.005
    lr: float = 3e-4
    init_std: float = 0.3
    init_alpha: float = 1.0
    target_entropy: float | None = None  # defaults to -(action dim)
    reward_scale: float = 1.0

    def __post_init__(self):
        if not 0 <= self.drop_per_critic < self.n_quantiles:
            raise ValueError("drop_per_critic must be in [0, n_quantiles)")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


class EnsembleLinear(nn.Module):
    """``E`` independent linear layers applied with one batched matmul."""

    def __init__(self, n: int, d_in: int, d_out: int):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(n, d_in, d_out))
        self.bias = nn.Parameter(torch.zeros(n, 1, d_out))
        bound = 1.0 / math.sqrt(d_in)
        nn.init.uniform_(self.weight, -bound, bound)
        nn.init.uniform_(self.bias, -bound, bound)

    def forward(self, x):  # x: (E, B, d_in)
        return torch.baddbmm(self.bias, x, self.weight)


class QuantileCritics(nn.Module):
    """Returns (B, E, M) quantile estimates of the return."""

    def __init__(self, obs_dim: int, act_dim: int, n_critics: int, n_quantiles: int, hidden: int):
        super().__init__()
        self.n = n_critics
        self.l1 = EnsembleLinear(n_critics, obs_dim + act_dim, hidden)
        self.l2 = EnsembleLinear(n_critics, hidden, hidden)
        self.l3 = EnsembleLinear(n_critics, hidden, n_quantiles)

    def forward(self, obs, act):
        x = torch.cat([obs, act], dim=-1).unsqueeze(0).expand(self.n, -1, -1)
        x = torch.relu(self.l1(x))
        x = torch.relu(self.l2(x))
        return self.l3(x).permute(1, 0, 2)


def squashed_gaussian(mu, log_std, noise):
    """``tanh(mu + std * noise)`` and its log-density under the squashed Gaussian."""
    u = mu + log_std.exp() * noise
    logp = (-0.5 * noise ** 2 - log_std - 0.5 * math.log(2 * math.pi)).sum(-1)
    # change of variables for tanh, written in a numerically stable form
    logp = logp - (2.0 * (math.log(2.0) - u - nn.functional.softplus(-2.0 * u))).sum(-1)
    return torch.tanh(u), logp


class SquashedGaussianActor(nn.Module):
    """tanh-squashed Gaussian; the mean head starts at zero so the initial mean action is 0."""

    def __init__(self, obs_dim: int, act_dim: int, hidden: int, init_std: float):
        super().__init__()
        self.body = nn.Sequential(nn.Linear(obs_dim, hidden), nn.ReLU(),
                                  nn.Linear(hidden, hidden), nn.ReLU())
        self.mu = nn.Linear(hidden, act_dim)
        self.log_std = nn.Linear(hidden, act_dim)
        for head, b in ((self.mu, 0.0), (self.log_std, math.log(init_std))):
            nn.init.zeros_(head.weight)
            nn.init.constant_(head.bias, b)

    def dist_params(self, obs):
        h = self.body(obs)
        log_std = self.log_std(h).clamp(LOG_STD_MIN, LOG_STD_MAX)
        return self.mu(h), log_std

    def sample(self, obs, noise=None):
        """Reparameterised action in (-1, 1) and its log-density."""
        mu, log_std = self.dist_params(obs)
        if noise is None:
            noise = torch.randn_like(mu)
        return squashed_gaussian(mu, log_std, noise)

    def mean_action(self, obs):
        mu, _ = self.dist_params(obs)
        return torch.tanh(mu)


class NonFiniteLoss(FloatingPointError):
    def __init__(self, what: str, diagnostics: dict):
        super().__init__(f"non-finite {what}")
        self.diagnostics = diagnostics


def truncate_atoms(quantiles: torch.Tensor, drop_per_critic: int) -> torch.Tensor:
    """Pool (B, E, M) atoms, sort them and drop the ``E * d`` largest."""
    B, E, M = quantiles.shape
    pooled, _ = torch.sort(quantiles.reshape(B, E * M), dim=1)
    keep = E * (M - drop_per_critic)
    return pooled[:, :keep]


class TQCLearner:
    def __init__(self, obs_dim: int, act_dim: int, config: LearnerConfig = LearnerConfig(),
                 seed: int = 0):
        self.config = config
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.gen = torch.Generator().manual_seed(seed)
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.actor = SquashedGaussianActor(obs_dim, act_dim, config.hidden, config.init_std)
            self.critics = QuantileCritics(obs_dim, act_dim, config.n_critics, config.n_quantiles,
                                           config.hidden)
        self.critics_target = copy.deepcopy(self.critics)
        for p in self.critics_target.parameters():
            p.requires_grad_(False)
        self.log_alpha = torch.tensor([math.log(config.init_alpha)], requires_grad=True)
        self.target_entropy = (-float(act_dim) if config.target_entropy is None
                               else float(config.target_entropy))
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=config.lr)
        self.critic_opt = torch.optim.Adam(self.critics.parameters(), lr=config.lr)
        self.alpha_opt = torch.optim.Adam([self.log_alpha], lr=config.lr)
        self.updates = 0

    @property
    def alpha(self) -> float:
        return float(self.log_alpha.detach().exp())

    def _noise(self, shape):
        return torch.randn(shape, generator=self.gen)

    # -- acting -------------------------------------------------------------
    @torch.no_grad()
    def act(self, obs: np.ndarray, noise: np.ndarray | None = None) -> np.ndarray:
        """Mean action, or the squashed sample for a given standard-normal ``noise``."""
        o = torch.as_tensor(obs, dtype=torch.float32).unsqueeze(0)
        if noise is None:
            a = self.actor.mean_action(o)
        else:
            a, _ = self.actor.sample(o, torch.as_tensor(noise, dtype=torch.float32).unsqueeze(0))
        return a.squeeze(0).numpy().astype(float)

    # -- updates ------------------------------------------------------------
    def _batch(self, batch):
        obs, act, rew, next_obs, done = (torch.as_tensor(np.asarray(x), dtype=torch.float32) for x in batch)
        return obs, act, rew * self.config.reward_scale, next_obs, done

    def critic_target(self, rew, next_obs, done) -> torch.Tensor:
        cfg = self.config
        with torch.no_grad():
            a2, logp2 = self.actor.sample(next_obs, self._noise((next_obs.shape[0], self.act_dim)))
            z = truncate_atoms(self.critics_target(next_obs, a2), cfg.drop_per_critic)
            z = z - self.alpha * logp2[:, None]
            return rew[:, None] + cfg.gamma * (1.0 - done[:, None]) * z

    def critic_update(self, batch) -> float:
        obs, act, rew, next_obs, done = self._batch(batch)
        target = self.critic_target(rew, next_obs, done)
        current = self.critics(obs, act)
        loss = quantile_huber_loss(current, target)
        if not torch.isfinite(loss):
            raise NonFiniteLoss("critic loss", self.diagnostics(obs, act, rew, target))
        self.critic_opt.zero_grad()
        loss.backward()
        self.critic_opt.step()
        self._soft_update()
        return float(loss.detach())

    def actor_loss(self, obs):
        a, logp = self.actor.sample(obs, self._noise((obs.shape[0], self.act_dim)))
        q = truncate_atoms(self.critics(obs, a), self.config.drop_per_critic).mean(dim=1)
        return (self.alpha * logp - q).mean(), logp

    def actor_update(self, batch) -> tuple[float, float]:
        obs = self._batch(batch)[0]
        # the critics only pass the value gradient through to the actions
        self.critics.requires_grad_(False)
        try:
            loss, logp = self.actor_loss(obs)
            if not torch.isfinite(loss):
                raise NonFiniteLoss("actor loss", self.diagnostics(obs))
            self.actor_opt.zero_grad()
            loss.backward()
        finally:
            self.critics.requires_grad_(True)
        self.actor_opt.step()
        alpha_loss = -(self.log_alpha * (logp.detach() + self.target_entropy)).mean()
        self.alpha_opt.zero_grad()
        alpha_loss.backward()
        self.alpha_opt.step()
        return float(loss.detach()), float(alpha_loss.detach())

    def update(self, batch) -> dict:
        c = self.critic_update(batch)
        a, _ = self.actor_update(batch)
        self.updates += 1
        return {"critic_loss": c, "actor_loss": a, "alpha": self.alpha}

    @torch.no_grad()
    def _soft_update(self):
        t = self.config.tau
        for p, pt in zip(self.critics.parameters(), self.critics_target.parameters()):
            pt.mul_(1.0 - t).add_(p, alpha=t)

    def diagnostics(self, obs, act=None, rew=None, target=None) -> dict:
        d = {"updates": self.updates, "alpha": self.alpha,
             "obs_finite": bool(torch.isfinite(obs).all())}
        if act is not None:
            d["act_finite"] = bool(torch.isfinite(act).all())
        if rew is not None:
            d["reward_range"] = [float(rew.min()), float(rew.max())]
        if target is not None:
            d["target_finite"] = bool(torch.isfinite(target).all())
        return d

    # -- persistence ---------------------------------------------------------
    def state_dict(self) -> dict:
        return {
            "actor": self.actor.state_dict(),
            "critics": self.critics.state_dict(),
            "critics_target": self.critics_target.state_dict(),
            "log_alpha": self.log_alpha.detach().clone(),
            "actor_opt": self.actor_opt.state_dict(),
            "critic_opt": self.critic_opt.state_dict(),
            "alpha_opt": self.alpha_opt.state_dict(),
            "updates": self.updates,
            "gen": self.gen.get_state(),
        }

    def load_state_dict(self, d: dict):
        self.actor.load_state_dict(d["actor"])
        self.critics.load_state_dict(d["critics"])
        self.critics_target.load_state_dict(d["critics_target"])
        with torch.no_grad():
            self.log_alpha.copy_(d["log_alpha"])
        self.actor_opt.load_state_dict(d["actor_opt"])
        self.critic_opt.load_state_dict(d["critic_opt"])
        self.alpha_opt.load_state_dict(d["alpha_opt"])
        self.updates = int(d["updates"])
        self.gen.set_state(d["gen"])
