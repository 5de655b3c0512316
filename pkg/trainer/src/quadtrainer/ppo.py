"""Clipped-surrogate PPO with GAE for the bridged simulator environments.

Hyperparameter defaults: clip 0.2, GAE lambda 0.95, discount 0.95,
learning rate 3e-4, 4 epochs over the rollout in 4 minibatches.  The
trained actor (with its observation normalizer) exports to the
simulator's policy-weights JSON for replay.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn


@dataclass
class PPOConfig:
    gamma: float = 0.95
    gae_lambda: float = 0.95
    clip: float = 0.2
    lr: float = 3e-4
    epochs: int = 4
    minibatches: int = 4
    rollout_steps: int = 64
    entropy_coef: float = 1e-3
    value_coef: float = 0.5
    max_grad_norm: float = 1.0
    hidden: tuple = (64, 64)
    init_log_std: float = -0.7
    seed: int = 0


class RunningNorm:
    """Streaming mean/variance for observation normalization."""

    def __init__(self, dim: int, eps: float = 1e-8):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = eps
        self.eps = eps

    def update(self, batch: np.ndarray) -> None:
        batch = np.asarray(batch, dtype=float).reshape(-1, self.mean.shape[0])
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        b_count = batch.shape[0]
        delta = b_mean - self.mean
        total = self.count + b_count
        self.mean += delta * b_count / total
        m_a = self.var * self.count
        m_b = b_var * b_count
        self.var = (m_a + m_b + delta**2 * self.count * b_count / total) / total
        self.count = total

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var + self.eps)

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        return (obs - self.mean) / self.std


class ActorCritic(nn.Module):
    def __init__(self, obs_dim: int, act_dim: int, hidden=(64, 64),
                 init_log_std: float = -0.7):
        super().__init__()

        def mlp(out_dim, out_gain):
            layers = []
            prev = obs_dim
            for h in hidden:
                lin = nn.Linear(prev, h)
                nn.init.orthogonal_(lin.weight, np.sqrt(2))
                nn.init.zeros_(lin.bias)
                layers += [lin, nn.Tanh()]
                prev = h
            out = nn.Linear(prev, out_dim)
            nn.init.orthogonal_(out.weight, out_gain)
            nn.init.zeros_(out.bias)
            layers.append(out)
            return nn.Sequential(*layers)

        self.actor = mlp(act_dim, 0.01)
        self.critic = mlp(1, 1.0)
        self.log_std = nn.Parameter(torch.full((act_dim,), float(init_log_std)))

    def value(self, obs: torch.Tensor) -> torch.Tensor:
        return self.critic(obs).squeeze(-1)

    def dist(self, obs: torch.Tensor) -> torch.distributions.Normal:
        mean = self.actor(obs)
        return torch.distributions.Normal(mean, self.log_std.exp())


@dataclass
class TrainResult:
    reward_log: list = field(default_factory=list)
    env_steps: int = 0


class PPOTrainer:
    """Drives a vector-env client (reset/step) and learns an actor-critic."""

    def __init__(self, client, config: PPOConfig = None):
        self.client = client
        self.cfg = config or PPOConfig()
        torch.manual_seed(self.cfg.seed)
        np.random.seed(self.cfg.seed)
        self.net = ActorCritic(client.obs_dim, client.act_dim,
                               hidden=self.cfg.hidden,
                               init_log_std=self.cfg.init_log_std)
        self.optimizer = torch.optim.Adam(self.net.parameters(), lr=self.cfg.lr)
        self.norm = RunningNorm(client.obs_dim)
        self.result = TrainResult()
        self._obs = None

    def _policy_step(self, obs_raw: np.ndarray):
        obs = torch.from_numpy(self.norm.normalize(obs_raw).astype(np.float32))
        with torch.no_grad():
            dist = self.net.dist(obs)
            action = dist.sample()
            logp = dist.log_prob(action).sum(-1)
            value = self.net.value(obs)
        return obs, action, logp, value

    def collect_rollout(self):
        cfg = self.cfg
        n, t = self.client.n_envs, cfg.rollout_steps
        if self._obs is None:
            self._obs = self.client.reset()
        obs_buf = torch.zeros((t, n, self.client.obs_dim), dtype=torch.float32)
        act_buf = torch.zeros((t, n, self.client.act_dim), dtype=torch.float32)
        logp_buf = torch.zeros((t, n), dtype=torch.float32)
        val_buf = torch.zeros((t + 1, n), dtype=torch.float32)
        rew_buf = np.zeros((t, n))
        done_buf = np.zeros((t, n))

        raw = np.zeros((t, n, self.client.obs_dim), dtype=np.float32)
        for k in range(t):
            raw[k] = self._obs
            obs, action, logp, value = self._policy_step(self._obs)
            obs_buf[k] = obs
            act_buf[k] = action
            logp_buf[k] = logp
            val_buf[k] = value
            next_obs, reward, done, _ = self.client.step(
                np.clip(action.numpy(), -1.0, 1.0).astype(np.float32)
            )
            rew_buf[k] = reward
            done_buf[k] = done
            self._obs = next_obs
        self.norm.update(raw.reshape(-1, self.client.obs_dim))
        with torch.no_grad():
            final = torch.from_numpy(
                self.norm.normalize(self._obs).astype(np.float32))
            val_buf[t] = self.net.value(final)
        self.result.env_steps += t * n
        self.result.reward_log.append(float(rew_buf.mean()))
        return obs_buf, act_buf, logp_buf, val_buf, rew_buf, done_buf

    def compute_gae(self, val_buf, rew_buf, done_buf):
        cfg = self.cfg
        t, n = rew_buf.shape
        adv = np.zeros((t, n))
        values = val_buf.numpy()
        last = np.zeros(n)
        for k in reversed(range(t)):
            nonterminal = 1.0 - done_buf[k]
            delta = rew_buf[k] + cfg.gamma * values[k + 1] * nonterminal - values[k]
            last = delta + cfg.gamma * cfg.gae_lambda * nonterminal * last
            adv[k] = last
        returns = adv + values[:-1]
        return (torch.from_numpy(adv.astype(np.float32)),
                torch.from_numpy(returns.astype(np.float32)))

    def update(self, obs, act, logp_old, adv, returns):
        cfg = self.cfg
        batch = obs.shape[0] * obs.shape[1]
        obs = obs.reshape(batch, -1)
        act = act.reshape(batch, -1)
        logp_old = logp_old.reshape(batch)
        adv = adv.reshape(batch)
        returns = returns.reshape(batch)
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

        mb = batch // cfg.minibatches
        for _ in range(cfg.epochs):
            perm = torch.randperm(batch)
            for start in range(0, batch, mb):
                idx = perm[start:start + mb]
                dist = self.net.dist(obs[idx])
                logp = dist.log_prob(act[idx]).sum(-1)
                ratio = (logp - logp_old[idx]).exp()
                surr1 = ratio * adv[idx]
                surr2 = torch.clamp(ratio, 1 - cfg.clip, 1 + cfg.clip) * adv[idx]
                policy_loss = -torch.min(surr1, surr2).mean()
                value = self.net.value(obs[idx])
                value_loss = (value - returns[idx]).pow(2).mean()
                entropy = dist.entropy().sum(-1).mean()
                loss = (policy_loss + cfg.value_coef * value_loss
                        - cfg.entropy_coef * entropy)
                self.optimizer.zero_grad()
                loss.backward()
                nn.utils.clip_grad_norm_(self.net.parameters(), cfg.max_grad_norm)
                self.optimizer.step()

    def train(self, total_env_steps: int, log_every: int = 10, quiet: bool = False):
        iteration = 0
        while self.result.env_steps < total_env_steps:
            obs, act, logp, val, rew, done = self.collect_rollout()
            adv, returns = self.compute_gae(val, rew, done)
            self.update(obs, act, logp, adv, returns)
            iteration += 1
            if not quiet and iteration % log_every == 0:
                print(f"iter {iteration:5d}  env steps {self.result.env_steps:9d}  "
                      f"mean step reward {self.result.reward_log[-1]:.4f}", flush=True)
        return self.result

    def act_deterministic(self, obs_raw: np.ndarray) -> np.ndarray:
        obs = torch.from_numpy(self.norm.normalize(obs_raw).astype(np.float32))
        with torch.no_grad():
            mean = self.net.actor(obs)
        return np.clip(mean.numpy(), -1.0, 1.0).astype(np.float32)

    def export_weights(self, path) -> None:
        """Write the actor in the simulator's policy-weights JSON format."""
        layers = []
        for module in self.net.actor:
            if isinstance(module, nn.Linear):
                w = module.weight.detach().numpy().astype(float)
                b = module.bias.detach().numpy().astype(float)
                layers.append({
                    "rows": int(w.shape[0]),
                    "cols": int(w.shape[1]),
                    "w": w.flatten().tolist(),
                    "b": b.tolist(),
                })
        doc = {
            "obs_dim": int(self.client.obs_dim),
            "act_dim": int(self.client.act_dim),
            "activation": "tanh",
            "layers": layers,
            "obs_mean": self.norm.mean.tolist(),
            "obs_std": self.norm.std.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)
