"""Off-policy actor-critic agents on weak-augmented latents, plus the replay buffer.

Both agents share the encoder-routing contract: the critic loss backpropagates
into the encoder (and steps the shared encoder optimizer), while the actor
consumes detached latents and can never move encoder weights. Observations are
stored in the buffer un-augmented; augmentation happens at sampling time in the
training loop.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F

from .nets import (
    DeterministicActor,
    GaussianActor,
    TwinCritic,
    frozen,
    soft_update,
)

__all__ = ["ReplayBuffer", "SacAgent", "Td3Agent"]


class ReplayBuffer:
    """Preallocated FIFO ring of (s, a, r, s', done) transitions.

    Image observations are quantized to uint8 on push (and rescaled to [0, 1]
    float32 on sample) to keep memory bounded; `store_uint8=False` keeps raw
    float32 storage for non-image payloads.
    """

    def __init__(self, capacity: int, obs_shape: tuple[int, ...], action_dim: int,
                 store_uint8: bool = True):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.store_uint8 = store_uint8
        obs_dtype = np.uint8 if store_uint8 else np.float32
        self._obs = np.zeros((capacity, *obs_shape), dtype=obs_dtype)
        self._next_obs = np.zeros((capacity, *obs_shape), dtype=obs_dtype)
        self._actions = np.zeros((capacity, action_dim), dtype=np.float32)
        self._rewards = np.zeros(capacity, dtype=np.float32)
        self._dones = np.zeros(capacity, dtype=np.float32)
        self._idx = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def _encode_obs(self, obs: np.ndarray) -> np.ndarray:
        if self.store_uint8:
            return np.rint(np.clip(obs, 0.0, 1.0) * 255.0).astype(np.uint8)
        return np.asarray(obs, dtype=np.float32)

    def _decode_obs(self, stored: np.ndarray) -> np.ndarray:
        if self.store_uint8:
            return stored.astype(np.float32) / 255.0
        return stored.copy()

    def push(self, obs, action, reward, next_obs, done) -> None:
        i = self._idx
        self._obs[i] = self._encode_obs(np.asarray(obs))
        self._next_obs[i] = self._encode_obs(np.asarray(next_obs))
        self._actions[i] = np.asarray(action, dtype=np.float32)
        self._rewards[i] = float(reward)
        self._dones[i] = 1.0 if done else 0.0
        self._idx = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        """Uniform sample with replacement over current contents."""
        if self._size == 0:
            raise RuntimeError("cannot sample from an empty replay buffer")
        if n < 1:
            raise ValueError(f"sample size must be >= 1, got {n}")
        idx = rng.integers(0, self._size, size=n)
        return {
            "obs": self._decode_obs(self._obs[idx]),
            "actions": self._actions[idx].copy(),
            "rewards": self._rewards[idx].copy(),
            "next_obs": self._decode_obs(self._next_obs[idx]),
            "dones": self._dones[idx].copy(),
        }

    # -- checkpointing -------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        n = self._size
        return {
            "obs": self._obs[:n].copy(),
            "next_obs": self._next_obs[:n].copy(),
            "actions": self._actions[:n].copy(),
            "rewards": self._rewards[:n].copy(),
            "dones": self._dones[:n].copy(),
            "cursor": np.array([self._idx, self._size], dtype=np.int64),
        }

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        idx, size = (int(v) for v in arrays["cursor"])
        if size > self.capacity:
            raise ValueError("checkpointed buffer larger than configured capacity")
        self._obs[:size] = arrays["obs"]
        self._next_obs[:size] = arrays["next_obs"]
        self._actions[:size] = arrays["actions"]
        self._rewards[:size] = arrays["rewards"]
        self._dones[:size] = arrays["dones"]
        self._idx = idx
        self._size = size


def _to_tensor(x: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32))


class SacAgent:
    """Soft actor-critic over latents, with a learnable temperature.

    Update order per call: critic (+ encoder), then actor and temperature on
    detached latents at `actor_update_freq`, then target soft-update at
    `critic_target_update_freq`.
    """

    def __init__(self, encoder, actor: GaussianActor, critic: TwinCritic,
                 critic_target: TwinCritic, encoder_opt: torch.optim.Optimizer, *,
                 action_dim: int, discount: float = 0.99, tau: float = 0.01,
                 actor_lr: float = 1e-3, critic_lr: float = 1e-3,
                 init_temperature: float = 0.1, actor_update_freq: int = 2,
                 critic_target_update_freq: int = 2, target_entropy: float | None = None):
        self.encoder = encoder
        self.actor = actor
        self.critic = critic
        self.critic_target = critic_target
        self.encoder_opt = encoder_opt
        self.discount = discount
        self.tau = tau
        self.actor_update_freq = actor_update_freq
        self.critic_target_update_freq = critic_target_update_freq
        self.action_dim = action_dim
        self.target_entropy = -float(action_dim) if target_entropy is None else target_entropy

        self.critic_target.load_state_dict(self.critic.state_dict())
        for p in self.critic_target.parameters():
            p.requires_grad_(False)

        self.log_alpha = torch.tensor(math.log(init_temperature), dtype=torch.float32,
                                      requires_grad=True)
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=actor_lr)
        self.critic_opt = torch.optim.Adam(self.critic.parameters(), lr=critic_lr)
        self.alpha_opt = torch.optim.Adam([self.log_alpha], lr=actor_lr)
        self.updates = 0

    @property
    def alpha(self) -> float:
        return float(self.log_alpha.detach().exp())

    def critic_regression_target(self, next_obs: torch.Tensor, rewards: torch.Tensor,
                                 dones: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
        """Soft Bellman target r + gamma * (1 - done) * (min Q'(z', a') - alpha log pi)."""
        with torch.no_grad():
            z1 = self.encoder(next_obs)
            a1, logp1 = self.actor.sample(z1, noise)
            q1_t, q2_t = self.critic_target(z1, a1)
            soft_v = torch.min(q1_t, q2_t) - self.log_alpha.exp() * logp1
            return rewards + self.discount * (1.0 - dones) * soft_v

    def update(self, obs: np.ndarray, actions: np.ndarray, rewards: np.ndarray,
               next_obs: np.ndarray, dones: np.ndarray,
               rng: np.random.Generator) -> dict[str, float]:
        obs_t = _to_tensor(obs)
        next_t = _to_tensor(next_obs)
        act_t = _to_tensor(actions)
        rew_t = _to_tensor(rewards).unsqueeze(-1)
        done_t = _to_tensor(dones).unsqueeze(-1)
        b = obs_t.shape[0]

        noise = _to_tensor(rng.standard_normal((b, self.action_dim)))
        target = self.critic_regression_target(next_t, rew_t, done_t, noise)

        z = self.encoder(obs_t)
        q1, q2 = self.critic(z, act_t)
        critic_loss = F.mse_loss(q1, target) + F.mse_loss(q2, target)
        self.critic_opt.zero_grad(set_to_none=True)
        self.encoder_opt.zero_grad(set_to_none=True)
        critic_loss.backward()
        self.critic_opt.step()
        self.encoder_opt.step()

        losses = {
            "critic_loss": float(critic_loss.detach()),
            "actor_loss": float("nan"),
            "alpha_loss": float("nan"),
            "alpha": self.alpha,
        }

        if self.updates % self.actor_update_freq == 0:
            with torch.no_grad():
                z_pi = self.encoder(obs_t)
            noise_pi = _to_tensor(rng.standard_normal((b, self.action_dim)))
            a_pi, logp_pi = self.actor.sample(z_pi, noise_pi)
            with frozen(self.critic):
                q1_pi, q2_pi = self.critic(z_pi, a_pi)
            actor_loss = (self.log_alpha.exp().detach() * logp_pi - torch.min(q1_pi, q2_pi)).mean()
            self.actor_opt.zero_grad(set_to_none=True)
            actor_loss.backward()
            self.actor_opt.step()

            alpha_loss = (self.log_alpha.exp() * (-logp_pi - self.target_entropy).detach()).mean()
            self.alpha_opt.zero_grad(set_to_none=True)
            alpha_loss.backward()
            self.alpha_opt.step()
            losses["actor_loss"] = float(actor_loss.detach())
            losses["alpha_loss"] = float(alpha_loss.detach())
            losses["alpha"] = self.alpha

        if self.updates % self.critic_target_update_freq == 0:
            soft_update(self.critic_target, self.critic, self.tau)

        self.updates += 1
        return losses

    def act(self, obs: np.ndarray, deterministic: bool,
            rng: np.random.Generator | None = None) -> np.ndarray:
        """Policy action for one un-augmented observation."""
        with torch.no_grad():
            z = self.encoder(_to_tensor(obs[None]))
            if deterministic:
                a = self.actor.deterministic(z)
            else:
                noise = _to_tensor(rng.standard_normal((1, self.action_dim)))
                a, _ = self.actor.sample(z, noise)
        return np.clip(a.numpy()[0], -1.0, 1.0)


class Td3Agent:
    """Twin-delayed deterministic policy gradient over latents.

    Same encoder routing as SAC: the critic step updates the encoder, the
    (delayed) actor step works on detached latents.
    """

    def __init__(self, encoder, actor: DeterministicActor, actor_target: DeterministicActor,
                 critic: TwinCritic, critic_target: TwinCritic,
                 encoder_opt: torch.optim.Optimizer, *, action_dim: int,
                 discount: float = 0.99, tau: float = 0.01, actor_lr: float = 1e-3,
                 critic_lr: float = 1e-3, expl_noise: float = 0.1,
                 target_noise: float = 0.2, noise_clip: float = 0.5, policy_delay: int = 2):
        self.encoder = encoder
        self.actor = actor
        self.actor_target = actor_target
        self.critic = critic
        self.critic_target = critic_target
        self.encoder_opt = encoder_opt
        self.action_dim = action_dim
        self.discount = discount
        self.tau = tau
        self.expl_noise = expl_noise
        self.target_noise = target_noise
        self.noise_clip = noise_clip
        self.policy_delay = policy_delay

        self.actor_target.load_state_dict(self.actor.state_dict())
        self.critic_target.load_state_dict(self.critic.state_dict())
        for module in (self.actor_target, self.critic_target):
            for p in module.parameters():
                p.requires_grad_(False)
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=actor_lr)
        self.critic_opt = torch.optim.Adam(self.critic.parameters(), lr=critic_lr)
        self.updates = 0

    def update(self, obs: np.ndarray, actions: np.ndarray, rewards: np.ndarray,
               next_obs: np.ndarray, dones: np.ndarray,
               rng: np.random.Generator) -> dict[str, float]:
        obs_t = _to_tensor(obs)
        next_t = _to_tensor(next_obs)
        act_t = _to_tensor(actions)
        rew_t = _to_tensor(rewards).unsqueeze(-1)
        done_t = _to_tensor(dones).unsqueeze(-1)
        b = obs_t.shape[0]

        with torch.no_grad():
            z1 = self.encoder(next_t)
            raw_noise = _to_tensor(rng.standard_normal((b, self.action_dim))) * self.target_noise
            noise = raw_noise.clamp(-self.noise_clip, self.noise_clip)
            a1 = (self.actor_target(z1) + noise).clamp(-1.0, 1.0)
            q1_t, q2_t = self.critic_target(z1, a1)
            target = rew_t + self.discount * (1.0 - done_t) * torch.min(q1_t, q2_t)

        z = self.encoder(obs_t)
        q1, q2 = self.critic(z, act_t)
        critic_loss = F.mse_loss(q1, target) + F.mse_loss(q2, target)
        self.critic_opt.zero_grad(set_to_none=True)
        self.encoder_opt.zero_grad(set_to_none=True)
        critic_loss.backward()
        self.critic_opt.step()
        self.encoder_opt.step()

        losses = {
            "critic_loss": float(critic_loss.detach()),
            "actor_loss": float("nan"),
            "alpha_loss": float("nan"),
            "alpha": float("nan"),
        }

        if self.updates % self.policy_delay == 0:
            with torch.no_grad():
                z_pi = self.encoder(obs_t)
            with frozen(self.critic):
                q1_pi, _ = self.critic(z_pi, self.actor(z_pi))
            actor_loss = -q1_pi.mean()
            self.actor_opt.zero_grad(set_to_none=True)
            actor_loss.backward()
            self.actor_opt.step()
            soft_update(self.critic_target, self.critic, self.tau)
            soft_update(self.actor_target, self.actor, self.tau)
            losses["actor_loss"] = float(actor_loss.detach())

        self.updates += 1
        return losses

    def act(self, obs: np.ndarray, deterministic: bool,
            rng: np.random.Generator | None = None) -> np.ndarray:
        with torch.no_grad():
            z = self.encoder(_to_tensor(obs[None]))
            a = self.actor(z).numpy()[0]
        if not deterministic:
            a = a + rng.standard_normal(self.action_dim) * self.expl_noise
        return np.clip(a.astype(np.float32), -1.0, 1.0)
