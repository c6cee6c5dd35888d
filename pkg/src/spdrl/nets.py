"""Function approximators: pixel encoder, actors, twin critic, dynamics heads,
latent discriminator, plus weight init and target-network utilities.

All stochastic initialization draws from named numpy streams, so a master
seed fixes every parameter bit-exactly and checkpoints can round-trip without
touching torch's global RNG.

Gradient routing convention: the encoder output is a plain tensor; callers
that must not update the encoder (the actor path) detach the latent
explicitly. `frozen()` temporarily marks a module's parameters as
non-trainable while still letting gradients flow through to its inputs.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

__all__ = [
    "Encoder",
    "GaussianActor",
    "DeterministicActor",
    "TwinCritic",
    "InverseDynamics",
    "ForwardDynamics",
    "Discriminator",
    "soft_update",
    "frozen",
    "init_weights",
    "conv_output_size",
    "n_params",
]


def conv_output_size(size: int, kernel: int = 3, stride: int = 1) -> int:
    return (size - kernel) // stride + 1


class Encoder(nn.Module):
    """4 conv layers (3x3, 32 channels, stride 2 then 1, no padding, ReLU),
    then a linear head to the latent, layer-normalized and tanh-bounded."""

    def __init__(self, obs_channels: int, image_size: int, latent_dim: int = 50):
        super().__init__()
        self.obs_channels = obs_channels
        self.image_size = image_size
        self.latent_dim = latent_dim
        self.convs = nn.ModuleList(
            [
                nn.Conv2d(obs_channels, 32, 3, stride=2),
                nn.Conv2d(32, 32, 3, stride=1),
                nn.Conv2d(32, 32, 3, stride=1),
                nn.Conv2d(32, 32, 3, stride=1),
            ]
        )
        m = conv_output_size(image_size, stride=2)
        for _ in range(3):
            m = conv_output_size(m, stride=1)
        if m < 1:
            raise ValueError(f"image_size {image_size} too small for the conv stack")
        self.feature_map_size = m
        self.fc = nn.Linear(32 * m * m, latent_dim)
        self.ln = nn.LayerNorm(latent_dim)

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        if obs.shape[-1] != self.image_size or obs.shape[-2] != self.image_size:
            raise ValueError(
                f"expected {self.image_size}x{self.image_size} input, got {tuple(obs.shape)}"
            )
        h = obs
        for conv in self.convs:
            h = F.relu(conv(h))
        h = h.flatten(start_dim=1)
        return torch.tanh(self.ln(self.fc(h)))


def _mlp(in_dim: int, hidden_dim: int, out_dim: int, hidden_layers: int) -> nn.Sequential:
    layers: list[nn.Module] = []
    dim = in_dim
    for _ in range(hidden_layers):
        layers += [nn.Linear(dim, hidden_dim), nn.ReLU()]
        dim = hidden_dim
    layers.append(nn.Linear(dim, out_dim))
    return nn.Sequential(*layers)


class GaussianActor(nn.Module):
    """Diagonal-Gaussian policy with tanh squashing.

    The log-std head is smoothly rescaled into [log_std_min, log_std_max].
    `sample` takes the standard-normal noise explicitly so all stochasticity
    stays in the caller's named streams.
    """

    def __init__(self, latent_dim: int, action_dim: int, hidden_dim: int = 256,
                 log_std_min: float = -10.0, log_std_max: float = 2.0):
        super().__init__()
        self.action_dim = action_dim
        self.log_std_min = log_std_min
        self.log_std_max = log_std_max
        self.trunk = _mlp(latent_dim, hidden_dim, 2 * action_dim, hidden_layers=2)

    def forward(self, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        mu, log_std = self.trunk(z).chunk(2, dim=-1)
        log_std = self.log_std_min + 0.5 * (self.log_std_max - self.log_std_min) * (
            torch.tanh(log_std) + 1.0
        )
        return mu, log_std

    def sample(self, z: torch.Tensor, noise: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Reparameterized sample and its log-probability (tanh-corrected)."""
        mu, log_std = self(z)
        std = log_std.exp()
        u = mu + std * noise
        action = torch.tanh(u)
        gauss_logp = (-0.5 * noise.pow(2) - log_std - 0.5 * np.log(2.0 * np.pi)).sum(-1, keepdim=True)
        # log(1 - tanh(u)^2) = 2 * (log 2 - u - softplus(-2u)), numerically stable
        squash = (2.0 * (np.log(2.0) - u - F.softplus(-2.0 * u))).sum(-1, keepdim=True)
        return action, gauss_logp - squash

    def deterministic(self, z: torch.Tensor) -> torch.Tensor:
        mu, _ = self(z)
        return torch.tanh(mu)


class DeterministicActor(nn.Module):
    """Tanh-bounded deterministic policy head (TD3)."""

    def __init__(self, latent_dim: int, action_dim: int, hidden_dim: int = 256):
        super().__init__()
        self.trunk = _mlp(latent_dim, hidden_dim, action_dim, hidden_layers=2)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.trunk(z))


class TwinCritic(nn.Module):
    """Two independent Q-heads over (latent, action)."""

    def __init__(self, latent_dim: int, action_dim: int, hidden_dim: int = 256):
        super().__init__()
        self.q1 = _mlp(latent_dim + action_dim, hidden_dim, 1, hidden_layers=2)
        self.q2 = _mlp(latent_dim + action_dim, hidden_dim, 1, hidden_layers=2)

    def forward(self, z: torch.Tensor, action: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        za = torch.cat([z, action], dim=-1)
        return self.q1(za), self.q2(za)


class InverseDynamics(nn.Module):
    """Infers the action connecting two consecutive latents; tanh-bounded."""

    def __init__(self, latent_dim: int, action_dim: int, hidden_dim: int = 256,
                 hidden_layers: int = 3):
        super().__init__()
        self.trunk = _mlp(2 * latent_dim, hidden_dim, action_dim, hidden_layers)

    def forward(self, z_t: torch.Tensor, z_t1: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.trunk(torch.cat([z_t, z_t1], dim=-1)))


class ForwardDynamics(nn.Module):
    """Predicts the next latent from (latent, action); tanh-bounded."""

    def __init__(self, latent_dim: int, action_dim: int, hidden_dim: int = 256,
                 hidden_layers: int = 3):
        super().__init__()
        self.trunk = _mlp(latent_dim + action_dim, hidden_dim, latent_dim, hidden_layers)

    def forward(self, z_t: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.trunk(torch.cat([z_t, action], dim=-1)))


class Discriminator(nn.Module):
    """Scalar critic over latents for the relativistic adversarial losses.

    The default output is an unbounded score; `bounded=True` adds a tanh for
    the squashed variant.
    """

    def __init__(self, latent_dim: int, hidden_dim: int = 256, hidden_layers: int = 1,
                 bounded: bool = False):
        super().__init__()
        self.bounded = bounded
        self.trunk = _mlp(latent_dim, hidden_dim, 1, hidden_layers)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        score = self.trunk(z)
        return torch.tanh(score) if self.bounded else score


def soft_update(target: nn.Module, source: nn.Module, tau: float) -> None:
    """target <- tau * source + (1 - tau) * target, elementwise."""
    src = dict(source.named_parameters())
    tgt = dict(target.named_parameters())
    if src.keys() != tgt.keys():
        raise ValueError("soft_update: parameter sets do not match")
    with torch.no_grad():
        for name, p_t in tgt.items():
            p_s = src[name]
            if p_t.shape != p_s.shape:
                raise ValueError(f"soft_update: shape mismatch on {name}")
            p_t.mul_(1.0 - tau).add_(p_s, alpha=tau)


@contextmanager
def frozen(module: nn.Module):
    """Temporarily exclude a module's parameters from gradient accumulation.

    Gradients still flow through the module to its inputs.
    """
    flags = [p.requires_grad for p in module.parameters()]
    for p in module.parameters():
        p.requires_grad_(False)
    try:
        yield module
    finally:
        for p, f in zip(module.parameters(), flags):
            p.requires_grad_(f)


def _orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    a = rng.normal(0.0, 1.0, (max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(q[:rows, :cols], dtype=np.float32)


def init_weights(module: nn.Module, rng: np.random.Generator) -> None:
    """Orthogonal init for linear layers, fan-in scaled Gaussian for convs,
    zero biases; deterministic given the stream state."""
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, nn.Linear):
                w = _orthogonal(rng, m.out_features, m.in_features)
                m.weight.copy_(torch.from_numpy(w))
                m.bias.zero_()
            elif isinstance(m, nn.Conv2d):
                fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
                w = rng.normal(0.0, np.sqrt(2.0 / fan_in), tuple(m.weight.shape))
                m.weight.copy_(torch.from_numpy(w.astype(np.float32)))
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.LayerNorm):
                m.weight.fill_(1.0)
                m.bias.zero_()


def n_params(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
