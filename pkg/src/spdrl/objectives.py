"""Self-predictive dynamics losses and the alternating update step.

One update consumes a minibatch of raw transitions (S, A, S'), builds weak and
strong views of both observation batches, and then:

1. takes one discriminator descent step on the relativistic loss
   ``-log sigmoid(D(z_w) - D(z_s))`` with all latents detached, and
2. takes one joint descent step on

   ``total = lambda_psi * (J_inverse + J_forward) + lambda_adv * J_adv``

   where ``J_adv = -log sigmoid(D(z_s) - D(z_w))`` is computed with the
   discriminator frozen, updating the encoder and both dynamics heads.

The inverse head is fed cross-augmented pairs: ``a_tilde = I(z_w_t, z_s_t1)``
and ``a_bar = I(z_s_t, z_w_t1)``. The inferred actions feed the forward head,
``F(z_s_t, a_tilde)`` against target ``z_s_t1`` and ``F(z_w_t, a_bar)``
against ``z_w_t1``; targets are gradient-detached by default. Both losses use
``-log sigmoid(x) = softplus(-x)`` for numerical stability.

Ablations restrict the joint step: ``discriminator_only`` drops the dynamics
term, ``discriminator_inverse`` drops the forward term, ``dynamics_only``
drops the adversarial term (and skips the discriminator step entirely).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from . import imageops
from .nets import frozen

__all__ = [
    "SpdWeights",
    "SpdLossReport",
    "ABLATION_MODES",
    "encoder_adv_loss",
    "discriminator_loss",
    "inverse_loss",
    "forward_loss",
    "negative_cosine",
    "spd_total",
    "SpdLearner",
]

ABLATION_MODES = ("full", "discriminator_only", "discriminator_inverse", "dynamics_only")

_COSINE_EPS = 1e-8


@dataclass
class SpdWeights:
    lambda_psi: float = 0.1
    lambda_adv: float = 0.001

    def __post_init__(self):
        if self.lambda_psi < 0 or self.lambda_adv < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass
class SpdLossReport:
    """Per-update loss scalars plus the intermediate predictions.

    Components dropped by the active ablation are reported as 0.0, so the
    identities ``j_dynamics = j_inverse + j_forward`` and
    ``j_total = lambda_psi * j_dynamics + lambda_adv * j_encoder_adv`` hold in
    every mode.
    """

    j_encoder_adv: float = 0.0
    j_discriminator: float = 0.0
    j_inverse: float = 0.0
    j_forward: float = 0.0
    j_dynamics: float = 0.0
    j_total: float = 0.0
    ablation: str = "full"
    strong_ops: tuple[str, ...] = ()
    inferred_action_fwd: np.ndarray | None = None  # a_tilde = I(z_w_t, z_s_t1)
    inferred_action_bwd: np.ndarray | None = None  # a_bar = I(z_s_t, z_w_t1)
    predicted_latent_strong: np.ndarray | None = None  # F(z_s_t, a_tilde)
    predicted_latent_weak: np.ndarray | None = None  # F(z_w_t, a_bar)

    SCALAR_FIELDS = (
        "j_encoder_adv",
        "j_discriminator",
        "j_inverse",
        "j_forward",
        "j_dynamics",
        "j_total",
    )

    def scalars(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in self.SCALAR_FIELDS}


def encoder_adv_loss(discriminator, z_w: torch.Tensor, z_s: torch.Tensor) -> torch.Tensor:
    """Mean of -log sigmoid(D(z_s) - D(z_w)); no gradient reaches D."""
    with frozen(discriminator):
        gap = discriminator(z_s) - discriminator(z_w)
    return F.softplus(-gap).mean()


def discriminator_loss(discriminator, z_w: torch.Tensor, z_s: torch.Tensor) -> torch.Tensor:
    """Mean of -log sigmoid(D(z_w) - D(z_s)); latents detached, gradient only into D."""
    gap = discriminator(z_w.detach()) - discriminator(z_s.detach())
    return F.softplus(-gap).mean()


def negative_cosine(pred: torch.Tensor, target: torch.Tensor,
                    eps: float = _COSINE_EPS) -> torch.Tensor:
    """Rowwise -cos(pred, target), averaged; eps guards zero-norm rows."""
    dot = (pred * target).sum(dim=-1)
    denom = pred.norm(dim=-1) * target.norm(dim=-1) + eps
    return -(dot / denom).mean()


def inverse_loss(inverse, z_w_t, z_s_t, z_w_t1, z_s_t1, actions):
    """Mean squared error of both cross-pairing action inferences.

    Returns (loss, a_tilde, a_bar); gradients flow into the inverse head and,
    through the latents, into the encoder.
    """
    a_tilde = inverse(z_w_t, z_s_t1)
    a_bar = inverse(z_s_t, z_w_t1)
    loss = 0.5 * (F.mse_loss(a_tilde, actions) + F.mse_loss(a_bar, actions))
    return loss, a_tilde, a_bar


def forward_loss(forward, z_w_t, z_s_t, a_tilde, a_bar, z_w_t1, z_s_t1,
                 detach_targets: bool = True):
    """Mean negative cosine similarity of both next-latent predictions.

    Returns (loss, pred_strong, pred_weak). Targets are detached by default so
    the prediction path alone carries gradient into the encoder.
    """
    target_s = z_s_t1.detach() if detach_targets else z_s_t1
    target_w = z_w_t1.detach() if detach_targets else z_w_t1
    pred_s = forward(z_s_t, a_tilde)
    pred_w = forward(z_w_t, a_bar)
    loss = 0.5 * (negative_cosine(pred_s, target_s) + negative_cosine(pred_w, target_w))
    return loss, pred_s, pred_w


def spd_total(weights: SpdWeights, j_dynamics, j_encoder_adv):
    return weights.lambda_psi * j_dynamics + weights.lambda_adv * j_encoder_adv


class SpdLearner:
    """Owns the discriminator/dynamics optimizers and runs one update step.

    The encoder optimizer is shared with the RL agent; this class only calls
    `step()` on it after the joint backward pass.
    """

    def __init__(
        self,
        encoder,
        inverse,
        forward,
        discriminator,
        encoder_opt: torch.optim.Optimizer,
        dynamics_opt: torch.optim.Optimizer,
        discriminator_opt: torch.optim.Optimizer,
        weights: SpdWeights,
        weak_spec: imageops.AugmentationSpec,
        strong_spec: imageops.AugmentationSpec,
        ablation: str = "full",
        detach_forward_targets: bool = True,
        detach_inferred_actions: bool = False,
    ):
        if ablation not in ABLATION_MODES:
            raise ValueError(f"unknown ablation {ablation!r}, expected one of {ABLATION_MODES}")
        self.encoder = encoder
        self.inverse = inverse
        self.forward = forward
        self.discriminator = discriminator
        self.encoder_opt = encoder_opt
        self.dynamics_opt = dynamics_opt
        self.discriminator_opt = discriminator_opt
        self.weights = weights
        self.weak_spec = weak_spec
        self.strong_spec = strong_spec
        self.ablation = ablation
        self.detach_forward_targets = detach_forward_targets
        self.detach_inferred_actions = detach_inferred_actions

    def make_views(self, obs: np.ndarray, next_obs: np.ndarray,
                   weak_rng: np.random.Generator, strong_rng: np.random.Generator) -> dict:
        """Two-way views of both observation batches.

        Draw order is fixed: weak(S), weak(S'), then strong(S), strong(S');
        the weak and strong branches consume independent streams.
        """
        obs_w = imageops.augment_weak(obs, self.weak_spec, weak_rng)
        next_w = imageops.augment_weak(next_obs, self.weak_spec, weak_rng)
        obs_s, op_t = imageops.augment_strong(obs, self.strong_spec, strong_rng, return_op=True)
        next_s, op_t1 = imageops.augment_strong(next_obs, self.strong_spec, strong_rng, return_op=True)
        return {
            "obs_weak": obs_w,
            "next_obs_weak": next_w,
            "obs_strong": obs_s,
            "next_obs_strong": next_s,
            "strong_ops": (op_t, op_t1),
        }

    def update_step(self, obs: np.ndarray, actions: np.ndarray, next_obs: np.ndarray,
                    weak_rng: np.random.Generator, strong_rng: np.random.Generator,
                    views: dict | None = None) -> tuple[SpdLossReport, dict]:
        """One alternating update; returns the loss report and the views so the
        RL step can reuse the weak ones."""
        if obs.shape[0] == 0:
            raise ValueError("empty batch")
        if views is None:
            views = self.make_views(obs, next_obs, weak_rng, strong_rng)

        stacked = np.concatenate(
            [views["obs_weak"], views["obs_strong"], views["next_obs_weak"], views["next_obs_strong"]]
        )
        latents = self.encoder(torch.from_numpy(stacked))
        z_w_t, z_s_t, z_w_t1, z_s_t1 = latents.chunk(4)
        act_t = torch.from_numpy(np.asarray(actions, dtype=np.float32))

        report = SpdLossReport(ablation=self.ablation, strong_ops=views["strong_ops"])

        # The adversarial pair covers both time slices of the minibatch.
        z_w_all = torch.cat([z_w_t, z_w_t1])
        z_s_all = torch.cat([z_s_t, z_s_t1])

        if self.ablation != "dynamics_only":
            j_disc = discriminator_loss(self.discriminator, z_w_all, z_s_all)
            self.discriminator_opt.zero_grad(set_to_none=True)
            j_disc.backward()
            self.discriminator_opt.step()
            report.j_discriminator = float(j_disc.detach())

        parts = []
        if self.ablation in ("full", "discriminator_inverse", "dynamics_only"):
            j_inv, a_tilde, a_bar = inverse_loss(self.inverse, z_w_t, z_s_t, z_w_t1, z_s_t1, act_t)
            report.j_inverse = float(j_inv.detach())
            report.inferred_action_fwd = a_tilde.detach().numpy()
            report.inferred_action_bwd = a_bar.detach().numpy()
            j_dyn = j_inv
            if self.ablation != "discriminator_inverse":
                fed_tilde = a_tilde.detach() if self.detach_inferred_actions else a_tilde
                fed_bar = a_bar.detach() if self.detach_inferred_actions else a_bar
                j_fwd, pred_s, pred_w = forward_loss(
                    self.forward, z_w_t, z_s_t, fed_tilde, fed_bar, z_w_t1, z_s_t1,
                    detach_targets=self.detach_forward_targets,
                )
                report.j_forward = float(j_fwd.detach())
                report.predicted_latent_strong = pred_s.detach().numpy()
                report.predicted_latent_weak = pred_w.detach().numpy()
                j_dyn = j_dyn + j_fwd
            report.j_dynamics = float(j_dyn.detach())
            parts.append(self.weights.lambda_psi * j_dyn)

        if self.ablation != "dynamics_only":
            j_adv = encoder_adv_loss(self.discriminator, z_w_all, z_s_all)
            report.j_encoder_adv = float(j_adv.detach())
            parts.append(self.weights.lambda_adv * j_adv)

        j_total = sum(parts)
        self.encoder_opt.zero_grad(set_to_none=True)
        self.dynamics_opt.zero_grad(set_to_none=True)
        j_total.backward()
        self.encoder_opt.step()
        self.dynamics_opt.step()
        report.j_total = float(j_total.detach())
        return report, views
