"""Self-predictive dynamics for pixel-based reinforcement learning.

The package trains an off-policy actor-critic agent (SAC or TD3) from pixels
while shaping its encoder with three self-supervised signals computed across
weak/strong augmented views of each minibatch: a relativistic latent
discriminator, cross-view inverse dynamics, and forward dynamics driven by the
inferred actions.
"""

from .config import TrainConfig, desk_config, full_config, micro_config
from .imageops import AugmentationSpec
from .objectives import SpdLearner, SpdLossReport, SpdWeights
from .pixelenv import EnvConfig, PointReachEnv
from .trainer import evaluate, train

__all__ = [
    "TrainConfig",
    "EnvConfig",
    "AugmentationSpec",
    "SpdWeights",
    "SpdLossReport",
    "SpdLearner",
    "PointReachEnv",
    "train",
    "evaluate",
    "desk_config",
    "full_config",
    "micro_config",
]

__version__ = "0.1.0"
