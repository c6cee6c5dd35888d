"""Training loop and evaluation protocols.

One true environment step = `action_repeat` raw physics steps. The loop per
true step: interact, store the un-augmented transition, sample one minibatch,
run the self-predictive update (which produces the weak views), then the RL
update on those same weak views. Evaluation uses a deterministic policy on
un-augmented observations in freshly seeded environments.

A run directory holds the resolved config manifest, a metrics CSV, and
checkpoints. Given (config, seed), every metrics value except the wallclock
column is reproduced bit-exactly, and resuming from a mid-run checkpoint
continues the uninterrupted trajectory bit-exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from . import imageops, rng as rng_mod
from .agent import ReplayBuffer, SacAgent, Td3Agent
from .checkpoint import (
    load_checkpoint,
    load_module_arrays,
    load_optimizer_arrays,
    module_arrays,
    optimizer_arrays,
    save_checkpoint,
)
from .config import TrainConfig, canonical_text, config_hash, parse_text
from .nets import (
    DeterministicActor,
    Discriminator,
    Encoder,
    ForwardDynamics,
    GaussianActor,
    InverseDynamics,
    TwinCritic,
    init_weights,
)
from .objectives import SpdLearner, SpdWeights
from .pixelenv import (
    EnvConfig,
    PointReachEnv,
    make_background,
    render,
    sample_states,
)

__all__ = [
    "METRICS_HEADER",
    "MetricsWriter",
    "read_metrics",
    "final_eval_mean",
    "build_models",
    "Trainer",
    "train",
    "evaluate",
    "RandomPolicy",
    "random_policy_baseline",
    "PolicySnapshot",
    "load_policy",
    "generalization_eval",
    "representation_distance",
    "mean_latent_distance",
    "encode_batch",
    "collect_labeled_observations",
    "export_latents",
    "sweep",
    "PAPER_SWEEP_PSI",
    "PAPER_SWEEP_ADV",
    "RUN_ROOT_ENV_VAR",
]

RUN_ROOT_ENV_VAR = "SPDRL_RUN_ROOT"

METRICS_HEADER = [
    "event",
    "raw_step",
    "true_step",
    "episode",
    "episode_return",
    "eval_return_mean",
    "eval_return_std",
    "j_encoder_adv",
    "j_discriminator",
    "j_inverse",
    "j_forward",
    "j_dynamics",
    "j_total",
    "critic_loss",
    "actor_loss",
    "alpha_loss",
    "alpha",
    "wallclock",
]

PAPER_SWEEP_PSI = (1e-3, 1e-2, 1e-1, 1.0)
PAPER_SWEEP_ADV = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)

DEFAULT_DISTANCE_PAIRINGS = (
    ("default", "simple_distractor"),
    ("default", "textured_video"),
    ("simple_distractor", "textured_video"),
)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    v = float(value)
    if math.isnan(v):
        return ""
    return f"{v:.10g}"


class MetricsWriter:
    """Appends rows with a fixed header; wallclock is the only wall-time field."""

    def __init__(self, path, resume: bool = False):
        self.path = Path(path)
        new_file = not (resume and self.path.exists())
        self._fh = open(self.path, "a" if resume else "w", newline="")
        self._writer = csv.writer(self._fh)
        if new_file:
            self._writer.writerow(METRICS_HEADER)
            self._fh.flush()

    def write(self, **fields) -> None:
        unknown = set(fields) - set(METRICS_HEADER)
        if unknown:
            raise ValueError(f"unknown metrics fields: {sorted(unknown)}")
        self._writer.writerow([_fmt(fields.get(name)) for name in METRICS_HEADER])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def read_metrics(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def final_eval_mean(run_dir) -> float:
    rows = [r for r in read_metrics(Path(run_dir) / "metrics.csv") if r["event"] == "eval"]
    if not rows:
        raise ValueError(f"no evaluation rows in {run_dir}")
    return float(rows[-1]["eval_return_mean"])


# ---------------------------------------------------------------------------
# Model assembly
# ---------------------------------------------------------------------------


def build_models(cfg: TrainConfig) -> dict[str, torch.nn.Module]:
    """Construct and deterministically initialize every module the config needs.

    Each module draws its weights from its own named stream, so initialization
    does not depend on construction order.
    """
    channels = 3 * cfg.env.frame_stack
    latent = cfg.agent.latent_dim
    hidden = cfg.agent.hidden_dim
    action_dim = PointReachEnv.action_dim

    modules: dict[str, torch.nn.Module] = {}
    encoder = Encoder(channels, cfg.env.image_size, latent)
    init_weights(encoder, rng_mod.stream(cfg.seed, "init.encoder"))
    modules["encoder"] = encoder

    critic = TwinCritic(latent, action_dim, hidden)
    init_weights(critic, rng_mod.stream(cfg.seed, "init.critic"))
    modules["critic"] = critic
    modules["critic_target"] = TwinCritic(latent, action_dim, hidden)

    if cfg.agent.kind == "sac":
        actor = GaussianActor(latent, action_dim, hidden,
                              cfg.agent.log_std_min, cfg.agent.log_std_max)
        init_weights(actor, rng_mod.stream(cfg.seed, "init.actor"))
        modules["actor"] = actor
    else:
        actor = DeterministicActor(latent, action_dim, hidden)
        init_weights(actor, rng_mod.stream(cfg.seed, "init.actor"))
        modules["actor"] = actor
        modules["actor_target"] = DeterministicActor(latent, action_dim, hidden)

    if cfg.spd.enabled:
        layers = cfg.spd.dynamics_hidden_layers
        inverse = InverseDynamics(latent, action_dim, hidden, layers)
        init_weights(inverse, rng_mod.stream(cfg.seed, "init.inverse"))
        forward = ForwardDynamics(latent, action_dim, hidden, layers)
        init_weights(forward, rng_mod.stream(cfg.seed, "init.forward"))
        disc = Discriminator(latent, hidden, hidden_layers=1, bounded=cfg.spd.discriminator_tanh)
        init_weights(disc, rng_mod.stream(cfg.seed, "init.discriminator"))
        modules["inverse"] = inverse
        modules["forward"] = forward
        modules["discriminator"] = disc
    return modules


def _make_agent(cfg: TrainConfig, modules, encoder_opt):
    a = cfg.agent
    if a.kind == "sac":
        return SacAgent(
            modules["encoder"], modules["actor"], modules["critic"], modules["critic_target"],
            encoder_opt,
            action_dim=PointReachEnv.action_dim,
            discount=a.discount, tau=a.tau, actor_lr=a.actor_lr, critic_lr=a.critic_lr,
            init_temperature=a.init_temperature, actor_update_freq=a.actor_update_freq,
            critic_target_update_freq=a.critic_target_update_freq,
            target_entropy=a.target_entropy,
        )
    return Td3Agent(
        modules["encoder"], modules["actor"], modules["actor_target"],
        modules["critic"], modules["critic_target"], encoder_opt,
        action_dim=PointReachEnv.action_dim,
        discount=a.discount, tau=a.tau, actor_lr=a.actor_lr, critic_lr=a.critic_lr,
        expl_noise=a.td3_expl_noise, target_noise=a.td3_target_noise,
        noise_clip=a.td3_noise_clip, policy_delay=a.td3_policy_delay,
    )


# ---------------------------------------------------------------------------
# JSON-safe nested state (for env/background/RNG state in manifests)
# ---------------------------------------------------------------------------


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": {"dtype": str(obj.dtype), "shape": list(obj.shape),
                                "data": obj.ravel().tolist()}}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    return obj


def _unjsonify(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            spec = obj["__ndarray__"]
            arr = np.array(spec["data"], dtype=spec["dtype"])
            return arr.reshape(spec["shape"])
        return {k: _unjsonify(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_unjsonify(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# Trainer
# ---------------------------------------------------------------------------

_STREAM_NAMES = ("aug.weak", "aug.strong", "buffer.sample", "agent.action",
                 "agent.update", "agent.seed")


class Trainer:
    def __init__(self, cfg: TrainConfig, run_dir, resume_from=None, hook=None):
        cfg.validate()
        torch.set_num_threads(cfg.train.torch_threads)
        self.cfg = cfg
        self.hook = hook if hook is not None else (lambda event, info=None: None)
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = self.run_dir / "metrics.csv"
        if resume_from is None and metrics_path.exists():
            raise ValueError(f"{metrics_path} already exists; pass a fresh run directory")
        (self.run_dir / "manifest.cfg").write_text(canonical_text(cfg))

        self.env_cfg = replace(cfg.env, seed=rng_mod.child_seed(cfg.seed, "env.train"))
        self.env = PointReachEnv(self.env_cfg)
        obs_shape = (3 * cfg.env.frame_stack, cfg.env.image_size, cfg.env.image_size)
        self.buffer = ReplayBuffer(cfg.agent.buffer_capacity, obs_shape, PointReachEnv.action_dim)
        self.streams = {name: rng_mod.stream(cfg.seed, name) for name in _STREAM_NAMES}

        self.modules = build_models(cfg)
        self.encoder_opt = torch.optim.Adam(self.modules["encoder"].parameters(),
                                            lr=cfg.agent.encoder_lr)
        self.agent = _make_agent(cfg, self.modules, self.encoder_opt)

        self.spd: SpdLearner | None = None
        self.dynamics_opt = None
        self.discriminator_opt = None
        if cfg.spd.enabled:
            dyn_params = list(self.modules["inverse"].parameters()) + list(
                self.modules["forward"].parameters()
            )
            self.dynamics_opt = torch.optim.Adam(dyn_params, lr=cfg.agent.dynamics_lr)
            self.discriminator_opt = torch.optim.Adam(
                self.modules["discriminator"].parameters(), lr=cfg.agent.discriminator_lr
            )
            self.spd = SpdLearner(
                self.modules["encoder"], self.modules["inverse"], self.modules["forward"],
                self.modules["discriminator"], self.encoder_opt, self.dynamics_opt,
                self.discriminator_opt,
                SpdWeights(cfg.spd.lambda_psi, cfg.spd.lambda_adv),
                cfg.aug.weak_spec(), cfg.aug.strong_spec(),
                ablation=cfg.spd.ablation,
                detach_forward_targets=cfg.spd.detach_forward_targets,
                detach_inferred_actions=cfg.spd.detach_inferred_actions,
            )
        self._weak_spec = cfg.aug.weak_spec()

        self.raw_step = 0
        self.true_step = 0
        self.episode = 0
        self.updates = 0
        self._needs_reset = True
        self._episode_return = 0.0

        if resume_from is not None:
            self._restore(resume_from)
        self.metrics = MetricsWriter(metrics_path, resume=resume_from is not None)
        self._t0 = time.perf_counter()

    # -- main loop -----------------------------------------------------------

    def run(self) -> Path:
        cfg = self.cfg
        while self.raw_step < cfg.train.total_steps:
            if self._needs_reset:
                obs = self.env.reset()
                self._episode_return = 0.0
                self._needs_reset = False
            else:
                obs = self.env.observation()

            if self.true_step < cfg.train.seed_steps:
                action = self.streams["agent.seed"].uniform(-1.0, 1.0, PointReachEnv.action_dim)
            else:
                action = self.agent.act(obs, deterministic=False, rng=self.streams["agent.action"])

            steps_before = self.env.state.step_count
            next_obs, reward, done = self.env.step(action)
            prev_raw = self.raw_step
            self.raw_step += self.env.state.step_count - steps_before
            self.true_step += 1
            self._episode_return += reward
            # Termination here is always the time limit, so the stored done flag
            # stays False and the critic bootstraps through episode ends.
            self.buffer.push(obs, action, reward, next_obs, False)

            if self.true_step > cfg.train.seed_steps:
                self._update_models()

            if done:
                self.metrics.write(
                    event="episode", raw_step=self.raw_step, true_step=self.true_step,
                    episode=self.episode, episode_return=self._episode_return,
                    wallclock=time.perf_counter() - self._t0,
                )
                self.hook("episode", self._episode_return)
                self.episode += 1
                self._needs_reset = True

            if _crossed(prev_raw, self.raw_step, cfg.train.eval_interval):
                self._evaluate_and_log()
            if cfg.train.checkpoint_interval and _crossed(
                prev_raw, self.raw_step, cfg.train.checkpoint_interval
            ) and self.raw_step < cfg.train.total_steps:
                self.save_checkpoint(self.run_dir / f"checkpoint_{self.raw_step:08d}.npz")

        self.save_checkpoint(self.run_dir / "final.npz")
        self.metrics.close()
        return self.run_dir

    def _update_models(self) -> None:
        cfg = self.cfg
        batch = self.buffer.sample(cfg.agent.batch_size, self.streams["buffer.sample"])
        report = None
        if self.spd is not None:
            report, views = self.spd.update_step(
                batch["obs"], batch["actions"], batch["next_obs"],
                self.streams["aug.weak"], self.streams["aug.strong"],
            )
            self.hook("spd", report)
            obs_w, next_w = views["obs_weak"], views["next_obs_weak"]
        else:
            obs_w = imageops.augment_weak(batch["obs"], self._weak_spec, self.streams["aug.weak"])
            next_w = imageops.augment_weak(batch["next_obs"], self._weak_spec, self.streams["aug.weak"])
        losses = self.agent.update(
            obs_w, batch["actions"], batch["rewards"], next_w, batch["dones"],
            self.streams["agent.update"],
        )
        self.hook("rl", losses)
        self.updates += 1
        if self.updates % cfg.train.log_interval == 0:
            row = dict(
                event="update", raw_step=self.raw_step, true_step=self.true_step,
                episode=self.episode, wallclock=time.perf_counter() - self._t0, **losses,
            )
            if report is not None:
                row.update(report.scalars())
            self.metrics.write(**row)

    def _evaluate_and_log(self) -> None:
        cfg = self.cfg
        seed = rng_mod.child_seed(cfg.seed, f"eval.{self.raw_step}")
        mean, std, _ = evaluate(self.agent, self.env_cfg, cfg.train.eval_episodes, seed)
        self.metrics.write(
            event="eval", raw_step=self.raw_step, true_step=self.true_step,
            episode=self.episode, eval_return_mean=mean, eval_return_std=std,
            wallclock=time.perf_counter() - self._t0,
        )
        self.hook("eval", mean)

    # -- checkpointing -------------------------------------------------------

    def _optimizers(self) -> dict[str, torch.optim.Optimizer]:
        opts = {"encoder": self.encoder_opt, "actor": self.agent.actor_opt,
                "critic": self.agent.critic_opt}
        if isinstance(self.agent, SacAgent):
            opts["alpha"] = self.agent.alpha_opt
        if self.dynamics_opt is not None:
            opts["dynamics"] = self.dynamics_opt
            opts["discriminator"] = self.discriminator_opt
        return opts

    def save_checkpoint(self, path) -> Path:
        arrays: dict[str, np.ndarray] = {}
        for name, module in self.modules.items():
            arrays.update(module_arrays(module, f"modules/{name}"))
        for name, opt in self._optimizers().items():
            arrays.update(optimizer_arrays(opt, f"opts/{name}"))
        if isinstance(self.agent, SacAgent):
            arrays["log_alpha"] = np.array([float(self.agent.log_alpha.detach())], np.float64)

        env_state = self.env.get_state()
        arrays["env/frames"] = env_state.pop("frames")
        include_buffer = self.cfg.train.checkpoint_buffer
        if include_buffer:
            for key, value in self.buffer.state_arrays().items():
                arrays[f"buffer/{key}"] = value

        manifest = {
            "config_hash": config_hash(self.cfg),
            "config_text": canonical_text(self.cfg),
            "raw_step": self.raw_step,
            "true_step": self.true_step,
            "episode": self.episode,
            "updates": self.updates,
            "agent_updates": self.agent.updates,
            "needs_reset": self._needs_reset,
            "episode_return": self._episode_return,
            "buffer_included": include_buffer,
            "env": _jsonify(env_state),
            "streams": {name: _jsonify(rng_mod.get_state(gen)) for name, gen in self.streams.items()},
        }
        return save_checkpoint(path, manifest, arrays)

    def _restore(self, path) -> None:
        manifest, arrays = load_checkpoint(path)
        if manifest["config_hash"] != config_hash(self.cfg):
            raise ValueError(
                "refusing to resume: checkpoint config hash "
                f"{manifest['config_hash']} != current {config_hash(self.cfg)}"
            )
        for name, module in self.modules.items():
            load_module_arrays(module, f"modules/{name}", arrays)
        for name, opt in self._optimizers().items():
            load_optimizer_arrays(opt, f"opts/{name}", arrays)
        if isinstance(self.agent, SacAgent):
            with torch.no_grad():
                self.agent.log_alpha.copy_(torch.tensor(float(arrays["log_alpha"][0])))

        if not manifest["buffer_included"]:
            raise ValueError("checkpoint was written without the replay buffer; cannot resume")
        buffer_arrays = {key[len("buffer/"):]: value for key, value in arrays.items()
                         if key.startswith("buffer/")}
        self.buffer.load_state_arrays(buffer_arrays)

        env_state = _unjsonify(manifest["env"])
        env_state["frames"] = arrays["env/frames"]
        self.env.set_state(env_state)
        for name, gen in self.streams.items():
            rng_mod.set_state(gen, _unjsonify(manifest["streams"][name]))

        self.raw_step = int(manifest["raw_step"])
        self.true_step = int(manifest["true_step"])
        self.episode = int(manifest["episode"])
        self.updates = int(manifest["updates"])
        self.agent.updates = int(manifest["agent_updates"])
        self._needs_reset = bool(manifest["needs_reset"])
        self._episode_return = float(manifest["episode_return"])


def _crossed(prev: int, cur: int, interval: int) -> bool:
    return interval > 0 and (prev // interval) != (cur // interval)


def default_run_dir(cfg: TrainConfig, root=None) -> Path:
    root = Path(root if root is not None else os.environ.get(RUN_ROOT_ENV_VAR, cfg.train.run_root))
    name = (
        f"{cfg.agent.kind}-{cfg.spd.ablation}-{cfg.env.background}"
        f"-seed{cfg.seed}-{config_hash(cfg)[:8]}"
    )
    return root / name


def train(cfg: TrainConfig, run_dir=None, resume_from=None, hook=None) -> Path:
    """Run one training job; returns the run directory."""
    run_dir = Path(run_dir) if run_dir is not None else default_run_dir(cfg)
    return Trainer(cfg, run_dir, resume_from=resume_from, hook=hook).run()


# ---------------------------------------------------------------------------
# Evaluation protocols
# ---------------------------------------------------------------------------


def evaluate(policy, env_cfg: EnvConfig, episodes: int, seed: int) -> tuple[float, float, list[float]]:
    """Mean/std return of the deterministic policy on un-augmented observations."""
    env = PointReachEnv(replace(env_cfg, seed=int(seed)))
    returns = []
    for _ in range(episodes):
        obs = env.reset()
        total, done = 0.0, False
        while not done:
            obs, reward, done = env.step(policy.act(obs, True))
            total += reward
        returns.append(total)
    return float(np.mean(returns)), float(np.std(returns)), returns


class RandomPolicy:
    """Uniform random actions; the floor every trained run is measured against."""

    def __init__(self, action_dim: int, rng: np.random.Generator):
        self.action_dim = action_dim
        self._rng = rng

    def act(self, obs, deterministic=True, rng=None) -> np.ndarray:
        return self._rng.uniform(-1.0, 1.0, self.action_dim)


def random_policy_baseline(env_cfg: EnvConfig, episodes: int = 100, seed: int = 0):
    """Monte-Carlo mean/std return of the uniform random policy."""
    policy = RandomPolicy(PointReachEnv.action_dim, rng_mod.stream(seed, "baseline.actions"))
    return evaluate(policy, env_cfg, episodes, rng_mod.child_seed(seed, "baseline.env"))


@dataclass
class PolicySnapshot:
    cfg: TrainConfig
    encoder: Encoder
    agent: object

    def act(self, obs, deterministic=True, rng=None):
        return self.agent.act(obs, deterministic, rng)


def load_policy(path) -> PolicySnapshot:
    """Rebuild a trained policy (and encoder) from a checkpoint file."""
    manifest, arrays = load_checkpoint(path)
    cfg = parse_text(manifest["config_text"])
    torch.set_num_threads(cfg.train.torch_threads)
    modules = build_models(cfg)
    for name, module in modules.items():
        if any(key.startswith(f"modules/{name}/") for key in arrays):
            load_module_arrays(module, f"modules/{name}", arrays)
    encoder_opt = torch.optim.Adam(modules["encoder"].parameters(), lr=cfg.agent.encoder_lr)
    agent = _make_agent(cfg, modules, encoder_opt)
    if isinstance(agent, SacAgent) and "log_alpha" in arrays:
        with torch.no_grad():
            agent.log_alpha.copy_(torch.tensor(float(arrays["log_alpha"][0])))
    return PolicySnapshot(cfg=cfg, encoder=modules["encoder"], agent=agent)


def generalization_eval(snapshot, train_bg: str, test_bg: str, episodes: int = 10,
                        seed: int = 0) -> dict:
    """Evaluate one snapshot under its training background and an unseen one.

    Row schema: (train_bg, test_bg, mean, std, gap) where mean/std describe the
    test background and gap = train-background mean - test-background mean.
    """
    if not isinstance(snapshot, PolicySnapshot):
        snapshot = load_policy(snapshot)
    env_cfg = snapshot.cfg.env
    mean_train, _, _ = evaluate(
        snapshot, replace(env_cfg, background=train_bg),
        episodes, rng_mod.child_seed(seed, f"generalize.{train_bg}"),
    )
    mean_test, std_test, _ = evaluate(
        snapshot, replace(env_cfg, background=test_bg),
        episodes, rng_mod.child_seed(seed, f"generalize.{test_bg}"),
    )
    return {
        "train_bg": train_bg,
        "test_bg": test_bg,
        "mean": mean_test,
        "std": std_test,
        "gap": mean_train - mean_test,
    }


def encode_batch(encoder: Encoder, obs: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        return encoder(torch.from_numpy(np.ascontiguousarray(obs, dtype=np.float32))).numpy()


def mean_latent_distance(za: np.ndarray, zb: np.ndarray) -> float:
    """Mean rowwise L2 distance between two latent batches."""
    return float(np.mean(np.linalg.norm(np.asarray(za) - np.asarray(zb), axis=-1)))


def _stacked_observation(frame: np.ndarray, frame_stack: int) -> np.ndarray:
    return np.concatenate([frame] * frame_stack, axis=0)


def _paired_obs_batches(env_cfg: EnvConfig, bg_a_kind: str, bg_b_kind: str,
                        n_pairs: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    states = sample_states(env_cfg, n_pairs, rng_mod.stream(seed, "distance.states"))
    obs_a, obs_b = [], []
    for idx, (kind, sink) in enumerate(((bg_a_kind, obs_a), (bg_b_kind, obs_b))):
        bg = make_background(replace(env_cfg, background=kind))
        bg.reset_episode(rng_mod.stream(seed, f"distance.bg.{idx}.{kind}"))
        for i, state in enumerate(states):
            bg.phase = i
            sink.append(_stacked_observation(render(state, bg, env_cfg.image_size),
                                             env_cfg.frame_stack))
    return np.stack(obs_a), np.stack(obs_b)


def representation_distance(encoders: dict[str, Encoder], env_cfg: EnvConfig,
                            n_pairs: int = 50, seed: int = 0, reference: str = "spd",
                            pairings=DEFAULT_DISTANCE_PAIRINGS) -> list[dict]:
    """Mean latent L2 distance across same-state different-background pairs.

    One row per (pairing, method); values are normalized so the reference
    method reads 1.00. If the reference distance is zero for a pairing the
    normalization is degenerate and only raw values are reported.
    """
    if reference not in encoders:
        raise ValueError(f"reference method {reference!r} not among {sorted(encoders)}")
    rows = []
    for bg_a, bg_b in pairings:
        obs_a, obs_b = _paired_obs_batches(env_cfg, bg_a, bg_b, n_pairs, seed)
        raw = {
            method: mean_latent_distance(encode_batch(enc, obs_a), encode_batch(enc, obs_b))
            for method, enc in encoders.items()
        }
        ref = raw[reference]
        for method in sorted(raw):
            rows.append({
                "pairing": f"{bg_a}|{bg_b}",
                "method": method,
                "raw": raw[method],
                "normalized": (raw[method] / ref) if ref > 0 else None,
            })
    return rows


def collect_labeled_observations(env_cfg: EnvConfig, n_states: int = 50, seed: int = 0,
                                 backgrounds=("default", "simple_distractor", "textured_video")):
    """(state label, background kind, observation) triples over shared states."""
    states = sample_states(env_cfg, n_states, rng_mod.stream(seed, "latents.states"))
    out = []
    for kind in backgrounds:
        bg = make_background(replace(env_cfg, background=kind))
        bg.reset_episode(rng_mod.stream(seed, f"latents.bg.{kind}"))
        for i, state in enumerate(states):
            bg.phase = i
            obs = _stacked_observation(render(state, bg, env_cfg.image_size), env_cfg.frame_stack)
            out.append((i, kind, obs))
    return out


def export_latents(encoder: Encoder, labeled_obs, path) -> Path:
    """Write (state label, background kind, latent...) rows as CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    latent_dim = encoder.latent_dim
    obs = np.stack([o for _, _, o in labeled_obs])
    latents = encode_batch(encoder, obs)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state_label", "background"] + [f"z{i:02d}" for i in range(latent_dim)])
        for (label, kind, _), z in zip(labeled_obs, latents):
            writer.writerow([label, kind] + [f"{v:.9g}" for v in z])
    return path


def sweep(base_cfg: TrainConfig, psi_values, adv_values, seeds, run_root) -> list[dict]:
    """Train one run per (lambda_psi, lambda_adv, seed) cell and tabulate the
    final evaluation return per cell, averaged over seeds."""
    if not psi_values or not adv_values or not seeds:
        raise ValueError("sweep grid and seed list must be nonempty")
    run_root = Path(run_root)
    rows = []
    for lam_psi in psi_values:
        for lam_adv in adv_values:
            per_seed = []
            for seed in seeds:
                cfg = dataclasses.replace(
                    base_cfg, seed=int(seed),
                    spd=dataclasses.replace(base_cfg.spd, lambda_psi=float(lam_psi),
                                            lambda_adv=float(lam_adv)),
                )
                cell_dir = run_root / f"cell_psi{lam_psi:g}_adv{lam_adv:g}_seed{seed}"
                train(cfg, run_dir=cell_dir)
                per_seed.append(final_eval_mean(cell_dir))
            rows.append({
                "lambda_psi": float(lam_psi),
                "lambda_adv": float(lam_adv),
                "mean_return": float(np.mean(per_seed)),
                "seed_returns": per_seed,
            })
    with open(run_root / "sweep_results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda_psi", "lambda_adv", "mean_return"])
        for row in rows:
            writer.writerow([_fmt(row["lambda_psi"]), _fmt(row["lambda_adv"]),
                             _fmt(row["mean_return"])])
    return rows
