"""Desk-scale pixel control environment with swappable distractor backgrounds.

The task is a 2-D velocity-controlled point mass that must reach and hold a
target position. Observations are stacked RGB frames (channels-first, float32
in [0, 1]); the reward per raw physics step is ``exp(-k * dist(agent, target))``
with ``k`` chosen so the reward is 0.5 at half the arena width.

The agent and target are composited on top of one of four background kinds:

* ``default`` - a static gradient, constant across an episode
* ``simple_distractor`` - moving colored circles, re-drawn every episode
* ``textured_video`` - layered scrolling value-noise texture
* ``frame_directory`` - user-supplied image files, cycled per physics step

Foreground pixels (agent disc, motion trail, target ring) are drawn opaquely
and depend only on the physical state, never on the background. All
randomness flows through named streams derived from the config seed, so a
(config, seed, action sequence) triple fixes the trajectory bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rng_mod

__all__ = [
    "EnvConfig",
    "PhysState",
    "Background",
    "make_background",
    "render",
    "foreground_mask",
    "paired_observation",
    "sample_states",
    "PointReachEnv",
    "BACKGROUND_KINDS",
]

BACKGROUND_KINDS = ("default", "simple_distractor", "textured_video", "frame_directory")

# Foreground geometry (fractions of the image side) and colors. The agent is
# a red disc with a bright core; the trail disc trails opposite the velocity
# so a single frame encodes motion; the target is a green ring.
_AGENT_RADIUS = 0.085
_AGENT_CORE_RADIUS = 0.045
_TRAIL_RADIUS = 0.055
_TRAIL_LAG = 8.0  # arena units of trail offset per unit velocity
_TARGET_OUTER = 0.115
_TARGET_WIDTH = 0.035
_COL_AGENT = (0.95, 0.18, 0.12)
_COL_CORE = (1.0, 0.97, 0.9)
_COL_TRAIL = (0.22, 0.22, 0.28)
_COL_TARGET = (0.12, 0.95, 0.25)


@dataclass
class EnvConfig:
    image_size: int = 84
    frame_stack: int = 3
    action_repeat: int = 4
    episode_length: int = 1000  # raw physics steps per episode
    background: str = "default"
    frame_dir: str = ""  # only for background="frame_directory"
    seed: int = 0
    # Physics: per raw step, vel <- damping*vel + gain*action; pos <- pos + vel.
    accel_gain: float = 0.006
    vel_damping: float = 0.8
    spawn_min_distance: float = 2.0
    # Reward: exp(-k*dist) with k = ln(2)/reward_half_distance.
    reward_half_distance: float = 1.0

    def __post_init__(self):
        if self.image_size < 32:
            raise ValueError(f"image_size must be >= 32, got {self.image_size}")
        if self.frame_stack < 1:
            raise ValueError(f"frame_stack must be >= 1, got {self.frame_stack}")
        if self.action_repeat < 1:
            raise ValueError(f"action_repeat must be >= 1, got {self.action_repeat}")
        if self.episode_length < 1:
            raise ValueError(f"episode_length must be >= 1, got {self.episode_length}")
        if self.background not in BACKGROUND_KINDS:
            raise ValueError(f"unknown background {self.background!r}, expected one of {BACKGROUND_KINDS}")

    @property
    def reward_scale(self) -> float:
        return math.log(2.0) / self.reward_half_distance


@dataclass
class PhysState:
    agent_pos: np.ndarray
    agent_vel: np.ndarray
    target_pos: np.ndarray
    step_count: int = 0

    def copy(self) -> "PhysState":
        return PhysState(
            self.agent_pos.copy(), self.agent_vel.copy(), self.target_pos.copy(), self.step_count
        )


_GRID_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _pixel_grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    if size not in _GRID_CACHE:
        idx = np.arange(size, dtype=np.float32)
        _GRID_CACHE[size] = (idx[:, None] + np.zeros((1, size), np.float32),
                             idx[None, :] + np.zeros((size, 1), np.float32))
    return _GRID_CACHE[size]


def _to_px(pos: np.ndarray, size: int) -> tuple[float, float]:
    # pos[0] -> columns, pos[1] -> rows
    half = (size - 1) / 2.0
    return (pos[1] + 1.0) * half, (pos[0] + 1.0) * half


def _disc_mask(size: int, cy: float, cx: float, radius: float) -> np.ndarray:
    yy, xx = _pixel_grid(size)
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2


# ---------------------------------------------------------------------------
# Backgrounds
# ---------------------------------------------------------------------------


class Background:
    """One episode-long stream of background frames.

    `reset_episode(rng)` re-draws the episode's parameters, `frame()` renders
    the frame at the current integer `phase`. Rendering is a pure function of
    (episode parameters, phase).
    """

    kind = "default"

    def __init__(self, size: int):
        self.size = size
        self.phase = 0

    def reset_episode(self, rng: np.random.Generator) -> None:
        self.phase = 0

    def frame(self) -> np.ndarray:
        raise NotImplementedError

    def get_state(self) -> dict:
        return {"phase": self.phase}

    def set_state(self, state: dict) -> None:
        self.phase = int(state["phase"])


class DefaultBackground(Background):
    kind = "default"

    def __init__(self, size: int):
        super().__init__(size)
        ramp = np.linspace(0.0, 1.0, size, dtype=np.float32)[None, :, None]
        top = np.array([0.16, 0.17, 0.22], np.float32)
        bottom = np.array([0.07, 0.08, 0.11], np.float32)
        grad = top[None, None, :] * (1 - ramp) + bottom[None, None, :] * ramp  # (1, H, 3)
        self._canvas = np.repeat(grad.transpose(2, 1, 0), size, axis=2).astype(np.float32)

    def frame(self) -> np.ndarray:
        return self._canvas.copy()


class SimpleDistractorBackground(Background):
    """Six colored circles whose centers follow per-episode sinusoids."""

    kind = "simple_distractor"
    n_circles = 6

    def __init__(self, size: int):
        super().__init__(size)
        self._params: dict[str, np.ndarray] = {}
        self._base = np.array([0.09, 0.09, 0.11], np.float32)

    def reset_episode(self, rng: np.random.Generator) -> None:
        super().reset_episode(rng)
        n, s = self.n_circles, self.size
        self._params = {
            "colors": rng.uniform(0.15, 1.0, (n, 3)).astype(np.float32),
            "radii": rng.uniform(0.05, 0.13, n).astype(np.float32) * s,
            "centers": rng.uniform(0.0, 1.0, (n, 2)).astype(np.float32) * s,
            "amps": rng.uniform(0.08, 0.3, (n, 2)).astype(np.float32) * s,
            "omegas": rng.uniform(0.15, 0.45, (n, 2)).astype(np.float32),
            "phis": rng.uniform(0.0, 2.0 * np.pi, (n, 2)).astype(np.float32),
        }

    def frame(self) -> np.ndarray:
        p, t, s = self._params, float(self.phase), self.size
        canvas = np.repeat(self._base[:, None, None], s, axis=1).repeat(s, axis=2).copy()
        cy = p["centers"][:, 0] + p["amps"][:, 0] * np.sin(p["omegas"][:, 0] * t + p["phis"][:, 0])
        cx = p["centers"][:, 1] + p["amps"][:, 1] * np.cos(p["omegas"][:, 1] * t + p["phis"][:, 1])
        for k in range(self.n_circles):
            mask = _disc_mask(s, float(cy[k]), float(cx[k]), float(p["radii"][k]))
            canvas[:, mask] = p["colors"][k][:, None]
        return canvas.astype(np.float32)

    def get_state(self) -> dict:
        return {"phase": self.phase, **{k: v.copy() for k, v in self._params.items()}}

    def set_state(self, state: dict) -> None:
        self.phase = int(state["phase"])
        self._params = {k: np.asarray(v) for k, v in state.items() if k != "phase"}


class TexturedVideoBackground(Background):
    """Layered scrolling value-noise, a stand-in for natural-video footage."""

    kind = "textured_video"
    grid_sizes = (3, 5, 8)
    weights = (0.5, 0.3, 0.2)

    def __init__(self, size: int):
        super().__init__(size)
        self._grids: list[np.ndarray] = []
        self._vels: list[np.ndarray] = []

    def reset_episode(self, rng: np.random.Generator) -> None:
        super().reset_episode(rng)
        self._grids = [rng.uniform(0.0, 1.0, (3, g, g)).astype(np.float32) for g in self.grid_sizes]
        self._vels = [rng.uniform(-0.03, 0.03, 2).astype(np.float32) for _ in self.grid_sizes]

    def _sample_layer(self, grid: np.ndarray, off: np.ndarray) -> np.ndarray:
        g, s = grid.shape[1], self.size
        yy, xx = _pixel_grid(s)
        u = yy * (g / s) + off[0]
        v = xx * (g / s) + off[1]
        i0 = np.floor(u).astype(np.int64)
        j0 = np.floor(v).astype(np.int64)
        fu = (u - i0).astype(np.float32)
        fv = (v - j0).astype(np.float32)
        i0 %= g
        j0 %= g
        i1 = (i0 + 1) % g
        j1 = (j0 + 1) % g
        return (
            grid[:, i0, j0] * ((1 - fu) * (1 - fv))
            + grid[:, i1, j0] * (fu * (1 - fv))
            + grid[:, i0, j1] * ((1 - fu) * fv)
            + grid[:, i1, j1] * (fu * fv)
        )

    def frame(self) -> np.ndarray:
        t = float(self.phase)
        acc = np.zeros((3, self.size, self.size), np.float32)
        for grid, vel, w in zip(self._grids, self._vels, self.weights):
            acc += w * self._sample_layer(grid, vel * t)
        # contrast stretch keeps the texture vivid after layer averaging
        return np.clip(0.5 + 1.6 * (acc - 0.5), 0.0, 1.0).astype(np.float32)

    def get_state(self) -> dict:
        return {
            "phase": self.phase,
            "grids": [g.copy() for g in self._grids],
            "vels": [v.copy() for v in self._vels],
        }

    def set_state(self, state: dict) -> None:
        self.phase = int(state["phase"])
        self._grids = [np.asarray(g) for g in state["grids"]]
        self._vels = [np.asarray(v) for v in state["vels"]]


class FrameDirectoryBackground(Background):
    """Cycles lexicographically ordered image files, resized to the frame size."""

    kind = "frame_directory"
    _suffixes = {".png", ".bmp", ".jpg", ".jpeg"}

    def __init__(self, size: int, directory: str):
        super().__init__(size)
        from PIL import Image

        paths = sorted(
            p for p in Path(directory).iterdir() if p.suffix.lower() in self._suffixes
        ) if Path(directory).is_dir() else []
        if not paths:
            raise ValueError(f"frame_directory background needs image files in {directory!r}")
        frames = []
        for p in paths:
            img = Image.open(p).convert("RGB").resize((size, size), Image.BILINEAR)
            frames.append(np.asarray(img, dtype=np.float32).transpose(2, 0, 1) / 255.0)
        self._frames = frames

    def frame(self) -> np.ndarray:
        return self._frames[self.phase % len(self._frames)].copy()


def make_background(config: EnvConfig) -> Background:
    if config.background == "default":
        return DefaultBackground(config.image_size)
    if config.background == "simple_distractor":
        return SimpleDistractorBackground(config.image_size)
    if config.background == "textured_video":
        return TexturedVideoBackground(config.image_size)
    return FrameDirectoryBackground(config.image_size, config.frame_dir)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _paint(frame: np.ndarray, mask: np.ndarray, color) -> None:
    frame[:, mask] = np.asarray(color, np.float32)[:, None]


def render(state: PhysState, bg: Background, image_size: int) -> np.ndarray:
    """Composite the scene: background first, then trail, target ring, agent."""
    frame = bg.frame()
    s = image_size
    ay, ax = _to_px(state.agent_pos, s)
    ty, tx = _to_px(state.target_pos, s)
    trail = state.agent_pos - state.agent_vel * _TRAIL_LAG
    ry, rx = _to_px(trail, s)
    _paint(frame, _disc_mask(s, ry, rx, _TRAIL_RADIUS * s), _COL_TRAIL)
    ring = _disc_mask(s, ty, tx, _TARGET_OUTER * s) & ~_disc_mask(
        s, ty, tx, (_TARGET_OUTER - _TARGET_WIDTH) * s
    )
    _paint(frame, ring, _COL_TARGET)
    _paint(frame, _disc_mask(s, ay, ax, _AGENT_RADIUS * s), _COL_AGENT)
    _paint(frame, _disc_mask(s, ay, ax, _AGENT_CORE_RADIUS * s), _COL_CORE)
    return frame


def foreground_mask(state: PhysState, image_size: int) -> np.ndarray:
    """Boolean mask of pixels owned by the foreground, independent of background."""
    s = image_size
    ay, ax = _to_px(state.agent_pos, s)
    ty, tx = _to_px(state.target_pos, s)
    trail = state.agent_pos - state.agent_vel * _TRAIL_LAG
    ry, rx = _to_px(trail, s)
    ring = _disc_mask(s, ty, tx, _TARGET_OUTER * s) & ~_disc_mask(
        s, ty, tx, (_TARGET_OUTER - _TARGET_WIDTH) * s
    )
    return (
        _disc_mask(s, ry, rx, _TRAIL_RADIUS * s)
        | ring
        | _disc_mask(s, ay, ax, _AGENT_RADIUS * s)
    )


def paired_observation(
    config: EnvConfig, state: PhysState, bg_a: Background, bg_b: Background
) -> tuple[np.ndarray, np.ndarray]:
    """Render the identical physical state over two backgrounds.

    Returns two stacked observations (frame_stack copies of the rendered
    frame), the substrate of the representation-distance metric.
    """
    obs = []
    for bg in (bg_a, bg_b):
        frame = render(state, bg, config.image_size)
        obs.append(np.concatenate([frame] * config.frame_stack, axis=0))
    return obs[0], obs[1]


def sample_states(config: EnvConfig, n: int, rng: np.random.Generator) -> list[PhysState]:
    """Random physical states (positions uniform, small random velocity)."""
    states = []
    for _ in range(n):
        states.append(
            PhysState(
                agent_pos=rng.uniform(-1.0, 1.0, 2).astype(np.float64),
                agent_vel=rng.uniform(-0.02, 0.02, 2).astype(np.float64),
                target_pos=rng.uniform(-1.0, 1.0, 2).astype(np.float64),
            )
        )
    return states


# ---------------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------------


class PointReachEnv:
    """Velocity-controlled point-mass reacher rendered to pixels.

    Single-owner: one trainer interacts with one instance. Multiple instances
    with distinct seeds can run concurrently.
    """

    action_dim = 2

    def __init__(self, config: EnvConfig):
        self.config = config
        self._bg = make_background(config)
        self._seed_streams(config.seed)
        self._state: PhysState | None = None
        self._frames: list[np.ndarray] = []
        self._done = True

    def _seed_streams(self, seed: int) -> None:
        self._phys_rng = rng_mod.stream(seed, "env.physics")
        self._bg_rng = rng_mod.stream(seed, "env.background")

    # -- episode control ----------------------------------------------------

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._seed_streams(seed)
        cfg = self.config
        agent = self._phys_rng.uniform(-1.0, 1.0, 2)
        target = agent
        best, best_d = None, -1.0
        for _ in range(100):
            cand = self._phys_rng.uniform(-1.0, 1.0, 2)
            d = float(np.linalg.norm(cand - agent))
            if d > best_d:
                best, best_d = cand, d
            if d >= cfg.spawn_min_distance:
                break
        target = best
        self._state = PhysState(
            agent_pos=agent, agent_vel=np.zeros(2), target_pos=target, step_count=0
        )
        self._bg.reset_episode(self._bg_rng)
        frame = render(self._state, self._bg, cfg.image_size)
        self._frames = [frame.copy() for _ in range(cfg.frame_stack)]
        self._done = False
        return self.observation()

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        if self._done or self._state is None:
            raise RuntimeError("step() on a finished episode; call reset() first")
        cfg = self.config
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        st = self._state
        reward = 0.0
        k = cfg.reward_scale
        for _ in range(cfg.action_repeat):
            st.agent_vel = cfg.vel_damping * st.agent_vel + cfg.accel_gain * a
            st.agent_pos = st.agent_pos + st.agent_vel
            for axis in range(2):
                if st.agent_pos[axis] < -1.0 or st.agent_pos[axis] > 1.0:
                    st.agent_pos[axis] = np.clip(st.agent_pos[axis], -1.0, 1.0)
                    st.agent_vel[axis] = 0.0
            st.step_count += 1
            self._bg.phase += 1
            reward += math.exp(-k * float(np.linalg.norm(st.agent_pos - st.target_pos)))
            if st.step_count >= cfg.episode_length:
                break
        frame = render(st, self._bg, cfg.image_size)
        self._frames = self._frames[1:] + [frame]
        self._done = st.step_count >= cfg.episode_length
        return self.observation(), reward, self._done

    def observation(self) -> np.ndarray:
        """Current stacked observation (most recent frame last)."""
        return np.concatenate(self._frames, axis=0)


    # -- introspection and checkpointing ------------------------------------

    @property
    def state(self) -> PhysState:
        return self._state

    @property
    def background(self) -> Background:
        return self._bg

    @property
    def done(self) -> bool:
        return self._done

    def get_state(self) -> dict:
        return {
            "agent_pos": self._state.agent_pos.copy(),
            "agent_vel": self._state.agent_vel.copy(),
            "target_pos": self._state.target_pos.copy(),
            "step_count": self._state.step_count,
            "done": self._done,
            "frames": np.stack(self._frames),
            "bg": self._bg.get_state(),
            "phys_rng": rng_mod.get_state(self._phys_rng),
            "bg_rng": rng_mod.get_state(self._bg_rng),
        }

    def set_state(self, s: dict) -> None:
        self._state = PhysState(
            agent_pos=np.asarray(s["agent_pos"], dtype=np.float64).copy(),
            agent_vel=np.asarray(s["agent_vel"], dtype=np.float64).copy(),
            target_pos=np.asarray(s["target_pos"], dtype=np.float64).copy(),
            step_count=int(s["step_count"]),
        )
        self._done = bool(s["done"])
        self._frames = [f.copy() for f in np.asarray(s["frames"])]
        self._bg.set_state(s["bg"])
        rng_mod.set_state(self._phys_rng, s["phys_rng"])
        rng_mod.set_state(self._bg_rng, s["bg_rng"])
