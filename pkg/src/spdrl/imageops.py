"""Seedable batch image augmentations and the weak/strong two-way pipeline.

An image batch is a float32 array of shape (batch, channels, height, width)
with values in [0, 1]. Channels hold stacked RGB frames, frame-major:
``[f0.R, f0.G, f0.B, f1.R, ...]``, so ``channels`` is always divisible by 3.

Every operation preserves shape and the [0, 1] range, and is deterministic
given the input and the state of the generator passed in. The weak branch is
random shift only; the strong branch is random shift followed by exactly one
of {grayscale, random convolution, color jitter, cutout color}, drawn once
per call and applied to the whole batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "AugmentationSpec",
    "random_shift",
    "grayscale",
    "random_convolution",
    "color_jitter",
    "cutout_color",
    "augment_weak",
    "augment_strong",
    "rgb_to_hsv",
    "hsv_to_rgb",
    "STRONG_OPS",
]

# BT.601 luminance weights.
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)

# Strong-branch techniques, in the order the per-batch choice indexes them.
STRONG_OPS = ("grayscale", "random_convolution", "color_jitter", "cutout_color")


@dataclass
class AugmentationSpec:
    """Configuration of one augmentation branch.

    `rng_stream` names the deterministic stream the branch draws from; the
    weak and strong branches use separate streams so their shift offsets are
    independent.
    """

    pad_pixels: int = 4
    grayscale_prob: float = 1.0
    jitter_strengths: tuple[float, float, float] = (0.1, 0.3, 0.3)
    cutout_size_range: tuple[float, float] = (0.1, 0.3)
    rng_stream: str = "aug"

    def __post_init__(self):
        if self.pad_pixels < 0:
            raise ValueError(f"pad_pixels must be >= 0, got {self.pad_pixels}")
        if not 0.0 <= self.grayscale_prob <= 1.0:
            raise ValueError(f"grayscale_prob must be in [0, 1], got {self.grayscale_prob}")
        if any(s < 0 for s in self.jitter_strengths):
            raise ValueError(f"jitter_strengths must be >= 0, got {self.jitter_strengths}")
        lo, hi = self.cutout_size_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"cutout_size_range must satisfy 0 <= lo <= hi <= 1, got {self.cutout_size_range}")


def _check_batch(batch: np.ndarray) -> tuple[int, int, int, int]:
    if batch.ndim != 4:
        raise ValueError(f"image batch must be 4-D (B, C, H, W), got shape {batch.shape}")
    b, c, h, w = batch.shape
    if c % 3 != 0:
        raise ValueError(f"channels must be divisible by 3 (stacked RGB frames), got {c}")
    return b, c, h, w


def _frames(batch: np.ndarray) -> np.ndarray:
    """View (B, C, H, W) as (B, frames, 3, H, W)."""
    b, c, h, w = batch.shape
    return batch.reshape(b, c // 3, 3, h, w)


def random_shift(batch: np.ndarray, pad: int, rng: np.random.Generator | None,
                 offsets: np.ndarray | None = None) -> np.ndarray:
    """Pad every side by `pad` (edge replication) and crop back at a random offset.

    Offsets are drawn per image, uniform over [0, 2*pad]^2; `offsets` overrides
    the draw (used by tests). pad=0 is the identity.
    """
    b, c, h, w = _check_batch(batch)
    if pad < 0:
        raise ValueError(f"pad must be >= 0, got {pad}")
    if pad >= min(h, w):
        raise ValueError(f"pad={pad} must be smaller than the image side {min(h, w)}")
    if offsets is None:
        offsets = rng.integers(0, 2 * pad + 1, size=(b, 2))
    if pad == 0:
        return batch.copy()
    padded = np.pad(batch, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="edge")
    out = np.empty_like(batch)
    for i in range(b):
        dy, dx = int(offsets[i, 0]), int(offsets[i, 1])
        out[i] = padded[i, :, dy : dy + h, dx : dx + w]
    return out


def grayscale(batch: np.ndarray, prob: float, rng: np.random.Generator | None,
              convert: np.ndarray | None = None) -> np.ndarray:
    """Convert each image to grayscale with probability `prob`.

    Converted images get all three channels of every stacked frame set to the
    BT.601 luminance; the rest pass through unchanged. `convert` overrides the
    per-image coin flips.
    """
    b, c, h, w = _check_batch(batch)
    if not 0.0 <= prob <= 1.0:
        raise ValueError(f"prob must be in [0, 1], got {prob}")
    if convert is None:
        convert = rng.random(b) < prob
    out = batch.copy()
    if not convert.any():
        return out
    frames = _frames(out)
    sel = frames[convert]  # (n, F, 3, H, W)
    luma = np.einsum("nfchw,c->nfhw", sel, _LUMA).astype(np.float32)
    frames[convert] = luma[:, :, None, :, :]
    return out


def random_convolution(batch: np.ndarray, rng: np.random.Generator | None,
                       kernel: np.ndarray | None = None) -> np.ndarray:
    """Pass every frame's RGB triple through one freshly sampled 3x3 convolution.

    One kernel is drawn per call (per minibatch) with i.i.d. Gaussian entries,
    std = sqrt(2 / fan_in), fan_in = 3*3*3. Edge padding keeps the output the
    same size; the result is clamped to [0, 1].
    """
    b, c, h, w = _check_batch(batch)
    if kernel is None:
        std = float(np.sqrt(2.0 / 27.0))
        kernel = rng.normal(0.0, std, size=(3, 3, 3, 3))
    kernel = np.asarray(kernel, dtype=np.float32)
    frames = _frames(batch)
    padded = np.pad(frames, ((0, 0), (0, 0), (0, 0), (1, 1), (1, 1)), mode="edge")
    taps = np.stack(
        [padded[..., dy : dy + h, dx : dx + w] for dy in range(3) for dx in range(3)]
    )  # (9, B, F, 3, H, W)
    out = np.einsum("oik,kbfihw->bfohw", kernel.reshape(3, 3, 9), taps)
    out = np.clip(out, 0.0, 1.0).astype(np.float32)
    return out.reshape(b, c, h, w)


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB -> HSV for arrays with the color axis at -3."""
    rgb = np.asarray(rgb, dtype=np.float32)
    r, g, b = rgb[..., 0, :, :], rgb[..., 1, :, :], rgb[..., 2, :, :]
    maxc = np.max(rgb, axis=-3)
    minc = np.min(rgb, axis=-3)
    delta = maxc - minc
    safe = np.where(delta == 0, 1.0, delta)
    h = np.where(
        maxc == r, (g - b) / safe,
        np.where(maxc == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    h = np.where(delta == 0, 0.0, (h / 6.0) % 1.0)
    s = np.where(maxc == 0, 0.0, delta / np.where(maxc == 0, 1.0, maxc))
    return np.stack([h, s, maxc], axis=-3).astype(np.float32)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Vectorized HSV -> RGB, inverse of :func:`rgb_to_hsv`."""
    hsv = np.asarray(hsv, dtype=np.float32)
    h, s, v = hsv[..., 0, :, :], hsv[..., 1, :, :], hsv[..., 2, :, :]
    h6 = (h % 1.0) * 6.0
    i = np.floor(h6).astype(np.int32) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    # Sector tables: rgb = (choose_r, choose_g, choose_b)[i]
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-3).astype(np.float32)


def color_jitter(batch: np.ndarray, strengths, rng: np.random.Generator | None,
                 shifts: np.ndarray | None = None) -> np.ndarray:
    """Add per-image uniform noise to the HSV channels.

    One (dH, dS, dV) triple is drawn per image (uniform in +-strength) and
    applied to all its stacked frames. Hue wraps mod 1; saturation and value
    clamp to [0, 1]. `shifts` overrides the draw.
    """
    b, c, h, w = _check_batch(batch)
    strengths = np.asarray(strengths, dtype=np.float32)
    if (strengths < 0).any():
        raise ValueError(f"strengths must be >= 0, got {strengths}")
    if shifts is None:
        shifts = rng.uniform(-1.0, 1.0, size=(b, 3)).astype(np.float32) * strengths
    shifts = np.asarray(shifts, dtype=np.float32)
    hsv = rgb_to_hsv(_frames(batch))  # (B, F, 3, H, W)
    sh = shifts[:, None, :, None, None]
    hh = (hsv[:, :, 0] + sh[:, :, 0]) % 1.0
    ss = np.clip(hsv[:, :, 1] + sh[:, :, 1], 0.0, 1.0)
    vv = np.clip(hsv[:, :, 2] + sh[:, :, 2], 0.0, 1.0)
    rgb = hsv_to_rgb(np.stack([hh, ss, vv], axis=2))
    return np.clip(rgb, 0.0, 1.0).reshape(b, c, h, w).astype(np.float32)


def cutout_color(batch: np.ndarray, size_range, rng: np.random.Generator | None,
                 rects: list | None = None, colors: np.ndarray | None = None) -> np.ndarray:
    """Fill one random rectangle per image with one random uniform color.

    Side lengths are drawn as fractions of the image side from `size_range`;
    the rectangle is placed uniformly and filled with the same color across
    all stacked frames. `rects` ((top, left, height, width) per image) and
    `colors` override the draws.
    """
    b, c, h, w = _check_batch(batch)
    lo, hi = float(size_range[0]), float(size_range[1])
    if not (0.0 <= lo <= hi <= 1.0):
        raise ValueError(f"size_range must satisfy 0 <= lo <= hi <= 1, got {size_range}")
    if rects is None:
        fracs = rng.uniform(lo, hi, size=(b, 2))
        rects = []
        for i in range(b):
            rh = int(round(fracs[i, 0] * h))
            rw = int(round(fracs[i, 1] * w))
            top = int(rng.integers(0, h - rh + 1)) if rh < h else 0
            left = int(rng.integers(0, w - rw + 1)) if rw < w else 0
            rects.append((top, left, rh, rw))
    if colors is None:
        colors = rng.uniform(0.0, 1.0, size=(b, 3)).astype(np.float32)
    colors = np.asarray(colors, dtype=np.float32)
    out = batch.copy()
    frames = _frames(out)
    for i, (top, left, rh, rw) in enumerate(rects):
        if rh <= 0 or rw <= 0:
            continue
        frames[i, :, :, top : top + rh, left : left + rw] = colors[i][None, :, None, None]
    return out


def augment_weak(batch: np.ndarray, spec: AugmentationSpec, rng: np.random.Generator) -> np.ndarray:
    """Weak branch: random shift only."""
    return random_shift(batch, spec.pad_pixels, rng)


def augment_strong(batch: np.ndarray, spec: AugmentationSpec, rng: np.random.Generator,
                   choice: int | None = None, return_op: bool = False):
    """Strong branch: random shift, then one technique for the whole batch.

    The technique index is drawn uniformly from the four strong ops once per
    call; `choice` forces it. With `return_op` the applied technique's name is
    returned alongside the batch.
    """
    out = random_shift(batch, spec.pad_pixels, rng)
    if choice is None:
        choice = int(rng.integers(0, len(STRONG_OPS)))
    op = STRONG_OPS[choice]
    if op == "grayscale":
        out = grayscale(out, spec.grayscale_prob, rng)
    elif op == "random_convolution":
        out = random_convolution(out, rng)
    elif op == "color_jitter":
        out = color_jitter(out, spec.jitter_strengths, rng)
    elif op == "cutout_color":
        out = cutout_color(out, spec.cutout_size_range, rng)
    if return_op:
        return out, op
    return out
