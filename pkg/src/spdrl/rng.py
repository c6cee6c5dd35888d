"""Named deterministic random streams.

Every source of randomness in a run (environment, augmentations, buffer
sampling, action noise, weight init) draws from its own `numpy` generator,
derived from one master seed plus a stream name. Stream states are plain
dicts of ints, so they serialize into checkpoint manifests and restore
bit-exactly.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream", "child_seed", "get_state", "set_state"]


def _name_words(name: str) -> list[int]:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 32, 4)]


def stream(master_seed: int, name: str) -> np.random.Generator:
    """Return the generator for `name`, a pure function of (master_seed, name)."""
    seq = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF] + _name_words(name))
    return np.random.Generator(np.random.PCG64(seq))


def child_seed(master_seed: int, name: str) -> int:
    """Derive a 31-bit integer seed for components that take a plain seed."""
    return int(stream(master_seed, name).integers(0, 2**31 - 1))


def get_state(gen: np.random.Generator) -> dict:
    """Serializable snapshot of a generator's position in its stream."""
    return gen.bit_generator.state


def set_state(gen: np.random.Generator, state: dict) -> None:
    gen.bit_generator.state = state
