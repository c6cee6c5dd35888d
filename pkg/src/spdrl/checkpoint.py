"""Versioned checkpoint container: named numpy arrays plus a JSON manifest.

A checkpoint is a single ``.npz`` file. Parameter and optimizer tensors are
stored as named arrays (float32, row-major); everything scalar-ish (config
text and hash, step counters, RNG stream states) lives in the manifest, which
is stored as a UTF-8 JSON blob under a reserved key. Enough state is captured
for bit-exact resume.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

FORMAT_VERSION = 1

_MANIFEST_KEY = "__manifest__"

__all__ = [
    "FORMAT_VERSION",
    "save_checkpoint",
    "load_checkpoint",
    "module_arrays",
    "load_module_arrays",
    "optimizer_arrays",
    "load_optimizer_arrays",
]


def save_checkpoint(path, manifest: dict, arrays: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    if _MANIFEST_KEY in arrays:
        raise ValueError(f"array name {_MANIFEST_KEY!r} is reserved")
    manifest = {"format_version": FORMAT_VERSION, **manifest}
    blob = np.frombuffer(json.dumps(manifest).encode("utf-8"), dtype=np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **{_MANIFEST_KEY: blob}, **arrays)
    return path


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with np.load(path, allow_pickle=False) as z:
        arrays = {name: z[name] for name in z.files if name != _MANIFEST_KEY}
        manifest = json.loads(z[_MANIFEST_KEY].tobytes().decode("utf-8"))
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version!r}")
    return manifest, arrays


def module_arrays(module: torch.nn.Module, prefix: str) -> dict[str, np.ndarray]:
    """All tensors of a module's state dict as named float arrays."""
    return {
        f"{prefix}/{name}": tensor.detach().cpu().numpy().copy()
        for name, tensor in module.state_dict().items()
    }


def load_module_arrays(module: torch.nn.Module, prefix: str,
                       arrays: dict[str, np.ndarray]) -> None:
    state = {}
    head = f"{prefix}/"
    for key, value in arrays.items():
        if key.startswith(head):
            state[key[len(head):]] = torch.from_numpy(np.asarray(value).copy())
    module.load_state_dict(state)


def optimizer_arrays(opt: torch.optim.Optimizer, prefix: str) -> dict[str, np.ndarray]:
    """Adam moment buffers and step counters, keyed by flat parameter index."""
    out: dict[str, np.ndarray] = {}
    for idx, state in opt.state_dict()["state"].items():
        for name, value in state.items():
            tensor = value if torch.is_tensor(value) else torch.tensor(float(value))
            out[f"{prefix}/{idx}/{name}"] = tensor.detach().cpu().numpy().copy()
    return out


def load_optimizer_arrays(opt: torch.optim.Optimizer, prefix: str,
                          arrays: dict[str, np.ndarray]) -> None:
    state_dict = opt.state_dict()
    state: dict[int, dict] = {}
    head = f"{prefix}/"
    for key, value in arrays.items():
        if not key.startswith(head):
            continue
        idx_str, name = key[len(head):].split("/", 1)
        entry = state.setdefault(int(idx_str), {})
        arr = np.asarray(value)
        tensor = torch.from_numpy(arr.copy())
        if name == "step":
            tensor = tensor.reshape(())
        entry[name] = tensor
    state_dict["state"] = state
    opt.load_state_dict(state_dict)
