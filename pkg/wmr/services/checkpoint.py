"""Binary checkpoints.

Layout: b"WMR1", uint32 format version, uint32 header length, a UTF-8 JSON
header, then one blob of little-endian float32 arrays in header order:
every parameter, then Adam's first moments, then its second moments.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from wmr import __version__
from wmr.config import RunConfig, config_from_text, dump_config
from wmr.errors import CheckpointError, ConfigError
from wmr.services.autodiff import AdamState

MAGIC = b"WMR1"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sII")


@dataclass
class Checkpoint:
    config_text: str
    code_version: str
    iteration: int
    params: dict[str, np.ndarray]
    adam: AdamState
    rng_states: dict

    @property
    def config(self) -> RunConfig:
        return config_from_text(self.config_text)


def save_checkpoint(path: str | Path, trainer) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    named = trainer.named_arrays()
    adam = trainer.adam
    header = {
        "config": dump_config(trainer.cfg),
        "code_version": __version__,
        "iteration": trainer.iteration,
        "params": [[name, list(arr.shape)] for name, arr in named],
        "adam": {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps, "step": adam.step},
        "rng": trainer.rng_states(),
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    arrays = [arr for _, arr in named] + list(adam.m) + list(adam.v)
    blob = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in arrays)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(head)))
        f.write(head)
        f.write(blob)
    tmp.replace(path)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _PREFIX.size:
        raise CheckpointError(f"{path}: file too short for a checkpoint")
    magic, version, head_len = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(raw[start : start + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header") from exc

    shapes = [(name, tuple(shape)) for name, shape in header["params"]]
    offset = start + head_len
    arrays = []
    for _ in range(3):
        for name, shape in shapes:
            n = int(np.prod(shape, dtype=np.int64))
            end = offset + 4 * n
            if end > len(raw):
                raise CheckpointError(f"{path}: truncated at {name}")
            arrays.append(np.frombuffer(raw, dtype="<f4", count=n, offset=offset).reshape(shape).astype(np.float32))
            offset = end
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")

    k = len(shapes)
    a = header["adam"]
    adam = AdamState(
        lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"], step=a["step"],
        m=arrays[k : 2 * k], v=arrays[2 * k :],
    )
    return Checkpoint(
        config_text=header["config"],
        code_version=header["code_version"],
        iteration=header["iteration"],
        params={name: arr for (name, _), arr in zip(shapes, arrays[:k])},
        adam=adam,
        rng_states=header["rng"],
    )


def check_dims(ckpt: Checkpoint, agent, error=CheckpointError) -> None:
    """Every agent parameter must be present with the same shape."""
    expected = {name: p.shape for name, p in agent.named_parameters()}
    got = {name: arr.shape for name, arr in ckpt.params.items()}
    if expected.keys() != got.keys():
        missing = sorted(expected.keys() - got.keys())
        extra = sorted(got.keys() - expected.keys())
        raise error(f"checkpoint parameters do not match the network: missing {missing[:3]}, extra {extra[:3]}")
    for name, shape in expected.items():
        if got[name] != shape:
            raise error(f"checkpoint dimension mismatch at {name}: {got[name]} vs {shape}")


def resume(trainer, ckpt: Checkpoint) -> None:
    check_dims(ckpt, trainer.agent, ConfigError)
    if len(ckpt.rng_states["envs"]) != trainer.env.n:
        raise ConfigError(f"checkpoint holds {len(ckpt.rng_states['envs'])} envs, run has {trainer.env.n}")
    trainer.restore(ckpt.params, ckpt.adam, ckpt.iteration, ckpt.rng_states)


def load_parameters(agent, ckpt: Checkpoint) -> None:
    check_dims(ckpt, agent)
    for name, p in agent.named_parameters():
        p.data = ckpt.params[name].copy()


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
