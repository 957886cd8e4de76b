"""Tests for the binary checkpoint format and resuming from it."""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import struct

import numpy as np
import pytest

from wmr.config import config_with_overrides, dump_config
from wmr.errors import CheckpointError, ConfigError
from wmr.services.checkpoint import (
    FORMAT_VERSION,
    file_digest,
    load_checkpoint,
    load_parameters,
    resume,
    save_checkpoint,
)
from wmr.services.learner.trainer import Trainer
from wmr.services.pipeline import load_agent


def _cfg(**sections):
    base = {
        "run": {"envs": 2, "seed": 4, "steps_per_iter": 4},
        "terrain": {"kinds": ["flat"], "size": 2.0, "max_level": 1},
        "network": {"hidden": 8, "decoder_hidden": 8, "head_dims": [8]},
        "ppo": {"epochs": 1, "minibatches": 1},
    }
    for name, values in sections.items():
        base[name] = {**base.get(name, {}), **values}
    return config_with_overrides("", base)


@pytest.fixture
def trained(tmp_path):
    trainer = Trainer(_cfg())
    trainer.run_iteration()
    path = save_checkpoint(tmp_path / "ckpt" / "iter_1.wmr", trainer)
    return trainer, path


class TestRoundTrip:
    def test_parameters_and_optimizer(self, trained):
        trainer, path = trained
        ckpt = load_checkpoint(path)
        assert ckpt.iteration == 1
        assert ckpt.config_text == dump_config(trainer.cfg)
        for name, arr in trainer.named_arrays():
            assert np.array_equal(ckpt.params[name], arr.astype(np.float32))
        assert ckpt.adam.step == trainer.adam.step
        for saved, live in zip(ckpt.adam.m, trainer.adam.m):
            np.testing.assert_array_equal(saved, np.asarray(live, dtype=np.float32))

    def test_rng_states_survive(self, trained):
        trainer, path = trained
        ckpt = load_checkpoint(path)
        assert ckpt.rng_states == trainer.rng_states()

    def test_save_is_byte_stable(self, trained, tmp_path):
        trainer, path = trained
        other = save_checkpoint(tmp_path / "copy.wmr", trainer)
        assert file_digest(path) == file_digest(other)

    def test_resume_restores_state(self, trained):
        trainer, path = trained
        fresh = Trainer(_cfg())
        resume(fresh, load_checkpoint(path))
        assert fresh.iteration == 1
        for (name, a), (_, b) in zip(fresh.named_arrays(), trainer.named_arrays()):
            np.testing.assert_array_equal(a, b.astype(a.dtype))
        log, _ = fresh.run_iteration()
        assert log.iteration == 2

    def test_load_into_agent(self, trained):
        trainer, path = trained
        ckpt = load_checkpoint(path)
        agent = load_agent(ckpt.config, ckpt, seed=99)
        for (_, a), (_, b) in zip(agent.named_parameters(), trainer.agent.named_parameters()):
            np.testing.assert_array_equal(a.data, b.data.astype(a.data.dtype))


class TestErrors:
    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "absent.wmr")

    def test_bad_magic(self, trained):
        _, path = trained
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_future_version(self, trained):
        _, path = trained
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", FORMAT_VERSION + 1)
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_truncated(self, trained):
        _, path = trained
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes(self, trained):
        _, path = trained
        path.write_bytes(path.read_bytes() + b"\x00" * 4)
        with pytest.raises(CheckpointError, match="trailing"):
            load_checkpoint(path)

    def test_too_short(self, tmp_path):
        path = tmp_path / "tiny.wmr"
        path.write_bytes(b"WMR")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_dimension_mismatch(self, trained):
        _, path = trained
        ckpt = load_checkpoint(path)
        bigger = _cfg(network={"hidden": 16})
        agent = load_agent(bigger, None, seed=0)
        with pytest.raises(CheckpointError, match="mismatch"):
            load_parameters(agent, ckpt)

    def test_variant_mismatch(self, trained):
        _, path = trained
        agent = load_agent(_cfg(run={"variant": "ppo-only"}), None, seed=0)
        with pytest.raises(CheckpointError):
            load_parameters(agent, load_checkpoint(path))

    def test_resume_with_other_env_count(self, trained):
        _, path = trained
        with pytest.raises(ConfigError):
            resume(Trainer(_cfg(run={"envs": 3})), load_checkpoint(path))
