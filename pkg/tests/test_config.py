"""Tests for the flat dotted-key configuration."""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pathlib import Path

import pytest
from pydantic_settings import TomlConfigSettingsSource

from wmr.config import (
    RunConfig,
    config_from_text,
    config_with_overrides,
    dump_config,
    load_config,
    parse_override,
)
from wmr.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


class TestLoad:
    def test_empty_text_gives_defaults(self):
        cfg = config_with_overrides("")
        assert cfg.run.variant == "wmr"
        assert cfg.loss.dis == 0.3
        assert cfg.ppo.clip == 0.2

    def test_shipped_configs_load(self):
        default = load_config(CONFIGS / "default.toml")
        smoke = load_config(CONFIGS / "smoke.toml")
        assert default.network.hidden == 256
        assert smoke.network.hidden == 64
        assert smoke.run.out_dir == "runs/smoke"

    def test_default_keyword(self):
        assert dump_config(load_config("default")) == dump_config(RunConfig())

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.toml")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="ppo.learning_rate"):
            config_with_overrides("ppo.learning_rate = 1e-3\n")

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="optimizer"):
            config_with_overrides("optimizer.lr = 1e-3\n")

    def test_invalid_value(self):
        with pytest.raises(ConfigError, match="run.variant"):
            config_with_overrides('run.variant = "dagger"\n')

    def test_malformed_file(self):
        with pytest.raises(ConfigError):
            config_with_overrides("ppo.lr = = 3\n")

    def test_robot_arrays_need_six_entries(self):
        with pytest.raises(ConfigError):
            config_with_overrides("robot.kp = [1.0, 2.0]\n")

    def test_file_is_a_settings_source(self):
        sources = RunConfig.settings_customise_sources(RunConfig, "init", None, None, None)
        assert sources[0] == "init"
        assert isinstance(sources[1], TomlConfigSettingsSource)
        assert len(sources) == 2

    def test_environment_is_ignored(self, monkeypatch):
        monkeypatch.setenv("RUN", '{"seed": 7}')
        monkeypatch.setenv("PPO__LR", "0.5")
        cfg = config_with_overrides("")
        assert cfg.run.seed == 1
        assert cfg.ppo.lr == 2.5e-5

    def test_payload_must_leave_torso_mass(self):
        with pytest.raises(ConfigError, match="randomization.payload"):
            config_with_overrides("robot.torso_mass = 10.0\nrandomization.payload = [-20.0, -15.0]\n")

    def test_payload_ignored_without_randomization(self):
        cfg = config_with_overrides("randomization.enabled = false\nrandomization.payload = [-20.0, -15.0]\n")
        assert not cfg.randomization.enabled

    @pytest.mark.parametrize("key", ["friction", "stiffness", "damping"])
    def test_scale_ranges_stay_positive(self, key):
        with pytest.raises(ConfigError, match=f"randomization.{key}"):
            config_with_overrides("", [f"randomization.{key}=[0.0, 1.0]"])


class TestOverrides:
    def test_override_beats_file(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("ppo.lr = 1.0e-3\nrun.envs = 8\n")
        cfg = load_config(path, ["ppo.lr=2e-3"])
        assert cfg.ppo.lr == 2e-3
        assert cfg.run.envs == 8

    def test_later_override_wins(self):
        cfg = config_with_overrides("", ["run.seed=3", "run.seed=4"])
        assert cfg.run.seed == 4

    def test_dict_overrides_merge_per_section(self):
        cfg = config_with_overrides("run.envs = 8\n", {"run": {"seed": 9}})
        assert cfg.run.envs == 8 and cfg.run.seed == 9

    def test_parse_override_values(self):
        assert parse_override("ppo.lr=1e-3") == {"ppo": {"lr": 0.001}}
        assert parse_override("terrain.kinds=[\"flat\"]") == {"terrain": {"kinds": ["flat"]}}
        assert parse_override("run.variant=no-cutoff") == {"run": {"variant": "no-cutoff"}}

    @pytest.mark.parametrize("item", ["ppo.lr", "lr=1", "a.b.c=1"])
    def test_bad_override(self, item):
        with pytest.raises(ConfigError):
            parse_override(item)

    def test_unknown_override_key(self):
        with pytest.raises(ConfigError):
            config_with_overrides("", ["ppo.nope=1"])


class TestDump:
    def test_round_trip_is_stable(self):
        cfg = config_with_overrides("", ["ppo.lr=3e-4", "terrain.kinds=[\"flat\", \"stairs\"]", "noise.enabled=false"])
        text = dump_config(cfg)
        again = config_from_text(text)
        assert again == cfg
        assert dump_config(again) == text

    def test_one_key_per_line(self):
        lines = dump_config(RunConfig()).splitlines()
        assert all(line.count(" = ") == 1 for line in lines)
        assert "run.seed = 1" in lines

    def test_paths(self, tmp_path):
        cfg = config_with_overrides("", {"run": {"out_dir": str(tmp_path / "out")}})
        cfg.ensure_dirs()
        assert cfg.checkpoints_dir.is_dir()
