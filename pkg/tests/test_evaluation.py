"""Tests for episode metrics, trajectory replay and the ablation harness."""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import math

import numpy as np
import pandas as pd
import pytest

from wmr.config import config_with_overrides
from wmr.errors import ConfigError, NumericalError
from wmr.schemas.metrics import METRIC_COLUMNS, RunStatus
from wmr.services.env import REWARD_TERMS, Layout
from wmr.services.evaluation.compare import compare, majority, paired_differences
from wmr.services.evaluation.metrics import (
    OracleAgent,
    PolicyAgent,
    bootstrap_stderr,
    evaluate,
    payload_sweep,
    recon_breakdown,
    recon_error,
)
from wmr.services.evaluation.replay import channel_names, replay, scenario_config
from wmr.services.learner import variant

LAYOUT = Layout(6)


def _cfg(**sections):
    base = {
        "run": {"envs": 3, "seed": 7},
        "sim": {"episode_seconds": 0.2},
        "terrain": {"kinds": ["flat"], "size": 2.0, "max_level": 1},
        "network": {"hidden": 8, "decoder_hidden": 8, "head_dims": [8]},
    }
    for name, values in sections.items():
        base[name] = {**base.get(name, {}), **values}
    return config_with_overrides("", base)


def _policy(cfg, name="wmr"):
    return PolicyAgent(variant(name).build_agent(LAYOUT, cfg, np.random.default_rng(0)))


def _fake_runner(job):
    """Metrics as a pure function of (variant, seed)."""
    base = 0.1 if job.variant == "wmr" else 0.2
    if job.seed == 13 and job.variant == "no-cutoff":
        raise NumericalError("non-finite loss: L_pi=nan")
    return {
        "E_vel": base + 0.01 * job.seed,
        "E_ang": base,
        "E_recon": base * 2,
        "M_terrain": 1.0,
        "M_reward": 1.0 - base,
        "breakdown": {"lin_vel": base},
    }


class TestReconBreakdown:
    def test_perfect_reconstruction(self):
        world = np.random.default_rng(0).normal(size=(5, LAYOUT.world_dim))
        breakdown = recon_breakdown(LAYOUT, world, world)
        assert set(breakdown) == set(LAYOUT.slices())
        assert recon_error(breakdown) == 0.0

    def test_single_field_error(self):
        world = np.zeros((4, LAYOUT.world_dim))
        recon = world.copy()
        recon[:, LAYOUT.slices()["payload"]] = 2.0
        breakdown = recon_breakdown(LAYOUT, recon, world)
        assert breakdown["payload"] == 4.0
        assert recon_error(breakdown) == pytest.approx(4.0 / len(breakdown))

    def test_empty_breakdown_is_nan(self):
        assert math.isnan(recon_error({}))


class TestEvaluate:
    def test_oracle_scores_zero(self):
        result = evaluate(_cfg(), OracleAgent(LAYOUT), 4, seed=1)
        assert result.metrics.E_vel == 0.0
        assert result.metrics.E_ang == 0.0
        assert result.metrics.E_recon == 0.0
        assert len(result.episodes) == 4

    def test_seeded_evaluation_repeats(self):
        cfg = _cfg()
        a = evaluate(cfg, _policy(cfg), 5, seed=3)
        b = evaluate(cfg, _policy(cfg), 5, seed=3)
        assert a.metrics == b.metrics
        assert a.breakdown == b.breakdown

    def test_breakdown_mean_is_recon_error(self):
        cfg = _cfg()
        result = evaluate(cfg, _policy(cfg), 4, seed=2)
        assert result.metrics.E_recon == pytest.approx(np.mean(list(result.breakdown.values())))
        frame = result.breakdown_frame()
        assert list(frame.columns) == ["field", "mse"]
        assert frame["field"].tolist() == list(LAYOUT.slices())

    def test_metrics_are_episode_means(self):
        cfg = _cfg()
        result = evaluate(cfg, _policy(cfg), 6, seed=4)
        for col in ("E_vel", "E_ang", "M_reward"):
            assert getattr(result.metrics, col) == pytest.approx(result.episodes[col].mean())

    def test_ppo_only_has_no_recon_error(self):
        cfg = _cfg(run={"variant": "ppo-only"})
        result = evaluate(cfg, _policy(cfg, "ppo-only"), 3, seed=1)
        assert math.isnan(result.metrics.E_recon)
        assert result.breakdown == {}
        assert math.isfinite(result.metrics.E_vel)

    def test_one_episode_per_env(self):
        class FlailingOracle(OracleAgent):
            """Env 0 swings its hips hard so it falls long before the others time out."""

            steps = 0

            def act(self, obs, world, starts):
                actions, recon = super().act(obs, world, starts)
                self.steps += 1
                actions[0, [0, 1, 3, 4]] = 4.0 if self.steps % 2 else -4.0
                return actions, recon

        cfg = _cfg(sim={"episode_seconds": 1.0})
        result = evaluate(cfg, FlailingOracle(LAYOUT), 4, seed=1)
        assert result.episodes["env"].tolist() == [0, 1, 2, 3]
        full = int(round(cfg.sim.episode_seconds / (cfg.sim.dt * cfg.sim.decimation)))
        assert result.episodes["length"].max() <= full

    def test_needs_an_episode(self):
        with pytest.raises(ConfigError):
            evaluate(_cfg(), OracleAgent(LAYOUT), 0, seed=1)

    def test_stderr_columns(self):
        cfg = _cfg()
        result = evaluate(cfg, _policy(cfg), 5, seed=5)
        assert set(result.stderr) == set(METRIC_COLUMNS)
        assert all(v >= 0 for v in result.stderr.values())


class TestBootstrap:
    def test_single_episode_has_zero_error(self):
        frame = pd.DataFrame([{c: 1.0 for c in METRIC_COLUMNS}])
        assert all(v == 0.0 for v in bootstrap_stderr(frame, seed=0).values())

    def test_constant_column(self):
        frame = pd.DataFrame([{c: 2.0 for c in METRIC_COLUMNS}] * 10)
        assert bootstrap_stderr(frame, seed=0)["E_vel"] == 0.0

    def test_all_nan_column(self):
        frame = pd.DataFrame([{**{c: 1.0 for c in METRIC_COLUMNS}, "E_recon": math.nan}] * 3)
        assert math.isnan(bootstrap_stderr(frame, seed=0)["E_recon"])


class TestPayloadSweep:
    def test_estimates_per_payload(self):
        cfg = _cfg()
        estimates = payload_sweep(cfg, _policy(cfg), seed=0, payloads=[-1.0, 0.0, 1.5], seconds=0.2)
        assert [e.payload for e in estimates] == [-1.0, 0.0, 1.5]
        for e in estimates:
            assert e.abs_error == pytest.approx(abs(e.predicted - e.payload))

    def test_needs_estimator(self):
        cfg = _cfg(run={"variant": "ppo-only"})
        with pytest.raises(ConfigError):
            payload_sweep(cfg, _policy(cfg, "ppo-only"), seed=0, seconds=0.2)


class TestReplay:
    def test_reward_terms_add_up(self):
        cfg = _cfg()
        frame, summary = replay(cfg, OracleAgent(LAYOUT), seed=0)
        terms = frame[[f"reward.{t}" for t in REWARD_TERMS]].sum(axis=1)
        np.testing.assert_allclose(terms, frame["reward.total"], atol=1e-9)
        np.testing.assert_allclose(frame["reward"], frame["reward.total"] * cfg.reward.scale, atol=1e-12)
        assert summary.episode_return == pytest.approx(frame["reward"].sum())

    def test_oracle_trace(self):
        frame, summary = replay(_cfg(), OracleAgent(LAYOUT), seed=0)
        assert summary.ended in ("terminated", "timed-out")
        assert summary.steps == len(frame) <= 10
        assert summary.recon_error == 0.0
        names = channel_names(LAYOUT)
        assert len(names) == LAYOUT.world_dim
        np.testing.assert_allclose(
            frame[[f"pred.{n}" for n in names]].to_numpy(), frame[[f"true.{n}" for n in names]].to_numpy(), atol=1e-9
        )

    def test_replay_repeats(self):
        cfg = _cfg()
        a, _ = replay(cfg, _policy(cfg), seed=4, steps=5)
        b, _ = replay(cfg, _policy(cfg), seed=4, steps=5)
        pd.testing.assert_frame_equal(a, b)

    def test_stair_descent_scenario(self):
        cfg = scenario_config(_cfg(terrain={"max_level": 9}), "stair-descent")
        assert cfg.terrain.kinds == ["stairs"]
        assert cfg.terrain.initial_level == 5
        assert cfg.terrain.curriculum is False
        frame, _ = replay(_cfg(), OracleAgent(LAYOUT), seed=0, scenario="stair-descent", steps=3)
        assert (frame["cmd_vx"] == 0.3).all()

    def test_unknown_scenario(self):
        with pytest.raises(ConfigError):
            scenario_config(_cfg(), "ice-rink")


class TestCompare:
    def test_failed_run_is_reported_and_others_continue(self):
        result = compare(_cfg(), ["wmr", "no-cutoff"], [11, 12, 13], budget=1, episodes=1, workers=1, runner=_fake_runner)
        status = {(r.variant, r.seed): r.status for r in result.rows}
        assert status[("no-cutoff", 13)] == RunStatus.FAILED
        assert sum(s == RunStatus.OK for s in status.values()) == 5
        summary = result.summary.set_index("variant")
        assert summary.at["no-cutoff", "seeds_ok"] == 2
        assert summary.at["wmr", "E_ang"] == pytest.approx(0.1)
        assert sorted(result.paired["seed"]) == [11, 12]

    def test_self_comparison_has_zero_differences(self):
        result = compare(_cfg(), ["wmr", "wmr"], [1, 2, 3], budget=1, episodes=1, workers=1, runner=_fake_runner)
        assert list(result.summary["variant"]) == ["wmr", "wmr#2"]
        diffs = result.paired[[f"d_{c}" for c in METRIC_COLUMNS]].to_numpy()
        assert diffs.shape == (3, len(METRIC_COLUMNS))
        assert not diffs.any()

    def test_paired_differences_sign(self):
        result = compare(_cfg(), ["wmr", "no-cutoff"], [1, 2, 3], budget=1, episodes=1, workers=1, runner=_fake_runner)
        paired = paired_differences(result.per_seed, "wmr")
        np.testing.assert_allclose(paired["d_E_recon"], 0.2)
        assert majority(paired, "no-cutoff", "E_recon", 1.0)
        assert not majority(paired, "no-cutoff", "M_reward", 1.0)

    def test_needs_two_variants(self):
        with pytest.raises(ConfigError):
            compare(_cfg(), ["wmr"], [1, 2, 3], budget=1, runner=_fake_runner)

    def test_needs_three_seeds(self):
        with pytest.raises(ConfigError):
            compare(_cfg(), ["wmr", "no-cutoff"], [1, 2], budget=1, runner=_fake_runner)

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            compare(_cfg(), ["wmr", "dagger"], [1, 2, 3], budget=1, runner=_fake_runner)
