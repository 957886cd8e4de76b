"""End-to-end tests for the command-line entry point and its exit codes."""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pandas as pd
import pytest

from wmr.cli import EXIT_CONFIG, EXIT_OK, EXIT_USAGE, build_parser, main, overrides_from_args

TINY = """\
run.envs = 2
run.seed = 3
run.iters = 1
run.steps_per_iter = 4
run.checkpoint_every = 0
run.eval_episodes = 2
sim.episode_seconds = 0.2
terrain.kinds = ["flat"]
terrain.size = 2.0
terrain.max_level = 1
network.hidden = 8
network.decoder_hidden = 8
network.head_dims = [8]
ppo.epochs = 1
ppo.minibatches = 1
"""


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY)
    return path


class TestUsage:
    def test_unknown_subcommand(self, capsys):
        assert main(["dance"]) == EXIT_USAGE
        assert "usage" in capsys.readouterr().err

    def test_missing_subcommand(self):
        assert main([]) == EXIT_USAGE

    def test_unknown_variant_flag(self):
        assert main(["train", "--variant", "dagger"]) == EXIT_USAGE

    def test_bad_seed_list(self):
        assert main(["ablate", "--seeds", "1,x,3"]) == EXIT_USAGE

    def test_flags_win_over_set(self):
        args = build_parser().parse_args(["train", "--set", "run.seed=5", "--seed", "9", "--variant", "no-cutoff"])
        items = overrides_from_args(args)
        assert items.index("run.seed=5") < items.index("run.seed=9")
        assert 'run.variant="no-cutoff"' in items


class TestConfigErrors:
    def test_unknown_set_key(self, tiny, capsys):
        assert main(["train", "--config", str(tiny), "--set", "ppo.nope=1"]) == EXIT_CONFIG
        assert "ppo.nope" in capsys.readouterr().err

    def test_payload_heavier_than_torso(self, tiny, capsys):
        code = main(["train", "--config", str(tiny), "--set", "randomization.payload=[-20.0, -15.0]"])
        assert code == EXIT_CONFIG
        assert "randomization.payload" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "absent.toml")]) == EXIT_CONFIG

    def test_corrupt_checkpoint(self, tmp_path):
        bad = tmp_path / "bad.wmr"
        bad.write_bytes(b"not a checkpoint at all")
        assert main(["eval", "--checkpoint", str(bad)]) == EXIT_CONFIG

    def test_missing_checkpoint(self, tmp_path):
        assert main(["replay", "--checkpoint", str(tmp_path / "none.wmr")]) == EXIT_CONFIG

    def test_malformed_trajectory_file(self, tiny, tmp_path):
        traj = tmp_path / "cmds.csv"
        traj.write_text("t,vx,vy,wz\n0,0.1,0.0\n")
        code = main([
            "eval", "--config", str(tiny), "--out", str(tmp_path / "out"),
            "--set", 'commands.source="trajectory-file"', "--set", f"commands.trajectory_file={str(traj)!r}",
        ])
        assert code == EXIT_CONFIG


class TestEndToEnd:
    def test_train_eval_replay(self, tiny, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["train", "--config", str(tiny), "--out", str(out)]) == EXIT_OK
        train_out = capsys.readouterr().out
        assert "[WIRING] variant=wmr" in train_out
        assert "cutoff=on" in train_out
        final = out / "checkpoints" / "final.wmr"
        assert final.exists()
        log = pd.read_csv(out / "train_log.csv")
        assert log["iteration"].tolist() == [1]

        assert main(["eval", "--checkpoint", str(final), "--out", str(out), "--episodes", "2"]) == EXIT_OK
        metrics = pd.read_csv(out / "metrics.csv")
        assert list(metrics.columns) == ["variant", "seed", "E_vel", "E_ang", "E_recon", "M_terrain", "M_reward"]
        assert (out / "recon_breakdown.csv").exists()
        assert (out / "metrics_stderr.csv").exists()

        trace = tmp_path / "trace.csv"
        assert main(["replay", "--checkpoint", str(final), "--out", str(trace), "--steps", "3"]) == EXIT_OK
        frame = pd.read_csv(trace)
        assert 1 <= len(frame) <= 3
        assert "reward.total" in frame.columns

    def test_resume_appends_to_log(self, tiny, tmp_path):
        out = tmp_path / "run"
        assert main(["train", "--config", str(tiny), "--out", str(out)]) == EXIT_OK
        final = out / "checkpoints" / "final.wmr"
        code = main(["train", "--config", str(tiny), "--out", str(out), "--iters", "2", "--resume", str(final)])
        assert code == EXIT_OK
        assert pd.read_csv(out / "train_log.csv")["iteration"].tolist() == [1, 2]
