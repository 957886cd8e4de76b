"""Pipeline orchestrator: train -> checkpoint -> evaluate / ablate / replay.

Each run_* function is one CLI subcommand. Progress goes to stdout as
[TAG] lines; tables go to CSV files under `run.out_dir`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from wmr.config import RunConfig, config_with_overrides, dump_config
from wmr.errors import ConfigError
from wmr.schemas.metrics import METRIC_COLUMNS
from wmr.services.checkpoint import Checkpoint, load_checkpoint, load_parameters, resume, save_checkpoint
from wmr.services.env.layout import Layout
from wmr.services.evaluation.compare import Comparison, compare, majority
from wmr.services.evaluation.metrics import EvalResult, PolicyAgent, evaluate, payload_sweep
from wmr.services.evaluation.replay import replay
from wmr.services.learner.networks import WMRAgent
from wmr.services.learner.trainer import Trainer
from wmr.services.learner.variants import audit_line, variant
from wmr.services.simbody.model import RobotModel

METRICS_FLOAT = "%.6g"
TRACE_FLOAT = "%.9g"


def print_config(cfg: RunConfig) -> None:
    print("[CONFIG] effective configuration:")
    for line in dump_config(cfg).splitlines():
        print(f"  {line}")


def config_from_checkpoint(ckpt: Checkpoint, overrides: list[str] | dict | None) -> RunConfig:
    return config_with_overrides(ckpt.config_text, overrides)


def load_agent(cfg: RunConfig, ckpt: Checkpoint | None, seed: int) -> WMRAgent:
    """Agent wired for cfg.run.variant; parameters from `ckpt` or a fresh init."""
    layout = Layout(RobotModel.from_config(cfg.robot).n_joints)
    init = np.random.SeedSequence([seed, 1]).spawn(1)[0]
    agent = variant(cfg).build_agent(layout, cfg, np.random.default_rng(init))
    if ckpt is not None:
        load_parameters(agent, ckpt)
    return agent


def _write(frame: pd.DataFrame, path: Path, float_format: str = METRICS_FLOAT) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=float_format)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc
    return path


# -------------------------------------------------------------------- train


@dataclass
class TrainResult:
    checkpoint: Path
    log: pd.DataFrame


def _checkpoint_path(cfg: RunConfig, iteration: int) -> Path:
    return cfg.checkpoints_dir / f"iter_{iteration:06d}.wmr"


def run_train(cfg: RunConfig, resume_from: str | Path | None = None) -> TrainResult:
    cfg.ensure_dirs()
    print_config(cfg)
    trainer = Trainer(cfg)
    print(audit_line(trainer.wiring, trainer.agent, cfg))

    log_path = cfg.out_path / "train_log.csv"
    rows: list[dict] = []
    if resume_from:
        ckpt = load_checkpoint(resume_from)
        resume(trainer, ckpt)
        if log_path.exists():
            previous = pd.read_csv(log_path)
            rows = previous[previous["iteration"] <= ckpt.iteration].to_dict("records")
        print(f"[CKPT] resumed {resume_from} at iteration {ckpt.iteration}")
    else:
        trainer.reset()

    while trainer.iteration < cfg.run.iters:
        log, sps = trainer.run_iteration()
        rows.append(log.model_dump())
        print(
            f"[TRAIN] iter={log.iteration} reward={log.mean_reward:.4f} L_recon={log.L_recon:.4f} "
            f"L_v={log.L_v:.4f} L_pi={log.L_pi:.4f} terrain={log.terrain_level:.2f} "
            f"recon_err={log.recon_error:.4f} sps={sps:.0f}"
        )
        if cfg.run.checkpoint_every and log.iteration % cfg.run.checkpoint_every == 0:
            path = save_checkpoint(_checkpoint_path(cfg, log.iteration), trainer)
            _write(pd.DataFrame(rows), log_path)
            print(f"[CKPT] saved {path}")

    final = save_checkpoint(cfg.checkpoints_dir / "final.wmr", trainer)
    frame = pd.DataFrame(rows)
    _write(frame, log_path)
    print(f"[CKPT] saved {final}")
    print(f"\nTraining complete: {trainer.iteration} iterations, log at {log_path}")
    return TrainResult(final, frame)


# --------------------------------------------------------------------- eval


def _metric_frame(result: EvalResult) -> pd.DataFrame:
    return pd.DataFrame([result.metrics.row()], columns=["variant", "seed", *METRIC_COLUMNS])


def run_eval(
    cfg: RunConfig,
    ckpt: Checkpoint | None,
    episodes: int | None = None,
    seed: int | None = None,
    sweep: bool = False,
) -> EvalResult:
    cfg.ensure_dirs()
    print_config(cfg)
    seed = cfg.run.seed if seed is None else seed
    episodes = episodes or cfg.run.eval_episodes
    agent = PolicyAgent(load_agent(cfg, ckpt, seed))
    result = evaluate(cfg, agent, episodes, seed)

    m = result.metrics
    print(
        f"[EVAL] variant={m.variant} seed={m.seed} episodes={episodes} E_vel={m.E_vel:.4f} "
        f"E_ang={m.E_ang:.4f} E_recon={m.E_recon:.4f} M_terrain={m.M_terrain:.2f} M_reward={m.M_reward:.4f}"
    )
    out = cfg.out_path
    _write(_metric_frame(result), out / "metrics.csv")
    _write(result.breakdown_frame(), out / "recon_breakdown.csv")
    stderr = pd.DataFrame([{"variant": m.variant, "seed": m.seed, **result.stderr}])
    _write(stderr, out / "metrics_stderr.csv")

    if sweep:
        estimates = payload_sweep(cfg, agent, seed)
        frame = pd.DataFrame([e.model_dump() for e in estimates], columns=["payload", "predicted", "abs_error"])
        _write(frame, out / "payload_sweep.csv")
        for e in estimates:
            print(f"[EVAL] payload={e.payload:+.2f} predicted={e.predicted:+.3f} abs_error={e.abs_error:.3f}")
    return result


# ------------------------------------------------------------------- ablate


def run_ablate(
    cfg: RunConfig,
    variants: list[str],
    seeds: list[int],
    budget: int,
    episodes: int | None = None,
    workers: int | None = None,
    runner=None,
) -> Comparison:
    cfg.ensure_dirs()
    print_config(cfg)
    print(f"[ABLATE] variants={','.join(variants)} seeds={','.join(map(str, seeds))} budget={budget}")
    result = compare(cfg, variants, seeds, budget, episodes, workers, runner)

    for row in result.rows:
        if row.status.value == "failed":
            print(f"[FAIL] {row.variant} seed={row.seed}: {row.error}")
    out = cfg.out_path
    means = result.summary.drop(columns=["seeds_ok"]).assign(seed="mean")
    ok = result.per_seed[result.per_seed["status"] == "ok"]
    metrics = pd.concat([ok[["variant", "seed", *METRIC_COLUMNS]], means[["variant", "seed", *METRIC_COLUMNS]]])
    _write(metrics, out / "metrics.csv")
    _write(result.per_seed, out / "comparison.csv")
    _write(result.paired, out / "paired_differences.csv")

    for _, s in result.summary.iterrows():
        print(
            f"[ABLATE] {s['variant']}: seeds_ok={s['seeds_ok']} E_vel={s['E_vel']:.4f} "
            f"E_recon={s['E_recon']:.4f} M_reward={s['M_reward']:.4f}"
        )
    baseline = result.summary["variant"].iloc[0]
    for label in result.summary["variant"].iloc[1:]:
        better_recon = majority(result.paired, label, "E_recon", 1.0)
        better_reward = majority(result.paired, label, "M_reward", -1.0)
        print(
            f"[ABLATE] {baseline} vs {label}: {baseline} has lower E_recon on most seeds={better_recon}, "
            f"higher M_reward on most seeds={better_reward}"
        )
    return result


# ------------------------------------------------------------------- replay


def run_replay(
    cfg: RunConfig,
    ckpt: Checkpoint | None,
    seed: int | None = None,
    out: str | Path | None = None,
    scenario: str = "training",
    steps: int | None = None,
) -> Path:
    seed = cfg.run.seed if seed is None else seed
    agent = PolicyAgent(load_agent(cfg, ckpt, seed))
    frame, summary = replay(cfg, agent, seed, steps, scenario)
    path = Path(out) if out else cfg.out_path / f"replay_{scenario}_seed{seed}.csv"
    _write(frame, path, TRACE_FLOAT)
    for line in summary.lines():
        print(f"[REPLAY] {line}")
    print(f"[REPLAY] wrote {len(frame)} rows to {path}")
    return path
