"""Ablation harness: train every (variant, seed) under one budget, evaluate, and tabulate."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import pandas as pd

from wmr.config import RunConfig, config_from_text, dump_config
from wmr.errors import ConfigError, NumericalError, SimulationError
from wmr.schemas.metrics import METRIC_COLUMNS, ComparisonRow, RunStatus
from wmr.services.evaluation.metrics import PolicyAgent, evaluate
from wmr.services.learner.trainer import Trainer
from wmr.services.learner.variants import variant


@dataclass(frozen=True)
class Job:
    label: str
    variant: str
    seed: int
    budget: int
    episodes: int
    config_text: str


def train_and_evaluate(job: Job) -> dict:
    """Default runner; module-level so worker processes can pickle it."""
    cfg = config_from_text(job.config_text)
    cfg = cfg.model_copy(update={"run": cfg.run.model_copy(update={"variant": job.variant, "seed": job.seed})})
    trainer = Trainer(cfg, seed=job.seed)
    for _ in range(job.budget):
        trainer.run_iteration()
    result = evaluate(trainer.cfg, PolicyAgent(trainer.agent), job.episodes, job.seed, label=job.label)
    return {**result.metrics.model_dump(include=set(METRIC_COLUMNS)), "breakdown": result.breakdown}


Runner = Callable[[Job], dict]


def _labels(variants: list[str]) -> list[str]:
    seen: dict[str, int] = {}
    out = []
    for v in variants:
        seen[v] = seen.get(v, 0) + 1
        out.append(v if seen[v] == 1 else f"{v}#{seen[v]}")
    return out


def _row(job: Job, runner: Runner) -> ComparisonRow:
    try:
        values = runner(job)
    except (NumericalError, SimulationError) as exc:
        return ComparisonRow(variant=job.label, seed=job.seed, status=RunStatus.FAILED, error=str(exc))
    return ComparisonRow(variant=job.label, seed=job.seed, **values)


def _collect(jobs: list[Job], runner: Runner, workers: int) -> list[ComparisonRow]:
    if workers <= 1 or len(jobs) <= 1:
        return [_row(job, runner) for job in jobs]
    rows = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(runner, job) for job in jobs]
        for job, fut in zip(jobs, futures):
            try:
                values = fut.result()
            except (NumericalError, SimulationError) as exc:
                rows.append(ComparisonRow(variant=job.label, seed=job.seed, status=RunStatus.FAILED, error=str(exc)))
                continue
            rows.append(ComparisonRow(variant=job.label, seed=job.seed, **values))
    return rows


@dataclass
class Comparison:
    rows: list[ComparisonRow]
    per_seed: pd.DataFrame
    summary: pd.DataFrame
    paired: pd.DataFrame


def paired_differences(per_seed: pd.DataFrame, baseline: str) -> pd.DataFrame:
    """Metric differences (variant - baseline) on seeds where both runs succeeded."""
    ok = per_seed[per_seed["status"] == RunStatus.OK.value]
    base = ok[ok["variant"] == baseline].set_index("seed")
    records = []
    for label in ok["variant"].unique():
        if label == baseline:
            continue
        other = ok[ok["variant"] == label].set_index("seed")
        for seed in sorted(set(base.index) & set(other.index)):
            rec = {"variant": label, "baseline": baseline, "seed": seed}
            for col in METRIC_COLUMNS:
                rec[f"d_{col}"] = other.at[seed, col] - base.at[seed, col]
            records.append(rec)
    columns = ["variant", "baseline", "seed", *[f"d_{c}" for c in METRIC_COLUMNS]]
    return pd.DataFrame(records, columns=columns)


def compare(
    cfg: RunConfig,
    variants: list[str],
    seeds: list[int],
    budget: int,
    episodes: int | None = None,
    workers: int | None = None,
    runner: Runner | None = None,
) -> Comparison:
    if len(variants) < 2:
        raise ConfigError("compare needs at least two variants")
    if len(seeds) < 3:
        raise ConfigError("compare needs at least three seeds")
    for v in variants:
        variant(v)
    text = dump_config(cfg)
    episodes = episodes or cfg.run.eval_episodes
    labels = _labels(variants)
    jobs = [
        Job(label, name, seed, budget, episodes, text)
        for label, name in zip(labels, variants)
        for seed in seeds
    ]
    rows = _collect(jobs, runner or train_and_evaluate, workers if workers is not None else cfg.worker_count)

    per_seed = pd.DataFrame(
        [{**r.model_dump(exclude={"breakdown"}), "status": r.status.value} for r in rows],
        columns=["variant", "seed", "status", "error", *METRIC_COLUMNS],
    )
    summary = summarize(per_seed, labels)
    return Comparison(rows, per_seed, summary, paired_differences(per_seed, labels[0]))


def summarize(per_seed: pd.DataFrame, labels: list[str]) -> pd.DataFrame:
    """Mean metrics over the successful seeds of each variant, in input order."""
    records = []
    for label in labels:
        ok = per_seed[(per_seed["variant"] == label) & (per_seed["status"] == RunStatus.OK.value)]
        rec = {"variant": label, "seeds_ok": len(ok)}
        for col in METRIC_COLUMNS:
            rec[col] = float(ok[col].mean()) if len(ok) else math.nan
        records.append(rec)
    return pd.DataFrame(records, columns=["variant", "seeds_ok", *METRIC_COLUMNS])


def majority(paired: pd.DataFrame, label: str, column: str, sign: float) -> bool:
    """True when sign * d_column > 0 on more than half of the paired seeds of `label`."""
    diffs = paired.loc[paired["variant"] == label, f"d_{column}"].dropna()
    return bool(len(diffs) and (sign * diffs > 0).sum() > len(diffs) / 2)
