"""Experiment drivers: question-budget sweep and reward ablation.

Both train one policy per (setting, seed), evaluate it on the held-out splits
and write a ``runs.json`` index next to the per-run reports so the summary
table can be rebuilt later from disk alone.
"""
import logging
import os
from typing import Callable, Mapping, Sequence

import numpy as np
import pandas as pd

from evaluation.harness import evaluate
from evaluation.metrics import MetricsReport
from rl.policy import PolicyNet
from rl.policy_agent import PolicyAgent
from rl.trainer import train
from simulator.episode import EpisodeSpec
from utils.config import RunConfig
from utils.io_utils import RunManifest, read_json, write_csv, write_json

logger = logging.getLogger(__name__)

RUN_INDEX = "runs.json"
METRICS = ("SR", "ARS", "QR")

TrainFn = Callable[[RunConfig, list[EpisodeSpec], list[EpisodeSpec], str], PolicyNet]


def default_train_fn(config: RunConfig, train_episodes: list[EpisodeSpec], probe_episodes: list[EpisodeSpec],
                     out_dir: str) -> PolicyNet:
    return train(config, train_episodes, probe_episodes, out_dir).policy


def rebudget(episodes: Sequence[EpisodeSpec], offset: int) -> list[EpisodeSpec]:
    return [spec.with_budget(spec.K + offset) for spec in episodes]


def _over_budget_penalties_within_budget(records) -> int:
    """Steps that paid the over-budget penalty while the question count was still within budget."""
    count = 0
    for record in records:
        asked = 0
        for step in record.steps:
            if step.info.get("asked"):
                asked += 1
                if step.reward.budget_penalty > 0 and asked <= record.episode.budget:
                    count += 1
    return count


def _run_setting(
    label: str,
    config: RunConfig,
    train_episodes: list[EpisodeSpec],
    eval_splits: Mapping[str, list[EpisodeSpec]],
    run_dir: str,
    train_fn: TrainFn,
) -> list[dict]:
    probe = next(iter(eval_splits.values()), [])
    policy = train_fn(config, train_episodes, probe, run_dir)
    rows = []
    for split, episodes in eval_splits.items():
        report, records = evaluate(
            lambda: PolicyAgent(policy, config.scene, greedy=True, mask_invalid=config.train.mask_invalid),
            episodes, config.reward, seeds=config.eval.seeds, out_dir=run_dir, name=split,
        )
        rows.append({
            "setting": label,
            "seed": config.train.seed,
            "split": split,
            **{m: getattr(report, m) for m in METRICS},
            "penalties_within_budget": _over_budget_penalties_within_budget(records),
            "report": os.path.join(run_dir, f"{split}.json"),
        })
    return rows


def _limit(episodes: Sequence[EpisodeSpec], config: RunConfig) -> list[EpisodeSpec]:
    limit = config.eval.max_episodes
    return list(episodes) if limit is None else list(episodes)[:limit]


def budget_sweep(
    config: RunConfig,
    episodes: Mapping[str, list[EpisodeSpec]],
    out_dir: str,
    offsets: Sequence[int] | None = None,
    train_seeds: Sequence[int] = (0,),
    train_fn: TrainFn = default_train_fn,
) -> pd.DataFrame:
    """One training run per (budget offset, seed); budgets are K + offset for every episode."""
    offsets = list(offsets if offsets is not None else config.eval.budget_offsets)
    rows = []
    for offset in offsets:
        for seed in train_seeds:
            run_config = config.with_overrides({"dataset": {"budget_offset": offset}, "train": {"seed": seed}})
            run_dir = os.path.join(out_dir, f"budget_K+{offset}", f"seed_{seed}")
            eval_splits = {s: rebudget(_limit(episodes[s], config), offset) for s in config.eval.splits}
            logger.info("Budget sweep: K+%d seed %d", offset, seed)
            for row in _run_setting(f"K+{offset}", run_config, rebudget(episodes["train"], offset), eval_splits,
                                    run_dir, train_fn):
                rows.append({"budget_offset": offset, **row})
    return _finish(out_dir, "sweep-budget", config, rows, sweep_table(rows))


def ablation_suite(
    config: RunConfig,
    episodes: Mapping[str, list[EpisodeSpec]],
    out_dir: str,
    modes: Sequence[str] | None = None,
    train_seeds: Sequence[int] = (0,),
    train_fn: TrainFn = default_train_fn,
) -> pd.DataFrame:
    """Identical runs that differ only in the reward mode."""
    modes = list(modes if modes is not None else config.eval.ablation_modes)
    rows = []
    for mode in modes:
        for seed in train_seeds:
            run_config = config.with_overrides({"reward": {"mode": mode}, "train": {"seed": seed}})
            run_dir = os.path.join(out_dir, mode, f"seed_{seed}")
            eval_splits = {s: _limit(episodes[s], config) for s in config.eval.splits}
            logger.info("Reward ablation: %s seed %d", mode, seed)
            rows.extend(_run_setting(mode, run_config, episodes["train"], eval_splits, run_dir, train_fn))
    return _finish(out_dir, "ablate-rewards", config, rows, ablation_table(rows))


def _finish(out_dir: str, command: str, config: RunConfig, rows: list[dict], table: pd.DataFrame) -> pd.DataFrame:
    write_json(os.path.join(out_dir, RUN_INDEX), {"command": command, "runs": rows})
    table_path = os.path.join(out_dir, "table.csv")
    table.to_csv(table_path)
    RunManifest(command=command, config_hash=config.config_hash(), seed=config.train.seed,
                config=config.model_dump(mode="json")).finish(table=table_path).write(out_dir)
    return table


def _mean(values: list) -> float | None:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def ablation_table(rows: list[dict]) -> pd.DataFrame:
    """One row per setting, one column per (split, metric), averaged over seeds."""
    settings = list(dict.fromkeys(r["setting"] for r in rows))
    splits = list(dict.fromkeys(r["split"] for r in rows))
    table = {}
    for setting in settings:
        table[setting] = {
            f"{split}_{m}": _mean([r[m] for r in rows if r["setting"] == setting and r["split"] == split])
            for split in splits for m in METRICS
        }
    frame = pd.DataFrame.from_dict(table, orient="index")
    frame.index.name = "setting"
    return frame


def sweep_table(rows: list[dict]) -> pd.DataFrame:
    return ablation_table(rows)


def table_from_dir(out_dir: str) -> pd.DataFrame:
    """Rebuild the summary table from the per-run report files listed in ``runs.json``."""
    index = read_json(os.path.join(out_dir, RUN_INDEX))
    rows = []
    for run in index["runs"]:
        report = MetricsReport(**read_json(run["report"]))
        rows.append({**run, **{m: getattr(report, m) for m in METRICS}})
    return ablation_table(rows)


def write_table(table: pd.DataFrame, path: str) -> str:
    rows = [{"setting": idx, **row} for idx, row in table.to_dict(orient="index").items()]
    return write_csv(path, rows)
