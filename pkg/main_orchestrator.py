"""End-to-end flows behind each CLI command.

Every flow loads its inputs, does its work, writes its artifacts and leaves a
``manifest.json`` in its output directory so the run can be reproduced from
the manifest alone.
"""
import glob
import logging
import os
from typing import Callable, Sequence

from dotenv import load_dotenv

from agents.base_agent import BaseAgent
from agents.baseline_agents import GreedyNoAskAgent, RandomAgent
from agents.expert_agent import ExpertAgent
from agents.judge_agent import FixtureStore, JudgeClient, LLMJudge, calibrate
from evaluation.experiments import RUN_INDEX, ablation_suite, budget_sweep, table_from_dir, write_table
from evaluation.harness import evaluate, report_from_trajectories, run_episodes
from evaluation.metrics import MetricsReport
from rl.policy import PolicyNet
from rl.policy_agent import PolicyAgent
from rl.trainer import TrainResult, train
from simulator.task_generator import SPLITS, generate_dataset
from simulator.trajectory import read_trajectories, replay, write_trajectories
from simulator.vocabulary import load_vocabulary
from utils.config import BridgeSettings, RunConfig
from utils.io_utils import RunManifest, dataset_hash, load_dataset, save_dataset, write_csv

load_dotenv()

logger = logging.getLogger(__name__)

AGENT_KINDS = ("policy", "expert", "expert_early_stop", "greedy_noask", "random")
EXPERT_TRAJECTORIES = "expert_trajectories.jsonl"
DIVERGENCE_LOG = "judge_divergence.csv"


def make_agent_factory(kind: str, config: RunConfig, checkpoint: str | None = None) -> Callable[[], BaseAgent]:
    vocab = load_vocabulary()
    if kind == "policy":
        if checkpoint is None:
            raise ValueError("--checkpoint is required for the policy agent")
        policy = PolicyNet.load(checkpoint)
        return lambda: PolicyAgent(policy, config.scene, greedy=True, mask_invalid=config.train.mask_invalid)
    if kind == "expert":
        return lambda: ExpertAgent(vocab=vocab)
    if kind == "expert_early_stop":
        return lambda: ExpertAgent(early_stop=True, vocab=vocab)
    if kind == "greedy_noask":
        return lambda: GreedyNoAskAgent(vocab=vocab)
    if kind == "random":
        return lambda: RandomAgent(seed=config.train.seed, vocab=vocab)
    raise ValueError(f"unknown agent {kind!r}; expected one of {', '.join(AGENT_KINDS)}")


def make_judge(fixtures: str | None = None, fixture_mode: str = "strict",
               divergence_log: str | None = None, settings: BridgeSettings | None = None) -> LLMJudge | None:
    """The external judge, or None when neither an endpoint nor fixtures are configured."""
    settings = settings or BridgeSettings()
    if not settings.enabled and fixtures is None:
        return None
    client = JudgeClient(settings) if settings.enabled else None
    store = FixtureStore(fixtures, fixture_mode) if fixtures is not None else None
    logger.info("Judge bridge on (endpoint: %s, fixtures: %s/%s)", settings.judge_url or "none", fixtures, fixture_mode)
    return LLMJudge(client, store, divergence_log)


def run_gen_dataset(config: RunConfig, out_dir: str, seed: int, progress: bool = True) -> str:
    manifest = RunManifest(command="gen-dataset", config_hash=config.config_hash(), seed=seed,
                           config=config.model_dump(mode="json"))
    splits, episodes = generate_dataset(config.dataset, config.scene, seed, progress=progress)
    digest = save_dataset(out_dir, splits, episodes)
    manifest.dataset_hash = digest
    manifest.extra = {split: len(episodes[split]) for split in SPLITS}
    manifest.finish(dataset=out_dir).write(out_dir)
    return digest


def run_gen_expert_data(config: RunConfig, dataset_dir: str, out_dir: str, split: str = "train",
                        limit: int | None = 2000, workers: int = 1, progress: bool = True) -> int:
    """Expert trajectories on one split; only successful ones are kept."""
    _, episodes = load_dataset(dataset_dir)
    specs = episodes[split][:limit] if limit is not None else episodes[split]
    manifest = RunManifest(command="gen-expert-data", config_hash=config.config_hash(),
                           dataset_hash=dataset_hash(dataset_dir), seed=config.train.seed,
                           config=config.model_dump(mode="json"), inputs={"dataset": dataset_dir})
    records = run_episodes(make_agent_factory("expert", config), specs, config.reward, workers=workers,
                           progress=progress, desc="expert rollouts")
    kept = [r for r in records if r.success]
    if len(kept) < len(records):
        logger.warning("Expert failed %d of %d episodes; failures dropped", len(records) - len(kept), len(records))
    path = os.path.join(out_dir, EXPERT_TRAJECTORIES)
    write_trajectories(path, kept)
    manifest.extra = {"episodes": len(records), "kept": len(kept), "split": split}
    manifest.finish(trajectories=path).write(out_dir)
    logger.info("Wrote %d expert trajectories to %s", len(kept), path)
    return len(kept)


def run_train(config: RunConfig, dataset_dir: str, out_dir: str, progress: bool = True) -> TrainResult:
    _, episodes = load_dataset(dataset_dir)
    return train(config, episodes["train"], episodes[config.eval.splits[0]], out_dir,
                 dataset_hash=dataset_hash(dataset_dir), progress=progress)


def run_eval(config: RunConfig, dataset_dir: str, out_dir: str, agent: str = "policy",
             checkpoint: str | None = None, splits: Sequence[str] | None = None, workers: int = 1,
             fixtures: str | None = None, fixture_mode: str = "strict",
             progress: bool = True) -> dict[str, MetricsReport]:
    _, episodes = load_dataset(dataset_dir)
    factory = make_agent_factory(agent, config, checkpoint)
    judge = make_judge(fixtures, fixture_mode, os.path.join(out_dir, DIVERGENCE_LOG))
    manifest = RunManifest(command="eval", config_hash=config.config_hash(), dataset_hash=dataset_hash(dataset_dir),
                           seed=config.train.seed, config=config.model_dump(mode="json"),
                           inputs={"dataset": dataset_dir, **({"checkpoint": checkpoint} if checkpoint else {})},
                           extra={"agent": agent})
    reports = {}
    for split in splits or config.eval.splits:
        specs = episodes[split]
        if config.eval.max_episodes is not None:
            specs = specs[: config.eval.max_episodes]
        reports[split], _ = evaluate(factory, specs, config.reward, seeds=config.eval.seeds, out_dir=out_dir,
                                     name=split, external_judge=judge, workers=workers, progress=progress)
    summary = write_csv(os.path.join(out_dir, "summary.csv"),
                        [{"split": s, **r.summary_row()} for s, r in reports.items()])
    manifest.finish(summary=summary).write(out_dir)
    return reports


def run_sweep_budget(config: RunConfig, dataset_dir: str, out_dir: str, seeds: Sequence[int] = (0,)):
    _, episodes = load_dataset(dataset_dir)
    return budget_sweep(config, episodes, out_dir, train_seeds=seeds)


def run_ablate_rewards(config: RunConfig, dataset_dir: str, out_dir: str, seeds: Sequence[int] = (0,)):
    _, episodes = load_dataset(dataset_dir)
    return ablation_suite(config, episodes, out_dir, train_seeds=seeds)


def run_replay(path: str, fixtures: str | None = None) -> int:
    """Re-execute every trajectory in ``path``; raises ReplayMismatchError on the first divergence."""
    judge = make_judge(fixtures, "strict") if fixtures else None
    records = read_trajectories(path)
    steps = sum(replay(record, judge) for record in records)
    logger.info("Replayed %d trajectories (%d steps) from %s: all digests match", len(records), steps, path)
    return len(records)


def run_report(path: str, out: str | None = None) -> str:
    """Summary table for an experiment directory, or a metrics report for trajectory files."""
    if os.path.isdir(path) and os.path.exists(os.path.join(path, RUN_INDEX)):
        out = out or os.path.join(path, "table.csv")
        write_table(table_from_dir(path), out)
        return out
    if os.path.isdir(path):
        files = sorted(glob.glob(os.path.join(path, "*_trajectories.jsonl")))
    elif os.path.exists(path):
        files = [path]
    else:
        files = []
    if not files:
        raise FileNotFoundError(f"nothing to report on at {path}")
    out = out or (path if os.path.isdir(path) else os.path.dirname(os.path.abspath(path)))
    rows = []
    for file in files:
        name = os.path.basename(file).removesuffix(".jsonl").removesuffix("_trajectories")
        report = report_from_trajectories(file)
        report.write(out, f"{name}_report")
        rows.append({"name": name, **report.summary_row()})
    return write_csv(os.path.join(out, "report_summary.csv"), rows)


def run_calibrate_judge(config: RunConfig, dataset_dir: str, out_dir: str, n: int = 200,
                        fixtures: str | None = None, fixture_mode: str = "mixed", split: str = "unseen_scenes") -> str:
    judge = make_judge(fixtures, fixture_mode, os.path.join(out_dir, DIVERGENCE_LOG))
    if judge is None:
        raise ValueError("calibration needs ASK2ACT_JUDGE_URL or a fixture file")
    _, episodes = load_dataset(dataset_dir)
    table = calibrate(judge, episodes[split], n=n, seed=config.train.seed)
    path = write_csv(os.path.join(out_dir, "judge_calibration.csv"), table.to_dict(orient="records"))
    RunManifest(command="calibrate-judge", config_hash=config.config_hash(), dataset_hash=dataset_hash(dataset_dir),
                seed=config.train.seed, config=config.model_dump(mode="json"), inputs={"dataset": dataset_dir},
                extra={"questions": n, "split": split}).finish(calibration=path).write(out_dir)
    return path
