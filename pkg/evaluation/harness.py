"""Runs policies over episode splits and turns the logged trajectories into reports."""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Callable, Sequence

from tqdm import tqdm

from agents.base_agent import AgentView, BaseAgent
from evaluation.metrics import EpisodeOutcome, MetricsReport, build_report
from simulator.dialogue import ExternalJudge
from simulator.environment import AskToActEnv
from simulator.episode import EpisodeSpec
from simulator.trajectory import StepRecord, TrajectoryRecord, read_trajectories, write_trajectories
from utils.config import RewardConfig

logger = logging.getLogger(__name__)

AgentFactory = Callable[[], BaseAgent]


def run_episode(
    agent: BaseAgent,
    spec: EpisodeSpec,
    reward_config: RewardConfig | None = None,
    external_judge: ExternalJudge | None = None,
    seed: int | None = None,
) -> TrajectoryRecord:
    """Play one episode to its end and return the full step log."""
    reward_config = reward_config or RewardConfig()
    env = AskToActEnv(reward_config, external_judge=external_judge)
    obs = env.reset(spec)
    view = AgentView.from_spec(spec)
    if seed is not None:
        view = replace(view, seed=spec.seed * 1000 + seed)
    agent.reset(view)
    record = TrajectoryRecord(episode=spec, agent=agent.name, reward_config=reward_config,
                              initial_digest=obs.digest())
    while not env.done:
        action = agent.act(obs)
        result = env.step(action)
        record.steps.append(StepRecord.from_result(action.text(), result))
        obs = result.obs
    return record


def run_episodes(
    agent_factory: AgentFactory,
    episodes: Sequence[EpisodeSpec],
    reward_config: RewardConfig | None = None,
    seeds: Sequence[int] = (0,),
    external_judge: ExternalJudge | None = None,
    workers: int = 1,
    progress: bool = False,
    desc: str = "episodes",
) -> list[TrajectoryRecord]:
    """Every (seed, episode) pair, in seed-major order regardless of ``workers``."""
    jobs = [(seed, spec) for seed in seeds for spec in episodes]

    def play(job: tuple[int, EpisodeSpec]) -> TrajectoryRecord:
        seed, spec = job
        return run_episode(agent_factory(), spec, reward_config, external_judge, seed)

    if workers <= 1:
        return [play(job) for job in tqdm(jobs, desc=desc, disable=not progress)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(tqdm(pool.map(play, jobs), total=len(jobs), desc=desc, disable=not progress))


def evaluate(
    agent_factory: AgentFactory,
    episodes: Sequence[EpisodeSpec],
    reward_config: RewardConfig | None = None,
    seeds: Sequence[int] = (0,),
    out_dir: str | None = None,
    name: str = "report",
    external_judge: ExternalJudge | None = None,
    workers: int = 1,
    progress: bool = False,
) -> tuple[MetricsReport, list[TrajectoryRecord]]:
    """Deterministic report over ``episodes`` x ``seeds``; trajectories are kept for audit when ``out_dir`` is set."""
    records = run_episodes(agent_factory, episodes, reward_config, seeds, external_judge, workers, progress,
                           desc=f"evaluating {name}")
    report = build_report(EpisodeOutcome.from_trajectory(r) for r in records)
    if out_dir is not None:
        write_trajectories(os.path.join(out_dir, f"{name}_trajectories.jsonl"), records)
        report.write(out_dir, name)
    logger.info("%s: SR=%.3f ARS=%s QR=%s over %d episodes", name, report.SR,
                _fmt(report.ARS), _fmt(report.QR), report.episodes)
    return report, records


def report_from_trajectories(path: str) -> MetricsReport:
    """Recompute a report from a retained trajectory file; usefulness flags are taken as logged."""
    return build_report(EpisodeOutcome.from_trajectory(r) for r in read_trajectories(path))


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.3f}"
