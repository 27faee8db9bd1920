"""Command-line entry point: ``python app.py <command> [flags]``.

Exit codes: 0 ok, 1 unexpected error, 2 usage error, 3 missing input,
4 replay or hash mismatch, 5 training diverged, 6 generation error.
"""
import logging
import sys
from typing import Callable, List, Optional

import typer
from dotenv import load_dotenv

load_dotenv()

from main_orchestrator import (  # noqa: E402
    AGENT_KINDS,
    run_ablate_rewards,
    run_calibrate_judge,
    run_eval,
    run_gen_dataset,
    run_gen_expert_data,
    run_replay,
    run_report,
    run_sweep_budget,
    run_train,
)
from simulator.errors import (  # noqa: E402
    FixtureCollisionError,
    FixtureMissError,
    InstructionParseError,
    ReplayMismatchError,
    SceneGenerationError,
    SceneValidationError,
    SearchLimitError,
    TaskGenerationError,
    TrainingDivergedError,
)
from utils.config import RunConfig, load_run_config  # noqa: E402
from utils.logging_utils import setup_logging  # noqa: E402

logger = logging.getLogger("app")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_MISSING_INPUT = 3
EXIT_MISMATCH = 4
EXIT_DIVERGED = 5
EXIT_GENERATION = 6

EXIT_CODES: list[tuple[type[BaseException], int]] = [
    (FileNotFoundError, EXIT_MISSING_INPUT),
    (FixtureMissError, EXIT_MISSING_INPUT),
    (ReplayMismatchError, EXIT_MISMATCH),
    (FixtureCollisionError, EXIT_MISMATCH),
    (TrainingDivergedError, EXIT_DIVERGED),
    (SceneGenerationError, EXIT_GENERATION),
    (SceneValidationError, EXIT_GENERATION),
    (TaskGenerationError, EXIT_GENERATION),
    (SearchLimitError, EXIT_GENERATION),
    (InstructionParseError, EXIT_USAGE),
    (ValueError, EXIT_USAGE),
]

cli = typer.Typer(add_completion=False, no_args_is_help=True,
                  help="Ask-to-Act desk simulator: datasets, expert data, PPO training and evaluation.")
_state = {"progress": True}


def exit_code_for(exc: BaseException) -> int:
    for kind, code in EXIT_CODES:
        if isinstance(exc, kind):
            return code
    return EXIT_UNEXPECTED


def _run(flow: Callable[[RunConfig], object], config_path: Optional[str] = None,
         overrides: Optional[dict] = None) -> None:
    try:
        flow(load_run_config(config_path, overrides or {}))
    except Exception as exc:
        code = exit_code_for(exc)
        if code == EXIT_UNEXPECTED:
            logger.exception("Unexpected error")
        else:
            logger.error("%s: %s", type(exc).__name__, exc)
        if isinstance(exc, TrainingDivergedError) and exc.last_checkpoint:
            logger.error("Last good checkpoint: %s", exc.last_checkpoint)
        raise typer.Exit(code)


@cli.callback()
def main(
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Only warnings and errors; no progress bars."),
    log_level: str = typer.Option("INFO", "--log-level", help="Root log level."),
):
    setup_logging(log_level, quiet)
    _state["progress"] = not quiet


@cli.command("gen-dataset")
def gen_dataset(
    out: str = typer.Option(..., "--out", help="Dataset directory to write."),
    seed: int = typer.Option(0, "--seed", help="Master seed; same seed and config give the same dataset hash."),
    config: Optional[str] = typer.Option(None, "--config", help="YAML run config."),
    episodes_per_family: Optional[int] = typer.Option(None, "--episodes-per-family", help="Episodes per family and split."),
    train_scenes: Optional[int] = typer.Option(None, "--train-scenes", help="Number of training scenes."),
    eval_scenes: Optional[int] = typer.Option(None, "--eval-scenes", help="Number of held-out scenes."),
):
    """Generate scenes and the train / unseen_scenes / unseen_tasks episode splits."""
    overrides = {"dataset": {"episodes_per_family": episodes_per_family, "train_scenes": train_scenes,
                             "eval_scenes": eval_scenes}}
    _run(lambda cfg: typer.echo(run_gen_dataset(cfg, out, seed, progress=_state["progress"])), config, overrides)


@cli.command("gen-expert-data")
def gen_expert_data(
    dataset: str = typer.Option(..., "--dataset", help="Dataset directory."),
    out: str = typer.Option(..., "--out", help="Output directory for the trajectory JSONL."),
    split: str = typer.Option("train", "--split", help="Split to roll the expert out on."),
    limit: Optional[int] = typer.Option(2000, "--limit", help="Maximum number of episodes."),
    workers: int = typer.Option(1, "--workers", help="Parallel episode workers."),
    config: Optional[str] = typer.Option(None, "--config", help="YAML run config."),
):
    """Export successful expert trajectories as a behaviour-cloning corpus."""
    _run(lambda cfg: run_gen_expert_data(cfg, dataset, out, split, limit, workers, progress=_state["progress"]), config)


@cli.command("train")
def train_cmd(
    dataset: str = typer.Option(..., "--dataset", help="Dataset directory."),
    out: str = typer.Option(..., "--out", help="Run directory for checkpoints and curves."),
    config: Optional[str] = typer.Option(None, "--config", help="YAML run config."),
    seed: Optional[int] = typer.Option(None, "--seed", help="Training seed."),
    total_steps: Optional[int] = typer.Option(None, "--total-steps", help="Environment steps to train for."),
    reward_mode: Optional[str] = typer.Option(None, "--reward-mode", help="full, subgoal_only or success_only."),
    mask_invalid: Optional[bool] = typer.Option(None, "--mask-invalid/--no-mask-invalid", help="Mask invalid actions."),
):
    """Train a PPO policy on the train split."""
    overrides = {"train": {"seed": seed, "total_steps": total_steps, "mask_invalid": mask_invalid},
                 "reward": {"mode": reward_mode}}
    _run(lambda cfg: run_train(cfg, dataset, out, progress=_state["progress"]), config, overrides)


@cli.command("eval")
def eval_cmd(
    dataset: str = typer.Option(..., "--dataset", help="Dataset directory."),
    out: str = typer.Option(..., "--out", help="Report directory."),
    agent: str = typer.Option("policy", "--agent", help=f"One of: {', '.join(AGENT_KINDS)}."),
    checkpoint: Optional[str] = typer.Option(None, "--checkpoint", help="Policy checkpoint (policy agent only)."),
    split: Optional[List[str]] = typer.Option(None, "--split", help="Split to evaluate; repeatable."),
    seed: Optional[List[int]] = typer.Option(None, "--seed", help="Evaluation seed; repeatable."),
    max_episodes: Optional[int] = typer.Option(None, "--max-episodes", help="Cap on episodes per split."),
    workers: int = typer.Option(1, "--workers", help="Parallel episode workers."),
    fixtures: Optional[str] = typer.Option(None, "--fixtures", help="Judge fixture JSONL."),
    fixture_mode: str = typer.Option("strict", "--fixture-mode", help="strict, mixed or record."),
    config: Optional[str] = typer.Option(None, "--config", help="YAML run config."),
):
    """Evaluate an agent and write SR / ARS / QR reports per split."""
    overrides = {"eval": {"seeds": seed or None, "max_episodes": max_episodes}}
    _run(lambda cfg: run_eval(cfg, dataset, out, agent, checkpoint, split or None, workers, fixtures, fixture_mode,
                              progress=_state["progress"]), config, overrides)


@cli.command("sweep-budget")
def sweep_budget(
    dataset: str = typer.Option(..., "--dataset", help="Dataset directory."),
    out: str = typer.Option(..., "--out", help="Sweep directory."),
    offset: Optional[List[int]] = typer.Option(None, "--offset", help="Budget offset over K; repeatable."),
    seed: Optional[List[int]] = typer.Option(None, "--seed", help="Training seed; repeatable."),
    total_steps: Optional[int] = typer.Option(None, "--total-steps", help="Environment steps per training."),
    config: Optional[str] = typer.Option(None, "--config", help="YAML run config."),
):
    """One training per question budget K+offset, evaluated on the held-out splits."""
    overrides = {"eval": {"budget_offsets": offset or None}, "train": {"total_steps": total_steps}}
    _run(lambda cfg: typer.echo(run_sweep_budget(cfg, dataset, out, seed or (cfg.train.seed,)).to_string()),
         config, overrides)


@cli.command("ablate-rewards")
def ablate_rewards(
    dataset: str = typer.Option(..., "--dataset", help="Dataset directory."),
    out: str = typer.Option(..., "--out", help="Ablation directory."),
    mode: Optional[List[str]] = typer.Option(None, "--mode", help="Reward mode; repeatable."),
    seed: Optional[List[int]] = typer.Option(None, "--seed", help="Training seed; repeatable."),
    total_steps: Optional[int] = typer.Option(None, "--total-steps", help="Environment steps per training."),
    config: Optional[str] = typer.Option(None, "--config", help="YAML run config."),
):
    """Identical trainings under success-only, subgoal-only and full rewards."""
    overrides = {"eval": {"ablation_modes": mode or None}, "train": {"total_steps": total_steps}}
    _run(lambda cfg: typer.echo(run_ablate_rewards(cfg, dataset, out, seed or (cfg.train.seed,)).to_string()),
         config, overrides)


@cli.command("replay")
def replay_cmd(
    trajectories: str = typer.Argument(..., help="Trajectory JSONL file."),
    fixtures: Optional[str] = typer.Option(None, "--fixtures", help="Judge fixtures the run was recorded with."),
):
    """Re-execute logged trajectories and verify observation and reward digests."""
    _run(lambda _: run_replay(trajectories, fixtures))


@cli.command("report")
def report_cmd(
    path: str = typer.Argument(..., help="Experiment directory or trajectory JSONL."),
    out: Optional[str] = typer.Option(None, "--out", help="Output file or directory."),
):
    """Render the summary table of an experiment directory or recompute metrics from trajectories."""
    _run(lambda _: typer.echo(run_report(path, out)))


@cli.command("calibrate-judge")
def calibrate_judge(
    dataset: str = typer.Option(..., "--dataset", help="Dataset directory."),
    out: str = typer.Option(..., "--out", help="Output directory."),
    questions: int = typer.Option(200, "--questions", help="Number of sampled questions."),
    split: str = typer.Option("unseen_scenes", "--split", help="Split to sample from."),
    fixtures: Optional[str] = typer.Option(None, "--fixtures", help="Judge fixture JSONL."),
    fixture_mode: str = typer.Option("mixed", "--fixture-mode", help="strict, mixed or record."),
    config: Optional[str] = typer.Option(None, "--config", help="YAML run config."),
):
    """Agreement table between the external judge and the deterministic oracle."""
    _run(lambda cfg: typer.echo(run_calibrate_judge(cfg, dataset, out, questions, fixtures, fixture_mode, split)),
         config)


if __name__ == "__main__":
    sys.exit(cli())
