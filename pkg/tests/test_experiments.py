import os

import numpy as np
import pandas as pd
import pytest

from agents.baseline_agents import GreedyNoAskAgent
from evaluation.experiments import RUN_INDEX, ablation_suite, budget_sweep, rebudget, table_from_dir
from evaluation.harness import run_episodes
from evaluation.metrics import EpisodeOutcome, build_report, success_rate
from rl.features import Featurizer
from rl.policy import PolicyNet
from simulator.task_generator import generate_dataset
from simulator.trajectory import read_trajectories
from utils.config import RunConfig
from utils.io_utils import read_json


class StubTrainer:
    """Returns an untrained network and remembers how it was called."""

    def __init__(self):
        self.calls = []

    def __call__(self, config, train_episodes, probe_episodes, out_dir):
        self.calls.append((config, train_episodes, out_dir))
        featurizer = Featurizer(config.scene)
        return PolicyNet(featurizer.dim, featurizer.num_actions, 8, seed=config.train.seed)


def test_rebudget(all_episodes):
    specs = rebudget(all_episodes[:4], 2)
    assert [s.budget for s in specs] == [s.K + 2 for s in all_episodes[:4]]


def test_budget_sweep(small_dataset, tiny_config, tmp_path):
    _, _, episodes = small_dataset
    trainer = StubTrainer()
    table = budget_sweep(tiny_config, episodes, str(tmp_path), offsets=[0, 2], train_seeds=(0, 1), train_fn=trainer)

    assert list(table.index) == ["K+0", "K+2"]
    assert table.index.name == "setting"
    assert list(table.columns) == [f"{split}_{m}" for split in ("unseen_scenes", "unseen_tasks")
                                   for m in ("SR", "ARS", "QR")]
    assert len(trainer.calls) == 4
    config, train_episodes, out_dir = trainer.calls[-1]
    assert config.train.seed == 1 and config.dataset.budget_offset == 2
    assert all(s.budget == s.K + 2 for s in train_episodes)
    assert out_dir.endswith(os.path.join("budget_K+2", "seed_1"))

    runs = read_json(str(tmp_path / RUN_INDEX))["runs"]
    assert len(runs) == 2 * 2 * 2
    assert all(r["penalties_within_budget"] == 0 for r in runs)
    assert (tmp_path / "table.csv").exists()
    assert (tmp_path / "manifest.json").exists()

    pd.testing.assert_frame_equal(table_from_dir(str(tmp_path)), table)


def test_ablation_suite(small_dataset, tiny_config, tmp_path):
    _, _, episodes = small_dataset
    trainer = StubTrainer()
    table = ablation_suite(tiny_config, episodes, str(tmp_path), modes=["success_only", "full"], train_fn=trainer)
    assert list(table.index) == ["success_only", "full"]
    assert [c.reward.mode for c, _, _ in trainer.calls] == ["success_only", "full"]
    assert (tmp_path / "success_only" / "seed_0" / "unseen_tasks.json").exists()
    for value in table["unseen_scenes_SR"]:
        assert 0.0 <= value <= 1.0


@pytest.mark.slow
def test_sweep_with_real_training(small_dataset, tiny_config, tmp_path):
    _, _, episodes = small_dataset
    table = budget_sweep(tiny_config, episodes, str(tmp_path), offsets=[0])
    assert list(table.index) == ["K+0"]
    assert (tmp_path / "budget_K+0" / "seed_0" / "final.json").exists()


@pytest.mark.slow
def test_reward_ablation_and_baseline_direction(tmp_path):
    """Desk-scale trainings over three seeds: success-only stays near zero, full reward beats the no-ask control."""
    config = RunConfig().with_overrides({
        "dataset": {"episodes_per_family": 60},
        "train": {"mask_invalid": True},
        "eval": {"splits": ["unseen_scenes"]},
    })
    _, episodes = generate_dataset(config.dataset, config.scene, seed=0, progress=False)
    seeds = (0, 1, 2)
    table = ablation_suite(config, episodes, str(tmp_path), modes=["success_only", "full"], train_seeds=seeds)
    assert table.loc["success_only", "unseen_scenes_SR"] <= 0.05

    ambiguous = [s for s in episodes["unseen_scenes"] if s.K >= 1]
    greedy = build_report(EpisodeOutcome.from_trajectory(r) for r in run_episodes(GreedyNoAskAgent, ambiguous))

    def policy_sr(seed):
        path = tmp_path / "full" / f"seed_{seed}" / "unseen_scenes_trajectories.jsonl"
        outcomes = [EpisodeOutcome.from_trajectory(r) for r in read_trajectories(str(path))]
        return success_rate([o for o in outcomes if o.K >= 1])

    assert np.mean([policy_sr(seed) for seed in seeds]) > greedy.SR
