import json
import os

import pytest

from agents.baseline_agents import GreedyNoAskAgent, RandomAgent
from agents.expert_agent import ExpertAgent
from evaluation.harness import evaluate, report_from_trajectories, run_episode, run_episodes
from simulator.errors import ReplayMismatchError
from simulator.trajectory import read_trajectories, replay, write_trajectories


def test_evaluate_is_deterministic_across_workers(all_episodes):
    episodes = all_episodes[:10]
    serial, _ = evaluate(lambda: RandomAgent(seed=2), episodes, seeds=(0, 1))
    threaded, _ = evaluate(lambda: RandomAgent(seed=2), episodes, seeds=(0, 1), workers=3)
    assert serial.to_dict() == threaded.to_dict()
    assert serial.episodes == 20


def test_run_episodes_order_is_seed_major(all_episodes):
    episodes = all_episodes[:3]
    records = run_episodes(GreedyNoAskAgent, episodes, seeds=(0, 1), workers=2)
    assert [r.episode.id for r in records] == [s.id for s in episodes] * 2


def test_expert_report(all_episodes, tmp_path):
    report, records = evaluate(ExpertAgent, all_episodes, out_dir=str(tmp_path), name="expert")
    assert report.SR == 1.0
    assert report.ARS == 1.0
    assert report.QR == pytest.approx(1.0)
    assert report.guess_rate == 0.0
    assert os.path.exists(tmp_path / "expert.json")
    assert os.path.exists(tmp_path / "expert_per_family.csv")

    again = report_from_trajectories(str(tmp_path / "expert_trajectories.jsonl"))
    assert again.to_dict() == report.to_dict()


def test_trajectories_replay(fetch_spec, tmp_path):
    path = str(tmp_path / "run.jsonl")
    records = [run_episode(ExpertAgent(), fetch_spec), run_episode(RandomAgent(seed=4), fetch_spec, seed=1)]
    assert write_trajectories(path, records) == 2
    loaded = read_trajectories(path)
    assert [len(r.steps) for r in loaded] == [len(r.steps) for r in records]
    for record in loaded:
        assert replay(record) == len(record.steps)


def test_tampered_reward_fails_replay(fetch_spec, tmp_path):
    path = tmp_path / "run.jsonl"
    write_trajectories(str(path), [run_episode(ExpertAgent(), fetch_spec)])
    lines = path.read_text().splitlines()
    step = json.loads(lines[1])
    step["reward_breakdown"]["success_term"] = 10.0
    lines[1] = json.dumps(step)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ReplayMismatchError):
        replay(read_trajectories(str(path))[0])


def test_changed_action_fails_replay(fetch_spec, tmp_path):
    record = run_episode(ExpertAgent(), fetch_spec)
    record.steps[0].action = "nav(chair)"
    with pytest.raises(ReplayMismatchError):
        replay(record)


def test_unknown_schema_version(fetch_spec, tmp_path):
    path = tmp_path / "run.jsonl"
    write_trajectories(str(path), [run_episode(ExpertAgent(), fetch_spec)])
    lines = path.read_text().splitlines()
    header = json.loads(lines[0])
    header["schema_version"] = 99
    path.write_text(json.dumps(header) + "\n")
    with pytest.raises(ValueError, match="schema"):
        read_trajectories(str(path))
