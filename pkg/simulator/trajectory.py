"""Replayable trajectory logs.

A JSONL file holds one or more episodes. Each episode starts with a header
line carrying the full episode record and reward config, followed by one
line per step::

    {"type": "header", "schema_version": 1, "agent": ..., "episode": {...}, ...}
    {"type": "step", "t": 1, "obs_digest": ..., "action": "nav(sofa)", "answer": null,
     "reward_breakdown": {...}, "info": {...}, "outcome": "ongoing"}
"""
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable

from simulator.dialogue import ExternalJudge
from simulator.environment import AskToActEnv, StepResult
from simulator.episode import EpisodeSpec
from simulator.errors import ReplayMismatchError
from simulator.reward import RewardBreakdown
from utils.config import RewardConfig

logger = logging.getLogger(__name__)

TRAJECTORY_SCHEMA_VERSION = 1


@dataclass
class StepRecord:
    t: int
    obs_digest: str
    action: str
    answer: str | None
    reward: RewardBreakdown
    info: dict
    outcome: str

    def to_dict(self) -> dict:
        return {
            "type": "step",
            "t": self.t,
            "obs_digest": self.obs_digest,
            "action": self.action,
            "answer": self.answer,
            "reward_breakdown": self.reward.to_dict(),
            "info": self.info,
            "outcome": self.outcome,
        }

    @classmethod
    def from_result(cls, action: str, result: StepResult) -> "StepRecord":
        return cls(
            t=result.obs.t,
            obs_digest=result.obs.digest(),
            action=action,
            answer=result.info.get("answer"),
            reward=result.reward,
            info=dict(result.info),
            outcome=result.outcome.value,
        )

    @classmethod
    def from_dict(cls, data: dict) -> "StepRecord":
        return cls(
            t=data["t"],
            obs_digest=data["obs_digest"],
            action=data["action"],
            answer=data.get("answer"),
            reward=RewardBreakdown.from_dict(data["reward_breakdown"]),
            info=data.get("info", {}),
            outcome=data["outcome"],
        )


@dataclass
class TrajectoryRecord:
    episode: EpisodeSpec
    agent: str
    reward_config: RewardConfig
    initial_digest: str
    steps: list[StepRecord] = field(default_factory=list)

    @property
    def outcome(self) -> str:
        return self.steps[-1].outcome if self.steps else "ongoing"

    @property
    def success(self) -> bool:
        return self.outcome == "success"

    @property
    def rewards(self) -> list[float]:
        return [s.reward.total for s in self.steps]

    @property
    def q_relevant(self) -> int:
        return sum(1 for s in self.steps if s.info.get("asked") and s.info.get("useful"))

    @property
    def q_irrelevant(self) -> int:
        return sum(1 for s in self.steps if s.info.get("asked") and not s.info.get("useful"))

    def header(self) -> dict:
        return {
            "type": "header",
            "schema_version": TRAJECTORY_SCHEMA_VERSION,
            "agent": self.agent,
            "episode": self.episode.to_dict(),
            "reward_config": self.reward_config.model_dump(mode="json"),
            "initial_obs_digest": self.initial_digest,
        }

    def to_lines(self) -> list[str]:
        lines = [json.dumps(self.header(), separators=(",", ":"))]
        lines += [json.dumps(s.to_dict(), separators=(",", ":")) for s in self.steps]
        return lines


def write_trajectories(path: str, records: Iterable[TrajectoryRecord]) -> int:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            for line in record.to_lines():
                f.write(line + "\n")
            count += 1
    return count


def read_trajectories(path: str) -> list[TrajectoryRecord]:
    records: list[TrajectoryRecord] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            data = json.loads(raw)
            if data.get("type") == "header":
                if data.get("schema_version") != TRAJECTORY_SCHEMA_VERSION:
                    raise ValueError(f"{path}:{lineno}: unsupported trajectory schema {data.get('schema_version')}")
                records.append(TrajectoryRecord(
                    episode=EpisodeSpec.from_dict(data["episode"]),
                    agent=data["agent"],
                    reward_config=RewardConfig.model_validate(data["reward_config"]),
                    initial_digest=data["initial_obs_digest"],
                ))
            elif records:
                records[-1].steps.append(StepRecord.from_dict(data))
            else:
                raise ValueError(f"{path}:{lineno}: step line before any header")
    return records


def replay(record: TrajectoryRecord, external_judge: ExternalJudge | None = None) -> int:
    """Re-execute a logged episode; raise ReplayMismatchError on the first divergence.

    Returns the number of steps verified.
    """
    env = AskToActEnv(record.reward_config, external_judge=external_judge)
    obs = env.reset(record.episode)
    if obs.digest() != record.initial_digest:
        raise ReplayMismatchError(f"{record.episode.id}: initial observation digest differs")
    for step in record.steps:
        if not step.reward.identity_holds():
            raise ReplayMismatchError(f"{record.episode.id} t={step.t}: logged reward breakdown does not add up")
        result = env.step(step.action)
        if result.obs.digest() != step.obs_digest:
            raise ReplayMismatchError(f"{record.episode.id} t={step.t}: observation digest differs")
        if result.reward != step.reward:
            raise ReplayMismatchError(
                f"{record.episode.id} t={step.t}: reward {result.reward.total} != logged {step.reward.total}"
            )
        if result.outcome.value != step.outcome:
            raise ReplayMismatchError(f"{record.episode.id} t={step.t}: outcome {result.outcome.value} != {step.outcome}")
    logger.debug("Replayed %s: %d steps verified", record.episode.id, len(record.steps))
    return len(record.steps)
