"""Per-step reward: success, subgoal, useful-question, over-budget and step terms.

``total`` is always ``success + subgoal + question - budget - step``; the
replay check recomputes it on every logged step.
"""
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from utils.config import RewardConfig


@dataclass(frozen=True)
class StepEvent:
    """What happened on one step, as far as the reward is concerned."""
    success: bool = False
    subgoals: int = 0
    asked: bool = False
    useful: bool = False


@dataclass(frozen=True)
class RewardBreakdown:
    success_term: float
    subgoal_term: float
    question_term: float
    budget_penalty: float
    step_penalty: float
    total: float

    @classmethod
    def of(cls, success_term: float, subgoal_term: float, question_term: float,
           budget_penalty: float, step_penalty: float) -> "RewardBreakdown":
        total = success_term + subgoal_term + question_term - budget_penalty - step_penalty
        return cls(success_term, subgoal_term, question_term, budget_penalty, step_penalty, total)

    def identity_holds(self) -> bool:
        return self.total == (
            self.success_term + self.subgoal_term + self.question_term - self.budget_penalty - self.step_penalty
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RewardBreakdown":
        return cls(**{k: float(data[k]) for k in (
            "success_term", "subgoal_term", "question_term", "budget_penalty", "step_penalty", "total")})


def useful_question_reward(cfg: RewardConfig, k: int | None) -> float:
    if cfg.r3_scale_by_k and k:
        return 1.5 / k
    return cfg.r3


def step_reward(event: StepEvent, cfg: RewardConfig, questions_asked: int, budget: int,
                k: int | None = None) -> RewardBreakdown:
    """Reward for one step.

    ``questions_asked`` counts every question so far including this step's.
    A useful question pays only while that count is within ``budget``; any
    question past the budget is penalized whether useful or not.
    """
    success = cfg.r1 if event.success else 0.0
    subgoal = cfg.r2 * event.subgoals
    question = 0.0
    over_budget = 0.0
    if event.asked:
        if questions_asked > budget:
            over_budget = cfg.r4
        elif event.useful:
            question = useful_question_reward(cfg, k)

    if cfg.mode == "subgoal_only":
        question = over_budget = 0.0
    elif cfg.mode == "success_only":
        subgoal = question = over_budget = 0.0
    return RewardBreakdown.of(success, subgoal, question, over_budget, cfg.r5)


def episode_return(rewards: Iterable[float], gamma: float) -> float:
    """Discounted return sum_t gamma^t r_t, accumulated in float64."""
    r = np.asarray(list(rewards), dtype=np.float64)
    if r.size == 0:
        return 0.0
    return float(np.sum(r * np.power(gamma, np.arange(r.size, dtype=np.float64))))
