"""Success rate, ambiguity-resolution score, question ratio and their breakdowns.

ARS and QR are defined only for episodes that need at least one question;
episodes with K = 0 count towards SR and are left out of both.
"""
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from simulator.task_generator import MAX_K
from simulator.trajectory import TrajectoryRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpisodeOutcome:
    episode_id: str
    family: str
    split: str
    success: bool
    q_relevant: int
    q_irrelevant: int
    K: int
    steps: int

    @property
    def questions(self) -> int:
        return self.q_relevant + self.q_irrelevant

    @classmethod
    def from_trajectory(cls, record: TrajectoryRecord) -> "EpisodeOutcome":
        spec = record.episode
        return cls(
            episode_id=spec.id,
            family=spec.family.value,
            split=spec.split,
            success=record.success,
            q_relevant=record.q_relevant,
            q_irrelevant=record.q_irrelevant,
            K=spec.K,
            steps=len(record.steps),
        )


def ars(outcome: EpisodeOutcome) -> float:
    """1[success] / (1 + |q_relevant - K| + q_irrelevant)."""
    if outcome.K < 1:
        raise ValueError(f"{outcome.episode_id}: ARS is undefined for K = 0")
    if not outcome.success:
        return 0.0
    return 1.0 / (1 + abs(outcome.q_relevant - outcome.K) + outcome.q_irrelevant)


def qr(outcomes: Sequence[EpisodeOutcome]) -> float:
    """Mean over episodes of questions asked / K."""
    if not outcomes:
        raise ValueError("QR of an empty episode set")
    if any(o.K < 1 for o in outcomes):
        raise ValueError("QR is undefined for K = 0 episodes")
    return float(np.mean([o.questions / o.K for o in outcomes]))


def success_rate(outcomes: Sequence[EpisodeOutcome]) -> float:
    if not outcomes:
        raise ValueError("SR of an empty episode set")
    return float(np.mean([o.success for o in outcomes]))


def guess_rate(outcomes: Sequence[EpisodeOutcome]) -> float:
    """Share of successes on K >= 1 episodes reached with fewer than K relevant questions."""
    wins = [o for o in outcomes if o.success and o.K >= 1]
    if not wins:
        return 0.0
    return float(np.mean([o.q_relevant < o.K for o in wins]))


def _rates(outcomes: Sequence[EpisodeOutcome]) -> dict:
    asking = [o for o in outcomes if o.K >= 1]
    return {
        "episodes": len(outcomes),
        "SR": success_rate(outcomes) if outcomes else None,
        "ARS": float(np.mean([ars(o) for o in asking])) if asking else None,
        "QR": qr(asking) if asking else None,
    }


@dataclass
class MetricsReport:
    SR: float
    ARS: float | None
    QR: float | None
    guess_rate: float
    episodes: int
    per_family: list[dict] = field(default_factory=list)
    per_k: list[dict] = field(default_factory=list)
    per_questions_asked: list[dict] = field(default_factory=list)
    questions_histogram: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary_row(self) -> dict:
        return {"SR": self.SR, "ARS": self.ARS, "QR": self.QR, "guess_rate": self.guess_rate,
                "episodes": self.episodes}

    def write(self, out_dir: str, name: str = "report") -> tuple[str, str]:
        """``<name>.json`` with everything plus ``<name>_per_family.csv``."""
        os.makedirs(out_dir, exist_ok=True)
        json_path = os.path.join(out_dir, f"{name}.json")
        with open(json_path, "w", encoding="utf-8") as f:
            f.write(self.to_json())
        csv_path = os.path.join(out_dir, f"{name}_per_family.csv")
        pd.DataFrame(self.per_family, columns=["family", "episodes", "SR", "ARS", "QR"]).to_csv(csv_path, index=False)
        return json_path, csv_path


def build_report(outcomes: Iterable[EpisodeOutcome]) -> MetricsReport:
    outcomes = sorted(outcomes, key=lambda o: (o.split, o.episode_id))
    if not outcomes:
        raise ValueError("cannot report on zero episodes")
    overall = _rates(outcomes)

    per_family = []
    for family in sorted({o.family for o in outcomes}):
        per_family.append({"family": family, **_rates([o for o in outcomes if o.family == family])})

    per_k = []
    for k in range(1, MAX_K + 1):
        bucket = [o for o in outcomes if o.K == k]
        per_k.append({"K": k, "episodes": len(bucket), "SR": success_rate(bucket) if bucket else None})

    per_asked = []
    for asked in sorted({o.questions for o in outcomes}):
        bucket = [o for o in outcomes if o.questions == asked]
        per_asked.append({"questions": asked, "episodes": len(bucket), "SR": success_rate(bucket)})

    histogram = {str(q): sum(1 for o in outcomes if o.questions == q) for q in sorted({o.questions for o in outcomes})}
    return MetricsReport(
        SR=overall["SR"],
        ARS=overall["ARS"],
        QR=overall["QR"],
        guess_rate=guess_rate(outcomes),
        episodes=len(outcomes),
        per_family=per_family,
        per_k=per_k,
        per_questions_asked=per_asked,
        questions_histogram=histogram,
    )
