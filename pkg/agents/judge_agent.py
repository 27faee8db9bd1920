"""Optional chat-completion judge that answers questions and rates their usefulness.

The deterministic oracle always runs first; the judge only overrules its answer
text and usefulness flag. Anything that goes wrong on the wire (timeout,
transport error, unparseable reply) falls back to the oracle turn and is
logged as a divergence. Request/response pairs can be recorded to and replayed
from a JSONL fixture file keyed by the sha256 of the full request.
"""
import csv
import hashlib
import json
import logging
import os
import re
import threading
from dataclasses import replace
from typing import Literal, Sequence

import httpx
import numpy as np
import pandas as pd
from langchain_core.prompts import PromptTemplate
from pydantic import BaseModel, ConfigDict
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from simulator.dialogue import (
    HELD_LOCATION, Answer, AskContext, DialogueJudge, DialogueTurn, question_universe,
)
from simulator.episode import EpisodeSpec, TaskFamily
from simulator.errors import BridgeUnavailableError, FixtureCollisionError, FixtureMissError
from simulator.world_model import full_world_graph
from utils.config import BridgeSettings

logger = logging.getLogger(__name__)

FixtureMode = Literal["strict", "mixed", "record"]

SYSTEM_MESSAGE = (
    "You are the reward model for a household robot. The robot may ask clarification questions "
    "about its task. You know the full state of the environment."
)

JUDGE_PROMPT = """You will be provided with task instruction, objects in environment, target objects \
with their current and target locations, the questions the robot asked so far and the current question.

Task instruction: {instruction}

{world_graph}

Target objects:
{targets}

Questions asked so far:
{history}

Current question: {question}

Answer the current question in a few words, followed by a boolean that denotes whether the question \
is useful for completing the task (True or False)."""

_TRAILING_BOOL = re.compile(r"^(?P<answer>.*?)[\s,;:.\-]*\b(?P<flag>true|false)\b[\s.!]*$", re.IGNORECASE | re.DOTALL)


class TargetInfo(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    current_location: str
    target_location: str


class JudgeRequest(BaseModel):
    """Everything the judge prompt shows, in prompt order."""
    model_config = ConfigDict(frozen=True)

    instruction: str
    world_graph: str
    targets: tuple[TargetInfo, ...]
    questions_so_far: tuple[tuple[str, str], ...] = ()
    question: str

    def canonical(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def key(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    def render(self) -> str:
        prompt = PromptTemplate(
            template=JUDGE_PROMPT,
            input_variables=["instruction", "world_graph", "targets", "history", "question"],
        )
        targets = "\n".join(
            f"- {t.name}: currently at {t.current_location}, goes to {t.target_location}" for t in self.targets
        ) or "- none"
        history = "\n".join(f"Q: {q}\nA: {a}" for q, a in self.questions_so_far) or "none"
        return prompt.format(instruction=self.instruction, world_graph=self.world_graph, targets=targets,
                             history=history, question=self.question)


class JudgeResponse(BaseModel):
    model_config = ConfigDict(frozen=True)

    answer_text: str
    useful: bool
    raw: str


def parse_response(raw: str) -> JudgeResponse:
    """Split a reply into the answer text and its trailing usefulness boolean."""
    match = _TRAILING_BOOL.match(raw.strip())
    if match is None:
        raise ValueError(f"judge reply has no trailing boolean: {raw!r}")
    answer = match.group("answer").strip().strip("\"'").strip()
    if not answer:
        raise ValueError(f"judge reply has no answer text: {raw!r}")
    return JudgeResponse(answer_text=answer, useful=match.group("flag").lower() == "true", raw=raw)


def build_request(spec: EpisodeSpec, turn: DialogueTurn, ctx: AskContext,
                  history: Sequence[DialogueTurn]) -> JudgeRequest:
    """Judge request for ``turn``; the judge sees the full world graph and the ground-truth targets."""
    scene = spec.scene

    def where(oid: str) -> str:
        place = ctx.locations.get(oid)
        return HELD_LOCATION if place is None else scene.place_name(place)

    if spec.family is TaskFamily.CLEAN_CLUTTER:
        prefs = spec.preference_map()
        pairs = [(oid, prefs[scene.object(oid).category]) for oid in sorted(spec.clutter_set)]
    else:
        pairs = [(t.object_id, t.place) for t in spec.targets]
    targets = tuple(
        TargetInfo(name=scene.object(oid).descriptor, current_location=where(oid),
                   target_location=scene.place_name(place))
        for oid, place in pairs
    )
    return JudgeRequest(
        instruction=spec.instruction,
        world_graph=full_world_graph(scene, ctx.locations).format(),
        targets=targets,
        questions_so_far=tuple((t.text, t.answer.text) for t in history),
        question=turn.text,
    )


class JudgeClient:
    """Chat-completion POST client; safe to share between threads."""

    def __init__(self, settings: BridgeSettings, transport: httpx.BaseTransport | None = None):
        if not settings.enabled:
            raise ValueError("ASK2ACT_JUDGE_URL is not set; the judge bridge is disabled.")
        self.settings = settings
        headers = {"Content-Type": "application/json"}
        if settings.judge_api_key:
            headers["Authorization"] = f"Bearer {settings.judge_api_key}"
        self._http = httpx.Client(headers=headers, timeout=httpx.Timeout(settings.judge_timeout), transport=transport)
        self._lock = threading.Lock()
        self.calls = 0

    def close(self) -> None:
        self._http.close()

    @retry(stop=stop_after_attempt(3), wait=wait_exponential(multiplier=0.5, max=4),
           retry=retry_if_exception_type(httpx.TransportError), reraise=True)
    def _post(self, payload: dict) -> dict:
        with self._lock:
            self.calls += 1
        response = self._http.post(self.settings.judge_url, json=payload)
        response.raise_for_status()
        return response.json()

    def complete(self, request: JudgeRequest) -> str:
        payload = {
            "model": self.settings.judge_model,
            "messages": [
                {"role": "system", "content": SYSTEM_MESSAGE},
                {"role": "user", "content": request.render()},
            ],
            "temperature": 0,
        }
        try:
            data = self._post(payload)
            return data["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
            raise BridgeUnavailableError(f"judge call failed: {exc}") from exc


class FixtureStore:
    """JSONL request/response pairs keyed by request hash.

    ``strict`` replays only and raises on a miss; ``mixed`` replays hits and
    sends misses to the live endpoint (recording them); ``record`` always goes
    live and records.
    """

    def __init__(self, path: str, mode: FixtureMode = "strict"):
        self.path = path
        self.mode = mode
        self._entries: dict[str, dict] = {}
        self._lock = threading.Lock()
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        entry = json.loads(line)
                        self._entries[entry["key"]] = entry
            logger.info("Loaded %d judge fixtures from %s", len(self._entries), path)
        elif mode == "strict":
            raise FileNotFoundError(f"fixture file not found: {path}")

    def __len__(self) -> int:
        return len(self._entries)

    def _check(self, key: str, request: JudgeRequest) -> dict | None:
        entry = self._entries.get(key)
        if entry is not None and entry["request"] != json.loads(request.canonical()):
            raise FixtureCollisionError(f"fixture key {key[:12]} maps to a different request")
        return entry

    def lookup(self, request: JudgeRequest) -> str | None:
        if self.mode == "record":
            return None
        key = request.key()
        with self._lock:
            entry = self._check(key, request)
        if entry is None and self.mode == "strict":
            raise FixtureMissError(f"no fixture for request {key[:12]} ({request.question!r})")
        return None if entry is None else entry["response"]

    def record(self, request: JudgeRequest, raw: str) -> None:
        key = request.key()
        entry = {"key": key, "request": json.loads(request.canonical()), "response": raw}
        with self._lock:
            if self._check(key, request) is not None:
                return
            self._entries[key] = entry
            os.makedirs(os.path.dirname(os.path.abspath(self.path)), exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(entry, sort_keys=True) + "\n")


DIVERGENCE_COLUMNS = ["episode_id", "question", "kind", "oracle_answer", "judge_answer", "oracle_useful",
                      "judge_useful", "detail"]


class LLMJudge:
    """ExternalJudge backed by a chat-completion endpoint and/or a fixture file."""

    def __init__(self, client: JudgeClient | None = None, fixtures: FixtureStore | None = None,
                 divergence_log: str | None = None):
        if client is None and (fixtures is None or fixtures.mode != "strict"):
            raise ValueError("a live judge client is required unless fixtures are replayed in strict mode")
        self.client = client
        self.fixtures = fixtures
        self.divergence_log = divergence_log
        self.divergences: list[dict] = []
        self._lock = threading.Lock()

    def judge(self, request: JudgeRequest) -> JudgeResponse:
        raw = self.fixtures.lookup(request) if self.fixtures is not None else None
        if raw is None:
            raw = self.client.complete(request)
            if self.fixtures is not None:
                self.fixtures.record(request, raw)
        try:
            return parse_response(raw)
        except ValueError as exc:
            raise BridgeUnavailableError(str(exc)) from exc

    def review(self, spec: EpisodeSpec, turn: DialogueTurn, ctx: AskContext,
               history: list[DialogueTurn]) -> DialogueTurn:
        if not turn.parsed:
            return turn
        try:
            response = self.judge(build_request(spec, turn, ctx, history))
        except BridgeUnavailableError as exc:
            logger.warning("Judge unavailable for %r, using the oracle answer: %s", turn.text, exc)
            self._diverge(spec.id, turn, "fallback", None, str(exc))
            return turn
        if response.useful != turn.useful or _norm(response.answer_text) != _norm(turn.answer.text):
            self._diverge(spec.id, turn, "disagreement", response)
        return replace(turn, answer=Answer(turn.answer.kind, response.answer_text), useful=response.useful,
                       source="llm")

    def _diverge(self, episode_id: str, turn: DialogueTurn, kind: str, response: JudgeResponse | None,
                 detail: str = "") -> None:
        row = {
            "episode_id": episode_id,
            "question": turn.text,
            "kind": kind,
            "oracle_answer": turn.answer.text,
            "judge_answer": response.answer_text if response else "",
            "oracle_useful": turn.useful,
            "judge_useful": response.useful if response else "",
            "detail": detail,
        }
        with self._lock:
            self.divergences.append(row)
            if self.divergence_log:
                _append_csv(self.divergence_log, row)


def _append_csv(path: str, row: dict) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    new = not os.path.exists(path)
    with open(path, "a", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=DIVERGENCE_COLUMNS)
        if new:
            writer.writeheader()
        writer.writerow(row)


def _norm(text: str) -> str:
    return " ".join(text.lower().strip().rstrip(".").split())


def calibrate(judge: LLMJudge, episodes: Sequence[EpisodeSpec], n: int = 200, seed: int = 0) -> pd.DataFrame:
    """Agreement between the judge and the oracle on ``n`` sampled questions, per template and overall."""
    rng = np.random.default_rng(seed)
    pool = [(spec, gq) for spec in episodes for gq in question_universe(spec)]
    if not pool:
        raise ValueError("no questions to sample")
    picks = rng.choice(len(pool), size=min(n, len(pool)), replace=False)
    rows = []
    for i in sorted(picks):
        spec, gq = pool[i]
        oracle = DialogueJudge(spec)
        ctx = AskContext(locations=spec.scene.initial_locations(), seen=frozenset(o.id for o in spec.scene.objects))
        turn = oracle.ask(gq.question.text(), ctx)
        row = {"template": int(gq.template), "answer_agrees": None, "useful_agrees": None, "error": False}
        try:
            response = judge.judge(build_request(spec, turn, ctx, []))
            row["answer_agrees"] = _norm(response.answer_text) == _norm(turn.answer.text)
            row["useful_agrees"] = response.useful == turn.useful
        except BridgeUnavailableError as exc:
            logger.warning("Calibration call failed for %r: %s", turn.text, exc)
            row["error"] = True
        rows.append(row)

    frame = pd.DataFrame(rows)
    answered = frame[~frame["error"]]

    def summarize(part: pd.DataFrame, scored: pd.DataFrame, label) -> dict:
        return {
            "template": label,
            "questions": len(part),
            "errors": int(part["error"].sum()),
            "answer_agreement": float(scored["answer_agrees"].astype(bool).mean()) if len(scored) else None,
            "useful_agreement": float(scored["useful_agrees"].astype(bool).mean()) if len(scored) else None,
        }

    table = [summarize(frame[frame["template"] == t], answered[answered["template"] == t], t)
             for t in sorted(frame["template"].unique())]
    table.append(summarize(frame, answered, "all"))
    return pd.DataFrame(table)
