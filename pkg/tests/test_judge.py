import json

import httpx
import pandas as pd
import pytest

from agents.judge_agent import (
    FixtureStore,
    JudgeClient,
    JudgeRequest,
    LLMJudge,
    TargetInfo,
    build_request,
    calibrate,
    parse_response,
)
from main_orchestrator import make_judge
from simulator.environment import AskToActEnv
from simulator.errors import FixtureCollisionError, FixtureMissError
from utils.config import BridgeSettings

QUESTION = "ask(Is target object the large one?)"


def _client(reply, calls=None):
    def handler(request: httpx.Request) -> httpx.Response:
        if calls is not None:
            calls.append(json.loads(request.content))
        if isinstance(reply, int):
            return httpx.Response(reply, json={"error": "boom"})
        return httpx.Response(200, json={"choices": [{"message": {"content": reply}}]})

    settings = BridgeSettings(_env_file=None, judge_url="http://judge.test/v1/chat/completions")
    return JudgeClient(settings, transport=httpx.MockTransport(handler))


def _ask(spec, judge, question=QUESTION):
    env = AskToActEnv(external_judge=judge)
    env.reset(spec)
    return env.step(question)


@pytest.mark.parametrize("raw, answer, useful", [
    ("yes. True", "yes", True),
    ("the dark table, False", "the dark table", False),
    ("No such object.\nFALSE", "No such object", False),
    ('"top cabinet" true.', "top cabinet", True),
])
def test_parse_response(raw, answer, useful):
    parsed = parse_response(raw)
    assert (parsed.answer_text, parsed.useful) == (answer, useful)


@pytest.mark.parametrize("raw", ["I think so", "True", ""])
def test_parse_response_rejects(raw):
    with pytest.raises(ValueError):
        parse_response(raw)


def test_request_shows_full_world_and_targets(fetch_spec):
    seen = {}

    class Spy:
        def review(self, spec, turn, ctx, history):
            seen["request"] = build_request(spec, turn, ctx, history)
            return turn

    env = AskToActEnv(external_judge=Spy())
    env.reset(fetch_spec)
    env.step(QUESTION)
    request = seen["request"]
    assert "light table: [yellow dumbbell, blue bowl, red bowl]" in request.world_graph
    assert request.targets == (TargetInfo(name="large red bowl", current_location="dark table",
                                          target_location="sink"),)
    prompt = request.render()
    assert "Current question: Is target object the large one?" in prompt
    assert "Bring the red bowl" in prompt


def test_record_then_strict_replay(fetch_spec, tmp_path):
    fixtures = str(tmp_path / "judge.jsonl")
    client = _client("yes. True")
    recorded = _ask(fetch_spec, LLMJudge(client, FixtureStore(fixtures, "record")))
    assert recorded.info["answer_source"] == "llm"
    assert recorded.info["useful"]
    assert client.calls == 1

    replayed = _ask(fetch_spec, LLMJudge(None, FixtureStore(fixtures, "strict")))
    assert replayed.info["answer_source"] == "llm"
    assert replayed.info["answer"] == "yes"
    assert replayed.reward == recorded.reward


def test_server_error_falls_back_to_oracle(fetch_spec, tmp_path):
    log = tmp_path / "divergences.csv"
    judge = LLMJudge(_client(500), divergence_log=str(log))
    result = _ask(fetch_spec, judge)
    assert result.info["answer_source"] == "oracle"
    assert result.info["useful"]
    assert [d["kind"] for d in judge.divergences] == ["fallback"]
    frame = pd.read_csv(log)
    assert list(frame["kind"]) == ["fallback"]


def test_malformed_reply_falls_back_to_oracle(fetch_spec):
    judge = LLMJudge(_client("absolutely"))
    result = _ask(fetch_spec, judge)
    assert result.info["answer_source"] == "oracle"
    assert result.info["answer"] == "yes"
    assert judge.divergences[0]["kind"] == "fallback"


def test_disagreement_overrules_the_oracle(fetch_spec):
    judge = LLMJudge(_client("no. False"))
    result = _ask(fetch_spec, judge)
    assert result.info["answer"] == "no"
    assert not result.info["useful"]
    assert result.reward.total == pytest.approx(-0.01)
    assert judge.divergences[0]["kind"] == "disagreement"


def test_unparseable_question_skips_the_judge(fetch_spec):
    client = _client("yes. True")
    result = _ask(fetch_spec, LLMJudge(client), "ask(Which one do you mean?)")
    assert not result.info["valid"]
    assert client.calls == 0


def test_strict_replay_miss(fetch_spec, tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(FixtureMissError):
        _ask(fetch_spec, LLMJudge(None, FixtureStore(str(path), "strict")))


def test_strict_replay_needs_the_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        FixtureStore(str(tmp_path / "missing.jsonl"), "strict")


def test_live_client_required_outside_strict_mode(tmp_path):
    with pytest.raises(ValueError):
        LLMJudge(None, FixtureStore(str(tmp_path / "f.jsonl"), "mixed"))


def test_fixture_key_collision(tmp_path):
    request = JudgeRequest(instruction="Bring the bowl.", world_graph="g", targets=(), question="q")
    other = JudgeRequest(instruction="Bring the cup.", world_graph="g", targets=(), question="q")
    path = tmp_path / "fixtures.jsonl"
    entry = {"key": request.key(), "request": json.loads(other.canonical()), "response": "yes. True"}
    path.write_text(json.dumps(entry) + "\n")
    with pytest.raises(FixtureCollisionError):
        FixtureStore(str(path), "strict").lookup(request)


def test_mixed_mode_replays_hits_and_records_misses(tmp_path):
    path = str(tmp_path / "fixtures.jsonl")
    hit = JudgeRequest(instruction="a", world_graph="g", targets=(), question="q1")
    miss = JudgeRequest(instruction="a", world_graph="g", targets=(), question="q2")
    FixtureStore(path, "record").record(hit, "yes. True")

    client = _client("no. False")
    judge = LLMJudge(client, FixtureStore(path, "mixed"))
    assert judge.judge(hit).answer_text == "yes"
    assert client.calls == 0
    assert judge.judge(miss).answer_text == "no"
    assert client.calls == 1
    assert len(FixtureStore(path, "strict")) == 2


def test_client_sends_chat_completion_payload():
    calls = []
    client = _client("yes. True", calls)
    request = JudgeRequest(instruction="a", world_graph="g", targets=(), question="q")
    assert client.complete(request) == "yes. True"
    payload = calls[0]
    assert payload["temperature"] == 0
    assert [m["role"] for m in payload["messages"]] == ["system", "user"]


def test_bridge_disabled_without_url_or_fixtures(monkeypatch):
    monkeypatch.delenv("ASK2ACT_JUDGE_URL", raising=False)
    assert make_judge(settings=BridgeSettings(_env_file=None)) is None
    with pytest.raises(ValueError):
        JudgeClient(BridgeSettings(_env_file=None))


def test_settings_read_from_environment(monkeypatch):
    monkeypatch.setenv("ASK2ACT_JUDGE_URL", "http://localhost:9/v1")
    monkeypatch.setenv("ASK2ACT_JUDGE_TIMEOUT", "2.5")
    settings = BridgeSettings(_env_file=None)
    assert settings.enabled
    assert settings.judge_timeout == 2.5


def test_calibration_table(fetch_spec):
    table = calibrate(LLMJudge(_client("yes. True")), [fetch_spec], n=10, seed=0)
    assert list(table.columns) == ["template", "questions", "errors", "answer_agreement", "useful_agreement"]
    overall = table.iloc[-1]
    assert overall["template"] == "all"
    assert overall["questions"] == 10
    assert overall["errors"] == 0
    assert 0.0 <= overall["answer_agreement"] <= 1.0
    assert table["questions"].iloc[:-1].sum() == 10
