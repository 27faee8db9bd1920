import json

import pandas as pd
import pytest

from evaluation.metrics import EpisodeOutcome, ars, build_report, guess_rate, qr, success_rate


def _outcome(eid="e0", family="AttributeRecognition", success=True, relevant=1, irrelevant=0, k=1, split="train"):
    return EpisodeOutcome(episode_id=eid, family=family, split=split, success=success, q_relevant=relevant,
                          q_irrelevant=irrelevant, K=k, steps=10)


@pytest.mark.parametrize("outcome, expected", [
    (_outcome(relevant=1, k=1), 1.0),
    (_outcome(success=False), 0.0),
    (_outcome(relevant=2, irrelevant=1, k=3), 1 / 3),
    (_outcome(relevant=4, k=2), 1 / 3),
])
def test_ars(outcome, expected):
    assert ars(outcome) == pytest.approx(expected)


def test_ars_undefined_without_ambiguity():
    with pytest.raises(ValueError):
        ars(_outcome(relevant=0, k=0))


def test_question_ratio():
    outcomes = [_outcome(relevant=1, k=1), _outcome(relevant=1, irrelevant=3, k=2)]
    assert qr(outcomes) == pytest.approx((1 + 2) / 2)
    with pytest.raises(ValueError):
        qr([])
    with pytest.raises(ValueError):
        qr([_outcome(k=0, relevant=0)])


def test_success_and_guess_rates():
    outcomes = [
        _outcome("a", relevant=0, k=1),
        _outcome("b", relevant=1, k=1),
        _outcome("c", success=False),
        _outcome("d", relevant=0, k=0),
    ]
    assert success_rate(outcomes) == pytest.approx(0.75)
    assert guess_rate(outcomes) == pytest.approx(0.5)
    assert guess_rate([_outcome(success=False)]) == 0.0
    with pytest.raises(ValueError):
        success_rate([])


def test_report_leaves_unambiguous_episodes_out_of_ars():
    outcomes = [
        _outcome("a", family="NoAmbiguity", relevant=0, k=0),
        _outcome("b", relevant=1, k=1),
        _outcome("c", family="PreferenceBased", success=False, relevant=1, k=3),
    ]
    report = build_report(outcomes)
    assert report.episodes == 3
    assert report.SR == pytest.approx(2 / 3)
    assert report.ARS == pytest.approx(0.5)
    assert report.QR == pytest.approx((1 + 1 / 3) / 2)
    assert [row["family"] for row in report.per_family] == ["AttributeRecognition", "NoAmbiguity", "PreferenceBased"]
    no_ambiguity = report.per_family[1]
    assert no_ambiguity["ARS"] is None and no_ambiguity["QR"] is None and no_ambiguity["SR"] == 1.0
    assert [row["K"] for row in report.per_k] == list(range(1, 8))
    assert report.per_k[0] == {"K": 1, "episodes": 1, "SR": 1.0}
    assert report.per_k[1]["SR"] is None
    assert report.questions_histogram == {"0": 1, "1": 2}


def test_empty_report_is_an_error():
    with pytest.raises(ValueError):
        build_report([])


def test_report_write(tmp_path):
    report = build_report([_outcome("a"), _outcome("b", success=False)])
    json_path, csv_path = report.write(str(tmp_path), "expert")
    with open(json_path) as f:
        assert json.load(f)["SR"] == 0.5
    frame = pd.read_csv(csv_path)
    assert list(frame.columns) == ["family", "episodes", "SR", "ARS", "QR"]
    assert frame.loc[0, "ARS"] == pytest.approx(0.5)
