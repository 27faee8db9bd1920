import itertools

import numpy as np
import pytest

from simulator.dialogue import (
    INVALID_QUESTION,
    NO_SUCH_OBJECT,
    AnswerKey,
    AnswerKind,
    AskContext,
    DialogueJudge,
    Template,
    answer_under,
    enumerate_questions,
    gained_information,
    ground,
    initial_hypothesis,
    is_useful,
    parse_question,
    question_universe,
    refine,
    source_objects,
    true_hypothesis,
)
from simulator.episode import TaskFamily, parse_instruction
from simulator.errors import QuestionParseError


def _ctx(scene, seen=(), agent_at="rec_00"):
    return AskContext(locations=scene.initial_locations(), seen=frozenset(seen), agent_at=agent_at)


@pytest.mark.parametrize("text, template, slots", [
    ("Is target object on the dark table?", Template.ON_RECEPTACLE, ("dark table",)),
    ("Is large red bowl the target object?", Template.IS_TARGET, ("large red bowl",)),
    ("Is target object the small one?", Template.TARGET_SIZE, ("small",)),
    ("Where is the bowl located?", Template.WHERE_IS, ("bowl",)),
    ("What color is bowl?", Template.WHAT_COLOR, ("bowl",)),
    ("Can you describe the bowl?", Template.DESCRIBE, ("bowl",)),
    ("Is yellow dumbbell clutter?", Template.IS_CLUTTER, ("yellow dumbbell",)),
    ("Are toys clutter?", Template.ARE_CLUTTER, ("toys",)),
    ("Which receptacle to place the bowls on/in?", Template.WHICH_PLACE, ("receptacle", "bowls")),
    ("Which top cabinet to place the red bowl on/in?", Template.WHICH_PLACE, ("top cabinet", "red bowl")),
])
def test_parse_question_templates(text, template, slots):
    q = parse_question(text)
    assert q.template is template
    assert q.slots == slots
    assert q.text() == text


@pytest.mark.parametrize("text", [
    "Which one is it?",
    "Is target object on the moon?",
    "Is target object the medium one?",
    "Is bowl the target object?",
    "Where is the spaceship located?",
])
def test_off_grammar_questions_raise(text):
    with pytest.raises(QuestionParseError):
        parse_question(text)


def test_receptacle_question_resolves_fetch_ambiguity(fetch_spec):
    judge = DialogueJudge(fetch_spec)
    turn = judge.ask("Is target object on the dark table?", _ctx(fetch_spec.scene))
    assert turn.answer.kind is AnswerKind.YES
    assert turn.useful
    assert turn.hypothesis_before.candidate_targets == {("obj_01",), ("obj_06",)}
    assert turn.hypothesis_after.candidate_targets == {("obj_01",)}
    assert turn.source == "oracle"


def test_repeated_question_is_not_useful(fetch_spec):
    judge = DialogueJudge(fetch_spec)
    ctx = _ctx(fetch_spec.scene)
    assert judge.ask("Is target object the large one?", ctx).useful
    again = judge.ask("Is target object the large one?", ctx)
    assert again.answer.kind is AnswerKind.YES
    assert not again.useful


def test_question_about_unseen_object_is_answered_but_not_useful(fetch_spec):
    scene = fetch_spec.scene
    judge = DialogueJudge(fetch_spec)
    turn = judge.ask("Is large red bowl the target object?", _ctx(scene, seen=()))
    assert turn.answer.kind is AnswerKind.YES
    assert not turn.grounded.grounded
    assert not turn.useful

    judge = DialogueJudge(fetch_spec)
    turn = judge.ask("Is large red bowl the target object?", _ctx(scene, seen=("obj_01",), agent_at="rec_01"))
    assert turn.grounded.grounded and turn.useful


def test_invalid_question_turn(fetch_spec):
    judge = DialogueJudge(fetch_spec)
    turn = judge.ask("Is it the red one or the other one?", _ctx(fetch_spec.scene))
    assert turn.answer == INVALID_QUESTION
    assert not turn.parsed and not turn.useful
    assert judge.history == [turn]


def test_fetch_answers(fetch_spec):
    judge = DialogueJudge(fetch_spec)
    ctx = _ctx(fetch_spec.scene, seen=("obj_01", "obj_06"))
    assert judge.ask("What color is bowl?", ctx).answer.text == "red"
    assert judge.ask("Where is the bowl located?", ctx).answer.text == "dark table"
    assert judge.ask("Can you describe the bowl?", ctx).answer.text == "the large red bowl on the dark table"
    assert judge.ask("Where is the toy located?", ctx).answer == NO_SUCH_OBJECT
    assert judge.ask("Is red bowl clutter?", ctx).answer.kind is AnswerKind.NO
    assert judge.ask("Which receptacle to place the bowls on/in?", ctx).answer == NO_SUCH_OBJECT


def test_held_object_is_in_the_gripper(fetch_spec):
    locations = fetch_spec.scene.initial_locations()
    del locations["obj_01"]
    ctx = AskContext(locations=locations, seen=frozenset({"obj_01"}), holding="obj_01", agent_at="rec_01")
    turn = DialogueJudge(fetch_spec).ask("Where is the bowl located?", ctx)
    assert turn.answer.text == "robot gripper"


def test_preference_questions(preference_spec):
    scene = preference_spec.scene
    judge = DialogueJudge(preference_spec)
    ctx = _ctx(scene, seen=("obj_00", "obj_01", "obj_02", "obj_05", "obj_06"))
    bowls = judge.ask("Which receptacle to place the bowls on/in?", ctx)
    assert bowls.answer.kind is AnswerKind.RECEPTACLE_NAME
    assert bowls.answer.text == "top cabinet"
    assert bowls.useful
    assert bowls.hypothesis_after.unknown_preferences == {"casserole"}

    casserole = judge.ask("Which receptacle to place the blue casserole on/in?", ctx)
    assert casserole.answer.text == "bottom cabinet"
    assert casserole.useful
    assert judge.hypothesis.resolved

    assert judge.ask("Is target object on the sofa?", ctx).answer == NO_SUCH_OBJECT
    assert judge.ask("Which receptacle to place the toys on/in?", ctx).answer == NO_SUCH_OBJECT


def test_preference_question_needs_a_seen_member(preference_spec):
    turn = DialogueJudge(preference_spec).ask("Which receptacle to place the bowls on/in?",
                                              _ctx(preference_spec.scene, seen=("obj_00",)))
    assert turn.answer.text == "top cabinet"
    assert not turn.useful


def test_truthful_answer_never_empties_the_hypothesis(fetch_spec, preference_spec):
    for spec in (fetch_spec, preference_spec):
        key = AnswerKey.from_spec(spec)
        truth = true_hypothesis(spec)
        hyp = initial_hypothesis(spec)
        for gq in question_universe(spec):
            answer = answer_under(truth, gq, key)
            after = refine(hyp, gq, answer, key)
            assert truth in after.candidate_targets


def test_usefulness_matches_brute_force_partition(fetch_spec):
    """A grounded question is useful exactly when the truthful answer rules out some candidate."""
    key = AnswerKey.from_spec(fetch_spec)
    truth = true_hypothesis(fetch_spec)
    start = initial_hypothesis(fetch_spec)
    for gq in question_universe(fetch_spec):
        answer = answer_under(truth, gq, key)
        consistent = [h for h in start.candidate_targets if answer_under(h, gq, key) == answer]
        after = refine(start, gq, answer, key)
        assert set(consistent) == set(after.candidate_targets)
        assert is_useful(gq, start, after) == (gq.grounded and len(consistent) < len(start.candidate_targets))


def test_pairs_of_questions_resolve_at_most_to_truth(fetch_spec):
    key = AnswerKey.from_spec(fetch_spec)
    truth = true_hypothesis(fetch_spec)
    universe = question_universe(fetch_spec)[:12]
    for first, second in itertools.combinations(universe, 2):
        hyp = initial_hypothesis(fetch_spec)
        for gq in (first, second):
            hyp = refine(hyp, gq, answer_under(truth, gq, key), key)
        assert truth in hyp.candidate_targets
        assert not gained_information(hyp, hyp)


def test_enumerate_questions_covers_seen_objects(vocab):
    questions = enumerate_questions(["sofa", "cabinet", "top cabinet"], ["large red bowl", "small red bowl"], vocab)
    texts = {q.text() for q in questions}
    assert "Is target object on the top cabinet?" in texts
    assert "Is small red bowl the target object?" in texts
    assert "Which receptacle to place the bowls on/in?" in texts
    assert sum(1 for q in questions if q.template is Template.WHAT_COLOR) == 1
    for q in questions:
        assert parse_question(q.text(), vocab) == q


def _hypothesis_space(spec):
    if spec.family.is_identification:
        descriptor = parse_instruction(spec.instruction).descriptor
        return {(o.id,) for o in spec.scene.objects if descriptor.matches(o)}
    if spec.family is TaskFamily.CLEAN_CLUTTER:
        pool = sorted(source_objects(spec))
        return {c for n in range(len(pool) + 1) for c in itertools.combinations(pool, n)}
    return {true_hypothesis(spec)}


@pytest.mark.slow
def test_refine_matches_refiltering_on_generated_episodes(large_episodes, vocab):
    assert len(large_episodes) >= 1000
    assert {s.family for s in large_episodes} == set(TaskFamily)
    rng = np.random.default_rng(0)
    for spec in large_episodes:
        scene = spec.scene
        key = AnswerKey.from_spec(spec)
        truth = true_hypothesis(spec)
        space = _hypothesis_space(spec)
        start = initial_hypothesis(spec)
        assert set(start.candidate_targets) == space, spec.id

        ctx = _ctx(scene, seen=[o.id for o in scene.objects])
        questions = enumerate_questions(scene.place_names(), [o.descriptor for o in scene.objects], vocab)
        grounded = [ground(q, scene, ctx, vocab=vocab) for q in questions]

        # Single questions from the initial state.
        for gq in grounded:
            answer = answer_under(truth, gq, key)
            consistent = {h for h in space if answer_under(h, gq, key) == answer}
            after = refine(start, gq, answer, key)
            assert set(after.candidate_targets) == consistent, (spec.id, gq.question.text())
            resolves_pref = (gq.template is Template.WHICH_PLACE and answer.kind is AnswerKind.RECEPTACLE_NAME
                             and gq.category in start.unknown_preferences)
            expected = gq.grounded and (len(consistent) < len(space) or resolves_pref)
            assert is_useful(gq, start, after) == expected, (spec.id, gq.question.text())

        # A random question sequence, refiltered from scratch after each answer.
        hyp, history = start, []
        for index in rng.permutation(len(grounded))[:8]:
            gq = grounded[index]
            answer = answer_under(truth, gq, key)
            history.append((gq, answer))
            hyp = refine(hyp, gq, answer, key)
            survivors = {h for h in space if all(answer_under(h, q, key) == a for q, a in history)}
            assert set(hyp.candidate_targets) == survivors, spec.id
            assert truth in survivors
