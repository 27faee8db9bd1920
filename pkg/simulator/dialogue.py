"""Question grammar, truthful answering oracle and the usefulness judge.

The judge holds the privileged hypothesis set for the whole episode: every
assignment of target objects (or clutter subsets) consistent with the
instruction and the answers given so far. A question is useful when it is
grounded in what the agent has seen and its truthful answer removes at least
one hypothesis or reveals an unknown preference.
"""
import logging
import re
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from itertools import combinations
from typing import Mapping, Protocol

from simulator.episode import Descriptor, EpisodeSpec, TaskFamily, parse_descriptor, parse_instruction
from simulator.errors import QuestionParseError
from simulator.vocabulary import SIZES, Vocabulary, load_vocabulary
from simulator.world_model import Place, Scene

logger = logging.getLogger(__name__)


class Template(IntEnum):
    ON_RECEPTACLE = 1
    IS_TARGET = 2
    TARGET_SIZE = 3
    WHERE_IS = 4
    WHAT_COLOR = 5
    DESCRIBE = 6
    IS_CLUTTER = 7
    ARE_CLUTTER = 8
    WHICH_PLACE = 9


TEMPLATE_TEXT: dict[Template, str] = {
    Template.ON_RECEPTACLE: "Is target object on the {receptacle}?",
    Template.IS_TARGET: "Is {object_instance} the target object?",
    Template.TARGET_SIZE: "Is target object the {object_size} one?",
    Template.WHERE_IS: "Where is the {object_category} located?",
    Template.WHAT_COLOR: "What color is {object_category}?",
    Template.DESCRIBE: "Can you describe the {object_category}?",
    Template.IS_CLUTTER: "Is {object_instance} clutter?",
    Template.ARE_CLUTTER: "Are {object_category} clutter?",
    Template.WHICH_PLACE: "Which {receptacle} to place the {object_instance} on/in?",
}

_SLOT_RE = re.compile(r"\{(\w+)\}")


def _slot_names(template: Template) -> tuple[str, ...]:
    return tuple(_SLOT_RE.findall(TEMPLATE_TEXT[template]))


def _template_regex(template: Template) -> re.Pattern:
    parts = _SLOT_RE.split(TEMPLATE_TEXT[template])
    # split() alternates literal text and slot names
    pattern = "".join(
        re.escape(part) if i % 2 == 0 else f"(?P<{part}>.+?)" for i, part in enumerate(parts)
    )
    return re.compile(f"^{pattern}$")


_TEMPLATE_PATTERNS = {t: _template_regex(t) for t in Template}

HELD_LOCATION = "robot gripper"


@dataclass(frozen=True)
class Question:
    template: Template
    slots: tuple[str, ...]

    def slot(self, name: str) -> str:
        return self.slots[_slot_names(self.template).index(name)]

    def text(self) -> str:
        return TEMPLATE_TEXT[self.template].format(**dict(zip(_slot_names(self.template), self.slots)))

    @classmethod
    def of(cls, template: Template, **slots: str) -> "Question":
        return cls(template, tuple(slots[name] for name in _slot_names(template)))


class AnswerKind(str, Enum):
    YES = "yes"
    NO = "no"
    RECEPTACLE_NAME = "receptacle_name"
    COLOR_NAME = "color_name"
    DESCRIPTION = "description"
    OBJECT_REF = "object_ref"


@dataclass(frozen=True)
class Answer:
    kind: AnswerKind
    text: str


YES = Answer(AnswerKind.YES, "yes")
NO = Answer(AnswerKind.NO, "no")
NO_SUCH_OBJECT = Answer(AnswerKind.DESCRIPTION, "no such object")
INVALID_QUESTION = Answer(AnswerKind.DESCRIPTION, "invalid question")


# --- parsing --------------------------------------------------------------


def _valid_slot(template: Template, name: str, value: str, vocab: Vocabulary) -> bool:
    if name == "receptacle":
        return value in vocab.all_place_names or (template is Template.WHICH_PLACE and value == "receptacle")
    if name == "object_size":
        return value in SIZES
    if name == "object_instance":
        # template 9 may name a whole category ("plates"); 2 and 7 need an instance
        if template is Template.WHICH_PLACE:
            return parse_descriptor(value, vocab, allow_plural=True) is not None
        descriptor = parse_descriptor(value, vocab)
        return descriptor is not None and descriptor.color is not None
    if name == "object_category":
        return parse_descriptor(value, vocab, allow_plural=True) is not None
    return False


def parse_question(text: str, vocab: Vocabulary | None = None) -> Question:
    """Parse a question string into one of the nine templates or raise QuestionParseError."""
    vocab = vocab or load_vocabulary()
    stripped = text.strip()
    for template, pattern in _TEMPLATE_PATTERNS.items():
        m = pattern.match(stripped)
        if m is None:
            continue
        slots = tuple(m[name] for name in _slot_names(template))
        if all(_valid_slot(template, name, value, vocab) for name, value in zip(_slot_names(template), slots)):
            return Question(template, slots)
    raise QuestionParseError(f"off-grammar question: {text!r}")


# --- grounding --------------------------------------------------------------


@dataclass(frozen=True)
class AskContext:
    """Agent-visible state at the moment a question is asked."""
    locations: Mapping[str, Place]
    seen: frozenset[str] = frozenset()
    holding: str | None = None
    agent_at: str | None = None


@dataclass(frozen=True)
class GroundedQuestion:
    """A parsed question with its entities resolved against the scene at ask time."""
    question: Question
    grounded: bool
    object_id: str | None = None
    category: str | None = None
    matches: tuple[str, ...] = ()
    place: Place | None = None
    place_objects: frozenset[str] = frozenset()
    size: str | None = None
    where: tuple[tuple[str, str], ...] = ()

    @property
    def template(self) -> Template:
        return self.question.template

    def location_of(self, object_id: str) -> str:
        return dict(self.where).get(object_id, HELD_LOCATION)


def _location_text(scene: Scene, ctx: AskContext, object_id: str) -> str:
    place = ctx.locations.get(object_id)
    return HELD_LOCATION if place is None else scene.place_name(place)


def _resolve_instance(
    scene: Scene, descriptor: Descriptor, ctx: AskContext, focus: Place | None
) -> tuple[str | None, bool]:
    matches = sorted(o.id for o in scene.objects if descriptor.matches(o))
    seen = [oid for oid in matches if oid in ctx.seen]
    if not seen:
        return (matches[0] if matches else None), False
    for receptacle in (focus.receptacle if focus else None, ctx.agent_at):
        if receptacle is None:
            continue
        here = [oid for oid in seen if (p := ctx.locations.get(oid)) is not None and p.receptacle == receptacle]
        if here:
            return here[0], True
    return seen[0], True


def ground(
    question: Question,
    scene: Scene,
    ctx: AskContext,
    focus: Place | None = None,
    vocab: Vocabulary | None = None,
) -> GroundedQuestion:
    vocab = vocab or load_vocabulary()
    t = question.template

    if t is Template.ON_RECEPTACLE:
        place = scene.place_by_name(question.slot("receptacle"))
        if place is None:
            return GroundedQuestion(question, grounded=False)
        if place.compartment is None:
            inside = frozenset(oid for oid, p in ctx.locations.items() if p.receptacle == place.receptacle)
        else:
            inside = frozenset(oid for oid, p in ctx.locations.items() if p == place)
        return GroundedQuestion(question, grounded=True, place=place, place_objects=inside)

    if t is Template.TARGET_SIZE:
        return GroundedQuestion(question, grounded=True, size=question.slot("object_size"))

    if t in (Template.IS_TARGET, Template.IS_CLUTTER):
        descriptor = parse_descriptor(question.slot("object_instance"), vocab)
        object_id, grounded = _resolve_instance(scene, descriptor, ctx, focus)
        return GroundedQuestion(question, grounded=grounded, object_id=object_id, category=descriptor.category)

    if t in (Template.WHERE_IS, Template.WHAT_COLOR, Template.DESCRIBE, Template.ARE_CLUTTER):
        descriptor = parse_descriptor(question.slot("object_category"), vocab, allow_plural=True)
        matches = tuple(sorted(o.id for o in scene.objects if descriptor.matches(o)))
        where = tuple((oid, _location_text(scene, ctx, oid)) for oid in matches)
        return GroundedQuestion(
            question, grounded=bool(matches), category=descriptor.category, matches=matches, where=where
        )

    # Template.WHICH_PLACE
    descriptor = parse_descriptor(question.slot("object_instance"), vocab, allow_plural=True)
    slot_place = question.slot("receptacle")
    place_ok = slot_place == "receptacle" or scene.place_by_name(slot_place) is not None
    if descriptor.color is not None:
        object_id, seen = _resolve_instance(scene, descriptor, ctx, focus)
        if object_id is None:
            return GroundedQuestion(question, grounded=False)
        return GroundedQuestion(
            question, grounded=seen and place_ok, object_id=object_id, category=descriptor.category
        )
    seen_any = any(descriptor.matches(scene.object(oid)) for oid in ctx.seen)
    exists = any(descriptor.matches(o) for o in scene.objects)
    return GroundedQuestion(
        question,
        grounded=seen_any and place_ok,
        category=descriptor.category if exists else None,
    )


# --- truthful answers ---------------------------------------------------------


@dataclass(frozen=True)
class AnswerKey:
    """Privileged facts the oracle answers from."""
    scene: Scene
    fetch: bool
    clutter_task: bool
    source_objects: frozenset[str] = frozenset()
    preferences: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_spec(cls, spec: EpisodeSpec) -> "AnswerKey":
        scene = spec.scene
        prefs = {p.category: scene.place_name(p.place) for p in spec.preferences}
        return cls(
            scene=scene,
            fetch=spec.family.is_identification,
            clutter_task=spec.family is TaskFamily.CLEAN_CLUTTER,
            source_objects=frozenset(source_objects(spec)),
            preferences=prefs,
        )


def source_objects(spec: EpisodeSpec) -> list[str]:
    if spec.source_receptacle is None:
        return []
    return [o.id for o in spec.scene.objects if o.place == Place(spec.source_receptacle, None)]


def answer_under(hypothesis: tuple[str, ...], gq: GroundedQuestion, key: AnswerKey) -> Answer:
    """Answer ``gq`` as if ``hypothesis`` were the true target assignment."""
    t = gq.template
    scene = key.scene

    if t in (Template.ON_RECEPTACLE, Template.IS_TARGET, Template.TARGET_SIZE,
             Template.WHERE_IS, Template.WHAT_COLOR, Template.DESCRIBE):
        if not key.fetch:
            return NO_SUCH_OBJECT
        if t is Template.ON_RECEPTACLE:
            if gq.place is None:
                return NO_SUCH_OBJECT
            return YES if gq.place_objects.intersection(hypothesis) else NO
        if t is Template.IS_TARGET:
            if gq.object_id is None:
                return NO_SUCH_OBJECT
            return YES if gq.object_id in hypothesis else NO
        if t is Template.TARGET_SIZE:
            return YES if any(scene.object(oid).size.value == gq.size for oid in hypothesis) else NO
        targets = [oid for oid in hypothesis if oid in gq.matches]
        if not targets:
            return NO_SUCH_OBJECT
        obj = scene.object(targets[0])
        if t is Template.WHERE_IS:
            return Answer(AnswerKind.RECEPTACLE_NAME, gq.location_of(obj.id))
        if t is Template.WHAT_COLOR:
            return Answer(AnswerKind.COLOR_NAME, obj.color)
        return Answer(AnswerKind.DESCRIPTION, f"the {obj.descriptor} on the {gq.location_of(obj.id)}")

    if t is Template.IS_CLUTTER:
        if gq.object_id is None:
            return NO_SUCH_OBJECT
        return YES if key.clutter_task and gq.object_id in hypothesis else NO

    if t is Template.ARE_CLUTTER:
        if not gq.matches:
            return NO_SUCH_OBJECT
        on_source = [oid for oid in gq.matches if oid in key.source_objects]
        if key.clutter_task and on_source and all(oid in hypothesis for oid in on_source):
            return YES
        return NO

    # Template.WHICH_PLACE
    if gq.category is None or gq.category not in key.preferences:
        return NO_SUCH_OBJECT
    return Answer(AnswerKind.RECEPTACLE_NAME, key.preferences[gq.category])


# --- hypothesis tracking --------------------------------------------------------


@dataclass(frozen=True)
class HypothesisState:
    candidate_targets: frozenset[tuple[str, ...]]
    unknown_preferences: frozenset[str] = frozenset()
    clutter_pool: frozenset[str] = frozenset()

    @property
    def unresolved_clutter(self) -> frozenset[str]:
        if not self.clutter_pool:
            return frozenset()
        return frozenset(
            oid for oid in self.clutter_pool
            if len({oid in h for h in self.candidate_targets}) > 1
        )

    @property
    def resolved(self) -> bool:
        return len(self.candidate_targets) == 1 and not self.unknown_preferences


def true_hypothesis(spec: EpisodeSpec) -> tuple[str, ...]:
    if spec.family is TaskFamily.CLEAN_CLUTTER:
        return tuple(sorted(spec.clutter_set))
    return tuple(sorted(t.object_id for t in spec.targets))


def initial_hypothesis(spec: EpisodeSpec) -> HypothesisState:
    scene = spec.scene
    if spec.family.is_identification:
        descriptor = parse_instruction(spec.instruction).descriptor
        candidates = frozenset((o.id,) for o in scene.objects if descriptor.matches(o))
        return HypothesisState(candidate_targets=candidates)
    if spec.family is TaskFamily.CLEAN_CLUTTER:
        pool = sorted(source_objects(spec))
        subsets = frozenset(c for n in range(len(pool) + 1) for c in combinations(pool, n))
        categories = frozenset(scene.object(oid).category for oid in spec.clutter_set)
        return HypothesisState(subsets, categories, frozenset(pool))
    categories = frozenset(scene.object(t.object_id).category for t in spec.targets)
    return HypothesisState(frozenset({true_hypothesis(spec)}), categories)


def refine(hyp: HypothesisState, gq: GroundedQuestion, answer: Answer, key: AnswerKey) -> HypothesisState:
    """Drop every hypothesis that would have produced a different answer."""
    kept = frozenset(h for h in hyp.candidate_targets if answer_under(h, gq, key) == answer)
    assert kept, f"no hypothesis consistent with {gq.question.text()!r} -> {answer.text!r}"
    prefs = hyp.unknown_preferences
    if gq.template is Template.WHICH_PLACE and answer.kind is AnswerKind.RECEPTACLE_NAME:
        prefs = prefs - {gq.category}
    return HypothesisState(kept, prefs, hyp.clutter_pool)


def gained_information(before: HypothesisState, after: HypothesisState) -> bool:
    return (
        len(after.candidate_targets) < len(before.candidate_targets)
        or after.unknown_preferences < before.unknown_preferences
        or after.unresolved_clutter < before.unresolved_clutter
    )


def is_useful(
    gq: GroundedQuestion | None, before: HypothesisState, after: HypothesisState, repeated: bool = False
) -> bool:
    return gq is not None and gq.grounded and not repeated and gained_information(before, after)


# --- per-episode judge -----------------------------------------------------------


@dataclass(frozen=True)
class DialogueTurn:
    text: str
    answer: Answer
    useful: bool
    grounded: GroundedQuestion | None = None
    hypothesis_before: HypothesisState | None = None
    hypothesis_after: HypothesisState | None = None
    source: str = "oracle"

    @property
    def parsed(self) -> bool:
        return self.grounded is not None


class ExternalJudge(Protocol):
    """Anything that can overrule the oracle's answer text and usefulness flag."""

    def review(self, spec: EpisodeSpec, turn: DialogueTurn, ctx: AskContext,
               history: list[DialogueTurn]) -> DialogueTurn: ...


class DialogueJudge:
    """Answers an episode's questions and judges their usefulness."""

    def __init__(self, spec: EpisodeSpec, external: ExternalJudge | None = None, vocab: Vocabulary | None = None):
        self.spec = spec
        self.vocab = vocab or load_vocabulary()
        self.key = AnswerKey.from_spec(spec)
        self.truth = true_hypothesis(spec)
        self.hypothesis = initial_hypothesis(spec)
        self.focus: Place | None = None
        self.history: list[DialogueTurn] = []
        self.external = external

    def ask(self, text: str, ctx: AskContext) -> DialogueTurn:
        try:
            question = parse_question(text, self.vocab)
        except QuestionParseError:
            logger.debug("Unparseable question %r", text)
            turn = DialogueTurn(text=text, answer=INVALID_QUESTION, useful=False)
            self.history.append(turn)
            return turn

        gq = ground(question, self.spec.scene, ctx, self.focus, self.vocab)
        answer = answer_under(self.truth, gq, self.key)
        before = self.hypothesis
        after = refine(before, gq, answer, self.key)
        repeated = any(turn.text == question.text() for turn in self.history)
        turn = DialogueTurn(
            text=question.text(),
            answer=answer,
            useful=is_useful(gq, before, after, repeated),
            grounded=gq,
            hypothesis_before=before,
            hypothesis_after=after,
        )
        if self.external is not None:
            turn = self.external.review(self.spec, turn, ctx, list(self.history))
        self.hypothesis = after
        if gq.template is Template.ON_RECEPTACLE and gq.place is not None:
            self.focus = gq.place
        self.history.append(turn)
        return turn


# --- minimum question search -------------------------------------------------------


def question_universe(spec: EpisodeSpec, vocab: Vocabulary | None = None) -> list[GroundedQuestion]:
    """Every distinct question worth considering, grounded at full visibility at reset."""
    vocab = vocab or load_vocabulary()
    scene = spec.scene
    ctx = AskContext(locations=scene.initial_locations(), seen=frozenset(o.id for o in scene.objects))
    questions: list[Question] = [Question.of(Template.ON_RECEPTACLE, receptacle=n) for n in scene.place_names()]
    for obj in scene.objects:
        questions.append(Question.of(Template.IS_TARGET, object_instance=obj.descriptor))
    questions.extend(Question.of(Template.TARGET_SIZE, object_size=s) for s in SIZES)
    for category in scene.categories():
        for template in (Template.WHERE_IS, Template.WHAT_COLOR, Template.DESCRIBE):
            questions.append(Question.of(template, object_category=category))
    for obj in scene.objects:
        questions.append(Question.of(Template.IS_CLUTTER, object_instance=obj.descriptor))
    for category in scene.categories():
        questions.append(Question.of(Template.ARE_CLUTTER, object_category=vocab.plural(category)))
        questions.append(Question.of(Template.WHICH_PLACE, receptacle="receptacle", object_instance=vocab.plural(category)))
    return [ground(q, scene, ctx, vocab=vocab) for q in questions]


def enumerate_questions(
    place_names: list[str], seen_descriptors: list[str], vocab: Vocabulary | None = None
) -> list[Question]:
    """Grammar instantiations an agent can form from place names and the objects it has seen."""
    vocab = vocab or load_vocabulary()
    seen_descriptors = list(dict.fromkeys(seen_descriptors))
    categories = list(dict.fromkeys(parse_descriptor(d, vocab).category for d in seen_descriptors))
    questions = [Question.of(Template.ON_RECEPTACLE, receptacle=name) for name in place_names]
    questions += [Question.of(Template.IS_TARGET, object_instance=d) for d in seen_descriptors]
    questions += [Question.of(Template.TARGET_SIZE, object_size=s) for s in SIZES]
    for template in (Template.WHERE_IS, Template.WHAT_COLOR, Template.DESCRIBE):
        questions += [Question.of(template, object_category=c) for c in categories]
    questions += [Question.of(Template.IS_CLUTTER, object_instance=d) for d in seen_descriptors]
    questions += [Question.of(Template.ARE_CLUTTER, object_category=vocab.plural(c)) for c in categories]
    questions += [
        Question.of(Template.WHICH_PLACE, receptacle="receptacle", object_instance=vocab.plural(c))
        for c in categories
    ]
    return questions
