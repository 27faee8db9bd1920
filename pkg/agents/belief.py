"""Agent-side belief: what a policy can infer from observations and answers alone.

Runs the same hypothesis machinery the judge uses, but over the objects the
agent has seen and the dialogue it has had, never over the hidden episode
record. Shared by the scripted expert and the RL featurizer.
"""
import logging
from dataclasses import dataclass
from itertools import combinations

from agents.base_agent import AgentView
from simulator.dialogue import (
    AnswerKey,
    AskContext,
    GroundedQuestion,
    Template,
    answer_under,
    ground,
    parse_question,
)
from simulator.environment import KnownObject, Observation
from simulator.episode import TaskIntent, parse_descriptor, parse_instruction
from simulator.errors import QuestionParseError
from simulator.vocabulary import Vocabulary, load_vocabulary
from simulator.world_model import ObjectInstance, Place, Scene

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class _Turn:
    question: str
    answer: str
    focus: Place | None
    locations: tuple[tuple[str, Place], ...]
    agent_at: str
    holding: str | None


class AgentBelief:
    """Tracks seen objects, their first-observed places and the dialogue so far."""

    def __init__(self, view: AgentView, vocab: Vocabulary | None = None):
        self.view = view
        self.layout = view.layout
        self.vocab = vocab or load_vocabulary()
        self.intent: TaskIntent = parse_instruction(view.instruction, self.vocab)
        self.known: dict[str, KnownObject] = {}
        self.home: dict[str, Place] = {}
        self.turns: list[_Turn] = []
        self.preferences: dict[str, str] = {}
        self.focus: Place | None = None
        self.obs: Observation | None = None
        self._cache_key: tuple[int, int] | None = None
        self._scene: Scene | None = None
        self._candidates: list[tuple[str, ...]] = []
        self._ignored: set[tuple[str, str, bool]] = set()

    # --- observation intake ---

    def update(self, obs: Observation) -> None:
        for known in obs.known_objects:
            self.known[known.id] = known
            if known.id not in self.home and known.place is not None:
                self.home[known.id] = self.layout.place_by_name(known.place)
        if len(obs.dialogue) > len(self.turns):
            snapshot = tuple(sorted(self.current_locations().items()))
            for question, answer in obs.dialogue[len(self.turns):]:
                self.turns.append(_Turn(question, answer, self.focus, snapshot, obs.agent_at, obs.holding))
                self._note_turn(question, answer)
        self.obs = obs

    def _note_turn(self, question: str, answer: str) -> None:
        try:
            parsed = parse_question(question, self.vocab)
        except QuestionParseError:
            return
        if parsed.template is Template.ON_RECEPTACLE:
            place = self.layout.place_by_name(parsed.slot("receptacle"))
            if place is not None:
                self.focus = place
        elif parsed.template is Template.WHICH_PLACE and self.layout.place_by_name(answer) is not None:
            descriptor = parse_descriptor(parsed.slot("object_instance"), self.vocab, allow_plural=True)
            self.preferences[descriptor.category] = answer

    # --- derived views ---

    def current_locations(self) -> dict[str, Place]:
        locations = {}
        for oid, known in self.known.items():
            if known.place is not None:
                locations[oid] = self.layout.place_by_name(known.place)
        return locations

    def known_scene(self) -> Scene:
        """The layout populated with every object seen so far, at its first-observed place."""
        if self._scene is not None and len(self._scene.objects) == len(self.home):
            return self._scene
        objects = []
        for oid in sorted(self.home):
            descriptor = parse_descriptor(self.known[oid].descriptor, self.vocab)
            place = self.home[oid]
            objects.append(ObjectInstance(
                id=oid,
                category=descriptor.category,
                color=descriptor.color,
                size=descriptor.size,
                location=place.receptacle,
                compartment=place.compartment,
            ))
        self._scene = Scene(id=self.layout.id, rooms=self.layout.rooms, receptacles=self.layout.receptacles,
                            objects=tuple(objects), nav_edges=self.layout.nav_edges)
        return self._scene

    def ask_context(self) -> AskContext:
        obs = self.obs
        return AskContext(
            locations=self.current_locations(),
            seen=frozenset(self.known),
            holding=obs.holding if obs else None,
            agent_at=obs.agent_at if obs else None,
        )

    def source_objects(self) -> list[str]:
        if self.intent.kind != "clear_clutter":
            return []
        rec = self.layout.receptacle_by_name(self.intent.source)
        if rec is None:
            return []
        return sorted(oid for oid, place in self.home.items() if place == Place(rec.id, None))

    def group_objects(self) -> list[str]:
        if self.intent.kind != "preference":
            return []
        members = set(self.vocab.categories_in_group(self.intent.group))
        return sorted(oid for oid in self.home if self._category(oid) in members)

    def fetch_matches(self) -> list[str]:
        if self.intent.kind != "fetch":
            return []
        scene = self.known_scene()
        return sorted(o.id for o in scene.objects if self.intent.descriptor.matches(o))

    def _category(self, oid: str) -> str:
        return parse_descriptor(self.known[oid].descriptor, self.vocab).category

    def answer_key(self, scene: Scene | None = None) -> AnswerKey:
        scene = scene or self.known_scene()
        return AnswerKey(
            scene=scene,
            fetch=self.intent.kind == "fetch",
            clutter_task=self.intent.kind == "clear_clutter",
            source_objects=frozenset(self.source_objects()),
        )

    def regrounded_turns(self, scene: Scene) -> list[tuple[GroundedQuestion, str]]:
        out = []
        for turn in self.turns:
            try:
                question = parse_question(turn.question, self.vocab)
            except QuestionParseError:
                continue
            locations = {**self.home, **dict(turn.locations)}
            locations.pop(turn.holding, None)
            ctx = AskContext(locations=locations, seen=frozenset(dict(turn.locations)),
                             holding=turn.holding, agent_at=turn.agent_at)
            out.append((ground(question, scene, ctx, turn.focus, self.vocab), turn.answer))
        return out

    def candidates(self) -> list[tuple[str, ...]]:
        """Target assignments consistent with everything seen and heard, recomputed by refiltering."""
        key = (len(self.home), len(self.turns))
        if key == self._cache_key:
            return self._candidates
        if self.intent.kind == "fetch":
            pool = [(oid,) for oid in self.fetch_matches()]
        elif self.intent.kind == "clear_clutter":
            source = self.source_objects()
            pool = [c for n in range(len(source) + 1) for c in combinations(source, n)]
        else:
            pool = [tuple(self.group_objects())]

        scene = self.known_scene()
        answer_key = self.answer_key(scene)
        for gq, answer in self.regrounded_turns(scene):
            if not gq.grounded or gq.template is Template.WHICH_PLACE:
                continue
            kept = [h for h in pool if answer_under(h, gq, answer_key).text == answer]
            if kept:
                pool = kept
            else:
                self._note_ignored(gq.question.text(), answer)
        self._cache_key, self._candidates = key, pool
        return pool

    def _note_ignored(self, question: str, answer: str) -> None:
        explored = self.obs is not None and len(self.obs.visited) == len(self.layout.receptacles)
        if (question, answer, explored) in self._ignored:
            return
        self._ignored.add((question, answer, explored))
        # before the desk is walked the answer may concern an object not seen yet
        log = logger.warning if explored else logger.debug
        log("Answer %r to %r rules out every candidate; ignored", answer, question)

    # --- summaries ---

    def clutter_set(self) -> tuple[str, ...] | None:
        cands = self.candidates()
        return cands[0] if self.intent.kind == "clear_clutter" and len(cands) == 1 else None

    def fetch_target(self) -> str | None:
        cands = self.candidates()
        return cands[0][0] if self.intent.kind == "fetch" and len(cands) == 1 else None

    def categories_needing_preference(self) -> list[str]:
        if self.intent.kind == "clear_clutter":
            pool = self.clutter_set() or ()
        elif self.intent.kind == "preference":
            pool = tuple(self.group_objects())
        else:
            return []
        categories = dict.fromkeys(self._category(oid) for oid in pool)
        return [c for c in categories if c not in self.preferences]

    def resolved(self) -> bool:
        if self.intent.kind == "fetch":
            return self.fetch_target() is not None
        if self.intent.kind == "clear_clutter":
            return self.clutter_set() is not None and not self.categories_needing_preference()
        return bool(self.group_objects()) and not self.categories_needing_preference()
