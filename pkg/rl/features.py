"""Symbolic observation features and the slot-based flat action head.

Both sizes depend only on the scene config and the vocabulary, never on the
episode, so one network serves every scene of a dataset. Slots that point past
what the current layout or belief holds decode to a harmless no-op.
"""
import logging
from dataclasses import dataclass

import numpy as np

from agents.base_agent import AgentView
from agents.belief import AgentBelief
from simulator.dialogue import AnswerKind, Question, Template
from simulator.environment import AgentAction, Observation, observable_actions
from simulator.episode import parse_descriptor
from simulator.task_generator import MAX_K
from simulator.vocabulary import SIZES, Vocabulary, load_vocabulary
from utils.config import SceneConfig

logger = logging.getLogger(__name__)

TASK_KINDS = ("fetch", "clear_clutter", "preference")
ANSWER_KINDS = tuple(k.value for k in AnswerKind)
CANDIDATE_BUCKETS = 4


@dataclass(frozen=True)
class ActionSlot:
    kind: str
    index: int = 0


def build_slots(config: SceneConfig, vocab: Vocabulary | None = None) -> list[ActionSlot]:
    vocab = vocab or load_vocabulary()
    receptacles = config.num_receptacles
    compartments = config.num_articulated * vocab.max_sub_parts
    places = receptacles + compartments
    objects = config.max_objects
    slots = [ActionSlot("nav", i) for i in range(receptacles)]
    slots += [ActionSlot("open", i) for i in range(compartments)]
    slots += [ActionSlot("close", i) for i in range(compartments)]
    slots += [ActionSlot("pick", i) for i in range(objects)]
    slots += [ActionSlot("place", i) for i in range(places)]
    slots += [ActionSlot("ask_on", i) for i in range(places)]
    slots += [ActionSlot("ask_is_target", i) for i in range(objects)]
    slots += [ActionSlot("ask_size", i) for i in range(len(SIZES))]
    slots += [ActionSlot(kind) for kind in ("ask_where", "ask_color", "ask_describe")]
    slots += [ActionSlot("ask_is_clutter", i) for i in range(objects)]
    slots += [ActionSlot("ask_are_clutter", i) for i in range(objects)]
    slots += [ActionSlot("ask_which_place", i) for i in range(objects)]
    slots.append(ActionSlot("done"))
    return slots


class Featurizer:
    """Encodes observations into fixed-length vectors in [0, 1] and decodes slot indices into actions."""

    def __init__(self, config: SceneConfig | None = None, vocab: Vocabulary | None = None):
        self.config = config or SceneConfig()
        self.vocab = vocab or load_vocabulary()
        self.slots = build_slots(self.config, self.vocab)
        self.n_receptacles = self.config.num_receptacles
        self.n_compartments = self.config.num_articulated * self.vocab.max_sub_parts
        self.n_places = self.n_receptacles + self.n_compartments
        self.n_objects = self.config.max_objects
        self.categories = self.vocab.category_names
        self.colors = self.vocab.colors
        self.belief: AgentBelief | None = None

    @property
    def num_actions(self) -> int:
        return len(self.slots)

    @property
    def object_width(self) -> int:
        return 1 + len(self.categories) + len(self.colors) + 1 + self.n_places + 4

    @property
    def dim(self) -> int:
        return (
            2 * self.n_receptacles
            + self.n_compartments
            + self.n_objects * self.object_width
            + 1
            + len(TASK_KINDS)
            + self.n_places
            + self.n_receptacles
            + CANDIDATE_BUCKETS + 2
            + 3
            + len(ANSWER_KINDS) + 1
        )

    def reset(self, view: AgentView) -> None:
        self.view = view
        self.layout = view.layout
        self.belief = AgentBelief(view, self.vocab)
        self.receptacle_index = {r.id: i for i, r in enumerate(self.layout.receptacles[: self.n_receptacles])}
        places = self.layout.places()
        compartments = [p for p in places if p.compartment is not None]
        if len(compartments) > self.n_compartments:
            logger.warning("Layout %s has %d compartments, the action head only %d; extra ones are unreachable",
                           self.layout.id, len(compartments), self.n_compartments)
        self.surface_places = [p for p in places if p.compartment is None][: self.n_receptacles]
        self.compartment_places = compartments[: self.n_compartments]
        self.place_index = {p: i for i, p in enumerate(self.surface_places)}
        self.place_index.update({p: self.n_receptacles + i for i, p in enumerate(self.compartment_places)})

    def _object_ids(self, obs: Observation) -> list[str]:
        return [k.id for k in obs.known_objects][: self.n_objects]

    # --- encoding ---

    def encode(self, obs: Observation) -> np.ndarray:
        belief = self.belief
        belief.update(obs)
        layout = self.layout
        parts: list[np.ndarray] = []

        location = np.zeros(self.n_receptacles)
        if obs.agent_at in self.receptacle_index:
            location[self.receptacle_index[obs.agent_at]] = 1.0
        visited = np.zeros(self.n_receptacles)
        for rid in obs.visited:
            if rid in self.receptacle_index:
                visited[self.receptacle_index[rid]] = 1.0
        opened = np.zeros(self.n_compartments)
        for i, place in enumerate(self.compartment_places):
            opened[i] = float(place.compartment in obs.opened)
        parts += [location, visited, opened]

        candidates = belief.candidates()
        in_candidate = set().union(*candidates) if candidates else set()
        intent = belief.intent
        objects = np.zeros((self.n_objects, self.object_width))
        known = {k.id: k for k in obs.known_objects}
        matches = set(belief.fetch_matches())
        task_pool = set(belief.source_objects()) | set(belief.group_objects())
        for slot, oid in enumerate(self._object_ids(obs)):
            row = objects[slot]
            descriptor = parse_descriptor(known[oid].descriptor, self.vocab)
            row[0] = 1.0
            offset = 1
            row[offset + self.categories.index(descriptor.category)] = 1.0
            offset += len(self.categories)
            row[offset + self.colors.index(descriptor.color)] = 1.0
            offset += len(self.colors)
            row[offset] = float(descriptor.size == "large")
            offset += 1
            if known[oid].place is not None:
                place = layout.place_by_name(known[oid].place)
                if place in self.place_index:
                    row[offset + self.place_index[place]] = 1.0
            offset += self.n_places
            row[offset] = float(obs.holding == oid)
            row[offset + 1] = float(oid in in_candidate)
            row[offset + 2] = float(oid in matches)
            row[offset + 3] = float(oid in task_pool)
        parts.append(objects.ravel())
        parts.append(np.array([float(obs.holding is not None)]))

        task = np.zeros(len(TASK_KINDS))
        task[TASK_KINDS.index(intent.kind)] = 1.0
        destination = np.zeros(self.n_places)
        if intent.destination is not None:
            place = layout.place_by_name(intent.destination)
            if place in self.place_index:
                destination[self.place_index[place]] = 1.0
        source = np.zeros(self.n_receptacles)
        if intent.source is not None:
            rec = layout.receptacle_by_name(intent.source)
            if rec is not None and rec.id in self.receptacle_index:
                source[self.receptacle_index[rec.id]] = 1.0
        parts += [task, destination, source]

        bucket = np.zeros(CANDIDATE_BUCKETS)
        if candidates:
            bucket[min(len(candidates), CANDIDATE_BUCKETS) - 1] = 1.0
        unknown = len(belief.categories_needing_preference())
        parts.append(bucket)
        parts.append(np.array([float(belief.resolved()), min(unknown, MAX_K) / MAX_K]))

        budget = max(obs.budget, 1)
        parts.append(np.array([
            min(obs.questions_asked / budget, 1.0),
            max(obs.budget - obs.questions_asked, 0) / (MAX_K + 1),
            obs.steps_remaining / max(self.view.max_steps, 1),
        ]))
        answer = np.zeros(len(ANSWER_KINDS) + 1)
        if obs.last_answer_kind is None:
            answer[-1] = 1.0
        else:
            answer[ANSWER_KINDS.index(obs.last_answer_kind)] = 1.0
        parts.append(answer)

        features = np.clip(np.concatenate(parts), 0.0, 1.0).astype(np.float32)
        assert features.shape == (self.dim,), f"feature length {features.shape[0]} != {self.dim}"
        return features

    # --- decoding ---

    def _noop(self, obs: Observation) -> AgentAction:
        return AgentAction.nav(obs.agent_at_name)

    def _category_of_slot(self, obs: Observation, index: int) -> str | None:
        ids = self._object_ids(obs)
        if index >= len(ids):
            return None
        return parse_descriptor(obs.known_objects[index].descriptor, self.vocab).category

    def decode(self, index: int, obs: Observation) -> AgentAction:
        slot = self.slots[index]
        layout = self.layout
        known = obs.known_objects[: self.n_objects]
        kind, i = slot.kind, slot.index

        if kind == "done":
            return AgentAction.done()
        if kind == "nav":
            recs = layout.receptacles[: self.n_receptacles]
            return AgentAction.nav(recs[i].name) if i < len(recs) else self._noop(obs)
        if kind in ("open", "close"):
            if i >= len(self.compartment_places):
                return self._noop(obs)
            name = self.compartment_places[i].compartment
            return AgentAction.open(name) if kind == "open" else AgentAction.close(name)
        if kind in ("place", "ask_on"):
            places = self.surface_places + self.compartment_places
            if i >= self.n_receptacles:
                j = i - self.n_receptacles
                place = self.compartment_places[j] if j < len(self.compartment_places) else None
            else:
                place = self.surface_places[i] if i < len(self.surface_places) else None
            if place is None or place not in places:
                return self._noop(obs)
            name = layout.place_name(place)
            if kind == "place":
                return AgentAction.place(name)
            return AgentAction.ask(Question.of(Template.ON_RECEPTACLE, receptacle=name).text())
        if kind == "ask_size":
            return AgentAction.ask(Question.of(Template.TARGET_SIZE, object_size=SIZES[i]).text())
        if kind in ("ask_where", "ask_color", "ask_describe"):
            intent = self.belief.intent
            if intent.descriptor is None:
                return self._noop(obs)
            template = {"ask_where": Template.WHERE_IS, "ask_color": Template.WHAT_COLOR,
                        "ask_describe": Template.DESCRIBE}[kind]
            return AgentAction.ask(Question.of(template, object_category=intent.descriptor.category).text())

        if i >= len(known):
            return self._noop(obs)
        descriptor = known[i].descriptor
        if kind == "pick":
            return AgentAction.pick(descriptor)
        if kind == "ask_is_target":
            return AgentAction.ask(Question.of(Template.IS_TARGET, object_instance=descriptor).text())
        if kind == "ask_is_clutter":
            return AgentAction.ask(Question.of(Template.IS_CLUTTER, object_instance=descriptor).text())
        plural = self.vocab.plural(self._category_of_slot(obs, i))
        if kind == "ask_are_clutter":
            return AgentAction.ask(Question.of(Template.ARE_CLUTTER, object_category=plural).text())
        return AgentAction.ask(
            Question.of(Template.WHICH_PLACE, receptacle="receptacle", object_instance=plural).text()
        )

    def valid_mask(self, obs: Observation) -> np.ndarray:
        """1 where the slot decodes to an action that is not a no-op from the observed state."""
        allowed = {a.text() for a in observable_actions(self.layout, obs, self.vocab)}
        mask = np.zeros(self.num_actions, dtype=bool)
        for index in range(self.num_actions):
            text = self.decode(index, obs).text()
            mask[index] = text in allowed
        return mask

