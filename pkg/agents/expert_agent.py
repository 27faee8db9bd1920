"""Scripted expert: frontier exploration, deductive questioning, then a shortest execution plan.

The expert reads only observations and answers. Its questions come from the
same grammar any agent can use, chosen so that each one settles as much of
its own belief as a single question can.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum

from agents.base_agent import AgentView, BaseAgent
from agents.belief import AgentBelief
from simulator.dialogue import Question, Template, answer_under, enumerate_questions, ground
from simulator.environment import AgentAction, Observation
from simulator.vocabulary import Vocabulary, load_vocabulary

logger = logging.getLogger(__name__)

_IDENTIFICATION_TEMPLATES = (
    Template.ON_RECEPTACLE,
    Template.IS_TARGET,
    Template.TARGET_SIZE,
    Template.WHERE_IS,
    Template.WHAT_COLOR,
    Template.DESCRIBE,
)


class ExpertPhase(str, Enum):
    EXPLORE = "explore"
    INQUIRE = "inquire"
    EXECUTE = "execute"


@dataclass
class ExpertState:
    """Per-episode state; phases only ever move forward."""
    phase: ExpertPhase = ExpertPhase.EXPLORE
    frontier: list[str] = field(default_factory=list)
    opened: set[str] = field(default_factory=set)
    asked: list[str] = field(default_factory=list)
    pending_close: tuple[str, str] | None = None

    def advance(self, phase: ExpertPhase) -> None:
        order = list(ExpertPhase)
        if order.index(phase) > order.index(self.phase):
            self.phase = phase


class ExpertAgent(BaseAgent):
    """
    Explores every receptacle nearest-first, asks the questions that resolve its
    belief, then fetches or relocates the resolved targets.
    """
    name = "expert"

    def __init__(self, early_stop: bool = False, vocab: Vocabulary | None = None):
        self.early_stop = early_stop
        self.vocab = vocab or load_vocabulary()

    def reset(self, view: AgentView) -> None:
        super().reset(view)
        self.layout = view.layout
        self.belief = AgentBelief(view, self.vocab)
        self.state = ExpertState()

    def act(self, obs: Observation) -> AgentAction:
        self.belief.update(obs)
        if self.state.phase is ExpertPhase.EXPLORE:
            action = self._explore(obs)
            if action is not None:
                return action
            self.state.advance(ExpertPhase.INQUIRE)
        if self.state.phase is ExpertPhase.INQUIRE:
            question = self._next_question()
            if question is not None:
                self.state.asked.append(question)
                return AgentAction.ask(question)
            self.state.advance(ExpertPhase.EXECUTE)
        return self._execute(obs)

    # --- explore ---

    def _enough_seen(self, obs: Observation) -> bool:
        intent = self.belief.intent
        if intent.kind == "fetch":
            return bool(self.belief.fetch_matches())
        if intent.kind == "clear_clutter":
            source = self.layout.receptacle_by_name(intent.source)
            return source is not None and source.id in obs.visited
        return bool(self.belief.group_objects())

    def _explore(self, obs: Observation) -> AgentAction | None:
        here = self.layout.receptacle(obs.agent_at)
        for part in here.sub_parts:
            if part in self.state.opened:
                continue
            self.state.opened.add(part)
            if part not in obs.opened:
                return AgentAction.open(part)
        if self.early_stop and self._enough_seen(obs):
            return None
        unvisited = [r for r in self.layout.receptacles if r.id not in obs.visited]
        if not unvisited:
            return None
        unvisited.sort(key=lambda r: (self.layout.hop_distance(obs.agent_at, r.id), r.id))
        self.state.frontier = [r.id for r in unvisited]
        return AgentAction.nav(unvisited[0].name)

    # --- inquire ---

    def _next_question(self) -> str | None:
        kind = self.belief.intent.kind
        if kind == "fetch":
            return self._identification_question()
        if kind == "clear_clutter":
            question = self._clutter_question()
            if question is not None:
                return question
        return self._preference_question()

    def _identification_question(self) -> str | None:
        belief = self.belief
        candidates = belief.candidates()
        if len(candidates) <= 1:
            return None
        scene = belief.known_scene()
        key = belief.answer_key(scene)
        ctx = belief.ask_context()
        questions = enumerate_questions(scene.place_names(), [k.descriptor for k in belief.known.values()], self.vocab)
        best, best_split = None, 1
        for question in questions:
            if question.template not in _IDENTIFICATION_TEMPLATES or question.text() in self.state.asked:
                continue
            gq = ground(question, scene, ctx, belief.focus, self.vocab)
            if not gq.grounded:
                continue
            split = len({answer_under(h, gq, key).text for h in candidates})
            if split == len(candidates):
                return question.text()
            if split > best_split:
                best, best_split = question.text(), split
        return best

    def _clutter_question(self) -> str | None:
        belief = self.belief
        candidates = belief.candidates()
        for oid in belief.source_objects():
            if len({oid in h for h in candidates}) > 1:
                question = Question.of(Template.IS_CLUTTER, object_instance=belief.known[oid].descriptor).text()
                if question not in self.state.asked:
                    return question
        return None

    def _preference_question(self) -> str | None:
        for category in self.belief.categories_needing_preference():
            question = Question.of(
                Template.WHICH_PLACE, receptacle="receptacle", object_instance=self.vocab.plural(category)
            ).text()
            if question not in self.state.asked:
                return question
        return None

    # --- execute ---

    def _destination_for(self, oid: str) -> str | None:
        belief = self.belief
        intent = belief.intent
        if intent.kind == "fetch":
            return intent.destination
        return belief.preferences.get(belief._category(oid))

    def tasks(self) -> list[tuple[str, str]]:
        """(object id, destination place name) pairs, in object id order."""
        belief = self.belief
        intent = belief.intent
        if intent.kind == "fetch":
            target = belief.fetch_target()
            return [(target, intent.destination)] if target else []
        if intent.kind == "clear_clutter":
            pool = belief.clutter_set() or ()
        else:
            pool = belief.group_objects()
        out = []
        for oid in sorted(pool):
            destination = self._destination_for(oid)
            if destination is not None:
                out.append((oid, destination))
        return out

    def _go_and_open(self, obs: Observation, place_name: str) -> AgentAction | None:
        place = self.layout.place_by_name(place_name)
        if obs.agent_at != place.receptacle:
            return AgentAction.nav(self.layout.receptacle(place.receptacle).name)
        if place.compartment is not None and place.compartment not in obs.opened:
            return AgentAction.open(place.compartment)
        return None

    def _execute(self, obs: Observation) -> AgentAction:
        state = self.state
        if state.pending_close is not None:
            receptacle, compartment = state.pending_close
            state.pending_close = None
            if obs.agent_at == receptacle and compartment in obs.opened:
                return AgentAction.close(compartment)

        tasks = dict(self.tasks())
        if obs.holding is not None:
            destination = tasks.get(obs.holding) or self.belief.known_scene().place_name(self.belief.home[obs.holding])
            step = self._go_and_open(obs, destination)
            if step is not None:
                return step
            place = self.layout.place_by_name(destination)
            if place.compartment is not None:
                state.pending_close = (place.receptacle, place.compartment)
            return AgentAction.place(destination)

        known = self.belief.known
        remaining = [(oid, dest) for oid, dest in tasks.items() if known[oid].place != dest]
        if not remaining:
            return AgentAction.done()
        oid, _ = remaining[0]
        step = self._go_and_open(obs, known[oid].place)
        if step is not None:
            return step
        return AgentAction.pick(known[oid].descriptor)
