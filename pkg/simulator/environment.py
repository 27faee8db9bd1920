"""POMDP step engine: skills, questions, subgoal ledger, success and time limits.

Invalid actions never raise inside an episode; they are no-ops that cost a
step. Only a malformed action *encoding* (``parse_action``) raises, and that
is a harness error.
"""
import hashlib
import json
import logging
import re
from dataclasses import asdict, dataclass, field
from enum import Enum

from simulator.dialogue import AskContext, DialogueJudge, DialogueTurn, ExternalJudge, enumerate_questions
from simulator.episode import EpisodeSpec, TaskFamily, parse_descriptor
from simulator.errors import ActionParseError, EpisodeFinishedError
from simulator.reward import RewardBreakdown, StepEvent, step_reward
from simulator.vocabulary import Vocabulary, load_vocabulary
from simulator.world_model import Place, Scene, VisibilityState, mark_observed
from utils.config import RewardConfig

logger = logging.getLogger(__name__)


class ActionKind(str, Enum):
    NAV = "nav"
    PICK = "pick"
    PLACE = "place"
    OPEN = "open"
    CLOSE = "close"
    ASK = "ask"
    DONE = "done"


@dataclass(frozen=True)
class AgentAction:
    kind: ActionKind
    arg: str = ""

    def text(self) -> str:
        return f"{self.kind.value}({self.arg})"

    @classmethod
    def nav(cls, receptacle: str) -> "AgentAction":
        return cls(ActionKind.NAV, receptacle)

    @classmethod
    def pick(cls, descriptor: str) -> "AgentAction":
        return cls(ActionKind.PICK, descriptor)

    @classmethod
    def place(cls, place: str) -> "AgentAction":
        return cls(ActionKind.PLACE, place)

    @classmethod
    def open(cls, compartment: str) -> "AgentAction":
        return cls(ActionKind.OPEN, compartment)

    @classmethod
    def close(cls, compartment: str) -> "AgentAction":
        return cls(ActionKind.CLOSE, compartment)

    @classmethod
    def ask(cls, question: str) -> "AgentAction":
        return cls(ActionKind.ASK, question)

    @classmethod
    def done(cls) -> "AgentAction":
        return cls(ActionKind.DONE)


_ACTION_RE = re.compile(r"^\s*(\w+)\((.*)\)\s*$", re.DOTALL)


def parse_action(text: str) -> AgentAction:
    """Decode ``verb(argument)``; anything else is a malformed encoding."""
    m = _ACTION_RE.match(text)
    if m is None:
        raise ActionParseError(f"malformed action {text!r}")
    verb, arg = m.group(1).lower(), m.group(2).strip()
    try:
        kind = ActionKind(verb)
    except ValueError:
        raise ActionParseError(f"unknown action verb {verb!r}") from None
    if kind is ActionKind.DONE and arg:
        raise ActionParseError("done() takes no argument")
    if kind is not ActionKind.DONE and not arg:
        raise ActionParseError(f"{verb}() needs an argument")
    return AgentAction(kind, arg)


class Outcome(str, Enum):
    ONGOING = "ongoing"
    SUCCESS = "success"
    FAILURE_TIMEOUT = "failure_timeout"
    FAILURE_DONE = "failure_done"


# --- subgoals ------------------------------------------------------------------


@dataclass
class Subgoal:
    kind: str
    object_id: str
    receptacle: str
    compartment: str | None = None
    satisfied: bool = False

    @property
    def label(self) -> str:
        target = self.compartment if self.kind in ("open", "close") else self.receptacle
        if self.kind in ("find", "pick", "place"):
            return f"{self.kind}({self.object_id})"
        return f"{self.kind}({target})"


class SubgoalLedger:
    """Ordered subgoal chain per target object; each subgoal pays once."""

    def __init__(self, spec: EpisodeSpec):
        self.chains: list[list[Subgoal]] = []
        for target in spec.targets:
            rid, comp = target.receptacle, target.compartment
            chain = [
                Subgoal("find", target.object_id, rid, comp),
                Subgoal("pick", target.object_id, rid, comp),
                Subgoal("nav", target.object_id, rid, comp),
            ]
            if comp is not None:
                chain.append(Subgoal("open", target.object_id, rid, comp))
            chain.append(Subgoal("place", target.object_id, rid, comp))
            if comp is not None:
                chain.append(Subgoal("close", target.object_id, rid, comp))
            self.chains.append(chain)

    def __len__(self) -> int:
        return sum(len(c) for c in self.chains)

    @staticmethod
    def _holds(goal: Subgoal, env: "AskToActEnv") -> bool:
        if goal.kind == "find":
            return goal.object_id in env.visibility.seen_objects
        if goal.kind == "pick":
            return env.holding == goal.object_id
        if goal.kind == "nav":
            return env.agent_at == goal.receptacle and env.holding == goal.object_id
        if goal.kind == "open":
            return env.agent_at == goal.receptacle and goal.compartment in env.open_compartments
        if goal.kind == "place":
            return env.locations.get(goal.object_id) == Place(goal.receptacle, goal.compartment)
        return goal.compartment not in env.open_compartments

    def update(self, env: "AskToActEnv") -> list[Subgoal]:
        newly = []
        for chain in self.chains:
            for goal in chain:
                if goal.satisfied:
                    continue
                if not self._holds(goal, env):
                    break
                goal.satisfied = True
                newly.append(goal)
        return newly

    def satisfied(self) -> list[str]:
        return [g.label for chain in self.chains for g in chain if g.satisfied]


# --- observations ----------------------------------------------------------------


@dataclass(frozen=True)
class KnownObject:
    id: str
    descriptor: str
    place: str | None


@dataclass(frozen=True)
class Observation:
    t: int
    instruction: str
    agent_at: str
    agent_at_name: str
    holding: str | None
    local_view: tuple[str, ...]
    known_objects: tuple[KnownObject, ...]
    visited: tuple[str, ...]
    opened: tuple[str, ...]
    last_question: str | None
    last_answer: str | None
    last_answer_kind: str | None
    dialogue: tuple[tuple[str, str], ...]
    questions_asked: int
    budget: int
    steps_remaining: int

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return obs_digest(self)


def obs_digest(obs: Observation) -> str:
    canonical = json.dumps(obs.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class StepResult:
    obs: Observation
    reward: RewardBreakdown
    done: bool
    outcome: Outcome
    info: dict = field(default_factory=dict)


# --- environment -------------------------------------------------------------------


class AskToActEnv:
    """One episode at a time; reset() before every episode."""

    def __init__(self, reward_config: RewardConfig | None = None, external_judge: ExternalJudge | None = None,
                 vocab: Vocabulary | None = None):
        self.reward_config = reward_config or RewardConfig()
        self.external_judge = external_judge
        self.vocab = vocab or load_vocabulary()
        self.spec: EpisodeSpec | None = None

    # --- lifecycle ---

    def reset(self, spec: EpisodeSpec) -> Observation:
        self.spec = spec
        self.scene = spec.scene
        self.locations: dict[str, Place] = spec.scene.initial_locations()
        self.holding: str | None = None
        self.agent_at: str = spec.start_receptacle
        self.open_compartments: set[str] = set()
        self.visibility = mark_observed(self.scene, VisibilityState(), self.agent_at,
                                        locations=self.locations, open_compartments=())
        self.judge = DialogueJudge(spec, external=self.external_judge, vocab=self.vocab)
        self.ledger = SubgoalLedger(spec)
        # satisfied at reset, never rewarded
        self.ledger.update(self)
        self.t = 0
        self.questions_asked = 0
        self.last_turn: DialogueTurn | None = None
        self.outcome = Outcome.ONGOING
        return self.observe()

    @property
    def done(self) -> bool:
        return self.outcome is not Outcome.ONGOING

    # --- observation ---

    def _place_text(self, oid: str) -> str | None:
        place = self.locations.get(oid)
        return None if place is None else self.scene.place_name(place)

    def _visible_here(self) -> list[str]:
        rec = self.scene.receptacle(self.agent_at)
        visible = {Place(rec.id, None)} | {Place(rec.id, p) for p in rec.sub_parts if p in self.open_compartments}
        return [oid for oid, place in self.locations.items() if place in visible]

    def observe(self) -> Observation:
        turn = self.last_turn
        return Observation(
            t=self.t,
            instruction=self.spec.instruction,
            agent_at=self.agent_at,
            agent_at_name=self.scene.receptacle(self.agent_at).name,
            holding=self.holding,
            local_view=tuple(self._visible_here()),
            known_objects=tuple(
                KnownObject(oid, self.scene.object(oid).descriptor, self._place_text(oid))
                for oid in self.visibility.seen_order
            ),
            visited=tuple(r.id for r in self.scene.receptacles if r.id in self.visibility.visited_receptacles),
            opened=tuple(p.compartment for p in self.scene.compartments() if p.compartment in self.open_compartments),
            last_question=turn.text if turn else None,
            last_answer=turn.answer.text if turn else None,
            last_answer_kind=turn.answer.kind.value if turn else None,
            dialogue=tuple((t.text, t.answer.text) for t in self.judge.history),
            questions_asked=self.questions_asked,
            budget=self.spec.budget,
            steps_remaining=self.spec.max_steps - self.t,
        )

    # --- transitions ---

    def _nav(self, name: str) -> bool:
        rec = self.scene.receptacle_by_name(name)
        if rec is None:
            return False
        self.agent_at = rec.id
        self.visibility = mark_observed(self.scene, self.visibility, rec.id, locations=self.locations,
                                        open_compartments=self.open_compartments)
        return True

    def _pick(self, text: str) -> bool:
        if self.holding is not None:
            return False
        descriptor = parse_descriptor(text, self.vocab)
        if descriptor is None:
            return False
        here = set(self._visible_here())
        options = sorted(
            oid for oid in here
            if oid in self.visibility.seen_objects and descriptor.matches(self.scene.object(oid))
        )
        if not options:
            return False
        self.holding = options[0]
        del self.locations[options[0]]
        return True

    def _place(self, name: str) -> bool:
        place = self.scene.place_by_name(name)
        if self.holding is None or place is None or place.receptacle != self.agent_at:
            return False
        if place.compartment is not None and place.compartment not in self.open_compartments:
            return False
        self.locations[self.holding] = place
        self.holding = None
        return True

    def _open(self, name: str) -> bool:
        place = self.scene.place_by_name(name)
        if place is None or place.compartment is None or place.receptacle != self.agent_at:
            return False
        if place.compartment in self.open_compartments:
            return False
        self.open_compartments.add(place.compartment)
        self.visibility = mark_observed(self.scene, self.visibility, place.receptacle, place.compartment,
                                        locations=self.locations, open_compartments=self.open_compartments)
        return True

    def _close(self, name: str) -> bool:
        place = self.scene.place_by_name(name)
        if place is None or place.compartment is None or place.receptacle != self.agent_at:
            return False
        if place.compartment not in self.open_compartments:
            return False
        self.open_compartments.discard(place.compartment)
        return True

    def _ask(self, text: str) -> DialogueTurn:
        ctx = AskContext(
            locations=dict(self.locations),
            seen=self.visibility.seen_objects,
            holding=self.holding,
            agent_at=self.agent_at,
        )
        return self.judge.ask(text, ctx)

    def check_success(self) -> bool:
        spec = self.spec
        if any(self.locations.get(t.object_id) != t.place for t in spec.targets):
            return False
        if spec.family is TaskFamily.CLEAN_CLUTTER:
            source = Place(spec.source_receptacle, None)
            clutter = set(spec.clutter_set)
            kept = [oid for oid, p in spec.scene.initial_locations().items() if p == source and oid not in clutter]
            return all(self.locations.get(oid) == source for oid in kept)
        return True

    def step(self, action: AgentAction | str) -> StepResult:
        if self.spec is None:
            raise EpisodeFinishedError("step() before reset()")
        if self.done:
            raise EpisodeFinishedError(f"episode {self.spec.id} already ended with {self.outcome.value}")
        if isinstance(action, str):
            action = parse_action(action)

        self.t += 1
        asked = False
        turn: DialogueTurn | None = None
        declared_done = False
        if action.kind is ActionKind.NAV:
            valid = self._nav(action.arg)
        elif action.kind is ActionKind.PICK:
            valid = self._pick(action.arg)
        elif action.kind is ActionKind.PLACE:
            valid = self._place(action.arg)
        elif action.kind is ActionKind.OPEN:
            valid = self._open(action.arg)
        elif action.kind is ActionKind.CLOSE:
            valid = self._close(action.arg)
        elif action.kind is ActionKind.ASK:
            asked = True
            self.questions_asked += 1
            turn = self._ask(action.arg)
            valid = turn.parsed
        else:
            valid = True
            declared_done = True
        if asked:
            self.last_turn = turn

        newly = self.ledger.update(self)
        success = self.check_success()
        if success:
            self.outcome = Outcome.SUCCESS
        elif declared_done:
            self.outcome = Outcome.FAILURE_DONE
        elif self.t >= self.spec.max_steps:
            self.outcome = Outcome.FAILURE_TIMEOUT

        event = StepEvent(success=success, subgoals=len(newly), asked=asked, useful=bool(turn and turn.useful))
        reward = step_reward(event, self.reward_config, self.questions_asked, self.spec.budget, self.spec.K)
        info = {
            "valid": valid,
            "subgoals": [g.label for g in newly],
            "asked": asked,
            "useful": turn.useful if turn else None,
            "answer": turn.answer.text if turn else None,
            "answer_source": turn.source if turn else None,
        }
        if not valid:
            logger.debug("t=%d no-op %s", self.t, action.text())
        return StepResult(obs=self.observe(), reward=reward, done=self.done, outcome=self.outcome, info=info)

    # --- action inventory ---

    def valid_actions(self) -> list[AgentAction]:
        return observable_actions(self.scene, self.observe(), self.vocab)


def observable_actions(layout: Scene, obs: Observation, vocab: Vocabulary | None = None) -> list[AgentAction]:
    """Every action that is not a no-op from the observed state, questions included, plus done().

    Needs only the receptacle layout and the observation, so agents can call it too.
    """
    vocab = vocab or load_vocabulary()
    actions = [AgentAction.nav(r.name) for r in layout.receptacles if r.id != obs.agent_at]
    rec = layout.receptacle(obs.agent_at)
    descriptors = {k.id: k.descriptor for k in obs.known_objects}
    if obs.holding is None:
        actions += [AgentAction.pick(descriptors[oid]) for oid in obs.local_view]
    else:
        actions.append(AgentAction.place(rec.name))
        actions += [AgentAction.place(p) for p in rec.sub_parts if p in obs.opened]
    actions += [AgentAction.open(p) for p in rec.sub_parts if p not in obs.opened]
    actions += [AgentAction.close(p) for p in rec.sub_parts if p in obs.opened]
    questions = enumerate_questions(layout.place_names(), [k.descriptor for k in obs.known_objects], vocab)
    actions += [AgentAction.ask(q.text()) for q in questions]
    actions.append(AgentAction.done())
    return actions
