"""Control policies: the expert without its questions, and uniform random."""
import logging

import numpy as np

from agents.base_agent import AgentView, BaseAgent
from agents.expert_agent import ExpertAgent, ExpertPhase
from simulator.environment import AgentAction, Observation, observable_actions
from simulator.vocabulary import Vocabulary, load_vocabulary

logger = logging.getLogger(__name__)


class GreedyNoAskAgent(ExpertAgent):
    """The expert with its inquire phase removed: it commits to the lowest-id consistent candidate."""
    name = "greedy_noask"

    def act(self, obs: Observation) -> AgentAction:
        self.belief.update(obs)
        if self.state.phase is ExpertPhase.EXPLORE:
            action = self._explore(obs)
            if action is not None:
                return action
            self.state.advance(ExpertPhase.EXECUTE)
        return self._execute(obs)

    def tasks(self) -> list[tuple[str, str]]:
        belief = self.belief
        intent = belief.intent
        if intent.kind == "fetch":
            matches = belief.fetch_matches()
            return [(matches[0], intent.destination)] if matches else []
        if intent.kind == "clear_clutter":
            # without asking, nothing on the source is known to be clutter
            return []
        destination = self.layout.receptacle_by_name(intent.destination)
        if destination is None:
            return []
        place = destination.sub_parts[0] if destination.sub_parts else destination.name
        return [(oid, belief.preferences.get(belief._category(oid), place)) for oid in belief.group_objects()]


class RandomAgent(BaseAgent):
    """Uniform over every action that is not a no-op from the observed state."""
    name = "random"

    def __init__(self, seed: int = 0, vocab: Vocabulary | None = None):
        self.seed = seed
        self.vocab = vocab or load_vocabulary()

    def reset(self, view: AgentView) -> None:
        super().reset(view)
        self.rng = np.random.default_rng([self.seed, view.seed])

    def act(self, obs: Observation) -> AgentAction:
        actions = observable_actions(self.view.layout, obs, self.vocab)
        return actions[int(self.rng.integers(len(actions)))]
