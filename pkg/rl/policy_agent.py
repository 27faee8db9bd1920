import numpy as np

from agents.base_agent import AgentView, BaseAgent
from rl.features import Featurizer
from rl.policy import PolicyNet
from simulator.environment import AgentAction, Observation
from utils.config import SceneConfig


class PolicyAgent(BaseAgent):
    """
    Runs a trained PolicyNet through the featurizer. Greedy by default so that
    evaluation is deterministic; sampling draws from a per-episode seeded RNG.
    """
    name = "policy"

    def __init__(self, policy: PolicyNet, scene_config: SceneConfig | None = None, greedy: bool = True,
                 mask_invalid: bool = False, seed: int = 0):
        self.policy = policy
        self.featurizer = Featurizer(scene_config)
        self.greedy = greedy
        self.mask_invalid = mask_invalid
        self.seed = seed
        if self.featurizer.dim != policy.obs_dim or self.featurizer.num_actions != policy.num_actions:
            raise ValueError(
                f"checkpoint expects {policy.obs_dim} features / {policy.num_actions} actions, "
                f"scene config gives {self.featurizer.dim} / {self.featurizer.num_actions}"
            )

    def reset(self, view: AgentView) -> None:
        super().reset(view)
        self.featurizer.reset(view)
        self.rng = np.random.default_rng([self.seed, view.seed])

    def act(self, obs: Observation) -> AgentAction:
        features = self.featurizer.encode(obs)[None, :]
        mask = self.featurizer.valid_mask(obs)[None, :] if self.mask_invalid else None
        actions, _, _ = self.policy.act(features, self.rng, mask, greedy=self.greedy)
        return self.featurizer.decode(int(actions[0]), obs)
