from abc import ABC, abstractmethod
from dataclasses import dataclass

from simulator.environment import AgentAction, Observation
from simulator.episode import EpisodeSpec
from simulator.world_model import Scene


@dataclass(frozen=True)
class AgentView:
    """What a policy may know about an episode before its first observation.

    The layout carries receptacles, compartments and the navigation graph but
    no objects; objects are only learned through observations.
    """
    episode_id: str
    instruction: str
    layout: Scene
    budget: int
    max_steps: int
    seed: int = 0

    @classmethod
    def from_spec(cls, spec: EpisodeSpec) -> "AgentView":
        scene = spec.scene
        layout = Scene(
            id=scene.id,
            rooms=scene.rooms,
            receptacles=scene.receptacles,
            objects=(),
            nav_edges=scene.nav_edges,
        )
        return cls(spec.id, spec.instruction, layout, spec.budget, spec.max_steps, spec.seed)


class BaseAgent(ABC):
    """
    A base class for scripted and learned policies acting in the simulator.
    """
    name = "agent"

    def reset(self, view: AgentView) -> None:
        """Called once before every episode."""
        self.view = view

    @abstractmethod
    def act(self, obs: Observation) -> AgentAction:
        """Choose the next action from the latest observation."""
