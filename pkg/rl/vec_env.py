"""Synchronous vector of simulator instances and rollout collection.

Each slot owns one environment and one featurizer; finished episodes are
replaced immediately by the next sampled episode, so a rollout always holds
exactly ``rollout_length * num_envs`` transitions.
"""
import logging
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from agents.base_agent import AgentView
from rl.features import Featurizer
from rl.policy import PolicyNet
from simulator.environment import AskToActEnv, Observation
from simulator.episode import EpisodeSpec
from simulator.vocabulary import Vocabulary, load_vocabulary
from utils.config import RewardConfig, SceneConfig, TrainConfig

logger = logging.getLogger(__name__)


class VectorEnv(Protocol):
    num_envs: int

    def reset(self) -> tuple[np.ndarray, np.ndarray | None]: ...

    def step(self, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray | None]: ...


@dataclass
class FinishedEpisode:
    episode_id: str
    family: str
    success: bool
    episode_return: float
    q_relevant: int
    q_irrelevant: int
    K: int
    steps: int


@dataclass
class _Running:
    spec: EpisodeSpec
    obs: Observation
    ret: float = 0.0
    q_relevant: int = 0
    q_irrelevant: int = 0


class AskToActVecEnv:
    """``num_envs`` environments stepped in lockstep, with per-slot auto-reset."""

    def __init__(
        self,
        episodes: Sequence[EpisodeSpec],
        num_envs: int,
        reward_config: RewardConfig | None = None,
        scene_config: SceneConfig | None = None,
        seed: int = 0,
        mask_invalid: bool = False,
        vocab: Vocabulary | None = None,
    ):
        if not episodes:
            raise ValueError("no episodes to sample from")
        self.episodes = list(episodes)
        self.num_envs = num_envs
        self.mask_invalid = mask_invalid
        self.vocab = vocab or load_vocabulary()
        self.rng = np.random.default_rng([seed, 1])
        self.envs = [AskToActEnv(reward_config, vocab=self.vocab) for _ in range(num_envs)]
        self.featurizers = [Featurizer(scene_config, self.vocab) for _ in range(num_envs)]
        self.running: list[_Running | None] = [None] * num_envs
        self.finished: list[FinishedEpisode] = []

    @property
    def obs_dim(self) -> int:
        return self.featurizers[0].dim

    @property
    def num_actions(self) -> int:
        return self.featurizers[0].num_actions

    def _start(self, i: int) -> None:
        spec = self.episodes[int(self.rng.integers(len(self.episodes)))]
        obs = self.envs[i].reset(spec)
        self.featurizers[i].reset(AgentView.from_spec(spec))
        self.running[i] = _Running(spec, obs)

    def _encode(self) -> tuple[np.ndarray, np.ndarray | None]:
        features = np.stack([f.encode(r.obs) for f, r in zip(self.featurizers, self.running)])
        if not self.mask_invalid:
            return features, None
        return features, np.stack([f.valid_mask(r.obs) for f, r in zip(self.featurizers, self.running)])

    def reset(self) -> tuple[np.ndarray, np.ndarray | None]:
        for i in range(self.num_envs):
            self._start(i)
        return self._encode()

    def step(self, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray | None]:
        rewards = np.zeros(self.num_envs, dtype=np.float64)
        dones = np.zeros(self.num_envs, dtype=bool)
        for i, index in enumerate(np.asarray(actions).tolist()):
            running = self.running[i]
            action = self.featurizers[i].decode(int(index), running.obs)
            result = self.envs[i].step(action)
            running.obs = result.obs
            running.ret += result.reward.total
            if result.info["asked"]:
                if result.info["useful"]:
                    running.q_relevant += 1
                else:
                    running.q_irrelevant += 1
            rewards[i] = result.reward.total
            if result.done:
                dones[i] = True
                self.finished.append(FinishedEpisode(
                    episode_id=running.spec.id,
                    family=running.spec.family.value,
                    success=result.outcome.value == "success",
                    episode_return=running.ret,
                    q_relevant=running.q_relevant,
                    q_irrelevant=running.q_irrelevant,
                    K=running.spec.K,
                    steps=result.obs.t,
                ))
                self._start(i)
        features, masks = self._encode()
        return features, rewards, dones, masks

    def drain_finished(self) -> list[FinishedEpisode]:
        out, self.finished = self.finished, []
        return out


@dataclass
class RolloutBatch:
    obs: np.ndarray
    actions: np.ndarray
    logprobs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    last_values: np.ndarray
    masks: np.ndarray | None = None

    @property
    def size(self) -> int:
        return int(self.actions.size)

    def flat(self, name: str) -> np.ndarray | None:
        value = getattr(self, name)
        if value is None:
            return None
        steps, envs = self.actions.shape
        return value.reshape(steps * envs, *value.shape[2:])


class RolloutCollector:
    """Keeps the current observation of a vector env between rollouts."""

    def __init__(self, vec_env: VectorEnv):
        self.vec_env = vec_env
        self.obs, self.masks = vec_env.reset()

    def collect(self, policy: PolicyNet, cfg: TrainConfig, rng: np.random.Generator) -> RolloutBatch:
        steps, envs = cfg.rollout_length, self.vec_env.num_envs
        obs_buf = np.zeros((steps, envs, self.obs.shape[1]), dtype=np.float32)
        actions = np.zeros((steps, envs), dtype=np.int64)
        logprobs = np.zeros((steps, envs), dtype=np.float64)
        values = np.zeros((steps, envs), dtype=np.float64)
        rewards = np.zeros((steps, envs), dtype=np.float64)
        dones = np.zeros((steps, envs), dtype=bool)
        masks = None if self.masks is None else np.zeros((steps, *self.masks.shape), dtype=bool)
        for t in range(steps):
            obs_buf[t] = self.obs
            if masks is not None:
                masks[t] = self.masks
            a, logp, v = policy.act(self.obs, rng, self.masks)
            actions[t], logprobs[t], values[t] = a, logp, v
            self.obs, rewards[t], dones[t], self.masks = self.vec_env.step(a)
        _, last_values = policy.distribution(self.obs, self.masks)
        return RolloutBatch(obs_buf, actions, logprobs, values, rewards, dones, last_values, masks)


def collect_rollouts(collector: RolloutCollector, policy: PolicyNet, cfg: TrainConfig,
                     rng: np.random.Generator) -> RolloutBatch:
    return collector.collect(policy, cfg, rng)
