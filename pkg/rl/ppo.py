"""PPO with generalized advantage estimation, Adam and global gradient-norm clipping."""
import logging
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from rl.policy import ForwardCache, PolicyNet, apply_mask, log_softmax
from simulator.errors import TrainingDivergedError
from utils.config import TrainConfig

logger = logging.getLogger(__name__)


def compute_gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray, last_values: np.ndarray,
                gamma: float, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and returns for (T, N) arrays; ``dones[t]`` marks an episode ending at step t.

    Accumulates in float64. ``last_values`` bootstraps the state after the final step.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    if rewards.ndim == 1:
        rewards, values, dones = rewards[:, None], values[:, None], dones[:, None]
    last_values = np.atleast_1d(np.asarray(last_values, dtype=np.float64))
    steps = rewards.shape[0]
    advantages = np.zeros_like(rewards)
    gae = np.zeros(rewards.shape[1])
    for t in reversed(range(steps)):
        next_values = last_values if t == steps - 1 else values[t + 1]
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_values * nonterminal - values[t]
        gae = delta + gamma * tau * nonterminal * gae
        advantages[t] = gae
    return advantages, advantages + values


def length_normalized_logprob(token_logprobs: Sequence[float]) -> float:
    """Summed token log-probabilities of a multi-token action divided by its token count."""
    if len(token_logprobs) == 0:
        raise ValueError("an action has at least one token")
    return float(np.sum(np.asarray(token_logprobs, dtype=np.float64)) / len(token_logprobs))


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-5):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, grad in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * grad * grad
            m_hat = self.m[name] / (1 - self.beta1 ** self.t)
            v_hat = self.v[name] / (1 - self.beta2 ** self.t)
            params[name] -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(params[name].dtype)


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    norm = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


@dataclass
class LossStats:
    loss: float = 0.0
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    approx_kl: float = 0.0
    clip_fraction: float = 0.0
    grad_norm: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def ppo_loss(
    policy: PolicyNet,
    obs: np.ndarray,
    actions: np.ndarray,
    old_logprobs: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
    cfg: TrainConfig,
    masks: np.ndarray | None = None,
) -> tuple[LossStats, ForwardCache, np.ndarray, np.ndarray]:
    """Clipped surrogate + value MSE - entropy bonus, with its gradients w.r.t. logits and values."""
    cache = policy.forward(obs)
    batch = len(actions)
    logits = apply_mask(cache.logits.astype(np.float64), masks)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    rows = np.arange(batch)
    logp = logp_all[rows, actions]
    ratio = np.exp(logp - old_logprobs)
    clipped = np.clip(ratio, 1.0 - cfg.ppo_clip, 1.0 + cfg.ppo_clip)
    surr1 = ratio * advantages
    surr2 = clipped * advantages
    policy_loss = -float(np.mean(np.minimum(surr1, surr2)))

    values = cache.values.astype(np.float64)
    value_loss = float(np.mean((values - returns) ** 2))
    plogp = np.where(probs > 0, probs * logp_all, 0.0)
    entropy_rows = -plogp.sum(axis=-1)
    entropy = float(np.mean(entropy_rows))
    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy

    # d(-min(surr1, surr2))/d logp_a is -A * ratio wherever the unclipped term is the active one
    active = (surr1 <= surr2).astype(np.float64)
    d_logp = -(advantages * ratio * active) / batch
    onehot = np.zeros_like(probs)
    onehot[rows, actions] = 1.0
    d_logits = d_logp[:, None] * (onehot - probs)
    d_entropy = -probs * (np.where(probs > 0, logp_all, 0.0) + entropy_rows[:, None])
    d_logits -= cfg.entropy_coef * d_entropy / batch
    d_values = cfg.value_coef * 2.0 * (values - returns) / batch

    stats = LossStats(
        loss=loss,
        policy_loss=policy_loss,
        value_loss=value_loss,
        entropy=entropy,
        approx_kl=float(np.mean(old_logprobs - logp)),
        clip_fraction=float(np.mean(np.abs(ratio - 1.0) > cfg.ppo_clip)),
    )
    return stats, cache, d_logits, d_values


def ppo_update(
    policy: PolicyNet,
    optimizer: Adam,
    obs: np.ndarray,
    actions: np.ndarray,
    old_logprobs: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
    masks: np.ndarray | None = None,
) -> LossStats:
    """``ppo_epochs`` passes over the flattened batch in ``minibatches`` shuffled chunks."""
    advantages = np.asarray(advantages, dtype=np.float64)
    if cfg.normalize_advantages:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    size = len(actions)
    history: list[LossStats] = []
    for _ in range(cfg.ppo_epochs):
        order = rng.permutation(size)
        for chunk in np.array_split(order, cfg.minibatches):
            if len(chunk) == 0:
                continue
            stats, cache, d_logits, d_values = ppo_loss(
                policy, obs[chunk], actions[chunk], old_logprobs[chunk], advantages[chunk], returns[chunk], cfg,
                None if masks is None else masks[chunk],
            )
            if not np.isfinite(stats.loss):
                raise TrainingDivergedError(f"non-finite PPO loss: {stats.to_dict()}")
            grads = policy.backward(cache, d_logits, d_values)
            grads, stats.grad_norm = clip_grad_norm(grads, cfg.max_grad_norm)
            if not np.isfinite(stats.grad_norm):
                raise TrainingDivergedError(f"non-finite gradient norm: {stats.to_dict()}")
            optimizer.step(policy.params, grads)
            history.append(stats)
    return LossStats(**{
        field: float(np.mean([getattr(s, field) for s in history])) for field in LossStats.__dataclass_fields__
    })
