import numpy as np
import pytest

from rl.policy import PolicyNet, log_softmax
from rl.ppo import Adam, clip_grad_norm, compute_gae, length_normalized_logprob, ppo_loss, ppo_update
from rl.trainer import ppo_loop
from utils.config import TrainConfig


def _reference_gae(rewards, values, dones, last_values, gamma, tau):
    steps, envs = rewards.shape
    adv = np.zeros_like(rewards)
    for n in range(envs):
        for t in range(steps):
            total, coef = 0.0, 1.0
            for k in range(t, steps):
                next_v = last_values[n] if k == steps - 1 else values[k + 1, n]
                delta = rewards[k, n] + gamma * next_v * (1.0 - dones[k, n]) - values[k, n]
                total += coef * delta
                if dones[k, n]:
                    break
                coef *= gamma * tau
            adv[t, n] = total
    return adv


def test_gae_matches_direct_sum():
    rng = np.random.default_rng(0)
    rewards = rng.normal(size=(7, 3))
    values = rng.normal(size=(7, 3))
    dones = rng.random((7, 3)) < 0.3
    last = rng.normal(size=3)
    adv, returns = compute_gae(rewards, values, dones, last, gamma=0.9, tau=0.8)
    expected = _reference_gae(rewards, values, dones.astype(float), last, 0.9, 0.8)
    np.testing.assert_allclose(adv, expected, atol=1e-10)
    np.testing.assert_allclose(returns, expected + values, atol=1e-10)


def test_gae_accepts_a_single_env():
    adv, returns = compute_gae(np.array([1.0, 0.0]), np.array([0.0, 0.0]), np.array([False, True]), 5.0,
                               gamma=0.5, tau=1.0)
    assert adv.shape == (2, 1)
    np.testing.assert_allclose(adv[:, 0], [1.0, 0.0])


def test_gae_with_tau_zero_is_one_step_td():
    rewards = np.array([[1.0], [2.0]])
    values = np.array([[0.5], [0.25]])
    adv, _ = compute_gae(rewards, values, np.zeros((2, 1), dtype=bool), np.array([1.0]), gamma=0.9, tau=0.0)
    np.testing.assert_allclose(adv[:, 0], [1.0 + 0.9 * 0.25 - 0.5, 2.0 + 0.9 * 1.0 - 0.25])


def test_length_normalized_logprob():
    assert length_normalized_logprob([-1.0, -2.0, -3.0]) == pytest.approx(-2.0)
    with pytest.raises(ValueError):
        length_normalized_logprob([])


def test_clip_grad_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    clipped, norm = clip_grad_norm(grads, 1.0)
    assert norm == pytest.approx(5.0)
    assert clipped["a"][0] == pytest.approx(0.6) and clipped["b"][0] == pytest.approx(0.8)
    same, _ = clip_grad_norm(grads, 10.0)
    assert same["a"][0] == 3.0


@pytest.mark.parametrize("entropy_coef", [0.0, 0.05])
def test_ppo_gradients_match_finite_differences(entropy_coef):
    rng = np.random.default_rng(1)
    policy = PolicyNet(5, 4, hidden_size=6, seed=3, dtype=np.float64)
    # a larger actor head so the policy is far from uniform
    policy.params["w_pi"] *= 100.0
    obs = rng.random((8, 5))
    actions = rng.integers(0, 4, size=8)
    logp = log_softmax(policy.forward(obs).logits)[np.arange(8), actions]
    old_logprobs = logp + rng.normal(scale=0.02, size=8)
    advantages = rng.normal(size=8)
    returns = rng.normal(size=8)
    cfg = TrainConfig(entropy_coef=entropy_coef, value_coef=0.5, ppo_clip=0.2)

    _, cache, d_logits, d_values = ppo_loss(policy, obs, actions, old_logprobs, advantages, returns, cfg)
    grads = policy.backward(cache, d_logits, d_values)

    eps = 1e-6
    for name, param in policy.params.items():
        numeric = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            saved = param[idx]
            param[idx] = saved + eps
            up = ppo_loss(policy, obs, actions, old_logprobs, advantages, returns, cfg)[0].loss
            param[idx] = saved - eps
            down = ppo_loss(policy, obs, actions, old_logprobs, advantages, returns, cfg)[0].loss
            param[idx] = saved
            numeric[idx] = (up - down) / (2 * eps)
        np.testing.assert_allclose(grads[name], numeric, rtol=1e-4, atol=1e-8, err_msg=name)


def test_bandit_probability_rises_monotonically():
    policy = PolicyNet(3, 2, hidden_size=8, seed=0, dtype=np.float64)
    cfg = TrainConfig(lr=2e-3, ppo_epochs=1, minibatches=1, entropy_coef=0.0)
    obs = np.tile(np.array([1.0, 0.5, 0.0]), (8, 1))
    actions = np.array([0, 1] * 4)
    advantages = np.where(actions == 0, 1.0, -1.0)
    rng = np.random.default_rng(0)

    history = []
    for _ in range(300):
        probs, values = policy.distribution(obs)
        history.append(probs[0, 0])
        old_logprobs = np.log(probs[np.arange(8), actions])
        ppo_update(policy, Adam(policy.params, cfg.lr), obs, actions, old_logprobs, advantages, values, cfg, rng)
    history.append(policy.distribution(obs[:1])[0][0, 0])

    assert all(later >= earlier - 1e-6 for earlier, later in zip(history, history[1:]))
    assert history[-1] > 0.75


class CorridorEnv:
    """Five cells in a row; reaching the rightmost pays 1 and restarts at the leftmost."""

    length = 5
    max_steps = 20

    def __init__(self, num_envs: int):
        self.num_envs = num_envs
        self.pos = np.zeros(num_envs, dtype=int)
        self.t = np.zeros(num_envs, dtype=int)

    def _obs(self) -> np.ndarray:
        obs = np.zeros((self.num_envs, self.length), dtype=np.float32)
        obs[np.arange(self.num_envs), self.pos] = 1.0
        return obs

    def reset(self):
        self.pos[:] = 0
        self.t[:] = 0
        return self._obs(), None

    def step(self, actions):
        self.pos = np.clip(self.pos + np.where(actions == 1, 1, -1), 0, self.length - 1)
        self.t += 1
        rewards = (self.pos == self.length - 1).astype(float)
        dones = (rewards > 0) | (self.t >= self.max_steps)
        self.pos[dones] = 0
        self.t[dones] = 0
        return self._obs(), rewards, dones, None


@pytest.mark.slow
def test_ppo_learns_the_corridor():
    gamma = 0.9
    cfg = TrainConfig(gamma=gamma, gae_tau=0.95, lr=3e-3, ppo_epochs=4, minibatches=2, rollout_length=16,
                      num_envs=4, entropy_coef=0.0, hidden_size=16, normalize_advantages=True,
                      max_grad_norm=0.5)
    policy = PolicyNet(CorridorEnv.length, 2, cfg.hidden_size, seed=0)
    rows = ppo_loop(CorridorEnv(cfg.num_envs), policy, cfg, updates=150, rng=np.random.default_rng(0))
    assert len(rows) == 150

    env = CorridorEnv(1)
    obs, _ = env.reset()
    discounted = 0.0
    for t in range(CorridorEnv.max_steps):
        action, _, _ = policy.act(obs, np.random.default_rng(0), greedy=True)
        obs, reward, done, _ = env.step(action)
        discounted += gamma ** t * reward[0]
        if done[0]:
            break
    assert discounted == pytest.approx(gamma ** 3, rel=0.01)
