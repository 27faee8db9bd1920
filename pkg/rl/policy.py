"""Actor-critic MLP in numpy with hand-written backpropagation.

Two tanh layers feed a softmax actor head over the flat action inventory and
a scalar critic head. Parameters live in float32 by default; float64 is used
for gradient checks.
"""
import json
import logging
import os
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

CHECKPOINT_SCHEMA_VERSION = 1
MASKED_LOGIT = -1e9
PARAM_NAMES = ("w1", "b1", "w2", "b2", "w_pi", "b_pi", "w_v", "b_v")


@dataclass
class ForwardCache:
    x: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    logits: np.ndarray
    values: np.ndarray


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def apply_mask(logits: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    if mask is None:
        return logits
    return np.where(mask, logits, np.asarray(MASKED_LOGIT, dtype=logits.dtype))


class PolicyNet:
    """
    Two-layer perceptron trunk with actor and critic heads.
    """

    def __init__(self, obs_dim: int, num_actions: int, hidden_size: int = 128, seed: int = 0,
                 dtype: np.dtype = np.float32):
        self.obs_dim = obs_dim
        self.num_actions = num_actions
        self.hidden_size = hidden_size
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)

        def dense(fan_in: int, fan_out: int, gain: float = 1.0) -> np.ndarray:
            bound = gain * np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(self.dtype)

        self.params: dict[str, np.ndarray] = {
            "w1": dense(obs_dim, hidden_size),
            "b1": np.zeros(hidden_size, dtype=self.dtype),
            "w2": dense(hidden_size, hidden_size),
            "b2": np.zeros(hidden_size, dtype=self.dtype),
            # small actor init keeps the initial policy near uniform
            "w_pi": dense(hidden_size, num_actions, gain=0.01),
            "b_pi": np.zeros(num_actions, dtype=self.dtype),
            "w_v": dense(hidden_size, 1),
            "b_v": np.zeros(1, dtype=self.dtype),
        }

    # --- forward ---

    def forward(self, x: np.ndarray) -> ForwardCache:
        p = self.params
        x = np.atleast_2d(np.asarray(x, dtype=self.dtype))
        h1 = np.tanh(x @ p["w1"] + p["b1"])
        h2 = np.tanh(h1 @ p["w2"] + p["b2"])
        logits = h2 @ p["w_pi"] + p["b_pi"]
        values = (h2 @ p["w_v"] + p["b_v"])[:, 0]
        return ForwardCache(x, h1, h2, logits, values)

    def distribution(self, x: np.ndarray, mask: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Action probabilities and state values for a batch of feature vectors."""
        cache = self.forward(x)
        logp = log_softmax(apply_mask(cache.logits.astype(np.float64), mask))
        return np.exp(logp), cache.values.astype(np.float64)

    def act(self, x: np.ndarray, rng: np.random.Generator, mask: np.ndarray | None = None,
            greedy: bool = False) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Sample (or argmax) one action per row; returns actions, log-probs and values."""
        cache = self.forward(x)
        logp = log_softmax(apply_mask(cache.logits.astype(np.float64), mask))
        if greedy:
            actions = logp.argmax(axis=-1)
        else:
            # inverse-CDF sampling keeps the draw count at one uniform per row
            cdf = np.cumsum(np.exp(logp), axis=-1)
            u = rng.random(len(cdf))[:, None] * cdf[:, -1:]
            actions = np.minimum((cdf < u).sum(axis=-1), self.num_actions - 1)
        chosen = logp[np.arange(len(actions)), actions]
        return actions.astype(np.int64), chosen, cache.values.astype(np.float64)

    # --- backward ---

    def backward(self, cache: ForwardCache, d_logits: np.ndarray, d_values: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss given its gradients w.r.t. logits and values."""
        p = self.params
        d_logits = d_logits.astype(self.dtype)
        d_values = d_values.astype(self.dtype)[:, None]
        grads = {
            "w_pi": cache.h2.T @ d_logits,
            "b_pi": d_logits.sum(axis=0),
            "w_v": cache.h2.T @ d_values,
            "b_v": d_values.sum(axis=0),
        }
        d_h2 = d_logits @ p["w_pi"].T + d_values @ p["w_v"].T
        d_z2 = d_h2 * (1.0 - cache.h2 ** 2)
        grads["w2"] = cache.h1.T @ d_z2
        grads["b2"] = d_z2.sum(axis=0)
        d_h1 = d_z2 @ p["w2"].T
        d_z1 = d_h1 * (1.0 - cache.h1 ** 2)
        grads["w1"] = cache.x.T @ d_z1
        grads["b1"] = d_z1.sum(axis=0)
        return grads

    # --- checkpoints ---

    def to_dict(self) -> dict:
        return {
            "schema_version": CHECKPOINT_SCHEMA_VERSION,
            "obs_dim": self.obs_dim,
            "num_actions": self.num_actions,
            "hidden_size": self.hidden_size,
            "dtype": self.dtype.name,
            "params": {name: {"shape": list(self.params[name].shape), "data": self.params[name].ravel().tolist()}
                       for name in PARAM_NAMES},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolicyNet":
        if data.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
            raise ValueError(f"unsupported checkpoint schema {data.get('schema_version')}")
        net = cls(data["obs_dim"], data["num_actions"], data["hidden_size"], dtype=np.dtype(data["dtype"]))
        for name in PARAM_NAMES:
            entry = data["params"][name]
            net.params[name] = np.asarray(entry["data"], dtype=net.dtype).reshape(entry["shape"])
        return net

    def save(self, path: str, extra: dict | None = None) -> None:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        payload = self.to_dict()
        if extra:
            payload["extra"] = extra
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f)
        logger.debug("Saved checkpoint to %s", path)

    @classmethod
    def load(cls, path: str) -> "PolicyNet":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))
