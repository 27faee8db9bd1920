"""Single-process synchronous PPO training: collect, then update, then probe.

Artifacts written to the output directory::

    checkpoints/update_00025.json   periodic policy dumps (JSON tensors)
    final.json                      last policy
    curves.csv                      one row per update: losses, rollout stats, probe metrics
    manifest.json                   RunManifest with config and dataset hashes
"""
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from evaluation.harness import evaluate
from rl.policy import PolicyNet
from rl.policy_agent import PolicyAgent
from rl.ppo import Adam, compute_gae, ppo_update
from rl.vec_env import AskToActVecEnv, RolloutCollector, VectorEnv
from simulator.episode import EpisodeSpec
from simulator.errors import TrainingDivergedError
from utils.config import RunConfig, TrainConfig
from utils.io_utils import RunManifest

logger = logging.getLogger(__name__)


def num_updates(cfg: TrainConfig) -> int:
    return max(1, cfg.total_steps // (cfg.rollout_length * cfg.num_envs))


def ppo_loop(
    vec_env: VectorEnv,
    policy: PolicyNet,
    cfg: TrainConfig,
    updates: int,
    rng: np.random.Generator,
    on_update: Callable[[int, PolicyNet], dict | None] | None = None,
    progress: bool = False,
) -> list[dict]:
    """Strictly alternating collect/update for ``updates`` rounds; returns one metrics row per update."""
    optimizer = Adam(policy.params, cfg.lr)
    collector = RolloutCollector(vec_env)
    rows = []
    for update in tqdm(range(1, updates + 1), desc="ppo updates", disable=not progress):
        batch = collector.collect(policy, cfg, rng)
        advantages, returns = compute_gae(batch.rewards, batch.values, batch.dones, batch.last_values,
                                          cfg.gamma, cfg.gae_tau)
        stats = ppo_update(
            policy, optimizer,
            batch.flat("obs"), batch.flat("actions"), batch.flat("logprobs"),
            advantages.reshape(-1), returns.reshape(-1), cfg, rng, batch.flat("masks"),
        )
        if not all(np.all(np.isfinite(p)) for p in policy.params.values()):
            raise TrainingDivergedError(f"non-finite parameters after update {update}")
        row = {"update": update, "env_steps": update * batch.size, **stats.to_dict(),
               "mean_step_reward": float(batch.rewards.mean())}
        if on_update is not None:
            row.update(on_update(update, policy) or {})
        rows.append(row)
    return rows


@dataclass
class TrainResult:
    policy: PolicyNet
    final_checkpoint: str
    checkpoints: list[str] = field(default_factory=list)
    curves: pd.DataFrame | None = None


def train(
    config: RunConfig,
    train_episodes: Sequence[EpisodeSpec],
    probe_episodes: Sequence[EpisodeSpec],
    out_dir: str,
    dataset_hash: str | None = None,
    progress: bool = False,
) -> TrainResult:
    """Train a policy on ``train_episodes``, probing SR/ARS/QR on ``probe_episodes`` every few updates."""
    cfg = config.train
    os.makedirs(out_dir, exist_ok=True)
    manifest = RunManifest(command="train", config_hash=config.config_hash(), dataset_hash=dataset_hash,
                           seed=cfg.seed, config=config.model_dump(mode="json"))
    vec_env = AskToActVecEnv(train_episodes, cfg.num_envs, config.reward, config.scene, seed=cfg.seed,
                             mask_invalid=cfg.mask_invalid)
    policy = PolicyNet(vec_env.obs_dim, vec_env.num_actions, cfg.hidden_size, seed=cfg.seed)
    rng = np.random.default_rng([cfg.seed, 2])
    updates = num_updates(cfg)
    probes = list(probe_episodes)[: cfg.probe_episodes]
    checkpoints: list[str] = []

    def on_update(update: int, net: PolicyNet) -> dict:
        finished = vec_env.drain_finished()
        row = {
            "episodes_finished": len(finished),
            "train_success": float(np.mean([e.success for e in finished])) if finished else None,
            "train_return": float(np.mean([e.episode_return for e in finished])) if finished else None,
        }
        if update % cfg.probe_every and update != updates:
            return row
        path = os.path.join(out_dir, "checkpoints", f"update_{update:05d}.json")
        net.save(path, extra={"update": update, "config_hash": manifest.config_hash})
        checkpoints.append(path)
        if probes:
            report, _ = evaluate(
                lambda: PolicyAgent(net, config.scene, greedy=True, mask_invalid=cfg.mask_invalid),
                probes, config.reward, name=f"probe_{update:05d}",
            )
            row.update({"probe_SR": report.SR, "probe_ARS": report.ARS, "probe_QR": report.QR})
        logger.info("update %d/%d: %s", update, updates, {k: v for k, v in row.items() if v is not None})
        return row

    logger.info("Training %d updates of %d x %d steps (obs %d, actions %d)", updates, cfg.rollout_length,
                cfg.num_envs, vec_env.obs_dim, vec_env.num_actions)
    try:
        rows = ppo_loop(vec_env, policy, cfg, updates, rng, on_update, progress)
    except TrainingDivergedError as exc:
        last = checkpoints[-1] if checkpoints else None
        logger.error("Training diverged: %s (last good checkpoint: %s)", exc, last)
        raise TrainingDivergedError(str(exc), last) from exc

    final = os.path.join(out_dir, "final.json")
    policy.save(final, extra={"update": updates, "config_hash": manifest.config_hash})
    curves = pd.DataFrame(rows)
    curves_path = os.path.join(out_dir, "curves.csv")
    curves.to_csv(curves_path, index=False)
    manifest.finish(final_checkpoint=final, curves=curves_path).write(out_dir)
    return TrainResult(policy=policy, final_checkpoint=final, checkpoints=checkpoints, curves=curves)
