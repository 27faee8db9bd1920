"""Run configuration: versioned YAML file -> pydantic models; secrets from the environment.

Precedence is CLI flags > YAML file > model defaults. Flags are passed in as a
nested ``overrides`` mapping so the merge happens in one place.
"""
import hashlib
import json
import logging
import os
from typing import Any, Literal, Mapping

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1
DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs", "default.yaml")

ALL_FAMILIES = (
    "NoAmbiguity",
    "AttributeRecognition",
    "SpatialReasoning",
    "ObjectSize",
    "Compositional",
    "CleanClutter",
    "PreferenceBased",
)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SceneConfig(_Section):
    num_receptacles: int = 7
    num_articulated: int = 2
    num_objects: int = 9
    max_objects_per_place: int = 4
    max_objects: int = 16
    extra_edges: int = 2


class DatasetConfig(_Section):
    train_scenes: int = Field(16, ge=1)
    eval_scenes: int = Field(4, ge=1)
    episodes_per_family: int = Field(300, ge=1)
    families: tuple[str, ...] = ALL_FAMILIES
    max_steps: int = Field(60, gt=0)
    budget_offset: int = Field(0, ge=0)
    k_node_cap: int = Field(200_000, gt=0)
    layout_attempts: int = Field(50, gt=0)

    @field_validator("families")
    @classmethod
    def _known_families(cls, value: tuple[str, ...]) -> tuple[str, ...]:
        unknown = [f for f in value if f not in ALL_FAMILIES]
        if unknown:
            raise ValueError(f"unknown task families: {unknown}")
        return value


class RewardConfig(_Section):
    r1: float = Field(10.0, ge=0)
    r2: float = Field(2.5, ge=0)
    r3: float = Field(0.5, ge=0)
    r4: float = Field(0.05, ge=0)
    r5: float = Field(0.01, ge=0)
    mode: Literal["full", "subgoal_only", "success_only"] = "full"
    r3_scale_by_k: bool = False


class TrainConfig(_Section):
    gamma: float = Field(0.99, gt=0, le=1)
    gae_tau: float = Field(0.95, ge=0, le=1)
    lr: float = Field(2.5e-4, gt=0)
    ppo_clip: float = Field(0.2, gt=0)
    value_coef: float = Field(0.5, gt=0)
    max_grad_norm: float = Field(0.2, gt=0)
    ppo_epochs: int = Field(2, gt=0)
    minibatches: int = Field(2, gt=0)
    rollout_length: int = Field(24, gt=0)
    num_envs: int = Field(8, gt=0)
    entropy_coef: float = Field(0.01, ge=0)
    total_steps: int = Field(200_000, gt=0)
    hidden_size: int = Field(128, gt=0)
    normalize_advantages: bool = False
    mask_invalid: bool = False
    probe_every: int = Field(25, gt=0)
    probe_episodes: int = Field(32, gt=0)
    seed: int = 0


class EvalConfig(_Section):
    splits: tuple[str, ...] = ("unseen_scenes", "unseen_tasks")
    max_episodes: int | None = None
    seeds: tuple[int, ...] = (0,)
    budget_offsets: tuple[int, ...] = (0, 1, 2, 4)
    ablation_modes: tuple[str, ...] = ("success_only", "subgoal_only", "full")
    workers: int = Field(1, gt=0)


class RunConfig(_Section):
    config_version: Literal[1] = CONFIG_VERSION
    scene: SceneConfig = SceneConfig()
    dataset: DatasetConfig = DatasetConfig()
    reward: RewardConfig = RewardConfig()
    train: TrainConfig = TrainConfig()
    eval: EvalConfig = EvalConfig()

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RunConfig":
        return RunConfig.model_validate(_deep_merge(self.model_dump(mode="json"), overrides))


class BridgeSettings(BaseSettings):
    """Judge endpoint settings, read from ``ASK2ACT_*`` variables (and ``.env``)."""
    model_config = SettingsConfigDict(env_prefix="ASK2ACT_", env_file=".env", extra="ignore")

    judge_url: str | None = None
    judge_api_key: str | None = None
    judge_model: str = "judge"
    judge_timeout: float = 10.0

    @property
    def enabled(self) -> bool:
        return bool(self.judge_url)


def _drop_unset(overrides: Mapping[str, Any]) -> dict:
    """Remove None leaves (flags not given) at any depth, and sections left empty."""
    pruned = {}
    for key, value in overrides.items():
        if isinstance(value, Mapping):
            value = _drop_unset(value)
            if not value:
                continue
        elif value is None:
            continue
        pruned[key] = value
    return pruned


def _deep_merge(base: dict, overrides: Mapping[str, Any]) -> dict:
    merged = dict(base)
    for key, value in _drop_unset(overrides).items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_run_config(path: str | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read a YAML run config (or the defaults) and apply flag overrides."""
    raw: dict = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f) or {}
        version = raw.get("config_version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ValueError(f"{path}: unsupported config_version {version} (expected {CONFIG_VERSION})")
        logger.info("Loaded run config from %s", path)
    config = RunConfig.model_validate(_deep_merge(raw, overrides or {}))
    logger.debug("Run config hash %s", config.config_hash())
    return config
