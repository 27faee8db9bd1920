"""Dataset files, run manifests and small JSON/CSV writers.

A dataset directory holds ``split_manifest.json`` plus one ``<split>.jsonl``
per split (one EpisodeSpec per line). The dataset hash is the sha256 over the
split files in split order, so two generations with the same seed and config
hash identically.
"""
import hashlib
import json
import logging
import os
from datetime import datetime, timezone
from typing import Any, Iterable, Mapping

import pandas as pd
from pydantic import BaseModel, Field

from simulator.episode import EpisodeSpec
from simulator.errors import ReplayMismatchError
from simulator.task_generator import SPLITS, SplitManifest, min_questions

logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"
SPLIT_MANIFEST = "split_manifest.json"
RUN_MANIFEST = "manifest.json"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_json(path: str, data: Any) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
    return path


def read_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_csv(path: str, rows: Iterable[Mapping[str, Any]], columns: list[str] | None = None) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    pd.DataFrame(list(rows), columns=columns).to_csv(path, index=False)
    return path


# --- datasets ---------------------------------------------------------------


def split_path(dataset_dir: str, split: str) -> str:
    return os.path.join(dataset_dir, f"{split}.jsonl")


def save_dataset(dataset_dir: str, manifest: SplitManifest, episodes: Mapping[str, list[EpisodeSpec]]) -> str:
    os.makedirs(dataset_dir, exist_ok=True)
    write_json(os.path.join(dataset_dir, SPLIT_MANIFEST), manifest.model_dump(mode="json"))
    for split in SPLITS:
        with open(split_path(dataset_dir, split), "w", encoding="utf-8") as f:
            for spec in episodes.get(split, []):
                f.write(spec.to_json() + "\n")
    digest = dataset_hash(dataset_dir)
    logger.info("Wrote dataset %s (hash %s)", dataset_dir, digest[:12])
    return digest


def dataset_hash(dataset_dir: str) -> str:
    h = hashlib.sha256()
    for split in SPLITS:
        path = split_path(dataset_dir, split)
        if not os.path.exists(path):
            raise FileNotFoundError(f"dataset split file missing: {path}")
        with open(path, "rb") as f:
            h.update(split.encode("utf-8"))
            h.update(f.read())
    return h.hexdigest()


def load_split(dataset_dir: str, split: str) -> list[EpisodeSpec]:
    path = split_path(dataset_dir, split)
    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset split file missing: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return [EpisodeSpec.from_dict(json.loads(line)) for line in f if line.strip()]


def load_dataset(dataset_dir: str, verify_k: bool = False,
                 node_cap: int = 200_000) -> tuple[SplitManifest, dict[str, list[EpisodeSpec]]]:
    manifest_path = os.path.join(dataset_dir, SPLIT_MANIFEST)
    if not os.path.exists(manifest_path):
        raise FileNotFoundError(f"not a dataset directory (no {SPLIT_MANIFEST}): {dataset_dir}")
    manifest = SplitManifest.model_validate(read_json(manifest_path))
    episodes = {split: load_split(dataset_dir, split) for split in SPLITS}
    if verify_k:
        for split, specs in episodes.items():
            for spec in specs:
                k = min_questions(spec, node_cap)
                if k != spec.K:
                    raise ReplayMismatchError(f"{split}/{spec.id}: stored K={spec.K}, recomputed K={k}")
    return manifest, episodes


# --- run manifests ------------------------------------------------------------


class RunManifest(BaseModel):
    """Everything needed to reproduce one command's artifacts."""
    command: str
    config_hash: str
    dataset_hash: str | None = None
    seed: int = 0
    tool_version: str = TOOL_VERSION
    started_at: str = Field(default_factory=_now)
    finished_at: str | None = None
    config: dict = Field(default_factory=dict)
    inputs: dict[str, str] = Field(default_factory=dict)
    outputs: dict[str, str] = Field(default_factory=dict)
    extra: dict = Field(default_factory=dict)

    def finish(self, **outputs: str) -> "RunManifest":
        self.outputs.update(outputs)
        self.finished_at = _now()
        return self

    def write(self, out_dir: str) -> str:
        return write_json(os.path.join(out_dir, RUN_MANIFEST), self.model_dump(mode="json"))

    @classmethod
    def read(cls, out_dir: str) -> "RunManifest":
        return cls.model_validate(read_json(os.path.join(out_dir, RUN_MANIFEST)))
