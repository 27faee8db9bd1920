import os

import pytest

from simulator.episode import EpisodeSpec, PreferenceEntry, TargetPlacement, TaskFamily
from simulator.task_generator import generate_dataset, min_questions
from simulator.vocabulary import load_vocabulary
from simulator.world_model import Scene, validate_scene
from utils.config import RunConfig
from utils.io_utils import save_dataset

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
EXAMPLE_SCENE = os.path.join(ROOT, "data", "example_scene.json")


def load_example_scene() -> Scene:
    with open(EXAMPLE_SCENE, "r", encoding="utf-8") as f:
        return validate_scene(Scene.from_json(f.read()))


def make_spec(scene: Scene, family: TaskFamily, instruction: str, targets, start: str = "rec_00",
              budget_offset: int = 0, max_steps: int = 40, **extra) -> EpisodeSpec:
    spec = EpisodeSpec(
        id=f"example-{family.value}",
        scene=scene,
        family=family,
        instruction=instruction,
        targets=tuple(targets),
        K=0,
        budget=0,
        max_steps=max_steps,
        start_receptacle=start,
        **extra,
    )
    k = min_questions(spec)
    return spec.model_copy(update={"K": k, "budget": k + budget_offset})


@pytest.fixture(scope="session")
def vocab():
    return load_vocabulary()


@pytest.fixture(scope="session")
def example_scene() -> Scene:
    return load_example_scene()


@pytest.fixture(scope="session")
def fetch_spec(example_scene) -> EpisodeSpec:
    """Two red bowls (large on the dark table, small on the light table); the large one is wanted."""
    return make_spec(
        example_scene,
        TaskFamily.ATTRIBUTE_RECOGNITION,
        "Bring the red bowl and place it on the sink.",
        [TargetPlacement(object_id="obj_01", receptacle="rec_07")],
    )


@pytest.fixture(scope="session")
def preference_spec(example_scene) -> EpisodeSpec:
    """Every utensil in the example scene goes into the cabinet; bowls on top, the casserole below."""
    targets = [
        TargetPlacement(object_id=oid, receptacle="rec_06", compartment="top cabinet")
        for oid in ("obj_01", "obj_02", "obj_05", "obj_06")
    ]
    targets.append(TargetPlacement(object_id="obj_00", receptacle="rec_06", compartment="bottom cabinet"))
    return make_spec(
        example_scene,
        TaskFamily.PREFERENCE_BASED,
        "Move all utensils to the cabinet.",
        targets,
        max_steps=60,
        preferences=(
            PreferenceEntry(category="bowl", receptacle="rec_06", compartment="top cabinet"),
            PreferenceEntry(category="casserole", receptacle="rec_06", compartment="bottom cabinet"),
        ),
    )


@pytest.fixture(scope="session")
def tiny_config() -> RunConfig:
    return RunConfig().with_overrides({
        "dataset": {"train_scenes": 2, "eval_scenes": 1, "episodes_per_family": 2},
        "train": {"num_envs": 2, "rollout_length": 8, "total_steps": 64, "hidden_size": 16,
                  "probe_every": 2, "probe_episodes": 2, "minibatches": 2, "ppo_epochs": 1},
        "eval": {"max_episodes": 3},
    })


@pytest.fixture(scope="session")
def small_dataset(tiny_config, tmp_path_factory):
    """(directory, dataset hash, episodes by split) for a seeded desk-sized dataset."""
    out = str(tmp_path_factory.mktemp("dataset"))
    manifest, episodes = generate_dataset(tiny_config.dataset, tiny_config.scene, seed=7, progress=False)
    digest = save_dataset(out, manifest, episodes)
    return out, digest, episodes


@pytest.fixture(scope="session")
def all_episodes(small_dataset) -> list[EpisodeSpec]:
    return [spec for split in small_dataset[2].values() for spec in split]


@pytest.fixture(scope="session")
def large_episodes() -> list[EpisodeSpec]:
    """1050 seeded episodes, 50 per family and split, for Monte-Carlo checks."""
    config = RunConfig().with_overrides({"dataset": {"train_scenes": 4, "eval_scenes": 2, "episodes_per_family": 50}})
    _, episodes = generate_dataset(config.dataset, config.scene, seed=11, progress=False)
    return [spec for split in episodes.values() for spec in split]
