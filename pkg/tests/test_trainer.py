import os

import pandas as pd
import pytest

import rl.trainer as trainer_module
from rl.policy import PolicyNet
from rl.trainer import num_updates, train
from simulator.errors import TrainingDivergedError
from utils.io_utils import RunManifest


def test_num_updates(tiny_config):
    assert num_updates(tiny_config.train) == 4
    assert num_updates(tiny_config.train.model_copy(update={"total_steps": 1})) == 1


def test_training_writes_checkpoints_and_curves(small_dataset, tiny_config, tmp_path):
    _, digest, episodes = small_dataset
    result = train(tiny_config, episodes["train"], episodes["unseen_scenes"], str(tmp_path), dataset_hash=digest)

    assert os.path.exists(result.final_checkpoint)
    assert [os.path.basename(p) for p in result.checkpoints] == ["update_00002.json", "update_00004.json"]
    curves = pd.read_csv(tmp_path / "curves.csv")
    assert list(curves["update"]) == [1, 2, 3, 4]
    assert list(curves["env_steps"]) == [16, 32, 48, 64]
    assert curves["probe_SR"].notna().sum() == 2
    manifest = RunManifest.read(str(tmp_path))
    assert manifest.dataset_hash == digest
    assert manifest.config_hash == tiny_config.config_hash()

    loaded = PolicyNet.load(result.final_checkpoint)
    for name, value in result.policy.params.items():
        assert (loaded.params[name] == value).all()


def test_training_is_seeded(small_dataset, tiny_config, tmp_path):
    _, _, episodes = small_dataset
    a = train(tiny_config, episodes["train"], [], str(tmp_path / "a"))
    b = train(tiny_config, episodes["train"], [], str(tmp_path / "b"))
    for name in a.policy.params:
        assert (a.policy.params[name] == b.policy.params[name]).all()


def test_divergence_reports_last_checkpoint(small_dataset, tiny_config, tmp_path, monkeypatch):
    _, _, episodes = small_dataset
    real_update = trainer_module.ppo_update
    calls = {"n": 0}

    def flaky_update(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 3:
            raise TrainingDivergedError("non-finite PPO loss")
        return real_update(*args, **kwargs)

    monkeypatch.setattr(trainer_module, "ppo_update", flaky_update)
    with pytest.raises(TrainingDivergedError) as info:
        train(tiny_config, episodes["train"], [], str(tmp_path))
    assert info.value.last_checkpoint == os.path.join(str(tmp_path), "checkpoints", "update_00002.json")
    assert not os.path.exists(tmp_path / "final.json")
