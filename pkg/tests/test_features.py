from dataclasses import replace

import numpy as np
import pytest

from agents.base_agent import AgentView
from evaluation.harness import run_episode
from rl.features import Featurizer
from rl.policy import PolicyNet
from rl.policy_agent import PolicyAgent
from rl.vec_env import AskToActVecEnv
from simulator.environment import ActionKind, AgentAction, AskToActEnv
from simulator.vocabulary import ReceptacleTemplate


@pytest.fixture
def featurizer(tiny_config):
    return Featurizer(tiny_config.scene)


def test_features_fit_the_declared_width(featurizer, all_episodes):
    for spec in all_episodes[::5]:
        env = AskToActEnv()
        featurizer.reset(AgentView.from_spec(spec))
        obs = env.reset(spec)
        for action in [None] + [a for a in env.valid_actions()[:3]]:
            if action is not None:
                obs = env.step(action).obs
            features = featurizer.encode(obs)
            assert features.shape == (featurizer.dim,)
            assert features.dtype == np.float32
            assert features.min() >= 0.0 and features.max() <= 1.0


def test_every_slot_decodes_to_an_action(featurizer, all_episodes):
    spec = all_episodes[0]
    featurizer.reset(AgentView.from_spec(spec))
    obs = AskToActEnv().reset(spec)
    featurizer.encode(obs)
    for index in range(featurizer.num_actions):
        assert isinstance(featurizer.decode(index, obs), AgentAction)
    assert featurizer.decode(featurizer.num_actions - 1, obs).kind is ActionKind.DONE


def test_out_of_range_slots_are_noops(featurizer, all_episodes):
    spec = all_episodes[0]
    featurizer.reset(AgentView.from_spec(spec))
    obs = AskToActEnv().reset(spec)
    featurizer.encode(obs)
    last_pick = max(i for i, s in enumerate(featurizer.slots) if s.kind == "pick")
    assert featurizer.decode(last_pick, obs) == AgentAction.nav(obs.agent_at_name)


def test_valid_mask_agrees_with_the_environment(featurizer, all_episodes):
    spec = all_episodes[3]
    featurizer.reset(AgentView.from_spec(spec))
    obs = AskToActEnv().reset(spec)
    featurizer.encode(obs)
    mask = featurizer.valid_mask(obs)
    assert mask.shape == (featurizer.num_actions,) and mask[-1]
    for index in np.flatnonzero(mask)[:15]:
        env = AskToActEnv()
        env.reset(spec)
        assert env.step(featurizer.decode(int(index), obs)).info["valid"]


def test_masked_sampling_policy_takes_only_valid_actions(featurizer, tiny_config, all_episodes):
    policy = PolicyNet(featurizer.dim, featurizer.num_actions, 16, seed=1)
    for spec in all_episodes[:4]:
        agent = PolicyAgent(policy, tiny_config.scene, greedy=False, mask_invalid=True)
        record = run_episode(agent, spec)
        assert all(step.info["valid"] for step in record.steps)


def test_policy_agent_rejects_mismatched_checkpoint(tiny_config):
    with pytest.raises(ValueError, match="features"):
        PolicyAgent(PolicyNet(3, 2, 4), tiny_config.scene)


def test_vector_env_autoresets(small_dataset, tiny_config):
    _, _, episodes = small_dataset
    vec_env = AskToActVecEnv(episodes["train"], 3, scene_config=tiny_config.scene, seed=1, mask_invalid=True)
    obs, masks = vec_env.reset()
    assert obs.shape == (3, vec_env.obs_dim)
    assert masks.shape == (3, vec_env.num_actions)
    done_action = np.full(3, vec_env.num_actions - 1)
    obs, rewards, dones, masks = vec_env.step(done_action)
    assert dones.all()
    assert obs.shape == (3, vec_env.obs_dim)
    finished = vec_env.drain_finished()
    assert len(finished) == 3 and not any(e.success for e in finished)
    assert vec_env.drain_finished() == []


def test_checkpoint_round_trip(tmp_path):
    policy = PolicyNet(6, 5, hidden_size=8, seed=4)
    path = str(tmp_path / "ckpt" / "final.json")
    policy.save(path, extra={"update": 3})
    loaded = PolicyNet.load(path)
    for name, value in policy.params.items():
        np.testing.assert_array_equal(loaded.params[name], value)
    x = np.random.default_rng(0).random((4, 6))
    np.testing.assert_array_equal(loaded.distribution(x)[0], policy.distribution(x)[0])


def test_checkpoint_schema_is_checked():
    data = PolicyNet(2, 2, 2).to_dict()
    data["schema_version"] = 0
    with pytest.raises(ValueError, match="schema"):
        PolicyNet.from_dict(data)


def test_compartment_slots_follow_the_knowledge_base(tiny_config, vocab):
    base = Featurizer(tiny_config.scene, vocab)
    assert base.n_compartments == tiny_config.scene.num_articulated * 3

    wardrobe = ReceptacleTemplate("wardrobe", "bedroom", ("shelf one", "shelf two", "shelf three", "shelf four"))
    bigger = replace(vocab, articulated=vocab.articulated + (wardrobe,))
    grown = Featurizer(tiny_config.scene, bigger)
    assert grown.n_compartments == tiny_config.scene.num_articulated * 4
    extra = tiny_config.scene.num_articulated
    # open, close, place and ask-on slots each gain one per extra compartment
    assert grown.num_actions == base.num_actions + 4 * extra
    assert sum(1 for s in grown.slots if s.kind == "open") == grown.n_compartments
