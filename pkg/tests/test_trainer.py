"""Training plumbing: pools, logs, reproducibility, short training runs."""
import copy

import numpy as np
import pytest

from gridwall.config import RewardConfig, TrackConfig
from gridwall.env import RaceEnv
from gridwall.policy import new_policy
from gridwall.scripted import ScriptedPolicy
from gridwall.trainer import (
    OpponentPool,
    PoolEntry,
    TrainConfig,
    TrainLog,
    pretrain_backbone,
    sample_opponent,
    self_play,
    solo_race,
    train_interaction,
    train_interaction_cem,
)
from gridwall.track import Action

CFG = TrackConfig()
RC = RewardConfig()


def tiny_tc(**kw):
    defaults = dict(env_steps=800, warmup_steps=400, seed=0, batch_size=32,
                    snapshot_every_steps=400, opponent_resample_episodes=3)
    defaults.update(kw)
    return TrainConfig(**defaults)


def make_pool(n=1, seed=0):
    entries = [PoolEntry("backbone", new_policy(CFG, RC, seed=seed))]
    for i in range(1, n):
        entries.append(PoolEntry(f"it{i}_best", new_policy(CFG, RC, seed=seed + i)))
    return OpponentPool(entries, iteration=n)


class TestSampleOpponent:
    def test_single_entry_pool_always_returns_it(self):
        pool = make_pool(1)
        rng = np.random.default_rng(0)
        for _ in range(100):
            assert sample_opponent(pool, rng).name == "backbone"

    def test_empty_pool_rejected(self):
        with pytest.raises(ValueError):
            sample_opponent(OpponentPool([], iteration=1), np.random.default_rng(0))

    def test_mixture_frequencies_within_3_sigma(self):
        pool = make_pool(4)
        rng = np.random.default_rng(42)
        n = 10_000
        counts = {e.name: 0 for e in pool.entries}
        for _ in range(n):
            counts[sample_opponent(pool, rng, p_latest=0.5).name] += 1
        # latest: 0.5 + 0.5 / 4; others: 0.5 / 4
        p_latest_total = 0.5 + 0.5 / 4
        sigma = np.sqrt(n * p_latest_total * (1 - p_latest_total))
        assert abs(counts["it3_best"] - n * p_latest_total) <= 3 * sigma
        p_other = 0.5 / 4
        sigma_o = np.sqrt(n * p_other * (1 - p_other))
        for name in ("backbone", "it1_best", "it2_best"):
            assert abs(counts[name] - n * p_other) <= 3 * sigma_o


class TestTrainLog:
    def test_header_and_append(self, tmp_path):
        path = tmp_path / "log.csv"
        log = TrainLog(path)
        log.row(step=1, episode=1, opponent="backbone", **{"return": 2.5},
                win=1, critic_loss=0.1, actor_loss=-0.2, alpha=0.9)
        lines = path.read_text().strip().split("\n")
        assert lines[0].startswith("step,episode,opponent")
        assert len(lines) == 2

    def test_append_only(self, tmp_path):
        path = tmp_path / "log.csv"
        TrainLog(path).row(step=1, episode=1, opponent="a", win=0)
        TrainLog(path).row(step=2, episode=2, opponent="b", win=1)
        assert len(path.read_text().strip().split("\n")) == 3


class TestWithinEpisodeMarkov:
    def test_same_state_action_opponent_same_transition(self):
        # two envs with different histories but identical episode state must
        # transition identically under the same action and opponent
        opponent = ScriptedPolicy(CFG, stops={20: 1})
        env_a = RaceEnv(CFG, RC, opponent)
        env_b = RaceEnv(CFG, RC, opponent)
        env_a.reset(seed=1, init_gap=0.5)
        env_b.reset(seed=2, init_gap=-1.0)
        for _ in range(12):  # divergent histories
            env_a.step(Action(1.1, 0.4, 0))
            env_b.step(Action(0.9, -0.1, 0))
        env_b.state = copy.deepcopy(env_a.state)
        a = Action(1.05, 0.2, 2)
        env_a.step(a)
        env_b.step(a)
        assert np.array_equal(env_a.state_vector(), env_b.state_vector())
        assert env_a.state.t_lap_prev_1 == env_b.state.t_lap_prev_1


class TestPretrainShort:
    def test_reproducible_parameter_hash(self):
        tc = tiny_tc(seed=3)
        h = [pretrain_backbone(tc, CFG, RC).param_hash() for _ in range(2)]
        assert h[0] == h[1]

    def test_different_seed_different_parameters(self):
        h1 = pretrain_backbone(tiny_tc(seed=3), CFG, RC).param_hash()
        h2 = pretrain_backbone(tiny_tc(seed=4), CFG, RC).param_hash()
        assert h1 != h2

    def test_interaction_stays_zeroed(self):
        pol = pretrain_backbone(tiny_tc(), CFG, RC)
        rng = np.random.default_rng(0)
        for _ in range(20):
            ego = rng.uniform(-1, 1, 10)
            opp = rng.uniform(-1, 1, 4)
            assert np.all(pol.interaction_forward(ego, opp) == 0.0)

    def test_battery_stays_in_bounds_during_rollout(self):
        pol = pretrain_backbone(tiny_tc(), CFG, RC)
        from gridwall.env import SoloEnv

        env = SoloEnv(CFG, RC)
        obs = env.reset(0)
        done = False
        while not done:
            obs, _, done, res = env.step(pol.act_backbone_only(obs))
            assert 0.0 <= res.state.e_b <= CFG.e_b_max


class TestTrainInteractionShort:
    def test_backbone_frozen_and_snapshots_carry_winrate(self):
        backbone = new_policy(CFG, RC, seed=5)
        pool = OpponentPool([PoolEntry("backbone", backbone.copy())], iteration=1)
        policy = backbone.copy()
        before = policy.backbone_hash()
        policy, snaps, info = train_interaction(
            policy, pool, tiny_tc(), CFG, RC, backbone_ref=backbone
        )
        assert policy.backbone_hash() == before
        assert not info["diverged"]
        assert len(snaps) >= 1
        assert all(s.win_rate_vs_backbone is not None for s in snaps)

    def test_interaction_parameters_move(self):
        backbone = new_policy(CFG, RC, seed=5)
        pool = OpponentPool([PoolEntry("backbone", backbone.copy())], iteration=1)
        policy = backbone.copy()
        zero_hash = policy.param_hash()
        policy, _, _ = train_interaction(policy, pool, tiny_tc(), CFG, RC, backbone_ref=backbone)
        assert policy.param_hash() != zero_hash

    def test_reproducible_hash(self):
        hashes = []
        for _ in range(2):
            backbone = new_policy(CFG, RC, seed=5)
            pool = OpponentPool([PoolEntry("backbone", backbone.copy())], iteration=1)
            policy, _, _ = train_interaction(
                backbone.copy(), pool, tiny_tc(seed=9), CFG, RC, backbone_ref=backbone
            )
            hashes.append(policy.param_hash())
        assert hashes[0] == hashes[1]

    def test_sustained_high_critic_loss_stops_early_with_flag(self):
        backbone = new_policy(CFG, RC, seed=5)
        pool = OpponentPool([PoolEntry("backbone", backbone.copy())], iteration=1)
        tc = tiny_tc(env_steps=600, warmup_steps=100,
                     divergence_threshold=-1.0, divergence_window=5)
        policy, _, info = train_interaction(
            backbone.copy(), pool, tc, CFG, RC, backbone_ref=backbone
        )
        assert info["diverged"]
        assert info["steps"] < 600

    def test_non_finite_loss_aborts_with_diagnostics(self):
        from gridwall.trainer import TrainingDiverged, _check_finite

        with pytest.raises(TrainingDiverged) as err:
            _check_finite(
                {"critic_loss": float("nan"), "actor_loss": 0.0},
                step=42,
                extra={"stage": "backbone"},
            )
        assert err.value.diagnostics["step"] == 42
        assert err.value.diagnostics["stage"] == "backbone"


class TestSelfPlayShort:
    def test_pool_growth_and_metadata(self):
        backbone = new_policy(CFG, RC, seed=6)
        tc = tiny_tc()
        pool, reports = self_play(
            2, tc, CFG, RC, backbone, trainer=train_interaction_cem,
            mini_arena_matches=4,
        )
        assert len(pool.entries) == 3  # backbone + one best per iteration
        assert pool.entries[0].name == "backbone"
        for i, entry in enumerate(pool.entries[1:], start=1):
            assert entry.name == f"it{i}_best"
            assert entry.policy.elo is not None
            assert entry.policy.meta["iteration"] == i
        assert len(reports) == 2
        assert all("win_rate_vs_backbone" in r for r in reports)

    def test_cem_keeps_backbone_frozen(self):
        backbone = new_policy(CFG, RC, seed=7)
        pool = OpponentPool([PoolEntry("backbone", backbone.copy())], iteration=1)
        policy = backbone.copy()
        before = policy.backbone_hash()
        policy, snaps, info = train_interaction_cem(
            policy, pool, tiny_tc(env_steps=6000), CFG, RC,
            population=4, episodes_per_candidate=1, backbone_ref=backbone,
        )
        assert policy.backbone_hash() == before
        assert len(snaps) >= 1
