"""Acceptance criteria.

One test per criterion, each printing a PASS line on success (run with -v
or -s to see them). The training-backed criteria share session-scoped
artifacts: a pretrained backbone (40k env steps) and one self-play
iteration of interaction training (60k env steps); both finish well inside
the allowed runtime budget.
"""
import dataclasses

import numpy as np
import pytest

from gridwall.arena import elo_expected, elo_update, play_match, score_match
from gridwall.cli import main as cli_main
from gridwall.config import RewardConfig, TrackConfig
from gridwall.duel import interaction_penalty
from gridwall.env import (
    ACTION_DIM,
    EGO_OBS_DIM,
    OPP_OBS_DIM,
    RaceEnv,
    STATE_DIM,
    SoloEnv,
    final_reward,
)
from gridwall.nets import Mlp
from gridwall.policy import new_policy, save_checkpoint
from gridwall.sac import actor_loss, actor_loss_grads, critic_loss, critic_loss_grads
from gridwall.scripted import EnergyManagedPolicy, ScriptedPolicy, nominal_baseline
from gridwall.track import Action
from gridwall.trainer import (
    OpponentPool,
    PoolEntry,
    TrainConfig,
    pretrain_backbone,
    solo_race,
    train_interaction,
)

CFG = TrackConfig()
RC = RewardConfig()


def report(line: str) -> None:
    print(f"ACCEPTANCE {line}")


class RandomPolicy:
    """Uniformly random feasible actions; used for stress episodes."""

    def __init__(self, seed: int, pit_prob: float = 0.08):
        self.rng = np.random.default_rng(seed)
        self.pit_prob = pit_prob

    def act(self, obs, opp_obs) -> Action:
        ps = int(self.rng.integers(1, 4)) if self.rng.random() < self.pit_prob else 0
        return Action(
            float(self.rng.uniform(0.7, 1.3)),
            float(self.rng.uniform(-1.2, 1.2)),
            ps,
        )


# ---- shared trained artifacts ------------------------------------------------


@pytest.fixture(scope="session")
def trained_backbone():
    tc = TrainConfig(env_steps=40_000, warmup_steps=1_000, seed=1)
    return pretrain_backbone(tc, CFG, RC)


@pytest.fixture(scope="session")
def selfplay_iteration(trained_backbone):
    backbone = trained_backbone
    pool = OpponentPool([PoolEntry("backbone", backbone.copy())], iteration=1)
    policy = backbone.copy()
    hash_before = policy.backbone_hash()
    policy, snapshots, info = train_interaction(
        policy,
        pool,
        TrainConfig(env_steps=60_000, warmup_steps=2_000, seed=11, snapshot_every_steps=10_000),
        CFG,
        RC,
        backbone_ref=backbone,
    )
    best = max(snapshots, key=lambda s: s.win_rate_vs_backbone)
    return {
        "policy": policy,
        "snapshots": snapshots,
        "best": best,
        "hash_before": hash_before,
        "info": info,
    }


# ---- criteria -----------------------------------------------------------------


def test_dimensional_contract():
    """Flattened state/observation/action sizes are exactly 18/14/3."""
    assert STATE_DIM == 18
    assert EGO_OBS_DIM + OPP_OBS_DIM == 14
    assert ACTION_DIM == 3
    env = RaceEnv(CFG, RC, ScriptedPolicy(CFG))
    obs, opp_obs = env.reset(seed=0, init_gap=0.5)
    assert env.state_vector().shape == (18,)
    assert obs.shape == (10,) and opp_obs.shape == (4,)
    report("dimensional contract 18/14/3: PASS")


def test_gap_antisymmetry_1000_episodes():
    """|gap_1 + gap_i| <= 1e-9 on every lap of 1000 random-policy episodes."""
    rng = np.random.default_rng(2024)
    worst = 0.0
    for ep in range(1000):
        env = RaceEnv(CFG, RC, RandomPolicy(seed=ep * 2 + 1))
        ego = RandomPolicy(seed=ep * 2)
        obs, opp_obs = env.reset(seed=int(rng.integers(1 << 30)), init_gap="sample")
        done = False
        while not done:
            obs, opp_obs, _, done, _ = env.step(ego.act(obs, opp_obs))
            s = abs(env.state.duel.gap_1 + env.state.duel.gap_i)
            worst = max(worst, s)
            assert s <= 1e-9
    report(f"gap antisymmetry over 1000 episodes (worst {worst:.2e}): PASS")


def test_interaction_penalty_window():
    """Zero outside [0.2, 1.5]; continuous at 1.5 within 1e-12; 0.52 at 0.2."""
    for gap in (-5.0, 0.0, 0.199999, 1.500001, 40.0):
        assert interaction_penalty(gap, CFG) == 0.0
    assert abs(interaction_penalty(1.5, CFG)) <= 1e-12
    assert interaction_penalty(0.2, CFG) == 0.52
    assert interaction_penalty(0.2, CFG) == CFG.interaction.a * 0.2 + CFG.interaction.b
    report("interaction penalty window/continuity/0.52: PASS")


def test_zero_init_equivalence():
    """Fresh interaction module: composed action == backbone action, 1e4 obs."""
    pol = new_policy(CFG, RC, seed=77)
    rng = np.random.default_rng(3)
    scale_e = np.array([1, 57, 50, 5000, 1, 3, 1.5, 1, 100, 57], dtype=float)
    scale_o = np.array([57, 3, 1, 10], dtype=float)
    for _ in range(10_000):
        ego = rng.uniform(-1, 1, 10) * scale_e
        opp = rng.uniform(-1, 1, 4) * scale_o
        assert pol.act(ego, opp) == pol.act_backbone_only(ego)
    report("zero-init composition identity on 10^4 observations: PASS")


def test_frozen_backbone_hash(selfplay_iteration):
    """Backbone parameter hash unchanged across a full training iteration."""
    assert selfplay_iteration["policy"].backbone_hash() == selfplay_iteration["hash_before"]
    report("frozen backbone hash across training iteration: PASS")


def test_bookkeeping_identities():
    """Mass identity exact each lap; return identity within 1e-9."""
    env = RaceEnv(CFG, RC, ScriptedPolicy(CFG, stops={24: 3}))
    pol = EnergyManagedPolicy(CFG, stops={17: 1, 38: 1})
    obs, opp_obs = env.reset(seed=5, init_gap=0.5)
    total = 0.0
    done = False
    while not done:
        obs, opp_obs, r, done, _ = env.step(pol.act(obs, opp_obs))
        total += r
        for car in (env.state.car_1, env.state.car_i):
            assert car.m_car == CFG.m_dry + CFG.fuel_unit_mass * car.e_f
    expected = CFG.n_laps * RC.t_c - env.state.car_1.t_race + final_reward(
        env.state.duel.gap_1, env.state.car_1.b_cpd, RC
    )
    assert abs(total - expected) <= 1e-9
    report("bookkeeping identities (mass exact, return 1e-9): PASS")


def test_elo_properties():
    """Sum conservation exact over 1e4 updates; symmetry 1e-12; +-16 at K=32."""
    rng = np.random.default_rng(4)
    ra, rb = 1000.0, 1000.0
    total = ra + rb
    for _ in range(10_000):
        ra, rb = elo_update(ra, rb, float(rng.choice([0.0, 0.5, 1.0])))
        assert ra + rb == total
    for _ in range(1000):
        x, y = rng.uniform(400, 2600, 2)
        assert abs(elo_expected(x, y) + elo_expected(y, x) - 1.0) <= 1e-12
    up, down = elo_update(1200.0, 1200.0, 1.0, k=32.0)
    assert up == 1216.0 and down == 1184.0
    report("elo conservation/symmetry/K=32: PASS")


def test_gradient_check_actor_critic():
    """Analytic vs central-difference gradients, float64, rel err <= 1e-4."""
    rng = np.random.default_rng(5)
    obs_dim, act_dim, batch = 6, 3, 24
    actor = Mlp([obs_dim, 8, 8, 2 * act_dim], rng=rng, dtype=np.float64)
    q1 = Mlp([obs_dim + act_dim, 8, 8, 1], rng=rng, dtype=np.float64)
    q2 = Mlp([obs_dim + act_dim, 8, 8, 1], rng=rng, dtype=np.float64)
    obs = rng.standard_normal((batch, obs_dim))
    act = np.tanh(rng.standard_normal((batch, act_dim)))
    y = rng.standard_normal(batch)
    eps = rng.standard_normal((batch, act_dim))

    def flat(ws, bs):
        return np.concatenate([g.ravel() for pair in zip(ws, bs) for g in pair])

    def fd(loss_fn, net):
        p0 = net.get_flat()
        g = np.zeros_like(p0)
        for i in range(p0.size):
            h = 1e-6 * max(1.0, abs(p0[i]))
            p = p0.copy()
            p[i] = p0[i] + h
            net.set_flat(p)
            hi = loss_fn()
            p[i] = p0[i] - h
            net.set_flat(p)
            lo = loss_fn()
            g[i] = (hi - lo) / (2 * h)
        net.set_flat(p0)
        return g

    _, dw, db = critic_loss_grads(q1, obs, act, y)
    g_fd = fd(lambda: critic_loss(q1, obs, act, y), q1)
    g_an = flat(dw, db)
    err_c = np.max(np.abs(g_fd - g_an) / np.maximum(np.abs(g_fd) + np.abs(g_an), 1e-8))
    assert err_c <= 1e-4

    _, dw, db, _ = actor_loss_grads(actor, q1, q2, obs, eps, alpha=0.21, bound=1.0)
    g_fd = fd(lambda: actor_loss(actor, q1, q2, obs, eps, alpha=0.21, bound=1.0), actor)
    g_an = flat(dw, db)
    err_a = np.max(np.abs(g_fd - g_an) / np.maximum(np.abs(g_fd) + np.abs(g_an), 1e-8))
    assert err_a <= 1e-4
    report(f"gradient check (critic {err_c:.1e}, actor {err_a:.1e}): PASS")


def test_match_cli_determinism(trained_backbone, selfplay_iteration, tmp_path):
    """`gridwall match A B --seed S` twice -> byte-identical trace CSVs."""
    a_path = tmp_path / "A.gwp"
    b_path = tmp_path / "B.gwp"
    save_checkpoint(selfplay_iteration["best"].policy, a_path)
    save_checkpoint(trained_backbone, b_path)
    blobs = []
    for i in range(2):
        trace = tmp_path / f"match{i}.csv"
        rv = cli_main([
            "match", str(a_path), str(b_path),
            "--gap", "0.5", "--seed", "21", "--trace", str(trace),
        ])
        assert rv == 0
        blobs.append(trace.read_bytes())
    assert blobs[0] == blobs[1]
    report("match CLI byte-identical traces: PASS")


def test_pretraining_efficacy(trained_backbone):
    """Beats the brute-forced scripted baseline by >= 5 s; race in 90 +- 5 min."""
    _, baseline_time, baseline_plan = nominal_baseline(CFG, RC)
    t_race, b_cpd = solo_race(trained_backbone, CFG, RC)
    margin = baseline_time - t_race
    minutes = t_race / 60.0
    assert b_cpd
    assert margin >= 5.0
    assert 85.0 <= minutes <= 95.0
    report(
        f"pretraining efficacy (margin {margin:+.1f} s over baseline "
        f"{baseline_plan}, race {minutes:.2f} min): PASS"
    )


def test_selfplay_efficacy(trained_backbone, selfplay_iteration):
    """Best snapshot wins >= 60% of 200 deterministic matches at +-0.5 s."""
    best = selfplay_iteration["best"].policy
    score = 0.0
    n = 0
    for i in range(100):
        for gap in (0.5, -0.5):
            res = play_match(
                best, trained_backbone, seed=10_000 + i, init_gap=gap, cfg=CFG, rc=RC
            )
            score += res.score_a
            n += 1
    win_rate = score / n
    assert n == 200
    assert win_rate >= 0.60
    report(f"self-play efficacy (win rate {win_rate:.2f} over 200 matches): PASS")


def test_compound_rule_forces_arena_loss():
    """Never-pit policy ends b_cpd false and loses even when ahead on gap."""
    never = ScriptedPolicy(CFG)
    # a legal but ruinous strategy: pit for fresh softs every three laps
    wasteful = ScriptedPolicy(CFG, stops={k: 1 if (k // 3) % 2 else 2 for k in range(3, 56, 3)})
    res = play_match(never, wasteful, seed=0, init_gap=0.5, cfg=CFG, rc=RC)
    assert res.final_gap < 0, "never-pit car should finish ahead on gap here"
    assert not res.b_cpd_a and res.b_cpd_b
    assert res.score_a == 0.0 and res.winner == res.agent_b
    report("compound rule forces loss despite gap lead: PASS")


def test_undercut_exists_by_enumeration():
    """Exhaustive pit-lap-pair search exhibits a successful undercut."""
    second_stop = 40
    candidates = range(6, 31)
    found = None
    for p_a in candidates:
        for p_b in candidates:
            if p_a >= p_b:
                continue  # car A must stop earlier
            pol_a = ScriptedPolicy(CFG, stops={p_a: 1, second_stop: 1})
            pol_b = ScriptedPolicy(CFG, stops={p_b: 1, second_stop: 1})
            env = RaceEnv(CFG, RC, pol_b)
            obs, opp_obs = env.reset(seed=0, init_gap=0.5)  # A starts behind
            behind_before_stop = True
            ahead_after_outlap = False
            done = False
            while not done:
                obs, opp_obs, _, done, _ = env.step(pol_a.act(obs, opp_obs))
                k = env.state.k
                if k == p_a and env.state.duel.gap_1 <= 0:
                    behind_before_stop = False
                if k == p_b + 2:  # B pitted at p_b, its out-lap is p_b + 1
                    ahead_after_outlap = env.state.duel.gap_1 < 0
            if behind_before_stop and ahead_after_outlap:
                found = (p_a, p_b)
                break
        if found:
            break
    assert found is not None
    report(f"undercut exists (first stops {found[0]} vs {found[1]}): PASS")
