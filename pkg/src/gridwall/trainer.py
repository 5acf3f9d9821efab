"""Policy production: backbone pretraining and pool-based self-play.

The backbone is trained alone on the single-car environment; afterwards it
is frozen and only the interaction module learns, racing against opponents
drawn from a pool of earlier "best" agents (the first iteration's pool is
the backbone alone). All randomness derives from TrainConfig.seed, so a
single-threaded run reproduces the same parameter hash.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arena import INITIAL_RATING, play_match, run_arena, score_match
from .config import RewardConfig, TrackConfig
from .env import ACTION_DIM, EGO_OBS_DIM, OPP_OBS_DIM, RaceEnv, SoloEnv
from .policy import Policy, new_policy
from .sac import ReplayBuffer, SacLearner, SacSettings
from .track import Action


class TrainingDiverged(RuntimeError):
    """Raised when a loss goes non-finite; carries a diagnostics snapshot."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class TrainConfig:
    """Desk-scale training hyperparameters (gamma is pinned at 1)."""

    env_steps: int = 150_000
    replay_capacity: int = 200_000
    batch_size: int = 256
    lr: float = 3e-4
    tau: float = 5e-3
    entropy_target: float = -3.0
    opponent_resample_episodes: int = 20
    p_latest: float = 0.5
    selfplay_iterations: int = 4
    snapshot_every_steps: int = 15_000
    seed: int = 0
    warmup_steps: int = 2_000
    update_every: int = 1
    divergence_threshold: float = 1e7
    divergence_window: int = 500

    def __post_init__(self) -> None:
        if self.env_steps <= 0 or self.replay_capacity <= 0 or self.batch_size <= 0:
            raise ValueError("budgets must be positive")
        if not 0.0 <= self.p_latest <= 1.0:
            raise ValueError("p_latest must be a probability")

    def settings(self) -> SacSettings:
        return SacSettings(
            lr=self.lr, gamma=1.0, tau=self.tau, entropy_target=self.entropy_target
        )


@dataclass
class PoolEntry:
    name: str
    policy: Policy
    elo: float = INITIAL_RATING


@dataclass
class OpponentPool:
    entries: list[PoolEntry]
    iteration: int = 1

    def latest(self) -> PoolEntry:
        return self.entries[-1]


def sample_opponent(pool: OpponentPool, rng: np.random.Generator, p_latest: float = 0.5) -> PoolEntry:
    """Latest best with probability p_latest, else uniform over the pool.

    Iteration 1 pools contain only the backbone, so the draw is degenerate
    there by construction.
    """
    if not pool.entries:
        raise ValueError("opponent pool is empty")
    if len(pool.entries) == 1 or rng.random() < p_latest:
        return pool.latest()
    return pool.entries[int(rng.integers(0, len(pool.entries)))]


@dataclass
class Snapshot:
    name: str
    step: int
    policy: Policy
    win_rate_vs_backbone: float | None = None
    elo: float | None = None


class TrainLog:
    """Append-only CSV: one row per training episode."""

    COLUMNS = ("step", "episode", "opponent", "return", "win", "critic_loss", "actor_loss", "alpha")

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path else None
        if self.path and not self.path.exists():
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", newline="", encoding="utf-8") as fh:
                csv.writer(fh).writerow(self.COLUMNS)

    def row(self, **kw) -> None:
        if not self.path:
            return
        with open(self.path, "a", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerow([kw.get(c, "") for c in self.COLUMNS])


def _check_finite(metrics: dict, step: int, extra: dict) -> None:
    for key in ("critic_loss", "actor_loss"):
        if not math.isfinite(metrics[key]):
            raise TrainingDiverged(
                f"{key} went non-finite at step {step}",
                {"step": step, **metrics, **extra},
            )


# ---- backbone pretraining ---------------------------------------------------


def solo_race(policy: Policy, cfg: TrackConfig, rc: RewardConfig, stochastic_rng=None) -> tuple[float, bool]:
    """Roll one single-car race; returns (race time, compound rule met)."""
    env = SoloEnv(cfg, rc)
    obs = env.reset(0)
    done = False
    while not done:
        if stochastic_rng is None:
            action = policy.act_backbone_only(obs)
        else:
            from .sac import head_sample

            out = policy.backbone.forward(policy.norm.ego(obs))
            eps = stochastic_rng.standard_normal(ACTION_DIM).astype(np.float32)
            squashed = head_sample(out[None, :], eps[None, :], 1.0).action[0]
            action = policy.action_map.decode(squashed.astype(np.float64))
        obs, _, done, _ = env.step(action)
    return env.car.t_race, env.car.b_cpd


def pretrain_backbone(
    tc: TrainConfig,
    cfg: TrackConfig,
    rc: RewardConfig,
    log: TrainLog | None = None,
) -> Policy:
    """Train the single-agent backbone with SAC on the solo environment."""
    ss = np.random.SeedSequence(tc.seed).spawn(4)
    rng_learn = np.random.default_rng(ss[0])
    rng_batch = np.random.default_rng(ss[1])
    rng_warm = np.random.default_rng(ss[2])

    policy = new_policy(cfg, rc, seed=tc.seed)
    policy.meta.update({"stage": "backbone", "seed": tc.seed})
    learner = SacLearner(
        policy.backbone, EGO_OBS_DIM, ACTION_DIM, bound=1.0,
        settings=tc.settings(), rng=rng_learn,
    )
    buf = ReplayBuffer(tc.replay_capacity, EGO_OBS_DIM, ACTION_DIM)
    env = SoloEnv(cfg, rc)
    log = log or TrainLog(None)

    obs = env.reset(0)
    norm_obs = policy.norm.ego(obs)
    episode = 0
    ep_return = 0.0
    metrics = {"critic_loss": 0.0, "actor_loss": 0.0, "alpha": learner.alpha}
    for step in range(tc.env_steps):
        if step < tc.warmup_steps:
            squashed = rng_warm.uniform(-1.0, 1.0, ACTION_DIM).astype(np.float32)
        else:
            squashed = learner.act_stochastic(norm_obs)
        action = policy.action_map.decode(squashed.astype(np.float64))
        obs, reward, done, _ = env.step(action)
        norm_next = policy.norm.ego(obs)
        buf.add(norm_obs, squashed, reward, norm_next, done)
        norm_obs = norm_next
        ep_return += reward

        if done:
            episode += 1
            log.row(
                step=step, episode=episode, opponent="-", **{"return": round(ep_return, 3)},
                win="", critic_loss=round(metrics["critic_loss"], 4),
                actor_loss=round(metrics["actor_loss"], 4), alpha=round(learner.alpha, 5),
            )
            obs = env.reset(0)
            norm_obs = policy.norm.ego(obs)
            ep_return = 0.0

        if step >= tc.warmup_steps and step % tc.update_every == 0:
            metrics = learner.update(buf.sample(tc.batch_size, rng_batch))
            _check_finite(metrics, step, {"stage": "backbone"})
    return policy


# ---- interaction training ----------------------------------------------------


def _compose_squashed(a_nom: np.ndarray, delta: np.ndarray) -> np.ndarray:
    return np.clip(a_nom.astype(np.float64) + delta.astype(np.float64), -1.0, 1.0)


def evaluate_vs_backbone(
    policy: Policy,
    backbone: Policy,
    cfg: TrackConfig,
    rc: RewardConfig,
    gaps: tuple[float, ...] = (0.5, -0.5),
    seed: int = 0,
) -> float:
    """Mean match score of `policy` against the backbone over fixed gaps."""
    scores = []
    for i, gap in enumerate(gaps):
        res = play_match(policy, backbone, seed=seed + i, init_gap=gap, cfg=cfg, rc=rc)
        scores.append(res.score_a)
    return float(np.mean(scores))


def train_interaction(
    policy: Policy,
    pool: OpponentPool,
    tc: TrainConfig,
    cfg: TrackConfig,
    rc: RewardConfig,
    log: TrainLog | None = None,
    backbone_ref: Policy | None = None,
) -> tuple[Policy, list[Snapshot], dict]:
    """SAC on the interaction module against pooled opponents.

    The backbone stays frozen; transitions store the sampled correction as
    the action. Returns the trained policy (same object), snapshots taken
    every snapshot_every_steps, and a summary dict.
    """
    ss = np.random.SeedSequence([tc.seed, pool.iteration]).spawn(5)
    rng_learn = np.random.default_rng(ss[0])
    rng_batch = np.random.default_rng(ss[1])
    rng_pool = np.random.default_rng(ss[2])
    rng_env = np.random.default_rng(ss[3])
    rng_warm = np.random.default_rng(ss[4])

    frozen_hash = policy.backbone_hash()
    backbone_ref = backbone_ref or pool.entries[0].policy
    obs_dim = EGO_OBS_DIM + OPP_OBS_DIM
    learner = SacLearner(
        policy.interaction, obs_dim, ACTION_DIM, bound=policy.delta_bound,
        settings=tc.settings(), rng=rng_learn,
    )
    buf = ReplayBuffer(tc.replay_capacity, obs_dim, ACTION_DIM)
    log = log or TrainLog(None)
    snapshots: list[Snapshot] = []
    diverged = False
    high_loss_run = 0

    opponent = sample_opponent(pool, rng_pool, tc.p_latest)
    env = RaceEnv(cfg, rc, opponent.policy)
    obs, opp_obs = env.reset(seed=int(rng_env.integers(2**31)), init_gap="sample")
    episode = 0
    ep_return = 0.0
    metrics = {"critic_loss": 0.0, "actor_loss": 0.0, "alpha": learner.alpha}

    def norm_pair(o, oo):
        return np.concatenate([policy.norm.ego(o), policy.norm.opp(oo)])

    norm_obs = norm_pair(obs, opp_obs)
    step = 0
    while step < tc.env_steps:
        a_nom = np.tanh(policy.backbone.forward(policy.norm.ego(obs))[:ACTION_DIM])
        if step < tc.warmup_steps:
            delta = (
                policy.delta_bound
                * rng_warm.uniform(-1.0, 1.0, ACTION_DIM).astype(np.float32)
            )
        else:
            delta = learner.act_stochastic(norm_obs)
        action = policy.action_map.decode(_compose_squashed(a_nom, delta))
        obs, opp_obs, reward, done, _ = env.step(action)
        norm_next = norm_pair(obs, opp_obs)
        buf.add(norm_obs, delta, reward, norm_next, done)
        norm_obs = norm_next
        ep_return += reward
        step += 1

        if done:
            episode += 1
            es = env.state
            win = score_match(es.duel.gap_1, es.car_1.b_cpd, es.car_i.b_cpd) == 1.0
            log.row(
                step=step, episode=episode, opponent=opponent.name,
                **{"return": round(ep_return, 3)}, win=int(win),
                critic_loss=round(metrics["critic_loss"], 4),
                actor_loss=round(metrics["actor_loss"], 4),
                alpha=round(learner.alpha, 5),
            )
            ep_return = 0.0
            if episode % tc.opponent_resample_episodes == 0:
                opponent = sample_opponent(pool, rng_pool, tc.p_latest)
                env = RaceEnv(cfg, rc, opponent.policy)
            obs, opp_obs = env.reset(seed=int(rng_env.integers(2**31)), init_gap="sample")
            norm_obs = norm_pair(obs, opp_obs)

        if step >= tc.warmup_steps and step % tc.update_every == 0:
            metrics = learner.update(buf.sample(tc.batch_size, rng_batch))
            _check_finite(metrics, step, {"stage": "interaction", "iteration": pool.iteration})
            if metrics["critic_loss"] > tc.divergence_threshold:
                high_loss_run += 1
                if high_loss_run >= tc.divergence_window:
                    diverged = True
                    break
            else:
                high_loss_run = 0

        if step % tc.snapshot_every_steps == 0 or step == tc.env_steps:
            snap = Snapshot(
                name=f"it{pool.iteration}_s{step}",
                step=step,
                policy=policy.copy(),
            )
            snap.win_rate_vs_backbone = evaluate_vs_backbone(
                snap.policy, backbone_ref, cfg, rc
            )
            snapshots.append(snap)
    assert policy.backbone_hash() == frozen_hash, "backbone moved during training"

    info = {
        "diverged": diverged,
        "episodes": episode,
        "steps": step,
        "final_alpha": learner.alpha,
    }
    return policy, snapshots, info


# ---- cross-entropy fallback ---------------------------------------------------


def train_interaction_cem(
    policy: Policy,
    pool: OpponentPool,
    tc: TrainConfig,
    cfg: TrackConfig,
    rc: RewardConfig,
    population: int = 24,
    elite_frac: float = 0.25,
    episodes_per_candidate: int = 2,
    log: TrainLog | None = None,
    backbone_ref: Policy | None = None,
) -> tuple[Policy, list[Snapshot], dict]:
    """Gradient-free stand-in for train_interaction (same contract).

    Cross-entropy search over the interaction module's flat parameter
    vector, scoring candidates by mean episode return against pooled
    opponents. Useful to sanity-check the environment when debugging the
    gradient path.
    """
    ss = np.random.SeedSequence([tc.seed, pool.iteration, 7]).spawn(2)
    rng = np.random.default_rng(ss[0])
    rng_env = np.random.default_rng(ss[1])
    frozen_hash = policy.backbone_hash()
    backbone_ref = backbone_ref or pool.entries[0].policy
    log = log or TrainLog(None)

    steps_per_gen = population * episodes_per_candidate * cfg.n_laps
    generations = max(1, tc.env_steps // steps_per_gen)
    n_elite = max(1, int(round(population * elite_frac)))

    mean = policy.interaction.get_flat().astype(np.float64)
    std = np.full_like(mean, 0.05)
    snapshots: list[Snapshot] = []
    steps = 0
    episode = 0

    def score(flat: np.ndarray) -> float:
        nonlocal steps, episode
        trial = policy.copy()
        trial.interaction.set_flat(flat.astype(np.float32))
        total = 0.0
        for _ in range(episodes_per_candidate):
            opponent = sample_opponent(pool, rng, tc.p_latest)
            env = RaceEnv(cfg, rc, opponent.policy)
            obs, opp_obs = env.reset(seed=int(rng_env.integers(2**31)), init_gap="sample")
            done = False
            ep = 0.0
            while not done:
                obs, opp_obs, r, done, _ = env.step(trial.act(obs, opp_obs))
                ep += r
                steps += 1
            episode += 1
            total += ep
        return total / episodes_per_candidate

    best_flat = mean.copy()
    best_score = -np.inf
    for gen in range(generations):
        cands = mean[None, :] + std[None, :] * rng.standard_normal((population, mean.size))
        scores = np.array([score(c) for c in cands])
        elite = cands[np.argsort(scores)[-n_elite:]]
        mean = elite.mean(axis=0)
        std = elite.std(axis=0) + 1e-3
        gen_best = float(scores.max())
        if gen_best > best_score:
            best_score = gen_best
            best_flat = cands[int(np.argmax(scores))].copy()
        log.row(
            step=steps, episode=episode, opponent="pool",
            **{"return": round(gen_best, 3)}, win="", critic_loss="", actor_loss="", alpha="",
        )
        snap_policy = policy.copy()
        snap_policy.interaction.set_flat(best_flat.astype(np.float32))
        snap = Snapshot(name=f"it{pool.iteration}_cem{gen}", step=steps, policy=snap_policy)
        snap.win_rate_vs_backbone = evaluate_vs_backbone(snap_policy, backbone_ref, cfg, rc)
        snapshots.append(snap)

    policy.interaction.set_flat(best_flat.astype(np.float32))
    assert policy.backbone_hash() == frozen_hash
    return policy, snapshots, {"diverged": False, "episodes": episode, "steps": steps}


# ---- self-play -----------------------------------------------------------------


def self_play(
    n_iterations: int,
    tc: TrainConfig,
    cfg: TrackConfig,
    rc: RewardConfig,
    backbone: Policy,
    log: TrainLog | None = None,
    mini_arena_matches: int = 50,
    trainer=train_interaction,
) -> tuple[OpponentPool, list[dict]]:
    """Iterated pool self-play: train, rank snapshots in a mini-arena,
    append the best to the pool, repeat."""
    pool = OpponentPool([PoolEntry("backbone", backbone.copy())], iteration=1)
    current = backbone.copy()
    reports: list[dict] = []

    for it in range(1, n_iterations + 1):
        pool.iteration = it
        current, snapshots, info = trainer(
            current, pool, tc, cfg, rc, log=log, backbone_ref=backbone
        )
        candidates = {s.name: s.policy for s in snapshots}
        agents = dict(candidates)
        for entry in pool.entries:
            agents[entry.name] = entry.policy
        pairs = max(1, len(agents) - 1)
        rounds = max(1, math.ceil(mini_arena_matches / (2 * pairs)))
        table = run_arena(
            agents, rounds=rounds, cfg=cfg, rc=rc,
            seed=tc.seed * 1000 + it, sample_gaps=True, convergence_eps=0.0,
        )
        ranked = [name for name, _ in table.ranking() if name in candidates]
        best_name = ranked[0]
        best_snap = next(s for s in snapshots if s.name == best_name)
        best_snap.elo = table.ratings[best_name]

        best_policy = best_snap.policy.copy()
        best_policy.elo = best_snap.elo
        best_policy.meta.update(
            {"iteration": it, "step": best_snap.step, "snapshot": best_name}
        )
        pool.entries.append(PoolEntry(f"it{it}_best", best_policy, best_snap.elo))
        current = best_policy.copy()

        below_floor = (best_snap.win_rate_vs_backbone or 0.0) < 0.4
        reports.append(
            {
                "iteration": it,
                "best": best_name,
                "elo": best_snap.elo,
                "win_rate_vs_backbone": best_snap.win_rate_vs_backbone,
                "below_floor": below_floor,
                **info,
            }
        )
        pool.iteration = it + 1
    return pool, reports
