"""Battle arena: deterministic head-to-head matches and Elo bookkeeping.

Matches are played with deterministic policy heads, so a (seed, gap)
pairing always reproduces the same trace. Ratings use the classic logistic
expected score with a zero-sum K-factor update; deltas are quantized to a
2^-20 grid so that rating sums are conserved bit-exactly in floating point
(all ratings stay on the grid, where IEEE addition is exact).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RewardConfig, TrackConfig
from .env import RaceEnv, TraceRow, trace_to_csv
from .policy import Policy

K_FACTOR = 32.0
INITIAL_RATING = 1000.0
_GRID = float(2**20)


class ArenaError(RuntimeError):
    pass


@dataclass
class MatchResult:
    agent_a: str
    agent_b: str
    seed: int
    init_gap: float          # car A's starting gap (positive = behind)
    winner: str | None       # agent id, or None for a draw
    final_gap: float         # car A's final gap
    race_time_a: float
    race_time_b: float
    b_cpd_a: bool
    b_cpd_b: bool
    score_a: float           # 1 win, 0.5 draw, 0 loss
    trace: list[TraceRow] = field(default_factory=list)

    def to_dict(self, with_trace: bool = False) -> dict:
        doc = {
            "agent_a": self.agent_a,
            "agent_b": self.agent_b,
            "seed": self.seed,
            "init_gap": self.init_gap,
            "winner": self.winner,
            "final_gap": self.final_gap,
            "race_time_a": self.race_time_a,
            "race_time_b": self.race_time_b,
            "b_cpd_a": self.b_cpd_a,
            "b_cpd_b": self.b_cpd_b,
            "score_a": self.score_a,
        }
        if with_trace:
            doc["trace_csv"] = trace_to_csv(self.trace)
        return doc


def score_match(final_gap: float, b_cpd_a: bool, b_cpd_b: bool) -> float:
    """Score for car A: gap sign decides, except a lone compound-rule
    violator loses outright; two violators are scored by gap again."""
    if b_cpd_a != b_cpd_b:
        return 1.0 if b_cpd_a else 0.0
    if final_gap < 0.0:
        return 1.0
    if final_gap > 0.0:
        return 0.0
    return 0.5


def play_match(
    policy_a: Policy,
    policy_b: Policy,
    seed: int,
    init_gap: float,
    cfg: TrackConfig,
    rc: RewardConfig,
    name_a: str = "A",
    name_b: str = "B",
) -> MatchResult:
    """One full deterministic race; A is car 1 starting at init_gap.

    Checkpointed policies must match this track config; scripted policies
    (which carry no hash) are admitted as-is.
    """
    from .config import track_config_hash

    expected = track_config_hash(cfg)
    for name, pol in ((name_a, policy_a), (name_b, policy_b)):
        pol_hash = getattr(pol, "config_hash", None)
        if pol_hash is not None and pol_hash != expected:
            raise ArenaError(
                f"policy {name} was built against a different track config "
                f"({pol_hash[:12]}… vs {expected[:12]}…)"
            )

    env = RaceEnv(cfg, rc, opponent=policy_b)
    obs, opp_obs = env.reset(seed=seed, init_gap=init_gap)
    done = False
    while not done:
        obs, opp_obs, _, done, _ = env.step(policy_a.act(obs, opp_obs))

    es = env.state
    score_a = score_match(es.duel.gap_1, es.car_1.b_cpd, es.car_i.b_cpd)
    winner = name_a if score_a == 1.0 else name_b if score_a == 0.0 else None
    return MatchResult(
        agent_a=name_a,
        agent_b=name_b,
        seed=seed,
        init_gap=init_gap,
        winner=winner,
        final_gap=es.duel.gap_1,
        race_time_a=es.car_1.t_race,
        race_time_b=es.car_i.t_race,
        b_cpd_a=es.car_1.b_cpd,
        b_cpd_b=es.car_i.b_cpd,
        score_a=score_a,
        trace=list(env.trace),
    )


# ---- Elo -------------------------------------------------------------------


def elo_expected(rating_a: float, rating_b: float) -> float:
    """Logistic expected score for A against B."""
    return 1.0 / (1.0 + 10.0 ** ((rating_b - rating_a) / 400.0))


def elo_update(
    rating_a: float, rating_b: float, score_a: float, k: float = K_FACTOR
) -> tuple[float, float]:
    """Zero-sum update; the delta is snapped to a 2^-20 grid so the rating
    sum is conserved exactly in IEEE arithmetic."""
    delta = k * (score_a - elo_expected(rating_a, rating_b))
    delta = round(delta * _GRID) / _GRID
    return rating_a + delta, rating_b - delta


@dataclass
class EloTable:
    ratings: dict[str, float] = field(default_factory=dict)
    matches: dict[str, int] = field(default_factory=dict)
    history: list[dict] = field(default_factory=list)

    def ensure(self, agent: str) -> None:
        if agent not in self.ratings:
            self.ratings[agent] = INITIAL_RATING
            self.matches[agent] = 0

    def record(self, result: MatchResult, k: float = K_FACTOR) -> None:
        a, b = result.agent_a, result.agent_b
        self.ensure(a)
        self.ensure(b)
        ra, rb = elo_update(self.ratings[a], self.ratings[b], result.score_a, k)
        self.ratings[a], self.ratings[b] = ra, rb
        self.matches[a] += 1
        self.matches[b] += 1
        self.history.append(
            {
                "agent_a": a,
                "agent_b": b,
                "seed": result.seed,
                "init_gap": result.init_gap,
                "score_a": result.score_a,
                "rating_a": ra,
                "rating_b": rb,
            }
        )

    def ranking(self) -> list[tuple[str, float]]:
        """Deterministic ordering: rating desc, agent id asc as tiebreak."""
        return sorted(self.ratings.items(), key=lambda kv: (-kv[1], kv[0]))

    def to_dict(self) -> dict:
        return {"ratings": self.ratings, "matches": self.matches, "history": self.history}

    @classmethod
    def from_dict(cls, doc: dict) -> "EloTable":
        return cls(
            ratings=dict(doc.get("ratings", {})),
            matches={k: int(v) for k, v in doc.get("matches", {}).items()},
            history=list(doc.get("history", [])),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EloTable":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---- tournaments -----------------------------------------------------------


def run_arena(
    agents: dict[str, Policy],
    rounds: int,
    cfg: TrackConfig,
    rc: RewardConfig,
    seed: int = 0,
    gap_magnitude: float = 0.5,
    sample_gaps: bool = False,
    convergence_eps: float = 1.0,
    table: EloTable | None = None,
    trace_dir: str | Path | None = None,
) -> EloTable:
    """Round-robin with role/gap symmetrization.

    Each round every pairing plays twice, once with either agent starting
    behind. Ratings update after each match in canonical pairing order, so
    reruns reproduce the same table. Stops early once the largest rating
    move over a full round drops below convergence_eps.
    """
    if len(agents) < 2:
        raise ArenaError("an arena needs at least two agents")
    table = table if table is not None else EloTable()
    for name in agents:
        table.ensure(name)
    names = sorted(agents)
    rng = np.random.default_rng(seed)
    forfeited: set[str] = set()

    for rnd in range(rounds):
        before = dict(table.ratings)
        forfeited.clear()
        for i, name_a in enumerate(names):
            for name_b in names[i + 1 :]:
                gap = (
                    float(rng.uniform(0.1, 2.0)) if sample_gaps else gap_magnitude
                )
                for behind, front in ((name_a, name_b), (name_b, name_a)):
                    match_seed = int(rng.integers(0, 2**31 - 1))
                    if behind in forfeited or front in forfeited:
                        continue
                    try:
                        result = play_match(
                            agents[behind],
                            agents[front],
                            seed=match_seed,
                            init_gap=gap,
                            cfg=cfg,
                            rc=rc,
                            name_a=behind,
                            name_b=front,
                        )
                    except ArenaError:
                        raise
                    except Exception:
                        culprit = _blame(agents, behind, front, cfg, rc)
                        forfeited.add(culprit)
                        table.history.append(
                            {"forfeit": culprit, "round": rnd, "pairing": [behind, front]}
                        )
                        continue
                    table.record(result)
                    if trace_dir is not None:
                        out = Path(trace_dir)
                        out.mkdir(parents=True, exist_ok=True)
                        fname = f"r{rnd:03d}_{behind}_vs_{front}_{match_seed}.csv"
                        (out / fname).write_text(trace_to_csv(result.trace), encoding="utf-8")
        biggest = max(abs(table.ratings[n] - before[n]) for n in names)
        if biggest < convergence_eps:
            break
    return table


def _blame(agents, name_a: str, name_b: str, cfg, rc) -> str:
    """Identify which policy of a crashed match is broken by probing each
    one on fresh grid observations; defaults to the first if both survive."""
    env = RaceEnv(cfg, rc, agents[name_b])
    obs, opp_obs = env.reset(seed=0, init_gap=0.5)
    for name in (name_a, name_b):
        try:
            agents[name].act(obs, opp_obs)
        except Exception:
            return name
    return name_a
