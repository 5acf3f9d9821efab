"""Scripted pit-wall policies: baselines, oracles and arena filler.

These read the lap number from the laps-remaining observation component, so
they satisfy the same act() protocol as learned policies.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import TrackConfig
from .track import NO_PIT, Action


@dataclass
class ScriptedPolicy:
    """Constant allocations with pit stops at fixed laps.

    stops maps lap index -> pit code. The nominal baseline is
    ScriptedPolicy(cfg, stops={p: code}) with default allocations.
    """

    cfg: TrackConfig
    d_ef: float = 1.0
    d_eb: float = 0.0
    stops: dict[int, int] = field(default_factory=dict)

    def act(self, obs: np.ndarray, opp_obs: np.ndarray) -> Action:
        lap = self.cfg.n_laps - int(round(float(obs[9])))
        return Action(self.d_ef, self.d_eb, self.stops.get(lap, NO_PIT))


def never_pit_policy(cfg: TrackConfig) -> ScriptedPolicy:
    return ScriptedPolicy(cfg)


@dataclass
class EnergyManagedPolicy:
    """Front-loads fuel, drains the battery early, pits per schedule.

    Burns at the top of the allocation range while enough fuel remains to
    finish the race at the bottom of the range; used as a strong scripted
    reference in tests and the undercut oracle.
    """

    cfg: TrackConfig
    stops: dict[int, int] = field(default_factory=dict)

    def act(self, obs: np.ndarray, opp_obs: np.ndarray) -> Action:
        laps_remaining = int(round(float(obs[9])))
        lap = self.cfg.n_laps - laps_remaining
        e_f = float(obs[1])
        lo, hi = self.cfg.fuel_alloc_range
        d_ef = hi if e_f - hi >= lo * (laps_remaining - 1) else lo
        return Action(d_ef, 1.0, self.stops.get(lap, NO_PIT))


def nominal_baseline(cfg: TrackConfig, reward_cfg=None) -> tuple[ScriptedPolicy, float, tuple[int, int]]:
    """Brute-force the best single compound-legal stop at constant allocations.

    Returns (policy, race time, (pit lap, pit code)). This is the oracle the
    trained backbone must beat.
    """
    from .config import RewardConfig
    from .env import SoloEnv

    rc = reward_cfg or RewardConfig()
    best_t = float("inf")
    best = None
    for code in (1, 3):  # soft or hard: a legal stop must change compound
        for lap in range(1, cfg.n_laps):
            env = SoloEnv(cfg, rc)
            env.reset(0)
            pol = ScriptedPolicy(cfg, stops={lap: code})
            obs = np.zeros(10)
            obs[9] = cfg.n_laps
            for k in range(cfg.n_laps):
                env.step(pol.act(obs, obs))
                obs[9] = cfg.n_laps - (k + 1)
            if env.car.b_cpd and env.car.t_race < best_t:
                best_t = env.car.t_race
                best = (lap, code)
    return ScriptedPolicy(cfg, stops={best[0]: best[1]}), best_t, best
