"""Episodic two-car race environment.

One step advances both cars by one lap. The trained side (car 1) supplies
its action; the embedded opponent (car i) is queried on its own views of
the race. Both lap times are computed from the pre-step gaps, then the gaps
are updated once, so neither car is privileged.

Observation split: each agent sees its own full car state (ego observation,
10 numbers) but only public information about the other car (opponent
observation, 4 numbers: tire age, last pit decision, compound-rule flag,
and that car's gap time). Battery, fuel and wear of the opponent are never
exposed.

Trace rows record one line per car per lap. The t_gap column is the gap
after the lap completed; dt_int is the slipstream penalty that was applied
during the lap (computed from the pre-lap gap).
"""
from __future__ import annotations

import io
from dataclasses import dataclass, replace
from typing import Iterable, Protocol

import numpy as np

from .config import RewardConfig, TrackConfig
from .duel import DuelState, interaction_penalty, update_gaps
from .track import (
    NO_PIT,
    Action,
    CarState,
    compound_code,
    compound_from_code,
    fresh_car,
    nominal_lap_time,
    tire_time_penalty,
    wear_increment,
)

EGO_OBS_DIM = 10
OPP_OBS_DIM = 4
ACTION_DIM = 3
STATE_DIM = 18

TRACE_COLUMNS = (
    "lap",
    "car",
    "e_b",
    "e_f",
    "m_car",
    "tc",
    "tw",
    "ta",
    "ps",
    "d_ef_realized",
    "d_eb_realized",
    "t_lap",
    "t_race",
    "t_gap",
    "dt_int",
    "clipped_flags",
)


class ProtocolError(RuntimeError):
    """Raised when the episode protocol is violated (e.g. stepping after done)."""


class PitWallPolicy(Protocol):
    """Anything that can race: maps (ego view, opponent view) to an action."""

    def act(self, obs: np.ndarray, opp_obs: np.ndarray) -> Action: ...


@dataclass(frozen=True)
class LapResult:
    """Outcome of advancing one car one lap, including realized allocations."""

    state: CarState
    t_lap: float
    d_ef: float
    d_eb: float
    ps: int
    clipped_fuel: bool
    clipped_batt: bool


def advance_car(state: CarState, action: Action, dt_int: float, cfg: TrackConfig) -> LapResult:
    """Advance a single car by one lap.

    Allocations are clipped to their configured ranges and to the remaining
    energy; a pit decision fits the new set for the *next* lap (this lap is
    driven, and charged wear penalty, on the outgoing tires).
    """
    fa_lo, fa_hi = cfg.fuel_alloc_range
    d_ef = min(max(action.d_ef, fa_lo), fa_hi)
    d_ef_feasible = min(d_ef, state.e_f)
    clipped_fuel = (d_ef_feasible != action.d_ef)
    d_ef = max(d_ef_feasible, 0.0)

    ba_lo, ba_hi = cfg.batt_alloc_range
    d_eb = min(max(action.d_eb, ba_lo), ba_hi)
    # deployment drains the battery; recharge (negative) may not overfill it
    d_eb = min(max(d_eb, state.e_b - cfg.e_b_max), state.e_b)
    clipped_batt = (d_eb != action.d_eb)

    realized = Action(d_ef=d_ef, d_eb=d_eb, ps=action.ps)
    t_lap = (
        nominal_lap_time(state, realized, cfg)
        + tire_time_penalty(state.tc, state.tw, cfg)
        + dt_int
    )

    e_f = max(state.e_f - d_ef, 0.0)
    e_b = min(max(state.e_b - d_eb, 0.0), cfg.e_b_max)

    if realized.ps != NO_PIT:
        tc = compound_from_code(realized.ps)
        tw = 0.0
        ta = 0
        b_cpd = state.b_cpd or (tc != state.tc)
    else:
        tc = state.tc
        tw = min(state.tw + wear_increment(state.tc, cfg), cfg.wear_cap)
        ta = state.ta + 1
        b_cpd = state.b_cpd

    new_state = replace(
        state,
        e_b=e_b,
        e_f=e_f,
        m_car=cfg.m_dry + cfg.fuel_unit_mass * e_f,
        t_race=state.t_race + t_lap,
        b_cpd=b_cpd,
        tc=tc,
        tw=tw,
        b_outlap=(realized.ps != NO_PIT),
        ta=ta,
    )
    return LapResult(
        state=new_state,
        t_lap=t_lap,
        d_ef=d_ef,
        d_eb=d_eb,
        ps=realized.ps,
        clipped_fuel=clipped_fuel,
        clipped_batt=clipped_batt,
    )


def ego_observation(car: CarState, t_lap_prev: float, laps_remaining: int) -> np.ndarray:
    """Full own-car view: the 8 state components, last lap time, laps left."""
    return np.array(
        [
            car.e_b,
            car.e_f,
            car.m_car,
            car.t_race,
            1.0 if car.b_cpd else 0.0,
            float(compound_code(car.tc)),
            car.tw,
            1.0 if car.b_outlap else 0.0,
            t_lap_prev,
            float(laps_remaining),
        ],
        dtype=np.float64,
    )


def opponent_observation(car: CarState, ps_prev: int, gap: float) -> np.ndarray:
    """Public view of a competitor: tire age, last pit call, compound flag, gap.

    `gap` is that car's own gap time (positive = it is behind).
    """
    return np.array(
        [float(car.ta), float(ps_prev), 1.0 if car.b_cpd else 0.0, gap],
        dtype=np.float64,
    )


def step_reward(t_lap: float, rc: RewardConfig) -> float:
    return rc.t_c - t_lap


def final_reward(final_gap_1: float, b_cpd: bool, rc: RewardConfig) -> float:
    r = rc.c_win if final_gap_1 < 0.0 else 0.0
    if not b_cpd:
        r -= rc.c_reg
    return r


@dataclass
class TraceRow:
    lap: int
    car: int
    e_b: float
    e_f: float
    m_car: float
    tc: int
    tw: float
    ta: int
    ps: int
    d_ef_realized: float
    d_eb_realized: float
    t_lap: float
    t_race: float
    t_gap: float
    dt_int: float
    clipped_flags: str


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def trace_to_csv(rows: Iterable[TraceRow]) -> str:
    """Fixed column order; floats at 9 significant digits for exact replay."""
    out = io.StringIO()
    out.write(",".join(TRACE_COLUMNS) + "\n")
    for r in rows:
        out.write(
            ",".join(
                (
                    str(r.lap),
                    str(r.car),
                    _fmt(r.e_b),
                    _fmt(r.e_f),
                    _fmt(r.m_car),
                    str(r.tc),
                    _fmt(r.tw),
                    str(r.ta),
                    str(r.ps),
                    _fmt(r.d_ef_realized),
                    _fmt(r.d_eb_realized),
                    _fmt(r.t_lap),
                    _fmt(r.t_race),
                    _fmt(r.t_gap),
                    _fmt(r.dt_int),
                    r.clipped_flags,
                )
            )
            + "\n"
        )
    return out.getvalue()


def _clip_flags(res: LapResult) -> str:
    flags = ""
    if res.clipped_fuel:
        flags += "f"
    if res.clipped_batt:
        flags += "b"
    return flags


@dataclass
class EpisodeState:
    k: int
    car_1: CarState
    car_i: CarState
    duel: DuelState
    t_lap_prev_1: float
    t_lap_prev_i: float
    ps_prev_1: int
    ps_prev_i: int
    done: bool


class RaceEnv:
    """Two-car episodic environment with an embedded opponent policy."""

    def __init__(
        self,
        cfg: TrackConfig,
        reward_cfg: RewardConfig,
        opponent: PitWallPolicy,
        gap_interval: tuple[float, float] = (-2.0, 2.0),
    ):
        self.cfg = cfg
        self.reward_cfg = reward_cfg
        self.opponent = opponent
        self.gap_interval = gap_interval
        self.state: EpisodeState | None = None
        self.trace: list[TraceRow] = []

    def reset(
        self, seed: int, init_gap: float | str = "sample"
    ) -> tuple[np.ndarray, np.ndarray]:
        """Start a new race; both cars on fresh mediums with full tanks.

        init_gap is car 1's starting gap (positive = behind); "sample" draws
        it uniformly from the configured interval using the seed.
        """
        if init_gap == "sample":
            rng = np.random.default_rng(seed)
            gap = float(rng.uniform(*self.gap_interval))
        else:
            gap = float(init_gap)
        self.state = EpisodeState(
            k=0,
            car_1=fresh_car(self.cfg),
            car_i=fresh_car(self.cfg),
            duel=DuelState(gap_1=gap, gap_i=-gap),
            t_lap_prev_1=0.0,
            t_lap_prev_i=0.0,
            ps_prev_1=NO_PIT,
            ps_prev_i=NO_PIT,
            done=False,
        )
        self.trace = []
        return self._obs_1(), self._opp_obs_of_i()

    def _obs_1(self) -> np.ndarray:
        es = self.state
        return ego_observation(es.car_1, es.t_lap_prev_1, self.cfg.n_laps - es.k)

    def _obs_i(self) -> np.ndarray:
        es = self.state
        return ego_observation(es.car_i, es.t_lap_prev_i, self.cfg.n_laps - es.k)

    def _opp_obs_of_i(self) -> np.ndarray:
        es = self.state
        return opponent_observation(es.car_i, es.ps_prev_i, es.duel.gap_i)

    def _opp_obs_of_1(self) -> np.ndarray:
        es = self.state
        return opponent_observation(es.car_1, es.ps_prev_1, es.duel.gap_1)

    def state_vector(self) -> np.ndarray:
        """Flat 18-vector: (car 1 state, gap 1, car i state, gap i)."""
        es = self.state
        s1 = ego_observation(es.car_1, 0.0, 0)[:8]
        si = ego_observation(es.car_i, 0.0, 0)[:8]
        return np.concatenate([s1, [es.duel.gap_1], si, [es.duel.gap_i]])

    def step(
        self, action_1: Action
    ) -> tuple[np.ndarray, np.ndarray, float, bool, dict]:
        es = self.state
        if es is None or es.done:
            raise ProtocolError("step() called on a terminal or unreset episode")

        action_i = self.opponent.act(self._obs_i(), self._opp_obs_of_1())

        dt_1 = interaction_penalty(es.duel.gap_1, self.cfg)
        dt_i = interaction_penalty(es.duel.gap_i, self.cfg)

        res_1 = advance_car(es.car_1, action_1, dt_1, self.cfg)
        res_i = advance_car(es.car_i, action_i, dt_i, self.cfg)
        duel = update_gaps(es.duel, res_1.t_lap, res_i.t_lap)

        es.k += 1
        es.car_1 = res_1.state
        es.car_i = res_i.state
        es.duel = duel
        es.t_lap_prev_1 = res_1.t_lap
        es.t_lap_prev_i = res_i.t_lap
        es.ps_prev_1 = res_1.ps
        es.ps_prev_i = res_i.ps
        es.done = es.k >= self.cfg.n_laps

        for car_idx, res, gap, dt in (
            (1, res_1, duel.gap_1, dt_1),
            (2, res_i, duel.gap_i, dt_i),
        ):
            self.trace.append(
                TraceRow(
                    lap=es.k,
                    car=car_idx,
                    e_b=res.state.e_b,
                    e_f=res.state.e_f,
                    m_car=res.state.m_car,
                    tc=compound_code(res.state.tc),
                    tw=res.state.tw,
                    ta=res.state.ta,
                    ps=res.ps,
                    d_ef_realized=res.d_ef,
                    d_eb_realized=res.d_eb,
                    t_lap=res.t_lap,
                    t_race=res.state.t_race,
                    t_gap=gap,
                    dt_int=dt,
                    clipped_flags=_clip_flags(res),
                )
            )

        reward = step_reward(res_1.t_lap, self.reward_cfg)
        if es.done:
            reward += final_reward(duel.gap_1, res_1.state.b_cpd, self.reward_cfg)

        info = {"lap_1": res_1, "lap_i": res_i, "dt_1": dt_1, "dt_i": dt_i}
        return self._obs_1(), self._opp_obs_of_i(), reward, es.done, info


class SoloEnv:
    """Single-car variant used for backbone pretraining: no opponent, no wake."""

    def __init__(self, cfg: TrackConfig, reward_cfg: RewardConfig):
        self.cfg = cfg
        self.reward_cfg = reward_cfg
        self.car: CarState | None = None
        self.k = 0
        self.t_lap_prev = 0.0
        self.done = False

    def reset(self, seed: int = 0) -> np.ndarray:
        self.car = fresh_car(self.cfg)
        self.k = 0
        self.t_lap_prev = 0.0
        self.done = False
        return ego_observation(self.car, 0.0, self.cfg.n_laps)

    def step(self, action: Action) -> tuple[np.ndarray, float, bool, LapResult]:
        if self.done:
            raise ProtocolError("step() called on a terminal episode")
        res = advance_car(self.car, action, 0.0, self.cfg)
        self.car = res.state
        self.k += 1
        self.t_lap_prev = res.t_lap
        self.done = self.k >= self.cfg.n_laps
        reward = step_reward(res.t_lap, self.reward_cfg)
        if self.done:
            # no opponent: the terminal term is the compound-rule penalty only
            reward += final_reward(0.0, self.car.b_cpd, self.reward_cfg)
        obs = ego_observation(self.car, self.t_lap_prev, self.cfg.n_laps - self.k)
        return obs, reward, self.done, res
