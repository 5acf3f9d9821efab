"""Single-car physical model: lap-time map, tire penalty, pit decoding.

All operations are pure functions of (state, action, config); CarState is
frozen and advanced by constructing a new instance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .config import CODE_COMPOUND, COMPOUND_CODE, MEDIUM, TrackConfig

NO_PIT = 0
PIT_SOFT = 1
PIT_MEDIUM = 2
PIT_HARD = 3
PIT_DECISIONS = (NO_PIT, PIT_SOFT, PIT_MEDIUM, PIT_HARD)


class InvalidActionError(ValueError):
    """Raised when an action component cannot be interpreted at all."""


class DomainError(ValueError):
    """Raised when a model input is outside its physical domain."""


@dataclass(frozen=True)
class CarState:
    """Per-car race state.

    m_car always equals m_dry + fuel_unit_mass * e_f; the constructor does
    not enforce it but `fresh_car` and `advance_car` preserve the identity.
    """

    e_b: float          # normalized battery energy in [0, e_b_max]
    e_f: float          # remaining fuel units, >= 0
    m_car: float        # kg
    t_race: float       # s elapsed
    b_cpd: bool         # two distinct compounds raced (monotone)
    tc: str             # current compound
    tw: float           # wear fraction in [0, wear_cap]
    b_outlap: bool      # previous lap exited the pits
    ta: int             # laps since the current set was fitted


@dataclass(frozen=True)
class Action:
    """Pit wall decision for one lap.

    d_ef: fuel units allocated; d_eb: signed battery allocation (negative
    recharges); ps: pit decision, 0 = stay out, 1/2/3 = pit for
    soft/medium/hard.
    """

    d_ef: float
    d_eb: float
    ps: int

    def __post_init__(self) -> None:
        if self.ps not in PIT_DECISIONS:
            raise InvalidActionError(f"ps must be one of {PIT_DECISIONS}, got {self.ps!r}")
        if not (math.isfinite(self.d_ef) and math.isfinite(self.d_eb)):
            raise InvalidActionError("allocations must be finite")


def fresh_car(cfg: TrackConfig, compound: str = MEDIUM) -> CarState:
    """Grid state: full tank, full battery, new tires of `compound`."""
    return CarState(
        e_b=cfg.e_b_max,
        e_f=cfg.e_f0,
        m_car=cfg.m_dry + cfg.fuel_unit_mass * cfg.e_f0,
        t_race=0.0,
        b_cpd=False,
        tc=compound,
        tw=0.0,
        b_outlap=False,
        ta=0,
    )


def decode_pit(ps_raw: float) -> int:
    """Map a continuous pit signal to a decision code.

    Clips to [0, 3] then rounds to the nearest integer, ties at .5 rounding
    up, so the function is total on finite reals and idempotent on codes.
    """
    if not math.isfinite(ps_raw):
        raise InvalidActionError(f"pit signal must be finite, got {ps_raw!r}")
    clipped = min(max(float(ps_raw), 0.0), 3.0)
    return int(math.floor(clipped + 0.5))


def tire_time_penalty(compound: str, tw: float, cfg: TrackConfig) -> float:
    """Additional lap time from the compound offset and accumulated wear."""
    if not 0.0 <= tw <= cfg.wear_cap:
        raise DomainError(f"tire wear {tw} outside [0, {cfg.wear_cap}]")
    p = cfg.compounds[compound]
    return p.base_offset + p.alpha * tw + p.beta * tw * tw


def wear_increment(compound: str, cfg: TrackConfig) -> float:
    """Wear added by one racing lap; the caller caps total wear at wear_cap."""
    return cfg.compounds[compound].wear_rate


def nominal_lap_time(state: CarState, action: Action, cfg: TrackConfig) -> float:
    """Affine lap-time map before tire and interaction terms.

    Assumes the action is already clipped to feasible ranges. Lighter cars,
    battery deployment and extra fuel allocation are faster; entering the
    pits this lap and exiting them (outlap) are slower.
    """
    t = (
        cfg.t0
        + cfg.k_mass * (state.m_car - cfg.m_dry)
        - cfg.k_batt * action.d_eb
        - cfg.k_fuel * (action.d_ef - 1.0)
    )
    if action.ps != NO_PIT:
        t += cfg.t_pit_in
    if state.b_outlap:
        t += cfg.t_pit_out
    return t


def compound_code(compound: str) -> int:
    return COMPOUND_CODE[compound]


def compound_from_code(code: int) -> str:
    return CODE_COMPOUND[code]
