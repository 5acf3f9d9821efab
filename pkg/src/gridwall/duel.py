"""Two-car coupling: slipstream lap-time penalty and gap-time evolution.

Gap convention: a positive gap means that car is behind the other one. When
the two gaps are initialized as exact negations of each other the update
rule preserves that antisymmetry bit-exactly, because IEEE addition is
sign-symmetric.
"""
from __future__ import annotations

from dataclasses import dataclass

from .config import TrackConfig


@dataclass(frozen=True)
class DuelState:
    gap_1: float  # car 1's gap to car i, s; positive = car 1 behind
    gap_i: float  # car i's gap to car 1, s


def interaction_penalty(t_gap: float, cfg: TrackConfig) -> float:
    """Lap-time cost of running in the leader's wake.

    Linear in the gap inside [gap_lo, gap_hi], zero elsewhere; with the
    default coefficients the penalty fades to zero at the window's far edge
    and jumps at the near edge (the car ahead is never affected).
    """
    p = cfg.interaction
    if p.gap_lo <= t_gap <= p.gap_hi:
        return p.a * t_gap + p.b
    return 0.0


def update_gaps(d: DuelState, t_lap_1: float, t_lap_i: float) -> DuelState:
    """Advance both gaps by the lap-time difference (zero-sum)."""
    return DuelState(
        gap_1=d.gap_1 + (t_lap_1 - t_lap_i),
        gap_i=d.gap_i + (t_lap_i - t_lap_1),
    )
