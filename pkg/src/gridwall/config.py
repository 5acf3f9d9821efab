"""Track and reward configuration.

Every model constant lives in TrackConfig so a race is fully described by one
JSON document. Instances are frozen after construction; all downstream code
treats them as immutable.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

SOFT = "soft"
MEDIUM = "medium"
HARD = "hard"
COMPOUNDS = (SOFT, MEDIUM, HARD)

# Observation encoding for compounds, aligned with the pit-decision codes
# (1 = fit soft, 2 = fit medium, 3 = fit hard).
COMPOUND_CODE = {SOFT: 1, MEDIUM: 2, HARD: 3}
CODE_COMPOUND = {v: k for k, v in COMPOUND_CODE.items()}


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration documents."""


@dataclass(frozen=True)
class CompoundParams:
    """Per-compound lap-time and wear characteristics."""

    base_offset: float   # s, penalty of a fresh set relative to fresh soft
    alpha: float         # s per unit wear (linear term)
    beta: float          # s per unit wear squared (quadratic term)
    wear_rate: float     # wear fraction accumulated per racing lap


@dataclass(frozen=True)
class InteractionParams:
    """Piecewise-linear slipstream penalty: a * gap + b inside [gap_lo, gap_hi]."""

    a: float = -0.4      # s per second of gap, negative
    b: float = 0.6       # s
    gap_lo: float = 0.2  # s
    gap_hi: float = 1.5  # s


@dataclass(frozen=True)
class TrackConfig:
    """All physical constants of the single-track race model.

    Defaults describe a Bahrain-like 57-lap race: ~90 minutes at the
    reference lap time, ~100 kg of start fuel, ~22 s total pit loss, and a
    slipstream window in which following costs lap time.
    """

    n_laps: int = 57
    t0: float = 95.0            # s, base lap time at reference state
    k_mass: float = 0.033       # s per kg above dry mass
    k_batt: float = 0.4         # s per unit of battery deployment
    k_fuel: float = 1.2         # s per fuel unit allocated above nominal
    m_dry: float = 800.0        # kg
    fuel_unit_mass: float = 1.754  # kg per fuel unit
    e_f0: float = 57.0          # fuel units at the start (1 unit = nominal lap)
    fuel_alloc_range: tuple[float, float] = (0.85, 1.15)
    e_b_max: float = 1.0
    batt_alloc_range: tuple[float, float] = (-1.0, 1.0)
    compounds: dict[str, CompoundParams] = field(
        default_factory=lambda: {
            SOFT: CompoundParams(base_offset=0.0, alpha=2.5, beta=3.0, wear_rate=0.045),
            MEDIUM: CompoundParams(base_offset=0.4, alpha=2.9, beta=3.1, wear_rate=0.032),
            HARD: CompoundParams(base_offset=1.4, alpha=2.4, beta=3.0, wear_rate=0.022),
        }
    )
    t_pit_in: float = 18.0      # s added on the pit lap
    t_pit_out: float = 4.0      # s added on the outlap
    interaction: InteractionParams = field(default_factory=InteractionParams)
    wear_cap: float = 1.5

    def __post_init__(self) -> None:
        if self.n_laps <= 0:
            raise ConfigError("n_laps must be positive")
        if self.t0 <= 0:
            raise ConfigError("t0 must be positive")
        if self.interaction.a >= 0:
            raise ConfigError("interaction coefficient a must be negative")
        if not self.interaction.gap_lo < self.interaction.gap_hi:
            raise ConfigError("interaction window must satisfy gap_lo < gap_hi")
        if not self.fuel_alloc_range[0] < self.fuel_alloc_range[1]:
            raise ConfigError("fuel_alloc_range must be a nonempty interval")
        if not self.batt_alloc_range[0] < self.batt_alloc_range[1]:
            raise ConfigError("batt_alloc_range must be a nonempty interval")
        if set(self.compounds) != set(COMPOUNDS):
            raise ConfigError(f"compounds must be exactly {COMPOUNDS}")
        cs, cm, ch = (self.compounds[c] for c in COMPOUNDS)
        if not (cs.wear_rate > cm.wear_rate > ch.wear_rate > 0):
            raise ConfigError("wear rates must satisfy soft > medium > hard > 0")
        if not (cs.base_offset < cm.base_offset < ch.base_offset):
            raise ConfigError("base offsets must satisfy soft < medium < hard")
        if self.wear_cap <= 0:
            raise ConfigError("wear_cap must be positive")


@dataclass(frozen=True)
class RewardConfig:
    """Reward shaping constants.

    t_c offsets lap times so per-lap rewards stay near zero; c_win is the
    terminal winner bonus, roughly one order of magnitude below the
    cumulative race reward; c_reg penalizes ending the race without having
    used two distinct compounds. gamma is fixed at 1 (finite horizon).
    """

    t_c: float = 100.0
    c_win: float = 30.0
    c_reg: float = 50.0
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.c_win <= 0:
            raise ConfigError("c_win must be positive")
        if self.gamma != 1.0:
            raise ConfigError("gamma is fixed at 1 for the finite-horizon race")


def _to_jsonable(cfg: TrackConfig) -> dict:
    doc = asdict(cfg)
    doc["fuel_alloc_range"] = list(cfg.fuel_alloc_range)
    doc["batt_alloc_range"] = list(cfg.batt_alloc_range)
    return doc


def track_config_to_json(cfg: TrackConfig, indent: int = 2) -> str:
    """Serialize field-for-field; stable key order for hashing and diffing."""
    return json.dumps(_to_jsonable(cfg), indent=indent, sort_keys=True)


def _check_keys(doc: dict, allowed: set[str], where: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def track_config_from_dict(doc: dict) -> TrackConfig:
    """Strict parser: every key must be a TrackConfig field, no extras."""
    allowed = set(TrackConfig.__dataclass_fields__)
    _check_keys(doc, allowed, "track config")
    kwargs = dict(doc)
    if "fuel_alloc_range" in kwargs:
        lo, hi = kwargs["fuel_alloc_range"]
        kwargs["fuel_alloc_range"] = (float(lo), float(hi))
    if "batt_alloc_range" in kwargs:
        lo, hi = kwargs["batt_alloc_range"]
        kwargs["batt_alloc_range"] = (float(lo), float(hi))
    if "compounds" in kwargs:
        compounds = {}
        for name, sub in kwargs["compounds"].items():
            if name not in COMPOUNDS:
                raise ConfigError(f"unknown compound {name!r}")
            _check_keys(sub, set(CompoundParams.__dataclass_fields__), f"compound {name}")
            compounds[name] = CompoundParams(**sub)
        kwargs["compounds"] = compounds
    if "interaction" in kwargs:
        sub = kwargs["interaction"]
        _check_keys(sub, set(InteractionParams.__dataclass_fields__), "interaction")
        kwargs["interaction"] = InteractionParams(**sub)
    return TrackConfig(**kwargs)


def load_track_config(path: str | Path) -> TrackConfig:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError("track config document must be a JSON object")
    return track_config_from_dict(doc)


def save_track_config(cfg: TrackConfig, path: str | Path) -> None:
    Path(path).write_text(track_config_to_json(cfg) + "\n", encoding="utf-8")


def track_config_hash(cfg: TrackConfig) -> str:
    """Canonical sha256 of the config; checkpoints and matches pin this."""
    canon = json.dumps(_to_jsonable(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
