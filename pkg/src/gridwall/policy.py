"""Race agent: frozen backbone plus trainable interaction correction.

The backbone maps the ego observation to a nominal action in [-1, 1]^3; the
interaction module maps (ego, opponent) observations to a bounded additive
correction. The sum is clipped and affinely decoded into physical units at
the environment boundary.

Policies are float32 end to end so that checkpoints (raw little-endian
float32 blocks) round-trip bit-exactly. Observation normalization constants
are derived from the track's physical ranges at creation time and frozen
into the checkpoint, never recomputed from data.
"""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RewardConfig, TrackConfig, track_config_hash
from .env import ACTION_DIM, EGO_OBS_DIM, OPP_OBS_DIM
from .nets import Mlp
from .track import Action, decode_pit

FORMAT_VERSION = 1
CHECKPOINT_SUFFIX = ".gwp"


class ContractError(ValueError):
    """An observation or action violated a declared interface contract."""


class CheckpointError(RuntimeError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointHashError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


@dataclass(frozen=True)
class ObsNorm:
    """Per-feature affine normalization: (x - offset) / scale."""

    ego_offset: np.ndarray
    ego_scale: np.ndarray
    opp_offset: np.ndarray
    opp_scale: np.ndarray

    def ego(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float32)
        if obs.shape[-1] != EGO_OBS_DIM:
            raise ContractError(f"ego observation must have {EGO_OBS_DIM} features")
        return (obs - self.ego_offset) / self.ego_scale

    def opp(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float32)
        if obs.shape[-1] != OPP_OBS_DIM:
            raise ContractError(f"opponent observation must have {OPP_OBS_DIM} features")
        return (obs - self.opp_offset) / self.opp_scale

    def ego_inverse(self, normed: np.ndarray) -> np.ndarray:
        return np.asarray(normed, dtype=np.float32) * self.ego_scale + self.ego_offset


def _range_norm(ranges: list[tuple[float, float]]) -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([r[0] for r in ranges], dtype=np.float32)
    hi = np.array([r[1] for r in ranges], dtype=np.float32)
    return (lo + hi) / 2.0, (hi - lo) / 2.0


def default_obs_norm(cfg: TrackConfig, rc: RewardConfig | None = None) -> ObsNorm:
    """Normalization from physical ranges, not running statistics."""
    t_c = rc.t_c if rc is not None else cfg.t0 + 5.0
    ego_ranges = [
        (0.0, cfg.e_b_max),
        (0.0, cfg.e_f0),
        (cfg.m_dry, cfg.m_dry + cfg.fuel_unit_mass * cfg.e_f0),
        (0.0, cfg.n_laps * t_c),
        (0.0, 1.0),
        (1.0, 3.0),
        (0.0, cfg.wear_cap),
        (0.0, 1.0),
        (cfg.t0 - 5.0, cfg.t0 + 45.0),
        (0.0, float(cfg.n_laps)),
    ]
    opp_ranges = [
        (0.0, float(cfg.n_laps)),
        (0.0, 3.0),
        (0.0, 1.0),
        (-30.0, 30.0),
    ]
    ego_off, ego_sc = _range_norm(ego_ranges)
    opp_off, opp_sc = _range_norm(opp_ranges)
    return ObsNorm(ego_off, ego_sc, opp_off, opp_sc)


@dataclass(frozen=True)
class ActionMap:
    """Affine decode from normalized [-1, 1] components to physical units."""

    fuel_lo: float
    fuel_hi: float
    batt_lo: float
    batt_hi: float

    @classmethod
    def from_config(cls, cfg: TrackConfig) -> "ActionMap":
        return cls(
            fuel_lo=cfg.fuel_alloc_range[0],
            fuel_hi=cfg.fuel_alloc_range[1],
            batt_lo=cfg.batt_alloc_range[0],
            batt_hi=cfg.batt_alloc_range[1],
        )

    def decode(self, squashed: np.ndarray) -> Action:
        s = np.clip(np.asarray(squashed, dtype=np.float64), -1.0, 1.0)
        d_ef = self.fuel_lo + (s[0] + 1.0) / 2.0 * (self.fuel_hi - self.fuel_lo)
        d_eb = self.batt_lo + (s[1] + 1.0) / 2.0 * (self.batt_hi - self.batt_lo)
        ps = decode_pit((s[2] + 1.0) / 2.0 * 3.0)
        return Action(d_ef=float(d_ef), d_eb=float(d_eb), ps=ps)


def compose(a_nom: np.ndarray, delta: np.ndarray, cfg: TrackConfig) -> Action:
    """Combine nominal action and correction, clip, and decode."""
    s = np.clip(np.asarray(a_nom, dtype=np.float64) + np.asarray(delta, dtype=np.float64), -1.0, 1.0)
    return ActionMap.from_config(cfg).decode(s)


class Policy:
    """Backbone + interaction module with frozen normalization constants."""

    def __init__(
        self,
        backbone: Mlp,
        interaction: Mlp,
        norm: ObsNorm,
        action_map: ActionMap,
        config_hash: str,
        delta_bound: float = 1.0,
        elo: float | None = None,
        meta: dict | None = None,
    ):
        self.backbone = backbone
        self.interaction = interaction
        self.norm = norm
        self.action_map = action_map
        self.config_hash = config_hash
        self.delta_bound = float(delta_bound)
        self.elo = elo
        self.meta = dict(meta or {})

    # ---- forward passes -------------------------------------------------

    def backbone_forward(self, obs: np.ndarray) -> np.ndarray:
        """Deterministic nominal action in [-1, 1]^3 (squashed mean)."""
        x = self.norm.ego(obs)
        out = self.backbone.forward(x)
        return np.tanh(out[..., :ACTION_DIM])

    def interaction_forward(self, obs: np.ndarray, opp_obs: np.ndarray) -> np.ndarray:
        """Deterministic correction in [-delta_bound, delta_bound]^3."""
        x = np.concatenate([self.norm.ego(obs), self.norm.opp(opp_obs)], axis=-1)
        out = self.interaction.forward(x)
        return self.delta_bound * np.tanh(out[..., :ACTION_DIM])

    def act(self, obs: np.ndarray, opp_obs: np.ndarray) -> Action:
        """Full composed deterministic action, decoded to physical units."""
        a_nom = self.backbone_forward(obs)
        delta = self.interaction_forward(obs, opp_obs)
        s = np.clip(a_nom.astype(np.float64) + delta.astype(np.float64), -1.0, 1.0)
        return self.action_map.decode(s)

    def act_backbone_only(self, obs: np.ndarray) -> Action:
        return self.action_map.decode(self.backbone_forward(obs).astype(np.float64))

    # ---- hashes ----------------------------------------------------------

    def backbone_hash(self) -> str:
        h = hashlib.sha256()
        for arr in self.backbone.param_arrays():
            h.update(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        return h.hexdigest()

    def param_hash(self) -> str:
        h = hashlib.sha256()
        for arr in self.backbone.param_arrays() + self.interaction.param_arrays():
            h.update(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        return h.hexdigest()

    def copy(self) -> "Policy":
        return Policy(
            backbone=self.backbone.copy(),
            interaction=self.interaction.copy(),
            norm=self.norm,
            action_map=self.action_map,
            config_hash=self.config_hash,
            delta_bound=self.delta_bound,
            elo=self.elo,
            meta=dict(self.meta),
        )


def new_policy(
    cfg: TrackConfig,
    rc: RewardConfig | None = None,
    seed: int = 0,
    hidden: tuple[int, int] = (64, 64),
    delta_bound: float = 1.0,
    meta: dict | None = None,
) -> Policy:
    """Fresh policy: random backbone, zero-initialized interaction module.

    Networks output 2 * ACTION_DIM values: squashed means for the first
    three, pre-clamp log-stds for the rest (used only during training).
    """
    rng = np.random.default_rng(seed)
    backbone = Mlp([EGO_OBS_DIM, *hidden, 2 * ACTION_DIM], rng=rng, dtype=np.float32)
    interaction = Mlp(
        [EGO_OBS_DIM + OPP_OBS_DIM, *hidden, 2 * ACTION_DIM],
        rng=rng,
        zero_final=True,
        dtype=np.float32,
    )
    return Policy(
        backbone=backbone,
        interaction=interaction,
        norm=default_obs_norm(cfg, rc),
        action_map=ActionMap.from_config(cfg),
        config_hash=track_config_hash(cfg),
        delta_bound=delta_bound,
        meta=meta,
    )


# ---- checkpoint serialization -------------------------------------------
#
# Layout: 8-byte little-endian header length, UTF-8 JSON header, then a raw
# little-endian float32 parameter block. The header lists every array with
# its byte offset into the block.


def _net_arrays(prefix: str, net: Mlp) -> list[tuple[str, np.ndarray]]:
    out = []
    for li, (w, b) in enumerate(zip(net.weights, net.biases)):
        out.append((f"{prefix}.w{li}", w))
        out.append((f"{prefix}.b{li}", b))
    return out


def save_checkpoint(policy: Policy, path: str | Path) -> None:
    arrays = _net_arrays("backbone", policy.backbone) + _net_arrays(
        "interaction", policy.interaction
    )
    entries = []
    blocks = []
    offset = 0
    for name, arr in arrays:
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append(
            {"name": name, "shape": list(arr.shape), "dtype": "<f4", "offset": offset, "nbytes": len(data)}
        )
        blocks.append(data)
        offset += len(data)

    header = {
        "format_version": FORMAT_VERSION,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "track_config_hash": policy.config_hash,
        "elo": policy.elo,
        "meta": policy.meta,
        "delta_bound": policy.delta_bound,
        "backbone": {"sizes": policy.backbone.sizes, "activations": policy.backbone.activations},
        "interaction": {"sizes": policy.interaction.sizes, "activations": policy.interaction.activations},
        "action_map": {
            "fuel_lo": policy.action_map.fuel_lo,
            "fuel_hi": policy.action_map.fuel_hi,
            "batt_lo": policy.action_map.batt_lo,
            "batt_hi": policy.action_map.batt_hi,
        },
        "normalization": {
            "ego_offset": policy.norm.ego_offset.tolist(),
            "ego_scale": policy.norm.ego_scale.tolist(),
            "opp_offset": policy.norm.opp_offset.tolist(),
            "opp_scale": policy.norm.opp_scale.tolist(),
        },
        "arrays": entries,
        "param_block_bytes": offset,
    }
    header_bytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for data in blocks:
            fh.write(data)


def _rebuild_net(spec: dict, named: dict[str, np.ndarray], prefix: str) -> Mlp:
    net = Mlp(spec["sizes"], dtype=np.float32, activations=spec["activations"])
    for li in range(len(net.weights)):
        w = named[f"{prefix}.w{li}"]
        b = named[f"{prefix}.b{li}"]
        if w.shape != net.weights[li].shape or b.shape != net.biases[li].shape:
            raise CheckpointError(f"array shape mismatch for {prefix} layer {li}")
        net.weights[li][...] = w
        net.biases[li][...] = b
    return net


def load_checkpoint(path: str | Path, expected_config_hash: str | None = None) -> Policy:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise CheckpointTruncatedError(f"{path}: file shorter than length prefix")
    (header_len,) = struct.unpack("<Q", raw[:8])
    if 8 + header_len > len(raw):
        raise CheckpointTruncatedError(f"{path}: declared header exceeds file size")
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version!r}, expected {FORMAT_VERSION}"
        )
    if expected_config_hash is not None and header["track_config_hash"] != expected_config_hash:
        raise CheckpointHashError(
            f"{path}: track-config hash mismatch "
            f"({header['track_config_hash'][:12]}… vs expected {expected_config_hash[:12]}…)"
        )

    block = raw[8 + header_len :]
    if len(block) < header["param_block_bytes"]:
        raise CheckpointTruncatedError(
            f"{path}: parameter block truncated "
            f"({len(block)} of {header['param_block_bytes']} bytes)"
        )
    named: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        start, n = entry["offset"], entry["nbytes"]
        if start + n > len(block):
            raise CheckpointTruncatedError(f"{path}: array {entry['name']} out of bounds")
        named[entry["name"]] = np.frombuffer(
            block[start : start + n], dtype="<f4"
        ).reshape(entry["shape"]).copy()

    norm_doc = header["normalization"]
    norm = ObsNorm(
        ego_offset=np.array(norm_doc["ego_offset"], dtype=np.float32),
        ego_scale=np.array(norm_doc["ego_scale"], dtype=np.float32),
        opp_offset=np.array(norm_doc["opp_offset"], dtype=np.float32),
        opp_scale=np.array(norm_doc["opp_scale"], dtype=np.float32),
    )
    am = header["action_map"]
    return Policy(
        backbone=_rebuild_net(header["backbone"], named, "backbone"),
        interaction=_rebuild_net(header["interaction"], named, "interaction"),
        norm=norm,
        action_map=ActionMap(am["fuel_lo"], am["fuel_hi"], am["batt_lo"], am["batt_hi"]),
        config_hash=header["track_config_hash"],
        delta_bound=header["delta_bound"],
        elo=header.get("elo"),
        meta=header.get("meta") or {},
    )
