"""HTTP + WebSocket console: matches, live human-vs-agent duels,
recommendations and the leaderboard.

All responses are deterministic functions of (seed, submitted actions).
Duels are exhibition-only: nothing here mutates arena ratings. The human's
raw action values pass through exactly the same clipping as policy actions,
so both sides play by identical rules.
"""
from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from pydantic import BaseModel, Field

from .arena import EloTable, MatchResult, play_match
from .config import RewardConfig, TrackConfig, track_config_hash
from .duel import interaction_penalty
from .env import (
    EGO_OBS_DIM,
    OPP_OBS_DIM,
    RaceEnv,
    ego_observation,
    trace_to_csv,
)
from .policy import Policy, load_checkpoint
from .track import (
    Action,
    CarState,
    InvalidActionError,
    decode_pit,
    nominal_lap_time,
    tire_time_penalty,
)
from .config import COMPOUND_CODE


class MatchRequest(BaseModel):
    agentA: str
    agentB: str
    seed: int = 0
    gap: float = 0.5


class DuelRequest(BaseModel):
    agent: str
    human_side: str = Field(default="1", pattern="^(1|i)$")
    gap: float = 0.5
    seed: int = 0


class ActionRequest(BaseModel):
    d_ef: float
    d_eb: float
    ps: int


class RecommendRequest(BaseModel):
    ego: list[float]
    opponent: list[float]
    agent: str


@dataclass
class DuelSession:
    session_id: str
    env: RaceEnv
    agent_id: str
    human_side: str
    seed: int
    init_gap: float
    obs: np.ndarray
    opp_obs: np.ndarray
    lap_frames: list[dict] = field(default_factory=list)
    action_log: list[dict] = field(default_factory=list)
    done: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock)
    listeners: list = field(default_factory=list)


def _car_public(state: CarState, gap: float) -> dict:
    """Opponent card: only the publicly observable fields."""
    return {
        "ta": state.ta,
        "b_cpd": state.b_cpd,
        "t_gap": gap,
    }


def _car_full(state: CarState, gap: float) -> dict:
    return {
        "e_b": state.e_b,
        "e_f": state.e_f,
        "m_car": state.m_car,
        "t_race": state.t_race,
        "b_cpd": state.b_cpd,
        "tc": COMPOUND_CODE[state.tc],
        "tw": state.tw,
        "b_outlap": state.b_outlap,
        "ta": state.ta,
        "t_gap": gap,
    }


def create_app(
    agents_dir: str | Path,
    cfg: TrackConfig | None = None,
    rc: RewardConfig | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    cfg = cfg or TrackConfig()
    rc = rc or RewardConfig()
    expected_hash = track_config_hash(cfg)
    agents_dir = Path(agents_dir)

    app = FastAPI(title="gridwall console", version="1.0")
    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")
    matches: dict[str, MatchResult] = {}
    duels: dict[str, DuelSession] = {}
    policies: dict[str, Policy] = {}

    def get_policy(agent_id: str) -> Policy:
        if agent_id not in policies:
            path = agents_dir / f"{agent_id}.gwp"
            if not path.exists():
                raise HTTPException(status_code=404, detail=f"unknown agent {agent_id!r}")
            policies[agent_id] = load_checkpoint(path, expected_config_hash=expected_hash)
        return policies[agent_id]

    def list_agents() -> list[dict]:
        out = []
        for path in sorted(agents_dir.glob("*.gwp")):
            pol = get_policy(path.stem)
            out.append(
                {
                    "id": path.stem,
                    "elo": pol.elo,
                    "meta": pol.meta,
                    "config_hash": pol.config_hash,
                }
            )
        return out

    # ---- matches ---------------------------------------------------------

    @app.post("/matches")
    def create_match(req: MatchRequest):
        result = play_match(
            get_policy(req.agentA), get_policy(req.agentB),
            seed=req.seed, init_gap=req.gap, cfg=cfg, rc=rc,
            name_a=req.agentA, name_b=req.agentB,
        )
        match_id = str(uuid.uuid4())
        matches[match_id] = result
        return {"id": match_id, **result.to_dict()}

    @app.get("/matches/{match_id}")
    def get_match(match_id: str):
        if match_id not in matches:
            raise HTTPException(status_code=404, detail="unknown match id")
        return matches[match_id].to_dict()

    @app.get("/matches/{match_id}/trace")
    def get_match_trace(match_id: str):
        from fastapi.responses import PlainTextResponse

        if match_id not in matches:
            raise HTTPException(status_code=404, detail="unknown match id")
        return PlainTextResponse(
            trace_to_csv(matches[match_id].trace), media_type="text/csv"
        )

    # ---- agents / leaderboard --------------------------------------------

    @app.get("/agents")
    def agents():
        return list_agents()

    @app.get("/arena/leaderboard")
    def leaderboard():
        state_path = agents_dir / "arena.json"
        if state_path.exists():
            table = EloTable.load(state_path)
        else:
            table = EloTable()
            for entry in list_agents():
                table.ensure(entry["id"])
        return {
            "ranking": [
                {"rank": i + 1, "agent": name, "rating": rating, "matches": table.matches[name]}
                for i, (name, rating) in enumerate(table.ranking())
            ]
        }

    # ---- duels -------------------------------------------------------------

    def _lap_frame(sess: DuelSession, info: dict, reward: float, done: bool) -> dict:
        es = sess.env.state
        return {
            "lap": es.k,
            "done": done,
            "reward": reward,
            "human": _car_full(es.car_1, es.duel.gap_1),
            "agent": _car_public(es.car_i, es.duel.gap_i),
            "agent_last_ps": es.ps_prev_i,
            "human_lap": {
                "t_lap": info["lap_1"].t_lap,
                "d_ef": info["lap_1"].d_ef,
                "d_eb": info["lap_1"].d_eb,
                "ps": info["lap_1"].ps,
                "dt_int": info["dt_1"],
                "clipped_fuel": info["lap_1"].clipped_fuel,
                "clipped_batt": info["lap_1"].clipped_batt,
            },
            "agent_lap": {
                "t_lap": info["lap_i"].t_lap,
                "ps": info["lap_i"].ps,
            },
            "gap": es.duel.gap_1,
        }

    @app.post("/duels")
    def create_duel(req: DuelRequest):
        policy = get_policy(req.agent)
        env = RaceEnv(cfg, rc, opponent=policy)
        obs, opp_obs = env.reset(seed=req.seed, init_gap=req.gap)
        session = DuelSession(
            session_id=str(uuid.uuid4()),
            env=env,
            agent_id=req.agent,
            human_side=req.human_side,
            seed=req.seed,
            init_gap=req.gap,
            obs=obs,
            opp_obs=opp_obs,
        )
        duels[session.session_id] = session
        es = env.state
        return {
            "id": session.session_id,
            "agent": req.agent,
            "human_side": req.human_side,
            "n_laps": cfg.n_laps,
            "lap": es.k,
            "human": _car_full(es.car_1, es.duel.gap_1),
            "agent_card": _car_public(es.car_i, es.duel.gap_i),
            "awaiting_action": True,
        }

    @app.post("/duels/{duel_id}/action")
    def submit_action(duel_id: str, req: ActionRequest):
        if duel_id not in duels:
            raise HTTPException(status_code=404, detail="unknown duel id")
        sess = duels[duel_id]
        if not sess.lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="action already being processed")
        try:
            if sess.done:
                raise HTTPException(status_code=409, detail="duel already finished")
            try:
                ps = decode_pit(float(req.ps))
                action = Action(d_ef=req.d_ef, d_eb=req.d_eb, ps=ps)
            except (InvalidActionError, ValueError) as exc:
                raise HTTPException(
                    status_code=422,
                    detail=[{"field": "ps" if "ps" in str(exc) or "pit" in str(exc) else "d_ef/d_eb",
                             "error": str(exc)}],
                ) from exc
            obs, opp_obs, reward, done, info = sess.env.step(action)
            sess.obs, sess.opp_obs, sess.done = obs, opp_obs, done
            sess.action_log.append({"d_ef": req.d_ef, "d_eb": req.d_eb, "ps": ps})
            frame = _lap_frame(sess, info, reward, done)
            sess.lap_frames.append(frame)
            for q in list(sess.listeners):
                q.append(frame)
            return frame
        finally:
            sess.lock.release()

    @app.get("/duels/{duel_id}/trace")
    def duel_trace(duel_id: str):
        from fastapi.responses import PlainTextResponse

        if duel_id not in duels:
            raise HTTPException(status_code=404, detail="unknown duel id")
        return PlainTextResponse(
            trace_to_csv(duels[duel_id].env.trace), media_type="text/csv"
        )

    @app.websocket("/duels/{duel_id}/stream")
    async def duel_stream(ws: WebSocket, duel_id: str):
        await ws.accept()
        if duel_id not in duels:
            await ws.close(code=4404)
            return
        sess = duels[duel_id]
        queue: list[dict] = []
        sess.listeners.append(queue)
        sent = 0
        try:
            # replay history, then push new frames as they arrive
            while True:
                while sent < len(sess.lap_frames):
                    await ws.send_text(json.dumps(sess.lap_frames[sent]))
                    sent += 1
                if sess.done and sent >= len(sess.lap_frames):
                    break
                import asyncio

                await asyncio.sleep(0.02)
            await ws.close()
        except WebSocketDisconnect:
            pass
        finally:
            if queue in sess.listeners:
                sess.listeners.remove(queue)

    # ---- recommendations -----------------------------------------------------

    @app.post("/recommend")
    def recommend(req: RecommendRequest):
        policy = get_policy(req.agent)
        if len(req.ego) != EGO_OBS_DIM:
            raise HTTPException(
                status_code=422,
                detail=[{"field": "ego", "error": f"expected {EGO_OBS_DIM} values"}],
            )
        if len(req.opponent) != OPP_OBS_DIM:
            raise HTTPException(
                status_code=422,
                detail=[{"field": "opponent", "error": f"expected {OPP_OBS_DIM} values"}],
            )
        ego = np.array(req.ego, dtype=np.float64)
        opp = np.array(req.opponent, dtype=np.float64)
        a_nom = policy.backbone_forward(ego)
        delta = policy.interaction_forward(ego, opp)
        squashed = np.clip(a_nom.astype(np.float64) + delta.astype(np.float64), -1.0, 1.0)
        action = policy.action_map.decode(squashed)

        state = _car_from_obs(ego, cfg)
        realized_def = min(max(action.d_ef, cfg.fuel_alloc_range[0]), cfg.fuel_alloc_range[1])
        realized_def = max(min(realized_def, state.e_f), 0.0)
        realized_deb = min(max(action.d_eb, cfg.batt_alloc_range[0]), cfg.batt_alloc_range[1])
        realized_deb = min(max(realized_deb, state.e_b - cfg.e_b_max), state.e_b)
        realized = Action(realized_def, realized_deb, action.ps)
        t_nom = nominal_lap_time(state, realized, cfg)
        dt_tire = tire_time_penalty(state.tc, state.tw, cfg)
        # the opponent observation carries that car's own gap; ours is its negation
        own_gap = -float(opp[3])
        dt_int = interaction_penalty(own_gap, cfg)
        return {
            "a_nom": a_nom.tolist(),
            "delta": delta.tolist(),
            "action": {"d_ef": action.d_ef, "d_eb": action.d_eb, "ps": action.ps},
            "pit_decision": ["stay out", "pit soft", "pit medium", "pit hard"][action.ps],
            "predicted": {
                "t_nom": t_nom,
                "dt_tire": dt_tire,
                "dt_int": dt_int,
                "t_lap": t_nom + dt_tire + dt_int,
            },
        }

    return app


def _car_from_obs(ego: np.ndarray, cfg: TrackConfig) -> CarState:
    from .config import CODE_COMPOUND

    code = int(round(float(ego[5])))
    compound = CODE_COMPOUND.get(code)
    if compound is None:
        raise HTTPException(
            status_code=422,
            detail=[{"field": "ego[5]", "error": f"invalid compound code {ego[5]}"}],
        )
    return CarState(
        e_b=float(ego[0]),
        e_f=float(ego[1]),
        m_car=float(ego[2]),
        t_race=float(ego[3]),
        b_cpd=bool(round(float(ego[4]))),
        tc=compound,
        tw=float(ego[6]),
        b_outlap=bool(round(float(ego[7]))),
        ta=0,
    )
