"""Command-line interface.

Subcommands cover the whole workflow: emit the default config, pretrain a
backbone, run self-play, play deterministic matches (with optional figure
rendering next to the trace CSV), run arena tournaments, print rankings,
and serve the live console.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .arena import EloTable, play_match, run_arena
from .config import (
    RewardConfig,
    TrackConfig,
    load_track_config,
    save_track_config,
    track_config_hash,
)
from .env import trace_to_csv
from .policy import Policy, load_checkpoint, save_checkpoint
from .trainer import TrainConfig, TrainLog, pretrain_backbone, self_play, solo_race

DEFAULT_ARENA_STATE = "arena.json"


def _load_cfg(path: str | None) -> TrackConfig:
    return load_track_config(path) if path else TrackConfig()


def _load_agents_dir(agents_dir: str, cfg: TrackConfig) -> dict[str, Policy]:
    expected = track_config_hash(cfg)
    agents: dict[str, Policy] = {}
    for path in sorted(Path(agents_dir).glob("*.gwp")):
        agents[path.stem] = load_checkpoint(path, expected_config_hash=expected)
    if not agents:
        raise SystemExit(f"no .gwp checkpoints found in {agents_dir}")
    return agents


def cmd_config_init(args) -> int:
    cfg = TrackConfig()
    save_track_config(cfg, args.out)
    print(f"wrote default track config to {args.out}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _load_cfg(args.config)
    rc = RewardConfig()
    tc = TrainConfig(env_steps=args.steps, seed=args.seed)
    log = TrainLog(args.log) if args.log else None
    policy = pretrain_backbone(tc, cfg, rc, log=log)
    t_race, b_cpd = solo_race(policy, cfg, rc)
    policy.meta.update({"solo_race_time": t_race, "b_cpd": b_cpd})
    save_checkpoint(policy, args.out)
    print(f"backbone saved to {args.out}")
    print(f"solo race time {t_race:.2f} s ({t_race / 60:.2f} min), compound rule: {b_cpd}")
    return 0


def cmd_selfplay(args) -> int:
    cfg = _load_cfg(args.config)
    rc = RewardConfig()
    backbone = load_checkpoint(args.backbone, expected_config_hash=track_config_hash(cfg))
    tc = TrainConfig(env_steps=args.steps, seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = TrainLog(out_dir / "training_log.csv")
    pool, reports = self_play(args.iters, tc, cfg, rc, backbone, log=log)
    for entry in pool.entries:
        save_checkpoint(entry.policy, out_dir / f"{entry.name}.gwp")
    (out_dir / "selfplay_report.json").write_text(json.dumps(reports, indent=2))
    for rep in reports:
        flag = " (below 40% floor)" if rep["below_floor"] else ""
        print(
            f"iteration {rep['iteration']}: best={rep['best']} elo={rep['elo']:.1f} "
            f"win-rate vs backbone={rep['win_rate_vs_backbone']:.2f}{flag}"
        )
    print(f"pool of {len(pool.entries)} agents saved to {out_dir}")
    return 0


def cmd_match(args) -> int:
    cfg = _load_cfg(args.config)
    rc = RewardConfig()
    expected = track_config_hash(cfg)
    pol_a = load_checkpoint(args.agent_a, expected_config_hash=expected)
    pol_b = load_checkpoint(args.agent_b, expected_config_hash=expected)
    result = play_match(
        pol_a, pol_b, seed=args.seed, init_gap=args.gap, cfg=cfg, rc=rc,
        name_a=Path(args.agent_a).stem, name_b=Path(args.agent_b).stem,
    )
    if args.trace:
        Path(args.trace).write_text(trace_to_csv(result.trace), encoding="utf-8")
        print(f"trace written to {args.trace}")
        if args.figures:
            from .report import render_trace_report

            for path in render_trace_report(args.trace):
                print(f"figure written to {path}")
    doc = result.to_dict()
    print(json.dumps(doc, indent=2))
    return 0


def cmd_arena(args) -> int:
    cfg = _load_cfg(args.config)
    rc = RewardConfig()
    agents = _load_agents_dir(args.agents, cfg)
    state_path = Path(args.state)
    table = EloTable.load(state_path) if state_path.exists() else EloTable()
    table = run_arena(
        agents, rounds=args.rounds, cfg=cfg, rc=rc, seed=args.seed,
        sample_gaps=args.sample_gaps, table=table,
        trace_dir=args.traces,
    )
    table.save(state_path)
    print(f"arena state saved to {state_path}")
    for pos, (name, rating) in enumerate(table.ranking(), start=1):
        print(f"{pos:>3}. {name:<24} {rating:8.1f}  ({table.matches[name]} matches)")
    return 0


def cmd_rank(args) -> int:
    state_path = Path(args.state)
    if not state_path.exists():
        raise SystemExit(f"no arena state at {state_path}; run `gridwall arena` first")
    table = EloTable.load(state_path)
    for pos, (name, rating) in enumerate(table.ranking(), start=1):
        print(f"{pos:>3}. {name:<24} {rating:8.1f}  ({table.matches[name]} matches)")
    return 0


def cmd_report(args) -> int:
    from .report import render_trace_report

    for path in render_trace_report(args.trace, out_dir=args.out_dir):
        print(f"figure written to {path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    cfg = _load_cfg(args.config)
    app = create_app(agents_dir=args.agents, cfg=cfg, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridwall", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("config", help="configuration utilities")
    config_sub = p.add_subparsers(dest="config_command", required=True)
    p_init = config_sub.add_parser("init", help="write the default track config JSON")
    p_init.add_argument("--out", default="track.json")
    p_init.set_defaults(func=cmd_config_init)

    p = sub.add_parser("pretrain", help="train the single-agent backbone")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="backbone.gwp")
    p.add_argument("--steps", type=int, default=TrainConfig.env_steps)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log", default=None)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("selfplay", help="run the self-play loop")
    p.add_argument("--iters", type=int, default=TrainConfig.selfplay_iterations)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--backbone", required=True)
    p.add_argument("--steps", type=int, default=TrainConfig.env_steps)
    p.add_argument("--out-dir", default="selfplay")
    p.set_defaults(func=cmd_selfplay)

    p = sub.add_parser("match", help="play one deterministic match")
    p.add_argument("agent_a")
    p.add_argument("agent_b")
    p.add_argument("--gap", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", default=None)
    p.add_argument("--figures", action="store_true", help="render PNGs next to the trace")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("arena", help="run a round-robin tournament")
    p.add_argument("--agents", required=True)
    p.add_argument("--rounds", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--state", default=DEFAULT_ARENA_STATE)
    p.add_argument("--traces", default=None)
    p.add_argument("--sample-gaps", action="store_true")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_arena)

    p = sub.add_parser("rank", help="print the persisted leaderboard")
    p.add_argument("--state", default=DEFAULT_ARENA_STATE)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("report", help="render figures for a trace CSV")
    p.add_argument("trace")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="start the live console service")
    p.add_argument("--port", type=int, default=int(os.environ.get("GRIDWALL_PORT", "8000")))
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--agents", default=os.environ.get("GRIDWALL_AGENTS", "agents"))
    p.add_argument("--config", default=None)
    p.add_argument("--ui", default=None, help="serve a built cockpit directory at /ui")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
