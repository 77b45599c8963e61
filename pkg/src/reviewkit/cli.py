"""Batch command-line interface.

Subcommands map 1:1 onto engine operations; state lives in the store
directory, so separate invocations pick up where the last one stopped.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import EngineConfig, load_config
from .engine import ReviewEngine
from .errors import ReviewKitError
from .model import FeedbackTemplate
from .store import SessionStore


def _open_store(args) -> SessionStore:
    config = _load_config(args)
    return SessionStore(args.store, fsync=config.fsync)


def _load_config(args) -> EngineConfig:
    return load_config(args.config) if args.config else load_config()


def cmd_ingest(args) -> int:
    store = _open_store(args)
    config = _load_config(args)
    path = Path(args.jsonl)
    if not path.exists():
        print(f"error: submissions file not found: {path}", file=sys.stderr)
        return 1
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                print(f"error: line {line_number} is not valid JSON", file=sys.stderr)
                return 1
    if args.session:
        engine = ReviewEngine.open(store, args.session)
    else:
        if not args.prompt:
            print("error: pass --session or --prompt to start a new session",
                  file=sys.stderr)
            return 1
        engine = ReviewEngine.create(store, args.prompt, config)
        print(f"session {engine.session_id} created")
    count = engine.ingest_submissions(records)
    print(f"{count} ingested")
    return 0


def cmd_generate(args) -> int:
    store = _open_store(args)
    engine = ReviewEngine.open(store, args.session)
    components = (
        tuple(k.strip() for k in args.components.split(",") if k.strip())
        if args.components else FeedbackTemplate().enabled_components
    )
    template = FeedbackTemplate(
        enabled_components=components, default_abstraction=args.level
    )
    report = engine.batch_generate(template)
    print(f"{len(report['generated'])} drafts generated")
    if report["failed"]:
        for failure in report["failed"]:
            print(f"failed: {failure['submission_id']}: {failure['error']}",
                  file=sys.stderr)
        return 2
    return 0


def cmd_export_drafts(args) -> int:
    store = _open_store(args)
    engine = ReviewEngine.open(store, args.session)
    doc = json.dumps(engine.export_drafts(), indent=2, ensure_ascii=False)
    if args.out:
        Path(args.out).write_text(doc + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(doc)
    return 0


def cmd_metrics(args) -> int:
    store = _open_store(args)
    engine = ReviewEngine.open(store, args.session)
    metrics = engine.compute_metrics()
    print(json.dumps(metrics, indent=2))
    if args.out_dir:
        from .report import write_metrics_report
        paths = write_metrics_report(metrics, args.out_dir)
        for name, path in paths.items():
            print(f"wrote {name}: {path}", file=sys.stderr)
    return 0


def cmd_replay_check(args) -> int:
    store = _open_store(args)
    try:
        events = store.read_events(args.session)
        replayed = ReviewEngine.replay_state(store, args.session)
        again = ReviewEngine.replay_state(store, args.session)
    except ReviewKitError as exc:
        print(f"replay-check failed: {exc.message}", file=sys.stderr)
        return 1
    if replayed.to_snapshot() != again.to_snapshot():
        print("replay-check failed: replay is not deterministic", file=sys.stderr)
        return 1
    snapshot = store.read_snapshot(args.session)
    if snapshot is not None:
        state_dict, last_event_id = snapshot
        prefix = ReviewEngine(store, args.session, EngineConfig())
        for record in events:
            if record.event_id <= last_event_id:
                prefix._apply(record)
        if prefix.state.to_snapshot() != state_dict:
            print("replay-check failed: snapshot does not match the log",
                  file=sys.stderr)
            return 1
    print(f"replay-check ok: {len(events)} events")
    return 0


def cmd_snapshot(args) -> int:
    store = _open_store(args)
    engine = ReviewEngine.open(store, args.session)
    path = engine.write_snapshot()
    print(f"wrote {path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    config = _load_config(args)
    app = create_app(args.store, config)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reviewkit",
        description="Generate, review, revise and propagate programming feedback.",
    )
    parser.add_argument("--store", default="./reviewkit-store",
                        help="store directory (default ./reviewkit-store)")
    parser.add_argument("--config", default=None, help="JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest a JSONL submissions file")
    p.add_argument("jsonl")
    p.add_argument("--session", default=None, help="existing session id")
    p.add_argument("--prompt", default=None, help="exercise prompt for a new session")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("generate", help="generate feedback drafts")
    p.add_argument("--session", required=True)
    p.add_argument("--components", default=None,
                   help="comma-separated component kinds (default: all five)")
    p.add_argument("--level", type=int, default=2, help="default abstraction level")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("export-drafts", help="export drafts as JSON")
    p.add_argument("--session", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export_drafts)

    p = sub.add_parser("metrics", help="compute review metrics from the event log")
    p.add_argument("--session", required=True)
    p.add_argument("--out-dir", default=None,
                   help="also write metrics.json, metrics.csv and figures here")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("replay-check", help="verify the event log round-trips")
    p.add_argument("--session", required=True)
    p.set_defaults(func=cmd_replay_check)

    p = sub.add_parser("snapshot", help="write an on-demand state snapshot")
    p.add_argument("--session", required=True)
    p.set_defaults(func=cmd_snapshot)

    p = sub.add_parser("serve", help="run the REST API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ReviewKitError as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
