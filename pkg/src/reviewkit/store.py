"""Append-only JSONL event log and the on-disk session store.

One JSON document per line, UTF-8, fields exactly
{event_id, session_id, timestamp, actor, kind, payload}. The log is the
source of truth; snapshots are an optimization layered on top.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .errors import CorruptLog, NotFound, StorageError, ValidationError

ACTORS = ("reviewer", "engine")

_ENVELOPE_FIELDS = ("event_id", "session_id", "timestamp", "actor", "kind", "payload")


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    """ISO-8601 UTC with millisecond precision, e.g. 2026-08-10T12:00:00.000Z."""
    dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def parse_timestamp(raw: str) -> datetime:
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    return datetime.fromisoformat(raw)


@dataclass(frozen=True)
class EventRecord:
    event_id: int
    session_id: str
    timestamp: str
    actor: str
    kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "session_id": self.session_id,
            "timestamp": self.timestamp,
            "actor": self.actor,
            "kind": self.kind,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EventRecord":
        return cls(
            event_id=int(d["event_id"]),
            session_id=d["session_id"],
            timestamp=d["timestamp"],
            actor=d["actor"],
            kind=d["kind"],
            payload=d["payload"],
        )


class EventLog:
    """Per-session append-only log with gapless, monotonically increasing ids."""

    def __init__(self, path: str | Path, fsync: bool = False):
        self.path = Path(path)
        self.fsync = fsync
        self._next_id = 0
        self._last_timestamp: datetime | None = None
        if self.path.exists():
            for record in self.read_all():
                self._next_id = record.event_id + 1
                self._last_timestamp = parse_timestamp(record.timestamp)

    @property
    def next_event_id(self) -> int:
        return self._next_id

    @property
    def last_timestamp(self) -> datetime | None:
        return self._last_timestamp

    def append(self, record: EventRecord) -> None:
        if record.event_id != self._next_id:
            raise StorageError(
                f"event_id {record.event_id} breaks the gapless sequence "
                f"(expected {self._next_id})"
            )
        ts = parse_timestamp(record.timestamp)
        if self._last_timestamp is not None and ts < self._last_timestamp:
            raise StorageError("event timestamp went backwards")
        line = json.dumps(record.to_dict(), ensure_ascii=False)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                if self.fsync:
                    os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageError(f"cannot append to event log: {exc}")
        self._next_id = record.event_id + 1
        self._last_timestamp = ts

    def read_all(self) -> list[EventRecord]:
        if not self.path.exists():
            return []
        records = []
        expected = 0
        with self.path.open("r", encoding="utf-8") as fh:
            for line_number, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    data = json.loads(line)
                except json.JSONDecodeError:
                    raise CorruptLog(f"line {line_number} is not valid JSON", line_number)
                if not isinstance(data, dict) or set(data) != set(_ENVELOPE_FIELDS):
                    raise CorruptLog(
                        f"line {line_number} does not match the event envelope", line_number
                    )
                record = EventRecord.from_dict(data)
                if record.event_id != expected:
                    raise CorruptLog(
                        f"line {line_number}: event_id {record.event_id} breaks the "
                        f"gapless sequence (expected {expected})",
                        line_number,
                    )
                records.append(record)
                expected += 1
        return records


class SessionStore:
    """A directory of sessions, each holding an event log and optional snapshot."""

    def __init__(self, root: str | Path, fsync: bool = False):
        self.root = Path(root)
        self.fsync = fsync
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageError(f"cannot create store root: {exc}")
        self._logs: dict[str, EventLog] = {}

    def list_sessions(self) -> list[str]:
        out = []
        for child in sorted(self.root.iterdir()):
            if child.is_dir() and (child / "events.jsonl").exists():
                out.append(child.name)
        return out

    def allocate_session_id(self) -> str:
        existing = {child.name for child in self.root.iterdir() if child.is_dir()}
        n = len(existing)
        while f"s{n}" in existing:
            n += 1
        return f"s{n}"

    def session_exists(self, session_id: str) -> bool:
        return (self.root / session_id / "events.jsonl").exists()

    def log(self, session_id: str) -> EventLog:
        if session_id not in self._logs:
            self._logs[session_id] = EventLog(
                self.root / session_id / "events.jsonl", fsync=self.fsync
            )
        return self._logs[session_id]

    def append_event(self, session_id: str, kind: str, actor: str,
                     payload: dict, timestamp: str) -> EventRecord:
        if actor not in ACTORS:
            raise ValidationError(f"unknown actor {actor!r}")
        log = self.log(session_id)
        record = EventRecord(
            event_id=log.next_event_id,
            session_id=session_id,
            timestamp=timestamp,
            actor=actor,
            kind=kind,
            payload=payload,
        )
        log.append(record)
        return record

    def read_events(self, session_id: str) -> list[EventRecord]:
        if not self.session_exists(session_id):
            raise NotFound(f"session {session_id!r} not found")
        return self.log(session_id).read_all()

    # -- snapshots ---------------------------------------------------------

    def snapshot_path(self, session_id: str) -> Path:
        return self.root / session_id / "snapshot.json"

    def write_snapshot(self, session_id: str, state: dict, last_event_id: int) -> Path:
        path = self.snapshot_path(session_id)
        doc = {"last_event_id": last_event_id, "state": state}
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".json.tmp")
            tmp.write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")
            tmp.replace(path)
        except OSError as exc:
            raise StorageError(f"cannot write snapshot: {exc}")
        return path

    def read_snapshot(self, session_id: str) -> tuple[dict, int] | None:
        path = self.snapshot_path(session_id)
        if not path.exists():
            return None
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise StorageError(f"cannot read snapshot: {exc}")
        return doc["state"], int(doc["last_event_id"])
