"""Review metrics computed purely from the event log.

The reaction time of a pair is the elapsed time from opening it to the
reviewer's first concrete action: requesting a revision (manual edits
included), creating a filter, deciding a propagation, or changing the
abstraction level. Pairs with no concrete action get their whole review
duration as reaction time.

Durations run from pair_opened to pair_validated; pairs never validated run
to the end of the log. Revision and propagation counts accrue to the pair
they targeted, whenever they happened.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import CorruptLog
from .store import EventRecord, parse_timestamp

CONCRETE_ACTION_KINDS = (
    "revision_requested",
    "filter_created",
    "propagation_decided",
    "abstraction_set",
)


@dataclass
class PairMetrics:
    submission_id: str
    draft_id: str
    opened_at: str
    duration: float | None = None
    reaction_time: float | None = None
    first_action_kind: str | None = None
    revisions_requested: int = 0
    revisions_accepted: int = 0
    propagations_accepted: int = 0
    validated: bool = False

    def to_dict(self) -> dict:
        return {
            "submission_id": self.submission_id,
            "draft_id": self.draft_id,
            "opened_at": self.opened_at,
            "duration": self.duration,
            "reaction_time": self.reaction_time,
            "first_action_kind": self.first_action_kind,
            "revisions_requested": self.revisions_requested,
            "revisions_accepted": self.revisions_accepted,
            "propagations_accepted": self.propagations_accepted,
            "validated": self.validated,
        }


@dataclass
class _OpenPair:
    pair: PairMetrics
    opened: object                        # datetime
    first_action: object | None = None


def _payload_field(record: EventRecord, key: str, index: int):
    try:
        return record.payload[key]
    except (KeyError, TypeError):
        raise CorruptLog(
            f"event {index}: {record.kind} payload missing {key!r}", index
        )


def compute_metrics(events: list[EventRecord]) -> dict:
    """Pure function of the log; returns per-pair records plus aggregates."""
    pairs: list[PairMetrics] = []
    open_by_draft: dict[str, _OpenPair] = {}
    open_by_submission: dict[str, _OpenPair] = {}
    open_order: list[_OpenPair] = []
    revision_draft: dict[str, str] = {}
    submission_of_draft: dict[str, str] = {}
    # Counts accrue to the targeted pair even when the event fires while a
    # different pair is open (e.g. accepting a propagation early).
    revisions_requested: dict[str, int] = {}
    revisions_accepted: dict[str, int] = {}
    propagations_accepted: dict[str, int] = {}

    def close(entry: _OpenPair, at) -> None:
        entry.pair.duration = (at - entry.opened).total_seconds()
        if entry.first_action is not None:
            entry.pair.reaction_time = (entry.first_action - entry.opened).total_seconds()
        else:
            entry.pair.reaction_time = entry.pair.duration
        open_by_draft.pop(entry.pair.draft_id, None)
        open_by_submission.pop(entry.pair.submission_id, None)
        open_order.remove(entry)

    def mark_action(entry: _OpenPair | None, kind: str, at) -> None:
        if entry is None and open_order:
            entry = open_order[-1]
        if entry is not None and entry.first_action is None:
            entry.first_action = at
            entry.pair.first_action_kind = kind

    last_ts = None
    for index, record in enumerate(events):
        try:
            ts = parse_timestamp(record.timestamp)
        except ValueError:
            raise CorruptLog(f"event {index}: unparseable timestamp", index)
        if last_ts is not None and ts < last_ts:
            raise CorruptLog(f"event {index}: timestamp went backwards", index)
        last_ts = ts
        kind = record.kind

        if kind == "pair_opened":
            submission_id = _payload_field(record, "submission_id", index)
            draft_id = _payload_field(record, "draft_id", index)
            pair = PairMetrics(
                submission_id=submission_id, draft_id=draft_id,
                opened_at=record.timestamp,
            )
            pairs.append(pair)
            entry = _OpenPair(pair=pair, opened=ts)
            open_by_draft[draft_id] = entry
            open_by_submission[submission_id] = entry
            open_order.append(entry)
            submission_of_draft[draft_id] = submission_id
        elif kind == "draft_generated":
            draft = _payload_field(record, "draft", index)
            submission_of_draft[draft["draft_id"]] = draft["submission_id"]
        elif kind == "revision_requested":
            revision = _payload_field(record, "revision", index)
            draft_id = revision.get("draft_id", "")
            revision_draft[revision.get("revision_id", "")] = draft_id
            sid = submission_of_draft.get(draft_id)
            if sid is not None:
                revisions_requested[sid] = revisions_requested.get(sid, 0) + 1
            mark_action(open_by_draft.get(draft_id), kind, ts)
        elif kind == "revision_decided":
            if record.payload.get("decision") == "accept":
                draft_id = revision_draft.get(
                    _payload_field(record, "revision_id", index), ""
                )
                sid = submission_of_draft.get(draft_id)
                if sid is not None:
                    revisions_accepted[sid] = revisions_accepted.get(sid, 0) + 1
        elif kind == "abstraction_set":
            draft_id = _payload_field(record, "draft_id", index)
            mark_action(open_by_draft.get(draft_id), kind, ts)
        elif kind == "propagation_decided":
            sid = _payload_field(record, "submission_id", index)
            if record.payload.get("decision") == "accept":
                propagations_accepted[sid] = propagations_accepted.get(sid, 0) + 1
            mark_action(open_by_submission.get(sid), kind, ts)
        elif kind == "filter_created":
            mark_action(None, kind, ts)
        elif kind == "pair_validated":
            submission_id = _payload_field(record, "submission_id", index)
            entry = open_by_submission.get(submission_id)
            if entry is not None:
                entry.pair.validated = True
                close(entry, ts)

    if last_ts is not None:
        for entry in list(open_order):
            close(entry, last_ts)

    for pair in pairs:
        pair.revisions_requested = revisions_requested.get(pair.submission_id, 0)
        pair.revisions_accepted = revisions_accepted.get(pair.submission_id, 0)
        pair.propagations_accepted = propagations_accepted.get(pair.submission_id, 0)

    reaction_times = [p.reaction_time for p in pairs if p.reaction_time is not None]
    durations = [p.duration for p in pairs if p.duration is not None]
    aggregates = {
        "pairs_opened": len(pairs),
        "pairs_validated": sum(1 for p in pairs if p.validated),
        "mean_reaction_time": (sum(reaction_times) / len(reaction_times))
        if reaction_times else None,
        "mean_duration": (sum(durations) / len(durations)) if durations else None,
        "total_revisions_requested": sum(revisions_requested.values()),
        "total_revisions_accepted": sum(revisions_accepted.values()),
        "total_propagations_accepted": sum(propagations_accepted.values()),
    }
    return {"pairs": [p.to_dict() for p in pairs], "aggregates": aggregates}
