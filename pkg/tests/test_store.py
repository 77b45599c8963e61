import json
import random

import pytest

from reviewkit import EngineConfig, FeedbackTemplate, ReviewEngine, SessionStore
from reviewkit.errors import CorruptLog, EmptyPrompt, NotFound, ValidationError
from reviewkit.model import Selection
from reviewkit.store import EventLog, EventRecord, format_timestamp, parse_timestamp

from .conftest import (
    FakeClock,
    clean_code,
    list_concat_code,
    missing_return_code,
    off_by_one_code,
    records_for,
    unused_accumulator_code,
)


class TestSessionCreation:
    def test_create_session_persists_and_logs(self, store, clock):
        engine = ReviewEngine.create(store, "Write a function that filters a list",
                                     clock=clock)
        assert engine.session.exercise_prompt == "Write a function that filters a list"
        assert engine.state.submissions == {}
        events = engine.events()
        assert [e.kind for e in events] == ["session_created"]
        assert events[0].event_id == 0

    def test_empty_prompt_rejected(self, store):
        with pytest.raises(EmptyPrompt):
            ReviewEngine.create(store, "")
        with pytest.raises(EmptyPrompt):
            ReviewEngine.create(store, "   ")

    def test_same_prompt_gets_distinct_ids(self, store, clock):
        a = ReviewEngine.create(store, "Same prompt", clock=clock)
        b = ReviewEngine.create(store, "Same prompt", clock=clock)
        assert a.session_id != b.session_id


class TestIngest:
    def test_three_records_get_consecutive_ordinals(self, store, clock):
        engine = ReviewEngine.create(store, "p", clock=clock)
        count = engine.ingest_submissions(records_for(
            [missing_return_code(), clean_code(), off_by_one_code()]
        ))
        assert count == 3
        ordinals = [s.ingest_ordinal for s in engine.state.submissions.values()]
        assert ordinals == [0, 1, 2]

    def test_empty_batch_is_zero_with_empty_payload(self, store, clock):
        engine = ReviewEngine.create(store, "p", clock=clock)
        assert engine.ingest_submissions([]) == 0
        event = engine.events()[-1]
        assert event.kind == "submissions_ingested"
        assert event.payload["submissions"] == []

    def test_empty_code_names_index_and_ingests_nothing(self, store, clock):
        engine = ReviewEngine.create(store, "p", clock=clock)
        records = records_for([clean_code()]) + [{"student_ref": "x", "code": ""}]
        with pytest.raises(ValidationError) as err:
            engine.ingest_submissions(records)
        assert err.value.detail["index"] == 1
        assert engine.state.submissions == {}
        assert [e.kind for e in engine.events()] == ["session_created"]

    def test_severity_out_of_range_rejected(self, store, clock):
        engine = ReviewEngine.create(store, "p", clock=clock)
        with pytest.raises(ValidationError):
            engine.ingest_submissions([{"code": "x = 1", "severity": 1.5}])

    def test_duplicate_code_stored_verbatim(self, store, clock):
        engine = ReviewEngine.create(store, "p", clock=clock)
        engine.ingest_submissions(records_for([clean_code(), clean_code()]))
        codes = [s.code for s in engine.state.submissions.values()]
        assert codes == [clean_code(), clean_code()]

    def test_unknown_session_is_not_found(self, store):
        with pytest.raises(NotFound):
            ReviewEngine.open(store, "s999")


class TestEventLog:
    def test_first_event_id_zero_then_monotone(self, tmp_path):
        log = EventLog(tmp_path / "events.jsonl")
        for i in range(3):
            log.append(EventRecord(i, "s0", "2026-08-10T00:00:00.000Z",
                                   "engine", "k", {}))
        ids = [r.event_id for r in log.read_all()]
        assert ids == [0, 1, 2]

    def test_append_continues_after_reopen(self, tmp_path):
        path = tmp_path / "events.jsonl"
        log = EventLog(path)
        n = 7
        for i in range(n):
            log.append(EventRecord(i, "s0", "2026-08-10T00:00:00.000Z",
                                   "engine", "k", {"i": i}))
        reopened = EventLog(path)
        assert reopened.next_event_id == n
        reopened.append(EventRecord(n, "s0", "2026-08-10T00:00:01.000Z",
                                    "engine", "k", {}))
        assert [r.event_id for r in reopened.read_all()] == list(range(n + 1))

    def test_corrupt_line_reports_line_number(self, tmp_path):
        path = tmp_path / "events.jsonl"
        log = EventLog(path)
        log.append(EventRecord(0, "s0", "2026-08-10T00:00:00.000Z", "engine", "k", {}))
        with path.open("a", encoding="utf-8") as fh:
            fh.write("{not json\n")
        with pytest.raises(CorruptLog) as err:
            EventLog(path)
        assert err.value.line_number == 2

    def test_gap_in_event_ids_is_corrupt(self, tmp_path):
        path = tmp_path / "events.jsonl"
        record = {"event_id": 5, "session_id": "s0",
                  "timestamp": "2026-08-10T00:00:00.000Z",
                  "actor": "engine", "kind": "k", "payload": {}}
        path.write_text(json.dumps(record) + "\n", encoding="utf-8")
        with pytest.raises(CorruptLog):
            EventLog(path)

    def test_envelope_fields_are_exact(self, tmp_path):
        path = tmp_path / "events.jsonl"
        record = {"event_id": 0, "session_id": "s0",
                  "timestamp": "2026-08-10T00:00:00.000Z",
                  "actor": "engine", "kind": "k", "payload": {}, "extra": 1}
        path.write_text(json.dumps(record) + "\n", encoding="utf-8")
        with pytest.raises(CorruptLog):
            EventLog(path)

    def test_timestamp_round_trip_millisecond_precision(self):
        stamp = "2026-08-10T12:34:56.789Z"
        assert format_timestamp(parse_timestamp(stamp)) == stamp


def drive_random_session(engine, rng, steps=12):
    """Random but valid op sequence against a live engine."""
    codes = [missing_return_code, list_concat_code, off_by_one_code,
             unused_accumulator_code, clean_code]
    engine.ingest_submissions(records_for(
        [codes[rng.randrange(len(codes))](i) for i in range(rng.randint(2, 5))]
    ))
    engine.batch_generate(FeedbackTemplate(("Issue", "Solution"), 2))
    opened = None
    for _ in range(steps):
        op = rng.randrange(6)
        if op == 0 and engine.state.queue_order:
            _, draft = engine.next_pair()
            opened = draft
        elif op == 1 and opened is not None and opened.status == "in_review":
            kind = rng.choice(["Issue", "Solution"])
            engine.set_abstraction_level(opened.draft_id, kind, rng.randint(1, 3))
        elif op == 2 and opened is not None and opened.status == "in_review":
            revision = engine.request_revision(
                opened.draft_id, "general", query_text="mention the missing return"
            )
            engine.decide_revision(
                revision.revision_id, rng.choice(["accept", "dismiss"])
            )
        elif op == 3 and opened is not None and opened.status == "in_review":
            engine.validate_pair(opened.draft_id)
            opened = None
        elif op == 4:
            sid = rng.choice(list(engine.state.submissions))
            draft = engine.state.draft_of(sid)
            if draft is not None and rng.random() < 0.5:
                engine.create_filter_manual("code", f"watch {sid}",
                                            issue_tag="missing-return")
        elif op == 5 and engine.state.filters:
            fid = rng.choice(list(engine.state.filters))
            engine.set_filter_active(fid, rng.random() < 0.5)


class TestReplay:
    def test_empty_log_on_unknown_session(self, store):
        with pytest.raises(NotFound):
            ReviewEngine.replay_state(store, "missing")

    def test_single_ingest_replays_to_five_submissions(self, store, clock):
        engine = ReviewEngine.create(store, "p", clock=clock)
        engine.ingest_submissions(records_for([clean_code(i) for i in range(5)]))
        replayed = ReviewEngine.replay_state(store, engine.session_id)
        assert len(replayed.submissions) == 5
        assert replayed.to_snapshot() == engine.state.to_snapshot()

    def test_randomized_session_replays_field_by_field(self, tmp_path):
        rng = random.Random(1234)
        for trial in range(10):
            store = SessionStore(tmp_path / f"t{trial}")
            engine = ReviewEngine.create(store, "p", clock=FakeClock())
            drive_random_session(engine, rng)
            replayed = ReviewEngine.replay_state(store, engine.session_id)
            assert replayed.to_snapshot() == engine.state.to_snapshot()

    def test_reopened_engine_continues_event_ids(self, tmp_path):
        store = SessionStore(tmp_path / "s")
        engine = ReviewEngine.create(store, "p", clock=FakeClock())
        engine.ingest_submissions(records_for([clean_code()]))
        n = len(engine.events())
        fresh_store = SessionStore(tmp_path / "s")   # separate handle, same files
        reopened = ReviewEngine.open(fresh_store, engine.session_id, clock=FakeClock())
        reopened.ingest_submissions(records_for([clean_code(1)]))
        events = reopened.events()
        assert events[-1].event_id == n
        assert [e.event_id for e in events] == list(range(n + 1))

    def test_snapshot_plus_tail_equals_full_replay(self, tmp_path):
        store = SessionStore(tmp_path / "s")
        engine = ReviewEngine.create(store, "p", clock=FakeClock())
        engine.ingest_submissions(records_for(
            [missing_return_code(i) for i in range(3)]
        ))
        engine.batch_generate(FeedbackTemplate(("Issue",), 2))
        engine.write_snapshot()
        engine.next_pair()                    # events after the snapshot
        via_snapshot = ReviewEngine.open(
            store, engine.session_id, clock=FakeClock(), use_snapshot=True
        )
        assert via_snapshot.state.to_snapshot() == engine.state.to_snapshot()


class TestWalkthroughReplay:
    def test_full_walkthrough_replay(self, make_engine):
        engine = make_engine([missing_return_code(i) for i in range(3)])
        submission, draft = engine.next_pair()
        code_lines = submission.code.split("\n")
        selection = Selection(
            source="code", start=4, end=4, text=code_lines[3],
            draft_id=draft.draft_id,
        )
        engine.create_filter_from_selection(selection)
        revision = engine.request_revision(
            draft.draft_id, "in_situ", shortcut="mention_issue", selection=selection
        )
        engine.decide_revision(revision.revision_id, "accept")
        engine.validate_pair(draft.draft_id)
        engine.send_feedback(draft.draft_id)
        replayed = ReviewEngine.replay_state(engine.store, engine.session_id)
        assert replayed.to_snapshot() == engine.state.to_snapshot()
