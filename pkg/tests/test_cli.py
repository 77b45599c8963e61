import json

import pytest

from reviewkit.cli import main

from .conftest import clean_code, missing_return_code


@pytest.fixture
def store_dir(tmp_path):
    return str(tmp_path / "store")


def write_submissions(tmp_path, codes):
    path = tmp_path / "submissions.jsonl"
    with path.open("w", encoding="utf-8") as fh:
        for i, code in enumerate(codes):
            fh.write(json.dumps({
                "student_ref": f"student-{i}", "code": code,
                "language_tag": "python", "severity": 0.5,
            }) + "\n")
    return str(path)


def run(store_dir, *args):
    return main(["--store", store_dir, *args])


class TestIngest:
    def test_ingest_reports_count(self, tmp_path, store_dir, capsys):
        path = write_submissions(tmp_path, [clean_code(i) for i in range(10)])
        code = run(store_dir, "ingest", path, "--prompt", "Sum a list")
        out = capsys.readouterr().out
        assert code == 0
        assert "session s0 created" in out
        assert "10 ingested" in out

    def test_ingest_into_existing_session(self, tmp_path, store_dir, capsys):
        first = write_submissions(tmp_path, [clean_code(0)])
        run(store_dir, "ingest", first, "--prompt", "p")
        capsys.readouterr()
        code = run(store_dir, "ingest", first, "--session", "s0")
        assert code == 0
        assert "1 ingested" in capsys.readouterr().out

    def test_missing_file_fails(self, store_dir, capsys):
        code = run(store_dir, "ingest", "/nonexistent.jsonl", "--prompt", "p")
        assert code == 1
        assert "not found" in capsys.readouterr().err

    def test_optional_severity_defaults(self, tmp_path, store_dir, capsys):
        path = tmp_path / "subs.jsonl"
        path.write_text(json.dumps({"student_ref": "a", "code": "x = 1"}) + "\n",
                        encoding="utf-8")
        code = run(store_dir, "ingest", str(path), "--prompt", "p")
        assert code == 0


class TestGenerateExportMetrics:
    def seed(self, tmp_path, store_dir, capsys):
        path = write_submissions(
            tmp_path, [missing_return_code(0), clean_code(1)]
        )
        run(store_dir, "ingest", path, "--prompt", "Sum a list")
        capsys.readouterr()

    def test_generate_then_export(self, tmp_path, store_dir, capsys):
        self.seed(tmp_path, store_dir, capsys)
        code = run(store_dir, "generate", "--session", "s0",
                   "--components", "Issue,Strategy")
        assert code == 0
        assert "2 drafts generated" in capsys.readouterr().out
        out_file = tmp_path / "drafts.json"
        code = run(store_dir, "export-drafts", "--session", "s0",
                   "--out", str(out_file))
        assert code == 0
        drafts = json.loads(out_file.read_text(encoding="utf-8"))
        assert len(drafts) == 2
        assert [c["kind"] for c in drafts[0]["components"]] == ["Issue", "Strategy"]

    def test_metrics_prints_json_and_writes_report(self, tmp_path, store_dir, capsys):
        self.seed(tmp_path, store_dir, capsys)
        run(store_dir, "generate", "--session", "s0")
        capsys.readouterr()
        out_dir = tmp_path / "report"
        code = run(store_dir, "metrics", "--session", "s0",
                   "--out-dir", str(out_dir))
        assert code == 0
        printed = json.loads(capsys.readouterr().out)
        assert "aggregates" in printed
        assert (out_dir / "metrics.json").exists()
        assert (out_dir / "metrics.csv").exists()

    def test_metrics_figures_rendered_when_pairs_reviewed(self, tmp_path, store_dir,
                                                          capsys):
        self.seed(tmp_path, store_dir, capsys)
        run(store_dir, "generate", "--session", "s0")
        from reviewkit import ReviewEngine, SessionStore
        engine = ReviewEngine.open(SessionStore(store_dir), "s0")
        _, draft = engine.next_pair()
        engine.validate_pair(draft.draft_id)
        capsys.readouterr()
        out_dir = tmp_path / "report"
        assert run(store_dir, "metrics", "--session", "s0",
                   "--out-dir", str(out_dir)) == 0
        assert (out_dir / "reaction_times.png").stat().st_size > 0
        assert (out_dir / "review_flow.png").stat().st_size > 0
        csv_lines = (out_dir / "metrics.csv").read_text().strip().split("\n")
        assert len(csv_lines) == 2              # header + one reviewed pair


class TestReplayCheck:
    def test_intact_log_passes(self, tmp_path, store_dir, capsys):
        path = write_submissions(tmp_path, [missing_return_code()])
        run(store_dir, "ingest", path, "--prompt", "p")
        run(store_dir, "generate", "--session", "s0")
        capsys.readouterr()
        assert run(store_dir, "replay-check", "--session", "s0") == 0
        assert "replay-check ok" in capsys.readouterr().out

    def test_corrupt_log_fails(self, tmp_path, store_dir, capsys):
        path = write_submissions(tmp_path, [clean_code()])
        run(store_dir, "ingest", path, "--prompt", "p")
        capsys.readouterr()
        log = tmp_path / "store" / "s0" / "events.jsonl"
        with log.open("a", encoding="utf-8") as fh:
            fh.write("{broken\n")
        assert run(store_dir, "replay-check", "--session", "s0") == 1
        assert "failed" in capsys.readouterr().err

    def test_snapshot_then_replay_check(self, tmp_path, store_dir, capsys):
        path = write_submissions(tmp_path, [clean_code()])
        run(store_dir, "ingest", path, "--prompt", "p")
        run(store_dir, "generate", "--session", "s0")
        assert run(store_dir, "snapshot", "--session", "s0") == 0
        assert run(store_dir, "replay-check", "--session", "s0") == 0

    def test_unknown_session_fails_with_message(self, store_dir, capsys):
        assert run(store_dir, "replay-check", "--session", "s7") == 1
