"""
SQLite run ledger: runs, checks and stored reports
"""

import sqlite3
from datetime import datetime

from db.database import Database


def test_record_and_read_back(tmp_path):
    path = tmp_path / "ledger" / "runs.db"
    with Database(path) as db:
        run_id = db.record_run(kind="simulate", manifest_digest="abc", output_dir=tmp_path / "out",
                               timestamp=datetime(2024, 1, 2, 3, 4, 5))
        db.record_check(run_id, name="energy_inequality", passed=True, value=0.99, threshold=1.001)
        db.record_check(run_id, name="zero_mean", passed=False, value=1e-3, threshold=1e-8,
                        detail="mean drifted")
        db.finish_run(run_id, status="failed", exit_code=4)
        row = db.run(run_id)
        assert row["created_at"] == "2024-01-02T03:04:05"
        assert row["status"] == "failed" and row["exit_code"] == 4
        assert row["output_dir"] == str(tmp_path / "out")
        checks = db.checks(run_id)
        assert [c["name"] for c in checks] == ["energy_inequality", "zero_mean"]
        assert checks[0]["passed"] is True and checks[1]["passed"] is False
        assert checks[1]["detail"] == "mean drifted"

    # direct SQL sees the same rows
    conn = sqlite3.connect(path)
    assert conn.execute("SELECT COUNT(*) FROM checks").fetchone()[0] == 2
    conn.close()


def test_summary_counts_and_reports():
    with Database(":memory:") as db:
        first = db.record_run(kind="certify")
        db.record_check(first, name="nonresonant", passed=True)
        db.finish_run(first, status="ok", exit_code=0)
        second = db.record_run(kind="limit")
        db.record_check(second, name="oscillating_gronwall", passed=False)
        db.finish_run(second, status="failed", exit_code=4)

        summary = db.summary()
        assert summary["total"] == 2
        assert summary["kind_certify"] == 1 and summary["kind_limit"] == 1
        assert summary["status_ok"] == 1 and summary["status_failed"] == 1
        assert summary["failed_oscillating_gronwall"] == 1
        assert db.summary(run_id=first) == {"total": 1, "kind_certify": 1, "status_ok": 1}

        assert db.latest_summary() == {}
        report = db.save_run_summary(second)
        assert db.latest_summary() == report
        assert report["run"]["kind"] == "limit"
        assert db.save_run_summary(999) == {}

        assert [r["kind"] for r in db.runs(kind="limit")] == ["limit"]
        assert len(db.runs(limit=1)) == 1
        assert db.run(999) == {}
