from __future__ import annotations

import json
import sqlite3
from collections import Counter
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional


class Database:
    """SQLite ledger of lab runs and the invariant checks each run performed."""

    def __init__(self, path: str | Path = "db/stratoflow.db") -> None:
        self.path = Path(path)
        if str(path) != ":memory:":
            self.path.parent.mkdir(parents=True, exist_ok=True)
        self.conn = sqlite3.connect(str(path), check_same_thread=False, timeout=30)
        self.conn.row_factory = sqlite3.Row
        self._init_schema()

    def __enter__(self) -> "Database":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:  # type: ignore[override]
        self.close()

    def close(self) -> None:
        try:
            self.conn.close()
        except sqlite3.Error:
            pass

    def _init_schema(self) -> None:
        self.conn.execute(
            """
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                created_at TEXT NOT NULL,
                kind TEXT NOT NULL,
                manifest_digest TEXT,
                output_dir TEXT,
                status TEXT NOT NULL DEFAULT 'running',
                exit_code INTEGER
            )
        """
        )
        self.conn.execute(
            """
            CREATE TABLE IF NOT EXISTS checks (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id INTEGER NOT NULL REFERENCES runs(id),
                name TEXT NOT NULL,
                passed INTEGER NOT NULL,
                value REAL,
                threshold REAL,
                detail TEXT
            )
        """
        )
        self.conn.execute("CREATE INDEX IF NOT EXISTS idx_checks_run_id ON checks(run_id)")
        self.conn.execute("CREATE INDEX IF NOT EXISTS idx_runs_created_at ON runs(created_at)")
        self.conn.execute(
            """
            CREATE TABLE IF NOT EXISTS reports (
                run_id INTEGER PRIMARY KEY,
                summary TEXT NOT NULL,
                created_at TEXT NOT NULL
            )
        """
        )
        self.conn.commit()

    def record_run(
        self,
        *,
        kind: str,
        manifest_digest: str = "",
        output_dir: str | Path = "",
        timestamp: datetime | None = None,
    ) -> int:
        ts = (timestamp or datetime.utcnow()).isoformat()
        cursor = self.conn.execute(
            """
            INSERT INTO runs (created_at, kind, manifest_digest, output_dir, status)
            VALUES (?, ?, ?, ?, 'running')
        """,
            (ts, kind, manifest_digest, str(output_dir)),
        )
        self.conn.commit()
        return int(cursor.lastrowid)

    def finish_run(self, run_id: int, *, status: str, exit_code: int) -> None:
        self.conn.execute(
            "UPDATE runs SET status = ?, exit_code = ? WHERE id = ?",
            (status, int(exit_code), run_id),
        )
        self.conn.commit()

    def record_check(
        self,
        run_id: int,
        *,
        name: str,
        passed: bool,
        value: float | None = None,
        threshold: float | None = None,
        detail: str = "",
    ) -> None:
        self.conn.execute(
            """
            INSERT INTO checks (run_id, name, passed, value, threshold, detail)
            VALUES (?, ?, ?, ?, ?, ?)
        """,
            (
                run_id,
                name,
                1 if passed else 0,
                None if value is None else float(value),
                None if threshold is None else float(threshold),
                detail,
            ),
        )
        self.conn.commit()

    def run(self, run_id: int) -> Dict[str, Any]:
        row = self.conn.execute("SELECT * FROM runs WHERE id = ?", (run_id,)).fetchone()
        return dict(row) if row else {}

    def runs(self, *, kind: str | None = None, limit: int | None = None) -> List[Dict[str, Any]]:
        sql = "SELECT * FROM runs"
        params: List[Any] = []
        if kind:
            sql += " WHERE kind = ?"
            params.append(kind)
        sql += " ORDER BY id ASC"
        if limit:
            sql += " LIMIT ?"
            params.append(int(limit))
        return [dict(row) for row in self.conn.execute(sql, params).fetchall()]

    def checks(self, run_id: int) -> List[Dict[str, Any]]:
        rows = self.conn.execute(
            "SELECT name, passed, value, threshold, detail FROM checks WHERE run_id = ? ORDER BY id",
            (run_id,),
        ).fetchall()
        return [
            {
                "name": row["name"],
                "passed": bool(row["passed"]),
                "value": row["value"],
                "threshold": row["threshold"],
                "detail": row["detail"] or "",
            }
            for row in rows
        ]

    def summary(self, *, run_id: Optional[int] = None) -> Dict[str, int]:
        runs = [self.run(run_id)] if run_id is not None else self.runs()
        runs = [r for r in runs if r]
        kinds = Counter(r["kind"] for r in runs)
        statuses = Counter(r["status"] for r in runs)
        failed = Counter(
            check["name"] for r in runs for check in self.checks(r["id"]) if not check["passed"]
        )
        return {
            "total": len(runs),
            **{f"kind_{k}": v for k, v in kinds.items()},
            **{f"status_{k}": v for k, v in statuses.items()},
            **{f"failed_{k}": v for k, v in failed.items()},
        }

    def save_run_summary(self, run_id: int) -> Dict[str, Any]:
        run = self.run(run_id)
        if not run:
            return {}
        report = {"run": run, "summary": self.summary(run_id=run_id), "checks": self.checks(run_id)}
        self.conn.execute(
            """
            INSERT OR REPLACE INTO reports (run_id, summary, created_at)
            VALUES (?, ?, ?)
        """,
            (run_id, json.dumps(report, ensure_ascii=False), datetime.utcnow().isoformat()),
        )
        self.conn.commit()
        return report

    def latest_summary(self) -> Dict[str, Any]:
        row = self.conn.execute(
            "SELECT summary FROM reports ORDER BY run_id DESC LIMIT 1"
        ).fetchone()
        if not row:
            return {}
        try:
            return json.loads(row["summary"])
        except json.JSONDecodeError:
            return {}
