from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from db.database import Database

FLOAT_FORMAT = "%.17g"


def jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings "inf", "-inf", "nan"."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        number = float(value)
        return number if math.isfinite(number) else str(number)
    if isinstance(value, complex):
        return [jsonable(value.real), jsonable(value.imag)]
    if isinstance(value, Path):
        return str(value)
    return value


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    detail: str = ""

    def as_dict(self) -> Dict[str, Any]:
        return jsonable(
            {
                "name": self.name,
                "passed": self.passed,
                "value": self.value,
                "threshold": self.threshold,
                "detail": self.detail,
            }
        )


class Reporter:
    """Collect invariant outcomes and output files of one run; mirror checks into the ledger."""

    def __init__(
        self,
        output_dir: str | Path,
        *,
        kind: str,
        db: Optional[Database] = None,
        run_id: Optional[int] = None,
    ) -> None:
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.kind = kind
        self.db = db
        self.run_id = run_id
        self.checks: List[CheckResult] = []
        self.outputs: List[str] = []

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failed(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def check(
        self,
        name: str,
        passed: bool,
        value: Optional[float] = None,
        threshold: Optional[float] = None,
        detail: str = "",
    ) -> bool:
        result = CheckResult(
            name,
            bool(passed),
            None if value is None else float(value),
            None if threshold is None else float(threshold),
            detail,
        )
        self.checks.append(result)
        if self.db is not None and self.run_id is not None:
            self.db.record_check(
                self.run_id,
                name=name,
                passed=result.passed,
                value=result.value,
                threshold=result.threshold,
                detail=detail,
            )
        return result.passed

    def _track(self, path: Path) -> Path:
        name = path.relative_to(self.output_dir).as_posix()
        if name not in self.outputs:
            self.outputs.append(name)
        return path

    def table(self, name: str, frame: pd.DataFrame) -> Path:
        """Write `<name>.csv`: comma separated, UTF-8, header row, 17 significant digits."""
        path = self.output_dir / f"{name}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding="utf-8", lineterminator="\n")
        return self._track(path)

    def write_json(self, name: str, payload: Any) -> Path:
        path = self.output_dir / f"{name}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(jsonable(payload), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        return self._track(path)

    def add_output(self, path: str | Path) -> Path:
        return self._track(Path(path))

    def flush(self, *, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Write summary.json {kind, passed, checks, outputs} and return it."""
        summary: Dict[str, Any] = {
            "kind": self.kind,
            "passed": self.passed,
            "checks": [check.as_dict() for check in self.checks],
            "outputs": sorted(self.outputs),
        }
        if extra:
            summary.update(jsonable(extra))
        path = self.output_dir / "summary.json"
        path.write_text(json.dumps(summary, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        if self.db is not None and self.run_id is not None:
            self.db.save_run_summary(self.run_id)
        return summary
