"""Result tables, the invariant ledger and their serialisation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

__all__ = ["FORMAT_VERSION", "LedgerEntry", "Table", "Report", "format_cell"]

FORMAT_VERSION = 1


def format_cell(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _finite(v: Any) -> bool:
    return not isinstance(v, float) or math.isfinite(v)


@dataclass
class LedgerEntry:
    name: str
    passed: bool
    slack: float | None = None
    detail: str = ""

    def as_dict(self) -> dict:
        slack = self.slack if self.slack is None or math.isfinite(self.slack) else None
        return {"name": self.name, "passed": self.passed, "slack": slack, "detail": self.detail}


@dataclass
class Table:
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def add(self, row: dict) -> None:
        values = tuple(row[c] for c in self.columns)
        bad = [c for c, v in zip(self.columns, values) if not _finite(v)]
        if bad:
            raise ValueError(f"non-finite value in column(s) {', '.join(bad)}")
        self.rows.append(values)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([format_cell(v) for v in r])
        return buf.getvalue()


@dataclass
class Report:
    kind: str
    fingerprint: dict
    table: Table
    ledger: list[LedgerEntry] = field(default_factory=list)
    plot: Table = field(default_factory=lambda: Table(("series", "x_name", "x", "y_name", "y")))

    def check(self, name: str, passed: bool, slack: float | None = None, detail: str = "") -> bool:
        if any(e.name == name for e in self.ledger):
            raise ValueError(f"ledger entry {name!r} recorded twice")
        self.ledger.append(LedgerEntry(name, bool(passed), slack, detail))
        return bool(passed)

    def fail(self, name: str, exc: BaseException) -> None:
        self.check(name, False, None, f"{type(exc).__name__}: {exc}")

    @property
    def all_passed(self) -> bool:
        return all(e.passed for e in self.ledger)

    def to_json(self) -> str:
        doc = {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "fingerprint": self.fingerprint,
            "columns": list(self.table.columns),
            "rows": [list(r) for r in self.table.rows],
            "ledger": [e.as_dict() for e in self.ledger],
            "passed": self.all_passed,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def write(self, out_dir: str | Path, csv_name: str, json_name: str, plot_name: str) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / csv_name, out / json_name, out / plot_name]
        for p, text in zip(paths, (self.table.to_csv(), self.to_json(), self.plot.to_csv())):
            p.write_text(text, encoding="utf-8", newline="")
        return paths
