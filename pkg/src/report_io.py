"""
Report emission for the CLI: versioned JSON run reports and CSV tables.
Apart from the optional timing object, identical inputs give byte-identical output.
"""
import csv
import io
import json
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

from .action_generators import HarnessRow
from .weakeq_config import FORMAT_VERSION

HARNESS_COLUMNS = ["format_version", "n", "lambda", "d_a", "d_b", "d_prod", "bound", "holds"]


@dataclass
class RunReport:
    """One CLI invocation: what went in (content hashes), parameters, results and their mode."""
    command: str
    inputs: Dict[str, str] = field(default_factory=dict)
    params: Dict[str, Any] = field(default_factory=dict)
    results: Dict[str, Any] = field(default_factory=dict)
    mode: str = "exact"
    seed: int = 0
    started_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    _clock: float = field(default_factory=time.perf_counter, repr=False)

    def to_dict(self, include_timing: bool = True) -> Dict[str, Any]:
        doc: Dict[str, Any] = {
            "format_version": FORMAT_VERSION,
            "command": self.command,
            "inputs": dict(sorted(self.inputs.items())),
            "params": self.params,
            "mode": self.mode,
            "seed": self.seed,
            "results": self.results,
        }
        if include_timing:
            doc["timing"] = {
                "started_at": self.started_at,
                "wall_time_s": round(time.perf_counter() - self._clock, 6),
            }
        return doc


def _emit(text: str, output: Optional[Union[str, Path]]) -> None:
    if output is None:
        sys.stdout.write(text)
        return
    path = Path(output)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def render_json(report: RunReport, include_timing: bool = True) -> str:
    return json.dumps(report.to_dict(include_timing), indent=2, sort_keys=True) + "\n"


def write_json_report(report: RunReport, output: Optional[Union[str, Path]] = None,
                      include_timing: bool = True) -> None:
    _emit(render_json(report, include_timing), output)


def render_csv(columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_csv_cell(value) for value in row])
    return buffer.getvalue()


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def harness_csv(rows: List[HarnessRow]) -> str:
    return render_csv(HARNESS_COLUMNS, (
        [FORMAT_VERSION, row.n, row.lam, row.d_a, row.d_b, row.d_prod, row.bound, row.holds] for row in rows
    ))


def write_csv(text: str, output: Optional[Union[str, Path]] = None) -> None:
    _emit(text, output)
