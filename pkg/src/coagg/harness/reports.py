"""Report containers and deterministic serialization.

Output files must be byte-identical across runs with the same seed, so cells
are formatted with repr() of python floats (shortest round-trip form), rows
use "\n" line endings, and nothing derived from wall time is written.
"""

import dataclasses
import json
from typing import Iterable, Sequence


class ConfigError(ValueError):
    """Bad run configuration; the CLI maps this to exit code 2."""


@dataclasses.dataclass(frozen=True)
class MetricRow:
    """One pre-registered check: bound fixed before sampling, then compared."""

    metric: str
    value: float
    bound: float
    margin: float
    passed: bool


@dataclasses.dataclass(frozen=True)
class DataTable:
    header: tuple[str, ...]
    rows: tuple[tuple, ...]


@dataclasses.dataclass
class ExperimentReport:
    name: str
    config: dict
    rows: list[MetricRow]
    trials: int
    wall_time_s: float = 0.0
    data: DataTable | None = None
    side_tables: dict[str, DataTable] = dataclasses.field(default_factory=dict)
    # when set, this exact text is what a jsonl write emits (the generation
    # loop's step schema omits absent fields rather than writing nulls)
    raw_jsonl: str | None = None

    @property
    def all_pass(self) -> bool:
        return all(r.passed for r in self.rows)

    def metric_table(self) -> DataTable:
        return DataTable(
            header=("metric", "value", "bound", "margin", "pass"),
            rows=tuple(
                (r.metric, r.value, r.bound, r.margin, r.passed) for r in self.rows
            ),
        )

    def output_table(self) -> DataTable:
        return self.data if self.data is not None else self.metric_table()


def format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(float(value))
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        if "," in value or "\n" in value or '"' in value:
            raise ValueError(f"cell {value!r} would need CSV quoting")
        return value
    # numpy scalars land here; route through their python equivalent
    if hasattr(value, "item"):
        return format_cell(value.item())
    raise TypeError(f"unsupported cell type {type(value)!r}")


def json_cell(value):
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        return float(value)
    if hasattr(value, "item"):
        return json_cell(value.item())
    raise TypeError(f"unsupported cell type {type(value)!r}")


def table_to_csv(table: DataTable) -> str:
    lines = [",".join(table.header)]
    for row in table.rows:
        lines.append(",".join(format_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def table_to_jsonl(table: DataTable) -> str:
    out = []
    for row in table.rows:
        obj = {k: json_cell(v) for k, v in zip(table.header, row)}
        out.append(json.dumps(obj))
    return "\n".join(out) + "\n"


def write_table(table: DataTable, path: str, fmt: str) -> None:
    if fmt == "csv":
        text = table_to_csv(table)
    elif fmt == "jsonl":
        text = table_to_jsonl(table)
    else:
        raise ConfigError(f"unknown format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def render_report_lines(report: ExperimentReport) -> list[str]:
    """Stable stdout rendering: one line per metric row plus a verdict."""
    lines = [f"report {report.name} trials={report.trials}"]
    for r in report.rows:
        lines.append(
            f"  [{'pass' if r.passed else 'FAIL'}] {r.metric}"
            f" value={format_cell(r.value)} bound={format_cell(r.bound)}"
            f" margin={format_cell(r.margin)}"
        )
    lines.append("PASS" if report.all_pass else "FAIL")
    return lines


def rows_from_pairs(pairs: Iterable[Sequence]) -> tuple[tuple, ...]:
    return tuple(tuple(p) for p in pairs)
