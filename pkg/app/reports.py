"""JSON and CSV writers. Every float goes through `round_significant` first so the
two formats carry the same numbers.
"""

import csv
import io
import math
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any, Literal

import orjson
import structlog
from pydantic import BaseModel, ValidationError

from app.constants import (
    CONSTANTS_CSV_HEADER,
    RECORD_CSV_HEADER,
    SCAN_CSV_HEADER,
    SIGNIFICANT_DIGITS,
    SPHERE_CSV_HEADER,
)
from app.errors import ConfigurationError
from app.integrate import SphereComparison
from app.sharp_constants import ComparisonRow
from app.verify import ScanRow, VerificationReport

logger = structlog.get_logger(__name__)

OutputFormat = Literal["json", "csv"]


def round_significant(value: float, digits: int = SIGNIFICANT_DIGITS) -> float:
    if not math.isfinite(value) or value == 0:
        return value
    return float(f"{value:.{digits}g}")


def _rounded(obj: Any) -> Any:
    if isinstance(obj, float):
        return round_significant(obj)
    if isinstance(obj, dict):
        return {key: _rounded(value) for key, value in obj.items()}
    if isinstance(obj, list | tuple):
        return [_rounded(value) for value in obj]
    return obj


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{round_significant(value):.{SIGNIFICANT_DIGITS}g}"
    return str(value)


def dumps_json(payload: BaseModel | Sequence[BaseModel]) -> bytes:
    if isinstance(payload, BaseModel):
        data = payload.model_dump(mode="json")
    else:
        data = [item.model_dump(mode="json") for item in payload]
    return orjson.dumps(_rounded(data), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS) + b"\n"


def _dumps_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(value) for value in row])
    return buffer.getvalue().encode()


def report_csv(report: VerificationReport) -> bytes:
    """One row per record. With several structures in a report the function id
    is qualified as `<preset>/<function_id>`.
    """
    qualify = len(report.structures) > 1
    return _dumps_csv(
        RECORD_CSV_HEADER,
        (
            (
                record.inequality,
                f"{record.preset}/{record.function_id}" if qualify else record.function_id,
                record.alpha,
                record.deficit,
                record.error_estimate,
                record.passed,
            )
            for record in report.records
        ),
    )


def scan_csv(rows: Sequence[ScanRow]) -> bytes:
    return _dumps_csv(
        SCAN_CSV_HEADER,
        ([getattr(row, column) for column in SCAN_CSV_HEADER] for row in rows),
    )


def constants_csv(rows: Sequence[ComparisonRow]) -> bytes:
    columns = ("label",) + CONSTANTS_CSV_HEADER[1:]
    return _dumps_csv(
        CONSTANTS_CSV_HEADER,
        ([getattr(row, column) for column in columns] for row in rows),
    )


def sphere_csv(rows: Sequence[SphereComparison]) -> bytes:
    return _dumps_csv(
        SPHERE_CSV_HEADER,
        (
            (
                row.label,
                row.q,
                row.norm,
                row.analytic.value,
                row.ball_volume_mc.value,
                row.ball_volume_mc.std_error,
                row.gauss_weight_mc.value,
                row.gauss_weight_mc.std_error,
                row.agreement,
            )
            for row in rows
        ),
    )


def render_report(report: VerificationReport, fmt: OutputFormat) -> bytes:
    return dumps_json(report) if fmt == "json" else report_csv(report)


def render_scan(rows: Sequence[ScanRow], fmt: OutputFormat) -> bytes:
    return dumps_json(rows) if fmt == "json" else scan_csv(rows)


def render_constants(rows: Sequence[ComparisonRow], fmt: OutputFormat) -> bytes:
    return dumps_json(rows) if fmt == "json" else constants_csv(rows)


def render_spheres(rows: Sequence[SphereComparison], fmt: OutputFormat) -> bytes:
    return dumps_json(rows) if fmt == "json" else sphere_csv(rows)


def write_output(data: bytes, path: Path | None, stream: Any) -> None:
    if path is None:
        stream.write(data.decode())
        stream.flush()
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    logger.bind(path=str(path), size=len(data)).info("Report written")


def load_report(path: Path) -> VerificationReport:
    try:
        return VerificationReport.model_validate_json(path.read_bytes())
    except OSError as e:
        raise ConfigurationError(f"Cannot read report {path}: {e}") from e


def report_diagnostics(path: Path) -> list[str]:
    """Schema violations of a JSON report, one message per error; empty when valid."""
    try:
        load_report(path)
    except ValidationError as e:
        return [
            f"{'.'.join(str(part) for part in error['loc']) or '<root>'}: {error['msg']}"
            for error in e.errors()
        ]
    return []
