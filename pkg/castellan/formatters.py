"""Rich renderables for certificates, audit results and series."""

from __future__ import annotations

from typing import Any

from rich import box
from rich.markup import escape
from rich.table import Table

from castellan.config import (
    STYLE_DIM,
    STYLE_ERROR,
    STYLE_INFO,
    STYLE_RATIONAL,
    STYLE_SUCCESS,
    STYLE_TITLE,
)
from castellan.exceptions import RationalParseError
from castellan.models import parse_rational
from castellan.repository import decimal_text

# Top-level output keys shown in the summary table, per pipeline.
SUMMARY_KEYS: dict[str, tuple[str, ...]] = {
    "folner": ("size", "ratio", "boundary_ratio"),
    "castle-l33": ("footprint_size",),
    "castle-t34": ("ladder_sizes",),
    "joseph-build": ("modulus", "quotient_size", "w_size", "transitive"),
    "fixed-fractions": ("monotonicity_violations", "composition"),
    "zstab-witness": ("n", "eps", "m", "eta", "P", "Q", "c", "r", "quotient_size", "psi_relations", "order_zero"),
}


def verdict(passed: bool) -> str:
    if passed:
        return f"[{STYLE_SUCCESS}]✓ passed[/{STYLE_SUCCESS}]"
    return f"[{STYLE_ERROR}]✗ failed[/{STYLE_ERROR}]"


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return verdict(value)
    if isinstance(value, str) and "/" in value:
        try:
            decimal = decimal_text(parse_rational(value))
        except RationalParseError:
            return value
        return f"[{STYLE_RATIONAL}]{value}[/{STYLE_RATIONAL}] [{STYLE_DIM}]≈ {decimal}[/{STYLE_DIM}]"
    if isinstance(value, list):
        return ", ".join(str(v) for v in value)
    return str(value)


def _nested_rows(outputs: dict[str, Any]) -> list[tuple[str, Any]]:
    rows: list[tuple[str, Any]] = []
    certificate = outputs.get("certificate")
    if isinstance(certificate, dict):
        rows += [("density", certificate.get("density")), ("epsilon", certificate.get("epsilon"))]
    measures = outputs.get("measures")
    if isinstance(measures, dict):
        rows += [(f"measure {key}", value) for key, value in sorted(measures.items())]
    report = outputs.get("report")
    if isinstance(report, dict):
        rows += [(f"check {key}", value) for key, value in sorted(report.items())]
    for key in ("afm_check", "generator_rules", "partition", "xi_invariance", "structure"):
        block = outputs.get(key)
        if isinstance(block, dict) and "passed" in block:
            rows.append((key, block["passed"]))
    return rows


def certificate_table(payload: dict[str, Any]) -> Table:
    """Headline facts of a certificate: pipeline, verdict and key outputs."""
    table = Table(
        title=f"[{STYLE_TITLE}]{payload.get('pipeline', '?')}[/{STYLE_TITLE}] certificate",
        box=box.SIMPLE,
        show_header=True,
        header_style="bold",
    )
    table.add_column("Field", style=STYLE_INFO)
    table.add_column("Value")
    table.add_row("verdict", verdict(bool(payload.get("passed"))))
    failure = payload.get("failure")
    if failure:
        message = escape(str(failure.get("message")))
        table.add_row("failure", f"[{STYLE_ERROR}]{failure.get('error')}[/{STYLE_ERROR}]: {message}")
    outputs = payload.get("outputs", {})
    for key in SUMMARY_KEYS.get(payload.get("pipeline", ""), ()):
        if key in outputs:
            table.add_row(key, _cell(outputs[key]))
    for key, value in _nested_rows(outputs):
        table.add_row(key, _cell(value))
    if "series" in outputs:
        table.add_row("series", ", ".join(sorted(outputs["series"])))
    if "timing" in payload:
        table.add_row("seconds", str(payload["timing"].get("seconds")))
    table.add_row("digest", f"[{STYLE_DIM}]{str(payload.get('digest', ''))[:16]}…[/{STYLE_DIM}]")
    return table


def audit_table(result: Any) -> Table:
    table = Table(box=box.SIMPLE, show_header=True, header_style="bold")
    table.add_column("Stage", style=STYLE_INFO)
    table.add_column("Finding")
    if result.passed:
        table.add_row(result.stage, verdict(True))
    for failure in result.failures:
        table.add_row(result.stage, f"[{STYLE_ERROR}]{escape(failure)}[/{STYLE_ERROR}]")
    return table


def series_table(name: str, data: dict[str, Any], limit: int = 20) -> Table:
    """The first ``limit`` rows of one series."""
    table = Table(title=name, box=box.SIMPLE, show_header=True, header_style="bold")
    rational = set(data.get("rational", ()))
    for column in data["columns"]:
        table.add_column(column, style=STYLE_RATIONAL if column in rational else None, justify="right")
    for row in data["rows"][:limit]:
        table.add_row(*(str(v) for v in row))
    hidden = len(data["rows"]) - limit
    if hidden > 0:
        table.add_row(f"{hidden} more row(s)", style="dim")
    return table
