"""Certificate persistence: canonical JSON with a digest, and CSV series export.

CertificateStore is the only layer that reads or writes files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict
from decimal import Context
from fractions import Fraction
from pathlib import Path
from typing import Any

from castellan.config import CERTIFICATE_SCHEMA, CSV_DECIMAL_DIGITS, JSON_INDENT, PIPELINES
from castellan.exceptions import CertificateError, CertificateSchemaError, SeriesNotFoundError
from castellan.models import Certificate, parse_rational

logger = logging.getLogger(__name__)

REQUIRED_FIELDS = {
    "schema": str,
    "pipeline": str,
    "inputs": dict,
    "outputs": dict,
    "passed": bool,
    "digest": str,
}


def canonical_json(payload: dict[str, Any]) -> str:
    return json.dumps(payload, sort_keys=True, indent=JSON_INDENT, ensure_ascii=False) + "\n"


def compute_digest(payload: dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON of every field except ``digest``."""
    body = {k: v for k, v in payload.items() if k != "digest"}
    return hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()


def decimal_text(value: Fraction) -> str:
    context = Context(prec=CSV_DECIMAL_DIGITS)
    return str(context.divide(value.numerator, value.denominator))


class CertificateStore:
    """Serialize, sign, load and export certificates."""

    # ------------------------------------------------------------------
    # Writing
    # ------------------------------------------------------------------

    def to_payload(self, certificate: Certificate) -> dict[str, Any]:
        payload = asdict(certificate)
        if payload.get("timing") is None:
            payload.pop("timing", None)
        payload["schema"] = CERTIFICATE_SCHEMA
        payload["digest"] = compute_digest(payload)
        return payload

    def dumps(self, certificate: Certificate) -> str:
        return canonical_json(self.to_payload(certificate))

    def save(self, certificate: Certificate, path: str | Path) -> Path:
        """Write the signed certificate to ``path``.

        Raises:
            CertificateError: If the file cannot be written.
        """
        path = Path(path)
        try:
            path.write_text(self.dumps(certificate), encoding="utf-8")
        except OSError as exc:
            raise CertificateError(str(path), f"cannot write: {exc.strerror}") from exc
        logger.info("certificate written to %s", path)
        return path

    # ------------------------------------------------------------------
    # Reading
    # ------------------------------------------------------------------

    def load(self, path: str | Path) -> dict[str, Any]:
        """Read a certificate and check its shape (not its claims).

        Raises:
            CertificateError: If the file is unreadable or not JSON.
            CertificateSchemaError: If required fields are missing or mistyped.
        """
        path = Path(path)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise CertificateError(str(path), f"cannot read: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise CertificateSchemaError(str(path), f"not JSON: {exc.msg}") from exc
        self.check_schema(payload, str(path))
        return payload

    def check_schema(self, payload: Any, source: str = "<certificate>") -> None:
        if not isinstance(payload, dict):
            raise CertificateSchemaError(source, "top level is not an object")
        for key, kind in REQUIRED_FIELDS.items():
            if not isinstance(payload.get(key), kind):
                raise CertificateSchemaError(source, f"field '{key}' is missing or not {kind.__name__}")
        if payload["schema"] != CERTIFICATE_SCHEMA:
            raise CertificateSchemaError(source, f"unknown schema '{payload['schema']}'")
        if payload["pipeline"] not in PIPELINES:
            raise CertificateSchemaError(source, f"unknown pipeline '{payload['pipeline']}'")
        failure = payload.get("failure")
        if failure is not None and not isinstance(failure, dict):
            raise CertificateSchemaError(source, "field 'failure' is not an object")

    # ------------------------------------------------------------------
    # Export
    # ------------------------------------------------------------------

    def series_names(self, payload: dict[str, Any]) -> list[str]:
        return sorted(payload.get("outputs", {}).get("series", {}))

    def export_csv(self, payload: dict[str, Any], name: str, path: str | Path) -> int:
        """Write one series as CSV; each rational column gets a decimal twin.

        Returns:
            The number of data rows written.

        Raises:
            SeriesNotFoundError: If the certificate has no such series.
        """
        available = self.series_names(payload)
        if name not in available:
            raise SeriesNotFoundError(name, available)
        table = payload["outputs"]["series"][name]
        rational = set(table.get("rational", ()))
        header: list[str] = []
        for column in table["columns"]:
            header.append(column)
            if column in rational:
                header.append(f"{column}_decimal")
        path = Path(path)
        try:
            with path.open("w", encoding="utf-8", newline="") as handle:
                writer = csv.writer(handle)
                writer.writerow(header)
                for row in table["rows"]:
                    cells: list[Any] = []
                    for column, value in zip(table["columns"], row, strict=True):
                        cells.append(value)
                        if column in rational:
                            cells.append(decimal_text(parse_rational(value)))
                    writer.writerow(cells)
        except OSError as exc:
            raise CertificateError(str(path), f"cannot write: {exc.strerror}") from exc
        logger.info("series %s exported to %s (%s rows)", name, path, len(table["rows"]))
        return len(table["rows"])
