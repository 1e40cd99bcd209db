"""Tests for castellan/repository.py: signing, loading and CSV export."""
from __future__ import annotations

import csv
import dataclasses
import json
from fractions import Fraction

import pytest

from castellan.config import CERTIFICATE_SCHEMA
from castellan.exceptions import CertificateError, CertificateSchemaError, SeriesNotFoundError
from castellan.models import Certificate
from castellan.repository import CertificateStore, canonical_json, compute_digest, decimal_text


@pytest.fixture
def store() -> CertificateStore:
    return CertificateStore()


@pytest.fixture
def certificate() -> Certificate:
    return Certificate(
        pipeline="folner",
        inputs={"experiment": {"pipeline": "folner"}, "folner": {"K": "1; -1", "eps": "1/2"}},
        outputs={
            "size": 3,
            "series": {
                "ratios": {
                    "columns": ["m", "value"],
                    "rational": ["value"],
                    "rows": [[1, "1/3"], [2, "1/2"], [3, "2"]],
                },
            },
        },
        passed=True,
    )


# ---------------------------------------------------------------------------
# Canonical form and digest
# ---------------------------------------------------------------------------

class TestCanonicalJson:
    def test_keys_are_sorted(self):
        assert canonical_json({"b": 1, "a": 2}).index('"a"') < canonical_json({"b": 1, "a": 2}).index('"b"')

    def test_trailing_newline(self):
        assert canonical_json({}).endswith("\n")

    def test_unicode_is_kept(self):
        assert "Følner" in canonical_json({"name": "Følner"})


class TestDigest:
    def test_ignores_digest_field(self):
        payload = {"a": 1}
        assert compute_digest(payload) == compute_digest({"a": 1, "digest": "anything"})

    def test_key_order_is_irrelevant(self):
        assert compute_digest({"a": 1, "b": 2}) == compute_digest({"b": 2, "a": 1})

    def test_content_changes_digest(self):
        assert compute_digest({"a": 1}) != compute_digest({"a": 2})

    def test_hex_sha256(self):
        digest = compute_digest({})
        assert len(digest) == 64
        int(digest, 16)


class TestDecimalText:
    @pytest.mark.parametrize(
        "value, text",
        [
            (Fraction(1, 3), "0.333333333333"),
            (Fraction(1, 2), "0.5"),
            (Fraction(2, 3), "0.666666666667"),
            (Fraction(2), "2"),
        ],
    )
    def test_twelve_significant_digits(self, value, text):
        assert decimal_text(value) == text


# ---------------------------------------------------------------------------
# Writing and reading
# ---------------------------------------------------------------------------

class TestPayload:
    def test_schema_and_digest_are_added(self, store, certificate):
        payload = store.to_payload(certificate)
        assert payload["schema"] == CERTIFICATE_SCHEMA
        assert payload["digest"] == compute_digest(payload)

    def test_timing_omitted_when_absent(self, store, certificate):
        assert "timing" not in store.to_payload(certificate)

    def test_timing_kept_when_present(self, store, certificate):
        timed = dataclasses.replace(certificate, timing={"seconds": 1.5})
        assert store.to_payload(timed)["timing"] == {"seconds": 1.5}

    def test_failure_is_recorded(self, store, certificate):
        payload = store.to_payload(certificate)
        assert "failure" in payload
        assert payload["failure"] is None

    def test_dumps_is_byte_stable(self, store, certificate):
        assert store.dumps(certificate) == store.dumps(certificate)


class TestSaveAndLoad:
    def test_round_trip(self, store, certificate, tmp_path):
        path = store.save(certificate, tmp_path / "c.json")
        payload = store.load(path)
        assert payload == store.to_payload(certificate)

    def test_file_is_canonical(self, store, certificate, tmp_path):
        path = store.save(certificate, tmp_path / "c.json")
        assert path.read_text(encoding="utf-8") == store.dumps(certificate)

    def test_save_into_missing_directory(self, store, certificate, tmp_path):
        with pytest.raises(CertificateError, match="cannot write"):
            store.save(certificate, tmp_path / "absent" / "c.json")

    def test_load_missing_file(self, store, tmp_path):
        with pytest.raises(CertificateError) as exc_info:
            store.load(tmp_path / "absent.json")
        assert not isinstance(exc_info.value, CertificateSchemaError)

    def test_load_not_json(self, store, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(CertificateSchemaError, match="not JSON"):
            store.load(path)


class TestCheckSchema:
    def test_valid_payload(self, store, certificate):
        store.check_schema(store.to_payload(certificate))

    def test_top_level_list(self, store):
        with pytest.raises(CertificateSchemaError, match="not an object"):
            store.check_schema([])

    @pytest.mark.parametrize("key", ["schema", "pipeline", "inputs", "outputs", "passed", "digest"])
    def test_missing_field(self, store, certificate, key):
        payload = store.to_payload(certificate)
        del payload[key]
        with pytest.raises(CertificateSchemaError, match=key):
            store.check_schema(payload)

    def test_mistyped_field(self, store, certificate):
        payload = store.to_payload(certificate) | {"passed": "yes"}
        with pytest.raises(CertificateSchemaError, match="passed"):
            store.check_schema(payload)

    def test_unknown_schema(self, store, certificate):
        payload = store.to_payload(certificate) | {"schema": "castellan/certificate-0"}
        with pytest.raises(CertificateSchemaError, match="unknown schema"):
            store.check_schema(payload)

    def test_unknown_pipeline(self, store, certificate):
        payload = store.to_payload(certificate) | {"pipeline": "spectral"}
        with pytest.raises(CertificateSchemaError, match="unknown pipeline"):
            store.check_schema(payload)

    def test_failure_must_be_object(self, store, certificate):
        payload = store.to_payload(certificate) | {"failure": "boom"}
        with pytest.raises(CertificateSchemaError, match="failure"):
            store.check_schema(payload)

    def test_source_is_reported(self, store, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"schema": CERTIFICATE_SCHEMA}), encoding="utf-8")
        with pytest.raises(CertificateSchemaError) as exc_info:
            store.load(path)
        assert exc_info.value.filepath == str(path)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

class TestExportCsv:
    def test_series_names(self, store, certificate):
        assert store.series_names(store.to_payload(certificate)) == ["ratios"]

    def test_no_series(self, store):
        assert store.series_names({"outputs": {}}) == []

    def test_decimal_twins(self, store, certificate, tmp_path):
        path = tmp_path / "ratios.csv"
        count = store.export_csv(store.to_payload(certificate), "ratios", path)
        assert count == 3
        with path.open(encoding="utf-8", newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows == [
            ["m", "value", "value_decimal"],
            ["1", "1/3", "0.333333333333"],
            ["2", "1/2", "0.5"],
            ["3", "2", "2"],
        ]

    def test_unknown_series(self, store, certificate, tmp_path):
        with pytest.raises(SeriesNotFoundError) as exc_info:
            store.export_csv(store.to_payload(certificate), "missing", tmp_path / "x.csv")
        assert exc_info.value.available == ["ratios"]

    def test_unwritable_target(self, store, certificate, tmp_path):
        with pytest.raises(CertificateError):
            store.export_csv(store.to_payload(certificate), "ratios", tmp_path / "absent" / "x.csv")

    def test_empty_series_writes_header_only(self, store, certificate, tmp_path):
        certificate.outputs["series"]["ratios"]["rows"] = []
        path = tmp_path / "empty.csv"
        assert store.export_csv(store.to_payload(certificate), "ratios", path) == 0
        assert path.read_text(encoding="utf-8").splitlines() == ["m,value,value_decimal"]
