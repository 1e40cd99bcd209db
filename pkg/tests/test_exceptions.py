"""Tests for castellan/exceptions.py custom exception hierarchy."""
from __future__ import annotations

from fractions import Fraction

import pytest

from castellan.exceptions import (
    ActionError,
    CastellanError,
    CastleError,
    CastlePreconditionError,
    CertificateError,
    CertificateSchemaError,
    ClaimMismatchError,
    ConditionViolationError,
    ConfigError,
    ElementParseError,
    EmptyFolnerSetError,
    FolnerCapError,
    GeneratorIndexError,
    InvalidPermutationError,
    InvalidResolutionError,
    NoAdmissiblePrimeError,
    NonNestedTablesError,
    ParameterError,
    QuotientCapError,
    RationalParseError,
    SectionTooSmallError,
    SeriesNotFoundError,
    SpaceMismatchError,
    StageFailureError,
    TraceGapPreconditionError,
    WitnessError,
    WitnessSearchError,
)


class TestExceptionHierarchy:
    @pytest.mark.parametrize(
        "child, parent",
        [
            (InvalidPermutationError, ActionError),
            (InvalidResolutionError, ActionError),
            (EmptyFolnerSetError, ActionError),
            (FolnerCapError, ActionError),
            (SectionTooSmallError, ActionError),
            (SpaceMismatchError, ActionError),
            (CastlePreconditionError, CastleError),
            (StageFailureError, CastleError),
            (NoAdmissiblePrimeError, ParameterError),
            (ConditionViolationError, ParameterError),
            (QuotientCapError, ParameterError),
            (NonNestedTablesError, ParameterError),
            (WitnessSearchError, WitnessError),
            (TraceGapPreconditionError, WitnessError),
            (CertificateSchemaError, CertificateError),
            (ClaimMismatchError, CertificateError),
        ],
    )
    def test_family(self, child, parent):
        assert issubclass(child, parent)

    @pytest.mark.parametrize(
        "family",
        [
            GeneratorIndexError,
            ElementParseError,
            ActionError,
            CastleError,
            ParameterError,
            WitnessError,
            ConfigError,
            RationalParseError,
            CertificateError,
            SeriesNotFoundError,
        ],
    )
    def test_every_family_is_a_castellan_error(self, family):
        assert issubclass(family, CastellanError)

    def test_castellan_error_is_exception(self):
        assert issubclass(CastellanError, Exception)


class TestExceptionInstantiation:
    def test_default_message(self):
        assert str(CastellanError()) == "An error occurred in castellan."

    def test_generator_index(self):
        exc = GeneratorIndexError(3, 2)
        assert (exc.index, exc.rank) == (3, 2)
        assert "1..2" in str(exc)

    def test_element_parse(self):
        exc = ElementParseError("0:x@1", "bad lamp")
        assert "0:x@1" in str(exc)
        assert exc.reason == "bad lamp"

    def test_folner_cap_with_best_ratio(self):
        exc = FolnerCapError(10, Fraction(2, 11))
        assert str(exc) == "Følner search exhausted cap 10 before certification (best ratio 2/11)"

    def test_folner_cap_without_best_ratio(self):
        assert str(FolnerCapError(7)).endswith("cap 7 before certification")

    def test_stage_failure_keeps_stage(self):
        exc = StageFailureError(3, "non-free part too dense")
        assert exc.stage == 3
        assert str(exc) == "Stage 3 failed: non-free part too dense"

    def test_condition_violation(self):
        exc = ConditionViolationError(6, "@1", "support collides")
        assert exc.condition == 6
        assert "Condition (6) fails for @1" in str(exc)

    def test_quotient_cap(self):
        exc = QuotientCapError(81000, 1000)
        assert (exc.size, exc.cap) == (81000, 1000)

    def test_trace_gap_precondition(self):
        exc = TraceGapPreconditionError(Fraction(1, 8), Fraction(1, 2))
        assert "1/8" in str(exc)
        assert "1/2" in str(exc)

    def test_config_error_path(self):
        exc = ConfigError("folner.eps", "malformed rational")
        assert exc.path == "folner.eps"
        assert str(exc) == "Invalid configuration 'folner.eps': malformed rational"

    def test_rational_parse(self):
        assert RationalParseError("1/0").text == "1/0"

    def test_certificate_error_filepath(self):
        exc = CertificateSchemaError("c.json", "not JSON")
        assert exc.filepath == "c.json"
        assert exc.message == "Certificate 'c.json': not JSON"

    def test_series_not_found_lists_available(self):
        exc = SeriesNotFoundError("x", ["a", "b"])
        assert "available: a, b" in str(exc)
        assert "available: none" in str(SeriesNotFoundError("x"))

    def test_claim_mismatch_field(self):
        exc = ClaimMismatchError("outputs.stages", "tower counts do not split the castle")
        assert exc.field == "outputs.stages"
        assert exc.filepath == "outputs.stages"


class TestExceptionRaising:
    def test_catch_as_base_class(self):
        with pytest.raises(CastellanError):
            raise StageFailureError(1, "no free states")

    def test_catch_as_family(self):
        with pytest.raises(ParameterError):
            raise NoAdmissiblePrimeError("@1", 100)
