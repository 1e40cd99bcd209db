"""Custom exception hierarchy for castellan."""

from __future__ import annotations

from typing import Any


class CastellanError(Exception):
    """Base exception for all castellan errors."""

    def __init__(self, message: str = "An error occurred in castellan.") -> None:
        super().__init__(message)
        self.message = message

    def __str__(self) -> str:
        return self.message


# --- Group Errors ---

class GeneratorIndexError(CastellanError):
    """Raised when a lamp generator index lies outside 1..d."""

    def __init__(self, index: int, rank: int) -> None:
        super().__init__(f"Generator index {index} out of range 1..{rank}")
        self.index = index
        self.rank = rank


class ElementParseError(CastellanError):
    """Raised when a group element literal cannot be parsed."""

    def __init__(self, text: str, reason: str = "Malformed element.") -> None:
        super().__init__(f"Cannot parse group element '{text}': {reason}")
        self.text = text
        self.reason = reason


# --- Action Errors ---

class ActionError(CastellanError):
    """Raised when a finite action is malformed or misused."""


class InvalidPermutationError(ActionError):
    """Raised when a generator is not assigned a bijection of the state set."""

    def __init__(self, generator: Any, reason: str = "Not a bijection.") -> None:
        super().__init__(f"Invalid permutation for generator {generator!r}: {reason}")
        self.generator = generator
        self.reason = reason


class InvalidResolutionError(ActionError):
    """Raised when resolution cells do not partition the state set."""

    def __init__(self, reason: str = "Cells do not partition the states.") -> None:
        super().__init__(f"Invalid resolution: {reason}")
        self.reason = reason


class EmptyFolnerSetError(ActionError):
    """Raised when a density or invariance ratio is requested for an empty set."""

    def __init__(self) -> None:
        super().__init__("Følner set must be nonempty.")


class FolnerCapError(ActionError):
    """Raised when no candidate up to the cap certifies (K, ε)-invariance."""

    def __init__(self, cap: int, best_ratio: Any = None) -> None:
        detail = f" (best ratio {best_ratio})" if best_ratio is not None else ""
        super().__init__(f"Følner search exhausted cap {cap} before certification{detail}")
        self.cap = cap
        self.best_ratio = best_ratio


class SectionTooSmallError(ActionError):
    """Raised when Λ/Λ_E is too small for the requested section tolerance."""

    def __init__(self, size: int, defect: int, eps: Any) -> None:
        super().__init__(
            f"Quotient of size {size} has section defect {defect}, not below {eps} of it"
        )
        self.size = size
        self.defect = defect
        self.eps = eps


class SpaceMismatchError(ActionError):
    """Raised when formal elements over different spaces are combined."""

    def __init__(self) -> None:
        super().__init__("Formal elements live over different quotient spaces.")


# --- Castle Errors ---

class CastleError(CastellanError):
    """Raised when a castle construction cannot proceed."""


class CastlePreconditionError(CastleError):
    """Raised when the inputs of a castle construction violate its hypotheses."""

    def __init__(self, reason: str) -> None:
        super().__init__(f"Castle precondition violated: {reason}")
        self.reason = reason


class StageFailureError(CastleError):
    """Raised when a stage of the multi-scale algorithm fails its checks."""

    def __init__(self, stage: int, reason: str) -> None:
        super().__init__(f"Stage {stage} failed: {reason}")
        self.stage = stage
        self.reason = reason


# --- Parameter Errors ---

class ParameterError(CastellanError):
    """Raised for invalid profinite parameter tables."""


class NoAdmissiblePrimeError(ParameterError):
    """Raised when the prime scan finds nothing admissible."""

    def __init__(self, gamma: str, floor: int) -> None:
        super().__init__(f"No admissible prime above {floor} for {gamma}")
        self.gamma = gamma
        self.floor = floor


class ConditionViolationError(ParameterError):
    """Raised when a parameter table violates one of the eight conditions."""

    def __init__(self, condition: int, gamma: str, reason: str) -> None:
        super().__init__(f"Condition ({condition}) fails for {gamma}: {reason}")
        self.condition = condition
        self.gamma = gamma
        self.reason = reason


class QuotientCapError(ParameterError):
    """Raised when a finite quotient would exceed the configured state cap."""

    def __init__(self, size: int, cap: int) -> None:
        super().__init__(f"Quotient with {size} states exceeds cap {cap}")
        self.size = size
        self.cap = cap


class NonNestedTablesError(ParameterError):
    """Raised when a refinement map is requested between non-nested tables."""

    def __init__(self, reason: str = "Tables are not nested.") -> None:
        super().__init__(f"Cannot refine: {reason}")
        self.reason = reason


# --- Witness Errors ---

class WitnessError(CastellanError):
    """Raised when the order-zero witness cannot be built or checked."""


class WitnessSearchError(WitnessError):
    """Raised when the search for E exhausts its caps."""

    def __init__(self, reason: str) -> None:
        super().__init__(f"Witness search failed: {reason}")
        self.reason = reason


class TraceGapPreconditionError(WitnessError):
    """Raised when μ(supp a) does not exceed ε."""

    def __init__(self, measure: Any, eps: Any) -> None:
        super().__init__(f"μ(supp a) = {measure} must exceed ε = {eps}")
        self.measure = measure
        self.eps = eps


# --- Configuration Errors ---

class ConfigError(CastellanError):
    """Raised when an experiment configuration is invalid."""

    def __init__(self, path: str, reason: str = "Invalid configuration.") -> None:
        super().__init__(f"Invalid configuration '{path}': {reason}")
        self.path = path
        self.reason = reason


class RationalParseError(CastellanError):
    """Raised when a rational literal is malformed."""

    def __init__(self, text: str) -> None:
        super().__init__(f"Malformed rational '{text}'")
        self.text = text


# --- Certificate Errors ---

class CertificateError(CastellanError):
    """Raised when a certificate cannot be read or written."""

    def __init__(self, filepath: str, reason: str = "Certificate error.") -> None:
        super().__init__(f"Certificate '{filepath}': {reason}")
        self.filepath = filepath
        self.reason = reason


class CertificateSchemaError(CertificateError):
    """Raised when a certificate does not match the schema."""


class SeriesNotFoundError(CastellanError):
    """Raised when a requested export series is absent from a certificate."""

    def __init__(self, series: str, available: list[str] | None = None) -> None:
        names = ", ".join(available or []) or "none"
        super().__init__(f"Series '{series}' not found (available: {names})")
        self.series = series
        self.available = available or []


class ClaimMismatchError(CertificateError):
    """Raised while auditing when a recorded claim cannot be reconstructed."""

    def __init__(self, field: str, reason: str) -> None:
        super().__init__(field, reason)
        self.field = field
