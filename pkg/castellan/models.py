"""Result records shared across castellan.

All records are frozen dataclasses; checkers return them instead of bare booleans so
that the CLI and the certificate writer can report what failed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from castellan.exceptions import RationalParseError


@dataclass(frozen=True)
class CheckReport:
    """Outcome of an exact re-check."""

    passed: bool
    failures: tuple[str, ...] = ()

    @classmethod
    def ok(cls) -> CheckReport:
        return cls(True)

    @classmethod
    def from_failures(cls, failures: list[str] | tuple[str, ...]) -> CheckReport:
        return cls(not failures, tuple(failures))

    def __bool__(self) -> bool:
        return self.passed

    def __str__(self) -> str:
        return "pass" if self.passed else "; ".join(self.failures)


@dataclass(frozen=True)
class Overlap:
    """Two castle levels sharing a state."""

    tower: int
    level: int
    other_tower: int
    other_level: int
    state: int


@dataclass(frozen=True)
class CastleReport:
    """Result of validate_castle."""

    valid: bool
    overlap: Overlap | None = None

    def __bool__(self) -> bool:
        return self.valid


@dataclass(frozen=True)
class SparseBoundaryReport:
    """Exact evaluation of |{g∈F: gx ∈ T⁻¹A△A}| < β|{g∈F: gx∈A}| off Y."""

    holds: bool
    worst_state: int | None = None
    boundary_hits: int = 0
    set_hits: int = 0

    def __bool__(self) -> bool:
        return self.holds


@dataclass(frozen=True)
class DensityGrowthReport:
    """Exact evaluation of D(B) ≥ (1 − ε(1+β))·D(A) + ε and its hypotheses."""

    hypotheses: bool
    conclusion: bool
    lhs: Fraction
    rhs: Fraction

    @property
    def holds(self) -> bool:
        return not self.hypotheses or self.conclusion

    def __bool__(self) -> bool:
        return self.holds


@dataclass(frozen=True)
class L33Report:
    """Postconditions (i)–(iv) of the single-scale castle construction."""

    castle_valid: bool
    bases_outside_z: bool
    levels_in_cells: bool
    shapes_large: bool
    avoids_y: bool
    union_identity: bool
    coverage: bool

    @property
    def passed(self) -> bool:
        return all(
            (
                self.castle_valid,
                self.bases_outside_z,
                self.levels_in_cells,
                self.shapes_large,
                self.avoids_y,
                self.union_identity,
                self.coverage,
            )
        )

    def __bool__(self) -> bool:
        return self.passed


@dataclass(frozen=True)
class StageParameters:
    """Stage count and the dyadic β, α of the multi-scale algorithm."""

    n: int
    beta: Fraction
    alpha: Fraction
    margin: Fraction


@dataclass(frozen=True)
class StageRecord:
    """What one stage of the multi-scale algorithm produced and checked."""

    stage: int
    folner_size: int
    z_density: Fraction
    z_bound: Fraction
    footprint_density: Fraction
    density_bound: Fraction
    density_growth: DensityGrowthReport
    towers: int


@dataclass(frozen=True)
class LadderDeficit:
    """A pair (j, i) where F_j misses (F_i⁻¹, β(1−ε))-invariance."""

    j: int
    i: int
    ratio: Fraction
    target: Fraction


@dataclass(frozen=True)
class EssFreeChain:
    """The inequality chain 1−μ(Fix g) ≥ … ≥ (1−ε′)² for one extreme measure."""

    orbit: int
    fixed_measure: Fraction
    lhs: Fraction
    overlap_sum: Fraction
    shape_sum: Fraction
    footprint_term: Fraction
    floor: Fraction

    @property
    def holds(self) -> bool:
        return (
            self.lhs >= self.overlap_sum >= self.shape_sum
            and self.shape_sum == self.footprint_term
            and self.footprint_term >= self.floor
        )


@dataclass(frozen=True)
class EssFreeBound:
    """Certified bound μ(Fix g) ≤ 1 − (1−ε′)² over all extreme measures."""

    bound: Fraction
    chains: tuple[EssFreeChain, ...]

    @property
    def max_fixed_measure(self) -> Fraction:
        return max((c.fixed_measure for c in self.chains), default=Fraction(0))

    @property
    def passed(self) -> bool:
        return all(c.holds for c in self.chains) and self.max_fixed_measure <= self.bound

    def __bool__(self) -> bool:
        return self.passed


@dataclass(frozen=True)
class TraceGap:
    """μ(supp(1 − ρ(1))) against μ(supp a), with the two-term split."""

    gap: Fraction
    remainder_term: Fraction
    cake_term: Fraction
    supp_a: Fraction
    eps: Fraction

    @property
    def certified(self) -> bool:
        return self.gap < self.eps < self.supp_a

    def __bool__(self) -> bool:
        return self.certified


@dataclass(frozen=True)
class NormBound:
    """Upper bound on an operator norm; ``exact`` when it equals the norm."""

    value: Fraction
    exact: bool

    def to_dict(self) -> dict[str, Any]:
        return {"bound": rational_str(self.value), "exact": self.exact}


@dataclass(frozen=True)
class DefectPoint:
    """Analytic and computed commutator defect for one value of m."""

    m: int
    analytic: Fraction
    computed: NormBound


@dataclass(frozen=True)
class Certificate:
    """A pipeline run: inputs echo, outputs, verdict."""

    pipeline: str
    inputs: dict[str, Any]
    outputs: dict[str, Any]
    passed: bool
    failure: dict[str, str] | None = None
    timing: dict[str, float] | None = field(default=None)


def rational_str(value: Fraction | int) -> str:
    """Serialize a rational as ``p/q`` (integers as ``p``)."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def parse_rational(text: str | int | Fraction) -> Fraction:
    """Parse ``p/q``, an integer, or a decimal literal exactly."""
    if isinstance(text, (int, Fraction)):
        return Fraction(text)
    raw = str(text).strip()
    try:
        if "/" in raw:
            num, den = raw.split("/", 1)
            return Fraction(int(num), int(den))
        return Fraction(raw)
    except (ValueError, ZeroDivisionError) as exc:
        raise RationalParseError(raw) from exc
