"""Profinite quotients of ℤ^d ≀ ℤ built from per-element parameter tables.

Each nontrivial γ = (g, δ) receives a prime p, a tolerance ε, a size l, a subgroup
index p^a (so Λ_γ = p^a ℤ) and l cosets E_γ of Λ_γ. The subgroup
Γ_γ = A_γ ⋊ Λ_γ has finite index, and X_E = Γ / ⋂_{γ∈E} Γ_γ is enumerated
through a label normal form:

    (f, λ) ↦ (λ mod M, (Σ_{λ′ ≡ λ+q (mod p^a)} f(λ′) mod p)_{γ, q ∈ E_γ})

with M = Π p^a. Labels are packed into state indices as ``t + M·(mixed radix)``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

import numpy as np
import sympy

from castellan.config import CONDITION_THREE_FLOOR, ORACLE_TRIALS, STATE_CAP
from castellan.dynamics import FinAction, SectionData, StateSubset, fix_set
from castellan.exceptions import (
    ConditionViolationError,
    NoAdmissiblePrimeError,
    NonNestedTablesError,
    ParameterError,
    QuotientCapError,
)
from castellan.group_core import (
    LampConfig,
    WreathElem,
    WreathProduct,
    ZdVector,
    lamp_element,
    shift_element,
    wreath_inv,
    wreath_mul,
    xi_generator,
)
from castellan.models import CheckReport, rational_str

logger = logging.getLogger(__name__)

PRIME_SCAN_LIMIT = 10_000


# ---------------------------------------------------------------------------
# Parameter tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GammaParams:
    """Parameters (p, ε, l, Λ_γ = p^a ℤ, E_γ) attached to one γ ≠ 1."""

    gamma: WreathElem
    p: int
    eps: Fraction
    l: int
    exponent: int
    E_cosets: tuple[int, ...]

    @property
    def subgroup_index(self) -> int:
        return self.p**self.exponent

    @property
    def rank(self) -> int:
        return self.gamma.rank

    def to_dict(self) -> dict[str, Any]:
        group = WreathProduct(self.rank)
        return {
            "gamma": group.format(self.gamma),
            "p": self.p,
            "eps": rational_str(self.eps),
            "l": self.l,
            "subgroup_index": self.subgroup_index,
            "E_cosets": list(self.E_cosets),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any], rank: int = 1) -> GammaParams:
        p = int(data["p"])
        index = int(data["subgroup_index"])
        exponent = round(math.log(index, p)) if index > 1 else 0
        if p**exponent != index:
            raise ParameterError(f"subgroup index {index} is not a power of {p}")
        return cls(
            gamma=WreathProduct(rank).parse(data["gamma"]),
            p=p,
            eps=Fraction(data["eps"]),
            l=int(data["l"]),
            exponent=exponent,
            E_cosets=tuple(int(q) for q in data["E_cosets"]),
        )


ParamTable = tuple[GammaParams, ...]


def _label(gamma: WreathElem) -> str:
    return WreathProduct(gamma.rank).format(gamma)


def _condition_two(gamma: WreathElem, p: int) -> bool:
    return all(any(c % p for c in v.coords) for v in gamma.lamps.values())


def _condition_six(support: Sequence[int], modulus: int) -> bool:
    return all((a - b) % modulus for a in support for b in support if a != b)


def _condition_seven(shift: int, modulus: int) -> bool:
    return shift == 0 or shift % modulus != 0


def choose_params(
    gammas: Sequence[WreathElem],
    prime_floor: int = 1,
    eps_budget: Fraction = Fraction(1),
    *,
    start_index: int = 0,
    used_primes: Iterable[int] = (),
    exponent_boost: int = 0,
) -> ParamTable:
    """Assign parameters deterministically and verify all eight conditions.

    Primes are scanned upward from ``prime_floor``, skipping used primes and those
    with a nonzero lamp value in (pℤ)^d. ε_γ is ``eps_budget·2^{-(index+1)}``; the
    exponent a is the least with ε·p^a > l that also separates the support and the
    shift, plus ``exponent_boost``.

    Raises:
        NoAdmissiblePrimeError: If the prime scan is exhausted.
        ConditionViolationError: If the resulting table fails a condition.
    """
    used = set(used_primes)
    table: list[GammaParams] = []
    for offset, gamma in enumerate(gammas):
        if gamma.is_identity():
            raise ParameterError("the identity carries no parameters")
        p = prime_floor
        for _ in range(PRIME_SCAN_LIMIT):
            p = int(sympy.nextprime(p))
            if p not in used and _condition_two(gamma, p):
                break
        else:
            raise NoAdmissiblePrimeError(_label(gamma), prime_floor)
        used.add(p)

        support = gamma.lamps.support
        eps = Fraction(eps_budget) / 2 ** (start_index + offset + 1)
        l = len(support) + 1
        a = 0
        while not (
            eps * p**a > l
            and _condition_six(support, p**a)
            and _condition_seven(gamma.shift, p**a)
        ):
            a += 1
        a += exponent_boost
        modulus = p**a
        image = sorted({s % modulus for s in support} - {0})
        padding = (q for q in range(1, modulus) if q not in image)
        while 1 + len(image) < l:
            image.append(next(padding))
        table.append(GammaParams(gamma, p, eps, l, a, (0, *sorted(image))))
        logger.debug("γ=%s: p=%s, a=%s, l=%s", _label(gamma), p, a, l)

    result = tuple(table)
    require_conditions(result)
    return result


def check_conditions(
    table: Sequence[GammaParams], floor: Fraction = CONDITION_THREE_FLOOR
) -> list[dict[int, bool]]:
    """Evaluate conditions (1)–(8) for every row of the table."""
    primes = [row.p for row in table]
    product = Fraction(1)
    for row in table:
        product *= 1 - row.eps
    verdicts = []
    for row in table:
        support = row.gamma.lamps.support
        modulus = row.subgroup_index
        verdicts.append(
            {
                1: bool(sympy.isprime(row.p)) and primes.count(row.p) == 1,
                2: _condition_two(row.gamma, row.p),
                3: 0 < row.eps < 1 and product > floor,
                4: row.l > len(support),
                5: row.exponent >= 0 and row.eps * modulus > row.l,
                6: _condition_six(support, modulus),
                7: _condition_seven(row.gamma.shift, modulus),
                8: (
                    {s % modulus for s in support} <= set(row.E_cosets)
                    and len(set(row.E_cosets)) == len(row.E_cosets) == row.l
                    and 0 in row.E_cosets
                    and all(0 <= q < modulus for q in row.E_cosets)
                ),
            }
        )
    return verdicts


def require_conditions(table: Sequence[GammaParams]) -> None:
    for row, verdict in zip(table, check_conditions(table), strict=True):
        for condition, holds in verdict.items():
            if not holds:
                raise ConditionViolationError(condition, _label(row.gamma), "check failed")


def a_gamma_contains(h: LampConfig, params: GammaParams) -> bool:
    """Membership of h in A_γ: every coset sum over E_γ lies in (pℤ)^d."""
    modulus = params.subgroup_index
    for q in params.E_cosets:
        total = ZdVector.zero(h.rank)
        for position, value in h.entries:
            if position % modulus == q:
                total = total + value
        if any(c % params.p for c in total.coords):
            return False
    return True


def in_gamma_subgroup(x: WreathElem, table: Sequence[GammaParams]) -> bool:
    """Membership in Γ_E = ⋂ A_γ ⋊ Λ_γ, decided directly from the definitions."""
    return all(
        x.shift % row.subgroup_index == 0 and a_gamma_contains(x.lamps, row) for row in table
    )


# ---------------------------------------------------------------------------
# Labels and quotient spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CosetLabel:
    """Normal form of a point of X_E: Λ/Λ_E coordinate and residue vectors."""

    t: int
    residues: tuple[tuple[int, ...], ...]


def _modulus(table: Sequence[GammaParams]) -> int:
    return math.lcm(1, *(row.subgroup_index for row in table))


def quotient_size(table: Sequence[GammaParams], rank: int = 1) -> int:
    """[Λ:Λ_E]·Π p_γ^{d·l_γ}, without building the space."""
    return _modulus(table) * math.prod(row.p ** (rank * row.l) for row in table)


def label_of(x: WreathElem, table: Sequence[GammaParams]) -> CosetLabel:
    modulus = _modulus(table)
    residues = []
    for row in table:
        pa = row.subgroup_index
        for q in row.E_cosets:
            total = [0] * x.rank
            for position, value in x.lamps.entries:
                if (position - x.shift - q) % pa == 0:
                    total = [a + b for a, b in zip(total, value.coords, strict=True)]
            residues.append(tuple(c % row.p for c in total))
    return CosetLabel(x.shift % modulus, tuple(residues))


class QuotientSpace(FinAction):
    """The finite Γ-space X_E with states indexed by packed coset labels."""

    def __init__(self, table: Sequence[GammaParams], rank: int = 1, cap: int = STATE_CAP) -> None:
        self.table: ParamTable = tuple(table)
        self.rank = rank
        self.modulus = _modulus(self.table)
        # one slot per (γ, q); each slot holds ``rank`` base-p digits
        self.slots = tuple(
            (row_index, q, row.p, row.subgroup_index)
            for row_index, row in enumerate(self.table)
            for q in row.E_cosets
        )
        self.radices = tuple(p for _, _, p, _ in self.slots for _ in range(rank))
        size = quotient_size(self.table, rank)
        if size > cap:
            raise QuotientCapError(size, cap)
        self.size = size
        group = WreathProduct(rank)
        states = np.arange(size, dtype=np.int64)
        perms = [self.apply(g, states) for g in group.generators]
        super().__init__(group, size, perms)
        logger.info("built X_E with %s states over %s parameter rows", size, len(self.table))

    # -- label codec --------------------------------------------------------------

    def decode(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        states = np.asarray(states, dtype=np.int64)
        t = states % self.modulus
        rest = states // self.modulus
        digits = np.empty((states.size, len(self.radices)), dtype=np.int64)
        for i, radix in enumerate(self.radices):
            digits[:, i] = rest % radix
            rest = rest // radix
        return t, digits

    def encode(self, t: np.ndarray, digits: np.ndarray) -> np.ndarray:
        index = np.zeros(np.asarray(t).size, dtype=np.int64)
        for i in range(len(self.radices) - 1, -1, -1):
            index = index * self.radices[i] + digits[:, i]
        return np.asarray(t, dtype=np.int64) + self.modulus * index

    def state_of(self, label: CosetLabel) -> int:
        digits = np.array([[c for r in label.residues for c in r]], dtype=np.int64)
        return int(self.encode(np.array([label.t]), digits)[0])

    def label_at(self, state: int) -> CosetLabel:
        t, digits = self.decode(np.array([state]))
        row = digits[0].tolist()
        residues = tuple(
            tuple(row[i * self.rank : (i + 1) * self.rank]) for i in range(len(self.slots))
        )
        return CosetLabel(int(t[0]), residues)

    def state_of_element(self, x: WreathElem) -> int:
        return self.state_of(label_of(x, self.table))

    # -- action -------------------------------------------------------------------

    def apply(self, g: WreathElem, states: np.ndarray) -> np.ndarray:
        """Left-multiply the labelled cosets by g = (h, ν)."""
        t, digits = self.decode(states)
        entries = g.lamps.entries
        for slot, (_, q, p, pa) in enumerate(self.slots):
            if not entries:
                break
            residue_class = (t + g.shift + q) % pa
            for position, value in entries:
                hit = residue_class == position % pa
                for k, c in enumerate(value.coords):
                    if c:
                        column = slot * self.rank + k
                        digits[:, column] = (digits[:, column] + c * hit) % p
        return self.encode((t + g.shift) % self.modulus, digits)

    def _compute_permutation(self, g: Any) -> np.ndarray:
        return self.apply(g, np.arange(self.size, dtype=np.int64))

    def __repr__(self) -> str:
        primes = [row.p for row in self.table]
        return f"QuotientSpace(primes={primes}, states={self.size})"


def build_quotient(table: Sequence[GammaParams], rank: int = 1, cap: int = STATE_CAP) -> QuotientSpace:
    require_conditions(table)
    return QuotientSpace(table, rank, cap)


def join_tables(*tables: Sequence[GammaParams]) -> ParamTable:
    """Concatenate tables, keeping the first occurrence of each γ."""
    seen: dict[WreathElem, GammaParams] = {}
    for table in tables:
        for row in table:
            seen.setdefault(row.gamma, row)
    return tuple(seen.values())


def refinement_map(fine: QuotientSpace, coarse: QuotientSpace) -> np.ndarray:
    """The equivariant surjection X_{E′} → X_E as a state-index array.

    Raises:
        NonNestedTablesError: If some row of the coarse table is missing from the
            fine table or the moduli do not divide.
    """
    positions = []
    for row in coarse.table:
        try:
            positions.append(fine.table.index(row))
        except ValueError as exc:
            raise NonNestedTablesError(f"row for {_label(row.gamma)} is missing") from exc
    if fine.modulus % coarse.modulus or fine.rank != coarse.rank:
        raise NonNestedTablesError("moduli do not divide")
    fine_slot = {(r, q): i for i, (r, q, _, _) in enumerate(fine.slots)}
    columns = []
    for coarse_row, fine_row in enumerate(positions):
        for r, q, _, _ in coarse.slots:
            if r == coarse_row:
                base = fine_slot[(fine_row, q)] * fine.rank
                columns.extend(range(base, base + fine.rank))
    t, digits = fine.decode(np.arange(fine.size, dtype=np.int64))
    return coarse.encode(t % coarse.modulus, digits[:, columns])


def compose_refinements(
    finest: QuotientSpace, middle: QuotientSpace, coarse: QuotientSpace
) -> bool:
    direct = refinement_map(finest, coarse)
    return bool(np.array_equal(refinement_map(middle, coarse)[refinement_map(finest, middle)], direct))


def check_refinement(fine: QuotientSpace, coarse: QuotientSpace) -> CheckReport:
    """Equivariance on every generator and state, and equal fibre sizes."""
    pi = refinement_map(fine, coarse)
    failures = []
    for g, perm in zip(fine.group.generators, fine.generator_perms, strict=True):
        if not np.array_equal(pi[perm], coarse.permutation(g)[pi]):
            failures.append(f"not equivariant for {fine.group.format(g)}")
    fibres = np.bincount(pi, minlength=coarse.size)
    if np.any(fibres != fine.size // coarse.size):
        failures.append("fibres are not all the same size")
    return CheckReport.from_failures(failures)


# ---------------------------------------------------------------------------
# Probes and structural checks
# ---------------------------------------------------------------------------

def fixed_fraction(gamma: WreathElem, space: QuotientSpace) -> Fraction:
    return Fraction(len(fix_set(gamma, space)), space.size)


def w_set(space: QuotientSpace) -> StateSubset:
    """Labels with trivial Λ-coordinate and zero first residue at each trivial coset."""
    t, digits = space.decode(np.arange(space.size, dtype=np.int64))
    mask = t == 0
    for slot, (_, q, _, _) in enumerate(space.slots):
        if q == 0:
            mask &= digits[:, slot * space.rank] == 0
    return StateSubset(mask)


def tower_piece(space: QuotientSpace, W: StateSubset, lam: int, j: int, P: int) -> np.ndarray:
    """States of (jP·ξ_1^λ)(λW)."""
    moved = space.apply(shift_element(lam, space.rank), W.states)
    if j * P:
        moved = space.apply(lamp_element(lam, ZdVector.unit(1, space.rank).scale(j * P)), moved)
    return moved


def prime_product(table: Sequence[GammaParams]) -> int:
    return math.prod(row.p for row in table)


def partition_check(space: QuotientSpace, section: SectionData, P: int) -> CheckReport:
    """The pieces (jPξ_1^{φ(t)})(φ(t)W), t ∈ Λ/Λ_E, 0 ≤ j < Q, partition X_E."""
    Q = prime_product(space.table)
    if math.gcd(P, Q) != 1:
        return CheckReport.from_failures([f"P = {P} and Q = {Q} are not coprime"])
    if section.quotient_size != space.modulus:
        return CheckReport.from_failures(["section is over a different quotient"])
    W = w_set(space)
    counts = np.zeros(space.size, dtype=np.int64)
    for t in range(space.modulus):
        for j in range(Q):
            np.add.at(counts, tower_piece(space, W, section.phi[t], j, P), 1)
    failures = []
    if np.any(counts > 1):
        failures.append(f"{int(np.count_nonzero(counts > 1))} states lie in two pieces")
    if np.any(counts == 0):
        failures.append(f"{int(np.count_nonzero(counts == 0))} states are uncovered")
    return CheckReport.from_failures(failures)


def in_some_subgroup(lam: int, table: Sequence[GammaParams]) -> bool:
    return any(lam % row.subgroup_index == 0 for row in table)


def xi_invariance_check(space: QuotientSpace, section: SectionData) -> CheckReport:
    """ξ_k^1·φ(t)W = φ(t)W whenever φ(t) avoids every Λ_γ."""
    W = w_set(space)
    failures = []
    for t, rep in enumerate(section.phi):
        if in_some_subgroup(rep, space.table):
            continue
        piece = space.apply(shift_element(rep, space.rank), W.states)
        for k in range(1, space.rank + 1):
            moved = space.apply(xi_generator(k, 0, space.rank), piece)
            if not np.array_equal(np.sort(moved), np.sort(piece)):
                failures.append(f"ξ_{k} moves φ({t})W")
    return CheckReport.from_failures(failures)


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------

def random_wreath_element(
    rng: np.random.Generator, rank: int = 1, radius: int = 6, bound: int = 4
) -> WreathElem:
    size = int(rng.integers(0, 4))
    entries = tuple(
        (
            int(rng.integers(-radius, radius + 1)),
            ZdVector(tuple(int(c) for c in rng.integers(-bound, bound + 1, size=rank))),
        )
        for _ in range(size)
    )
    return WreathElem(LampConfig(rank, entries), int(rng.integers(-radius, radius + 1)))


def random_subgroup_element(
    rng: np.random.Generator, table: Sequence[GammaParams], rank: int = 1
) -> WreathElem:
    """A random element of Γ_E built from three families of generators of A_E."""
    modulus = _modulus(table)
    scale = prime_product(table)
    entries: list[tuple[int, ZdVector]] = []
    for _ in range(int(rng.integers(1, 4))):
        position = int(rng.integers(-2 * modulus, 2 * modulus))
        value = ZdVector(tuple(int(c) for c in rng.integers(-3, 4, size=rank)))
        kind = int(rng.integers(0, 3))
        if kind == 0:
            entries.append((position, value.scale(scale)))
        elif kind == 1:
            entries.append((position, value))
            entries.append((position + modulus * int(rng.integers(1, 3)), -value))
        else:
            free = [
                s for s in range(modulus)
                if all(s % row.subgroup_index not in row.E_cosets for row in table)
            ]
            if free:
                entries.append((free[int(rng.integers(0, len(free)))] + modulus, value))
    shift = modulus * int(rng.integers(-2, 3))
    return WreathElem(LampConfig(rank, tuple(entries)), shift)


@dataclass(frozen=True)
class OracleReport:
    trials: int
    constant_violations: int
    separation_violations: int

    @property
    def passed(self) -> bool:
        return self.constant_violations == 0 and self.separation_violations == 0


def oracle_labels(
    table: Sequence[GammaParams],
    rng: np.random.Generator,
    trials: int = ORACLE_TRIALS,
    rank: int = 1,
) -> OracleReport:
    """Compare ``label_of`` with direct Γ_E membership under right multiplication.

    Half of the trials multiply by a constructed element of Γ_E (the label must not
    change); the other half multiply by a random z, where the labels must agree
    exactly when z ∈ Γ_E.
    """
    constant = separation = 0
    for trial in range(trials):
        x = random_wreath_element(rng, rank)
        if trial % 2 == 0:
            z = random_subgroup_element(rng, table, rank)
            if label_of(wreath_mul(x, z), table) != label_of(x, table):
                constant += 1
        else:
            z = random_wreath_element(rng, rank)
            same = label_of(wreath_mul(x, z), table) == label_of(x, table)
            if same != in_gamma_subgroup(z, table):
                separation += 1
    logger.info("label oracle: %s trials, %s + %s violations", trials, constant, separation)
    return OracleReport(trials, constant, separation)


def generator_rule_check(space: QuotientSpace, rng: np.random.Generator, trials: int = 200) -> CheckReport:
    """Compare the packed action with ``label_of`` of left products on random elements."""
    failures = []
    group = space.group
    probes = list(group.generators) + [group.inv(g) for g in group.generators]
    for _ in range(trials):
        x = random_wreath_element(rng, space.rank)
        g = probes[int(rng.integers(0, len(probes)))]
        lhs = int(space.apply(g, np.array([space.state_of_element(x)]))[0])
        rhs = space.state_of_element(wreath_mul(g, x))
        if lhs != rhs:
            failures.append(f"{group.format(g)} on {group.format(x)}")
    return CheckReport.from_failures(failures[:5])


def inverse_consistency(x: WreathElem, space: QuotientSpace) -> bool:
    return space.state_of_element(wreath_mul(x, wreath_inv(x))) == space.state_of_element(
        WreathElem(LampConfig.empty(space.rank), 0)
    )
