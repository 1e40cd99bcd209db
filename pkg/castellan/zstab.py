"""Formal crossed-product calculus and the tracial Z-stability witness.

Elements of C(X) ⋊ Γ with finite support are kept as ``{g: a_g}`` where each
coefficient a_g is a sparse rational function on the states of a finite level. The
witness lives on the join level X_{E∪F}, so functions pulled back from X_F and from
X_E are both available.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

import numpy as np

from castellan.config import (
    CITED_DEPENDENCIES,
    MEASURE_ASSUMPTION,
    WITNESS_MAX_GAMMAS,
    WITNESS_MAX_INDEX_BOOST,
    WITNESS_QUOTIENT_CAP,
)
from castellan.dynamics import (
    FinAction,
    SchreierGraph,
    SectionData,
    StateSubset,
    WeddingCakeFn,
    canonical_section,
    cyclic_action,
    wedding_cake,
)
from castellan.exceptions import SpaceMismatchError, TraceGapPreconditionError, WitnessError, WitnessSearchError
from castellan.group_core import WreathElem, ZdVector, lamp_element, shift_element
from castellan.joseph import (
    ParamTable,
    QuotientSpace,
    choose_params,
    in_some_subgroup,
    join_tables,
    partition_check,
    prime_product,
    quotient_size,
    refinement_map,
    require_conditions,
    w_set,
    xi_invariance_check,
)
from castellan.models import CheckReport, DefectPoint, NormBound, TraceGap, rational_str

logger = logging.getLogger(__name__)

Coefficient = tuple[np.ndarray, np.ndarray]

_NO_STATES = np.zeros(0, dtype=np.int64)


def _ones(count: int) -> np.ndarray:
    return np.full(count, Fraction(1), dtype=object)


def _constant(count: int, value: Fraction) -> np.ndarray:
    return np.full(count, Fraction(value), dtype=object)


def _normalize(states: np.ndarray, values: np.ndarray) -> Coefficient:
    """Sort by state, merge repeated states and drop zeros."""
    if states.size == 0:
        return _NO_STATES, np.zeros(0, dtype=object)
    order = np.argsort(states, kind="stable")
    states = states[order]
    values = values[order]
    unique, starts = np.unique(states, return_index=True)
    if unique.size != states.size:
        values = np.add.reduceat(values, starts)
        states = unique
    keep = np.fromiter((v != 0 for v in values), dtype=bool, count=values.size)
    return states[keep], values[keep]


# ---------------------------------------------------------------------------
# Formal elements
# ---------------------------------------------------------------------------

class FormalElement:
    """A finite sum Σ_g a_g·u_g over a fixed finite Γ-space.

    Args:
        space: The level whose states carry the coefficient functions.
        terms: Map from group element to ``(states, values)``; values are Fractions
            and never zero.
    """

    __slots__ = ("space", "terms")

    def __init__(self, space: FinAction, terms: dict[Any, Coefficient]) -> None:
        self.space = space
        self.terms = terms

    @classmethod
    def from_parts(
        cls, space: FinAction, parts: Iterable[tuple[Any, np.ndarray, np.ndarray]]
    ) -> FormalElement:
        grouped: dict[Any, list[tuple[np.ndarray, np.ndarray]]] = defaultdict(list)
        for g, states, values in parts:
            grouped[g].append((np.asarray(states, dtype=np.int64), values))
        terms = {}
        for g, chunks in grouped.items():
            states, values = _normalize(
                np.concatenate([s for s, _ in chunks]), np.concatenate([v for _, v in chunks])
            )
            if states.size:
                terms[g] = (states, values)
        return cls(space, terms)

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, g: Any) -> dict[int, Fraction]:
        states, values = self.terms.get(g, (_NO_STATES, ()))
        return dict(zip(states.tolist(), values, strict=True))

    def _check_space(self, other: FormalElement) -> None:
        if self.space is not other.space:
            raise SpaceMismatchError()

    def __add__(self, other: FormalElement) -> FormalElement:
        return formal_add(self, other)

    def __neg__(self) -> FormalElement:
        return self.scale(Fraction(-1))

    def __sub__(self, other: FormalElement) -> FormalElement:
        return formal_add(self, -other)

    def __mul__(self, other: FormalElement) -> FormalElement:
        return formal_mul(self, other)

    def scale(self, c: Fraction) -> FormalElement:
        if c == 0:
            return FormalElement(self.space, {})
        return FormalElement(self.space, {g: (s, v * c) for g, (s, v) in self.terms.items()})

    def adjoint(self) -> FormalElement:
        return formal_adj(self)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FormalElement) or self.space is not other.space:
            return NotImplemented
        if self.terms.keys() != other.terms.keys():
            return False
        return all(
            np.array_equal(s, other.terms[g][0]) and list(v) == list(other.terms[g][1])
            for g, (s, v) in self.terms.items()
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"FormalElement(terms={len(self.terms)})"


def formal_add(a: FormalElement, b: FormalElement) -> FormalElement:
    a._check_space(b)
    parts = [(g, s, v) for g, (s, v) in a.terms.items()]
    parts += [(g, s, v) for g, (s, v) in b.terms.items()]
    return FormalElement.from_parts(a.space, parts)


def formal_mul(a: FormalElement, b: FormalElement) -> FormalElement:
    """(a·u_g)(b·u_h) = (a·(g▷b))·u_{gh} with (g▷b)(x) = b(g^{-1}x)."""
    a._check_space(b)
    space = a.space
    if a.is_zero() or b.is_zero():
        return FormalElement(space, {})
    keys = list(b.terms)
    b_states = np.concatenate([b.terms[h][0] for h in keys])
    b_values = np.concatenate([b.terms[h][1] for h in keys])
    b_ids = np.concatenate([np.full(b.terms[h][0].size, i) for i, h in enumerate(keys)])
    order = np.argsort(b_states, kind="stable")
    b_states, b_values, b_ids = b_states[order], b_values[order], b_ids[order]

    group = space.group
    parts = []
    for g, (states, values) in a.terms.items():
        pulled = space.apply(group.inv(g), states)
        lo = np.searchsorted(b_states, pulled, side="left")
        hi = np.searchsorted(b_states, pulled, side="right")
        counts = hi - lo
        total = int(counts.sum())
        if not total:
            continue
        rows = np.repeat(np.arange(states.size), counts)
        positions = np.repeat(lo - np.cumsum(counts) + counts, counts) + np.arange(total)
        ids = b_ids[positions]
        products = values[rows] * b_values[positions]
        for index in np.unique(ids).tolist():
            selected = ids == index
            parts.append((group.mul(g, keys[index]), states[rows[selected]], products[selected]))
    return FormalElement.from_parts(space, parts)


def formal_adj(a: FormalElement) -> FormalElement:
    """(a·u_g)* = (g^{-1}▷a)·u_{g^{-1}}; coefficients are real."""
    group = a.space.group
    parts = []
    for g, (states, values) in a.terms.items():
        inverse = group.inv(g)
        parts.append((inverse, a.space.apply(inverse, states), values))
    return FormalElement.from_parts(a.space, parts)


def norm_bound(x: FormalElement) -> NormBound:
    """Operator-norm bound: exact for partial-permutation families, ℓ1 otherwise.

    The exact tier requires the coefficient supports to be pairwise disjoint and
    their preimages g^{-1}·supp(a_g) to be pairwise disjoint too; then x has at
    most one nonzero entry per row and column.
    """
    if x.is_zero():
        return NormBound(Fraction(0), True)
    group = x.space.group
    ranges = np.concatenate([s for s, _ in x.terms.values()])
    domains = np.concatenate(
        [x.space.apply(group.inv(g), s) for g, (s, _) in x.terms.items()]
    )
    peaks = [max(abs(v) for v in values) for _, values in x.terms.values()]
    if np.unique(ranges).size == ranges.size and np.unique(domains).size == domains.size:
        return NormBound(max(peaks), True)
    return NormBound(sum(peaks, Fraction(0)), False)


class CrossedProduct:
    """Constructors for formal elements over one level."""

    def __init__(self, space: FinAction) -> None:
        self.space = space

    def zero(self) -> FormalElement:
        return FormalElement(self.space, {})

    def unitary(self, g: Any) -> FormalElement:
        states = np.arange(self.space.size, dtype=np.int64)
        return FormalElement(self.space, {g: (states, _ones(self.space.size))})

    def unit(self) -> FormalElement:
        return self.unitary(self.space.group.identity())

    def function(self, states: np.ndarray, values: np.ndarray) -> FormalElement:
        identity = self.space.group.identity()
        return FormalElement.from_parts(self.space, [(identity, states, values)])

    def indicator(self, states: np.ndarray) -> FormalElement:
        states = np.unique(np.asarray(states, dtype=np.int64))
        return self.function(states, _ones(states.size))

    def conjugate(self, g: Any, x: FormalElement) -> FormalElement:
        """u_g·x·u_g^*."""
        u = self.unitary(g)
        return u * x * u.adjoint()


# ---------------------------------------------------------------------------
# The witness
# ---------------------------------------------------------------------------

Matrix = tuple[tuple[FormalElement, ...], ...]


@dataclass(frozen=True)
class OrderZeroWitness:
    """Every component of the order-zero map ρ: M_n → C(X) ⋊ Γ."""

    n: int
    eps: Fraction
    m: int
    eta: Fraction
    F: ParamTable
    E: ParamTable
    lambda0: tuple[int, ...]
    P: int
    Q: int
    c: int
    r: int
    section: SectionData
    zero_set: tuple[int, ...]
    cake: WeddingCakeFn
    space_F: QuotientSpace
    space_E: QuotientSpace
    join: QuotientSpace
    to_E: np.ndarray
    to_F: np.ndarray
    level_t: np.ndarray
    level_l: np.ndarray
    algebra: CrossedProduct
    rho: Matrix
    psi: Matrix

    @property
    def modulus(self) -> int:
        return self.space_E.modulus

    @property
    def rank(self) -> int:
        return self.join.rank

    def piece(self, j: int, t: int) -> StateSubset:
        """X_{E,j,t} as a subset of X_E."""
        mask = (self.level_t == t) & (self.level_l < self.n * self.c) & (self.level_l % self.n == j)
        return StateSubset(mask)

    def remainder(self) -> StateSubset:
        """X_R."""
        return StateSubset(self.level_l >= self.n * self.c)

    def rho_unit(self) -> FormalElement:
        total = self.algebra.zero()
        for i in range(self.n):
            total = total + self.rho[i][i]
        return total

    def summary(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "eps": rational_str(self.eps),
            "m": self.m,
            "eta": rational_str(self.eta),
            "lambda0": list(self.lambda0),
            "F": [row.to_dict() for row in self.F],
            "E": [row.to_dict() for row in self.E],
            "primes": [row.p for row in self.E],
            "P": self.P,
            "Q": self.Q,
            "c": self.c,
            "r": self.r,
            "quotient_size": self.join.size,
            "level_sizes": {"F": self.space_F.size, "E": self.space_E.size},
            "zero_set": list(self.zero_set),
            "not_one": len(self.cake.not_one()),
            "cited_dependencies": list(CITED_DEPENDENCIES),
            "measure_assumption": MEASURE_ASSUMPTION,
        }


def smallest_m(eps: Fraction) -> int:
    """Least integer m with m > 2/ε."""
    return math.floor(2 / Fraction(eps)) + 1


def ball_weight(lambda0: Sequence[int], m: int) -> int:
    """1 + |Λ_0| + … + |Λ_0|^{m−1}."""
    return sum(len(lambda0) ** i for i in range(m))


def default_eta(eps: Fraction, lambda0: Sequence[int], m: int) -> Fraction:
    return Fraction(eps) / (2 * ball_weight(lambda0, m) + 1)


def zero_set_for(section: SectionData, E: Sequence[Any]) -> tuple[int, ...]:
    """Y_0: the section defect together with every t whose lift lies in some Λ_γ."""
    extra = {t for t, rep in enumerate(section.phi) if in_some_subgroup(rep, E)}
    return tuple(sorted(set(section.defect) | extra))


def _tower_levels(
    space: QuotientSpace, section: SectionData, P: int, Q: int
) -> tuple[np.ndarray, np.ndarray]:
    """Label every state of X_E by (t, l) with x ∈ (lPξ_1^{φ(t)})(φ(t)W)."""
    W = w_set(space)
    e1 = ZdVector.unit(1, space.rank)
    columns = [space.apply(lamp_element(0, e1.scale(l * P)), W.states) for l in range(Q)]
    seeds = np.concatenate(columns)
    l_of = np.repeat(np.arange(Q), [col.size for col in columns])
    level_t = np.full(space.size, -1, dtype=np.int64)
    level_l = np.full(space.size, -1, dtype=np.int64)
    hits = np.zeros(space.size, dtype=np.int64)
    for t, rep in enumerate(section.phi):
        states = space.apply(shift_element(rep, space.rank), seeds)
        level_t[states] = t
        level_l[states] = l_of
        np.add.at(hits, states, 1)
    if np.any(hits != 1):
        raise WitnessError("the tower pieces do not partition X_E")
    return level_t, level_l


def _matrices(
    algebra: CrossedProduct,
    n: int,
    c: int,
    P: int,
    section: SectionData,
    cake: WeddingCakeFn,
    join_t: np.ndarray,
    join_l: np.ndarray,
) -> tuple[Matrix, Matrix]:
    """ρ(e_ij) = Σ_t f(t)·1_{X_{E,i,t}}·u_{P(i−j)ξ_1^{φ(t)}} and ψ with f ≡ 1."""
    rank = algebra.space.rank
    e1 = ZdVector.unit(1, rank)
    modulus = section.quotient_size
    tower = join_l < n * c
    slices = []
    for i in range(n):
        states = np.flatnonzero(tower & (join_l % n == i))
        ts = join_t[states]
        order = np.argsort(ts, kind="stable")
        states, ts = states[order], ts[order]
        bounds = np.searchsorted(ts, np.arange(modulus + 1))
        slices.append([states[bounds[t] : bounds[t + 1]] for t in range(modulus)])

    rho_rows, psi_rows = [], []
    for i in range(n):
        rho_row, psi_row = [], []
        for j in range(n):
            rho_parts, psi_parts = [], []
            for t, rep in enumerate(section.phi):
                states = slices[i][t]
                g = lamp_element(rep, e1.scale(P * (i - j)))
                psi_parts.append((g, states, _ones(states.size)))
                if cake[t]:
                    rho_parts.append((g, states, _constant(states.size, cake[t])))
            rho_row.append(FormalElement.from_parts(algebra.space, rho_parts))
            psi_row.append(FormalElement.from_parts(algebra.space, psi_parts))
        rho_rows.append(tuple(rho_row))
        psi_rows.append(tuple(psi_row))
    return tuple(rho_rows), tuple(psi_rows)


def assemble_witness(
    n: int,
    F: ParamTable,
    E: ParamTable,
    lambda0: Sequence[int],
    eps: Fraction,
    m: int | None = None,
    eta: Fraction | None = None,
    cap: int = WITNESS_QUOTIENT_CAP,
) -> OrderZeroWitness:
    """Rebuild every witness component from the recorded parameters.

    Raises:
        WitnessError: If the tables do not fit together (shared primes, Q < n).
    """
    eps = Fraction(eps)
    if n < 2:
        raise WitnessError("n must be at least 2")
    if not 0 < eps < 1:
        raise WitnessError("ε must lie in (0, 1)")
    lambda0 = tuple(sorted(set(lambda0)))
    m = smallest_m(eps) if m is None else m
    eta = default_eta(eps, lambda0, m) if eta is None else Fraction(eta)
    rank = E[0].rank if E else 1

    joined = join_tables(F, E)
    require_conditions(joined)
    if len(joined) != len(F) + len(E):
        raise WitnessError("E and F share an element")
    space_F = QuotientSpace(F, rank)
    space_E = QuotientSpace(E, rank)
    join = QuotientSpace(joined, rank, cap)
    to_E = refinement_map(join, space_E)
    to_F = refinement_map(join, space_F)

    P, Q = prime_product(F), prime_product(E)
    if math.gcd(P, Q) != 1:
        raise WitnessError(f"P = {P} and Q = {Q} share a prime")
    c, r = divmod(Q, n)
    if c == 0:
        raise WitnessError(f"Q = {Q} is smaller than n = {n}")

    section = canonical_section(space_E.modulus, lambda0, eta)
    zero_set = zero_set_for(section, E)
    graph = SchreierGraph(cyclic_action(space_E.modulus), lambda0)
    cake = wedding_cake(graph, StateSubset.from_states(space_E.modulus, zero_set), m)
    level_t, level_l = _tower_levels(space_E, section, P, Q)

    algebra = CrossedProduct(join)
    rho, psi = _matrices(algebra, n, c, P, section, cake, level_t[to_E], level_l[to_E])
    logger.info(
        "witness assembled: n=%s, |X_E|=%s, |X_{E∪F}|=%s, Q=%s, |Y_0|=%s",
        n, space_E.size, join.size, Q, len(zero_set),
    )
    return OrderZeroWitness(
        n=n, eps=eps, m=m, eta=eta, F=tuple(F), E=tuple(E), lambda0=lambda0,
        P=P, Q=Q, c=c, r=r, section=section, zero_set=zero_set, cake=cake,
        space_F=space_F, space_E=space_E, join=join, to_E=to_E, to_F=to_F,
        level_t=level_t, level_l=level_l, algebra=algebra, rho=rho, psi=psi,
    )


def default_e_seeds(F: ParamTable, rank: int = 1, count: int = WITNESS_MAX_GAMMAS) -> list[WreathElem]:
    """Shifts 2, 3, … that are not already in F."""
    taken = {row.gamma for row in F}
    seeds: list[WreathElem] = []
    step = 2
    while len(seeds) < count:
        candidate = shift_element(step, rank)
        if candidate not in taken:
            seeds.append(candidate)
        step += 1
    return seeds


def search_e_table(
    n: int,
    F: ParamTable,
    lambda0: Sequence[int],
    eps: Fraction,
    e_seeds: Sequence[WreathElem] | None = None,
    cap: int = WITNESS_QUOTIENT_CAP,
) -> ParamTable:
    """Choose the parameter table E that the witness is built over.

    E uses primes above 2n/ε that avoid F's primes. For each number of elements the
    subgroup index is raised until |Y_0| < η·[Λ:Λ_E]. The search is deterministic in
    its arguments.

    Raises:
        WitnessSearchError: If no E fits under the quotient cap.
    """
    eps = Fraction(eps)
    if not 0 < eps < 1:
        raise WitnessSearchError("ε must lie in (0, 1)")
    lambda0 = tuple(sorted(set(lambda0)))
    rank = F[0].rank if F else 1
    eta = default_eta(eps, lambda0, smallest_m(eps))
    floor = math.floor(2 * n / eps)
    used = {row.p for row in F}
    seeds = list(e_seeds) if e_seeds else default_e_seeds(F, rank)

    for count in range(1, len(seeds) + 1):
        for boost in range(WITNESS_MAX_INDEX_BOOST + 1):
            E = choose_params(
                seeds[:count], floor, start_index=len(F), used_primes=used, exponent_boost=boost
            )
            modulus_E = math.lcm(1, *(row.subgroup_index for row in E))
            join_size = quotient_size(join_tables(F, E), rank)
            if join_size > cap:
                logger.debug("E with %s elements and boost %s exceeds the cap", count, boost)
                break
            section = canonical_section(modulus_E, lambda0, eta)
            zero_set = zero_set_for(section, E)
            logger.debug("E primes %s, [Λ:Λ_E]=%s, |Y_0|=%s", [r.p for r in E], modulus_E, len(zero_set))
            if len(zero_set) < eta * modulus_E:
                return E
    raise WitnessSearchError(f"no E found under the quotient cap {cap}")


def build_witness(
    n: int,
    F: ParamTable,
    lambda0: Sequence[int],
    eps: Fraction,
    e_seeds: Sequence[WreathElem] | None = None,
    cap: int = WITNESS_QUOTIENT_CAP,
) -> OrderZeroWitness:
    """Search for E and assemble the witness over it.

    Raises:
        WitnessSearchError: If no E fits under the quotient cap.
    """
    E = search_e_table(n, F, lambda0, eps, e_seeds, cap)
    return assemble_witness(n, F, E, lambda0, eps, cap=cap)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

def check_witness_structure(w: OrderZeroWitness) -> CheckReport:
    """Parameter inequalities, the partition, the cake properties and ξ-invariance of the section."""
    failures = []
    if not w.m > 2 / w.eps:
        failures.append(f"m = {w.m} is not larger than 2/ε")
    if not w.eta < w.eps / (2 * ball_weight(w.lambda0, w.m)):
        failures.append(f"η = {w.eta} is too large")
    if not len(w.zero_set) < w.eta * w.modulus:
        failures.append(f"|Y_0| = {len(w.zero_set)} is not below η·[Λ:Λ_E]")
    if any(row.p <= 2 * w.n / w.eps for row in w.E):
        failures.append("some p_γ does not exceed 2n/ε")
    if {row.gamma for row in w.E} & {row.gamma for row in w.F}:
        failures.append("E and F intersect")
    graph = SchreierGraph(cyclic_action(w.modulus), w.lambda0)
    cake = w.cake.check(graph, StateSubset.from_states(w.modulus, w.zero_set))
    failures.extend(cake.failures)
    failures.extend(partition_check(w.space_E, w.section, w.P).failures)
    failures.extend(xi_invariance_check(w.space_E, w.section).failures)
    return CheckReport.from_failures(failures)


def verify_psi_homomorphism(w: OrderZeroWitness) -> CheckReport:
    """ψ(e_ij)ψ(e_kl) = δ_jk ψ(e_il) and ψ(e_ij)* = ψ(e_ji), exactly."""
    failures = []
    n, psi = w.n, w.psi
    for i in range(n):
        for j in range(n):
            if psi[i][j].adjoint() != psi[j][i]:
                failures.append(f"ψ(e_{i}{j})* ≠ ψ(e_{j}{i})")
            for k in range(n):
                for l in range(n):
                    expected = psi[i][l] if j == k else w.algebra.zero()
                    if psi[i][j] * psi[k][l] != expected:
                        failures.append(f"ψ(e_{i}{j})ψ(e_{k}{l}) is wrong")
    return CheckReport.from_failures(failures)


def verify_order_zero(w: OrderZeroWitness) -> CheckReport:
    """ρ(e_ij) = ρ(1)ψ(e_ij) = ψ(e_ij)ρ(1), and 0 ≤ ρ(1) ≤ 1 is a function."""
    failures = []
    one = w.rho_unit()
    identity = w.join.group.identity()
    if set(one.terms) - {identity}:
        failures.append("ρ(1) is not a function")
    elif any(not 0 <= v <= 1 for v in one.terms.get(identity, (None, ()))[1]):
        failures.append("ρ(1) leaves [0, 1]")
    for i in range(w.n):
        for j in range(w.n):
            if one * w.psi[i][j] != w.rho[i][j]:
                failures.append(f"ρ(1)ψ(e_{i}{j}) ≠ ρ(e_{i}{j})")
            if w.psi[i][j] * one != w.rho[i][j]:
                failures.append(f"ψ(e_{i}{j})ρ(1) ≠ ρ(e_{i}{j})")
    return CheckReport.from_failures(failures)


def verify_trace_gap(w: OrderZeroWitness, a_states: Iterable[int] | None = None) -> TraceGap:
    """μ(supp(1 − ρ(1))) from the formal element, with its two-term split.

    ``a_states`` is the support of a ∈ C(X_F) as X_F states; ``None`` is a ≡ 1.

    Raises:
        TraceGapPreconditionError: If μ(supp a) does not exceed ε.
    """
    if a_states is None:
        supp_a = Fraction(1)
    else:
        supp_a = Fraction(len(set(a_states)), w.space_F.size)
    if supp_a <= w.eps:
        raise TraceGapPreconditionError(supp_a, w.eps)
    complement = w.algebra.unit() - w.rho_unit()
    support = sum(s.size for s, _ in complement.terms.values())
    gap = Fraction(support, w.join.size)
    remainder = Fraction(w.r, w.Q)
    cake_term = Fraction(len(w.cake.not_one()) * w.n * w.c, w.modulus * w.Q)
    return TraceGap(gap, remainder, cake_term, supp_a, w.eps)


def pullback_indicator(w: OrderZeroWitness, f_states: Iterable[int]) -> FormalElement:
    """1_A for A ⊆ X_F, pulled back to the join level."""
    mask = np.zeros(w.space_F.size, dtype=bool)
    mask[list(f_states)] = True
    return w.algebra.indicator(np.flatnonzero(mask[w.to_F]))


def commutator_defect(
    w: OrderZeroWitness, s: WreathElem | FormalElement
) -> dict[tuple[int, int], NormBound]:
    """‖s·ρ(e_ij) − ρ(e_ij)·s‖ per matrix unit; group elements enter as u_s."""
    x = s if isinstance(s, FormalElement) else w.algebra.unitary(s)
    return {
        (i, j): norm_bound(x * w.rho[i][j] - w.rho[i][j] * x)
        for i in range(w.n)
        for j in range(w.n)
    }


def worst_defect(defects: dict[tuple[int, int], NormBound]) -> NormBound:
    return NormBound(
        max((d.value for d in defects.values()), default=Fraction(0)),
        all(d.exact for d in defects.values()),
    )


def analytic_defect_bound(w: OrderZeroWitness, lam: int) -> Fraction:
    """1/m + max f over λY_0."""
    shifted = [(t + lam) % w.modulus for t in w.zero_set]
    return Fraction(1, w.m) + max((w.cake[t] for t in shifted), default=Fraction(0))


def with_m(w: OrderZeroWitness, m: int) -> OrderZeroWitness:
    """The same witness with the wedding cake rebuilt for another m."""
    graph = SchreierGraph(cyclic_action(w.modulus), w.lambda0)
    cake = wedding_cake(graph, StateSubset.from_states(w.modulus, w.zero_set), m)
    rho, psi = _matrices(
        w.algebra, w.n, w.c, w.P, w.section, cake, w.level_t[w.to_E], w.level_l[w.to_E]
    )
    return dataclasses.replace(w, m=m, cake=cake, rho=rho, psi=psi)


def defect_series(w: OrderZeroWitness, lam: int, ms: Sequence[int]) -> list[DefectPoint]:
    points = []
    for m in ms:
        variant = with_m(w, m)
        computed = worst_defect(commutator_defect(variant, shift_element(lam, w.rank)))
        points.append(DefectPoint(m, analytic_defect_bound(variant, lam), computed))
    return points
