"""Towers, castles and the constructions that produce them.

``build_castle_L33`` is the single-scale construction; ``build_castle_T34`` runs it
at n Følner scales and returns the castle with an almost-finiteness certificate.
The checkers (``validate_castle``, ``check_l33``, ``afm_check``,
``essfree_bound_from_castle`` and ``check_subequivalence``) never call a builder.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import networkx as nx
import numpy as np

from castellan.config import DYADIC_SCAN_DEPTH
from castellan.dynamics import (
    FinAction,
    StateSubset,
    banach_lower,
    banach_upper,
    boundary_ratio,
    density_growth_check,
    fix_set,
    folner_invariance,
    folner_supplier,
    invariant_measures,
    nonfree_part,
    set_size,
    visit_counts,
)
from castellan.exceptions import CastlePreconditionError, StageFailureError
from castellan.group_core import Group
from castellan.models import (
    CastleReport,
    CheckReport,
    EssFreeBound,
    EssFreeChain,
    L33Report,
    LadderDeficit,
    Overlap,
    StageParameters,
    StageRecord,
    parse_rational,
    rational_str,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Tower:
    """A shape S and a base V whose translates sV are the levels."""

    shape: tuple[Any, ...]
    base: StateSubset

    def level_states(self, action: FinAction) -> list[np.ndarray]:
        states = self.base.states
        return [action.apply(s, states) for s in self.shape]

    def levels(self, action: FinAction) -> list[StateSubset]:
        return [action.translate(s, self.base) for s in self.shape]

    def to_dict(self, group: Group) -> dict[str, Any]:
        return {"shape": [group.format(s) for s in self.shape], "base": self.base.to_list()}


@dataclass(frozen=True)
class Castle:
    """A finite family of towers."""

    towers: tuple[Tower, ...] = ()

    def __len__(self) -> int:
        return len(self.towers)

    def __iter__(self):
        return iter(self.towers)

    def footprint(self, action: FinAction) -> StateSubset:
        mask = np.zeros(action.size, dtype=bool)
        for tower in self.towers:
            for states in tower.level_states(action):
                mask[states] = True
        return StateSubset(mask)

    def extend(self, other: Castle) -> Castle:
        return Castle(self.towers + other.towers)

    def to_dict(self, group: Group) -> dict[str, Any]:
        return {"towers": [t.to_dict(group) for t in self.towers]}

    @classmethod
    def from_dict(cls, data: dict[str, Any], group: Group, size: int) -> Castle:
        return cls(
            tuple(
                Tower(
                    tuple(group.parse(s) for s in t["shape"]),
                    StateSubset.from_states(size, t["base"]),
                )
                for t in data["towers"]
            )
        )


@dataclass(frozen=True)
class AfmCertificate:
    """The three almost-finiteness-in-measure claims for one castle."""

    K: tuple[Any, ...]
    resolution: str
    epsilon: Fraction
    delta: Fraction
    density: Fraction
    per_tower_invariance: tuple[Fraction, ...]

    @property
    def passed(self) -> bool:
        return self.density >= 1 - self.epsilon and all(
            r < self.delta for r in self.per_tower_invariance
        )

    def to_dict(self, group: Group) -> dict[str, Any]:
        return {
            "K": [group.format(k) for k in self.K],
            "resolution": self.resolution,
            "epsilon": rational_str(self.epsilon),
            "delta": rational_str(self.delta),
            "density": rational_str(self.density),
            "per_tower_invariance": [rational_str(r) for r in self.per_tower_invariance],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any], group: Group) -> AfmCertificate:
        return cls(
            K=tuple(group.parse(k) for k in data["K"]),
            resolution=data["resolution"],
            epsilon=parse_rational(data["epsilon"]),
            delta=parse_rational(data["delta"]),
            density=parse_rational(data["density"]),
            per_tower_invariance=tuple(parse_rational(r) for r in data["per_tower_invariance"]),
        )


@dataclass(frozen=True)
class SubequivalenceWitness:
    """Pieces of A, each with the group element moving it into B."""

    pieces: tuple[tuple[Any, StateSubset], ...]

    @property
    def movers(self) -> tuple[Any, ...]:
        return tuple(g for g, _ in self.pieces)


@dataclass(frozen=True)
class T34Result:
    """Everything the multi-scale construction produced."""

    castle: Castle
    certificate: AfmCertificate
    parameters: StageParameters
    ladder: tuple[tuple[Any, ...], ...]
    deficits: tuple[LadderDeficit, ...]
    stages: tuple[StageRecord, ...] = field(default=())


# ---------------------------------------------------------------------------
# Castle validation
# ---------------------------------------------------------------------------

def validate_castle(castle: Castle, action: FinAction) -> CastleReport:
    """Check that all levels of all towers are pairwise disjoint."""
    owner_tower = np.full(action.size, -1, dtype=np.int64)
    owner_level = np.full(action.size, -1, dtype=np.int64)
    for i, tower in enumerate(castle.towers):
        for j, states in enumerate(tower.level_states(action)):
            taken = states[owner_tower[states] >= 0]
            if taken.size:
                x = int(taken[0])
                overlap = Overlap(int(owner_tower[x]), int(owner_level[x]), i, j, x)
                logger.debug("castle overlap %s", overlap)
                return CastleReport(False, overlap)
            owner_tower[states] = i
            owner_level[states] = j
    return CastleReport(True)


def _levels_in_cells(castle: Castle, action: FinAction) -> bool:
    for tower in castle.towers:
        for states in tower.level_states(action):
            if np.unique(action.cell_of[states]).size > 1:
                return False
    return True


# ---------------------------------------------------------------------------
# Single-scale construction
# ---------------------------------------------------------------------------

def _orbit_bits(column: np.ndarray, size: int) -> int:
    mask = np.zeros(size, dtype=bool)
    mask[column] = True
    return int.from_bytes(np.packbits(mask).tobytes(), "big")


def _initial_bases(images: np.ndarray, domain: np.ndarray, action: FinAction) -> list[np.ndarray]:
    """Greedy colouring of X∖Z where x ∼ y iff Sx ∩ Sy ≠ ∅.

    States are scanned in ascending order; a state joins the first class of its
    resolution signature whose occupied set misses its S-orbit. Under the singleton
    resolution every state has the same signature.
    """
    classes: list[list[int]] = []
    occupied: list[int] = []
    by_signature: dict[bytes, list[int]] = {}
    singletons = action.resolution is None
    for x in domain.tolist():
        column = images[:, x]
        signature = b"" if singletons else action.cell_of[column].tobytes()
        orbit = _orbit_bits(column, action.size)
        for index in by_signature.setdefault(signature, []):
            if not occupied[index] & orbit:
                classes[index].append(x)
                occupied[index] |= orbit
                break
        else:
            by_signature[signature].append(len(classes))
            classes.append([x])
            occupied.append(orbit)
    return [np.asarray(c, dtype=np.int64) for c in classes]


def build_castle_L33(
    action: FinAction,
    S: Iterable[Any],
    eps: Fraction,
    Y: StateSubset,
    Z: StateSubset,
) -> Castle:
    """Build a castle with shapes T ⊆ S, |T| ≥ (1−ε)|S|, avoiding Y and based off Z.

    Raises:
        CastlePreconditionError: If ε ∉ (0, 1/2) or the non-free part of S is not
            inside Z.
    """
    group = action.group
    S = group.ordered(S)
    if not 0 < eps < Fraction(1, 2):
        raise CastlePreconditionError(f"ε = {eps} must lie in (0, 1/2)")
    if not S:
        raise CastlePreconditionError("S must be nonempty")
    if not nonfree_part(S, action).issubset(Z):
        raise CastlePreconditionError("Z does not contain the non-free part of S")

    images = action.image_matrix(S)
    domain = np.flatnonzero(~Z.mask)
    bases = _initial_bases(images, domain, action)
    need = math.ceil((1 - eps) * len(S))
    covered = Y.mask.copy()
    towers: list[Tower] = []
    for base in bases:
        block = images[:, base]
        free = ~covered[block]
        admitted = free.sum(axis=0) >= need
        if not np.any(admitted):
            continue
        groups: dict[bytes, list[int]] = {}
        for col in np.flatnonzero(admitted).tolist():
            groups.setdefault(free[:, col].tobytes(), []).append(col)
        for cols in groups.values():
            rows = free[:, cols[0]]
            shape = tuple(s for s, keep in zip(S, rows.tolist(), strict=True) if keep)
            towers.append(Tower(shape, StateSubset.from_states(action.size, base[cols])))
            covered[block[np.ix_(rows, cols)]] = True
    logger.debug("L33 castle with %s towers over %s bases", len(towers), len(bases))
    return Castle(tuple(towers))


def check_l33(
    castle: Castle,
    action: FinAction,
    S: Iterable[Any],
    eps: Fraction,
    Y: StateSubset,
    Z: StateSubset,
) -> L33Report:
    """Recheck the single-scale postconditions from scratch."""
    group = action.group
    S = group.ordered(S)
    S_set = set(S)
    footprint = castle.footprint(action)

    base_hits = np.zeros(action.size, dtype=np.int64)
    for tower in castle.towers:
        base_hits[tower.base.states] += 1
    bases_ok = bool(np.all(base_hits <= 1)) and not np.any((base_hits > 0) & Z.mask)
    images = action.image_matrix(S)
    full_union = np.zeros(action.size, dtype=bool)
    full_union[images[:, base_hits > 0].ravel()] = True

    shapes_ok = all(
        set(t.shape) <= S_set and len(t.shape) >= (1 - eps) * len(S) for t in castle.towers
    )
    covered = Y | footprint
    counts = visit_counts(S, covered, action)
    outside = ~Z.mask
    coverage = bool(np.all(counts[outside] >= math.ceil(eps * len(S))))
    return L33Report(
        castle_valid=validate_castle(castle, action).valid,
        bases_outside_z=bases_ok,
        levels_in_cells=_levels_in_cells(castle, action),
        shapes_large=shapes_ok,
        avoids_y=footprint.isdisjoint(Y),
        union_identity=covered == (Y | StateSubset(full_union)),
        coverage=coverage,
    )


# ---------------------------------------------------------------------------
# Multi-scale construction
# ---------------------------------------------------------------------------

def _geometric_target(eps: Fraction, beta: Fraction, n: int) -> Fraction:
    return (1 - (1 - eps * (1 + beta)) ** n) / (1 + beta)


def stage_parameters(eps: Fraction, depth: int = DYADIC_SCAN_DEPTH) -> StageParameters:
    """Choose n, then the largest dyadic β and the smallest dyadic α = 1 − 2^{-m}.

    n is minimal with (1−ε)^n < ε; β and α satisfy α·(1−(1−ε(1+β))^n)/(1+β) > 1−ε.
    """
    if not 0 < eps < 1:
        raise CastlePreconditionError(f"ε = {eps} must lie in (0, 1)")
    n = 1
    while (1 - eps) ** n >= eps:
        n += 1
    for k in range(1, depth + 1):
        beta = Fraction(1, 2**k)
        if eps * (1 + beta) >= 1:
            continue
        target = _geometric_target(eps, beta, n)
        if target <= 1 - eps:
            continue
        for m in range(1, depth + 1):
            alpha = 1 - Fraction(1, 2**m)
            if alpha * target > 1 - eps:
                return StageParameters(n, beta, alpha, alpha * target - (1 - eps))
    raise CastlePreconditionError(f"no dyadic β, α found for ε = {eps}")


def _ladder_failures(
    group: Group, candidate: Sequence[Any], previous: Sequence[Sequence[Any]], target: Fraction
) -> list[tuple[int, Fraction]]:
    failures = []
    for i, F_i in enumerate(previous, start=1):
        ratio = boundary_ratio(group, candidate, group.inverse_set(F_i))
        if ratio >= target:
            failures.append((i, ratio))
    return failures


def folner_ladder(
    group: Group,
    K: Iterable[Any],
    eps: Fraction,
    beta: Fraction,
    n: int,
    cap: int,
) -> tuple[tuple[tuple[Any, ...], ...], tuple[LadderDeficit, ...]]:
    """Nested Følner sets F_1 ⊆ … ⊆ F_n with F_j (F_i⁻¹, β(1−ε))-invariant for i < j.

    Candidates come from the group's own family and never exceed ``cap`` elements.
    When even the largest candidate misses the ladder condition it is used anyway
    and the shortfall is returned as ``LadderDeficit`` records.
    The multi-scale run keeps going and reports the shortfall as ``ladder_met``.
    """
    K = group.ordered(K)
    first = tuple(folner_supplier(group, K, eps, cap))
    target = beta * (1 - eps)
    pool: list[tuple[Any, ...]] = []
    for candidate in group.folner_candidates():
        if set_size(candidate) > cap:
            break
        if set_size(candidate) >= len(first):
            pool.append(tuple(candidate))
    if not pool:
        pool = [first]

    ladder = [first]
    deficits: list[LadderDeficit] = []
    start = 0
    for j in range(2, n + 1):
        eligible = pool[start:]
        largest = eligible[-1]
        failures = _ladder_failures(group, largest, ladder, target)
        if failures or folner_invariance(group, largest, K) >= eps:
            chosen_index = len(eligible) - 1
            deficits.extend(LadderDeficit(j, i, r, target) for i, r in failures)
        else:
            lo, hi = 0, len(eligible) - 1
            while lo < hi:
                mid = (lo + hi) // 2
                c = eligible[mid]
                if not _ladder_failures(group, c, ladder, target) and (
                    folner_invariance(group, c, K) < eps
                ):
                    hi = mid
                else:
                    lo = mid + 1
            chosen_index = lo
        start += chosen_index
        ladder.append(eligible[chosen_index])
    if deficits:
        logger.info("Følner ladder capped at %s elements with %s deficits", cap, len(deficits))
    return tuple(ladder), tuple(deficits)


def stage_density_bound(alpha: Fraction, eps: Fraction, beta: Fraction, k: int) -> Fraction:
    """Footprint density owed after stage k: αε·Σ_{j<k} (1 − ε(1+β))^j."""
    ratio = 1 - eps * (1 + beta)
    return alpha * eps * sum((ratio**j for j in range(k)), Fraction(0))


def stage_record(
    action: FinAction,
    k: int,
    S: Sequence[Any],
    union: StateSubset,
    stage_castle: Castle,
    eps: Fraction,
    params: StageParameters,
) -> tuple[StageRecord, StateSubset]:
    """Recompute the bookkeeping of stage k from its castle.

    Returns:
        The stage record and the footprint union after the stage.
    """
    Z = nonfree_part(S, action)
    z_density = banach_upper(Z, action)
    z_bound = (1 - params.alpha) * eps / len(S)
    new_union = union | stage_castle.footprint(action)
    orbit_mask = np.zeros(action.size, dtype=bool)
    orbit_mask[action.image_matrix(S)[:, Z.states].ravel()] = True
    growth = density_growth_check(action, union, StateSubset(orbit_mask) | new_union, S, eps, params.beta)
    record = StageRecord(
        stage=k,
        folner_size=len(S),
        z_density=z_density,
        z_bound=z_bound,
        footprint_density=banach_lower(new_union, action),
        density_bound=stage_density_bound(params.alpha, eps, params.beta, k),
        density_growth=growth,
        towers=len(stage_castle),
    )
    return record, new_union


def afm_certificate(
    castle: Castle, action: FinAction, K: Sequence[Any], eps: Fraction, delta: Fraction
) -> AfmCertificate:
    group = action.group
    return AfmCertificate(
        K=group.ordered(K),
        resolution=action.resolution_id,
        epsilon=eps,
        delta=delta,
        density=banach_lower(castle.footprint(action), action),
        per_tower_invariance=tuple(folner_invariance(group, t.shape, K) for t in castle.towers),
    )


def build_castle_T34(
    action: FinAction,
    K: Iterable[Any],
    eps: Fraction,
    delta: Fraction | None = None,
    cap: int | None = None,
) -> T34Result:
    """Run the n-stage castle algorithm and certify the result.

    Args:
        action: The finite action.
        K: Finite set the shapes must be almost invariant under.
        eps: Target tolerance in (0, 1/2).
        delta: Shape invariance tolerance; defaults to ``eps``.
        cap: Largest Følner set considered; defaults to the number of states.

    Raises:
        StageFailureError: If a stage's non-free part is too dense or one of its
            checks fails.
    """
    group = action.group
    K = group.ordered(K)
    eps = Fraction(eps)
    delta = eps if delta is None else Fraction(delta)
    cap = action.size if cap is None else cap
    params = stage_parameters(eps)
    n = params.n
    logger.info("T34 with n=%s, β=%s, α=%s", n, params.beta, params.alpha)
    ladder, deficits = folner_ladder(group, K, eps, params.beta, n, cap)

    castle = Castle()
    union = StateSubset.empty(action.size)
    records: list[StageRecord] = []
    for k in range(1, n + 1):
        S = ladder[n - k]
        Z = nonfree_part(S, action)
        z_density = banach_upper(Z, action)
        z_bound = (1 - params.alpha) * eps / len(S)
        if z_density >= z_bound:
            raise StageFailureError(k, f"non-free part has density {z_density} ≥ {z_bound}")
        stage_castle = build_castle_L33(action, S, eps, union, Z)
        report = check_l33(stage_castle, action, S, eps, union, Z)
        if not report.passed:
            raise StageFailureError(k, f"single-scale postconditions fail: {report}")
        record, union = stage_record(action, k, S, union, stage_castle, eps, params)
        if not record.density_growth.holds:
            raise StageFailureError(
                k, f"density recursion fails: {record.density_growth.lhs} < {record.density_growth.rhs}"
            )
        if record.footprint_density < record.density_bound:
            raise StageFailureError(
                k, f"footprint density {record.footprint_density} below {record.density_bound}"
            )
        records.append(record)
        logger.debug("stage %s: |F|=%s, towers=%s", k, len(S), len(stage_castle))
        castle = castle.extend(stage_castle)

    certificate = afm_certificate(castle, action, K, eps, delta)
    logger.info("T34 castle: %s towers, density %s", len(castle), certificate.density)
    return T34Result(castle, certificate, params, ladder, deficits, tuple(records))


# ---------------------------------------------------------------------------
# Checkers
# ---------------------------------------------------------------------------

def afm_check(castle: Castle, certificate: AfmCertificate, action: FinAction) -> CheckReport:
    """Recompute every almost-finiteness claim of ``certificate`` for ``castle``."""
    group = action.group
    failures = []
    report = validate_castle(castle, action)
    if not report.valid:
        failures.append(f"levels overlap at state {report.overlap.state}")
    if certificate.resolution != action.resolution_id:
        failures.append("resolution does not match the action")
    if not _levels_in_cells(castle, action):
        failures.append("a level meets two resolution cells")
    ratios = tuple(folner_invariance(group, t.shape, certificate.K) for t in castle.towers)
    if ratios != certificate.per_tower_invariance:
        failures.append("recorded tower invariance ratios do not match")
    if any(r >= certificate.delta for r in ratios):
        failures.append(f"a shape is not (K, {certificate.delta})-invariant")
    density = banach_lower(castle.footprint(action), action)
    if density != certificate.density:
        failures.append(f"recorded density {certificate.density} differs from {density}")
    if density < 1 - certificate.epsilon:
        failures.append(f"density {density} below {1 - certificate.epsilon}")
    return CheckReport.from_failures(failures)


def essfree_bound_from_castle(
    castle: Castle, g: Any, eps_prime: Fraction, action: FinAction
) -> EssFreeBound:
    """Certify μ(Fix g) ≤ 1 − (1−ε′)² for every extreme invariant measure."""
    group = action.group
    g_inv = group.inv(g)
    for tower in castle.towers:
        ratio = folner_invariance(group, tower.shape, [g_inv])
        if ratio > eps_prime:
            raise CastlePreconditionError(f"shape ratio {ratio} under g⁻¹ exceeds {eps_prime}")
    footprint = castle.footprint(action)
    if banach_lower(footprint, action) < 1 - eps_prime:
        raise CastlePreconditionError(f"footprint density below {1 - eps_prime}")

    fixed = fix_set(g, action)
    labels = action.orbit_labels()
    sizes = np.bincount(labels)
    overlaps = [len(set(t.shape) & {group.mul(g_inv, s) for s in t.shape}) for t in castle.towers]
    chains = []
    for index, measure in enumerate(invariant_measures(action)):
        orbit_size = int(sizes[index])
        base_measures = [
            Fraction(int(np.count_nonzero(labels[t.base.mask] == index)), orbit_size)
            for t in castle.towers
        ]
        fixed_measure = measure.measure(fixed, action)
        chains.append(
            EssFreeChain(
                orbit=index,
                fixed_measure=fixed_measure,
                lhs=1 - fixed_measure,
                overlap_sum=sum(
                    (c * m for c, m in zip(overlaps, base_measures, strict=True)), Fraction(0)
                ),
                shape_sum=sum(
                    ((1 - eps_prime) * len(t.shape) * m for t, m in zip(castle.towers, base_measures, strict=True)),
                    Fraction(0),
                ),
                footprint_term=(1 - eps_prime) * measure.measure(footprint, action),
                floor=(1 - eps_prime) ** 2,
            )
        )
    return EssFreeBound(1 - (1 - eps_prime) ** 2, tuple(chains))


def subequivalence_witness(
    A: StateSubset,
    B: StateSubset,
    action: FinAction,
    radius: int | None = None,
) -> SubequivalenceWitness | None:
    """Search for pieces of A and movers sending them disjointly into B.

    Movers range over words of length ≤ ``radius``. The default searches each
    orbit of A to its full Schreier-graph eccentricity, so the ball is as large
    as the orbit diameter and a ``None`` result is conclusive for singleton
    pieces. With an explicit radius, ``None`` only rules out that ball.
    """
    group = action.group
    if A.issubset(B):
        return SubequivalenceWitness(((group.identity(), A),) if len(A) else ())
    steps = group.symmetric_generators()
    step_perms = [action.permutation(s) for s in steps]
    targets = B.mask
    graph = nx.Graph()
    left = [("a", a) for a in A]
    graph.add_nodes_from(left)
    movers: dict[tuple[int, int], Any] = {}
    for a in A:
        reached = {a: (group.identity(), 0)}
        frontier = deque([a])
        while frontier:
            x = frontier.popleft()
            mover, dist = reached[x]
            if targets[x]:
                graph.add_edge(("a", a), ("b", x))
                movers[(a, x)] = mover
            if radius is not None and dist == radius:
                continue
            for s, perm in zip(steps, step_perms, strict=True):
                y = int(perm[x])
                if y not in reached:
                    reached[y] = (group.mul(s, mover), dist + 1)
                    frontier.append(y)
    matching = nx.bipartite.hopcroft_karp_matching(graph, top_nodes=left)
    if any(node not in matching for node in left):
        logger.info("no subequivalence witness within radius %s", radius)
        return None
    pieces: dict[Any, list[int]] = {}
    for a in A:
        _, b = matching[("a", a)]
        pieces.setdefault(movers[(a, b)], []).append(a)
    ordered = sorted(pieces.items(), key=lambda item: min(item[1]))
    return SubequivalenceWitness(
        tuple((g, StateSubset.from_states(action.size, states)) for g, states in ordered)
    )


def check_subequivalence(
    witness: SubequivalenceWitness, A: StateSubset, B: StateSubset, action: FinAction
) -> CheckReport:
    failures = []
    covered = StateSubset.empty(action.size)
    image = StateSubset.empty(action.size)
    for g, piece in witness.pieces:
        if not piece.isdisjoint(covered):
            failures.append("pieces overlap")
        covered = covered | piece
        moved = action.translate(g, piece)
        if not moved.isdisjoint(image):
            failures.append(f"moved piece under {action.group.format(g)} overlaps another")
        if not moved.issubset(B):
            failures.append(f"moved piece under {action.group.format(g)} leaves B")
        image = image | moved
    if covered != A:
        failures.append("pieces do not partition A")
    return CheckReport.from_failures(failures)
