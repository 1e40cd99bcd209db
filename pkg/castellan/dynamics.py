"""Finite Γ-spaces and the exact density, Følner and Schreier machinery on them.

A ``FinAction`` is a state set ``0 .. N-1`` with one permutation per group
generator; arbitrary elements act through their word decomposition. Permutations
are numpy index arrays with ``perm[x] = g·x``, so ``perm_gh = perm_g[perm_h]``.
Every returned density is an exact ``Fraction``.
"""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

import networkx as nx
import numpy as np

from castellan.config import (
    DYADIC_SCAN_DEPTH,
    FOLNER_CANDIDATE_CAP,
    PERMUTATION_CACHE_BYTES,
    WREATH_BOX_RADIUS_CAP,
)
from castellan.exceptions import (
    EmptyFolnerSetError,
    FolnerCapError,
    InvalidPermutationError,
    InvalidResolutionError,
    SectionTooSmallError,
)
from castellan.group_core import INTEGERS, Group, IntegerGroup, LambdaGroup, build_group
from castellan.models import CheckReport, DensityGrowthReport, SparseBoundaryReport

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# State subsets
# ---------------------------------------------------------------------------

class StateSubset:
    """An immutable subset of ``0 .. size-1`` stored as a boolean mask."""

    __slots__ = ("_mask",)

    def __init__(self, mask: np.ndarray) -> None:
        data = np.array(mask, dtype=bool, copy=True)
        data.setflags(write=False)
        self._mask = data

    @classmethod
    def from_states(cls, size: int, states: Iterable[int]) -> StateSubset:
        mask = np.zeros(size, dtype=bool)
        idx = np.fromiter((int(s) for s in states), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= size):
            raise IndexError(f"state out of range 0..{size - 1}")
        mask[idx] = True
        return cls(mask)

    @classmethod
    def empty(cls, size: int) -> StateSubset:
        return cls(np.zeros(size, dtype=bool))

    @classmethod
    def full(cls, size: int) -> StateSubset:
        return cls(np.ones(size, dtype=bool))

    @property
    def mask(self) -> np.ndarray:
        return self._mask

    @property
    def size(self) -> int:
        return int(self._mask.size)

    @property
    def states(self) -> np.ndarray:
        return np.flatnonzero(self._mask)

    def to_list(self) -> list[int]:
        return [int(s) for s in self.states]

    def issubset(self, other: StateSubset) -> bool:
        return not bool(np.any(self._mask & ~other._mask))

    def isdisjoint(self, other: StateSubset) -> bool:
        return not bool(np.any(self._mask & other._mask))

    def __len__(self) -> int:
        return int(np.count_nonzero(self._mask))

    def __contains__(self, x: object) -> bool:
        return isinstance(x, (int, np.integer)) and 0 <= int(x) < self.size and bool(self._mask[int(x)])

    def __iter__(self) -> Iterator[int]:
        return iter(self.to_list())

    def __or__(self, other: StateSubset) -> StateSubset:
        return StateSubset(self._mask | other._mask)

    def __and__(self, other: StateSubset) -> StateSubset:
        return StateSubset(self._mask & other._mask)

    def __sub__(self, other: StateSubset) -> StateSubset:
        return StateSubset(self._mask & ~other._mask)

    def __xor__(self, other: StateSubset) -> StateSubset:
        return StateSubset(self._mask ^ other._mask)

    def __invert__(self) -> StateSubset:
        return StateSubset(~self._mask)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, StateSubset) and np.array_equal(self._mask, other._mask)

    def __hash__(self) -> int:
        return hash(self._mask.tobytes())

    def __repr__(self) -> str:
        shown = self.to_list()
        if len(shown) > 12:
            return f"StateSubset(size={self.size}, |A|={len(shown)})"
        return f"StateSubset({shown}, size={self.size})"


# ---------------------------------------------------------------------------
# Finite actions
# ---------------------------------------------------------------------------

def perm_inverse(perm: np.ndarray) -> np.ndarray:
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(perm.size, dtype=perm.dtype)
    return inverse


def perm_power(perm: np.ndarray, exponent: int) -> np.ndarray:
    if exponent < 0:
        perm, exponent = perm_inverse(perm), -exponent
    result = np.arange(perm.size, dtype=np.int64)
    base = perm
    while exponent:
        if exponent & 1:
            result = base[result]
        base = base[base]
        exponent >>= 1
    return result


class _UnionFind:
    """Disjoint sets over ``0 .. size-1`` with union by rank."""

    def __init__(self, size: int) -> None:
        self.parent = list(range(size))
        self.rank = [0] * size

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, x: int, y: int) -> None:
        x, y = self.find(x), self.find(y)
        if x == y:
            return
        if self.rank[x] < self.rank[y]:
            x, y = y, x
        elif self.rank[x] == self.rank[y]:
            self.rank[x] += 1
        self.parent[y] = x


class FinAction:
    """A finite Γ-space given by generator permutations.

    Args:
        group: The acting group.
        size: Number of states N.
        generator_perms: One permutation (length N) per element of
            ``group.generators``, in the same order.
        resolution: Optional partition of the states into cells; defaults to
            singletons.
    """

    def __init__(
        self,
        group: Group,
        size: int,
        generator_perms: Sequence[Sequence[int] | np.ndarray],
        resolution: Sequence[Sequence[int]] | None = None,
    ) -> None:
        if len(generator_perms) != len(group.generators):
            raise InvalidPermutationError(
                group.generators, f"expected {len(group.generators)} generator permutations"
            )
        self.group = group
        self.size = int(size)
        perms = []
        for g, raw in zip(group.generators, generator_perms, strict=True):
            perm = np.array(raw, dtype=np.int64)
            if perm.shape != (self.size,):
                raise InvalidPermutationError(g, f"expected length {self.size}")
            if perm.size and (perm.min() < 0 or perm.max() >= self.size):
                raise InvalidPermutationError(g, "entry out of range")
            if np.any(np.bincount(perm, minlength=self.size) != 1):
                raise InvalidPermutationError(g)
            perm.setflags(write=False)
            perms.append(perm)
        self._generator_perms = tuple(perms)
        self._inverse_perms = tuple(perm_inverse(p) for p in perms)
        self._cache: OrderedDict[Any, np.ndarray] = OrderedDict()
        self._orbit_labels: np.ndarray | None = None
        self._set_resolution(resolution)

    def _set_resolution(self, resolution: Sequence[Sequence[int]] | None) -> None:
        if resolution is None:
            cell_of = np.arange(self.size, dtype=np.int64)
            self.resolution: tuple[tuple[int, ...], ...] | None = None
        else:
            cell_of = np.full(self.size, -1, dtype=np.int64)
            cells = tuple(tuple(int(x) for x in cell) for cell in resolution)
            for index, cell in enumerate(cells):
                if not cell:
                    raise InvalidResolutionError("empty cell")
                if np.any(cell_of[list(cell)] >= 0):
                    raise InvalidResolutionError("cells overlap")
                cell_of[list(cell)] = index
            if np.any(cell_of < 0):
                raise InvalidResolutionError("cells do not cover every state")
            self.resolution = cells
        cell_of.setflags(write=False)
        self.cell_of = cell_of

    @property
    def generator_perms(self) -> tuple[np.ndarray, ...]:
        return self._generator_perms

    @property
    def resolution_id(self) -> str:
        if self.resolution is None:
            return "singletons"
        return f"cells:{len(self.resolution)}"

    # -- element permutations --------------------------------------------------

    def permutation(self, g: Any) -> np.ndarray:
        """Return the (read-only) permutation ``x ↦ g·x``."""
        cached = self._cache.get(g)
        if cached is not None:
            self._cache.move_to_end(g)
            return cached
        perm = self._compute_permutation(g)
        perm.setflags(write=False)
        self._cache[g] = perm
        if len(self._cache) > max(16, PERMUTATION_CACHE_BYTES // max(8 * self.size, 1)):
            self._cache.popitem(last=False)
        return perm

    def _compute_permutation(self, g: Any) -> np.ndarray:
        result = np.arange(self.size, dtype=np.int64)
        for index, exponent in self.group.word(g):
            if exponent < 0:
                step = perm_power(self._inverse_perms[index], -exponent)
            else:
                step = perm_power(self._generator_perms[index], exponent)
            result = result[step]
        return result

    def apply(self, g: Any, states: np.ndarray) -> np.ndarray:
        """Act by ``g`` on an array of states."""
        return self.permutation(g)[np.asarray(states, dtype=np.int64)]

    def act(self, g: Any, x: int) -> int:
        return int(self.apply(g, np.array([x]))[0])

    def translate(self, g: Any, subset: StateSubset) -> StateSubset:
        """g·A."""
        mask = np.zeros(self.size, dtype=bool)
        mask[self.apply(g, subset.states)] = True
        return StateSubset(mask)

    def image_matrix(self, elements: Sequence[Any]) -> np.ndarray:
        """Rows ``perm_s`` for s in ``elements``: entry [i, x] is s_i·x."""
        if not len(elements):
            return np.zeros((0, self.size), dtype=np.int64)
        return np.stack([self.permutation(s) for s in elements])

    # -- orbits -----------------------------------------------------------------

    def orbit_labels(self) -> np.ndarray:
        """Orbit index per state; orbits are numbered by their smallest state."""
        if self._orbit_labels is None:
            uf = _UnionFind(self.size)
            for perm in self._generator_perms:
                for x, y in enumerate(perm.tolist()):
                    if x != y:
                        uf.union(x, y)
            roots = np.fromiter((uf.find(x) for x in range(self.size)), dtype=np.int64, count=self.size)
            _, first, labels = np.unique(roots, return_index=True, return_inverse=True)
            order = np.argsort(np.argsort(first))
            labels = order[labels].astype(np.int64)
            labels.setflags(write=False)
            self._orbit_labels = labels
        return self._orbit_labels

    def orbits(self) -> tuple[np.ndarray, ...]:
        labels = self.orbit_labels()
        count = int(labels.max()) + 1 if self.size else 0
        return tuple(np.flatnonzero(labels == k) for k in range(count))

    def orbit_sizes(self) -> np.ndarray:
        return np.bincount(self.orbit_labels())

    def is_transitive(self) -> bool:
        return self.size > 0 and int(self.orbit_labels().max()) == 0

    # -- serialization ------------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "group": self.group.spec(),
            "states": self.size,
            "generators": [
                {"element": self.group.format(g), "perm": p.tolist()}
                for g, p in zip(self.group.generators, self._generator_perms, strict=True)
            ],
            "resolution": [list(c) for c in self.resolution] if self.resolution else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> FinAction:
        group = build_group(data["group"])
        perms = [g["perm"] for g in data["generators"]]
        return cls(group, int(data["states"]), perms, data.get("resolution"))

    def __repr__(self) -> str:
        return f"FinAction({self.group.kind}, states={self.size}, {self.resolution_id})"


def cyclic_action(size: int, resolution: Sequence[Sequence[int]] | None = None) -> FinAction:
    """ℤ ↷ ℤ/size by +1."""
    return FinAction(INTEGERS, size, [np.roll(np.arange(size), -1)], resolution)


def random_action(size: int, rng: np.random.Generator) -> FinAction:
    """ℤ acting through a uniformly random permutation."""
    return FinAction(INTEGERS, size, [rng.permutation(size)])


# ---------------------------------------------------------------------------
# Fixed points and non-free parts
# ---------------------------------------------------------------------------

def act(g: Any, x: int, action: FinAction) -> int:
    return action.act(g, x)


def fix_set(g: Any, action: FinAction) -> StateSubset:
    return StateSubset(action.permutation(g) == np.arange(action.size))


def nonfree_part(elements: Iterable[Any], action: FinAction) -> StateSubset:
    """States x where g ↦ g·x is not injective on F."""
    elements = tuple(dict.fromkeys(elements))
    mask = np.zeros(action.size, dtype=bool)
    if len(elements) <= 1:
        return StateSubset(mask)
    chunk = max(1, (1 << 22) // len(elements))
    for start in range(0, action.size, chunk):
        cols = slice(start, min(action.size, start + chunk))
        block = np.sort(action.image_matrix(elements)[:, cols], axis=0)
        mask[cols] = np.any(block[1:] == block[:-1], axis=0)
    return StateSubset(mask)


# ---------------------------------------------------------------------------
# Densities and invariant measures
# ---------------------------------------------------------------------------

def visit_counts(elements: Sequence[Any], subset: StateSubset, action: FinAction) -> np.ndarray:
    """Per state x, |{t ∈ F : t·x ∈ A}|."""
    if not len(elements):
        raise EmptyFolnerSetError()
    counts = np.zeros(action.size, dtype=np.int64)
    for t in elements:
        counts += subset.mask[action.permutation(t)]
    return counts


def lower_density_F(elements: Sequence[Any], subset: StateSubset, action: FinAction) -> Fraction:
    elements = tuple(dict.fromkeys(elements))
    return Fraction(int(visit_counts(elements, subset, action).min()), len(elements))


def upper_density_F(elements: Sequence[Any], subset: StateSubset, action: FinAction) -> Fraction:
    elements = tuple(dict.fromkeys(elements))
    return Fraction(int(visit_counts(elements, subset, action).max()), len(elements))


def orbit_fractions(subset: StateSubset, action: FinAction) -> list[Fraction]:
    labels = action.orbit_labels()
    sizes = np.bincount(labels)
    hits = np.bincount(labels[subset.mask], minlength=sizes.size)
    return [Fraction(int(h), int(s)) for h, s in zip(hits, sizes, strict=True)]


def banach_lower(subset: StateSubset, action: FinAction) -> Fraction:
    return min(orbit_fractions(subset, action), default=Fraction(0))


def banach_upper(subset: StateSubset, action: FinAction) -> Fraction:
    return max(orbit_fractions(subset, action), default=Fraction(0))


@dataclass(frozen=True)
class InvariantMeasure:
    """An invariant probability measure as a convex combination of orbit-uniform measures."""

    weights: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        if any(w < 0 for w in self.weights) or sum(self.weights, Fraction(0)) != 1:
            raise ValueError("weights must be nonnegative and sum to 1")

    def measure(self, subset: StateSubset, action: FinAction) -> Fraction:
        fractions = orbit_fractions(subset, action)
        return sum((w * f for w, f in zip(self.weights, fractions, strict=True)), Fraction(0))

    def is_invariant(self, subset: StateSubset, action: FinAction) -> bool:
        base = self.measure(subset, action)
        return all(
            self.measure(action.translate(g, subset), action) == base
            for g in action.group.generators
        )


def invariant_measures(action: FinAction) -> list[InvariantMeasure]:
    """The extreme invariant measures: one uniform measure per orbit."""
    count = len(action.orbits())
    return [
        InvariantMeasure(tuple(Fraction(int(i == k)) for i in range(count)))
        for k in range(count)
    ]


def neighbourhood(subset: StateSubset, eta: Fraction | int) -> StateSubset:
    """A^{<η} for the discrete metric: A itself while η ≤ 1."""
    if eta <= 1 or len(subset) == 0:
        return subset
    return StateSubset.full(subset.size)


# ---------------------------------------------------------------------------
# Følner sets
# ---------------------------------------------------------------------------

def set_size(F: Any) -> int:
    """|F| for enumerated sets and for closed-form candidates such as wreath boxes."""
    size = getattr(F, "cardinality", None)
    return len(F) if size is None else size


def _symmetric_difference_size(group: Group, F: Any, k: Any) -> int:
    stable = getattr(F, "stable_count", None)
    if stable is not None:
        return 2 * (set_size(F) - stable(k))
    members = set(F)
    shifted = {group.mul(k, f) for f in members}
    return len(shifted ^ members)


def folner_invariance(group: Group, F: Any, K: Iterable[Any]) -> Fraction:
    """Σ_{k∈K} |kF △ F| / |F| (the summed ratio; it dominates |KF △ F|/|F|)."""
    size = set_size(F)
    if size == 0:
        raise EmptyFolnerSetError()
    K = group.ordered(K)
    if isinstance(group, IntegerGroup) and not hasattr(F, "stable_count"):
        base = np.unique(np.asarray(list(F), dtype=np.int64))
        total = sum(
            2 * (base.size - np.intersect1d(base + k, base, assume_unique=True).size) for k in K
        )
        return Fraction(int(total), size)
    return Fraction(sum(_symmetric_difference_size(group, F, k) for k in K), size)


def _integer_sumset(K: np.ndarray, F: np.ndarray) -> np.ndarray:
    """K + F for sorted unique integer arrays."""
    k_off, f_off = int(K[0]), int(F[0])
    k_span, f_span = int(K[-1]) - k_off + 1, int(F[-1]) - f_off + 1
    if k_span * f_span > 1 << 26:
        return np.unique(np.add.outer(K, F).ravel())
    k_mask = np.zeros(k_span, dtype=np.int64)
    f_mask = np.zeros(f_span, dtype=np.int64)
    k_mask[K - k_off] = 1
    f_mask[F - f_off] = 1
    return np.flatnonzero(np.convolve(k_mask, f_mask)) + (k_off + f_off)


def boundary_ratio(group: Group, F: Iterable[Any], K: Iterable[Any]) -> Fraction:
    """|KF △ F| / |F|."""
    members = tuple(F)
    if not members:
        raise EmptyFolnerSetError()
    K = group.ordered(K)
    if isinstance(group, IntegerGroup):
        base = np.unique(np.asarray(members, dtype=np.int64))
        if not K:
            return Fraction(1)
        moved = _integer_sumset(np.asarray(K, dtype=np.int64), base)
        return Fraction(int(np.setxor1d(moved, base, assume_unique=True).size), base.size)
    member_set = set(members)
    moved_set = {group.mul(k, f) for k in K for f in member_set}
    return Fraction(len(moved_set ^ member_set), len(member_set))


def folner_supplier(
    group: Group, K: Iterable[Any], eps: Fraction, cap: int = FOLNER_CANDIDATE_CAP
) -> Any:
    """Return the first candidate of the group's family certified (K, ε)-invariant."""
    if eps <= 0:
        raise ValueError("ε must be positive")
    K = group.ordered(K)
    best = None
    for candidate in group.folner_candidates():
        # Wreath boxes are never enumerated; their cap bounds the radius instead.
        radius = getattr(candidate, "radius", None)
        if radius is not None and radius > WREATH_BOX_RADIUS_CAP:
            raise FolnerCapError(WREATH_BOX_RADIUS_CAP, best)
        if radius is None and len(candidate) > cap:
            raise FolnerCapError(cap, best)
        ratio = folner_invariance(group, candidate, K)
        if ratio < eps:
            logger.debug("Følner set of size %s certified with ratio %s", set_size(candidate), ratio)
            return candidate
        best = ratio if best is None else min(best, ratio)
    raise FolnerCapError(cap, best)  # pragma: no cover


def shrink_epsilon(k_size: int, delta: Fraction, depth: int = DYADIC_SCAN_DEPTH) -> Fraction:
    """Largest dyadic ε with ε(1 + 2|K|)/(1 − ε) ≤ δ, found by bisection.

    Any F′ ⊆ F with |F′| ≥ (1−ε)|F| of a (K, ε)-invariant F is then (K, δ)-invariant.
    """
    lo, hi = Fraction(0), Fraction(1)
    for _ in range(depth):
        mid = (lo + hi) / 2
        if mid * (1 + 2 * k_size) <= delta * (1 - mid):
            lo = mid
        else:
            hi = mid
    return lo


def shrink_preserves_invariance_check(
    group: Group,
    F: Iterable[Any],
    F_sub: Iterable[Any],
    K: Iterable[Any],
    delta: Fraction,
    eps: Fraction | None = None,
) -> bool:
    """Check the shrinking implication for one instance; vacuous if the hypotheses fail."""
    K = group.ordered(K)
    F, F_sub = tuple(dict.fromkeys(F)), tuple(dict.fromkeys(F_sub))
    eps = shrink_epsilon(len(K), delta) if eps is None else eps
    hypotheses = (
        set(F_sub) <= set(F)
        and len(F_sub) >= (1 - eps) * len(F)
        and len(F_sub) > 0
        and folner_invariance(group, F, K) < eps
    )
    if not hypotheses:
        logger.debug("shrink check vacuous: hypotheses fail")
        return True
    return folner_invariance(group, F_sub, K) < delta


# ---------------------------------------------------------------------------
# ε-disjointness
# ---------------------------------------------------------------------------

def eps_disjoint_check(
    family: Sequence[Iterable[int]], eps: Fraction
) -> tuple[bool, list[frozenset[int]] | None]:
    """Decide ε-disjointness; return the disjoint sub-family A′_i when it exists."""
    sets = [frozenset(a) for a in family]
    need = [math.ceil((1 - eps) * len(a)) for a in sets]
    multiplicity: dict[int, int] = {}
    for a in sets:
        for x in a:
            multiplicity[x] = multiplicity.get(x, 0) + 1

    taken: set[int] = set()
    chosen: list[frozenset[int]] = [frozenset()] * len(sets)
    order = sorted(range(len(sets)), key=lambda i: (-len(sets[i]), i))
    for i in order:
        available = sorted(sets[i] - taken, key=lambda x: (multiplicity[x], x))
        if len(available) < need[i]:
            break
        chosen[i] = frozenset(available[: need[i]])
        taken |= chosen[i]
    else:
        return True, chosen

    logger.debug("greedy ε-disjointness failed; falling back to max-flow")
    flow_graph = nx.DiGraph()
    for i, a in enumerate(sets):
        flow_graph.add_edge("source", ("set", i), capacity=need[i])
        for x in a:
            flow_graph.add_edge(("set", i), ("pt", x), capacity=1)
            flow_graph.add_edge(("pt", x), "sink", capacity=1)
    if sum(need) == 0:
        return True, [frozenset() for _ in sets]
    value, flow = nx.maximum_flow(flow_graph, "source", "sink")
    if value < sum(need):
        return False, None
    witness = [
        frozenset(x for (_, x), used in flow[("set", i)].items() if used > 0)
        if ("set", i) in flow
        else frozenset()
        for i in range(len(sets))
    ]
    return True, witness


# ---------------------------------------------------------------------------
# Sparse boundary and density growth predicates
# ---------------------------------------------------------------------------

def sparse_boundary_check(
    action: FinAction,
    subset: StateSubset,
    T: Sequence[Any],
    F: Sequence[Any],
    beta: Fraction,
    exceptional: StateSubset | None = None,
) -> SparseBoundaryReport:
    """|{g ∈ F : gx ∈ T⁻¹A △ A}| < β|{g ∈ F : gx ∈ A}| for every x off the exceptional set."""
    group = action.group
    exceptional = nonfree_part(F, action) if exceptional is None else exceptional
    pulled = StateSubset.empty(action.size)
    for t in T:
        pulled = pulled | action.translate(group.inv(t), subset)
    boundary = pulled ^ subset
    bad = visit_counts(F, boundary, action)
    hits = visit_counts(F, subset, action)
    fails = (bad * beta.denominator >= hits * beta.numerator) & ~exceptional.mask
    if not np.any(fails):
        return SparseBoundaryReport(True)
    worst = int(np.flatnonzero(fails)[0])
    return SparseBoundaryReport(False, worst, int(bad[worst]), int(hits[worst]))


def density_growth_check(
    action: FinAction,
    A: StateSubset,
    B: StateSubset,
    T: Sequence[Any],
    eps: Fraction,
    beta: Fraction,
) -> DensityGrowthReport:
    """D(B) ≥ (1 − ε(1+β))·D(A) + ε, with hypotheses A ⊆ B and D_T(B) ≥ ε."""
    hypotheses = A.issubset(B) and lower_density_F(T, B, action) >= eps
    lhs = banach_lower(B, action)
    rhs = (1 - eps * (1 + beta)) * banach_lower(A, action) + eps
    return DensityGrowthReport(hypotheses, lhs >= rhs, lhs, rhs)


# ---------------------------------------------------------------------------
# Schreier graphs, the wedding cake, sections
# ---------------------------------------------------------------------------

class SchreierGraph:
    """Labelled graph on the states with an edge x → λ·x for each λ in Λ_0."""

    def __init__(self, action: FinAction, labels: Iterable[Any]) -> None:
        self.action = action
        self.labels = action.group.ordered(labels)
        graph = nx.DiGraph()
        graph.add_nodes_from(range(action.size))
        for lam in self.labels:
            perm = action.permutation(lam)
            graph.add_edges_from(
                ((x, int(y), {"label": lam}) for x, y in enumerate(perm.tolist())),
            )
        self.graph = graph

    @property
    def is_symmetric(self) -> bool:
        group = self.action.group
        return set(self.labels) == {group.inv(lam) for lam in self.labels}

    def distance(self, y: int, z: int) -> float:
        """ρ(y, z): least m with y = λ_1⋯λ_m·z."""
        try:
            return float(nx.shortest_path_length(self.graph, source=z, target=y))
        except nx.NetworkXNoPath:
            return math.inf

    def distances_from(self, sources: StateSubset) -> np.ndarray:
        """ρ(y, Y_0) for every y, as floats with ``inf`` for unreachable states."""
        out = np.full(self.action.size, math.inf)
        if len(sources) == 0:
            return out
        lengths = nx.multi_source_dijkstra_path_length(self.graph, set(sources.to_list()))
        for node, dist in lengths.items():
            out[node] = dist
        return out


@dataclass(frozen=True)
class WeddingCakeFn:
    """f(y) = min(ρ(y, Y_0), n)/n."""

    n: int
    values: tuple[Fraction, ...]

    def __getitem__(self, y: int) -> Fraction:
        return self.values[y]

    def __len__(self) -> int:
        return len(self.values)

    def not_one(self) -> list[int]:
        return [y for y, v in enumerate(self.values) if v != 1]

    def check(self, graph: SchreierGraph, zero_set: StateSubset) -> CheckReport:
        """Check that f vanishes on the zero set and moves by at most 1/n per generator step."""
        failures = []
        if any(self.values[y] != 0 for y in zero_set):
            failures.append("f is not zero on Y_0")
        step = Fraction(1, self.n)
        for lam in graph.labels:
            perm = graph.action.permutation(lam)
            if any(abs(self.values[int(perm[y])] - self.values[y]) > step for y in range(len(self))):
                failures.append(f"f jumps by more than 1/{self.n} along {lam!r}")
        degree = len(graph.labels)
        bound = sum(degree**i for i in range(self.n)) * len(zero_set)
        if len(self.not_one()) > bound:
            failures.append(f"|{{f ≠ 1}}| = {len(self.not_one())} exceeds {bound}")
        return CheckReport.from_failures(failures)


def wedding_cake(graph: SchreierGraph, zero_set: StateSubset, n: int) -> WeddingCakeFn:
    if n < 1:
        raise ValueError("n must be a positive integer")
    distances = graph.distances_from(zero_set)
    values = tuple(
        Fraction(1) if math.isinf(d) else Fraction(min(int(d), n), n) for d in distances
    )
    return WeddingCakeFn(n, values)


@dataclass(frozen=True)
class SectionData:
    """A section φ of Λ → Λ/Λ_n with its equivariance defect over K."""

    quotient_size: int
    phi: tuple[int, ...]
    defect: tuple[int, ...]
    K: tuple[int, ...]
    eps: Fraction

    @property
    def defect_fraction(self) -> Fraction:
        return Fraction(len(self.defect), self.quotient_size)

    def check(self, base: LambdaGroup = INTEGERS) -> CheckReport:
        failures = []
        if any(base.reduce(p, self.quotient_size) != t for t, p in enumerate(self.phi)):
            failures.append("π∘φ is not the identity")
        missing = set(section_defect(self.phi, self.K, base)) - set(self.defect)
        if missing:
            failures.append(f"defect set misses {sorted(missing)[:5]}")
        return CheckReport.from_failures(failures)


def section_defect(
    phi: Sequence[int], K: Iterable[int], base: LambdaGroup = INTEGERS
) -> tuple[int, ...]:
    """{t : λφ(t) ≠ φ(π(λ)t) for some λ ∈ K}."""
    size = len(phi)
    defect = set()
    for lam in K:
        for t, rep in enumerate(phi):
            if base.mul(lam, rep) != phi[base.translate_coset(lam, t, size)]:
                defect.add(t)
    return tuple(sorted(defect))


def equivariant_section(
    quotient_size: int, K: Iterable[int], eps: Fraction, base: LambdaGroup = INTEGERS
) -> SectionData:
    """The canonical-representative section with its exact defect set."""
    if eps <= 0:
        raise ValueError("ε must be positive")
    K = tuple(sorted(set(K)))
    phi = tuple(base.lift(t, quotient_size) for t in range(quotient_size))
    defect = section_defect(phi, K, base)
    if len(defect) >= eps * quotient_size:
        raise SectionTooSmallError(quotient_size, len(defect), eps)
    return SectionData(quotient_size, phi, defect, K, Fraction(eps))


def canonical_section(
    quotient_size: int, K: Iterable[int], eps: Fraction = Fraction(1), base: LambdaGroup = INTEGERS
) -> SectionData:
    """The canonical-representative section, whatever the size of its defect."""
    K = tuple(sorted(set(K)))
    phi = tuple(base.lift(t, quotient_size) for t in range(quotient_size))
    return SectionData(quotient_size, phi, section_defect(phi, K, base), K, Fraction(eps))
