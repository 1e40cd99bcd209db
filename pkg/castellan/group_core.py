"""Exact arithmetic for the base group Λ, the lattice ℤ^d and the wreath product ℤ^d ≀ Λ.

All values are immutable and hashable. Group operations are pure functions; the
``Group`` classes bundle them with the generating sets and Følner candidate families
that the dynamics layer needs.

Element grammar (shared by configs and certificates):

* ``IntegerGroup``: a decimal integer, e.g. ``-3``.
* ``LatticeGroup``: a parenthesised tuple, e.g. ``(1,0)``.
* ``WreathProduct``: ``lamps@shift`` where ``lamps`` is a space-separated list of
  ``position:c1,c2,...``; ``0:1@0`` is ξ_1 at 0, ``@1`` is the unit shift.
"""

from __future__ import annotations

import itertools
import logging
import re
from abc import ABC, abstractmethod
from collections import deque
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from typing import Any

from castellan.config import DEFAULT_LATTICE_RANK
from castellan.exceptions import ElementParseError, GeneratorIndexError

logger = logging.getLogger(__name__)

LambdaElem = int
Word = tuple[tuple[int, int], ...]


# ---------------------------------------------------------------------------
# ℤ^d vectors and lamp configurations
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class ZdVector:
    """A vector in ℤ^d."""

    coords: tuple[int, ...]

    @classmethod
    def zero(cls, rank: int) -> ZdVector:
        return cls((0,) * rank)

    @classmethod
    def unit(cls, j: int, rank: int) -> ZdVector:
        """Return e_j for 1 ≤ j ≤ rank."""
        if not 1 <= j <= rank:
            raise GeneratorIndexError(j, rank)
        return cls(tuple(1 if i == j - 1 else 0 for i in range(rank)))

    @property
    def rank(self) -> int:
        return len(self.coords)

    @property
    def first(self) -> int:
        """The first-coordinate projection x ↦ x_1."""
        return self.coords[0]

    def is_zero(self) -> bool:
        return not any(self.coords)

    def scale(self, n: int) -> ZdVector:
        return ZdVector(tuple(n * c for c in self.coords))

    def __add__(self, other: ZdVector) -> ZdVector:
        return ZdVector(tuple(a + b for a, b in zip(self.coords, other.coords, strict=True)))

    def __neg__(self) -> ZdVector:
        return ZdVector(tuple(-c for c in self.coords))

    def __sub__(self, other: ZdVector) -> ZdVector:
        return self + (-other)

    def __str__(self) -> str:
        return ",".join(str(c) for c in self.coords)


def _as_vector(value: ZdVector | Sequence[int] | int, rank: int) -> ZdVector:
    if isinstance(value, ZdVector):
        vec = value
    elif isinstance(value, int):
        vec = ZdVector((value,) + (0,) * (rank - 1))
    else:
        vec = ZdVector(tuple(int(c) for c in value))
    if vec.rank != rank:
        raise ValueError(f"expected a vector of rank {rank}, got {vec}")
    return vec


@dataclass(frozen=True)
class LampConfig:
    """A finitely supported map Λ → ℤ^d in canonical sparse form.

    ``entries`` is sorted by position and never holds a zero vector, so equality is
    structural equality of the maps.
    """

    rank: int
    entries: tuple[tuple[LambdaElem, ZdVector], ...] = ()

    def __post_init__(self) -> None:
        merged: dict[LambdaElem, ZdVector] = {}
        for position, value in self.entries:
            vec = _as_vector(value, self.rank)
            merged[position] = merged[position] + vec if position in merged else vec
        canonical = tuple(sorted((k, v) for k, v in merged.items() if not v.is_zero()))
        object.__setattr__(self, "entries", canonical)

    @classmethod
    def empty(cls, rank: int = DEFAULT_LATTICE_RANK) -> LampConfig:
        return cls(rank)

    @classmethod
    def from_mapping(
        cls, mapping: Mapping[LambdaElem, ZdVector | Sequence[int] | int], rank: int = 1
    ) -> LampConfig:
        return cls(rank, tuple((k, _as_vector(v, rank)) for k, v in mapping.items()))

    @property
    def support(self) -> tuple[LambdaElem, ...]:
        return tuple(k for k, _ in self.entries)

    def get(self, position: LambdaElem) -> ZdVector:
        for k, v in self.entries:
            if k == position:
                return v
        return ZdVector.zero(self.rank)

    def as_dict(self) -> dict[LambdaElem, ZdVector]:
        return dict(self.entries)

    def is_empty(self) -> bool:
        return not self.entries

    def values(self) -> tuple[ZdVector, ...]:
        return tuple(v for _, v in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __add__(self, other: LampConfig) -> LampConfig:
        return LampConfig(self.rank, self.entries + other.entries)

    def __neg__(self) -> LampConfig:
        return LampConfig(self.rank, tuple((k, -v) for k, v in self.entries))

    def __sub__(self, other: LampConfig) -> LampConfig:
        return self + (-other)


# ---------------------------------------------------------------------------
# Groups
# ---------------------------------------------------------------------------

class Group(ABC):
    """A finitely generated group with decidable equality and exact arithmetic."""

    kind: str = "group"

    @abstractmethod
    def identity(self) -> Any: ...

    @abstractmethod
    def mul(self, a: Any, b: Any) -> Any: ...

    @abstractmethod
    def inv(self, a: Any) -> Any: ...

    @property
    @abstractmethod
    def generators(self) -> tuple[Any, ...]: ...

    @abstractmethod
    def word(self, g: Any) -> Word:
        """Decompose ``g`` as a product of generator powers, left to right."""

    @abstractmethod
    def sort_key(self, g: Any) -> tuple[Any, ...]: ...

    @abstractmethod
    def parse(self, text: str) -> Any: ...

    @abstractmethod
    def format(self, g: Any) -> str: ...

    @abstractmethod
    def folner_candidates(self) -> Iterator[Any]:
        """Yield an increasing family of finite sets containing the identity."""

    @abstractmethod
    def spec(self) -> dict[str, Any]: ...

    # -- derived operations --------------------------------------------------

    def is_identity(self, g: Any) -> bool:
        return bool(g == self.identity())

    def power(self, g: Any, n: int) -> Any:
        if n < 0:
            g, n = self.inv(g), -n
        result, base = self.identity(), g
        while n:
            if n & 1:
                result = self.mul(result, base)
            base = self.mul(base, base)
            n >>= 1
        return result

    def evaluate(self, word: Word) -> Any:
        result = self.identity()
        for index, exponent in word:
            result = self.mul(result, self.power(self.generators[index], exponent))
        return result

    def ordered(self, elements: Iterable[Any]) -> tuple[Any, ...]:
        """Deduplicate and sort elements into the canonical order."""
        return tuple(sorted(set(elements), key=self.sort_key))

    def inverse_set(self, elements: Iterable[Any]) -> tuple[Any, ...]:
        return self.ordered(self.inv(g) for g in elements)

    def product_set(self, left: Iterable[Any], right: Iterable[Any]) -> tuple[Any, ...]:
        right = tuple(right)
        return self.ordered(self.mul(a, b) for a in left for b in right)

    def symmetric_generators(self) -> tuple[Any, ...]:
        return self.ordered(
            itertools.chain(self.generators, (self.inv(g) for g in self.generators))
        )


class LambdaGroup(Group):
    """A base group Λ with a supplied family of finite-index normal subgroups.

    Subgroups are addressed by their index label; the quotient Λ/Λ_n is enumerated
    as ``0 .. quotient_size(n) - 1``.
    """

    @abstractmethod
    def quotient_size(self, index: int) -> int: ...

    @abstractmethod
    def reduce(self, g: LambdaElem, index: int) -> int:
        """The quotient map π_n."""

    @abstractmethod
    def lift(self, t: int, index: int) -> LambdaElem:
        """The canonical representative of a coset."""

    def in_subgroup(self, g: LambdaElem, index: int) -> bool:
        return self.reduce(g, index) == self.reduce(self.identity(), index)

    def translate_coset(self, g: LambdaElem, t: int, index: int) -> int:
        """Left translation g·t on Λ/Λ_n."""
        return self.reduce(self.mul(g, self.lift(t, index)), index)


class IntegerGroup(LambdaGroup):
    """Λ = ℤ with subgroups nℤ."""

    kind = "Z"

    def identity(self) -> int:
        return 0

    def mul(self, a: int, b: int) -> int:
        return a + b

    def inv(self, a: int) -> int:
        return -a

    @property
    def generators(self) -> tuple[int, ...]:
        return (1,)

    def word(self, g: int) -> Word:
        return ((0, g),) if g else ()

    def power(self, g: int, n: int) -> int:
        return g * n

    def sort_key(self, g: int) -> tuple[int, ...]:
        return (g,)

    def parse(self, text: str) -> int:
        try:
            return int(text.strip())
        except ValueError as exc:
            raise ElementParseError(text, "expected an integer") from exc

    def format(self, g: int) -> str:
        return str(g)

    def folner_candidates(self) -> Iterator[tuple[int, ...]]:
        for size in itertools.count(1):
            yield tuple(range(size))

    def spec(self) -> dict[str, Any]:
        return {"kind": self.kind}

    def quotient_size(self, index: int) -> int:
        return index

    def reduce(self, g: int, index: int) -> int:
        return g % index

    def lift(self, t: int, index: int) -> int:
        return t % index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, IntegerGroup)

    def __hash__(self) -> int:
        return hash(self.kind)


INTEGERS = IntegerGroup()


class LatticeGroup(Group):
    """ℤ^d under addition."""

    kind = "Zd"

    def __init__(self, rank: int = DEFAULT_LATTICE_RANK) -> None:
        self.rank = rank

    def identity(self) -> ZdVector:
        return ZdVector.zero(self.rank)

    def mul(self, a: ZdVector, b: ZdVector) -> ZdVector:
        return a + b

    def inv(self, a: ZdVector) -> ZdVector:
        return -a

    @property
    def generators(self) -> tuple[ZdVector, ...]:
        return tuple(ZdVector.unit(j, self.rank) for j in range(1, self.rank + 1))

    def word(self, g: ZdVector) -> Word:
        return tuple((i, c) for i, c in enumerate(g.coords) if c)

    def power(self, g: ZdVector, n: int) -> ZdVector:
        return g.scale(n)

    def sort_key(self, g: ZdVector) -> tuple[int, ...]:
        return g.coords

    def parse(self, text: str) -> ZdVector:
        body = text.strip().strip("()")
        try:
            coords = tuple(int(c) for c in body.split(",") if c.strip())
        except ValueError as exc:
            raise ElementParseError(text, "expected comma-separated integers") from exc
        if len(coords) != self.rank:
            raise ElementParseError(text, f"expected {self.rank} coordinates")
        return ZdVector(coords)

    def format(self, g: ZdVector) -> str:
        return f"({g})"

    def folner_candidates(self) -> Iterator[tuple[ZdVector, ...]]:
        for side in itertools.count(1):
            box = itertools.product(range(side), repeat=self.rank)
            yield tuple(ZdVector(c) for c in box)

    def spec(self) -> dict[str, Any]:
        return {"kind": self.kind, "d": self.rank}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, LatticeGroup) and other.rank == self.rank

    def __hash__(self) -> int:
        return hash((self.kind, self.rank))


# ---------------------------------------------------------------------------
# The wreath product ℤ^d ≀ Λ
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WreathElem:
    """An element (f, λ) of ℤ^d ≀ Λ."""

    lamps: LampConfig
    shift: LambdaElem = 0

    @property
    def rank(self) -> int:
        return self.lamps.rank

    def is_identity(self) -> bool:
        return self.lamps.is_empty() and self.shift == 0


def beta_shift(lam: LambdaElem, f: LampConfig, base: LambdaGroup = INTEGERS) -> LampConfig:
    """β_λ(f)(λ′) = f(λ^{-1}λ′): move every lamp from λ′ to λλ′."""
    return LampConfig(f.rank, tuple((base.mul(lam, k), v) for k, v in f.entries))


def wreath_identity(rank: int = DEFAULT_LATTICE_RANK) -> WreathElem:
    return WreathElem(LampConfig.empty(rank), 0)


def shift_element(lam: LambdaElem, rank: int = DEFAULT_LATTICE_RANK) -> WreathElem:
    return WreathElem(LampConfig.empty(rank), lam)


def wreath_mul(a: WreathElem, b: WreathElem, base: LambdaGroup = INTEGERS) -> WreathElem:
    return WreathElem(a.lamps + beta_shift(a.shift, b.lamps, base), base.mul(a.shift, b.shift))


def wreath_inv(a: WreathElem, base: LambdaGroup = INTEGERS) -> WreathElem:
    back = base.inv(a.shift)
    return WreathElem(-beta_shift(back, a.lamps, base), back)


def xi_generator(j: int, lam: LambdaElem, rank: int = DEFAULT_LATTICE_RANK) -> WreathElem:
    """ξ_j^λ: the lamp e_j at λ with trivial shift."""
    return WreathElem(LampConfig(rank, ((lam, ZdVector.unit(j, rank)),)), 0)


def lamp_element(position: LambdaElem, value: ZdVector, shift: LambdaElem = 0) -> WreathElem:
    return WreathElem(LampConfig(value.rank, ((position, value),)), shift)


_LAMP_RE = re.compile(r"^(-?\d+):(-?\d+(?:,-?\d+)*)$")


class WreathProduct(Group):
    """Γ = ℤ^d ≀ Λ, generated by the Λ generators and ξ_1^1, …, ξ_d^1."""

    kind = "wreath"

    def __init__(self, rank: int = DEFAULT_LATTICE_RANK, base: LambdaGroup = INTEGERS) -> None:
        self.rank = rank
        self.base = base

    def identity(self) -> WreathElem:
        return wreath_identity(self.rank)

    def mul(self, a: WreathElem, b: WreathElem) -> WreathElem:
        return wreath_mul(a, b, self.base)

    def inv(self, a: WreathElem) -> WreathElem:
        return wreath_inv(a, self.base)

    @property
    def generators(self) -> tuple[WreathElem, ...]:
        shifts = tuple(shift_element(s, self.rank) for s in self.base.generators)
        lamps = tuple(
            xi_generator(j, self.base.identity(), self.rank) for j in range(1, self.rank + 1)
        )
        return shifts + lamps

    @property
    def shift_count(self) -> int:
        return len(self.base.generators)

    def word(self, g: WreathElem) -> Word:
        # (f, λ) = Π_μ μ·(Π_j f(μ)_j ξ_j^1)·μ^{-1} · λ
        out: list[tuple[int, int]] = []
        offset = self.shift_count
        for position, value in g.lamps.entries:
            out.extend(self.base.word(position))
            out.extend((offset + j, c) for j, c in enumerate(value.coords) if c)
            out.extend(self.base.word(self.base.inv(position)))
        out.extend(self.base.word(g.shift))
        return tuple(out)

    def sort_key(self, g: WreathElem) -> tuple[Any, ...]:
        return (
            len(g.lamps),
            self.base.sort_key(g.shift),
            tuple((k, v.coords) for k, v in g.lamps.entries),
        )

    def parse(self, text: str) -> WreathElem:
        raw = text.strip()
        lamps_part, sep, shift_part = raw.rpartition("@")
        if not sep:
            raise ElementParseError(text, "expected 'lamps@shift'")
        shift = self.base.parse(shift_part)
        entries = []
        for token in lamps_part.split():
            match = _LAMP_RE.match(token)
            if match is None:
                raise ElementParseError(text, f"bad lamp '{token}'")
            coords = tuple(int(c) for c in match.group(2).split(","))
            if len(coords) != self.rank:
                raise ElementParseError(text, f"lamp '{token}' needs {self.rank} coordinates")
            entries.append((int(match.group(1)), ZdVector(coords)))
        return WreathElem(LampConfig(self.rank, tuple(entries)), shift)

    def format(self, g: WreathElem) -> str:
        lamps = " ".join(f"{k}:{v}" for k, v in g.lamps.entries)
        return f"{lamps}@{self.base.format(g.shift)}"

    def folner_candidates(self) -> Iterator[WreathBox]:
        for radius in itertools.count(1):
            yield WreathBox(self.rank, radius, radius * radius)

    def spec(self) -> dict[str, Any]:
        return {"kind": self.kind, "d": self.rank, "lambda": self.base.kind}

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, WreathProduct)
            and other.rank == self.rank
            and other.base == self.base
        )

    def __hash__(self) -> int:
        return hash((self.kind, self.rank))


@dataclass(frozen=True)
class WreathBox:
    """Følner candidate {(f, λ) : |λ| ≤ R, supp f ⊆ λ + [−R, R], ‖f‖_∞ ≤ M} in ℤ^d ≀ ℤ.

    The lamp window travels with the shift, so left translation by a shift only
    disturbs the two extreme values of λ. Membership, cardinality and the number of
    points kept inside by a translation are exact closed forms; the box is only
    enumerated on request.
    """

    rank: int
    radius: int
    bound: int

    def _window(self, lam: int) -> range:
        return range(lam - self.radius, lam + self.radius + 1)

    @property
    def cardinality(self) -> int:
        """Exact size. It outgrows sys.maxsize quickly, so boxes do not support ``len()``."""
        lamps = (2 * self.bound + 1) ** (self.rank * (2 * self.radius + 1))
        return (2 * self.radius + 1) * lamps

    def __contains__(self, g: object) -> bool:
        if not isinstance(g, WreathElem) or g.rank != self.rank:
            return False
        if abs(g.shift) > self.radius:
            return False
        window = self._window(g.shift)
        return all(
            k in window and all(abs(c) <= self.bound for c in v.coords)
            for k, v in g.lamps.entries
        )

    def __iter__(self) -> Iterator[WreathElem]:
        values = [
            ZdVector(c) for c in itertools.product(range(-self.bound, self.bound + 1), repeat=self.rank)
        ]
        for lam in range(-self.radius, self.radius + 1):
            window = list(self._window(lam))
            for choice in itertools.product(values, repeat=len(window)):
                yield WreathElem(LampConfig(self.rank, tuple(zip(window, choice))), lam)

    def stable_count(self, k: WreathElem) -> int:
        """Return |{x in the box : kx in the box}| = |kB ∩ B|."""
        h, nu = k.lamps, k.shift
        full = 2 * self.bound + 1
        total = 0
        for lam in range(-self.radius, self.radius + 1):
            target = lam + nu
            if abs(target) > self.radius:
                continue
            window = self._window(target)
            if any(pos not in window for pos in h.support):
                continue
            count = full ** (self.rank * (len(window) - len(h)))
            for value in h.values():
                for c in value.coords:
                    count *= max(0, full - abs(c))
            total += count
        return total


# ---------------------------------------------------------------------------
# Word search
# ---------------------------------------------------------------------------

def word_ball(group: Group, radius: int) -> dict[Any, int]:
    """All elements of word length ≤ radius over the symmetric generating set."""
    steps = group.symmetric_generators()
    lengths = {group.identity(): 0}
    frontier = deque([group.identity()])
    while frontier:
        g = frontier.popleft()
        if lengths[g] == radius:
            continue
        for s in steps:
            h = group.mul(g, s)
            if h not in lengths:
                lengths[h] = lengths[g] + 1
                frontier.append(h)
    logger.debug("word ball of radius %s has %s elements", radius, len(lengths))
    return lengths


def build_group(spec: Mapping[str, Any]) -> Group:
    """Rebuild a group from its ``spec()`` dictionary."""
    kind = spec.get("kind")
    if kind == IntegerGroup.kind:
        return INTEGERS
    if kind == LatticeGroup.kind:
        return LatticeGroup(int(spec.get("d", DEFAULT_LATTICE_RANK)))
    if kind == WreathProduct.kind:
        return WreathProduct(int(spec.get("d", DEFAULT_LATTICE_RANK)))
    raise ElementParseError(str(spec), "unknown group kind")
