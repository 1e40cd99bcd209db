"""Tests for castellan/zstab.py: formal crossed-product algebra and the witness."""
from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from castellan.dynamics import canonical_section
from castellan.exceptions import (
    SpaceMismatchError,
    TraceGapPreconditionError,
    WitnessError,
    WitnessSearchError,
)
from castellan.group_core import shift_element, wreath_identity, xi_generator
from castellan.joseph import QuotientSpace, choose_params
from castellan.zstab import (
    CrossedProduct,
    FormalElement,
    analytic_defect_bound,
    assemble_witness,
    ball_weight,
    build_witness,
    check_witness_structure,
    commutator_defect,
    default_e_seeds,
    default_eta,
    defect_series,
    norm_bound,
    pullback_indicator,
    search_e_table,
    smallest_m,
    verify_order_zero,
    verify_psi_homomorphism,
    verify_trace_gap,
    with_m,
    worst_defect,
    zero_set_for,
)

LAMBDA0 = (-1, 1)
HALF = Fraction(1, 2)


@pytest.fixture
def algebra(unit_shift_table) -> CrossedProduct:
    return CrossedProduct(QuotientSpace(unit_shift_table))


@pytest.fixture(scope="module")
def small_witness():
    """n = 2 over X_E with [Λ:Λ_E] = 11; too coarse for |Y_0| < η·11 but fully checkable."""
    F = choose_params([shift_element(1)])
    E = choose_params([shift_element(2)], 8, start_index=1, used_primes=[2])
    return assemble_witness(2, F, E, LAMBDA0, HALF)


@pytest.fixture(scope="module")
def witness():
    return build_witness(2, choose_params([shift_element(1)]), LAMBDA0, HALF)


def ones(count):
    return np.full(count, Fraction(1), dtype=object)


# ---------------------------------------------------------------------------
# Formal elements
# ---------------------------------------------------------------------------

class TestFormalAlgebra:
    def test_unit_is_neutral(self, algebra):
        x = algebra.indicator([1, 3]) + algebra.unitary(xi_generator(1, 0))
        assert algebra.unit() * x == x
        assert x * algebra.unit() == x

    def test_unitaries(self, algebra):
        u = algebra.unitary(shift_element(1))
        assert u * u.adjoint() == algebra.unit()
        assert u.adjoint() * u == algebra.unit()

    def test_indicators_multiply_pointwise(self, algebra):
        product = algebra.indicator([0, 1, 2]) * algebra.indicator([2, 3])
        assert product == algebra.indicator([2])

    def test_conjugation_moves_support(self, algebra):
        g = shift_element(1)
        moved = algebra.space.apply(g, np.array([0, 5]))
        assert algebra.conjugate(g, algebra.indicator([0, 5])) == algebra.indicator(moved)

    def test_adjoint_is_an_involution(self, algebra):
        x = algebra.function(np.array([0, 4]), np.array([Fraction(1, 3), Fraction(2)], dtype=object))
        y = x * algebra.unitary(shift_element(1))
        assert y.adjoint().adjoint() == y

    def test_cancellation(self, algebra):
        x = algebra.indicator([1, 2])
        assert (x - x).is_zero()
        assert x.scale(Fraction(0)).is_zero()

    def test_coefficient(self, algebra):
        x = algebra.indicator([1, 2]).scale(Fraction(3, 2))
        assert x.coefficient(wreath_identity()) == {1: Fraction(3, 2), 2: Fraction(3, 2)}
        assert x.coefficient(shift_element(1)) == {}

    def test_repeated_states_merge(self, algebra):
        x = FormalElement.from_parts(
            algebra.space, [(wreath_identity(), np.array([4, 4]), ones(2))]
        )
        assert x.coefficient(wreath_identity()) == {4: Fraction(2)}

    def test_space_mismatch(self, algebra, unit_shift_table):
        other = CrossedProduct(QuotientSpace(unit_shift_table))
        with pytest.raises(SpaceMismatchError):
            algebra.unit() + other.unit()
        with pytest.raises(SpaceMismatchError):
            algebra.unit() * other.unit()


class TestNormBound:
    def test_zero(self, algebra):
        assert norm_bound(algebra.zero()) == norm_bound(algebra.zero().scale(Fraction(5)))
        assert norm_bound(algebra.zero()).value == 0

    def test_unitary_is_exact(self, algebra):
        bound = norm_bound(algebra.unitary(shift_element(3)))
        assert (bound.value, bound.exact) == (1, True)

    def test_function_is_exact(self, algebra):
        x = algebra.indicator([0]) + algebra.indicator([1]).scale(Fraction(2))
        bound = norm_bound(x)
        assert (bound.value, bound.exact) == (2, True)

    def test_overlapping_terms_fall_back_to_l1(self, algebra):
        x = algebra.unit() + algebra.unitary(shift_element(1))
        bound = norm_bound(x)
        assert (bound.value, bound.exact) == (2, False)

    def test_to_dict(self, algebra):
        assert norm_bound(algebra.unit()).to_dict() == {"bound": "1", "exact": True}


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

class TestWitnessParameters:
    def test_smallest_m(self):
        assert smallest_m(HALF) == 5
        assert smallest_m(Fraction(2, 5)) == 6

    def test_ball_weight(self):
        assert ball_weight(LAMBDA0, 5) == 31
        assert ball_weight((1,), 3) == 3

    def test_default_eta(self):
        assert default_eta(HALF, LAMBDA0, 5) == Fraction(1, 126)

    def test_zero_set(self, wreath):
        E = choose_params([wreath.parse("@2")], 8)
        assert zero_set_for(canonical_section(11, LAMBDA0), E) == (0, 10)

    def test_default_seeds_skip_f(self, unit_shift_table):
        seeds = default_e_seeds(choose_params([shift_element(2)]))
        assert seeds == [shift_element(3), shift_element(4), shift_element(5)]
        assert default_e_seeds(unit_shift_table) == [shift_element(k) for k in (2, 3, 4)]

    def test_search(self, unit_shift_table):
        (row,) = search_e_table(2, unit_shift_table, LAMBDA0, HALF)
        assert row.gamma == shift_element(2)
        assert (row.p, row.exponent) == (11, 3)

    def test_search_is_deterministic(self, unit_shift_table):
        assert search_e_table(2, unit_shift_table, LAMBDA0, HALF) == search_e_table(
            2, unit_shift_table, LAMBDA0, HALF
        )

    def test_search_respects_cap(self, unit_shift_table):
        with pytest.raises(WitnessSearchError):
            search_e_table(2, unit_shift_table, LAMBDA0, HALF, cap=100)

    def test_search_rejects_eps(self, unit_shift_table):
        with pytest.raises(WitnessSearchError):
            search_e_table(2, unit_shift_table, LAMBDA0, Fraction(1))


class TestAssembleWitness:
    def test_shape(self, small_witness):
        w = small_witness
        assert (w.P, w.Q, w.c, w.r) == (2, 11, 5, 1)
        assert (w.space_F.size, w.space_E.size, w.join.size) == (8, 121, 968)
        assert w.zero_set == (0, 10)
        assert len(w.cake.not_one()) == 10

    def test_pieces_and_remainder(self, small_witness):
        w = small_witness
        assert len(w.remainder()) == 11
        assert sum(len(w.piece(j, t)) for j in range(2) for t in range(11)) == 110

    def test_psi_is_a_matrix_unit_system(self, small_witness):
        assert verify_psi_homomorphism(small_witness).passed

    def test_order_zero(self, small_witness):
        assert verify_order_zero(small_witness).passed

    def test_structure_flags_coarse_section(self, small_witness):
        report = check_witness_structure(small_witness)
        assert not report
        assert any("Y_0" in f for f in report.failures)

    def test_trace_gap_split(self, small_witness):
        gap = verify_trace_gap(small_witness)
        assert gap.remainder_term == Fraction(1, 11)
        assert gap.cake_term == Fraction(100, 121)
        assert gap.gap == gap.remainder_term + gap.cake_term
        assert not gap.certified

    def test_trace_gap_needs_large_support(self, small_witness):
        with pytest.raises(TraceGapPreconditionError):
            verify_trace_gap(small_witness, [0])

    def test_pullback_of_everything_is_unit(self, small_witness):
        w = small_witness
        assert pullback_indicator(w, range(w.space_F.size)) == w.algebra.unit()

    def test_with_m(self, small_witness):
        variant = with_m(small_witness, 2)
        assert variant.m == 2
        assert len(variant.cake.not_one()) == 4
        assert verify_order_zero(variant).passed

    def test_analytic_bound(self, small_witness):
        assert analytic_defect_bound(small_witness, 1) == Fraction(2, 5)

    def test_identity_commutes(self, small_witness):
        defects = commutator_defect(small_witness, wreath_identity())
        assert worst_defect(defects).value == 0

    def test_n_too_small(self, unit_shift_table):
        E = choose_params([shift_element(2)], 8, start_index=1, used_primes=[2])
        with pytest.raises(WitnessError):
            assemble_witness(1, unit_shift_table, E, LAMBDA0, HALF)

    def test_shared_element(self, unit_shift_table):
        with pytest.raises(WitnessError):
            assemble_witness(2, unit_shift_table, unit_shift_table, LAMBDA0, HALF)

    def test_q_below_n(self, unit_shift_table):
        E = choose_params([shift_element(2)], 8, start_index=1, used_primes=[2])
        with pytest.raises(WitnessError):
            assemble_witness(12, unit_shift_table, E, LAMBDA0, HALF)


@pytest.mark.slow
class TestWitness:
    def test_summary(self, witness):
        summary = witness.summary()
        assert (summary["m"], summary["eta"]) == (5, "1/126")
        assert (summary["P"], summary["Q"], summary["c"], summary["r"]) == (2, 11, 5, 1)
        assert summary["quotient_size"] == 117128
        assert summary["level_sizes"] == {"F": 8, "E": 14641}
        assert summary["zero_set"] == [0, 1330]
        assert summary["not_one"] == 10

    def test_structure(self, witness):
        assert check_witness_structure(witness).passed

    def test_relations(self, witness):
        assert verify_psi_homomorphism(witness).passed
        assert verify_order_zero(witness).passed

    def test_trace_gap(self, witness):
        gap = verify_trace_gap(witness)
        assert gap.gap == Fraction(1431, 14641)
        assert gap.remainder_term == Fraction(1, 11)
        assert gap.cake_term == Fraction(100, 14641)
        assert gap.certified

    def test_defect_series(self, witness):
        points = defect_series(witness, 1, [3, 5])
        assert [p.m for p in points] == [3, 5]
        assert [p.analytic for p in points] == [Fraction(2, 3), Fraction(2, 5)]
