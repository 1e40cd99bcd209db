"""Tests for castellan/joseph.py: parameter tables, labels and quotient spaces."""
from __future__ import annotations

import dataclasses
from fractions import Fraction

import numpy as np
import pytest

from castellan.dynamics import canonical_section
from castellan.exceptions import (
    ConditionViolationError,
    NonNestedTablesError,
    ParameterError,
    QuotientCapError,
)
from castellan.group_core import (
    LampConfig,
    WreathElem,
    lamp_element,
    shift_element,
    wreath_identity,
    wreath_mul,
    xi_generator,
)
from castellan.joseph import (
    CosetLabel,
    GammaParams,
    QuotientSpace,
    a_gamma_contains,
    build_quotient,
    check_conditions,
    check_refinement,
    choose_params,
    compose_refinements,
    fixed_fraction,
    generator_rule_check,
    in_gamma_subgroup,
    inverse_consistency,
    join_tables,
    label_of,
    oracle_labels,
    partition_check,
    quotient_size,
    random_wreath_element,
    refinement_map,
    require_conditions,
    w_set,
    xi_invariance_check,
)


def table_for(wreath, *texts, **kwargs):
    return choose_params([wreath.parse(t) for t in texts], **kwargs)


@pytest.fixture
def unit_space(unit_shift_table) -> QuotientSpace:
    return QuotientSpace(unit_shift_table)


# ---------------------------------------------------------------------------
# Parameter tables
# ---------------------------------------------------------------------------

class TestChooseParams:
    def test_unit_shift(self, unit_shift_table):
        (row,) = unit_shift_table
        assert (row.p, row.exponent, row.l, row.E_cosets) == (2, 2, 1, (0,))
        assert row.eps == Fraction(1, 2)
        assert row.subgroup_index == 4

    def test_prime_floor(self, wreath):
        (row,) = table_for(wreath, "@1", prime_floor=8)
        assert (row.p, row.exponent, row.l, row.E_cosets) == (11, 1, 1, (0,))

    def test_primes_are_distinct(self, wreath):
        table = table_for(wreath, "@1", "@2", prime_floor=10)
        assert [row.p for row in table] == [11, 13]
        assert [row.eps for row in table] == [Fraction(1, 2), Fraction(1, 4)]

    def test_used_primes_are_skipped(self, wreath):
        (row,) = table_for(wreath, "@1", used_primes=[2])
        assert row.p == 3

    def test_lamp_values_divisible_by_prime_are_skipped(self, wreath):
        (row,) = table_for(wreath, "0:11@0", prime_floor=10)
        assert row.p == 13
        assert row.l == 2
        assert row.E_cosets == (0, 1)

    def test_support_images_land_in_cosets(self, wreath):
        (row,) = table_for(wreath, "0:1 2:1@0")
        assert {0, 2 % row.subgroup_index} <= set(row.E_cosets)
        assert len(row.E_cosets) == row.l == 3

    def test_exponent_boost(self, wreath):
        (plain,) = table_for(wreath, "@1")
        (boosted,) = table_for(wreath, "@1", exponent_boost=1)
        assert boosted.exponent == plain.exponent + 1

    def test_identity_has_no_parameters(self, wreath):
        with pytest.raises(ParameterError):
            choose_params([wreath_identity()])

    def test_all_conditions_hold(self, wreath):
        table = table_for(wreath, "@1", "0:1@0", "@2", "-1:2 3:1@5")
        assert all(all(v.values()) for v in check_conditions(table))


class TestConditions:
    def test_repeated_prime(self, unit_shift_table):
        row = unit_shift_table[0]
        twin = dataclasses.replace(row, gamma=shift_element(3))
        verdicts = check_conditions((row, twin))
        assert not verdicts[0][1]
        with pytest.raises(ConditionViolationError) as exc_info:
            require_conditions((row, twin))
        assert exc_info.value.condition == 1

    def test_index_too_small(self, unit_shift_table):
        row = dataclasses.replace(unit_shift_table[0], exponent=1)
        assert not check_conditions((row,))[0][5]

    def test_shift_inside_subgroup(self, unit_shift_table):
        row = dataclasses.replace(unit_shift_table[0], gamma=shift_element(4))
        assert not check_conditions((row,))[0][7]

    def test_build_quotient_checks(self, unit_shift_table):
        row = dataclasses.replace(unit_shift_table[0], p=4)
        with pytest.raises(ConditionViolationError):
            build_quotient((row,))

    def test_dict_round_trip(self, wreath):
        table = table_for(wreath, "0:1@0", prime_floor=5)
        assert GammaParams.from_dict(table[0].to_dict()) == table[0]

    def test_from_dict_rejects_bad_index(self, unit_shift_table):
        data = unit_shift_table[0].to_dict() | {"subgroup_index": 6}
        with pytest.raises(ParameterError):
            GammaParams.from_dict(data)


class TestSubgroupMembership:
    @pytest.fixture
    def row(self):
        return GammaParams(shift_element(1), 5, Fraction(1, 2), 1, 1, (0,))

    def test_single_lamp(self, row):
        assert not a_gamma_contains(LampConfig.from_mapping({0: 3}, 1), row)

    def test_coset_sum(self, row):
        assert a_gamma_contains(LampConfig.from_mapping({0: 3, 5: 2}, 1), row)

    def test_other_cosets_are_free(self, row):
        assert a_gamma_contains(LampConfig.from_mapping({1: 1}, 1), row)

    def test_shift_must_lie_in_subgroup(self, row):
        assert in_gamma_subgroup(shift_element(5), (row,))
        assert not in_gamma_subgroup(shift_element(2), (row,))


# ---------------------------------------------------------------------------
# Labels and quotient spaces
# ---------------------------------------------------------------------------

class TestLabels:
    def test_identity_label(self, unit_shift_table):
        assert label_of(wreath_identity(), unit_shift_table) == CosetLabel(0, ((0,),))

    def test_lamp_label(self, unit_shift_table):
        assert label_of(xi_generator(1, 0), unit_shift_table) == CosetLabel(0, ((1,),))
        assert label_of(xi_generator(1, 1), unit_shift_table) == CosetLabel(0, ((0,),))

    def test_right_multiplication_by_subgroup(self, unit_shift_table):
        x = WreathElem(LampConfig.from_mapping({1: 1, 2: 1}, 1), 3)
        z = shift_element(4)
        assert label_of(wreath_mul(x, z), unit_shift_table) == label_of(x, unit_shift_table)

    def test_quotient_size_formula(self, wreath):
        assert quotient_size(table_for(wreath, "@1", "0:1@0")) == 648
        assert quotient_size(table_for(wreath, "@1", "0:1@0", "@2")) == 81000


class TestQuotientSpace:
    def test_size_and_modulus(self, unit_space):
        assert unit_space.size == 8
        assert unit_space.modulus == 4
        assert len(unit_space.slots) == 1

    def test_codec_round_trip(self, unit_space):
        states = np.arange(unit_space.size)
        t, digits = unit_space.decode(states)
        assert np.array_equal(unit_space.encode(t, digits), states)

    def test_label_at(self, unit_space):
        for state in range(unit_space.size):
            assert unit_space.state_of(unit_space.label_at(state)) == state

    def test_transitive(self, unit_space):
        assert unit_space.is_transitive()

    def test_identity_acts_trivially(self, unit_space):
        assert fixed_fraction(wreath_identity(), unit_space) == 1

    def test_unit_shift_moves_everything(self, unit_space):
        assert fixed_fraction(shift_element(1), unit_space) == 0

    def test_shift_by_modulus_is_trivial(self, unit_space):
        assert fixed_fraction(shift_element(4), unit_space) == 1

    def test_cap(self, unit_shift_table):
        with pytest.raises(QuotientCapError):
            QuotientSpace(unit_shift_table, cap=4)

    def test_generator_rules(self, unit_space):
        assert generator_rule_check(unit_space, np.random.default_rng(0), trials=100).passed

    def test_inverse_consistency(self, unit_space):
        rng = np.random.default_rng(1)
        assert all(inverse_consistency(random_wreath_element(rng), unit_space) for _ in range(20))

    def test_state_of_element_matches_action(self, unit_space):
        x = WreathElem(LampConfig.from_mapping({-1: 2, 2: 1}, 1), 1)
        g = lamp_element(0, xi_generator(1, 0).lamps.get(0))
        origin = unit_space.state_of_element(wreath_identity())
        moved = unit_space.apply(wreath_mul(g, x), np.array([origin]))
        assert int(moved[0]) == unit_space.state_of_element(wreath_mul(g, x))


class TestRefinement:
    @pytest.fixture
    def spaces(self, wreath):
        coarse = QuotientSpace(table_for(wreath, "@1"))
        middle = QuotientSpace(table_for(wreath, "@1", "@2"))
        fine = QuotientSpace(table_for(wreath, "@1", "@2", "@3"))
        return coarse, middle, fine

    def test_sizes(self, spaces):
        assert [s.size for s in spaces] == [8, 216, 27000]

    def test_identity_map(self, spaces):
        coarse = spaces[0]
        assert np.array_equal(refinement_map(coarse, coarse), np.arange(coarse.size))

    def test_equivariant_with_equal_fibres(self, spaces):
        coarse, middle, _ = spaces
        assert check_refinement(middle, coarse).passed

    def test_composition(self, spaces):
        coarse, middle, fine = spaces
        assert compose_refinements(fine, middle, coarse)

    def test_not_nested(self, spaces):
        coarse, middle, _ = spaces
        with pytest.raises(NonNestedTablesError):
            refinement_map(coarse, middle)

    def test_join_keeps_first_row(self, wreath):
        first = table_for(wreath, "@1")
        second = table_for(wreath, "@1", prime_floor=8)
        assert join_tables(first, second) == first


# ---------------------------------------------------------------------------
# Tower pieces and the oracle
# ---------------------------------------------------------------------------

class TestTowerPieces:
    def test_w_is_a_single_state(self, unit_space):
        assert len(w_set(unit_space)) == 1

    def test_partition_with_unit_step(self, unit_space):
        section = canonical_section(unit_space.modulus, [1, -1])
        assert partition_check(unit_space, section, 1).passed

    def test_partition_rejects_common_factor(self, unit_space):
        section = canonical_section(unit_space.modulus, [1, -1])
        report = partition_check(unit_space, section, 2)
        assert not report
        assert "coprime" in report.failures[0]

    def test_partition_rejects_wrong_section(self, unit_space):
        section = canonical_section(5, [1, -1])
        assert not partition_check(unit_space, section, 1)

    def test_xi_leaves_off_subgroup_pieces(self, unit_space):
        section = canonical_section(unit_space.modulus, [1, -1])
        assert xi_invariance_check(unit_space, section).passed

    @pytest.mark.slow
    def test_two_prime_space(self, wreath):
        space = build_quotient(table_for(wreath, "@1", "@2", prime_floor=10))
        assert (space.modulus, space.size) == (143, 20449)
        assert len(w_set(space)) == 1
        section = canonical_section(space.modulus, [1, -1])
        assert partition_check(space, section, 1).passed
        assert xi_invariance_check(space, section).passed
        assert space.is_transitive()


class TestOracle:
    def test_unit_shift_table(self, unit_shift_table):
        report = oracle_labels(unit_shift_table, np.random.default_rng(2), trials=200)
        assert report.trials == 200
        assert report.passed

    def test_two_rows(self, wreath):
        table = table_for(wreath, "@1", "0:1@0")
        assert oracle_labels(table, np.random.default_rng(3), trials=200).passed

    @pytest.mark.parametrize("seed", range(5))
    def test_random_elements_are_seeded(self, seed):
        a = random_wreath_element(np.random.default_rng(seed))
        b = random_wreath_element(np.random.default_rng(seed))
        assert a == b
