"""Service layer: runs the six pipelines and turns their results into certificates.

PipelineService is the single entry point the CLI uses for ``run``. Each pipeline
builds its structural objects (a castle, a parameter table, a witness) and then
hands them to a ``*_outputs`` renderer that runs the checkers and produces the
JSON-ready outputs with a verdict. The auditor calls the same renderers on the
objects read back from a certificate. Library errors raised inside a pipeline are
captured in the certificate instead of escaping.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable, Sequence
from fractions import Fraction
from typing import Any

import numpy as np

from castellan.castles import (
    AfmCertificate,
    Castle,
    afm_check,
    build_castle_L33,
    build_castle_T34,
    check_l33,
    essfree_bound_from_castle,
)
from castellan.config import FOLNER_CANDIDATE_CAP
from castellan.dynamics import (
    FinAction,
    StateSubset,
    boundary_ratio,
    canonical_section,
    cyclic_action,
    folner_invariance,
    folner_supplier,
    nonfree_part,
    random_action,
    set_size,
)
from castellan.exceptions import CastellanError, ConfigError, ParameterError
from castellan.experiment import ExperimentConfig
from castellan.group_core import Group, WreathBox, WreathElem, shift_element, xi_generator
from castellan.joseph import (
    ParamTable,
    QuotientSpace,
    build_quotient,
    check_conditions,
    check_refinement,
    choose_params,
    compose_refinements,
    fixed_fraction,
    generator_rule_check,
    oracle_labels,
    partition_check,
    random_wreath_element,
    w_set,
    xi_invariance_check,
)
from castellan.models import (
    Certificate,
    CheckReport,
    LadderDeficit,
    StageParameters,
    StageRecord,
    rational_str,
)
from castellan.zstab import (
    OrderZeroWitness,
    analytic_defect_bound,
    build_witness,
    check_witness_structure,
    commutator_defect,
    defect_series,
    pullback_indicator,
    verify_order_zero,
    verify_psi_homomorphism,
    verify_trace_gap,
    worst_defect,
)

logger = logging.getLogger(__name__)

Outputs = dict[str, Any]
Rendered = tuple[Outputs, bool]


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def report_dict(report: CheckReport) -> dict[str, Any]:
    return {"passed": report.passed, "failures": list(report.failures)}


def series(columns: Sequence[str], rational: Sequence[str], rows: Sequence[Sequence[Any]]) -> dict[str, Any]:
    """A plot-ready table; rational columns hold ``p/q`` strings."""
    return {
        "columns": list(columns),
        "rational": list(rational),
        "rows": [[rational_str(v) if isinstance(v, Fraction) else v for v in row] for row in rows],
    }


def stage_dict(record: StageRecord) -> dict[str, Any]:
    return {
        "stage": record.stage,
        "folner_size": record.folner_size,
        "z_density": rational_str(record.z_density),
        "z_bound": rational_str(record.z_bound),
        "footprint_density": rational_str(record.footprint_density),
        "density_bound": rational_str(record.density_bound),
        "density_growth": record.density_growth.holds,
        "towers": record.towers,
    }


def tower_series(castle: Castle, group: Group, K: Sequence[Any]) -> dict[str, Any]:
    rows = [
        [index, len(t.shape), len(t.base), folner_invariance(group, t.shape, K)]
        for index, t in enumerate(castle.towers)
    ]
    return series(["tower", "shape_size", "base_size", "invariance"], ["invariance"], rows)


def build_action(config: ExperimentConfig) -> FinAction:
    """The finite ℤ-action described by ``[action]``."""
    size = config.get("action", "states")
    if size < 1:
        raise ConfigError("action.states", "must be positive")
    cells = config.get("action", "cells")
    resolution = None
    if cells:
        if not 1 <= cells <= size:
            raise ConfigError("action.cells", f"must lie between 1 and {size}")
        resolution = [chunk.tolist() for chunk in np.array_split(np.arange(size), cells)]
    kind = config.get("action", "kind")
    if kind == "cyclic":
        return cyclic_action(size, resolution)
    if kind == "random":
        action = random_action(size, np.random.default_rng(config.rng_seed))
        return FinAction(action.group, size, action.generator_perms, resolution)
    raise ConfigError("action.kind", f"unknown action kind '{kind}'")


def l33_sets(config: ExperimentConfig, action: FinAction) -> tuple[tuple[Any, ...], StateSubset, StateSubset]:
    """S, Y and Z for a single-scale run; Z always contains the non-free part of S."""
    S = action.group.ordered(config.get("castle", "S"))
    Y = StateSubset.from_states(action.size, config.get("castle", "Y") or ())
    Z = nonfree_part(S, action)
    given = config.get("castle", "Z")
    if given is not None:
        Z = Z | StateSubset.from_states(action.size, given)
    return S, Y, Z


def probe_elements(config: ExperimentConfig) -> list[WreathElem]:
    """Explicit probes followed by ``count`` seeded random ones."""
    rng = np.random.default_rng(config.rng_seed)
    rank = config.group.rank
    probes = list(config.get("probes", "gammas") or ())
    radius = config.get("probes", "radius")
    probes += [random_wreath_element(rng, rank, radius) for _ in range(config.get("probes", "count"))]
    return probes


# ---------------------------------------------------------------------------
# Renderers
# ---------------------------------------------------------------------------

def folner_outputs(group: Group, F: Any, K: Sequence[Any], eps: Fraction) -> Rendered:
    ratio = folner_invariance(group, F, K)
    outputs: Outputs = {"size": set_size(F), "ratio": rational_str(ratio)}
    if isinstance(F, WreathBox):
        outputs["box"] = {"rank": F.rank, "radius": F.radius, "bound": F.bound}
    else:
        outputs["F"] = [group.format(f) for f in F]
        outputs["boundary_ratio"] = rational_str(boundary_ratio(group, F, K))
    return outputs, ratio < eps


def l33_outputs(
    action: FinAction,
    castle: Castle,
    S: Sequence[Any],
    eps: Fraction,
    Y: StateSubset,
    Z: StateSubset,
) -> Rendered:
    report = check_l33(castle, action, S, eps, Y, Z)
    outputs = {
        "castle": castle.to_dict(action.group),
        "Y": Y.to_list(),
        "Z": Z.to_list(),
        "report": {
            "castle_valid": report.castle_valid,
            "bases_outside_z": report.bases_outside_z,
            "levels_in_cells": report.levels_in_cells,
            "shapes_large": report.shapes_large,
            "avoids_y": report.avoids_y,
            "union_identity": report.union_identity,
            "coverage": report.coverage,
        },
        "footprint_size": len(castle.footprint(action)),
        "series": {"tower_invariance": tower_series(castle, action.group, S)},
    }
    return outputs, report.passed


def t34_outputs(
    action: FinAction,
    castle: Castle,
    certificate: AfmCertificate,
    params: StageParameters,
    ladder_sizes: Sequence[int],
    deficits: Sequence[LadderDeficit],
    stages: Sequence[StageRecord],
) -> Rendered:
    group = action.group
    check = afm_check(castle, certificate, action)
    stage_rows = [
        [r.stage, r.folner_size, r.z_density, r.footprint_density, r.density_bound] for r in stages
    ]
    outputs: Outputs = {
        "castle": castle.to_dict(group),
        "certificate": certificate.to_dict(group),
        "afm_check": report_dict(check),
        "parameters": {
            "n": params.n,
            "beta": rational_str(params.beta),
            "alpha": rational_str(params.alpha),
            "margin": rational_str(params.margin),
        },
        "ladder_sizes": list(ladder_sizes),
        "ladder_met": not deficits,
        "deficits": [
            {"j": d.j, "i": d.i, "ratio": rational_str(d.ratio), "target": rational_str(d.target)}
            for d in deficits
        ],
        "stages": [stage_dict(r) for r in stages],
        "series": {
            "stage_densities": series(
                ["stage", "folner_size", "z_density", "footprint_density", "density_bound"],
                ["z_density", "footprint_density", "density_bound"],
                stage_rows,
            ),
            "tower_invariance": tower_series(castle, group, certificate.K),
        },
    }
    return outputs, check.passed and certificate.passed


def essfree_outputs(castle: Castle, g: Any, eps_prime: Fraction, action: FinAction) -> Rendered:
    bound = essfree_bound_from_castle(castle, g, eps_prime, action)
    outputs = {
        "g": action.group.format(g),
        "eps_prime": rational_str(eps_prime),
        "bound": rational_str(bound.bound),
        "max_fixed_measure": rational_str(bound.max_fixed_measure),
        "chains": len(bound.chains),
        "passed": bound.passed,
    }
    return outputs, bound.passed


def essfree_input(config: ExperimentConfig) -> tuple[Any, Fraction] | None:
    """The element g and tolerance ε′ of an ``[essfree]`` section, if present."""
    if not config.has_section("essfree"):
        return None
    elements = config.get("essfree", "g")
    if len(elements) != 1:
        raise ConfigError("essfree.g", "exactly one element is expected")
    return elements[0], config.get("essfree", "eps_prime") or config.get("castle", "eps")


def joseph_outputs(table: ParamTable, space: QuotientSpace, rng: np.random.Generator, trials: int) -> Rendered:
    verdicts = check_conditions(table)
    oracle = oracle_labels(table, rng, trials, space.rank)
    rules = generator_rule_check(space, rng)
    section = canonical_section(space.modulus, (1, -1))
    partition = partition_check(space, section, 1)
    xi = xi_invariance_check(space, section)
    transitive = space.is_transitive()
    outputs = {
        "table": [row.to_dict() for row in table],
        "conditions": [{str(c): ok for c, ok in v.items()} for v in verdicts],
        "modulus": space.modulus,
        "quotient_size": space.size,
        "w_size": len(w_set(space)),
        "transitive": transitive,
        "oracle": {
            "trials": oracle.trials,
            "constant_violations": oracle.constant_violations,
            "separation_violations": oracle.separation_violations,
        },
        "generator_rules": report_dict(rules),
        "partition": report_dict(partition),
        "xi_invariance": report_dict(xi),
    }
    passed = (
        all(all(v.values()) for v in verdicts)
        and transitive
        and oracle.passed
        and rules.passed
        and partition.passed
        and xi.passed
    )
    return outputs, passed


def fixed_fraction_outputs(full: ParamTable, rank: int, group: Group, probes: Sequence[WreathElem]) -> Rendered:
    levels = len(full)
    spaces = [build_quotient(full[:k], rank) for k in range(1, levels + 1)]
    refinements = [check_refinement(fine, coarse) for coarse, fine in zip(spaces, spaces[1:])]
    composed = len(spaces) < 3 or compose_refinements(spaces[2], spaces[1], spaces[0])
    fractions = [[fixed_fraction(g, space) for space in spaces] for g in probes]
    violations = sum(1 for row in fractions for a, b in zip(row, row[1:]) if b > a)
    labels = [group.format(g) for g in probes]
    rows = [
        [level + 1, space.size] + [row[level] for row in fractions]
        for level, space in enumerate(spaces)
    ]
    outputs = {
        "levels": [
            {"primes": [r.p for r in space.table], "quotient_size": space.size} for space in spaces
        ],
        "table": [row.to_dict() for row in full],
        "probes": labels,
        "fractions": [[rational_str(f) for f in row] for row in fractions],
        "monotonicity_violations": violations,
        "refinements": [report_dict(r) for r in refinements],
        "composition": composed,
        "series": {"fixed_fractions": series(["level", "states", *labels], labels, rows)},
    }
    passed = violations == 0 and all(r.passed for r in refinements) and composed
    return outputs, passed


def witness_defects(
    w: OrderZeroWitness, indicator: Sequence[int], lamps: Sequence[int]
) -> list[dict[str, Any]]:
    """Commutator defects for the indicator, the lamp generators and Λ_0."""
    entries = []
    h = pullback_indicator(w, indicator)
    bound = worst_defect(commutator_defect(w, h))
    entries.append(
        {
            "element": "1_{" + ",".join(str(s) for s in sorted(set(indicator))) + "}",
            "kind": "function",
            "expected": "0",
            "passed": bound.exact and bound.value == 0,
            **bound.to_dict(),
        }
    )
    group = w.join.group
    for k in lamps:
        xi = xi_generator(k, 0, w.rank)
        bound = worst_defect(commutator_defect(w, xi))
        entries.append(
            {
                "element": group.format(xi),
                "kind": "lamp",
                "expected": "0",
                "passed": bound.exact and bound.value == 0,
                **bound.to_dict(),
            }
        )
    for lam in w.lambda0:
        bound = worst_defect(commutator_defect(w, shift_element(lam, w.rank)))
        analytic = analytic_defect_bound(w, lam)
        entries.append(
            {
                "element": group.format(shift_element(lam, w.rank)),
                "kind": "shift",
                "expected": rational_str(analytic),
                "passed": bound.exact and bound.value <= analytic and bound.value <= w.eps,
                **bound.to_dict(),
            }
        )
    return entries


def witness_outputs(w: OrderZeroWitness, config: ExperimentConfig) -> Rendered:
    """Run every witness check and render the results."""
    structure = check_witness_structure(w)
    psi = verify_psi_homomorphism(w)
    order_zero = verify_order_zero(w)
    gap = verify_trace_gap(w, config.get("zstab", "a"))
    lamps = config.get("zstab", "lamps") or tuple(range(1, w.rank + 1))
    defects = witness_defects(w, config.get("zstab", "indicator"), lamps)
    formula = gap.gap == gap.remainder_term + gap.cake_term
    outputs = {
        **w.summary(),
        "structure": report_dict(structure),
        "psi_relations": "exact-pass" if psi.passed else "fail",
        "order_zero": "exact-pass" if order_zero.passed else "fail",
        "measures": {
            "gap": rational_str(gap.gap),
            "remainder_term": rational_str(gap.remainder_term),
            "cake_term": rational_str(gap.cake_term),
            "supp_a": rational_str(gap.supp_a),
            "formula_matches": formula,
            "certified": gap.certified,
        },
        "defects": defects,
    }
    ms = config.get("zstab", "ms")
    if ms:
        points = defect_series(w, max(w.lambda0), ms)
        outputs["series"] = {
            "defect_vs_m": series(
                ["m", "analytic", "computed"],
                ["analytic", "computed"],
                [[p.m, p.analytic, p.computed.value] for p in points],
            )
        }
    passed = (
        structure.passed
        and psi.passed
        and order_zero.passed
        and gap.certified
        and formula
        and all(d["passed"] for d in defects)
    )
    return outputs, passed


# ---------------------------------------------------------------------------
# Service
# ---------------------------------------------------------------------------

class PipelineService:
    """Dispatches validated experiments to their pipelines.

    Args:
        clock: Monotonic clock used for optional timings.
    """

    def __init__(self, clock: Callable[[], float] = time.perf_counter) -> None:
        self._clock = clock
        self._pipelines: dict[str, Callable[[ExperimentConfig], Rendered]] = {
            "folner": self._run_folner,
            "castle-l33": self._run_castle_l33,
            "castle-t34": self._run_castle_t34,
            "joseph-build": self._run_joseph_build,
            "fixed-fractions": self._run_fixed_fractions,
            "zstab-witness": self._run_zstab_witness,
        }

    def run(self, config: ExperimentConfig, timing: bool = False) -> Certificate:
        """Run the configured pipeline and return its certificate.

        Library errors raised by the pipeline become a failed certificate with the
        error recorded; they are not re-raised. Configuration errors found while
        running (a bad ``[action]`` size, say) still propagate.
        """
        logger.info("running pipeline %s", config.pipeline)
        started = self._clock()
        failure = None
        try:
            outputs, passed = self._pipelines[config.pipeline](config)
        except ConfigError:
            raise
        except CastellanError as exc:
            logger.warning("pipeline %s failed: %s", config.pipeline, exc)
            outputs, passed = {}, False
            failure = {"error": type(exc).__name__, "message": exc.message}
        elapsed = self._clock() - started
        logger.info("pipeline %s %s", config.pipeline, "passed" if passed else "failed")
        return Certificate(
            pipeline=config.pipeline,
            inputs=config.inputs(),
            outputs=outputs,
            passed=passed,
            failure=failure,
            timing={"seconds": round(elapsed, 3)} if timing else None,
        )

    def _run_folner(self, config: ExperimentConfig) -> Rendered:
        group = config.group
        K = group.ordered(config.get("folner", "K"))
        eps = config.get("folner", "eps")
        cap = config.get("folner", "cap") or FOLNER_CANDIDATE_CAP
        return folner_outputs(group, folner_supplier(group, K, eps, cap), K, eps)

    def _run_castle_l33(self, config: ExperimentConfig) -> Rendered:
        action = build_action(config)
        eps = config.get("castle", "eps")
        S, Y, Z = l33_sets(config, action)
        castle = build_castle_L33(action, S, eps, Y, Z)
        return l33_outputs(action, castle, S, eps, Y, Z)

    def _run_castle_t34(self, config: ExperimentConfig) -> Rendered:
        action = build_action(config)
        essfree = essfree_input(config)
        result = build_castle_T34(
            action,
            config.get("castle", "K"),
            config.get("castle", "eps"),
            config.get("castle", "delta"),
            config.get("castle", "cap"),
        )
        outputs, passed = t34_outputs(
            action,
            result.castle,
            result.certificate,
            result.parameters,
            [len(F) for F in result.ladder],
            result.deficits,
            result.stages,
        )
        if essfree is not None:
            outputs["essfree"], bounded = essfree_outputs(result.castle, *essfree, action)
            passed = passed and bounded
        return outputs, passed

    def _run_joseph_build(self, config: ExperimentConfig) -> Rendered:
        table = choose_params(
            config.get("joseph", "gammas"),
            config.get("joseph", "prime_floor"),
            Fraction(config.get("joseph", "eps_budget")),
            exponent_boost=config.get("joseph", "exponent_boost"),
        )
        space = build_quotient(table, config.group.rank)
        rng = np.random.default_rng(config.rng_seed)
        return joseph_outputs(table, space, rng, config.get("joseph", "trials"))

    def _run_fixed_fractions(self, config: ExperimentConfig) -> Rendered:
        gammas = config.get("joseph", "gammas")
        levels = min(config.get("joseph", "levels"), len(gammas))
        if levels < 1:
            raise ParameterError("at least one refinement level is needed")
        full = choose_params(
            gammas[:levels],
            config.get("joseph", "prime_floor"),
            Fraction(config.get("joseph", "eps_budget")),
            exponent_boost=config.get("joseph", "exponent_boost"),
        )
        return fixed_fraction_outputs(full, config.group.rank, config.group, probe_elements(config))

    def _run_zstab_witness(self, config: ExperimentConfig) -> Rendered:
        F = choose_params(config.get("zstab", "F"), config.get("zstab", "prime_floor"))
        w = build_witness(
            config.get("zstab", "n"),
            F,
            config.get("zstab", "lambda0"),
            config.get("zstab", "eps"),
            config.get("zstab", "e_seeds"),
        )
        return witness_outputs(w, config)
