"""Independent re-verification of certificates.

The auditor reads back the structural objects a certificate records (castles, the
Følner set, the parameter tables), recomputes every derived claim from them with
checker operations and compares the result field by field with what the
certificate says. Parameter choices that are pure functions of the inputs (the
prime tables, the Følner ladder, the witness's E search) are recomputed and
compared as well. Neither ``build_castle_L33``, ``build_castle_T34`` nor
``build_witness`` is ever called.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np

from castellan.castles import (
    AfmCertificate,
    Castle,
    afm_certificate,
    afm_check,
    check_l33,
    folner_ladder,
    stage_parameters,
    stage_record,
)
from castellan.config import FOLNER_CANDIDATE_CAP
from castellan.dynamics import StateSubset, folner_supplier, nonfree_part
from castellan.exceptions import (
    CastellanError,
    CertificateSchemaError,
    ClaimMismatchError,
    ConfigError,
)
from castellan.experiment import ExperimentConfig, from_mapping
from castellan.group_core import WreathBox
from castellan.joseph import GammaParams, ParamTable, build_quotient, choose_params
from castellan.models import StageRecord
from castellan.repository import CertificateStore, canonical_json, compute_digest
from castellan.service import (
    build_action,
    essfree_input,
    essfree_outputs,
    fixed_fraction_outputs,
    folner_outputs,
    joseph_outputs,
    l33_outputs,
    l33_sets,
    probe_elements,
    t34_outputs,
    witness_outputs,
)
from castellan.zstab import assemble_witness, search_e_table

logger = logging.getLogger(__name__)

MAX_REPORTED_DIFFERENCES = 20

Replayed = tuple[dict[str, Any], bool, list[str]]


@dataclass(frozen=True)
class AuditResult:
    """Outcome of ``CertificateAuditor.verify``.

    ``stage`` names the step that decided the outcome: ``digest``, ``schema``,
    ``claims`` or ``complete`` when everything checked out.
    """

    passed: bool
    stage: str
    failures: tuple[str, ...] = field(default=())

    def __bool__(self) -> bool:
        return self.passed


def differences(expected: Any, actual: Any, path: str = "outputs") -> Iterator[str]:
    """Yield the paths at which two JSON values differ."""
    if isinstance(expected, dict) and isinstance(actual, dict):
        for key in sorted(set(expected) | set(actual)):
            where = f"{path}.{key}"
            if key not in actual:
                yield f"{where}: missing"
            elif key not in expected:
                yield f"{where}: not produced by recomputation"
            else:
                yield from differences(expected[key], actual[key], where)
    elif isinstance(expected, list) and isinstance(actual, list):
        if len(expected) != len(actual):
            yield f"{path}: length {len(actual)}, recomputed {len(expected)}"
            return
        for index, (e, a) in enumerate(zip(expected, actual, strict=True)):
            yield from differences(e, a, f"{path}[{index}]")
    elif type(expected) is not type(actual) or expected != actual:
        yield f"{path}: recorded {json.dumps(actual)}, recomputed {json.dumps(expected)}"


def _as_json(value: Any) -> Any:
    return json.loads(canonical_json(value))


def _table(rows: Any, rank: int, name: str) -> ParamTable:
    if not isinstance(rows, list) or not rows:
        raise ClaimMismatchError(f"outputs.{name}", "parameter table is missing")
    return tuple(GammaParams.from_dict(row, rank) for row in rows)


def _table_failures(recorded: ParamTable, chosen: ParamTable, name: str) -> list[str]:
    if len(recorded) != len(chosen):
        return [f"outputs.{name}: {len(recorded)} rows, the inputs give {len(chosen)}"]
    return [
        f"outputs.{name}[{index}]: differs from the parameter choice for the inputs"
        for index, (r, c) in enumerate(zip(recorded, chosen, strict=True))
        if r.to_dict() != c.to_dict()
    ]


class CertificateAuditor:
    """Re-check signed certificates without running any builder.

    Args:
        store: Used for schema checks; a default store is created when omitted.
    """

    def __init__(self, store: CertificateStore | None = None) -> None:
        self._store = store or CertificateStore()
        self._replays: dict[str, Callable[[ExperimentConfig, dict[str, Any]], Replayed]] = {
            "folner": self._replay_folner,
            "castle-l33": self._replay_castle_l33,
            "castle-t34": self._replay_castle_t34,
            "joseph-build": self._replay_joseph_build,
            "fixed-fractions": self._replay_fixed_fractions,
            "zstab-witness": self._replay_zstab_witness,
        }

    def verify(self, payload: Any, source: str = "<certificate>") -> AuditResult:
        """Check the digest, then the schema, then every recorded claim."""
        if not isinstance(payload, dict):
            return AuditResult(False, "schema", ("top level is not an object",))
        if payload.get("digest") != compute_digest(payload):
            logger.info("digest mismatch in %s", source)
            return AuditResult(False, "digest", ("digest does not match the contents",))
        try:
            self._store.check_schema(payload, source)
            config = from_mapping(payload["inputs"])
        except (CertificateSchemaError, ConfigError) as exc:
            return AuditResult(False, "schema", (exc.message,))
        if config.pipeline != payload["pipeline"]:
            return AuditResult(False, "schema", ("pipeline differs from the recorded inputs",))

        failure = payload.get("failure")
        if failure is not None or not payload["passed"]:
            reason = "the certificate records a failed run"
            if failure:
                reason += f": {failure.get('error')}: {failure.get('message')}"
            return AuditResult(False, "claims", (reason,))

        logger.info("auditing %s certificate", config.pipeline)
        try:
            expected, passed, failures = self._replays[config.pipeline](config, payload["outputs"])
        except ConfigError as exc:
            return AuditResult(False, "schema", (exc.message,))
        except CastellanError as exc:
            return AuditResult(False, "claims", (f"recomputation failed: {exc.message}",))
        except (ArithmeticError, AttributeError, IndexError, KeyError, TypeError, ValueError) as exc:
            return AuditResult(False, "claims", (f"malformed outputs: {exc!r}",))

        failures = list(failures)
        failures.extend(differences(_as_json(expected), payload["outputs"]))
        if not passed:
            failures.append("recomputed verdict is a failure")
        if failures:
            logger.info("%s claim(s) failed in %s", len(failures), source)
            return AuditResult(False, "claims", tuple(failures[:MAX_REPORTED_DIFFERENCES]))
        return AuditResult(True, "complete")

    # ------------------------------------------------------------------
    # Per-pipeline replays
    # ------------------------------------------------------------------

    def _replay_folner(self, config: ExperimentConfig, outputs: dict[str, Any]) -> Replayed:
        group = config.group
        K = group.ordered(config.get("folner", "K"))
        eps = config.get("folner", "eps")
        if "box" in outputs:
            box = outputs["box"]
            F: Any = WreathBox(box["rank"], box["radius"], box["bound"])
        else:
            F = tuple(group.parse(s) for s in outputs["F"])
        failures = []
        chosen = folner_supplier(group, K, eps, config.get("folner", "cap") or FOLNER_CANDIDATE_CAP)
        if chosen != F:
            failures.append("the recorded set is not the first certified candidate")
        return *folner_outputs(group, F, K, eps), failures

    def _replay_castle_l33(self, config: ExperimentConfig, outputs: dict[str, Any]) -> Replayed:
        action = build_action(config)
        S, Y, Z = l33_sets(config, action)
        castle = Castle.from_dict(outputs["castle"], action.group, action.size)
        return *l33_outputs(action, castle, S, config.get("castle", "eps"), Y, Z), []

    def _replay_castle_t34(self, config: ExperimentConfig, outputs: dict[str, Any]) -> Replayed:
        action = build_action(config)
        group = action.group
        eps = config.get("castle", "eps")
        delta = config.get("castle", "delta") or eps
        K = group.ordered(config.get("castle", "K"))
        cap = config.get("castle", "cap") or action.size
        essfree = essfree_input(config)
        failures: list[str] = []

        castle = Castle.from_dict(outputs["castle"], group, action.size)
        claimed = AfmCertificate.from_dict(outputs["certificate"], group)
        failures.extend(f"certificate: {f}" for f in afm_check(castle, claimed, action).failures)

        params = stage_parameters(eps)
        ladder, deficits = folner_ladder(group, K, eps, params.beta, params.n, cap)
        counts = [stage["towers"] for stage in outputs["stages"]]
        if len(counts) != params.n or sum(counts) != len(castle):
            raise ClaimMismatchError("outputs.stages", "tower counts do not split the castle")
        records: list[StageRecord] = []
        union = StateSubset.empty(action.size)
        offset = 0
        for k, count in enumerate(counts, start=1):
            S = ladder[params.n - k]
            stage_castle = Castle(castle.towers[offset : offset + count])
            offset += count
            report = check_l33(stage_castle, action, S, eps, union, nonfree_part(S, action))
            if not report.passed:
                failures.append(f"stage {k}: single-scale postconditions fail: {report}")
            record, union = stage_record(action, k, S, union, stage_castle, eps, params)
            if record.z_density >= record.z_bound:
                failures.append(f"stage {k}: non-free part too dense")
            if not record.density_growth.holds:
                failures.append(f"stage {k}: density recursion fails")
            if record.footprint_density < record.density_bound:
                failures.append(f"stage {k}: footprint density below its bound")
            records.append(record)

        certificate = afm_certificate(castle, action, K, eps, delta)
        sizes = [len(F) for F in ladder]
        expected, passed = t34_outputs(action, castle, certificate, params, sizes, deficits, records)
        if essfree is not None:
            expected["essfree"], bounded = essfree_outputs(castle, *essfree, action)
            passed = passed and bounded
        return expected, passed, failures

    def _replay_joseph_build(self, config: ExperimentConfig, outputs: dict[str, Any]) -> Replayed:
        rank = config.group.rank
        table = _table(outputs["table"], rank, "table")
        chosen = choose_params(
            config.get("joseph", "gammas"),
            config.get("joseph", "prime_floor"),
            Fraction(config.get("joseph", "eps_budget")),
            exponent_boost=config.get("joseph", "exponent_boost"),
        )
        failures = _table_failures(table, chosen, "table")
        space = build_quotient(table, rank)
        rng = np.random.default_rng(config.rng_seed)
        return *joseph_outputs(table, space, rng, config.get("joseph", "trials")), failures

    def _replay_fixed_fractions(self, config: ExperimentConfig, outputs: dict[str, Any]) -> Replayed:
        group = config.group
        gammas = config.get("joseph", "gammas")
        levels = min(config.get("joseph", "levels"), len(gammas))
        full = _table(outputs["table"], group.rank, "table")
        chosen = choose_params(
            gammas[:levels],
            config.get("joseph", "prime_floor"),
            Fraction(config.get("joseph", "eps_budget")),
            exponent_boost=config.get("joseph", "exponent_boost"),
        )
        failures = _table_failures(full, chosen, "table")
        rendered = fixed_fraction_outputs(full, group.rank, group, probe_elements(config))
        return *rendered, failures

    def _replay_zstab_witness(self, config: ExperimentConfig, outputs: dict[str, Any]) -> Replayed:
        rank = config.group.rank
        n = config.get("zstab", "n")
        eps = config.get("zstab", "eps")
        lambda0 = config.get("zstab", "lambda0")
        F = _table(outputs["F"], rank, "F")
        E = _table(outputs["E"], rank, "E")
        chosen_F = choose_params(config.get("zstab", "F"), config.get("zstab", "prime_floor"))
        failures = _table_failures(F, chosen_F, "F")
        chosen_E = search_e_table(n, chosen_F, lambda0, eps, config.get("zstab", "e_seeds"))
        failures += _table_failures(E, chosen_E, "E")
        # m and η are not read back: the witness always uses their defaults
        w = assemble_witness(n, F, E, lambda0, eps)
        return *witness_outputs(w, config), failures
