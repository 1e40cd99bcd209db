"""Unit tests for castellan/service.py."""
from fractions import Fraction
from unittest.mock import MagicMock, patch

import numpy as np
import pytest

from castellan.castles import Castle, Tower, afm_certificate, stage_parameters
from castellan.dynamics import StateSubset
from castellan.exceptions import ConfigError, FolnerCapError
from castellan.models import CheckReport, LadderDeficit
from castellan.service import (
    PipelineService,
    build_action,
    essfree_input,
    l33_sets,
    probe_elements,
    report_dict,
    series,
    t34_outputs,
)


JOSEPH_SMALL_INI = """
[experiment]
pipeline = joseph-build
rng_seed = 11

[joseph]
gammas = @1
trials = 100
"""


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

class TestHelpers:
    def test_report_dict(self):
        report = CheckReport.from_failures(["a", "b"])
        assert report_dict(report) == {"passed": False, "failures": ["a", "b"]}

    def test_series_serializes_rationals(self):
        data = series(["m", "value"], ["value"], [[3, Fraction(2, 3)], [4, Fraction(1)]])
        assert data == {"columns": ["m", "value"], "rational": ["value"], "rows": [[3, "2/3"], [4, "1"]]}

    def test_cyclic_action_with_cells(self, config_from, l33_ini):
        action = build_action(config_from(l33_ini))
        assert action.size == 64
        assert action.resolution_id == "cells:8"
        assert action.act(1, 63) == 0

    def test_random_action_is_seeded(self, config_from, l33_ini):
        text = l33_ini.replace("states = 64", "states = 64\nkind = random").replace(
            "[experiment]", "[experiment]\nrng_seed = 4"
        )
        first = build_action(config_from(text))
        second = build_action(config_from(text))
        assert np.array_equal(first.permutation(1), second.permutation(1))
        assert first.resolution_id == "cells:8"

    @pytest.mark.parametrize("replacement", ["states = 0", "states = 64\ncells = 65"])
    def test_bad_action(self, config_from, l33_ini, replacement):
        config = config_from(l33_ini.replace("states = 64\ncells = 8", replacement))
        with pytest.raises(ConfigError):
            build_action(config)

    def test_l33_sets(self, config_from, l33_ini):
        config = config_from(l33_ini + "Z = 5\n")
        S, Y, Z = l33_sets(config, build_action(config))
        assert S == tuple(range(8))
        assert Y.to_list() == [0, 1]
        assert Z == StateSubset.from_states(64, [5])

    def test_essfree_input(self, config_from, t34_ini):
        assert essfree_input(config_from(t34_ini)) == (1, Fraction(1, 8))

    def test_essfree_defaults_to_castle_eps(self, config_from, t34_ini):
        config = config_from(t34_ini.replace("eps_prime = 1/8\n", "").replace("eps = 1/8", "eps = 1/4"))
        assert essfree_input(config) == (1, Fraction(1, 4))

    def test_essfree_absent(self, config_from, l33_ini):
        assert essfree_input(config_from(l33_ini)) is None

    def test_essfree_needs_one_element(self, config_from, t34_ini):
        with pytest.raises(ConfigError):
            essfree_input(config_from(t34_ini.replace("g = 1", "g = 1; 2")))

    def test_probes(self, config_from, fixed_fractions_ini):
        config = config_from(fixed_fractions_ini)
        probes = probe_elements(config)
        assert len(probes) == 8
        assert probes[:3] == list(config.get("probes", "gammas"))
        assert probe_elements(config) == probes


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------

class TestRunFolner:
    def test_integer_interval(self, service, config_from, folner_ini):
        certificate = service.run(config_from(folner_ini))
        assert certificate.passed
        assert certificate.failure is None
        assert certificate.outputs["size"] == 9
        assert certificate.outputs["ratio"] == "4/9"
        assert certificate.outputs["boundary_ratio"] == "2/9"
        assert certificate.outputs["F"] == [str(i) for i in range(9)]

    def test_inputs_echo(self, service, config_from, folner_ini):
        certificate = service.run(config_from(folner_ini))
        assert certificate.inputs["folner"] == {"K": "1; -1", "eps": "1/2"}

    def test_wreath_box(self, service, config_from):
        text = "[experiment]\npipeline = folner\n[group]\nkind = wreath\n[folner]\nK = @1; 0:1@0\neps = 3/2\n"
        certificate = service.run(config_from(text))
        assert certificate.passed
        assert certificate.outputs["box"] == {"rank": 1, "radius": 1, "bound": 1}
        assert certificate.outputs["ratio"] == "4/3"

    def test_wreath_box_larger_than_index_range(self, service, config_from):
        text = (
            "[experiment]\npipeline = folner\n[group]\nkind = wreath\n"
            "[folner]\nK = @1; @-1; 0:1@0; 0:-1@0\neps = 1/2\n"
        )
        certificate = service.run(config_from(text))
        assert certificate.passed, certificate.failure
        assert certificate.outputs["box"] == {"rank": 1, "radius": 5, "bound": 25}
        assert certificate.outputs["size"] == 11 * 51**11
        assert certificate.outputs["ratio"] == "248/561"

    def test_cap_failure_is_captured(self, service, config_from):
        text = "[experiment]\npipeline = folner\n[folner]\nK = 1; -1\neps = 1/100\ncap = 10\n"
        certificate = service.run(config_from(text))
        assert not certificate.passed
        assert certificate.outputs == {}
        assert certificate.failure["error"] == "FolnerCapError"
        assert "cap 10" in certificate.failure["message"]


class TestRunCastles:
    def test_l33(self, service, config_from, l33_ini):
        certificate = service.run(config_from(l33_ini))
        assert certificate.passed
        outputs = certificate.outputs
        assert all(outputs["report"].values())
        assert outputs["Y"] == [0, 1]
        assert outputs["Z"] == []
        assert outputs["series"]["tower_invariance"]["columns"][0] == "tower"

    def test_t34_with_essfree(self, service, config_from, t34_ini):
        certificate = service.run(config_from(t34_ini))
        assert certificate.passed
        outputs = certificate.outputs
        assert outputs["parameters"]["n"] == 16
        assert outputs["ladder_sizes"][0] == 33
        assert outputs["ladder_sizes"][-1] == 1024
        assert outputs["ladder_met"] is False
        assert outputs["deficits"]
        assert outputs["certificate"]["density"] == "1"
        assert outputs["certificate"]["per_tower_invariance"] == ["1/256"]
        assert outputs["afm_check"] == {"passed": True, "failures": []}
        assert outputs["essfree"]["bound"] == "15/64"
        assert outputs["essfree"]["max_fixed_measure"] == "0"
        assert len(outputs["stages"]) == 16

    def test_stage_failure_is_captured(self, service, config_from):
        text = (
            "[experiment]\npipeline = castle-t34\n[action]\nstates = 8\n"
            "[castle]\nK = 1\neps = 1/4\ncap = 64\n"
        )
        certificate = service.run(config_from(text))
        assert not certificate.passed
        assert certificate.failure["error"] == "StageFailureError"

    def test_config_errors_propagate(self, service, config_from, l33_ini):
        config = config_from(l33_ini.replace("cells = 8", "cells = 100"))
        with pytest.raises(ConfigError):
            service.run(config)

    def test_ladder_flag_follows_deficits(self, cyclic8):
        castle = Castle((Tower(tuple(range(8)), StateSubset.from_states(8, [0])),))
        certificate = afm_certificate(castle, cyclic8, [1, -1], Fraction(1, 4), Fraction(1))
        params = stage_parameters(Fraction(1, 4))
        met, _ = t34_outputs(cyclic8, castle, certificate, params, [8], (), ())
        deficit = LadderDeficit(2, 1, Fraction(1, 2), Fraction(3, 128))
        short, passed = t34_outputs(cyclic8, castle, certificate, params, [8, 8], (deficit,), ())
        assert met["ladder_met"] is True
        assert short["ladder_met"] is False
        assert short["deficits"] == [{"j": 2, "i": 1, "ratio": "1/2", "target": "3/128"}]
        assert passed


class TestRunJoseph:
    def test_small_table(self, service, config_from):
        certificate = service.run(config_from(JOSEPH_SMALL_INI))
        assert certificate.passed
        outputs = certificate.outputs
        assert (outputs["modulus"], outputs["quotient_size"], outputs["w_size"]) == (4, 8, 1)
        assert outputs["oracle"]["trials"] == 100
        assert outputs["conditions"] == [{str(c): True for c in range(1, 9)}]

    def test_seed_reproduces_outputs(self, service, config_from):
        config = config_from(JOSEPH_SMALL_INI)
        assert service.run(config).outputs == service.run(config).outputs

    @pytest.mark.slow
    def test_two_primes(self, service, config_from, joseph_ini):
        certificate = service.run(config_from(joseph_ini))
        assert certificate.passed
        outputs = certificate.outputs
        assert [row["p"] for row in outputs["table"]] == [11, 13]
        assert (outputs["modulus"], outputs["quotient_size"], outputs["w_size"]) == (143, 20449, 1)
        assert outputs["partition"]["passed"]

    def test_fixed_fractions(self, service, config_from, fixed_fractions_ini):
        certificate = service.run(config_from(fixed_fractions_ini))
        assert certificate.passed
        outputs = certificate.outputs
        assert [level["quotient_size"] for level in outputs["levels"]] == [8, 648]
        assert outputs["probes"][:3] == ["@1", "0:1@0", "@4"]
        assert outputs["fractions"][0] == ["0", "0"]
        assert outputs["fractions"][1] == ["3/4", "7/12"]
        assert outputs["fractions"][2] == ["1", "0"]
        assert outputs["monotonicity_violations"] == 0
        assert outputs["composition"] is True


@pytest.mark.slow
class TestRunWitness:
    def test_witness(self, service, config_from, zstab_ini):
        certificate = service.run(config_from(zstab_ini))
        outputs = certificate.outputs
        assert outputs["measures"]["gap"] == "1431/14641"
        assert outputs["measures"]["formula_matches"] is True
        assert outputs["psi_relations"] == "exact-pass"
        assert outputs["order_zero"] == "exact-pass"
        assert [row[0] for row in outputs["series"]["defect_vs_m"]["rows"]] == [3, 5]
        assert certificate.passed


# ---------------------------------------------------------------------------
# Timing
# ---------------------------------------------------------------------------

class TestTiming:
    def test_timing_is_opt_in(self, service, config_from, folner_ini):
        assert service.run(config_from(folner_ini)).timing is None

    def test_timing_uses_clock(self, config_from, folner_ini):
        clock = MagicMock(side_effect=[1.0, 3.5])
        certificate = PipelineService(clock=clock).run(config_from(folner_ini), timing=True)
        assert certificate.timing == {"seconds": 2.5}
        assert clock.call_count == 2

    def test_unexpected_library_error(self, service, config_from, folner_ini):
        with patch("castellan.service.folner_supplier", side_effect=FolnerCapError(7)):
            certificate = service.run(config_from(folner_ini))
        assert certificate.failure == {
            "error": "FolnerCapError",
            "message": "Følner search exhausted cap 7 before certification",
        }
