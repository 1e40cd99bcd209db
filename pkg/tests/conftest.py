"""Shared pytest fixtures for the castellan test suite."""
from __future__ import annotations

from pathlib import Path
from typing import Callable

import pytest
from click.testing import CliRunner

from castellan.dynamics import FinAction, cyclic_action
from castellan.experiment import ExperimentConfig, parse_experiment
from castellan.group_core import WreathProduct
from castellan.joseph import choose_params
from castellan.service import PipelineService


FOLNER_INI = """
[experiment]
pipeline = folner

[folner]
K = 1; -1
eps = 1/2
"""

L33_INI = """
[experiment]
pipeline = castle-l33

[action]
states = 64
cells = 8

[castle]
S = 0; 1; 2; 3; 4; 5; 6; 7
eps = 1/4
Y = 0; 1
"""

T34_INI = """
[experiment]
pipeline = castle-t34

[action]
states = 1024

[castle]
K = 1; -1
eps = 1/8

[essfree]
g = 1
eps_prime = 1/8
"""

JOSEPH_INI = """
[experiment]
pipeline = joseph-build
rng_seed = 7

[joseph]
gammas = @1; @2
prime_floor = 10
"""

FIXED_FRACTIONS_INI = """
[experiment]
pipeline = fixed-fractions
rng_seed = 3

[joseph]
gammas = @1; 0:1@0
levels = 2

[probes]
count = 5
gammas = @1; 0:1@0; @4
"""

ZSTAB_INI = """
[experiment]
pipeline = zstab-witness

[zstab]
n = 2
eps = 1/2
F = @1
indicator = 0
ms = 3; 5
"""


@pytest.fixture
def runner() -> CliRunner:
    """Return a Click CliRunner instance."""
    return CliRunner()


@pytest.fixture
def service() -> PipelineService:
    return PipelineService(clock=lambda: 0.0)


@pytest.fixture
def cyclic8() -> FinAction:
    """ℤ acting on ℤ/8 by +1."""
    return cyclic_action(8)


@pytest.fixture
def odometer() -> FinAction:
    """ℤ acting on ℤ/2^10 by +1."""
    return cyclic_action(2**10)


@pytest.fixture
def wreath() -> WreathProduct:
    return WreathProduct(1)


@pytest.fixture
def unit_shift_table(wreath):
    """The one-row table for the unit shift: p = 2, Λ_γ = 4ℤ, 8 states."""
    return choose_params([wreath.parse("@1")])


@pytest.fixture
def config_from() -> Callable[[str], ExperimentConfig]:
    """Parse an INI string into a validated experiment."""
    return parse_experiment


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[[str, str], Path]:
    """Write an INI string into the temp directory and return its path."""

    def _write(text: str, name: str = "experiment.ini") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


@pytest.fixture(scope="session")
def folner_ini() -> str:
    return FOLNER_INI


@pytest.fixture(scope="session")
def l33_ini() -> str:
    return L33_INI


@pytest.fixture(scope="session")
def t34_ini() -> str:
    return T34_INI


@pytest.fixture(scope="session")
def joseph_ini() -> str:
    return JOSEPH_INI


@pytest.fixture(scope="session")
def fixed_fractions_ini() -> str:
    return FIXED_FRACTIONS_INI


@pytest.fixture(scope="session")
def zstab_ini() -> str:
    return ZSTAB_INI
