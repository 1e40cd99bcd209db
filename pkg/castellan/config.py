"""Configuration constants for castellan."""

from fractions import Fraction

# Application metadata
APP_NAME = "castellan"
APP_VERSION = "1.0.0"
CERTIFICATE_SCHEMA = "castellan/certificate-1"

# Pipelines understood by ``castellan run``
PIPELINES = (
    "folner",
    "castle-l33",
    "castle-t34",
    "joseph-build",
    "fixed-fractions",
    "zstab-witness",
)
RANDOMIZED_PIPELINES = {"castle-l33", "joseph-build", "fixed-fractions"}

# Group defaults
DEFAULT_LATTICE_RANK = 1
SUPPORTED_BASE_GROUPS = {"Z"}

# Resource caps
STATE_CAP = 10**6
WITNESS_QUOTIENT_CAP = 2 * 10**5
FOLNER_CANDIDATE_CAP = 4096
WREATH_BOX_RADIUS_CAP = 64
PERMUTATION_CACHE_BYTES = 64 * 2**20
WITNESS_MAX_GAMMAS = 3
WITNESS_MAX_INDEX_BOOST = 6

# Construction defaults
CONDITION_THREE_FLOOR = Fraction(1, 4)
DYADIC_SCAN_DEPTH = 40
ORACLE_TRIALS = 1000

# Certificate output
JSON_INDENT = 2
CSV_DECIMAL_DIGITS = 12
CITED_DEPENDENCIES = (
    "dynamical comparison of the profinite action (Cuntz subequivalence from the measure gap)",
)
MEASURE_ASSUMPTION = "uniform measure on the deepest built level (unique ergodicity cited)"

# Exit codes
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# Rich console styling
STYLE_SUCCESS = "green"
STYLE_ERROR = "red"
STYLE_WARNING = "yellow"
STYLE_INFO = "cyan"
STYLE_RATIONAL = "magenta"
STYLE_TITLE = "bold"
STYLE_DIM = "dim"
