"""Constants used by zrpfluct."""
import os.path
import sys

# mypy/pylint idiom for py36-py38 compatibility
# https://github.com/python/typeshed/issues/3500#issuecomment-560958608
if sys.version_info >= (3, 8):
    from typing import Literal  # pylint: disable=no-name-in-module
else:
    from typing_extensions import Literal

DEFAULT_CONDITIONSDIR = os.path.join(os.path.dirname(__file__), 'conditions')

SUCCESS_RC = 0
INVALID_CONFIG_RC = 2
NUMERICAL_FAILURE_RC = 3
ACCEPTANCE_FAILURE_RC = 4
EXIT_CONTROL_C_RC = 130

OUTPUT_DIR_ENVVAR = "ZRPFLUCT_OUTPUT_DIR"
WORKERS_ENVVAR = "ZRPFLUCT_WORKERS"

CONFIG_FILENAME = ".zrpfluct.yml"

# Bumped on any incompatible change of the CSV or manifest layout.
ARTIFACT_SCHEMA_VERSION = "1.0"
CSV_FLOAT_FORMAT = "%.17g"

# Ensemble truncation
DEFAULT_REL_TOL = 1e-12
DIVERGENT_SHELLS = 10
MAX_SHELLS = 4000
LOG_SPACE_THRESHOLD = 30

# Frame condition
DEFAULT_FRAME_TOL = 1e-9
SINGULAR_CONDITION = 1e12

# Kinetic Monte Carlo
MAX_CANONICAL_STATES = 2_000_000
TREE_REBUILD_EVENTS = 1_000_000
TREE_REBUILD_TOL = 1e-9

# Spectral integrator
BLOWUP_AMPLITUDE = 1e6
DEFAULT_SPDE_MODES = 256
DEFAULT_SPDE_DT = 1e-5

# Decoupleability
DEFAULT_GRID_SIZE = 10_000
MIN_GRID_SIZE = 16
COMMON_ZERO_TOL = 1e-9

# Statistics
MIN_REPLICAS = 50
MIN_BIN_SAMPLES = 200
MAX_ENUMERATION_STATES = 1_000_000

FrameKind = Literal["fixed", "traveling"]

DecoupleClass = Literal[
    "fully decoupleable",
    "not fully decoupleable",
]

ArtifactKind = Literal[
    "fields",  # particle and spectral field values
    "estimators",  # aligned by compare
    "structure_factor",
    "decomposition",
    "mollified",
    "profile",
    "reference",  # closed-form OU correlations
    "marginal",
    "coupling",
    "decouple",
    "eoe",
    "bg",
    "comparison",
    "certificate",
    "ensemble",
    "conditions",
    "summary",
]
