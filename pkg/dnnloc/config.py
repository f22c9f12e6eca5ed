"""
Runtime defaults.

Values come from the environment (a local .env file is picked up), falling back
to the literals below. CLI flags override both.
"""

import os
from typing import Optional

from dotenv import load_dotenv

from .errors import ConfigError

load_dotenv()


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}")


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{name} must be a number, got {raw!r}")


def _env_flag(name: str) -> bool:
    return os.getenv(name, "").strip().lower() in {"1", "true", "yes", "on"}


# ==============================================================================
# CONFIGURATION
# ==============================================================================

SPEED_OF_LIGHT = 299_792_458.0

DEFAULT_SEED = _env_int("DNNLOC_SEED", 7)
DEFAULT_OUT_DIR = os.getenv("DNNLOC_OUT", "runs")
DEFAULT_WORKERS = _env_int("DNNLOC_WORKERS", 1)

# Channel synthesis
NUM_ANTENNAS = _env_int("DNNLOC_NUM_ANTENNAS", 10)
NUM_SUBCARRIERS = _env_int("DNNLOC_NUM_SUBCARRIERS", 64)
ELEMENT_SPACING_WAVELENGTHS = 0.5

# Features
NUM_MPCS = _env_int("DNNLOC_NUM_MPCS", 3)
PAD_RSS_DBM = -200.0

# Training
MAX_EPOCHS = _env_int("DNNLOC_MAX_EPOCHS", 2000)
PATIENCE = _env_int("DNNLOC_PATIENCE", 50)
MIN_DELTA = _env_float("DNNLOC_MIN_DELTA", 1e-9)
# epochs for retraining the winning trial, as a multiple of the per-trial budget
FINAL_EPOCH_FACTOR = _env_int("DNNLOC_FINAL_EPOCH_FACTOR", 10)

# Bayesian optimization
BUDGET = _env_int("DNNLOC_BUDGET", 30)
N_INIT = _env_int("DNNLOC_N_INIT", 5)
CANDIDATES = _env_int("DNNLOC_CANDIDATES", 1024)

# Geometry
GEOM_TOL = 1e-9
MAX_SUPPORTED_ORDER = 3

QUIET = _env_flag("DNNLOC_QUIET")


def source_date_epoch() -> Optional[int]:
    """Pinned build time for manifests (reproducible-builds convention)."""
    raw = os.getenv("SOURCE_DATE_EPOCH")
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"SOURCE_DATE_EPOCH must be an integer, got {raw!r}")
