# app/config.py
import os
import logging
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

APP_NAME = "radialiq"
BASE_DIR = Path(__file__).resolve().parent.parent

# Logging Configuration
LOG_LEVEL = os.getenv("RADIALIQ_LOG_LEVEL", "INFO")
# Map string to logging level
LOG_LEVEL = getattr(logging, LOG_LEVEL.upper(), logging.INFO)

# ============================================================================
# Numerics presets
# ============================================================================

PRESETS_DIR = Path(os.getenv("RADIALIQ_PRESETS_DIR", str(BASE_DIR / "presets")))
DEFAULT_CONFIG_PATH = os.getenv("RADIALIQ_CONFIG", str(PRESETS_DIR / "numerics.yaml"))

# ============================================================================
# Runtime
# ============================================================================

# Worker threads for trajectory fans, S-matrix columns and acceptance criteria.
# RADIALIQ_JOBS and RADIALIQ_SEED are read each time a CliSettings is built.
DEFAULT_JOBS = 1
DEFAULT_SEED = 20240601


def env_jobs() -> int:
    return int(os.getenv("RADIALIQ_JOBS", str(DEFAULT_JOBS)))


def env_seed() -> int:
    return int(os.getenv("RADIALIQ_SEED", str(DEFAULT_SEED)))


DEFAULT_OUT_DIR = os.getenv("RADIALIQ_OUT_DIR", "radialiq-out")

# Metrics (written as a Prometheus text file, no server)
METRICS_ENABLED = os.getenv("RADIALIQ_METRICS_ENABLED", "true").lower() == "true"
METRICS_FILE = os.getenv("RADIALIQ_METRICS_FILE", None)

# Exit codes
EXIT_OK = 0
EXIT_NUMERICAL_FAILURE = 1
EXIT_USAGE = 2
EXIT_ACCEPTANCE_FAILED = 3
