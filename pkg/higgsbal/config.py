"""Configuration module for higgsbal."""

import os
from importlib import metadata
from time import time
from typing import Any

from dotenv import load_dotenv

from higgsbal.logger import Logger

local_env = os.path.join(os.getcwd(), "local.env")
if os.path.isfile(local_env):
    load_dotenv(local_env)

LOG_LEVEL = os.getenv("HB_LOG_LEVEL", "INFO")
LOG_DIR = os.getenv("HB_LOG_DIR")

logger = Logger(level=LOG_LEVEL, log_dir=LOG_DIR)
if os.path.isfile(local_env):
    logger.debug("Loaded local environment variables from %s", local_env)

PACKAGE_NAME = "higgsbal"
SCHEMA_VERSION = "1.0"

# region Numerical defaults
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 2000
DEGENERATION_THRESHOLD = 1e8
BURN_IN_STEPS = 20
FORM_CONDITION_LIMIT = 1e10
HERMITIAN_TOL = 1e-12
ZERO_BLOCK_TOL = 1e-11
RANK_CUTOFF = 1e-9
KERNEL_TOL = 1e-9
DEFAULT_SEED = 0
DEFAULT_ELL = "1"
DEFAULT_FD_STEP = 1e-3
DEFAULT_RANK_SAMPLES = 16
EXACT_REMAINDER = 1e-10
C_BOUNDS_SLACK = 0.1
# endregion

# region Exit codes
EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_DEGENERATE = 2
EXIT_MAX_ITER = 3
EXIT_CHECK_FAILED = 4
# endregion

CACHE_SIZE = int(os.getenv("HB_CACHE_SIZE", "256"))

_threads = os.getenv("HB_THREADS")
if _threads:
    try:
        THREADS = max(1, int(_threads))
    except ValueError:
        logger.warning("HB_THREADS=%s is not an integer, falling back to CPU count.", _threads)
        THREADS = os.cpu_count() or 1
else:
    THREADS = os.cpu_count() or 1


def rounded_time_now() -> int:
    """Get the current rounded epoch time.

    Returns:
        int: The current rounded epoch time.
    """
    return int(time())


def get_package_version(package_name: str = PACKAGE_NAME) -> str:
    """Get the installed package version.

    Arguments:
        package_name (str): The name of the package to check.

    Returns:
        str: The version string of the package or "unknown" when not installed.
    """
    try:
        return metadata.version(package_name)
    except metadata.PackageNotFoundError:
        return "unknown"


class Singleton(type):
    """A metaclass for creating singleton classes."""

    _instances: dict[Any, Any] = {}

    def __call__(cls, *args, **kwargs):
        if cls not in cls._instances:
            cls._instances[cls] = super().__call__(*args, **kwargs)
        return cls._instances[cls]
