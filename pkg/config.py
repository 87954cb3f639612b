import os
import logging

from dotenv import load_dotenv

from constants import DEFAULT_BETA, DEFAULT_QUAD_REL_TOL

logger = logging.getLogger(__name__)

# ---- Optional .env next to the working directory ----
load_dotenv()

# ---- Helpers to read env safely ----
def _int_env(name: str, default: int) -> int:
    v = os.getenv(name)
    if v is None or v == "":
        return default
    try:
        return int(v)
    except Exception:
        logger.warning(f"⚠️ ENV {name}='{v}' is not an int. Using default {default}.")
        return default

def _float_env(name: str, default: float) -> float:
    v = os.getenv(name)
    if v is None or v == "":
        return default
    try:
        return float(v)
    except Exception:
        logger.warning(f"⚠️ ENV {name}='{v}' is not a number. Using default {default}.")
        return default

def _str_env(name: str, default: str) -> str:
    v = os.getenv(name)
    return v if v else default

# ---- Logging ----
LOG_LEVEL: str = _str_env("SKYCLEAR_LOG_LEVEL", "INFO").upper()

# ---- Parallelism ----
# 0 means "use the available parallelism"
THREADS: int = max(0, _int_env("SKYCLEAR_THREADS", 0))

def resolve_threads(requested: int | None = None) -> int:
    """Thread count for data-parallel kernels: flag > env > cpu count."""
    n = requested if requested else THREADS
    if n <= 0:
        n = os.cpu_count() or 1
    return max(1, int(n))

# ---- Physics defaults ----
BETA: float = _float_env("SKYCLEAR_BETA", DEFAULT_BETA)
QUAD_REL_TOL: float = _float_env("SKYCLEAR_QUAD_REL_TOL", DEFAULT_QUAD_REL_TOL)

__all__ = [
    "LOG_LEVEL",
    "THREADS", "resolve_threads",
    "BETA", "QUAD_REL_TOL",
]
