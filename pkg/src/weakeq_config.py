"""
Configuration for weakeq runs.
Loads optional overrides from environment variables (or a .env file).
Every value has a default; invalid values fail fast at import.
"""
import os
from typing import Final
from dotenv import load_dotenv

load_dotenv()


def _int_from_env(name: str, default: int, minimum: int) -> int:
    """Reads an integer environment variable, falling back to *default* when unset."""
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(
            f"The '{name}' environment variable ('{raw}') is not a valid integer."
        )
    if value < minimum:
        raise ValueError(
            f"The '{name}' environment variable ({value}) must be at least {minimum}."
        )
    return value


# --- Search and enumeration budgets ---
LABELING_BUDGET: Final[int] = _int_from_env("WEAKEQ_LABELING_BUDGET", 2 ** 24, 1)
ATOM_BUDGET: Final[int] = _int_from_env("WEAKEQ_ATOM_BUDGET", 4096, 1)

# --- Parallelism (joblib n_jobs; -1 means all cores) ---
THREADS: Final[int] = _int_from_env("WEAKEQ_THREADS", -1, -1)
if THREADS == 0:
    raise ValueError(
        "The 'WEAKEQ_THREADS' environment variable must be -1 (all cores) or a positive integer."
    )

# --- Numeric mode for weights ---
NUMERIC_MODE_ENV_VAR_NAME: Final[str] = "WEAKEQ_NUMERIC_MODE"
NUMERIC_MODE: Final[str] = os.environ.get(NUMERIC_MODE_ENV_VAR_NAME, "float").strip().lower() or "float"

if NUMERIC_MODE not in ("float", "rational"):
    raise EnvironmentError(
        f"The '{NUMERIC_MODE_ENV_VAR_NAME}' environment variable ('{NUMERIC_MODE}') "
        "must be either 'float' or 'rational'."
    )

# --- Log Priority Threshold ---
LOG_PRIORITY_THRESHOLD: Final[int] = _int_from_env("LOG_PRIORITY_THRESHOLD", 2, 0)

if not (0 <= LOG_PRIORITY_THRESHOLD <= 5):
    raise ValueError(
        f"The 'LOG_PRIORITY_THRESHOLD' ({LOG_PRIORITY_THRESHOLD}) must be an integer "
        "between 0 and 5 (inclusive)."
    )

# --- Numeric tolerances ---
WEIGHT_TOLERANCE: Final[float] = 1e-12
MASS_TOLERANCE: Final[float] = 1e-9
DEDUP_TOLERANCE: Final[float] = 1e-12

# --- Output formats ---
FORMAT_VERSION: Final[int] = 1
