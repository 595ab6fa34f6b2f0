"""
Configuration for on-disk storage: the C-set cache directory and the run log file.
"""
import os
from pathlib import Path
from typing import Final, Optional
from dotenv import load_dotenv

load_dotenv()

# --- Cache directory ---
CACHE_DIR_ENV_VAR_NAME: Final[str] = "WEAKEQ_CACHE_DIR"
_cache_dir_env: Optional[str] = os.environ.get(CACHE_DIR_ENV_VAR_NAME)

if _cache_dir_env is not None and _cache_dir_env.strip() == "":
    raise ValueError(
        f"The '{CACHE_DIR_ENV_VAR_NAME}' environment variable is set but empty. "
        "Unset it to use the default location or point it at a directory."
    )

DEFAULT_CACHE_DIR: Final[Path] = (
    Path(_cache_dir_env).expanduser() if _cache_dir_env else Path.home() / ".cache" / "weakeq"
)

# --- Run log file (optional) ---
LOG_FILE_ENV_VAR_NAME: Final[str] = "WEAKEQ_LOG_FILE"
_log_file_env: Optional[str] = os.environ.get(LOG_FILE_ENV_VAR_NAME)
RUN_LOG_PATH: Final[Optional[Path]] = Path(_log_file_env).expanduser() if _log_file_env else None
