import csv
import sys
from datetime import datetime

from ..weakeq_config import LOG_PRIORITY_THRESHOLD
from .storage_config import RUN_LOG_PATH


def add_run_log(priority: int, context: str, message: str) -> None:
    """
    Prints "[priority] context: message" to stderr, which never carries reports.
    When WEAKEQ_LOG_FILE is set and priority <= LOG_PRIORITY_THRESHOLD (0 is most
    urgent), also appends a (timestamp, priority, context, message) row to that CSV file.
    A failed append is reported on stderr and does not interrupt the run.
    """

    print(f"[{priority}] {context}: {message}", file=sys.stderr)

    if RUN_LOG_PATH is not None and LOG_PRIORITY_THRESHOLD >= priority:
        try:
            timestamp_val = datetime.now().isoformat()
            RUN_LOG_PATH.parent.mkdir(parents=True, exist_ok=True)
            with RUN_LOG_PATH.open("a", newline="", encoding="utf-8") as handle:
                csv.writer(handle).writerow([timestamp_val, priority, context, message])
        except OSError as e:
            print(f"!!! Could not write to run log {RUN_LOG_PATH}: {e}", file=sys.stderr)
