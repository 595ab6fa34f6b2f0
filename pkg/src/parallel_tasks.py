"""
Fan-out helper over joblib. Tasks must be pure and carry their own RNG keys,
so results never depend on the number of workers.
"""
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from .weakeq_config import THREADS


def task_rng(seed: int, *task_key: int) -> np.random.Generator:
    """Private RNG stream for the task identified by (seed, *task_key)."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(x) for x in task_key)])


def run_tasks(function: Callable[..., Any], argument_list: Sequence[Tuple[Any, ...]],
              n_jobs: Optional[int] = None) -> List[Any]:
    """Runs function(*args) for every args tuple and returns results in input order."""
    jobs = THREADS if n_jobs is None else n_jobs
    if jobs == 1 or len(argument_list) < 2:
        return [function(*args) for args in argument_list]
    return list(Parallel(n_jobs=jobs)(delayed(function)(*args) for args in argument_list))
