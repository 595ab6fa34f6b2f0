# cset_cache.py (content-addressed C-set cache)

import json
from pathlib import Path
from typing import Any, Dict, Final, Optional, Union

import numpy as np

from ..action_ingestion import action_hash
from ..action_models import MPAction
from ..cset_search import CSet, enumerate_cset
from ..weakeq_config import FORMAT_VERSION
from .run_logging import add_run_log
from .storage_config import DEFAULT_CACHE_DIR

CACHE_SUFFIX: Final[str] = ".cset.json"


class CSetCache:
    """
    Keeps exact C-sets on disk, keyed by (action content hash, t, k, budget),
    with an in-memory layer in front. Renaming an action file never
    invalidates its entries.
    """

    def __init__(self, cache_dir: Optional[Union[str, Path]] = None):
        self.cache_dir: Path = Path(cache_dir) if cache_dir is not None else DEFAULT_CACHE_DIR
        self._memory: Dict[str, CSet] = {}

    @staticmethod
    def key(a: MPAction, t: int, k: int, budget: int) -> str:
        return f"{action_hash(a)[:24]}_t{t}_k{k}_exact_b{budget}"

    def _path(self, key: str) -> Path:
        return self.cache_dir / f"{key}{CACHE_SUFFIX}"

    def get(self, a: MPAction, t: int, k: int, budget: int) -> Optional[CSet]:
        key = self.key(a, t, k, budget)
        if key in self._memory:
            return self._memory[key]
        path = self._path(key)
        if not path.exists():
            return None
        try:
            cset = self._decode(json.loads(path.read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError) as e:
            add_run_log(2, "CSetCache.get", f"ignoring unreadable cache entry {path.name}: {e}")
            return None
        self._memory[key] = cset
        return cset

    def put(self, a: MPAction, cset: CSet, budget: int) -> None:
        key = self.key(a, cset.t, cset.k, budget)
        self._memory[key] = cset
        try:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            self._path(key).write_text(json.dumps(self._encode(a, cset)), encoding="utf-8")
        except OSError as e:
            add_run_log(2, "CSetCache.put", f"could not write cache entry {key}: {e}")

    def get_or_build(self, a: MPAction, t: int, k: int, budget: int) -> CSet:
        cached = self.get(a, t, k, budget)
        if cached is not None:
            return cached
        cset = enumerate_cset(a, t, k, budget)
        self.put(a, cset, budget)
        return cset

    @staticmethod
    def _encode(a: MPAction, cset: CSet) -> Dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "provenance": {
                **cset.provenance,
                "action_hash": action_hash(a),
                "t": cset.t,
                "k": cset.k,
                "exact": cset.exact,
            },
            "points": [[float(x) for x in p.reshape(-1)] for p in cset.points],
            "labelings": cset.labelings.tolist(),
        }

    @staticmethod
    def _decode(doc: Dict[str, Any]) -> CSet:
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported format_version {doc.get('format_version')!r}")
        header = doc["provenance"]
        t, k = int(header["t"]), int(header["k"])
        points = np.asarray(doc["points"], dtype=np.float64).reshape(-1, t, k, k)
        labelings = np.asarray(doc["labelings"], dtype=np.int64)
        provenance = {key: value for key, value in header.items() if key not in ("t", "k", "exact")}
        return CSet(t, k, points, labelings, bool(header["exact"]), provenance)
