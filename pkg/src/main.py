"""
weakeq command line.

Exit codes: 0 success / PASS, 1 FAIL verdict, 2 usage or file error, 3 budget refusal.
Reports go to stdout (or -o); log lines go to stderr.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, cast

import numpy as np

from .action_generators import HarnessSpec, bernoulli_shift, named, sequence_harness
from .action_ingestion import (
    ActionFileError, action_from_json, action_hash, action_to_json, load_action, save_action, _line_of,
)
from .action_models import ActionUsageError, BudgetExceededError, MPAction, Partition
from .cset_search import SearchConfig, SearchMode, cset_for
from .fine_metric import TruncationParams, fine_distance, weakly_contained, weakly_equivalent
from .partition_statistics import stat_point
from .product_transfer import lemma1_check, lemma1_suite, product_action, product_continuity_probe
from .report_io import RunReport, harness_csv, render_csv, write_csv, write_json_report
from .storage.cset_cache import CSetCache
from .storage.run_logging import add_run_log
from .text_utilities import parse_weight
from .weakeq_config import FORMAT_VERSION, LABELING_BUDGET, NUMERIC_MODE

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_BUDGET = 3

# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _rational(args: argparse.Namespace) -> bool:
    return bool(args.rational) or NUMERIC_MODE == "rational"


def _load(args: argparse.Namespace, path: str, t: int = 1) -> MPAction:
    return load_action(path, t=t, rational=_rational(args))


def _mode(args: argparse.Namespace) -> SearchMode:
    if getattr(args, "exact", False):
        return "exact"
    if getattr(args, "heuristic", False):
        return "heuristic"
    return "auto"


def _search_config(args: argparse.Namespace) -> SearchConfig:
    return SearchConfig(seed=args.seed, restarts=args.restarts, labeling_budget=args.budget)


def _cache(args: argparse.Namespace) -> Optional[CSetCache]:
    if args.no_cache:
        return None
    return CSetCache(args.cache_dir)


def _report(args: argparse.Namespace, **inputs: MPAction) -> RunReport:
    return RunReport(
        command=args.command,
        inputs={name: action_hash(a) for name, a in inputs.items()},
        seed=args.seed,
    )


def _finish(args: argparse.Namespace, report: RunReport) -> None:
    write_json_report(report, args.output, include_timing=not args.no_timing)


def _csv_table(args: argparse.Namespace, text: str) -> bool:
    """
    Writes the CSV table requested by --csv. A bare --csv replaces the JSON report
    (returns True); --csv PATH writes the table there and the report still follows.
    """
    if args.csv is None:
        return False
    if args.csv == "-":
        write_csv(text, args.output)
        return True
    write_csv(text, args.csv)
    return False


def _int_list(text: str, name: str) -> List[int]:
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x != ""]
    except ValueError:
        raise ActionUsageError(f"{name} must be a comma-separated list of integers, got '{text}'")


def _float_list(text: str, name: str) -> List[float]:
    try:
        return [float(parse_weight(x, False)) for x in text.replace(" ", "").split(",") if x != ""]
    except ValueError:
        raise ActionUsageError(f"{name} must be a comma-separated list of numbers, got '{text}'")

# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args: argparse.Namespace) -> int:
    a = _load(args, args.action)
    report = _report(args, action=a)
    report.results = {"valid": True, "atoms": a.size, "rank": a.rank, "hash": action_hash(a)}
    _finish(args, report)
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    a = _load(args, args.action, args.t)
    labels = [x - 1 for x in _int_list(args.partition, "--partition")]
    k = args.k if args.k is not None else max(labels) + 1
    point = stat_point(a, Partition(a.space, k, np.asarray(labels, dtype=np.int64)), args.t)
    if args.csv is not None:
        rows = ([FORMAT_VERSION, s + 1, label, l + 1, m + 1, float(point.values[s, l, m])]
                for s, label in enumerate(a.enumeration.labels()[:args.t])
                for l in range(k) for m in range(k))
        if _csv_table(args, render_csv(["format_version", "s", "word", "l", "m", "mass"], rows)):
            return EXIT_OK
    report = _report(args, action=a)
    report.params = {"t": args.t, "k": k, "partition": [x + 1 for x in labels]}
    report.results = {"words": a.enumeration.labels()[:args.t], "values": point.values.tolist()}
    _finish(args, report)
    return EXIT_OK


def cmd_cset(args: argparse.Namespace) -> int:
    a = _load(args, args.action, args.t)
    cset = cset_for(a, args.t, args.k, _search_config(args), _mode(args), _cache(args))
    if args.csv is not None:
        rows = ([FORMAT_VERSION, index + 1, " ".join(str(int(x) + 1) for x in cset.labelings[index]),
                 " ".join(repr(float(v)) for v in cset.points[index].reshape(-1))]
                for index in range(len(cset)))
        if _csv_table(args, render_csv(["format_version", "index", "partition", "point"], rows)):
            return EXIT_OK
    report = _report(args, action=a)
    report.mode = "exact" if cset.exact else "heuristic"
    report.params = {"t": args.t, "k": args.k, "budget": args.budget}
    report.results = {
        "exact": cset.exact,
        "size": len(cset),
        "points": [p.reshape(-1).tolist() for p in cset.points],
        "partitions": [[int(x) + 1 for x in row] for row in cset.labelings],
    }
    _finish(args, report)
    return EXIT_OK


def _truncation(args: argparse.Namespace, a: MPAction, b: MPAction) -> TruncationParams:
    return TruncationParams.for_actions(a, b, args.T, args.K, _search_config(args))


def cmd_dist(args: argparse.Namespace) -> int:
    a, b = _load(args, args.a, args.T), _load(args, args.b, args.T)
    result = fine_distance(a, b, _truncation(args, a, b), _mode(args), args.threads, _cache(args))
    if args.csv is not None:
        rows = ([FORMAT_VERSION, c.t, c.k, c.value, "exact" if c.exact else "heuristic"] for c in result.cells)
        if _csv_table(args, render_csv(["format_version", "t", "k", "d_H", "mode"], rows)):
            return EXIT_OK
    report = _report(args, a=a, b=b)
    report.mode = result.mode
    report.params = {"T": result.T, "K": result.K}
    report.results = result.to_dict()
    _finish(args, report)
    return EXIT_OK


def cmd_contain(args: argparse.Namespace) -> int:
    a, b = _load(args, args.a, args.T), _load(args, args.b, args.T)
    params = _truncation(args, a, b)
    report = _report(args, a=a, b=b)
    report.params = {"T": params.T, "K": params.K, "eps": args.eps, "norm": args.norm,
                     "relation": "equivalence" if args.both else "containment"}
    if args.both:
        equivalence = weakly_equivalent(a, b, params, args.eps, args.norm, _mode(args), args.threads, _cache(args))
        passed = equivalence.passed
        report.mode = "exact" if equivalence.forward.exact and equivalence.backward.exact else "heuristic"
        report.results = equivalence.to_dict()
    else:
        verdict = weakly_contained(a, b, params, args.eps, args.norm, _mode(args), args.threads, _cache(args))
        passed = verdict.passed
        report.mode = "exact" if verdict.exact else "heuristic"
        report.results = verdict.to_dict()
    _finish(args, report)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_product(args: argparse.Namespace) -> int:
    ab = product_action(_load(args, args.a), _load(args, args.b))
    if args.output is None:
        sys.stdout.write(json.dumps(action_to_json(ab), indent=2) + "\n")
    else:
        save_action(ab, args.output)
        add_run_log(3, "product", f"wrote {ab.size}-atom product to {args.output}")
    return EXIT_OK


def cmd_probe(args: argparse.Namespace) -> int:
    a, a2 = _load(args, args.a, args.t), _load(args, args.a2, args.t)
    b, b2 = _load(args, args.b, args.t), _load(args, args.b2, args.t)
    probe = product_continuity_probe(a, a2, b, b2, args.t, args.k, _search_config(args),
                                     symmetric=args.symmetric, tol=args.tol, n_jobs=args.threads)
    report = _report(args, a=a, a2=a2, b=b, b2=b2)
    report.params = {"t": args.t, "k": args.k, "symmetric": args.symmetric, "tol": args.tol}
    report.results = probe.to_dict()
    _finish(args, report)
    return EXIT_OK if probe.all_hold else EXIT_FAIL


def cmd_bernoulli(args: argparse.Namespace) -> int:
    rational = _rational(args)
    if args.weights:
        weights = [parse_weight(w, rational) for w in args.weights]
        if len(weights) != args.base:
            raise ActionUsageError(f"--weights gives {len(weights)} values for --base {args.base}")
    else:
        weights = [parse_weight(f"1/{args.base}", rational) for _ in range(args.base)]
    shift = bernoulli_shift(named(args.group), weights)
    if args.output is None:
        sys.stdout.write(json.dumps(action_to_json(shift), indent=2) + "\n")
    else:
        save_action(shift, args.output)
        add_run_log(3, "bernoulli", f"wrote {shift.size}-atom shift of {args.group} to {args.output}")
    return EXIT_OK


def load_harness_spec(path: str, rational: bool) -> HarnessSpec:
    """
    Harness file: {"family", "a", "b", "n_max", "T", "K", "seed"?, "partner_a"?, "partner_b"?}.
    Actions are file paths (relative to the harness file) or inline action documents.
    """
    spec_path = Path(path)
    try:
        text = spec_path.read_text(encoding="utf-8")
        doc = json.loads(text)
    except OSError as e:
        raise ActionFileError(f"{spec_path}:0: cannot read file ({e})") from e
    except json.JSONDecodeError as e:
        raise ActionFileError(f"{spec_path}:{e.lineno}: invalid JSON ({e.msg})") from e
    if not isinstance(doc, dict):
        raise ActionFileError(f"{spec_path}:1: top level must be an object")
    spec_doc = cast(Dict[str, Any], doc)

    def action(key: str, required: bool = True) -> Optional[MPAction]:
        value = spec_doc.get(key)
        if value is None:
            if required:
                raise ActionFileError(f"{spec_path}:1: missing '{key}'")
            return None
        if isinstance(value, str):
            return load_action(spec_path.parent / value, rational=rational)
        return action_from_json(value, rational=rational, source=f"{spec_path}[{key}]", text=text)

    def integer(key: str, default: Optional[int] = None) -> int:
        value = spec_doc.get(key, default)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ActionFileError(f"{spec_path}:{_line_of(text, key)}: '{key}' must be an integer")
        return value

    a, b = action("a"), action("b")
    assert a is not None and b is not None
    try:
        return HarnessSpec(
            family=spec_doc.get("family", "mixture"),
            a=a, b=b,
            n_max=integer("n_max"), T=integer("T", 2), K=integer("K", 2), seed=integer("seed", 0),
            partner_a=action("partner_a", required=False), partner_b=action("partner_b", required=False),
        )
    except ActionUsageError as e:
        if isinstance(e, ActionFileError):
            raise
        raise ActionFileError(f"{spec_path}:1: {e}") from e


def cmd_harness(args: argparse.Namespace) -> int:
    spec = load_harness_spec(args.spec, _rational(args))
    rows = sequence_harness(spec, args.threads)
    if args.json:
        report = _report(args, a=spec.a, b=spec.b)
        report.params = {"family": spec.family, "n_max": spec.n_max, "T": spec.T, "K": spec.K, "seed": spec.seed}
        report.results = {"rows": [
            {"n": r.n, "lambda": str(r.lam) if r.lam is not None else None, "d_a": r.d_a, "d_b": r.d_b,
             "d_prod": r.d_prod, "bound": r.bound, "holds": r.holds} for r in rows
        ]}
        _finish(args, report)
    else:
        write_csv(harness_csv(rows), args.csv if args.csv not in (None, "-") else args.output)
    return EXIT_OK if all(r.holds for r in rows) else EXIT_FAIL


def cmd_lemma(args: argparse.Namespace) -> int:
    report = RunReport(command=args.command, seed=args.seed)
    report.params = {"delta": args.delta}
    if args.random is not None:
        suite = lemma1_suite(args.random, args.delta, args.seed)
        report.params["count"] = args.random
        report.results = suite.to_dict()
        passed = suite.all_passed
    else:
        if not (args.a and args.b and args.c and args.d):
            raise ActionUsageError("give --random N or all of --a --b --c --d")
        check = lemma1_check(_float_list(args.a, "--a"), _float_list(args.b, "--b"),
                             _float_list(args.c, "--c"), _float_list(args.d, "--d"), args.delta)
        report.results = check.to_dict()
        passed = check.verdict
    _finish(args, report)
    return EXIT_OK if passed else EXIT_FAIL

# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for every randomized path (default 0)")
    common.add_argument("--threads", type=int, default=None, help="joblib n_jobs (default WEAKEQ_THREADS)")
    common.add_argument("--budget", type=int, default=LABELING_BUDGET, help="max k^N labelings to enumerate")
    common.add_argument("--restarts", type=int, default=SearchConfig.restarts)
    common.add_argument("--rational", action="store_true", help="read weights as exact fractions")
    common.add_argument("-o", "--output", default=None, help="write the artifact here instead of stdout")
    common.add_argument("--no-timing", action="store_true", help="omit the timing object from JSON reports")
    common.add_argument("--no-cache", action="store_true", help="do not read or write the C-set cache")
    common.add_argument("--cache-dir", default=None, help="C-set cache location (default WEAKEQ_CACHE_DIR)")
    emission = common.add_mutually_exclusive_group()
    emission.add_argument("--json", action="store_true", help="emit a JSON report (default for most commands)")
    emission.add_argument("--csv", nargs="?", const="-", default=None, metavar="PATH",
                          help="emit a CSV table; with PATH it goes there and the JSON report still follows")

    search = argparse.ArgumentParser(add_help=False)
    mode = search.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", help="require exhaustive enumeration")
    mode.add_argument("--heuristic", action="store_true", help="force sampled sets and local search")

    parser = argparse.ArgumentParser(prog="weakeq", description="Fine-topology metric on finite measure-preserving actions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check an action file")
    p.add_argument("action")
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("stats", parents=[common], help="statistic point of one partition")
    p.add_argument("action")
    p.add_argument("--partition", required=True, help="1-based block label per atom, e.g. 1,2,1")
    p.add_argument("--t", type=int, default=2)
    p.add_argument("--k", type=int, default=None)
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("cset", parents=[common, search], help="statistic set C_{t,k}")
    p.add_argument("action")
    p.add_argument("--t", type=int, default=2)
    p.add_argument("--k", type=int, default=2)
    p.set_defaults(handler=cmd_cset)

    p = sub.add_parser("dist", parents=[common, search], help="truncated fine distance")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--T", type=int, default=2)
    p.add_argument("--K", type=int, default=None, help="default: atom count of the larger space")
    p.set_defaults(handler=cmd_dist)

    p = sub.add_parser("contain", parents=[common, search], help="approximate weak containment test")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--T", type=int, default=2)
    p.add_argument("--K", type=int, default=None)
    p.add_argument("--eps", type=float, default=1e-9)
    p.add_argument("--norm", choices=["l1", "slice", "entry"], default="l1")
    p.add_argument("--both", action="store_true", help="test weak equivalence (both directions)")
    p.set_defaults(handler=cmd_contain)

    p = sub.add_parser("product", parents=[common], help="product action file")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(handler=cmd_product)

    p = sub.add_parser("probe", parents=[common], help="product continuity probe")
    for name in ("a", "a2", "b", "b2"):
        p.add_argument(name)
    p.add_argument("--t", type=int, default=2)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--symmetric", action="store_true", help="also probe a' x b' -> a x b")
    p.set_defaults(handler=cmd_probe)

    p = sub.add_parser("bernoulli", parents=[common], help="finite-group Bernoulli shift")
    p.add_argument("--group", choices=["z2", "z3", "z4", "s3"], required=True)
    p.add_argument("--base", type=int, default=2, help="number of base points m")
    p.add_argument("--weights", nargs="*", default=None, help="base weights (numbers or p/q)")
    p.set_defaults(handler=cmd_bernoulli)

    p = sub.add_parser("harness", parents=[common], help="sequence experiment table")
    p.add_argument("spec")
    p.set_defaults(handler=cmd_harness)

    p = sub.add_parser("lemma", parents=[common], help="product lemma checks")
    p.add_argument("--random", type=int, default=None, help="number of seeded random instances")
    p.add_argument("--delta", type=float, required=True)
    for name in ("a", "b", "c", "d"):
        p.add_argument(f"--{name}", default=None, help="comma-separated sequence")
    p.set_defaults(handler=cmd_lemma)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    try:
        return int(args.handler(args))
    except BudgetExceededError as e:
        add_run_log(0, f"weakeq {args.command}", f"refused: {e}")
        return EXIT_BUDGET
    except ActionUsageError as e:
        add_run_log(0, f"weakeq {args.command}", str(e))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
