import json

import pytest

from src.action_ingestion import load_action, save_action
from src.main import EXIT_BUDGET, EXIT_FAIL, EXIT_OK, EXIT_USAGE, main


@pytest.fixture
def files(tmp_path, identity2, swap2, cycle3):
    paths = {}
    for name, action in (("identity", identity2), ("swap", swap2), ("cycle", cycle3)):
        paths[name] = str(tmp_path / f"{name}.json")
        save_action(action, paths[name])
    return paths


def _report(capsys):
    return json.loads(capsys.readouterr().out)


def test_validate_ok(files, capsys):
    assert main(["validate", files["cycle"]]) == EXIT_OK
    report = _report(capsys)
    assert report["results"]["valid"] is True
    assert report["results"]["atoms"] == 3
    assert report["format_version"] == 1


def test_validate_weight_violation(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"weights": [0.25, 0.75], "generators": {"g1": [2, 1]}}), encoding="utf-8")
    assert main(["validate", str(bad)]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "bad.json:" in err
    assert "weight not preserved" in err


def test_dist_to_itself(files, capsys):
    code = main(["dist", files["cycle"], files["cycle"], "--T", "3", "--K", "2", "--exact", "--no-cache"])
    assert code == EXIT_OK
    report = _report(capsys)
    assert report["results"]["value"] == 0.0
    assert report["mode"] == "exact"


def test_dist_worked_constant_and_csv(files, capsys):
    assert main(["dist", files["identity"], files["swap"], "--T", "2", "--K", "2", "--exact", "--no-cache"]) == EXIT_OK
    assert _report(capsys)["results"]["value"] == 0.5
    assert main(["dist", files["identity"], files["swap"], "--T", "2", "--K", "2", "--csv", "--no-cache"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "format_version,t,k,d_H,mode"
    assert lines[-1] == "1,2,2,2.0,exact"


def test_dist_csv_path_keeps_the_json_report(files, tmp_path, capsys):
    table = tmp_path / "out.csv"
    argv = ["dist", files["identity"], files["swap"], "--T", "2", "--K", "2", "--exact", "--csv", str(table)]
    assert main(argv) == EXIT_OK
    results = _report(capsys)["results"]
    assert results["value"] == 0.5
    assert results["mode"] == "exact"
    assert results["tail_bound"] == 2.0
    assert len(results["table"]) == 4
    lines = table.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "format_version,t,k,d_H,mode"
    assert lines[1:] == ["1,1,1,0.0,exact", "1,1,2,0.0,exact", "1,2,1,0.0,exact", "1,2,2,2.0,exact"]


def test_contain_fail_verdict(files, capsys):
    code = main(["contain", files["identity"], files["swap"], "--T", "2", "--K", "2", "--eps", "0.1", "--exact"])
    assert code == EXIT_FAIL
    results = _report(capsys)["results"]
    assert results["verdict"] == "FAIL"
    assert results["certified_failure"] is True


def test_contain_equivalence_pass(files, capsys):
    assert main(["contain", files["cycle"], files["cycle"], "--both", "--T", "2", "--K", "2"]) == EXIT_OK
    assert _report(capsys)["results"]["verdict"] == "PASS"


def test_budget_refusal_exit_code(files, capsys):
    code = main(["cset", files["cycle"], "--t", "2", "--k", "2", "--budget", "4", "--exact", "--no-cache"])
    assert code == EXIT_BUDGET
    assert "exceeds labeling budget 4" in capsys.readouterr().err


def test_lemma_random_suite(capsys):
    assert main(["lemma", "--random", "10000", "--delta", "0.05", "--seed", "7"]) == EXIT_OK
    results = _report(capsys)["results"]
    assert results["all_passed"] is True
    assert results["count"] == 10000


def test_lemma_explicit_instance(capsys):
    assert main(["lemma", "--delta", "0.1", "--a", "1", "--b", "0.95", "--c", "1", "--d", "1"]) == EXIT_OK
    assert _report(capsys)["results"]["lhs"] == pytest.approx(0.05)
    assert main(["lemma", "--delta", "0.1"]) == EXIT_USAGE


def test_product_file(files, tmp_path):
    out = tmp_path / "ab.json"
    assert main(["product", files["swap"], files["cycle"], "-o", str(out)]) == EXIT_OK
    ab = load_action(out)
    assert ab.size == 6
    assert ab.generator_perms == ((4, 5, 3, 1, 2, 0),)


def test_probe_report(files, capsys):
    code = main(["probe", files["identity"], files["swap"], files["cycle"], files["cycle"], "--t", "2", "--k", "2"])
    assert code == EXIT_OK
    results = _report(capsys)["results"]
    assert results["all_hold"] is True
    assert results["witnesses"]


def test_bernoulli_to_stdout(capsys):
    assert main(["bernoulli", "--group", "z2", "--base", "2"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["weights"] == [0.25, 0.25, 0.25, 0.25]
    assert doc["generators"] == {"g1": [1, 3, 2, 4]}


def test_stats_output(files, capsys):
    assert main(["stats", files["swap"], "--partition", "1,2", "--t", "2"]) == EXIT_OK
    results = _report(capsys)["results"]
    assert results["words"] == ["e", "g1"]
    assert results["values"][1] == [[0.0, 0.5], [0.5, 0.0]]


def test_no_timing_makes_reports_byte_identical(files, capsys):
    argv = ["cset", files["cycle"], "--t", "2", "--k", "2", "--no-timing", "--no-cache"]
    assert main(argv) == EXIT_OK
    first = capsys.readouterr().out
    assert main(argv) == EXIT_OK
    assert capsys.readouterr().out == first
    assert "timing" not in json.loads(first)
    assert main(argv[:-2] + ["--no-cache"]) == EXIT_OK
    assert "timing" in _report(capsys)


def test_harness_csv_is_deterministic(files, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "family": "mixture", "a": "swap.json", "b": "identity.json", "n_max": 3, "T": 2, "K": 2, "seed": 3,
    }), encoding="utf-8")
    first, second = tmp_path / "first.csv", tmp_path / "second.csv"
    assert main(["harness", str(spec), "-o", str(first)]) == EXIT_OK
    assert main(["harness", str(spec), "-o", str(second)]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()
    lines = first.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "format_version,n,lambda,d_a,d_b,d_prod,bound,holds"
    assert [line.split(",")[2] for line in lines[1:]] == ["1/2", "1/3"]


def test_harness_spec_errors(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"family": "mixture", "n_max": 2}), encoding="utf-8")
    assert main(["harness", str(spec)]) == EXIT_USAGE


def test_usage_errors():
    assert main([]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
