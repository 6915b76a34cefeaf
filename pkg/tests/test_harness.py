import json

import pytest

from santalo_lab import harness
from santalo_lab.errors import ConfigInvalid, UnknownSuite
from santalo_lab.ledger import EQUALITY, HOLDS, read_csv


def test_builtin_mahler_n3_all_equality():
    report = harness.run("mahler-hanner-n3")
    assert report.ledgers and all(led.verdict == EQUALITY for led in report.ledgers)
    assert report.exit_code == harness.EXIT_OK


def test_kolesnikov_suite_config_positive_gaps():
    report = harness.run("kolesnikov-s1-suite")
    random = [led for led in report.ledgers if "sigma" not in led.name]
    assert all(led.verdict == HOLDS and led.gap > 0 for led in random)


def test_config_file_and_outputs(tmp_path):
    cfg = {"name": "cs", "operation": "sconcave.cs_constants", "params": {"dims": [1]},
           "_note": "comment keys are ignored"}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    report = harness.run(str(path), out=str(out))
    assert (out / "report.json").exists() and (out / "ledgers.jsonl").exists()
    back = read_csv(out / "ledgers.csv")
    assert [led.name for led in back] == [led.name for led in report.ledgers]
    data = json.loads((out / "report.json").read_text())
    assert data["input_hashes"]["cs"] == report.configs[0].digest()
    assert list((out / "plots").glob("*.dat"))


def test_multi_experiment_file_sorted(tmp_path):
    cfg = {"experiments": [
        {"name": "z-taylor", "operation": "linearize.taylor"},
        {"name": "a-cs", "operation": "sconcave.cs_constants", "params": {"dims": [1]}}]}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    report = harness.run(str(path), jobs=2)
    assert report.ledgers[0].name.startswith("a-cs/")


@pytest.mark.parametrize("text, fragment", [
    ('{"name": "x"}', "'operation' is missing"),
    ('{"name": "x", "operation": "nope"}', "unknown operation"),
    ('{"name": "x", "operation": "santalo.bs_random"}', "'seed' is required"),
    ('{"name": "x", "operation": "linearize.taylor", "bogus": 1}', "unknown field"),
    ('{"name": "x",\n "operation": }', "line 2"),
])
def test_config_errors(tmp_path, text, fragment):
    path = tmp_path / "bad.json"
    path.write_text(text)
    with pytest.raises(ConfigInvalid, match=fragment):
        harness.run(str(path))


def test_unknown_suite():
    with pytest.raises(UnknownSuite):
        harness.suite("nope")


def test_suite_linearize():
    report = harness.suite("linearize")
    assert not report.violated and len(report.configs) == 2


def test_errors_become_skipped_rows():
    cfg = harness.ExperimentConfig("bad", "transport.talagrand_equality",
                                   {"families": ["gaussian", "nope"]})
    _, ledgers, _ = harness.run_experiment(cfg)
    assert ledgers[0].verdict == "Skipped" and "ConfigInvalid" in ledgers[0].note


def test_cli_exit_codes(tmp_path, capsys):
    assert harness.main(["run", "mahler-hanner-n3"]) == 0
    assert "summary" in capsys.readouterr().out
    assert harness.main(["suite", "nope"]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert harness.main(["run", str(bad)]) == 3


def test_cli_violation_exit_code(monkeypatch):
    from santalo_lab.ledger import Ledger

    def broken(params, rng):
        return [Ledger.compare("broken", 2.0, 1.0, 0.0)], {}

    monkeypatch.setitem(harness.OPERATIONS, "test.broken", broken)
    assert harness.main(["run", '{"name": "b", "operation": "test.broken"}']) == 2


def test_suites_cover_builtins():
    assert set(harness.SUITES["all"]) <= set(harness.BUILTIN)


def test_csv_is_byte_reproducible(tmp_path):
    cfg = {"experiments": [
        {"name": "bs", "operation": "santalo.bs_random", "params": {"dims": [2], "count": 5},
         "seed": 11},
        {"name": "taylor", "operation": "linearize.taylor"}]}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    harness.run(str(path), out=str(tmp_path / "a"))
    harness.run(str(path), out=str(tmp_path / "b"), jobs=2)
    assert (tmp_path / "a" / "ledgers.csv").read_bytes() == (tmp_path / "b" / "ledgers.csv").read_bytes()
