import json
import os
import shutil

import pytest

from conftest import CLI_CASES, CONFIGS, HERE
from syncontagion.cli import run_experiment
from syncontagion.output import RunManifest, config_hash, emit_csv, read_csv

GOLDEN = HERE / "golden"
UPDATE = os.environ.get("SYNCONTAGION_UPDATE_GOLDEN") == "1"

SCHEMAS = {
    "steps.csv": ["t", "A", "move"],
    "scan.csv": ["t", "a_coupled", "a_decoupled", "flag_eq2", "oracle_direction", "run_length"],
    "returns.csv": ["t", "SPX", "FTSE", "DAX", "CAC", "N225", "HSI"],
    "cascade.csv": ["t", "source", "target", "stress"],
    "days.csv": ["t", "B", "RB", "sigma", "r", "tipping_flag"],
    "meetings.csv": ["t", "B_agents", "B_meanfield"],
    "bins.csv": ["bin_lo", "bin_hi", "count", "probability"],
}


@pytest.mark.parametrize("name, argv, files", CLI_CASES, ids=[c[0] for c in CLI_CASES])
def test_golden_outputs(tmp_path, name, argv, files):
    assert run_experiment(argv + ["--out", str(tmp_path)]) == 0
    for f in files:
        produced = (tmp_path / f).read_bytes()
        golden = GOLDEN / f"{name}__{f}"
        if UPDATE:
            golden.write_bytes(produced)
        assert produced == golden.read_bytes(), f"{name}/{f} drifted from golden copy"
        header, _ = read_csv(tmp_path / f)
        assert header[: len(SCHEMAS[f])] == SCHEMAS[f]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["outputs"] == files
    assert manifest["command"] == name
    assert "PCG64" in manifest["rng_algorithm"]


def test_chain_quake_matches_hand_schedule(tmp_path):
    argv = ["quake-trace", "--config", str(CONFIGS / "chain3.ini"), "--shock", "-0.07", "--out", str(tmp_path)]
    assert run_experiment(argv) == 0
    header, rows = read_csv(tmp_path / "cascade.csv")
    assert rows == [["1", "origin", "mid", "-0.07"], ["2", "mid", "end", "-0.07"]]


def test_seed_is_echoed(tmp_path):
    assert run_experiment(["mg-sim", "--seed", "42", "--steps", "5", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "steps.csv").read_text()
    assert "seed=42" in text.splitlines()[1]


def test_config_hash_tracks_config(tmp_path):
    hashes = []
    for seed in ("1", "1", "2"):
        out = tmp_path / seed / str(len(hashes))
        run_experiment(["mg-sim", "--seed", seed, "--steps", "5", "--out", str(out)])
        hashes.append(json.loads((out / "manifest.json").read_text())["config_hash"])
    assert hashes[0] == hashes[1] != hashes[2]


def test_unknown_subcommand(capsys):
    assert run_experiment(["not-a-command"]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_config(tmp_path, capsys):
    missing = tmp_path / "nope.ini"
    assert run_experiment(["iaf-sim", "--config", str(missing), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err.strip()
    assert str(missing) in err and len(err.splitlines()) == 1


def test_bad_parameter_is_config_error(tmp_path):
    assert run_experiment(["mg-sim", "--memory", "99", "--out", str(tmp_path)]) == 2


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run_experiment(["mg-sim", "--steps", "5", "--out", str(blocker / "sub")]) == 1


def test_emit_csv_empty_and_single(tmp_path):
    p = emit_csv(["t", "A", "move"], [], tmp_path / "e.csv")
    assert p.read_text() == "t,A,move\n"
    p = emit_csv(["t", "A", "move"], [[0, -3, 0]], tmp_path / "one.csv")
    assert p.read_text().splitlines() == ["t,A,move", "0,-3,0"]


def test_emit_csv_round_trips_floats(tmp_path):
    vals = [0.1 + 0.2, 1 / 3, -1e-300, 6.02214076e23]
    p = emit_csv(["x"], [[v] for v in vals], tmp_path / "f.csv", comments=["hash"])
    _, rows = read_csv(p)
    assert [float(r[0]) for r in rows] == vals
    assert p.read_text().startswith("# hash\n")


def test_emit_csv_io_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_csv(["a"], [], blocker / "x.csv")


def test_manifest_written_atomically(tmp_path):
    m = RunManifest("mg-sim", config_hash({"a": 1}), 3, "start", "end", ["steps.csv"])
    path = m.write(tmp_path / "manifest.json")
    assert json.loads(path.read_text())["seed"] == 3
    assert [p.name for p in tmp_path.iterdir()] == ["manifest.json"]


def test_config_hash_stable_under_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})


def test_change_blindness_requires_quotes(tmp_path):
    assert run_experiment(["change-blindness", "--out", str(tmp_path)]) == 2


def test_change_blindness_flags_override(tmp_path):
    shutil.copy(HERE / "data" / "quotes.csv", tmp_path / "q.csv")
    argv = ["change-blindness", "--quotes", str(tmp_path / "q.csv"), "--conditioning", "SPX",
            "--response", "N225", "--out", str(tmp_path / "o")]
    assert run_experiment(argv) == 0
    _, rows = read_csv(tmp_path / "o" / "bins.csv")
    assert sum(int(r[2]) for r in rows) > 0
