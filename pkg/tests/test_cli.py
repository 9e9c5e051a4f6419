import csv
import io
import json

import numpy as np
import pytest

from epmeas.cli import main
from epmeas.formats import load_source

E_HALF = float(np.log(2 * np.sqrt(0.21)))
BERN = "builtin:bernoulli(0.7)"


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_validate_ok(capsys):
    code, out, _ = run_cli(capsys, "validate", BERN)
    assert code == 0
    data = json.loads(out)
    assert data["validation"]["valid"]
    assert data["alphabet"] == ["a", "b"]


def test_bad_source_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["validate", "builtin:nope(1)"])
    assert exc.value.code == 2
    assert "unknown builtin" in capsys.readouterr().err


def test_missing_file_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["validate", str(tmp_path / "absent.json")])
    assert exc.value.code == 2


def test_bad_range_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["ep", BERN, "--T", "5..1"])
    assert exc.value.code == 2


def test_cap_exceeded_json_diagnostic(capsys):
    code, _, err = run_cli(capsys, "ep", BERN, "--T", "1..30", "--cap", "1000")
    assert code == 1
    diag = json.loads(err.strip().splitlines()[-1])
    assert diag["error"] == "CapExceeded"
    assert diag["required"] == 2 ** 10 and diag["cap"] == 1000


def test_pressure_csv_brackets_half(capsys):
    code, out, _ = run_cli(capsys, "pressure", BERN, "--alpha", "0.5", "--T", "1..8")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [int(r["T"]) for r in rows] == list(range(1, 9))
    last = rows[-1]
    assert float(last["lower"]) - 1e-12 <= E_HALF <= float(last["upper"]) + 1e-12
    assert float(last["e_T"]) == pytest.approx(8 * E_HALF, abs=1e-12)


def test_pressure_json(capsys):
    code, out, _ = run_cli(capsys, "pressure", BERN, "--alpha", "0:1:5", "--T", "1..4", "--json")
    assert code == 0
    assert isinstance(json.loads(out), dict)


def test_ep_with_monte_carlo(capsys):
    code, out, _ = run_cli(capsys, "ep", BERN, "--T", "1..6", "--mc-T", "50", "--mc-n", "200", "--seed", "3")
    assert code == 0
    data = json.loads(out)
    assert "bounds" in data and "monte_carlo" in data


def test_hypotest_json_and_csv(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "hypotest", BERN, "--T", "1..6", "--alpha", "0:1:21",
                           "--csv-dir", str(tmp_path))
    assert code == 0
    data = json.loads(out)
    assert set(data) >= {"cT", "chernoff", "stein", "hoeffding"}
    assert set(data["cT"]) == {str(T) for T in range(1, 7)}
    assert all(0 < v <= 1 for v in data["cT"].values())
    for name in ("chernoff.csv", "stein.csv", "hoeffding.csv"):
        assert (tmp_path / name).read_text().strip()


def test_ldp_csv(capsys):
    code, out, _ = run_cli(capsys, "ldp", BERN, "--T", "1..8", "--interval=-0.1,0.1")
    assert code == 0
    assert len(list(csv.DictReader(io.StringIO(out)))) == 8


def test_sample_json_lines(capsys):
    code, out, _ = run_cli(capsys, "sample", "builtin:cycle(3,0.8)", "--T", "5", "--n", "4", "--seed", "1")
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 4
    for line in lines:
        rec = json.loads(line)
        assert len(rec["word"]) == 5
        assert rec["log_p"] <= 0


def test_sample_reproducible(capsys):
    _, a, _ = run_cli(capsys, "sample", BERN, "--T", "6", "--n", "5", "--seed", "9")
    _, b, _ = run_cli(capsys, "sample", BERN, "--T", "6", "--n", "5", "--seed", "9")
    assert a == b


def test_reverse_roundtrip(tmp_path, capsys):
    path = tmp_path / "rev.json"
    code, _, _ = run_cli(capsys, "reverse", BERN, "-o", str(path))
    assert code == 0
    rev = load_source(str(path))
    orig = load_source(BERN)
    for T in (1, 3):
        got, want = rev.table(T), orig.reversal.table(T)
        assert np.array_equal(got.index, want.index)
        assert np.allclose(got.log_p, want.log_p, atol=1e-12)


def test_assumptions(capsys):
    code, out, _ = run_cli(capsys, "assumptions", BERN, "--T-max", "4", "--tau-max", "1")
    assert code == 0
    assert "C_constants" in json.loads(out)


def test_run_command(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("source: builtin:bernoulli(0.7)\ntasks:\n  validate: {}\n  sample: {T: 4, n: 3}\n")
    code, out, _ = run_cli(capsys, "run", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 0
    assert json.loads(out)["status"] == {"validate": "ok", "sample": "ok"}


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
