import csv
import io
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from secretary_sampling import cli

GOLDEN = Path(__file__).parent / "golden"

CASES = [
    ("guarantee_aos.csv", ["guarantee", "aos", "--p", "0.5"]),
    ("guarantee_ros.json", ["guarantee", "ros", "--p", "0", "--format", "json"]),
    ("sweep.csv", ["sweep", "--step", "0.05"]),
    ("thresholds.csv", ["thresholds", "--count", "5"]),
    ("dp_ell.csv", ["dp", "--n", "6", "--p", "0.5"]),
    ("dp_w.json", ["dp", "--n", "3", "--table", "W", "--format", "json"]),
    ("gamma.json", ["gamma", "--format", "json"]),
    ("simulate_kmax.json", ["simulate", "--policy", "kmax", "--n", "50", "--p", "0.5", "--trials", "20000",
                            "--seed", "42", "--format", "json"]),
    ("census.csv", ["conflict", "census", "--n", "4", "--p", "0.5"]),
    ("edges.txt", ["conflict", "edges", "--n", "3", "--graph", "text"]),
    ("strategy.csv", ["conflict", "strategy", "--start", "4", "--end", "8", "--p", "0.5"]),
]


def run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def table(text: str) -> list[dict]:
    return list(csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#")))


@pytest.mark.parametrize("name, args", CASES)
def test_golden_outputs(name, args, capsys):
    code, out, _ = run(args, capsys)
    assert code == 0
    assert out == (GOLDEN / name).read_text()


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "secretary_sampling", "guarantee", "aos", "--p", "0.5"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert table(proc.stdout) == [
        {"p": "0.5", "k": "2", "guarantee": "0.25", "lower_bound": "0.25", "upper_bound": "0.265368922712"}
    ]


def test_headline_values(capsys):
    _, out, _ = run(["guarantee", "ros", "--p", "0"], capsys)
    assert table(out)[0]["guarantee"].startswith("0.367879")
    _, out, _ = run(["thresholds", "--count", "5"], capsys)
    assert table(out)[0]["t"].startswith("0.3678794")
    _, out, _ = run(["gamma"], capsys)
    assert abs(float(table(out)[0]["gamma"]) - 0.5801) < 5e-4
    _, out, _ = run(["conflict", "census", "--n", "4"], capsys)
    assert {r["degree"]: int(r["count"]) for r in table(out)} == {"0": 1, "1": 8, "2": 4, "3": 2, "4": 1}


def test_sweep_file_output(tmp_path, capsys):
    path = tmp_path / "curves.csv"
    code, out, _ = run(["sweep", "--step", "0.1", "--output", str(path)], capsys)
    assert code == 0 and out == ""
    rows = table(path.read_text())
    assert [float(r["p"]) for r in rows] == pytest.approx([i / 10 for i in range(1, 10)])
    half = next(r for r in rows if r["p"] == "0.5")
    assert half["aos_guarantee"] == "0.25"
    for r in rows:
        assert float(r["aos_lower"]) <= float(r["aos_guarantee"]) <= float(r["aos_upper"])
        assert float(r["ros_guarantee"]) >= float(r["aos_guarantee"])


def test_json_and_csv_agree(capsys):
    for args in (["sweep", "--step", "0.1"], ["dp", "--n", "5"], ["simulate", "--policy", "alg-t", "--n", "30",
                                                                   "--p", "0.3", "--trials", "5000"]):
        _, c, _ = run(args, capsys)
        _, j, _ = run(args + ["--format", "json"], capsys)
        rows = json.loads(j)["data"]
        for crow, jrow in zip(table(c), rows, strict=True):
            for key, value in jrow.items():
                if value is None:
                    assert crow[key] == ""
                elif isinstance(value, str):
                    assert crow[key] == value
                else:
                    assert float(crow[key]) == value


def test_metadata_allows_rerun(capsys):
    _, out, _ = run(["simulate", "--policy", "kmax", "--n", "40", "--p", "0.6", "--trials", "3000", "--seed", "5",
                     "--format", "json"], capsys)
    meta = json.loads(out)["metadata"]
    params = meta["params"]
    assert meta["command"] == "simulate" and meta["tool"].startswith("secsamp ")
    assert params["seed"] == 5 and params["trials"] == 3000 and params["policy"] == "kmax"
    assert meta["policy_params"] == {"k": 2}


def test_worker_variable_does_not_change_output():
    args = [sys.executable, "-m", "secretary_sampling", "simulate", "--policy", "alg-t", "--n", "100", "--p", "0.5",
            "--trials", "60000", "--seed", "11"]
    outs = []
    for workers in ("1", "4"):
        env = dict(os.environ, SECSAMP_WORKERS=workers)
        outs.append(subprocess.run(args, capture_output=True, text=True, env=env).stdout)
    assert outs[0] == outs[1] and outs[0]


@pytest.mark.parametrize(
    "args",
    [
        ["guarantee", "aos", "--p", "1"],
        ["guarantee", "ros", "--p", "1"],
        ["sweep", "--step", "0.2"],
        ["conflict", "census"],
        ["conflict", "strategy", "--start", "3"],
        ["conflict", "census", "--n", "30"],
        ["simulate", "--policy", "kmax", "--generator", "increasing-then-drop", "--n", "5", "--p", "0.5"],
        ["simulate", "--policy", "last-zero-kmax", "--generator", "uniform-random", "--n", "5", "--p", "0.5"],
    ],
)
def test_domain_errors_exit_two(args, capsys):
    code, out, err = run(args, capsys)
    assert code == 2 and out == ""
    assert err.startswith("secsamp: error:") and err.count("\n") == 1


@pytest.mark.parametrize("args", [["guarantee", "aos", "--p", "1.5"], ["guarantee"], ["thresholds", "--count", "0"]])
def test_usage_errors_exit_two(args, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(args)
    assert exc.value.code == 2


def test_non_convergence_exits_three(capsys):
    code, _, err = run(["thresholds", "--count", "3", "--tol", "1e-300"], capsys)
    assert code == 3 and "threshold" in err


def test_unwritable_destination(capsys):
    code, _, err = run(["gamma", "--output", "/nonexistent/dir/out.csv"], capsys)
    assert code == 2 and "cannot write" in err


def test_dot_export(capsys):
    code, out, _ = run(["conflict", "edges", "--n", "2", "--graph", "dot"], capsys)
    assert code == 0 and out == 'digraph conflict {\n  "0" -> "00";\n}\n'
