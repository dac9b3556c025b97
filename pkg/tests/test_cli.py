import csv
import hashlib
import json

import pytest

from drainage import cli

SMALL = {
    "path": ["--steps", "20"],
    "regen": ["--replicas", "6", "--j", "3", "--sep", "4"],
    "coalesce": ["--replicas", "20", "--cap", "200", "--fit-min", "0", "--fit-max", "0"],
    "census": ["--replicas", "2", "--extent", "10", "--horizon", "200", "--checkpoints", "4"],
    "martingale": ["--replicas", "10", "--j", "2", "--sep", "3"],
    "lyapunov": ["--d", "3", "--replicas", "20", "--x", "10", "0"],
    "domination": ["--replicas", "5", "--steps", "50"],
    "scaling": ["--replicas", "20", "--j", "50"],
    "web-b1": ["--n", "3", "--t", "0.5", "--replicas", "2", "--grid", "2", "2", "--eps", "0.1", "0.9",
               "--gamma0", "1.85", "--sigma0", "0.85"],
    "web-e1": ["--n", "3", "--t", "0.5", "--replicas", "3", "--gamma0", "1.85", "--sigma0", "0.85"],
    "density": ["--L", "50", "--t", "1", "10", "100"],
}


def _run(cmd, out, *extra):
    return cli.main([cmd, "--seed", "3", "--out", str(out)] + SMALL[cmd] + list(extra))


def _data(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "manifest.json"}


@pytest.mark.parametrize("cmd", sorted(SMALL))
def test_every_subcommand_runs_and_is_reproducible(cmd, tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert _run(cmd, a) == 0
    assert _run(cmd, b) == 0
    assert _run(cmd, c, "--workers", "2") == 0
    assert _data(a) == _data(b) == _data(c)
    man = json.loads((a / "manifest.json").read_text())
    assert man["status"] == "ok" and man["config"]["command"] == cmd
    for name, blob in _data(a).items():
        assert man["checksums"][name] == hashlib.sha256(blob).hexdigest()


def test_regen_header_and_rows(tmp_path):
    assert _run("regen", tmp_path) == 0
    with open(tmp_path / "regen.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["replica", "j", "tau_steps", "T_time", "width"]
    assert len(rows) == 1 + 6 * 3


def test_domination_reports_no_violations(tmp_path):
    assert _run("domination", tmp_path) == 0
    assert json.loads((tmp_path / "summary.json").read_text())["violations"] == 0


def test_usage_errors_exit_two(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["path", "--bogus"])
    assert exc.value.code == 2
    assert cli.main(["lyapunov", "--d", "2", "--replicas", "5", "--out", str(tmp_path)]) == 2
    assert cli.main(["path", "--p", "1.5", "--out", str(tmp_path)]) == 2


def test_budget_exhaustion_exits_three_with_partial_output(tmp_path):
    code = cli.main(["regen", "--replicas", "2", "--j", "50", "--step-cap", "3", "--out", str(tmp_path)])
    assert code == 3
    assert json.loads((tmp_path / "manifest.json").read_text())["status"] == "budget_exhausted"
    assert (tmp_path / "regen.csv").exists()


def test_workers_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.WORKERS_ENV, "2")
    assert _run("path", tmp_path) == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["config"]["workers"] == 2
