import csv
import json
import math
import subprocess
import sys

import pytest

from noisyguess.cli import main


def write_problem(path, **overrides):
    data = {"version": 1, "source": [0.25, 0.75], "channel": [[0.65, 0.35], [0.35, 0.65]], "rho": 1.0}
    data.update(overrides)
    path.write_text(json.dumps(data))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_exponent_flat(tmp_path):
    out = tmp_path / "r.json"
    assert main(["exponent", write_problem(tmp_path / "p.json"), "--output", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["exponent"] == pytest.approx(0.623810, abs=1e-6)
    assert report["flat"] is True
    assert report["units"] == "nats"
    assert report["version"] == 1


def test_exponent_penalized(tmp_path):
    out = tmp_path / "r.json"
    path = write_problem(tmp_path / "p.json", channel=[[0.55, 0.45], [0.45, 0.55]])
    assert main(["exponent", path, "--output", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["exponent"] == pytest.approx(math.log(0.25 / 0.45 + 0.75 / 0.55), abs=1e-8)
    assert report["flat"] is False


def test_exponent_rho_zero_and_bits(tmp_path):
    out = tmp_path / "r.json"
    assert main(["exponent", write_problem(tmp_path / "p.json"), "--rho", "0", "--output", str(out)]) == 0
    assert json.loads(out.read_text())["exponent"] == 0.0
    assert main(["exponent", write_problem(tmp_path / "p.json"), "--bits", "--output", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["units"] == "bits"
    assert report["exponent"] == pytest.approx(0.6238107163648713 / math.log(2), abs=1e-8)


def test_side_info_reported(tmp_path):
    out = tmp_path / "r.json"
    path = write_problem(tmp_path / "p.json", side_info_joint=[[0.2, 0.05], [0.15, 0.6]])
    assert main(["exponent", path, "--output", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["exponent_with_side_info"] <= report["exponent"] + 1e-9


def test_identity_channel_reports_warning(tmp_path):
    out = tmp_path / "r.json"
    path = write_problem(tmp_path / "p.json", channel=[[1.0, 0.0], [0.0, 1.0]])
    assert main(["exponent", path, "--output", str(out)]) == 0
    assert json.loads(out.read_text())["warnings"]


@pytest.mark.parametrize(
    "overrides",
    [
        {"channel": [[0.8, 0.1], [0.1, 0.9]]},
        {"version": 2},
        {"source": [0.5, 0.6]},
        {"channel": [[0.5, 0.25, 0.25], [0.1, 0.1, 0.8]]},
        {"rho": -1},
    ],
)
def test_bad_problem_exits_1(tmp_path, overrides):
    assert main(["exponent", write_problem(tmp_path / "p.json", **overrides)]) == 1


def test_malformed_json_exits_1(tmp_path):
    path = tmp_path / "p.json"
    path.write_text("{not json")
    assert main(["exponent", str(path)]) == 1


def test_unreachable_exits_2(tmp_path):
    path = write_problem(tmp_path / "p.json", source=[0.2, 0.3, 0.5], channel=[[0.5, 0.5, 0.0], [0.2, 0.8, 0.0]])
    assert main(["exponent", path]) == 2


def test_figure_q(tmp_path):
    out = tmp_path / "fq.csv"
    assert main(["figure-q", "--p", "0.25", "--rho", "1", "--steps", "11", "--output", str(out)]) == 0
    raw = out.read_bytes()
    assert raw.startswith(b"q,exponent_nats,flat\n") and b"\r" not in raw
    rows = read_csv(out)
    assert len(rows) == 12  # 11 grid points plus the critical marker
    qs = [float(r["q"]) for r in rows]
    assert qs == sorted(qs)
    assert any(abs(q - 0.366025404) < 1e-9 for q in qs)
    assert float(rows[0]["exponent_nats"]) == pytest.approx(0.623810716, abs=1e-9)
    assert float(rows[-1]["exponent_nats"]) == pytest.approx(math.log(2), abs=1e-8)
    assert {r["flat"] for r in rows} == {"true", "false"}


def test_figure_q_general_rho_marker(tmp_path):
    out = tmp_path / "fq.csv"
    assert main(["figure-q", "--rho", "2", "--steps", "6", "--output", str(out)]) == 0
    qs = [float(r["q"]) for r in read_csv(out)]
    # tilted law at rho = 2: P^{1/3} normalized; flatness ends at its smaller entry
    a, b = 0.25 ** (1 / 3), 0.75 ** (1 / 3)
    assert any(abs(q - a / (a + b)) < 1e-8 for q in qs)


def test_figure_q_bad_range(tmp_path):
    assert main(["figure-q", "--q-min", "0.3", "--q-max", "0.2"]) == 1
    assert main(["figure-q", "--q-max", "0.7"]) == 1


def test_figure_rho(tmp_path):
    out = tmp_path / "fr.csv"
    assert main(["figure-rho", "--steps", "7", "--rho-max", "3", "--output", str(out)]) == 0
    rows = read_csv(out)
    assert list(rows[0].keys()) == ["rho", "exponent_nats", "flat"]
    assert float(rows[0]["exponent_nats"]) == 0.0
    one = [r for r in rows if float(r["rho"]) == 1.0][0]
    assert float(one["exponent_nats"]) == pytest.approx(0.623810716, abs=1e-8)
    assert any(abs(float(r["rho"]) - 0.774705501) < 1e-8 for r in rows)


def test_figure_byte_stable(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["figure-rho", "--steps", "5", "--output", str(a)])
    main(["figure-rho", "--steps", "5", "--output", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_simulate_exact(tmp_path):
    out = tmp_path / "s.json"
    path = write_problem(tmp_path / "p.json", channel=[[0.9, 0.1], [0.1, 0.9]])
    assert main(["simulate", path, "--n", "1", "--v", "0,1", "--output", str(out)]) == 0
    assert json.loads(out.read_text())["value"] == pytest.approx(10 / 3, abs=1e-9)


def test_simulate_rho_zero(tmp_path):
    out = tmp_path / "s.json"
    assert main(["simulate", write_problem(tmp_path / "p.json"), "--n", "3", "--rho", "0", "--output", str(out)]) == 0
    assert json.loads(out.read_text())["value"] == 1.0


def test_simulate_mc_byte_identical(tmp_path):
    path = write_problem(tmp_path / "p.json")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["simulate", path, "--n", "3", "--mode", "mc", "--trials", "20000", "--seed", "42"]
    assert main(args + ["--output", str(a)]) == 0
    assert main(args + ["--workers", "3", "--output", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_universal_and_list(tmp_path):
    path = write_problem(tmp_path / "p.json")
    out = tmp_path / "s.json"
    assert main(["simulate", path, "--n", "4", "--strategy", "universal", "--output", str(out)]) == 0
    assert json.loads(out.read_text())["strategy"]["kind"] == "universal"
    lst = tmp_path / "l.json"
    lst.write_text(json.dumps({"guesses": [[1, 1], [0, 1], [1, 0], [0, 0]]}))
    assert main(["simulate", path, "--n", "2", "--strategy", "list", "--list-file", str(lst), "--output", str(out)]) == 0
    assert json.loads(out.read_text())["value"] > 1.0
    assert main(["simulate", path, "--n", "2", "--strategy", "list"]) == 1


def test_simulate_infinite_exits_2(tmp_path):
    path = write_problem(tmp_path / "p.json", channel=[[1.0, 0.0], [0.0, 1.0]])
    assert main(["simulate", path, "--n", "2", "--v", "1,0"]) == 2


def test_verify_quick(tmp_path, capsys):
    out = tmp_path / "v.json"
    assert main(["verify", "--level", "quick", "--output", str(out)]) == 0
    summary = json.loads(out.read_text())
    assert summary["passed"] and not summary["failures"]
    assert "residual=" in capsys.readouterr().out


def test_verify_with_problem(tmp_path):
    assert main(["verify", "--problem", write_problem(tmp_path / "p.json")]) == 0


def test_verify_corrupted_channel_exits_1(tmp_path):
    path = write_problem(tmp_path / "p.json", channel=[[0.8, 0.1], [0.1, 0.9]])
    assert main(["verify", "--problem", path]) == 1


def test_verify_failure_exits_4(monkeypatch, capsys):
    from noisyguess import cli
    from noisyguess.verify import CheckResult

    monkeypatch.setattr(cli, "run_checks", lambda *a, **k: [CheckResult("broken", 1.0, 1e-9, False)])
    assert main(["verify"]) == 4
    assert json.loads(capsys.readouterr().err)["failures"][0]["name"] == "broken"


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "noisyguess", "figure-rho", "--steps", "3"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == "rho,exponent_nats,flat"
