import csv
import json
import math
from pathlib import Path

import pytest

from extremap.cli import main, parse_count, parse_grid, parse_point
from fractions import Fraction as F


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    comments = [l for l in lines if l.startswith("#")]
    rows = list(csv.DictReader(l for l in lines if not l.startswith("#")))
    return comments, rows


def test_parsers():
    assert parse_count("1e3") == 1000
    assert parse_count("100000") == 100000
    with pytest.raises(Exception):
        parse_count("1.5")
    assert parse_point("1/3") == F(1, 3)
    assert parse_point("0.25") == F(1, 4)
    assert parse_grid("1/3,0.5") == [F(1, 3), F(1, 2)]


def test_ei_command_exact_values(tmp_path):
    rc = main(["ei", "--zeta", "1/3", "--eps", "1/100,1/50", "--q", "2",
               "--out", str(tmp_path)])
    assert rc == 0
    comments, rows = read_csv(tmp_path / "ei.csv")
    assert any("schema_version" in c for c in comments)
    assert any('"zeta": "1/3"' in c for c in comments)
    assert [r["theta_n_exact"] for r in rows] == ["3/4", "3/4"]
    assert rows[0]["theta_limit_exact"] == "3/4"
    payload = json.loads((tmp_path / "ei.json").read_text())
    assert payload["schema_version"] == 1
    assert payload["config"]["command"] == "ei"


def test_missing_seed_is_usage_error(tmp_path):
    rc = main(["evl", "--zeta", "1/3", "--n", "100", "--out", str(tmp_path)])
    assert rc == 2


def test_tau_zero_rejected(tmp_path):
    rc = main(["evl", "--zeta", "1/3", "--n", "100", "--tau", "0",
               "--seed", "1", "--out", str(tmp_path)])
    assert rc == 2


def test_eps_quarter_rejected(tmp_path):
    rc = main(["hts", "--zeta", "1/3", "--eps", "0.3", "--tau", "1",
               "--trials", "100", "--seed", "1", "--out", str(tmp_path)])
    assert rc == 2


def test_infeasible_n_rejected(tmp_path):
    rc = main(["bounds", "--zeta", "1/3", "--bracket", "sharp-evl", "--n", "2",
               "--out", str(tmp_path)])
    assert rc == 2


def test_evl_outputs_and_determinism(tmp_path):
    args = ["evl", "--map", "doubling", "--zeta", "1/3", "--tau", "1",
            "--n", "100,400", "--trials", "2e4", "--seed", "7",
            "--out", str(tmp_path)]
    assert main(args) == 0
    first = (tmp_path / "evl.csv").read_bytes()
    first_json = (tmp_path / "evl.json").read_bytes()
    assert main(args) == 0
    assert (tmp_path / "evl.csv").read_bytes() == first
    assert (tmp_path / "evl.json").read_bytes() == first_json
    comments, rows = read_csv(tmp_path / "evl.csv")
    assert [r["scale"] for r in rows] == ["100", "400"]
    for r in rows:
        assert 0 <= float(r["estimate"]) <= 1
        assert float(r["bracket"]) > 0
        assert r["seed"] == "7"
    cfg = json.loads(comments[1].split("config: ", 1)[1])
    assert cfg["trials"] == 20000 and cfg["seed"] == 7


def test_hts_command_tau_zero_row(tmp_path):
    rc = main(["hts", "--zeta", "1/3", "--eps", "1/40", "--tau", "0,1",
               "--trials", "1e4", "--seed", "3", "--out", str(tmp_path)])
    assert rc == 0
    _, rows = read_csv(tmp_path / "hts.csv")
    assert float(rows[0]["estimate"]) == 1.0


def test_escape_command(tmp_path):
    rc = main(["escape", "--zeta", "0", "--eps", "1/25", "--trials", "1e5",
               "--seed", "7", "--out", str(tmp_path)])
    assert rc == 0
    _, rows = read_csv(tmp_path / "escape.csv")
    row = rows[0]
    assert float(row["PB"]) == pytest.approx(0.08)
    assert abs(float(row["rate"]) - float(row["spectral"])) \
        / float(row["spectral"]) < 0.15
    assert float(row["window_lower"]) <= float(row["spectral"])
    assert row["degenerate_window"] in ("True", "False")


def test_pressure_command(tmp_path):
    rc = main(["pressure", "--map", "tripling", "--potential", "geometric",
               "--n-max", "6", "--out", str(tmp_path)])
    assert rc == 0
    _, rows = read_csv(tmp_path / "pressure.csv")
    assert all(float(r["Z_n"]) == 1.0 for r in rows)
    assert all(float(r["pressure"]) == 0.0 for r in rows)
    rc = main(["pressure", "--map", "tripling", "--potential", "zero",
               "--n-max", "4", "--out", str(tmp_path)])
    _, rows = read_csv(tmp_path / "pressure.csv")
    assert all(abs(float(r["pressure"]) - math.log(3)) < 1e-12 for r in rows)


def test_check_command(tmp_path):
    rc = main(["check", "--zeta", "1/3", "--q", "2", "--n", "256,512,1024",
               "--seed", "5", "--prop-configs", "3", "--out", str(tmp_path)])
    assert rc == 0
    _, rows = read_csv(tmp_path / "check.csv")
    dvals = [float(r["value"]) for r in rows if r["kind"] == "dprime"]
    assert dvals == sorted(dvals, reverse=True)
    props = [r for r in rows if r["kind"] == "proposition"]
    assert len(props) == 3 and all(r["ok"] == "True" for r in props)


def test_bounds_command_theorems(tmp_path):
    rc = main(["bounds", "--zeta", "1/3", "--bracket", "general", "--n", "512",
               "--out", str(tmp_path)])
    assert rc == 0
    _, rows = read_csv(tmp_path / "bounds.csv")
    total = [r for r in rows if r["term"] == "total"]
    assert len(total) == 1 and float(total[0]["value"]) > 0
    rc = main(["bounds", "--zeta", "1/3", "--bracket", "sharp-hts", "--eps", "1/100",
               "--out", str(tmp_path)])
    assert rc == 0
    _, rows = read_csv(tmp_path / "bounds.csv")
    assert any(r["term"] == "exponent_shift" for r in rows)
    # gamma = 0 reduction: mixing and recurrence terms vanish
    rc = main(["bounds", "--zeta", "1/3", "--bracket", "sharp-evl", "--n", "512",
               "--decay-c0", "0", "--out", str(tmp_path)])
    assert rc == 0
    _, rows = read_csv(tmp_path / "bounds.csv")
    by_term = {r["term"]: float(r["value"]) for r in rows}
    assert by_term["mixing"] == 0.0
    assert by_term["recurrence"] == 0.0


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("zeta = 1/3\nn = 100\ntrials = 1e4\nseed = 9\n")
    rc = main(["evl", "--config", str(cfg), "--zeta", "1/2",  # flag wins
               "--n", "100", "--out", str(tmp_path)])
    assert rc == 0
    payload = json.loads((tmp_path / "evl.json").read_text())
    assert payload["config"]["zeta"] == "1/2"
    assert payload["config"]["trials"] == 10000
    assert payload["config"]["seed"] == 9


def test_env_var_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("EXTREMAP_OUT", str(tmp_path / "envout"))
    rc = main(["ei", "--zeta", "0", "--eps", "1/100"])
    assert rc == 0
    assert (tmp_path / "envout" / "ei.csv").exists()


def test_escape_dump_ulam(tmp_path):
    rc = main(["escape", "--zeta", "0", "--eps", "1/25", "--trials", "1e5",
               "--seed", "7", "--dump-ulam", "--out", str(tmp_path)])
    assert rc == 0
    rows = (tmp_path / "ulam.csv").read_text().splitlines()
    assert len(rows) == 100
    assert sum(float(v) for v in rows[0].split(",")) == pytest.approx(1.0)


def test_check_violation_exits_one(tmp_path, monkeypatch):
    # fault injection: force the domination bound below the true gap
    import extremap.cli as cli_mod

    def broken_bound(map_, B, A, q, n, budget=10 ** 6):
        return -1

    monkeypatch.setattr(cli_mod, "annuli_gap_bound", broken_bound)
    rc = main(["check", "--zeta", "1/3", "--q", "2", "--n", "256",
               "--seed", "5", "--prop-configs", "2", "--out", str(tmp_path)])
    assert rc == 1


def test_budget_exceeded_exit_code(tmp_path):
    # non-uniform map: the exact recurrence sums need iterated preimages,
    # whose component count explodes at this horizon
    rc = main(["bounds", "--map", "widths:1/2,1/4,1/4", "--zeta", "0",
               "--bracket", "general", "--n", "4096", "--budget", "20000",
               "--out", str(tmp_path)])
    assert rc == 3
