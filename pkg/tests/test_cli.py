import csv

import pytest

from rtsched.cli import load_config, main


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(
        "K: 6\n"
        "lambdas: [0.2, 0.4]\n"
        "p: 0.6\n"
        "B: 2\n"
        "delta_max: 8\n"
        "gamma: 0.25\n"
        "policy: relax-truncate\n"
        "episodes: 1\n"
        "slots: 2000\n"
        "seed: 5\n"
        "theta: 1.0e-6\n"
    )
    return path


def test_load_config_fields(config_file):
    cfg = load_config(str(config_file))
    assert cfg.K == 6
    assert cfg.lambdas == (0.2, 0.4)
    assert cfg.budget == 2
    cfg2 = load_config(str(config_file), seed=99)
    assert cfg2.seed == 99


def test_simulate_writes_csv(config_file, tmp_path, capsys):
    out = tmp_path / "rows.csv"
    rc = main(["simulate", str(config_file), "--out", str(out)])
    assert rc == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert rows[0]["policy"] == "relax-truncate"
    assert int(rows[0]["N"]) == 2
    assert capsys.readouterr().out.startswith("experiment,policy,")


def test_solve_prints_bundle(config_file, capsys):
    rc = main(["solve", str(config_file)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "fleet command rate" in out


def test_verify_exit_code(config_file):
    assert main(["verify", str(config_file)]) == 0


def test_sweep_subcommand(config_file, tmp_path):
    out = tmp_path / "sweep.csv"
    rc = main(["sweep", str(config_file), "--axis", "k",
               "--values", "4", "6", "--kinds", "greedy", "--out", str(out)])
    assert rc == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["K"]) for r in rows] == [4, 6]
    assert {r["experiment"] for r in rows} == {"sweep-k"}


def test_compare_subcommand(config_file, capsys):
    rc = main(["compare", str(config_file), "--kinds", "greedy",
               "relax-truncate"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3  # header + two kinds
