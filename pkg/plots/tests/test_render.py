import csv

import pytest

from aoicharts import ChartError, ChartSpec, render
from aoicharts.cli import main
from aoicharts.render import EXPECTED_COLUMNS, read_rows

HEADER = ",".join(EXPECTED_COLUMNS)


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EXPECTED_COLUMNS)
        writer.writerows(rows)


def k_sweep_rows():
    rows = []
    for policy, base in (("relax-truncate", 22.0),
                         ("greedy", 30.0),
                         ("relaxed-lower-bound", 21.2)):
        for i, k in enumerate((10, 50, 200)):
            cost = base - i * (0.3 if policy != "relaxed-lower-bound" else 0)
            rows.append(("sweep-k", policy, k, 0.02, max(1, round(0.02 * k)),
                         cost, 0.12, 0.02, 0.0005, 3, 10**6, 42, 1.5))
    return rows


def gamma_sweep_rows():
    rows = []
    for g in (0.02, 0.06, 0.10, 0.14, 0.18, 0.25):
        rate = min(g, 0.137)
        cost = 21.0 if g >= 0.14 else 21.0 + (0.14 - g) * 40
        rows.append(("sweep-gamma", "relax-truncate", 100, g,
                     max(1, round(g * 100)), cost, 0.1, rate, 0.0004, 3,
                     10**6, 42, 1.1))
        rows.append(("sweep-gamma", "greedy", 100, g, max(1, round(g * 100)),
                     cost * 1.35, 0.1, min(g, 0.8), 0.0004, 3, 10**6, 42,
                     0.9))
    return rows


def test_header_only_csv_is_an_error(tmp_path):
    path = tmp_path / "empty.csv"
    write_csv(path, [])
    out = tmp_path / "chart.svg"
    with pytest.raises(ChartError):
        render(ChartSpec(csv_path=path, kind="vs-k", out_path=out))
    assert not out.exists()


def test_schema_mismatch_names_column(tmp_path):
    path = tmp_path / "bad.csv"
    cols = [c for c in EXPECTED_COLUMNS if c != "avg_cost"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        writer.writerow(["x", "greedy", 10, 0.02, 1, 0.1, 0.02, 0.001, 3,
                         1000, 42, 1.0])
    with pytest.raises(ChartError, match="avg_cost"):
        read_rows(path)


def test_k_sweep_renders_three_series(tmp_path):
    path = tmp_path / "k.csv"
    write_csv(path, k_sweep_rows())
    out = tmp_path / "k.svg"
    result = render(ChartSpec(csv_path=path, kind="vs-k", out_path=out))
    assert out.exists()
    assert result.n_series == 3 and result.n_rows == 9
    text = out.read_text()
    assert "request-aware greedy" in text


def test_gamma_sweep_two_panel(tmp_path):
    path = tmp_path / "g.csv"
    write_csv(path, gamma_sweep_rows())
    out = tmp_path / "g.svg"
    result = render(ChartSpec(csv_path=path, kind="vs-gamma", out_path=out))
    assert result.n_series == 2
    text = out.read_text()
    assert "budget (clipped)" in text
    assert "command rate" in text


def test_re_render_is_byte_identical(tmp_path):
    path = tmp_path / "k.csv"
    write_csv(path, k_sweep_rows())
    out1 = tmp_path / "a.svg"
    out2 = tmp_path / "b.svg"
    render(ChartSpec(csv_path=path, kind="vs-k", out_path=out1))
    render(ChartSpec(csv_path=path, kind="vs-k", out_path=out2))
    assert out1.read_bytes() == out2.read_bytes()

    gpath = tmp_path / "g.csv"
    write_csv(gpath, gamma_sweep_rows())
    g1 = tmp_path / "g1.svg"
    g2 = tmp_path / "g2.svg"
    render(ChartSpec(csv_path=gpath, kind="vs-gamma", out_path=g1))
    render(ChartSpec(csv_path=gpath, kind="vs-gamma", out_path=g2))
    assert g1.read_bytes() == g2.read_bytes()


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(ChartError):
        ChartSpec(csv_path="x.csv", kind="pie", out_path="y.svg")


def test_cli_round_trip(tmp_path, capsys):
    path = tmp_path / "k.csv"
    write_csv(path, k_sweep_rows())
    out = tmp_path / "cli.svg"
    assert main([str(path), "--kind", "vs-k", "--out", str(out)]) == 0
    assert out.exists()
    assert "3 series" in capsys.readouterr().out

    bad = tmp_path / "hdr.csv"
    write_csv(bad, [])
    assert main([str(bad), "--kind", "vs-k", "--out",
                 str(tmp_path / "no.svg")]) == 1
    assert not (tmp_path / "no.svg").exists()
