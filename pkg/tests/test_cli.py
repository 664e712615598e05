import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from walkoverlap.analytic import phi_series, phi_value
from walkoverlap.cli import main
from walkoverlap.experiment import CSV_COLUMNS


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_scaling_table(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["scaling", "--dim", "1", "--xi-min", "0", "--xi-max", "3", "--points", "61",
                 "--out", str(out)]) == 0
    rows = read_rows(out)
    assert len(rows) == 61 and float(rows[0]["phi"]) == 1.0
    assert abs(float(rows[20]["phi"]) - phi_value(1.0, 1)) < 1e-10


def test_scaling_quadrature_matches_closed(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["scaling", "--dim", "3", "--points", "7", "--out", str(a)])
    main(["scaling", "--dim", "3", "--points", "7", "--method", "quadrature", "--out", str(b)])
    for ra, rb in zip(read_rows(a), read_rows(b)):
        assert abs(float(ra["phi"]) - float(rb["phi"])) < 1e-8


def test_scaling_series(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["scaling", "--dim", "2", "--method", "series", "--xi-max", "0.2", "--points", "5",
                 "--out", str(out)]) == 0
    for r in read_rows(out):
        x = float(r["xi"])
        assert float(r["phi"]) == phi_series(x, 2)
        assert abs(float(r["error_estimate"]) - abs(phi_series(x, 2) - phi_value(x, 2))) < 1e-15


def test_scaling_divergence(capsys):
    assert main(["scaling", "--dim", "4"]) == 2
    assert "no scaling function exists for d >= 4" in capsys.readouterr().err


def test_scaling_nonconvergence(tmp_path):
    assert main(["scaling", "--dim", "1.5", "--method", "quadrature", "--tol", "1e-300",
                 "--points", "2", "--out", str(tmp_path / "x.csv")]) == 1
    assert not (tmp_path / "x.csv").exists()


def test_simulate_byte_identical(tmp_path):
    outs = []
    for k, w in enumerate((1, 2, 8, 1)):
        prefix = tmp_path / f"run{k}"
        assert main(["simulate", "--dim", "1", "--radius", "5", "--steps", "1024", "--reals", "4096",
                     "--seed", "7", "--workers", str(w), "--out-prefix", str(prefix)]) == 0
        outs.append((tmp_path / f"run{k}.csv").read_bytes())
        man = json.loads((tmp_path / f"run{k}.manifest.json").read_text())
        assert man["master_seed"] == 7
    assert all(o == outs[0] for o in outs)


def test_simulate_defaults_and_enumeration(tmp_path):
    prefix = tmp_path / "e"
    assert main(["simulate", "--dim", "1", "--radius", "0", "--steps", "1", "--reals", "1048576",
                 "--seed", "3", "--out-prefix", str(prefix)]) == 0
    (row,) = [r for r in read_rows(tmp_path / "e.csv") if r["t"] == "1"]
    assert abs(float(row["mean_w2"]) - 1.5) <= 3 * float(row["stderr_w2"])

    prefix = tmp_path / "d"
    assert main(["simulate", "--dim", "2", "--steps", "8", "--reals", "10", "--seed", "3",
                 "--out-prefix", str(prefix)]) == 0
    assert sorted({int(r["R"]) for r in read_rows(tmp_path / "d.csv")}) == [0, 5, 10, 20, 50]


def test_simulate_requires_seed():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--dim", "1", "--steps", "8", "--reals", "10", "--out-prefix", "x"])
    assert exc.value.code == 2


def test_simulate_failure_leaves_no_files(tmp_path, monkeypatch):
    import walkoverlap.cli as cli

    def boom(*a, **k):
        raise MemoryError("simulated")

    monkeypatch.setattr(cli, "write_results_csv", boom)
    prefix = tmp_path / "f"
    assert main(["simulate", "--dim", "1", "--radius", "2", "--steps", "8", "--reals", "10",
                 "--seed", "1", "--out-prefix", str(prefix)]) == 1
    assert list(tmp_path.iterdir()) == []


def synthetic_results(path, dim, seps=(5, 10), cps=(4, 16, 64, 256)):
    """Results whose collapse reproduces the analytic curve exactly."""
    lines = [",".join(CSV_COLUMNS)]
    for R in (0,) + tuple(seps):
        for t in cps:
            xi = R / math.sqrt(2 * t)
            m = 1.0 if R == 0 else (phi_value(xi, dim) if dim < 4 else 0.5)
            lines.append(f"{dim},{R},{t},{xi!r},{m!r},0.01,10,0.1,100")
    path.write_text("\n".join(lines) + "\n")


def test_compare_synthetic_pass(tmp_path):
    res, rep = tmp_path / "r.csv", tmp_path / "rep.json"
    synthetic_results(res, 2)
    assert main(["compare", "--results", str(res), "--out", str(rep)]) == 0
    doc = json.loads(rep.read_text())
    assert doc["passed"] is True
    pulls = [p["pull"] for s in doc["series"] for p in s["points"]]
    assert pulls and all(p == 0.0 for p in pulls)


def test_compare_d4_refused(tmp_path, capsys):
    res, rep = tmp_path / "r.csv", tmp_path / "rep.json"
    synthetic_results(res, 4)
    assert main(["compare", "--results", str(res), "--out", str(rep)]) == 3
    assert "no scaling function" in capsys.readouterr().err
    assert "no scaling function" in json.loads(rep.read_text())["error"]


def test_compare_malformed(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("")
    assert main(["compare", "--results", str(bad)]) == 1


def test_persistence_command(tmp_path, capsys):
    out = tmp_path / "q.csv"
    assert main(["persistence", "--dim", "3", "--steps", "1024", "--reals", "2000", "--seed", "5",
                 "--out", str(out)]) == 0
    rows = read_rows(out)
    assert rows[0]["t"] == "1" and float(rows[0]["q_hat"]) == 1.0
    assert 0 < float(rows[-1]["q_hat"]) < 1
    assert "slope" in capsys.readouterr().err


def test_plot_single_analytic(tmp_path):
    out = tmp_path / "p.svg"
    assert main(["plot", "--analytic", "--dim", "1", "--out", str(out)]) == 0
    text = out.read_text()
    assert text.startswith("<svg") and text.count("<polyline") == 1
    assert ">xi</text>" in text and ">Phi</text>" in text


def test_plot_five_series_and_determinism(tmp_path):
    res = tmp_path / "r.csv"
    synthetic_results(res, 1, seps=(5, 10, 20, 50))
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    for out in (a, b):
        assert main(["plot", "--results", str(res), "--analytic", "--logx", "--out", str(out)]) == 0
    text = a.read_text()
    assert text.count('class="series"') == 5
    assert a.read_bytes() == b.read_bytes()


def test_plot_empty_csv(tmp_path):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    assert main(["plot", "--results", str(empty), "--out", str(tmp_path / "x.svg")]) == 1


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "walkoverlap", "scaling", "--dim", "5"],
                       capture_output=True, text=True)
    assert r.returncode == 2
