import csv
import json

import numpy as np
import pytest

import hybridras.cli as cli
from hybridras.aitken import NonConstructible
from hybridras.cli import main, read_config, ConfigError
from conftest import DATA


def rows(path):
    with open(path) as fh:
        return [r for r in csv.reader(line for line in fh if not line.startswith("#"))]


def table_args(out, *extra):
    return [
        "--netlist", str(DATA / "rlc_fast.net"),
        "--partition", str(DATA / "source_emt.part"),
        "--out-dir", str(out),
        *extra,
    ]


def test_simulate_emt(tmp_path):
    code = main(["simulate", "--model", "emt", "--netlist", str(DATA / "rlc_base.net"),
                 "--dt", "2e-5", "--t-end", "0.1", "--out-dir", str(tmp_path)])
    assert code == 0
    r = rows(tmp_path / "emt.csv")
    assert len(r) == 1 + 5001
    assert r[0][0] == "t" and len(r[0]) == 15


def test_simulate_ts_writes_waveform(tmp_path):
    code = main(["simulate", "--model", "ts", "--netlist", str(DATA / "rlc_base.net"),
                 "--dt", "2e-3", "--t-end", "0.02", "--out-dir", str(tmp_path)])
    assert code == 0
    assert len(rows(tmp_path / "ts.csv")[0]) == 1 + 42
    assert len(rows(tmp_path / "ts_waveform.csv")[0]) == 1 + 14


def test_missing_netlist(tmp_path, capsys):
    code = main(["simulate", "--netlist", str(tmp_path / "none.net"), "--dt", "2e-5", "--t-end", "0.1"])
    assert code == 2
    assert "not found" in capsys.readouterr().err


def test_singular_netlist_is_numerical(tmp_path):
    bad = tmp_path / "bad.net"
    bad.write_text((DATA / "rlc_base.net").read_text().replace("free E-C2", ""))
    assert main(["simulate", "--netlist", str(bad), "--dt", "2e-5", "--t-end", "0.1", "--out-dir", str(tmp_path)]) == 3


def test_cosim_outputs(tmp_path):
    code = main(["cosim", *table_args(tmp_path, "--dt-emt", "2e-5", "--dt-ts", "2e-3", "--t-end", "0.01")])
    assert code == 0
    for name in ("emt.csv", "ts.csv", "assembled.csv", "convergence.csv", "summary.json"):
        assert (tmp_path / name).is_file()
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["steps"] == 5 and summary["nonconverged_steps"] == []


def test_cosim_without_acceleration_flags_divergence(tmp_path):
    code = main(["cosim", "--config", str(DATA / "divergent.cfg"), "--netlist", str(DATA / "rlc_fast.net"),
                 "--partition", str(DATA / "source_emt_p0.part"), "--accel", "none", "--k-max", "15",
                 "--t-end", "0.004", "--out-dir", str(tmp_path)])
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["nonconverged_steps"] == [0, 1]


def test_spectrum_table_corner(tmp_path):
    code = main(["spectrum", *table_args(tmp_path, "--dt-emt", "2e-4", "--dt-ts", "2e-2", "--alpha", "0%")])
    assert code == 0
    text = (tmp_path / "spectrum.csv").read_text()
    assert "# dt_ts = 2e-2" in text or "# dt_ts = 0.02" in text
    r = rows(tmp_path / "spectrum.csv")
    assert r[0] == ["re_lambda", "im_lambda", "abs_lambda"]
    lam = complex(float(r[1][0]), float(r[1][1]))
    assert lam.real == pytest.approx(-1.3882, rel=0.05)
    assert all(float(x[2]) <= float(r[1][2]) + 1e-12 for x in r[1:])


def test_spectrum_failure_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NonConstructible("difference matrix is zero")

    monkeypatch.setattr(cli, "error_operator", boom)
    assert main(["spectrum", *table_args(tmp_path, "--dt-emt", "2e-4", "--dt-ts", "2e-3")]) == 3


def test_sweep_single_cell_equals_spectrum(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", *table_args(a, "--dt-emt", "2e-4", "--alphas", "25", "--dt-ts-list", "2e-3")]) == 0
    assert main(["spectrum", *table_args(b, "--dt-emt", "2e-4", "--dt-ts", "2e-3", "--alpha", "25%")]) == 0
    cell = rows(a / "sweep.csv")[1]
    spec = rows(b / "spectrum.csv")[1]
    assert float(cell[2]) == pytest.approx(float(spec[0]), abs=1e-12)
    assert float(cell[3]) == pytest.approx(float(spec[1]), abs=1e-12)


def test_sweep_failed_cell_is_nan(tmp_path, monkeypatch, capsys):
    real = cli.error_operator
    calls = []

    def flaky(*a, **k):
        calls.append(1)
        if len(calls) == 2:
            raise NonConstructible("difference matrix is zero")
        return real(*a, **k)

    monkeypatch.setattr(cli, "error_operator", flaky)
    code = main(["sweep", *table_args(tmp_path, "--dt-emt", "2e-4", "--alphas", "0", "--dt-ts-list", "2e-2,2e-3")])
    assert code == 0
    r = rows(tmp_path / "sweep.csv")
    assert np.isnan(float(r[2][2])) and "NonConstructible" in r[2][5]
    assert "1 cell(s) failed" in capsys.readouterr().err


def test_compare_identical(tmp_path):
    main(["simulate", "--netlist", str(DATA / "rlc_base.net"), "--dt", "2e-5", "--t-end", "0.01",
          "--out-dir", str(tmp_path)])
    f = str(tmp_path / "emt.csv")
    assert main(["compare", f, f, "--out-dir", str(tmp_path)]) == 0
    r = rows(tmp_path / "compare.csv")
    assert len(r) == 15
    assert all(float(x[1]) == 0.0 and float(x[2]) == 0.0 for x in r[1:])


def test_compare_unknown_label(tmp_path):
    main(["simulate", "--netlist", str(DATA / "rlc_base.net"), "--dt", "2e-5", "--t-end", "0.01",
          "--out-dir", str(tmp_path)])
    f = str(tmp_path / "emt.csv")
    assert main(["compare", f, f, "--variables", "v3,v99", "--out-dir", str(tmp_path)]) == 2


def test_compare_across_grids(tmp_path):
    fine, coarse = tmp_path / "f", tmp_path / "c"
    main(["simulate", "--netlist", str(DATA / "rlc_base.net"), "--dt", "2e-5", "--t-end", "0.02", "--out-dir", str(fine)])
    main(["simulate", "--netlist", str(DATA / "rlc_base.net"), "--dt", "2e-4", "--t-end", "0.02", "--out-dir", str(coarse)])
    traj_c = cli.Trajectory.from_csv(coarse / "emt.csv")
    traj_f = cli.Trajectory.from_csv(fine / "emt.csv")
    (name, linf, l2), = cli.compare_trajectories(traj_c, traj_f, ["v4"])
    direct = np.abs(traj_c.column("v4") - traj_f.column("v4")[::10]).max()
    assert linf == pytest.approx(direct)


@pytest.mark.parametrize(
    "extra",
    [
        ["--alpha", "abc"],
        ["--alpha", "150%"],
        ["--tol", "-1"],
        ["--dt-ts", "3e-4"],
        ["--harmonics", "0,x"],
    ],
)
def test_config_errors(tmp_path, extra):
    assert main(["cosim", *table_args(tmp_path, "--dt-emt", "2e-4", "--dt-ts", "2e-3", "--t-end", "2e-3", *extra)]) == 2


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\ndt_emt = 2e-4\ndt-ts = 2e-3  # trailing\n")
    assert read_config(cfg) == {"dt_emt": "2e-4", "dt_ts": "2e-3"}
    cfg.write_text("colour = blue\n")
    with pytest.raises(ConfigError):
        read_config(cfg)
    cfg.write_text("just words\n")
    with pytest.raises(ConfigError):
        read_config(cfg)


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"netlist = {DATA / 'rlc_fast.net'}\npartition = {DATA / 'source_emt.part'}\n"
                   "dt_emt = 2e-4\ndt_ts = 2e-2\n")
    assert main(["spectrum", "--config", str(cfg), "--dt-ts", "2e-3", "--out-dir", str(tmp_path)]) == 0
    r = rows(tmp_path / "spectrum.csv")
    assert float(r[1][0]) == pytest.approx(-0.2537, rel=0.05)
