import numpy as np

from msamp.cli import main
from msamp.experiment import ExperimentSpec
from msamp.model import SystemConfig, wyner_config


def _cfg(tmp_path, **kw):
    p = tmp_path / "c.cfg"
    assert main(["gen-config", "--L", "256", "--lam", "0.1,0.2", "--out", str(p), *kw.get("extra", [])]) == 0
    return p


def test_gen_config_loads(tmp_path):
    p = _cfg(tmp_path, extra=["--locations", "4"])
    c = SystemConfig.load(p)
    assert c.U == 4 and c.L == 256 and c.lam == [0.1, 0.2, 0.1, 0.2]


def test_run_deterministic(tmp_path):
    p = _cfg(tmp_path)
    a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
    args = ["run", "--config", str(p), "--lambda-grid", "0.1", "--trials", "1", "--mc", "20000", "--seed", "3"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert main(args + ["--out", str(c), "--threads", "2"]) == 0
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0].startswith("# msamp ") and "config=" in lines[0]
    assert len(lines) == 3
    header = lines[1].split(",")
    for col in ("md_emp", "md_inf", "fa_emp", "fa_inf", "mse_emp", "mse_inf", "pow_emp", "pow_inf",
                "genie_emp", "genie_inf"):
        assert col in header


def test_run_nu_grid_and_plot(tmp_path):
    p = _cfg(tmp_path)
    out, svg = tmp_path / "n.csv", tmp_path / "n.svg"
    assert main(["run", "--config", str(p), "--axis", "nu", "--nu-grid", "0.5,2", "--metrics", "rates",
                 "--mc", "20000", "--out", str(out), "--plot", str(svg)]) == 0
    rows = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert len(rows) == 3
    assert svg.read_text().lstrip().startswith("<?xml")


def test_se_base_case_row(tmp_path):
    cfg = wyner_config(256, [0.1, 0.1], 0.1, T=2).replace(sigma_u=[np.eye(4)] * 2)
    p = tmp_path / "i.cfg"
    cfg.save(p)
    out = tmp_path / "se.csv"
    assert main(["se", "--config", str(p), "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[2].startswith("1,1,1,1,1,")
    assert abs(float(rows[2].split(",")[7]) - 0.2) < 1e-12


def test_oracle_command(tmp_path):
    out = tmp_path / "o.csv"
    assert main(["oracle", "--N", "48", "--T", "2", "--seeds", "100", "--out", str(out)]) == 0
    body = out.read_text().splitlines()[2:]
    assert body and all(l.endswith(",pass") for l in body)


def test_bad_config_reports(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("L = 4\n")
    assert main(["se", "--config", str(p)]) == 2


def test_spec_points():
    base = wyner_config(64, [0.1, 0.1], 0.1, locations=4)
    pts = ExperimentSpec(base, "lambda", [0.1, 0.2], dict_kinds=("haar", "fourier")).points()
    assert len(pts) == 8
    assert pts[1][1].lam == [0.1, 0.2, 0.1, 0.2]
