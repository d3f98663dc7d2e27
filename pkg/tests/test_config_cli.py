import csv
import json
import math

import numpy as np
import pytest

from hestondg import cli
from hestondg.config import PRESETS, ConfigError, build, load_file, resolve
from hestondg.dg_space import DGSpace
from hestondg.solver import initial_solution

SMALL = ["--n-v", "4", "--n-x", "8", "--dt", "0.05"]


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_build(name):
    run = build(resolve(name))
    assert run.problem.params.validate() is run.problem.params
    assert run.mesh().n_triangles == 2 * run.mesh_size[0] * run.mesh_size[1]


def test_preset_mesh_sizes():
    assert (PRESETS["butterfly"]["n_v"], PRESETS["butterfly"]["n_x"]) == (35, 128)
    d = PRESETS["table3"]
    assert d["domain.x_min"] + math.log(123.4) == pytest.approx(2.990790)


def test_yaml_and_json_files(tmp_path):
    (tmp_path / "a.yaml").write_text("preset: table1\nK: 110\ndomain:\n  v_max: 2.0\nmc:\n  paths: 1000\n")
    cfg = resolve(path=tmp_path / "a.yaml")
    assert cfg["K"] == 110.0 and cfg["domain.v_max"] == 2.0 and cfg["mc.paths"] == 1000
    (tmp_path / "b.json").write_text(json.dumps({"K": 120, "scheme": "cn"}))
    cfg = resolve("table1", tmp_path / "b.json", {"K": "130"})
    assert cfg["K"] == 130.0 and cfg["scheme"] == "cn"
    (tmp_path / "c.yaml").write_text("")
    assert load_file(tmp_path / "c.yaml") == {}
    (tmp_path / "d.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_file(tmp_path / "d.yaml")


@pytest.mark.parametrize(
    "overrides",
    [
        {"kappa_": 1.0},
        {"n_v": "3.5"},
        {"mc.antithetic": "maybe"},
        {"sigma": 0.0},
        {"theta": -0.1},
        {"rho": 1.0},
        {"degree": 3},
        {"scheme": "leapfrog"},
        {"option": "barrier"},
        {"dt": 0.0},
        {"diagonal": "cross"},
        {"d_minus_variance": "v_mid"},
        {"example": 5},
    ],
)
def test_invalid_configs_rejected(overrides):
    with pytest.raises(ConfigError):
        build(resolve("table1", overrides=overrides))


def test_unknown_preset_and_missing_keys():
    with pytest.raises(ConfigError):
        resolve("table9")
    with pytest.raises(ConfigError):
        build({"kappa": 1.0})
    with pytest.raises(ConfigError):
        build(resolve("table1", overrides={"option": "butterfly", "K1": 90.0, "K2": 100.0}))


def test_adaptive_config_validation():
    run = build(resolve("table3"), adaptive=True)
    assert run.mesh_size is None and run.mesh().n_triangles == 2 * 16 * 16
    with pytest.raises(ConfigError):
        build(resolve("table3", overrides={"adapt.theta_mark": 1.0}), adaptive=True)
    with pytest.raises(ConfigError):
        build(resolve("table3", overrides={"adapt.eps": 0.0}), adaptive=True)


def test_cli_zero_vol_exits_nonzero(capsys):
    code = cli.main(["price", "--preset", "table1", "--set", "sigma=0", "--no-mc", *SMALL])
    assert code == cli.EXIT_CONFIG
    assert "sigma" in capsys.readouterr().err


def test_cli_bad_set_syntax():
    assert cli.main(["price", "--set", "sigma", "--no-mc", *SMALL]) == cli.EXIT_CONFIG


def test_cli_price_csv_and_rerun_is_bit_identical(tmp_path):
    args = ["price", "--preset", "table1", *SMALL, "--paths", "2000", "--seed", "4", "--set", "mc.steps=10"]
    assert cli.main(args + ["--out", str(tmp_path / "a.csv")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b.csv")]) == 0
    rows = read_csv(tmp_path / "a.csv")
    assert len(rows) == 1
    assert float(rows[0]["analytic_price"]) == pytest.approx(15.938, abs=1e-3)
    a = [r.pop("time_pde_s") and r.pop("time_analytic_s") and r.pop("time_mc_s") and r for r in rows]
    b = [r.pop("time_pde_s") and r.pop("time_analytic_s") and r.pop("time_mc_s") and r for r in read_csv(tmp_path / "b.csv")]
    assert a == b


def test_cli_tolerance_failure(tmp_path):
    code = cli.main(["price", *SMALL, "--no-mc", "--tolerance", "1e-9", "--out", str(tmp_path / "p.csv")])
    assert code == cli.EXIT_TOLERANCE


def test_cli_surface_at_zero_is_the_projection(tmp_path):
    out = tmp_path / "s.csv"
    code = cli.main(["surface", "--preset", "butterfly", *SMALL, "--tau", "0,0.25", "--nv-out", "5", "--nx-out", "7", "--out", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 2 * 5 * 7
    run = build(resolve("butterfly", overrides={"n_v": 4, "n_x": 8, "dt": 0.05}))
    u0 = initial_solution(run.problem, DGSpace(run.mesh(), run.degree))
    first = [r for r in rows if float(r["tau"]) == 0.0]
    pts = np.array([[float(r["v"]), float(r["x"])] for r in first])
    np.testing.assert_allclose([float(r["U"]) for r in first], u0(pts), rtol=1e-8, atol=1e-12)  # CSV keeps 10 digits


def test_cli_surface_rejects_tau_outside_horizon(tmp_path):
    assert cli.main(["surface", *SMALL, "--tau", "0.3", "--out", str(tmp_path / "s.csv")]) == cli.EXIT_CONFIG
    assert cli.main(["surface", *SMALL, "--tau", "0.01", "--out", str(tmp_path / "s.csv")]) == cli.EXIT_CONFIG


def test_cli_table5_small(tmp_path):
    out = tmp_path / "t5.csv"
    code = cli.main(["table5", "--meshes", "4x8", "--out", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 1
    assert float(rows[0]["rannacher_rel_err"]) == pytest.approx(abs(float(rows[0]["rannacher_value"]) / 0.483827 - 1), rel=1e-6)


def test_cli_adapt_writes_mesh_and_indicators(tmp_path):
    out = tmp_path / "a.csv"
    code = cli.main(
        ["adapt", "--set", "adapt.max_rounds=2", "--set", "adapt.initial_n_v=4", "--set", "adapt.initial_n_x=4",
         "--out", str(out), "--mesh-out", str(tmp_path / "m.txt"), "--indicators-out", str(tmp_path / "eta.csv")]
    )
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 3
    assert (tmp_path / "m.txt").exists() and (tmp_path / "eta.csv").exists()
    assert rows[-1]["final_min_over_K"] != ""
