import numpy as np
import pytest

from hpsem.cli import (ConfigError, StudyConfig, emit_plot_data, linear_fit, load_config, main,
                       refine_bricks, rows_to_csv, run_study, table_format)
from hpsem.mesh import CoordFrame


def _cfg(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _rows(errors, dofs=None):
    dofs = dofs or [64 * k**3 for k in range(1, len(errors) + 1)]
    return [{"sweep": "p", "value": 2.0 * (i + 1), "dof": d, "unknowns": d, "iterations": 1,
             "rel_error_percent": e, "functional_final": 0.0, "wall_time": 0.0, "converged": True}
            for i, (e, d) in enumerate(zip(errors, dofs))]


def test_empty_problem_is_config_error(tmp_path, capsys):
    path = _cfg(tmp_path, "problem =\nvalues = 2\n")
    with pytest.raises(ConfigError):
        load_config(path)
    assert main(["study", "--config", path, "--out", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("text", ["problem = poisson-homogeneous\n",
                                  "problem = poisson-homogeneous\nvalues = 2\ntol = -1\n",
                                  "problem = poisson-homogeneous\nvalues = 2\nsweep = q\n",
                                  "problem = poisson-homogeneous\nvalues = 2\ncolour = red\n",
                                  "problem = edge-dirichlet\nvalues = 0.5\nsweep = h\n",
                                  "problem = poisson-homogeneous\nvalues = 2\nW = two\n"])
def test_config_errors(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(_cfg(tmp_path, text))


def test_config_parsing(tmp_path):
    cfg = load_config(_cfg(tmp_path, "problem = vertex-dirichlet  # comment\nsweep = hp\n"
                                     "values = 2, 3;4\nmu_v = 0.2\nuniform_degree = no\n"),
                      {"tol": 1e-6, "max_iter": None})
    assert isinstance(cfg, StudyConfig)
    assert cfg.values == [2.0, 3.0, 4.0] and cfg.mu_v == 0.2 and cfg.uniform_degree is False
    assert cfg.tol == 1e-6 and cfg.max_iter == 5000


def test_p_sweep_dof_column_and_determinism(tmp_path):
    path = _cfg(tmp_path, "problem = poisson-homogeneous\nsweep = p\nvalues = 2, 4\n")
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["study", "--config", path, "--out", str(out1)]) == 0
    assert main(["study", "--config", path, "--out", str(out2)]) == 0
    text = (out1 / "study.csv").read_text()
    assert text == (out2 / "study.csv").read_text()
    assert (out1 / "plot_dof.dat").read_text() == (out2 / "plot_dof.dat").read_text()
    lines = text.strip().splitlines()
    assert lines[0].startswith("sweep,value,dof")
    assert [int(l.split(",")[2]) for l in lines[1:]] == [64, 512]
    assert (out1 / "timing.csv").exists()


def test_nonconverged_exit_code_and_history(tmp_path):
    path = _cfg(tmp_path, "problem = vertex-dirichlet\nsweep = hp\nvalues = 2\n")
    out = tmp_path / "o"
    assert main(["study", "--config", path, "--out", str(out), "--max-iter", "2", "--history"]) == 2
    hist = (out / "history_2.csv").read_text().splitlines()
    assert hist[0] == "iteration,residual" and len(hist) == 4
    assert ",0," in (out / "study.csv").read_text()


def test_solve_and_mesh_dump(tmp_path, capsys):
    path = _cfg(tmp_path, "problem = edge-dirichlet\nsweep = hp\nvalues = 2, 5\n")
    assert main(["solve", "--config", path, "--out", str(tmp_path / "s")]) == 0
    assert len((tmp_path / "s" / "study.csv").read_text().splitlines()) == 2
    capsys.readouterr()
    assert main(["mesh-dump", "--config", path]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("id,frame,kind") and len(out) == 3


def test_h_sweep_refines(tmp_path):
    cfg = StudyConfig(problem="poisson-homogeneous", sweep="h", values=[1.0, 0.5], W=1).validate()
    rows = run_study(cfg)
    assert [r["dof"] for r in rows] == [8, 64]
    assert len(refine_bricks([np.array([[0, 1], [0, 1], [0, 2]])], 0.5)) == 16


def test_condition_study_cli(tmp_path, capsys):
    assert main(["condition-study", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "condition.csv").read_text().strip().splitlines()[1:]
    assert len(rows) == 8 and rows[0].startswith("2,3.7")
    assert main(["condition-study", "--degrees", "2,x"]) == 1


def test_table_format():
    assert table_format(2.04875) == "0.204875E+01"
    assert table_format(0.000872751) == "0.872751E-03"
    assert table_format(0.9999999) == "0.100000E+01"
    assert table_format(float("nan")) == "nan"
    assert table_format(0.0) == "0.000000E+00"


def test_csv_full_precision():
    text = rows_to_csv(_rows([1 / 3]))
    assert "0.33333333333333331" in text and "0.333333E+00" in text


def test_plot_data_monotone_and_single_row(tmp_path):
    res = emit_plot_data(_rows([10.0, 1.0, 0.1]), CoordFrame.REGULAR, tmp_path)
    y = res["degree"][1]
    assert np.all(np.diff(y) < 0)
    assert np.allclose(res["dof"][0], [4, 8, 12])
    single = emit_plot_data(_rows([5.0]), CoordFrame.VERTEX, tmp_path)
    assert single["dof"][2] is None
    lines = (tmp_path / "plot_dof.dat").read_text().splitlines()
    assert sum(not l.startswith("#") for l in lines) == 1 and not any("fit" in l for l in lines)
    assert np.isclose(single["dof"][0][0], 64 ** 0.25)


def test_reference_table_replot_is_straight():
    # p-version data of the smooth Laplace cube from the published study
    W = [2, 4, 6, 8, 10, 12]
    err = [0.380275e2, 0.204875e1, 0.269917e-1, 0.221613e-3, 0.106885e-5, 0.452056e-8]
    rows = _rows(err, [w**3 * 8 for w in W])
    for r, w in zip(rows, W):
        r["value"] = float(w)
    fit = emit_plot_data(rows, CoordFrame.REGULAR)["degree"][2]
    assert fit[2] >= 0.98
    assert linear_fit([1.0], [2.0]) is None
