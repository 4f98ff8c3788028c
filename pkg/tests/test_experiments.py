import numpy as np
import pytest

from quadcurl.cli import main
from quadcurl.exceptions import ConfigError, PipelineError
from quadcurl.experiments import ExperimentConfig, MeshConfig, parse_config, preset, run
from quadcurl.mesh import load_mesh, random_voronoi, save_mesh


def small(name, k=1, levels=3, **mesh):
    cfg = preset(name, k=k, levels=levels)
    for key, val in mesh.items():
        setattr(cfg.mesh, key, val)
    return cfg


def test_presets():
    p2 = preset("exp2")
    f = __import__("quadcurl").get_rhs(p2.rhs)
    np.testing.assert_allclose(f(np.array([[0.1, 0.1]])), [[0.25, 1.25]])
    p4 = preset("exp4")
    assert (p4.beta, p4.gamma) == (1.0, 1.0) and p4.domain == "square_hole"
    assert preset("exp5").domain == "two_holes"
    assert preset("exp3").expected_rate == pytest.approx(2 / 3)
    assert preset("exp1", k=2).expected_rate == pytest.approx(2.0)
    assert preset("exp1", k=1).mesh.levels == 6 and preset("exp1", k=2).mesh.levels == 5
    with pytest.raises(ConfigError):
        preset("exp9")


def test_config_invariants():
    with pytest.raises(ConfigError):
        ExperimentConfig(name="exp4", gamma=0.0, domain="square_hole").validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(name="exp2", gamma=1.0).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(domain="two_holes").validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(k=3).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(mesh=MeshConfig(kind="structured"), domain="gamma").validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(mesh=MeshConfig(kind="file")).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(rhs="nope").validate()


def test_parse_config():
    cfg = parse_config("""
        # exp4 with fewer levels
        preset = exp4
        k = 2
        mesh.levels = 2     # coarse
        mesh.seed = 3
        output = out.csv
    """)
    assert (cfg.name, cfg.k, cfg.mesh.levels, cfg.mesh.seed) == ("exp4", 2, 2, 3)
    assert cfg.mesh.n_seeds == 36 and cfg.output == "out.csv"
    assert cfg.expected_rate == pytest.approx(2 / 3)
    custom = parse_config("domain = gamma\nrhs = piecewise\nmesh.n_seeds = 12\n")
    assert custom.name == "custom" and custom.expected_rate is None
    for bad in ["k 2", "mesh.colour = red", "beta = fast", "= 1", "preset = exp4\ngamma = 0"]:
        with pytest.raises(ConfigError):
            parse_config(bad)


def test_nested_run_emits_relative_errors(tmp_path):
    cfg = small("exp3", levels=3)
    cfg.output = str(tmp_path / "r.csv")
    rep = run(cfg)
    assert len(rep.h) == 3
    e_u = np.array(rep.columns["e_u"])
    assert np.isnan(e_u[0]) and np.isfinite(e_u[1:]).all()   # L - 1 relative errors
    assert (tmp_path / "r.md").read_text().startswith("### exp3")
    assert rep.to_csv() == (tmp_path / "r.csv").read_text()


def test_runs_are_deterministic(tmp_path):
    a = run(small("exp4", levels=2)).to_csv()
    b = run(small("exp4", levels=2)).to_csv()
    assert a == b and "c1" in a.splitlines()[0]


def test_exact_run_and_matrix_dump(tmp_path):
    cfg = small("exp1", k=1, levels=2)
    cfg.dump_matrices = str(tmp_path / "A")
    rep = run(cfg)
    assert np.isfinite(rep.columns["e_u"]).all()
    assert (tmp_path / "A_level1.coo").exists()


def test_file_mesh_run(tmp_path):
    path = tmp_path / "m.txt"
    save_mesh(random_voronoi("square", 16), path)
    cfg = parse_config(f"domain = square\nrhs = smooth\nmesh.kind = file\nmesh.path = {path}\n"
                       "mesh.levels = 2\n")
    assert len(run(cfg).h) == 2


def test_pipeline_error_carries_level(monkeypatch):
    from quadcurl import problems
    monkeypatch.setitem(problems.RHS, "nan", lambda p: np.full(p.shape, np.nan))
    cfg = ExperimentConfig(domain="square", rhs="nan",
                           mesh=MeshConfig(kind="nested", levels=2, n_seeds=12))
    with pytest.raises(PipelineError, match="level 0"):
        run(cfg)


def test_random_kind_needs_exact_solution():
    cfg = ExperimentConfig(rhs="smooth", mesh=MeshConfig(kind="random", levels=2, n_seeds=10))
    with pytest.raises(ConfigError):
        run(cfg)


def test_cli_run_and_errors(tmp_path, capsys):
    out = tmp_path / "c.csv"
    assert main(["run", "--preset", "exp2", "--levels", "2", "--out", str(out), "-q"]) == 0
    assert out.read_text().startswith("level,h,dofs")
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("domain = square_hole\n")
    assert main(["run", "--config", str(cfg)]) == 1
    assert "gamma must be positive" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["run", "--preset", "exp7"])
    assert exc.value.code != 0


def test_cli_mesh_commands(tmp_path, capsys):
    m = tmp_path / "m.txt"
    assert main(["mesh", "gen", "--domain", "square_hole", "--n", "20", "--out", str(m)]) == 0
    assert main(["mesh", "refine", str(m), "--times", "2", "--out", str(tmp_path / "f.txt")]) == 0
    fine = load_mesh(tmp_path / "f.txt")
    assert fine.level == 2 and fine.betti == 1
    assert main(["mesh", "info", str(tmp_path / "f.txt")]) == 0
    assert "holes           1" in capsys.readouterr().out
    assert main(["mesh", "gen", "--kind", "structured", "--n", "4", "--out", str(m)]) == 0
    bad = tmp_path / "bad.txt"
    bad.write_text("nonsense\n")
    assert main(["mesh", "info", str(bad)]) == 1
