import json

import numpy as np
import pytest

from roughdrift import cli, io
from roughdrift.drift import gaussian_kernel


def _run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


class TestPipeline:
    def test_sample_fbm_smoke(self, tmp_path, capsys):
        code, out, _ = _run(["sample-fbm", "--hurst", 0.5, "--steps", 1024, "--seed", 7, "--paths", 200,
                             "--out", tmp_path / "b"], capsys)
        assert code == 0 and "circulant" in out
        B, t, meta = io.read_paths(tmp_path / "b")
        assert B.shape == (200, 1025, 1) and meta["master_seed"] == 7 and meta["hurst"] == 0.5
        # at H = 1/2 the standardized increments are iid N(0, 1)
        z = np.diff(B[:, :, 0], axis=1).ravel() / np.sqrt(t[1])
        from scipy import stats

        assert stats.normaltest(z[:20000]).pvalue > 1e-3
        lag1 = np.corrcoef(z[:-1], z[1:])[0, 1]
        assert abs(lag1) < 4 / np.sqrt(len(z))

    def test_mollify_equals_heat_kernel(self, tmp_path, capsys):
        code, _, _ = _run(["mollify", "--drift", "dirac", "--eps", 0.01, "--half-width", 5, "--points", 1024,
                           "--out", tmp_path / "g"], capsys)
        assert code == 0
        g, meta = io.read_grid(tmp_path / "g")
        assert meta["epsilon"] == 0.01
        np.testing.assert_array_equal(g.values[:, 0], gaussian_kernel(0.01, g.lattice.coordinates()))

    def test_solve_estimate_report(self, tmp_path, capsys):
        _run(["sample-fbm", "--hurst", 0.3, "--steps", 512, "--seed", 1, "--paths", 1000, "--out", tmp_path / "b"],
             capsys)
        _run(["mollify", "--eps", 0.01, "--half-width", 20, "--points", 4096, "--out", tmp_path / "g"], capsys)
        code, out, _ = _run(["solve", "--noise", tmp_path / "b", "--drift-file", tmp_path / "g", "--out",
                             tmp_path / "k"], capsys)
        assert code == 0 and "0 box exits" in out
        code, out, _ = _run(["estimate", "--input", tmp_path / "b", "--quantity", "B", "--m", 2, "--k-max", 7,
                             "--out", tmp_path / "b.csv"], capsys)
        assert code == 0
        fit = json.loads((tmp_path / "b.fit.json").read_text())["fit"]
        # exact fBm scaling
        assert fit["slope"] == pytest.approx(0.3, abs=0.02)
        meta, header, rows = io.read_csv(tmp_path / "b.csv")
        assert meta["master_seed"] == "1" and header == ["lag", "estimate", "std_error"] and len(rows) == 7
        code, _, _ = _run(["estimate", "--input", tmp_path / "k", "--quantity", "K", "--out", tmp_path / "k.csv"],
                          capsys)
        assert code == 0
        code, out, _ = _run(["report", tmp_path / "k.fit.json"], capsys)
        assert code == 0 and "increment moment scaling" in out

    def test_sew_check(self, tmp_path, capsys):
        code, out, _ = _run(["sew-check", "--steps", 512, "--paths", 20, "--k-max", 5, "--half-width", 20,
                             "--points", 4096, "--out", tmp_path / "s.json"], capsys)
        assert code in (0, 1) and "alpha1=" in out
        rep = json.loads((tmp_path / "s.json").read_text())
        assert rep["anchor"] and rep["master_seed"] == 0 and len(rep["config_hash"]) == 64

    def test_aggregate(self, tmp_path, capsys):
        io.write_csv(tmp_path / "a.csv", [{"x": 1}], "h", 0)
        io.write_csv(tmp_path / "b.csv", [{"x": 2}], "h", 0)
        io.write_csv(tmp_path / "c.csv", [{"x": 3}], "g", 0)
        assert _run(["aggregate", tmp_path / "a.csv", tmp_path / "b.csv", "--out", tmp_path / "o.csv"], capsys)[0] == 0
        code, _, err = _run(["aggregate", tmp_path / "a.csv", tmp_path / "c.csv", "--out", tmp_path / "o.csv"], capsys)
        assert code == 2 and err.count("\n") == 1 and "refusing" in err


class TestErrors:
    @pytest.mark.parametrize("argv", [
        ["mollify", "--drift", "levy", "--eps", "0.1"],
        ["estimate", "--input", "missing-file"],
        ["run", "missing.yaml"],
        ["report", "missing.json"],
    ])
    def test_single_line_diagnostic(self, argv, capsys, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code, _, err = _run(argv, capsys)
        assert code == 2
        assert err.startswith("error: ") and err.count("\n") == 1

    def test_gate_violation(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("hurst: 0.3\ndrift: {declared_beta: -3.0}\n")
        code, _, err = _run(["run", cfg, "--out", tmp_path / "o"], capsys)
        assert code == 2
        assert "beta=-3 requires H<1/6, got H=0.3" in err

    def test_wrong_container_kind(self, tmp_path, capsys):
        _run(["mollify", "--eps", 0.1, "--half-width", 5, "--points", 256, "--out", tmp_path / "g"], capsys)
        code, _, err = _run(["solve", "--noise", tmp_path / "g", "--drift-file", tmp_path / "g"], capsys)
        assert code == 2 and "not a path container" in err

    def test_box_exit_is_gate_failure(self, tmp_path, capsys):
        _run(["sample-fbm", "--hurst", 0.3, "--steps", 64, "--paths", 50, "--out", tmp_path / "b"], capsys)
        _run(["mollify", "--eps", 0.1, "--half-width", 0.25, "--points", 64, "--out", tmp_path / "g"], capsys)
        code, out, _ = _run(["solve", "--noise", tmp_path / "b", "--drift-file", tmp_path / "g", "--out",
                             tmp_path / "k"], capsys)
        assert code == 1 and "box exits" in out

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["bogus"])
        assert exc.value.code == 2
