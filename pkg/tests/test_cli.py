import json
import math
from pathlib import Path

import numpy as np
import pytest

from svshrink.cli import main, read_matrix, InputError
from svshrink.matnorm import ModelSpec, replication_rng
from svshrink.priors import Svs, _log_const_svs, prior_density
from svshrink.riskbench import mean_from_singulars

DATA = Path(__file__).parent / "data"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


class TestReadMatrix:
    def test_parse(self):
        x = read_matrix(DATA / "oracle_x.txt")
        assert x.shape == (4, 2) and x[0, 0] == 3.0

    def test_bad_token_location(self, tmp_path):
        p = tmp_path / "x.txt"
        p.write_text("2 2\n1 2\n3 oops\n")
        with pytest.raises(InputError, match="line 3, column 2"):
            read_matrix(p)

    def test_row_count(self, tmp_path):
        p = tmp_path / "x.txt"
        p.write_text("3 2\n1 2\n")
        with pytest.raises(InputError, match="expected 3 rows"):
            read_matrix(p)


class TestEstimate:
    def test_mle_echoes_input(self, capsys, tmp_path):
        out = tmp_path / "o.json"
        code, _, _ = run(capsys, "estimate", DATA / "oracle_x.txt", "--method", "mle", "--out", out)
        rep = json.loads(out.read_text())
        assert code == 0
        np.testing.assert_array_equal(rep["estimates"][0]["estimate"], rep["input"])
        assert rep["input_singular_values"] == [3.0, 1.0]

    def test_efron_morris_example(self, capsys, tmp_path):
        out = tmp_path / "o.json"
        run(capsys, "estimate", DATA / "em_example.txt", "--method", "em", "--out", out)
        sv = json.loads(out.read_text())["estimates"][0]["singular_values"]
        np.testing.assert_allclose(sv, [2.6667, 1.5], atol=1e-4)

    def test_svs_bayes_golden(self, capsys, tmp_path):
        out = tmp_path / "o.json"
        code, _, _ = run(capsys, "estimate", DATA / "oracle_x.txt", "--method", "svs-bayes", "--out", out)
        golden = json.loads((DATA / "golden_svs_bayes.json").read_text())["estimates"][0]["estimate"]
        got = json.loads(out.read_text())["estimates"][0]["estimate"]
        assert code == 0
        np.testing.assert_allclose(got, golden, atol=1e-6)

    def test_dimension_constraint_message(self, capsys, tmp_path):
        p = tmp_path / "x.txt"
        p.write_text("3 2\n1 2\n3 4\n5 6\n")
        code, _, err = run(capsys, "estimate", p)
        assert code == 2 and "n - m >= 2" in err

    def test_parse_failure_exit(self, capsys, tmp_path):
        p = tmp_path / "x.txt"
        p.write_text("4 2\n1 2\n3 x\n5 6\n7 8\n")
        code, _, err = run(capsys, "estimate", p)
        assert code == 2 and "line 3, column 2" in err

    def test_series_failure_exit(self, capsys, tmp_path):
        p = tmp_path / "x.txt"
        p.write_text("5 2\n" + "4 4\n" * 5)
        code, _, err = run(capsys, "estimate", p, "--method", "svs-bayes", "--max-order", "5")
        assert code == 1 and "terms_used=5" in err


class TestHypergeom:
    def test_zero(self, capsys):
        code, out, _ = run(capsys, "hypergeom", "--a", 1.5, "--b", 2, "--eigenvalues", "0 0")
        assert code == 0 and "value 1.0" in out and "converged true" in out

    def test_exponential(self, capsys):
        code, out, _ = run(capsys, "hypergeom", "--a", 1, "--b", 1, "--eigenvalues", "1")
        value = float(out.splitlines()[0].split()[1])
        assert value == pytest.approx(math.e, rel=1e-10)
        assert "terms_used" in out

    def test_fig1_golden(self, capsys):
        golden = json.loads((DATA / "golden_hypergeom_fig1.json").read_text())
        code, out, _ = run(capsys, "hypergeom", "--a", 1.5, "--b", 2, "--eigenvalues", "200,50")
        log_value = float(out.splitlines()[1].split()[1])
        assert code == 0
        assert log_value == pytest.approx(golden["log_value"], rel=1e-12)

    def test_fig1_golden_against_monte_carlo(self):
        # log 1F1 = log m(Y) - log const + tr S, with m(Y) = E pi_SVS(M), M ~ N(Y, I)
        golden = json.loads((DATA / "golden_hypergeom_fig1.json").read_text())
        spec = ModelSpec(4, 2)
        y = mean_from_singulars(spec, [20.0, 10.0])
        vals = prior_density(Svs, spec, y + replication_rng(21, 0).standard_normal((200_000, 4, 2)))
        mc, se = vals.mean(), vals.std(ddof=1) / math.sqrt(vals.size)
        log_f = math.log(mc) - _log_const_svs(4, 2) + 250.0
        assert abs(log_f - golden["log_value"]) < 3 * se / mc

    def test_unconverged_exit(self, capsys):
        code, out, _ = run(capsys, "hypergeom", "--a", 1.5, "--b", 2, "--eigenvalues", "200 50",
                           "--method", "series")
        assert code == 1 and "converged false" in out


class TestCheckSuperharmonic:
    @pytest.mark.parametrize("prior", ["svs", "regularized", "stein"])
    def test_passes(self, capsys, prior, tmp_path):
        out = tmp_path / "r.json"
        code, text, _ = run(capsys, "check-superharmonic", "--prior", prior, "--points", 25, "--seed", 1,
                            "--out", out)
        rep = json.loads(out.read_text())
        assert code == 0 and rep["failures"] == 0 and rep["points"] == 25
        assert "25/25" in text

    def test_sphere_draws(self, capsys):
        code, _, _ = run(capsys, "check-superharmonic", "--points", 5, "--sphere-draws", 500)
        assert code == 0


class TestBench:
    def test_preset_deterministic(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (a, b):
            code, out, _ = run(capsys, "bench", "--preset", "fig2", "--seed", 1, "--replications", 200, "--out", path)
            assert code == 0
        assert a.read_bytes() == b.read_bytes()
        assert "mle: risk range" in out and "svs below mle" in out

    def test_experiment_file(self, capsys, tmp_path):
        exp = tmp_path / "e.json"
        exp.write_text(json.dumps({"n": 4, "m": 2, "fixed_singulars": {"2": 0.0}, "swept_index": 1,
                                   "grid": [0.0, 10.0], "methods": ["mle", "svs"], "replications": 200,
                                   "master_seed": 3}))
        code, out, err = run(capsys, "bench", "--experiment", exp)
        assert code == 0
        rows = out.strip().splitlines()
        assert rows[0] == "grid_value,method,mean_risk,std_error,replications,flags" and len(rows) == 5
        mle = [r for r in rows if ",mle," in r]
        assert all(abs(float(r.split(",")[2]) - 8.0) < 1.0 for r in mle)

    def test_missing_source(self, capsys):
        code, _, err = run(capsys, "bench")
        assert code == 2 and "--preset" in err
