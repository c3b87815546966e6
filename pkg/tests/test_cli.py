import json

import numpy as np
import pytest

from mahalh2.cli import main, parse_subset
from mahalh2.estimators import c_heritability_mle, mle_single_kernel
from mahalh2.exceptions import HeritabilityError
from mahalh2.io import load_array, read_csv
from mahalh2.kernels import mahalanobis_grm, whitened_design

from test_harness import SMALL


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL.replace("replicates = 3", "replicates = 2"))
    return p


@pytest.fixture
def simulated(tmp_path, config):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(config), "--out", str(out)]) == 0
    return out


class TestSubsetParsing:
    def test_ranges(self):
        np.testing.assert_array_equal(parse_subset("0:3,7"), [0, 1, 2, 7])

    def test_every(self):
        np.testing.assert_array_equal(parse_subset("every:4:1", 10), [1, 5, 9])

    def test_file(self, tmp_path):
        np.savetxt(tmp_path / "s.txt", [2, 4], fmt="%d")
        np.testing.assert_array_equal(parse_subset(str(tmp_path / "s.txt")), [2, 4])

    def test_garbage(self):
        with pytest.raises(HeritabilityError):
            parse_subset("a:b")


class TestCommands:
    def test_simulate_outputs(self, simulated):
        for f in ("ld.csv", "genotypes.csv", "manifest.json"):
            assert (simulated / f).exists()
        scen = json.loads((simulated / "manifest.json").read_text())["scenarios"][0]
        truth = json.loads((simulated / scen / "truth.json").read_text())
        assert 0 < truth["h2_total"] < 1 and "S" in truth["h2_S"]
        assert load_array(simulated / "genotypes.csv", ndim=2).shape == (60, 40)

    def test_grm(self, simulated, tmp_path):
        out = tmp_path / "k.csv"
        rc = main(["grm", "--kernel", "mahalanobis", "--genotypes", str(simulated / "genotypes.csv"),
                   "--ld", str(simulated / "ld.csv"), "--out", str(out)])
        assert rc == 0
        z = load_array(simulated / "genotypes.csv", ndim=2)
        s = load_array(simulated / "ld.csv", ndim=2)
        np.testing.assert_allclose(load_array(out, ndim=2), mahalanobis_grm(z, s).k, atol=1e-12)

    @pytest.mark.parametrize("method", ["mle", "he", "cmle", "two-comp"])
    def test_estimate(self, simulated, tmp_path, method):
        scen = json.loads((simulated / "manifest.json").read_text())["scenarios"][0]
        out = tmp_path / "est.json"
        args = ["estimate", "--method", method, "--genotypes", str(simulated / "genotypes.csv"),
                "--phenotypes", str(simulated / scen / "phenotypes.txt"),
                "--ld", str(simulated / "ld.csv"), "--out", str(out)]
        if method == "two-comp":
            args += ["--subset", "every:4"]
        assert main(args) == 0
        res = json.loads(out.read_text())
        z = load_array(simulated / "genotypes.csv", ndim=2)
        s = load_array(simulated / "ld.csv", ndim=2)
        y = load_array(simulated / scen / "phenotypes.txt", ndim=1)
        if method == "mle":
            assert res["h2_hat"] == pytest.approx(mle_single_kernel(y, mahalanobis_grm(z, s)).h2_hat)
        elif method == "cmle":
            assert res["h2_hat"] == pytest.approx(c_heritability_mle(y, whitened_design(z, s)).h2_hat)
            assert "psi" in res["asymptotic_variance"]
        elif method == "two-comp":
            assert {"sigma2_S", "sigma2_Sc", "sigma2_e", "h2_S"} <= set(res)

    def test_raw_genotypes_need_mafs(self, tmp_path):
        f = tmp_path / "g.csv"
        np.savetxt(f, np.array([[0, 1], [2, 1], [1, 0]]), delimiter=",", fmt="%d")
        np.savetxt(tmp_path / "y.txt", [0.1, -0.3, 0.2])
        rc = main(["estimate", "--method", "he", "--kernel", "euclidean", "--genotypes", str(f),
                   "--encoding", "raw", "--phenotypes", str(tmp_path / "y.txt"),
                   "--out", str(tmp_path / "o.json")])
        assert rc == 1
        rc = main(["estimate", "--method", "he", "--kernel", "euclidean", "--genotypes", str(f),
                   "--encoding", "raw", "--sample-mafs", "--phenotypes", str(tmp_path / "y.txt"),
                   "--out", str(tmp_path / "o.json")])
        assert rc == 0

    def test_mahalanobis_without_ld(self, simulated, tmp_path, capsys):
        rc = main(["grm", "--kernel", "mahalanobis", "--genotypes",
                   str(simulated / "genotypes.csv"), "--out", str(tmp_path / "k.csv")])
        assert rc == 1
        assert "--ld" in capsys.readouterr().err

    def test_truth(self, tmp_path):
        np.savetxt(tmp_path / "u.txt", [1.0, 0.0, 0.0, 1.0])
        s = np.array([[1, 0.5, 0.25, 0.125], [0.5, 1, 0.5, 0.25],
                      [0.25, 0.5, 1, 0.5], [0.125, 0.25, 0.5, 1]])
        np.savetxt(tmp_path / "ld.csv", s, delimiter=",")
        out = tmp_path / "t.json"
        rc = main(["truth", "--effects", str(tmp_path / "u.txt"), "--ld", str(tmp_path / "ld.csv"),
                   "--sigma-e2", "1.0", "--subset", "first=0:2", "--out", str(out)])
        assert rc == 0
        res = json.loads(out.read_text())
        g = 2 + 2 * 0.125
        assert res["h2_total"] == pytest.approx(g / (g + 1))
        assert res["h2_S"]["first"] < res["h2_total"]

    def test_experiment(self, config, tmp_path, capsys):
        out = tmp_path / "exp"
        assert main(["experiment", "--config", str(config), "--out", str(out), "--threads", "2"]) == 0
        rows = read_csv(out / "replicates.csv")
        assert {r["replicate"] for r in rows} == {"0", "1"}
        assert (out / "summary.csv").exists() and (out / "manifest.json").exists()
        assert "95% CI" in capsys.readouterr().out

    def test_config_errors(self, tmp_path, capsys):
        p = tmp_path / "bad.toml"
        p.write_text(SMALL.replace("replicates = 3\n", ""))
        assert main(["experiment", "--config", str(p), "--out", str(tmp_path / "x")]) == 2
        assert "replicates" in capsys.readouterr().err
        assert main(["experiment", "--config", str(tmp_path / "missing.toml"),
                     "--out", str(tmp_path / "x")]) == 2

    def test_failure_threshold(self, tmp_path):
        p = tmp_path / "bound.toml"
        p.write_text(
            SMALL.replace('estimators = ["mle-euclidean", "mle-mahalanobis", "he-euclidean", "cmle", "two-comp"]',
                          'estimators = ["mle-mahalanobis"]')
            + "\n[fit]\neta2_bounds = [1e-6, 1e-5]\n"
        )
        assert main(["experiment", "--config", str(p), "--out", str(tmp_path / "x")]) == 3
