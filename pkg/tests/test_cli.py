import json

import numpy as np
import yaml

from spindyn.cli import main


def write_cfg(tmp_path, cfg, name="run.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


def lattice_graph_cfg(lo=-5, hi=5, rho=1.5):
    return {"graph": {"source": "lattice", "rho": rho,
                      "lattice": {"lo": lo, "hi": hi}}}


class TestGraphCommand:
    def test_lattice_report(self, tmp_path):
        cfg = write_cfg(tmp_path, lattice_graph_cfg())
        out = tmp_path / "out"
        assert main(["graph", cfg, "--out", str(out)]) == 0
        report = json.loads((out / "degree_report.json").read_text())
        assert report["n_sites"] == 11
        assert report["degree_constant"] == 3.0
        for name in ("configuration.csv", "degrees.csv", "edges.csv",
                     "manifest.json"):
            assert (out / name).exists()

    def test_poisson_rerun_identical(self, tmp_path):
        cfg = write_cfg(tmp_path, {
            "graph": {"source": "poisson", "rho": 1.0,
                      "poisson": {"intensity": 1.5,
                                  "window": [[-4.0, 4.0], [-4.0, 4.0]],
                                  "seed": 5}}})
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["graph", cfg, "--out", str(out1)]) == 0
        assert main(["graph", cfg, "--out", str(out2)]) == 0
        assert (out1 / "configuration.csv").read_bytes() == \
            (out2 / "configuration.csv").read_bytes()
        m1 = json.loads((out1 / "manifest.json").read_text())
        m2 = json.loads((out2 / "manifest.json").read_text())
        assert m1["outputs"] == m2["outputs"]

    def test_malformed_config_names_key(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, {"graph": {"source": "lattice", "rho": 1.5}})
        assert main(["graph", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "graph.lattice.lo" in capsys.readouterr().err

    def test_bad_source_rejected(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, {"graph": {"source": "hexgrid", "rho": 1.0}})
        assert main(["graph", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "graph.source" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["graph", str(tmp_path / "nope.yaml"),
                     "--out", str(tmp_path / "o")]) == 2


def simulate_cfg(**plan):
    cfg = lattice_graph_cfg(0, 0, 1.0)
    cfg["field"] = {"drift": "linear", "coupling": "zero", "noise": "additive"}
    cfg["plan"] = {"dt": 0.001, "T": 1.0, "replicas": 2000,
                   "master_seed": 3, "p": 2} | plan
    cfg["init"] = {"type": "constant", "value": 0.0}
    return cfg


class TestSimulateCommand:
    def test_ou_moments(self, tmp_path):
        cfg = write_cfg(tmp_path, simulate_cfg())
        out = tmp_path / "out"
        assert main(["simulate", cfg, "--out", str(out)]) == 0
        table = np.loadtxt(out / "moments.csv", delimiter=",", skiprows=1,
                           ndmin=2)
        final = table[np.isclose(table[:, 1], 1.0)]
        mean, se = final[0, 3], final[0, 4]
        target = (1 - np.exp(-2.0)) / 2
        assert abs(mean - target) <= 3 * se + 1e-3

    def test_zero_field_constant(self, tmp_path):
        cfg = simulate_cfg(replicas=4)
        cfg["field"] = {"drift": "linear", "noise": "linear_noise"}
        cfg["init"] = {"type": "constant", "value": 0.0}
        out = tmp_path / "out"
        assert main(["simulate", write_cfg(tmp_path, cfg), "--out", str(out)]) == 0
        traj = np.load(out / "trajectories.npz")["trajectories"]
        assert np.all(traj == 0.0)

    def test_threads_do_not_change_hash(self, tmp_path):
        cfg = write_cfg(tmp_path, simulate_cfg(replicas=64, dt=0.01))
        hashes = []
        for k, name in ((1, "a"), (4, "b")):
            out = tmp_path / name
            assert main(["simulate", cfg, "--out", str(out),
                         "--threads", str(k)]) == 0
            hashes.append(json.loads((out / "manifest.json").read_text())
                          ["ensemble_hash"])
        assert hashes[0] == hashes[1]

    def test_bad_scheme_exit_2(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, simulate_cfg(scheme="rk4"))
        assert main(["simulate", cfg, "--out", str(tmp_path / "o")]) == 2


class TestConvergeCommand:
    def base_cfg(self):
        cfg = lattice_graph_cfg(-10, 10, 1.5)
        cfg["field"] = {"drift": "cubic", "coupling": "linear_pair", "J": 0.2}
        cfg["plan"] = {"dt": 0.02, "T": 0.5, "replicas": 32,
                       "master_seed": 1, "p": 4}
        cfg["init"] = {"type": "random", "dist": "normal", "a": 0.0, "b": 1.0}
        cfg["scale"] = {"alpha_star": 0.1, "alpha_top": 1.0}
        cfg["converge"] = {"betas": [0.8], "q": 0.5, "alpha": 0.2}
        return cfg

    def test_single_volume_empty_table(self, tmp_path):
        cfg = self.base_cfg()
        cfg["volumes"] = {"radii": []}
        out = tmp_path / "out"
        assert main(["converge", write_cfg(tmp_path, cfg), "--out", str(out)]) == 0
        lines = (out / "gaps.csv").read_text().strip().splitlines()
        assert lines == ["n,m,beta,p,gap,bound"]

    def test_gaps_decrease_and_bounded(self, tmp_path):
        cfg = self.base_cfg()
        cfg["volumes"] = {"radii": [2.0, 5.0, 8.0]}
        out = tmp_path / "out"
        assert main(["converge", write_cfg(tmp_path, cfg), "--out", str(out)]) == 0
        rows = np.loadtxt(out / "gaps.csv", delimiter=",", skiprows=1, ndmin=2)
        gaps = rows[:, 4]
        bounds = rows[:, 5]
        assert np.all(np.diff(gaps) < 0)
        assert np.all(gaps <= bounds)


class TestOvsCommand:
    def test_certificate_valid(self, tmp_path):
        cfg = lattice_graph_cfg(-5, 5, 1.5)
        cfg["scale"] = {"alpha_star": 0.1, "alpha_top": 1.0}
        cfg["ovs"] = {"B": 0.2, "k": 1, "q": 0.5, "trials": 500, "seed": 2,
                      "T": 1.0, "widths": [0.3, 0.9]}
        out = tmp_path / "out"
        assert main(["ovs", write_cfg(tmp_path, cfg), "--out", str(out)]) == 0
        cert = json.loads((out / "certificate.json").read_text())
        assert cert["valid"] is True
        table = np.loadtxt(out / "kt_table.csv", delimiter=",", skiprows=1,
                           ndmin=2)
        assert table.shape == (2, 5)
        assert np.all(table[:, 4] >= 1.0)


class TestGibbsCommand:
    def test_gaussian_report(self, tmp_path):
        cfg = lattice_graph_cfg(0, 0, 1.0)
        cfg["gibbs"] = {"potential": "gaussian", "J": 0.0,
                        "chain": {"steps": 3000, "burn_in": 600, "seed": 1}}
        out = tmp_path / "out"
        assert main(["gibbs", write_cfg(tmp_path, cfg), "--out", str(out)]) == 0
        report = json.loads((out / "gibbs_report.json").read_text())
        assert abs(report["kernel"]["variance"][0] - 1.0) < 0.2
        assert 0.05 < report["kernel"]["acceptance_rate"] < 0.99

    def test_reversibility_section(self, tmp_path):
        cfg = lattice_graph_cfg(0, 7, 1.5)
        cfg["gibbs"] = {"potential": "quartic", "J": 0.1,
                        "chain": {"steps": 1, "burn_in": 400, "seed": 3},
                        "t": 0.2, "observable_sites": [1, 6]}
        cfg["plan"] = {"dt": 0.01, "T": 0.2, "replicas": 500,
                       "master_seed": 2, "p": 3}
        out = tmp_path / "out"
        assert main(["gibbs", write_cfg(tmp_path, cfg), "--out", str(out)]) == 0
        rep = json.loads((out / "gibbs_report.json").read_text())
        assert rep["reversibility"]["within_3se"]
