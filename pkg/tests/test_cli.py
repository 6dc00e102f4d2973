import json

import pytest

from boxcar.cli import main, read_measure_csv

SIM_CFG = {
    "model": {
        "rates": {"growth": {"family": "constant", "value": 1.0},
                  "mortality": {"family": "constant", "value": 0.0},
                  "birth": {"family": "constant", "value": 0.0}},
        "control_box": {"lower": [0.0], "upper": [1.0]},
    },
    "initial_measure": {"atoms": {"points": [0.2, 1.4], "masses": [1.0, 2.0]}},
    "discretization": {"n": 4, "dt": 0.5, "substeps": 4, "dx": 1.0},
    "horizon": 3.0,
    "control": {"breakpoints": [0.0, 3.0], "values": [[0.5]]},
}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


class TestDistanceCommand:
    def test_identical_files(self, tmp_path, capsys):
        p = tmp_path / "a.csv"
        p.write_text("x,m\n1.0,2.0\n")
        assert main(["distance", str(p), str(p)]) == 0
        out = capsys.readouterr().out
        assert "flat_distance=0.0000000000000000e+00" in out

    def test_dirac_pair(self, tmp_path, capsys):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        a.write_text("x,m\n0.0,1.0\n")
        b.write_text("x,m\n3.0,1.0\n")
        assert main(["distance", str(a), str(b)]) == 0
        out = capsys.readouterr().out
        dist = float(out.split("flat_distance=")[1].splitlines()[0])
        bound = float(out.split("pairing_bound=")[1].splitlines()[0])
        assert dist == pytest.approx(2.0)
        assert bound >= dist

    def test_negative_mass_rejected(self, tmp_path):
        a = tmp_path / "a.csv"
        a.write_text("x,m\n0.0,-1.0\n")
        assert main(["distance", str(a), str(a)]) == 2


class TestSimulateCommand:
    def test_smoke_and_conservation(self, tmp_path):
        cfg = write_cfg(tmp_path, SIM_CFG)
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        final = read_measure_csv(out / "measure_final.csv")
        assert final.total_mass() == pytest.approx(3.0, abs=1e-12)
        lines = (out / "trajectory.csv").read_text().splitlines()
        assert lines[0].startswith("# config_hash=")
        assert lines[1] == "t,i,x,m"
        report = json.loads((out / "report.json").read_text())
        assert any(p.endswith("trajectory.csv") for p in report["outputs"])

    def test_zero_measure_input(self, tmp_path):
        cfg = dict(SIM_CFG)
        cfg["initial_measure"] = {"atoms": {"points": [], "masses": []}}
        out = tmp_path / "out"
        assert main(["simulate", "--config", write_cfg(tmp_path, cfg),
                     "--out", str(out)]) == 0
        rows = (out / "trajectory.csv").read_text().splitlines()[2:]
        masses = [float(r.split(",")[3]) for r in rows]
        assert all(m == 0.0 for m in masses)

    def test_invalid_config_exits_2(self, tmp_path):
        cfg = json.loads(json.dumps(SIM_CFG))
        cfg["discretization"]["dt"] = 0.7  # horizon not a window multiple
        assert main(["simulate", "--config", write_cfg(tmp_path, cfg),
                     "--out", str(tmp_path / "o")]) == 2

    def test_schema_violation_exits_2(self, tmp_path):
        cfg = json.loads(json.dumps(SIM_CFG))
        cfg["discretization"]["n"] = -3
        assert main(["simulate", "--config", write_cfg(tmp_path, cfg),
                     "--out", str(tmp_path / "o")]) == 2

    def test_missing_file_exits_2(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o")]) == 2

    def test_numeric_blowup_exits_3(self, tmp_path):
        cfg = json.loads(json.dumps(SIM_CFG))
        cfg["model"]["rates"]["birth"] = {"family": "constant", "value": 8.0}
        cfg["horizon"] = 300.0
        cfg["control"] = {"breakpoints": [0.0, 300.0], "values": [[0.5]]}
        assert main(["simulate", "--config", write_cfg(tmp_path, cfg),
                     "--out", str(tmp_path / "o")]) == 3


class TestOptimizeCommand:
    def test_quadratic_target(self, tmp_path):
        cfg = json.loads(json.dumps(SIM_CFG))
        cfg["model"]["rates"]["mortality"] = {"family": "constant",
                                              "value": 0.1}
        cfg["control"] = {"pieces": 3}
        cfg["cost"] = {"moments": [],
                       "running": {"family": "quadratic_control",
                                   "weights": [1.0], "targets": [0.3]}}
        cfg["optimizer"] = {"max_iterations": 60, "multistart": 2,
                            "tolerance": 1e-7, "seed": 0}
        out = tmp_path / "out"
        assert main(["optimize", "--config", write_cfg(tmp_path, cfg),
                     "--out", str(out)]) == 0
        summary = json.loads((out / "optimize_summary.json").read_text())
        assert summary["j"] <= 1e-8
        lines = (out / "control_opt.csv").read_text().splitlines()[2:]
        vals = [float(r.split(",")[1]) for r in lines]
        assert all(abs(v - 0.3) <= 1e-5 for v in vals)


class TestConvergenceCommand:
    def test_table_and_plot(self, tmp_path):
        cfg = json.loads(json.dumps(SIM_CFG))
        cfg["initial_measure"] = {"atoms": {"points": [0.25, 1.25],
                                            "masses": [1.0, 2.0]}}
        cfg["discretization"] = {"n": 4, "dt": 0.5, "substeps": 2, "dx": 0.5,
                                 "placement": "centroid"}
        cfg["horizon"] = 2.0
        cfg["control"] = {"breakpoints": [0.0, 2.0], "values": [[0.5]]}
        cfg["model"]["rates"]["birth"] = {
            "family": "separable",
            "profile": {"family": "gaussian", "peak": 0.3, "center": 1.0,
                        "width": 1.0},
            "control_term": {"type": "affine", "const": 1.0, "coeffs": [0.5]}}
        cfg["convergence"] = {"dts": [0.5, 0.25], "reference_dt": 0.0625,
                              "save_dt": 0.5}
        out = tmp_path / "out"
        assert main(["convergence", "--config", write_cfg(tmp_path, cfg),
                     "--out", str(out)]) == 0
        assert (out / "convergence.svg").exists()
        lines = (out / "convergence.csv").read_text().splitlines()
        assert lines[1] == "dt,d0,error,ratio_to_next,row_constant"
        assert len(lines) == 4


class TestGradientCheckCommand:
    def test_report_written(self, tmp_path):
        cfg = json.loads(json.dumps(SIM_CFG))
        cfg["model"]["rates"]["birth"] = {
            "family": "separable",
            "profile": {"family": "gaussian", "peak": 0.2, "center": 2.0,
                        "width": 1.0},
            "control_term": {"type": "affine", "const": 0.5, "coeffs": [0.4]}}
        cfg["horizon"] = 2.0
        cfg["control"] = {"breakpoints": [0.0, 1.0, 2.0],
                          "values": [[0.6], [0.3]]}
        cfg["cost"] = {"moments": [{"family": "constant", "value": 1.0}],
                       "running": {"family": "linear", "y_coeffs": [1.0]}}
        out = tmp_path / "out"
        assert main(["gradient-check", "--config", write_cfg(tmp_path, cfg),
                     "--out", str(out)]) == 0
        payload = json.loads((out / "gradient_check.json").read_text())
        assert payload["max_rel_error"] <= 1e-4


class TestWelfareDemo:
    def test_demo_with_small_overrides(self, tmp_path):
        overrides = {
            "horizon": 6.0,
            "optimizer": {"max_iterations": 10, "multistart": 1,
                          "tolerance": 1e-3, "seed": 0},
            "refine": {"levels": [
                {"n": 25, "dt": 1.0, "pieces": 3, "substeps": 2, "dx": 4.0,
                 "placement": "centroid"},
                {"n": 50, "dt": 0.5, "pieces": 6, "substeps": 2, "dx": 2.0,
                 "placement": "centroid"},
            ]},
        }
        cfg = write_cfg(tmp_path, overrides)
        out = tmp_path / "demo"
        assert main(["welfare-demo", "--config", cfg, "--out", str(out),
                     "--seed", "1"]) == 0
        cert = (out / "certificate.csv").read_text().splitlines()
        assert cert[1] == "n,dt,M,d0,Jstar"
        assert len(cert) == 4
        breakdown = json.loads((out / "cost_breakdown.json").read_text())
        assert "discount_tail_bound" in breakdown
        assert breakdown["j"] == pytest.approx(
            breakdown["jtilde"] + breakdown["tv"])
        assert (out / "policy.svg").exists()

    def test_zero_fertility_override_returns_zero_policy(self, tmp_path):
        overrides = {
            "horizon": 4.0,
            "model": {"rates": {"birth": {
                "family": "separable",
                "profile": {"family": "constant", "value": 0.0},
                "control_term": {"type": "affine", "const": 1.0,
                                 "coeffs": [1.0]}}}},
            "optimizer": {"max_iterations": 10, "multistart": 2,
                          "tolerance": 1e-6, "seed": 0},
            "refine": {"levels": [
                {"n": 20, "dt": 0.5, "pieces": 4, "substeps": 2, "dx": 5.0,
                 "placement": "centroid"}]},
        }
        out = tmp_path / "demo"
        assert main(["welfare-demo", "--config", write_cfg(tmp_path, overrides),
                     "--out", str(out), "--seed", "0"]) == 0
        lines = (out / "policy.csv").read_text().splitlines()[2:]
        vals = [float(r.split(",")[1]) for r in lines]
        assert max(abs(v) for v in vals) <= 1e-9
