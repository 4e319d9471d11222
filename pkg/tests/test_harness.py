import json
import math

import pytest

from rwre_lab.cli import main
from rwre_lab.manifests import (CheckResult, ExperimentManifest,
                                ManifestError, default_manifest, write_csv)
from rwre_lab.recipes import residual_scaling_report, run_recipe


class TestManifest:
    def test_unknown_recipe_rejected(self):
        with pytest.raises(ManifestError, match="unknown recipe"):
            ExperimentManifest(recipe="nonsense").validate()

    def test_unknown_parameter_rejected(self):
        m = ExperimentManifest(recipe="kernel-table",
                               params={"bogus": 1})
        with pytest.raises(ManifestError, match="unknown parameters"):
            m.validate()

    def test_empty_epsilon_list_rejected(self):
        m = ExperimentManifest(recipe="velocity-verify",
                               params={"epsilon_list": []})
        with pytest.raises(ManifestError, match="non-empty"):
            m.validate()

    def test_type_checking(self):
        m = ExperimentManifest(recipe="kernel-table",
                               params={"radius": "four"})
        with pytest.raises(ManifestError, match="must be int"):
            m.validate()

    def test_defaults_fill_in(self):
        m = default_manifest("ballisticity-check")
        assert m.params["L"] == 20
        assert m.params["n_traj"] == 100_000

    def test_json_round_trip(self, tmp_path):
        m = default_manifest("kernel-table", radius=2, seed=9)
        path = tmp_path / "m.json"
        m.to_json(path)
        m2 = ExperimentManifest.from_json(path)
        assert m2.recipe == "kernel-table"
        assert m2.params == m.params
        assert m2.seed == 9

    def test_unknown_manifest_field_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"recipe": "kernel-table",
                                    "surprise": 1}))
        with pytest.raises(ManifestError, match="unknown manifest fields"):
            ExperimentManifest.from_json(path)

    def test_check_result_line(self):
        line = CheckResult("foo", True, 0.5, 1.0, "detail").line()
        assert line.startswith("PASS foo:")
        assert "FAIL" in CheckResult("bar", False, 2.0, 1.0).line()


class TestWriteCsv:
    def test_float_formatting(self, tmp_path):
        path = tmp_path / "x.csv"
        write_csv(path, ["a", "b"], [[1.0 / 3.0, "t"], [2, 0.1]])
        lines = path.read_text().strip().splitlines()
        assert lines[1].startswith("0.33333333333333331")
        assert lines[2] == "2,0.10000000000000001"


class TestScalingReport:
    def test_exact_power_law_slope(self):
        eps = [0.04, 0.08, 0.16]
        res = [3.0 * e ** 2 for e in eps]
        rep = residual_scaling_report(eps, res, [1e-9] * 3)
        assert not rep.noise_limited
        assert rep.slope == pytest.approx(2.0, abs=0.01)

    def test_noise_limited_path(self):
        eps = [0.04, 0.08, 0.16]
        res = [1e-6, 2e-6, 1.5e-6]
        rep = residual_scaling_report(eps, res, [1e-3] * 3)
        assert rep.noise_limited
        assert math.isnan(rep.slope)

    def test_partial_noise_uses_clean_points(self):
        eps = [0.04, 0.08, 0.16]
        res = [1e-7, 2.0 * 0.08 ** 2, 2.0 * 0.16 ** 2]
        rep = residual_scaling_report(eps, res, [1e-3, 1e-5, 1e-5])
        assert not rep.noise_limited
        assert rep.slope == pytest.approx(2.0, abs=0.01)
        assert rep.used.tolist() == [False, True, True]

    def test_preconditions(self):
        with pytest.raises(ValueError, match="three"):
            residual_scaling_report([0.1, 0.4], [1, 1], [0, 0])
        with pytest.raises(ValueError, match="factor of 4"):
            residual_scaling_report([0.1, 0.15, 0.2], [1, 1, 1], [0, 0, 0])


class TestCliAndDeterminism:
    def test_rerun_reproduces_outputs_bitwise(self, tmp_path):
        outs = []
        for sub in ("a", "b"):
            m = default_manifest("ballisticity-check",
                                 out_dir=str(tmp_path / sub), seed=5,
                                 n_traj=2000)
            run_recipe(m)
            outs.append((tmp_path / sub / "ballisticity-check.csv")
                        .read_bytes())
        assert outs[0] == outs[1]

    def test_worker_count_does_not_change_outputs(self, tmp_path):
        outs = []
        for sub, workers in (("w1", 1), ("w2", 2)):
            m = default_manifest("ballisticity-check",
                                 out_dir=str(tmp_path / sub), seed=5,
                                 workers=workers, n_traj=2000)
            run_recipe(m)
            outs.append((tmp_path / sub / "ballisticity-check.csv")
                        .read_bytes())
        assert outs[0] == outs[1]

    def test_cli_runs_recipe_and_exits_zero(self, tmp_path, capsys):
        mpath = tmp_path / "m.json"
        default_manifest("ballisticity-check", n_traj=20_000).to_json(mpath)
        code = main(["ballisticity-check", "--manifest", str(mpath),
                     "--out-dir", str(tmp_path / "out"), "--workers", "1"])
        out = capsys.readouterr().out
        assert code == 0
        assert "PASS ballistic-back-exit" in out
        summary = json.loads(
            (tmp_path / "out" / "ballisticity-check-summary.json")
            .read_text())
        assert summary["all_passed"] is True
        assert summary["manifest"]["params"]["n_traj"] == 20_000

    def test_cli_flag_overrides_seed(self, tmp_path):
        code = main(["ballisticity-check", "--seed", "123", "--workers",
                     "1", "--out-dir", str(tmp_path)])
        doc = json.loads(
            (tmp_path / "ballisticity-check-manifest.json").read_text())
        assert doc["seed"] == 123
        assert code == 0

    def test_cli_rejects_mismatched_manifest(self, tmp_path, capsys):
        mpath = tmp_path / "m.json"
        default_manifest("kernel-table").to_json(mpath)
        code = main(["ballisticity-check", "--manifest", str(mpath)])
        assert code == 2

    def test_cli_rejects_bad_manifest(self, tmp_path):
        mpath = tmp_path / "m.json"
        mpath.write_text(json.dumps({"recipe": "velocity-verify",
                                     "params": {"epsilon_list": []}}))
        code = main(["velocity-verify", "--manifest", str(mpath)])
        assert code == 2

    def test_cli_env_var_worker_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RWRE_LAB_WORKERS", "2")
        code = main(["ballisticity-check", "--out-dir", str(tmp_path),
                     "--seed", "7"])
        doc = json.loads(
            (tmp_path / "ballisticity-check-manifest.json").read_text())
        assert doc["workers"] == 2
        assert code == 0
