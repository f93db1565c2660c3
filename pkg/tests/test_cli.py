import json
import shutil
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from spclab.cli import main

FIXTURE = Path(__file__).parent / "data" / "twoband"


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def dataset(tmp_path):
    """Copy of the packaged demo dataset in a scratch directory."""
    target = tmp_path / "twoband"
    shutil.copytree(FIXTURE, target)
    return target


def run_ok(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


def walk_commands(group, prefix=()):
    yield prefix
    commands = getattr(group, "commands", {})
    for name, cmd in commands.items():
        yield from walk_commands(cmd, prefix + (name,))


class TestHelp:
    def test_every_subcommand_help_exits_zero(self, runner):
        for path in walk_commands(main):
            result = runner.invoke(main, list(path) + ["--help"])
            assert result.exit_code == 0, f"--help failed for {path}"

    def test_unknown_command_usage_error(self, runner):
        result = runner.invoke(main, ["frobnicate"])
        assert result.exit_code != 0
        assert "Usage" in result.output or "No such command" in result.output


class TestExitCodes:
    def test_validation_error_exit_2(self, runner, tmp_path):
        manifest = tmp_path / "m.json"
        manifest.write_text(json.dumps({"label": "x"}))  # missing schema_version
        result = runner.invoke(main, ["correct", "-m", str(manifest), "-o", str(tmp_path / "o")])
        assert result.exit_code == 2

    def test_missing_manifest_exit_4(self, runner, tmp_path):
        result = runner.invoke(
            main, ["correct", "-m", str(tmp_path / "nope.json"), "-o", str(tmp_path / "o")]
        )
        assert result.exit_code == 4

    def test_missing_referenced_file_exit_2(self, runner, tmp_path):
        manifest = tmp_path / "m.json"
        manifest.write_text(
            json.dumps(
                {
                    "schema_version": 1,
                    "spectra": [{"path": "ghost.csv", "temperature_K": 5.0}],
                }
            )
        )
        result = runner.invoke(main, ["correct", "-m", str(manifest), "-o", str(tmp_path / "o")])
        assert result.exit_code == 2
        assert "ghost.csv" in result.output

    def test_bad_trace_file_exit_4(self, runner, tmp_path):
        bad = tmp_path / "trace.csv"
        bad.write_text("wrong,header\n1,2\n")
        result = runner.invoke(main, ["t1", "fit-traces", str(bad), "-o", str(tmp_path / "o")])
        assert result.exit_code == 4

    def test_fit_nonconvergence_exit_3(self, runner, dataset, tmp_path, monkeypatch):
        from spclab import relax
        from spclab.errors import FitConvergenceError

        def explode(*args, **kwargs):
            raise FitConvergenceError("synthetic non-convergence")

        monkeypatch.setattr("spclab.cli.relax.fit_local_modes", explode)
        result = runner.invoke(
            main,
            ["t1", "localmode", "-m", str(dataset / "manifest.json"), "-o", str(tmp_path / "o")],
        )
        assert result.exit_code == 3
        assert "did not converge" in result.output


class TestSpcFit:
    def test_fit_recovers_packaged_truth(self, runner, dataset, tmp_path):
        out = tmp_path / "out"
        run_ok(runner, ["spc", "fit", "-m", str(dataset / "manifest.json"), "-o", str(out)])
        payload = json.loads((out / "spc_fit.json").read_text())
        truth = json.loads((dataset / "truth.json").read_text())
        fitted = payload["lambda_per_us"]
        for fit_value, true_value in zip(fitted, truth["lambda_per_us"]):
            assert abs(fit_value - true_value) / true_value < 0.15
        assert (out / "run.json").exists()
        curves = (out / "spc_fit_curves.csv").read_text().splitlines()
        assert curves[0] == "T_K,rate_data,rate_model,contrib_window1,contrib_window2"
        assert len(curves) == 1 + payload["n_points"]

    def test_rerun_byte_identical(self, runner, dataset, tmp_path):
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        run_ok(runner, ["spc", "fit", "-m", str(dataset / "manifest.json"), "-o", str(out1)])
        run_ok(runner, ["spc", "fit", "-m", str(dataset / "manifest.json"), "-o", str(out2)])
        assert (out1 / "spc_fit.json").read_bytes() == (out2 / "spc_fit.json").read_bytes()
        assert (out1 / "spc_fit_curves.csv").read_bytes() == (out2 / "spc_fit_curves.csv").read_bytes()
        run1 = json.loads((out1 / "run.json").read_text())
        run2 = json.loads((out2 / "run.json").read_text())
        run1.pop("timestamp_utc")
        run2.pop("timestamp_utc")
        assert run1 == run2


class TestPipelineCommands:
    def test_correct_and_boseweight(self, runner, dataset, tmp_path):
        out = tmp_path / "out"
        run_ok(runner, ["correct", "-m", str(dataset / "manifest.json"), "-o", str(out)])
        assert (out / "corrected_5K.csv").exists()
        run_ok(
            runner,
            ["boseweight", "-m", str(dataset / "manifest.json"), "-o", str(out), "--temps", "10,40"],
        )
        assert (out / "boseweight_10K.csv").exists()

    def test_t1_commands(self, runner, dataset, tmp_path):
        out = tmp_path / "out"
        manifest = str(dataset / "manifest.json")
        run_ok(runner, ["t1", "assemble", "-m", manifest, "-o", str(out)])
        assert (out / "rates_assembled.csv").exists()
        run_ok(runner, ["t1", "slope", "-m", manifest, "-o", str(out)])
        rows = (out / "t1_slope.csv").read_text().splitlines()
        assert rows[0] == "T_K,slope"
        run_ok(runner, ["t1", "localmode", "-m", manifest, "-o", str(out), "--modes", "2"])
        payload = json.loads((out / "t1_localmode.json").read_text())
        assert len(payload["modes"]) <= 2

    def test_t1_fit_traces(self, runner, tmp_path):
        from spclab import io, synth

        trace = synth.generate_recovery_trace(50.0, beta=0.9, kind="inversion", noise=0.01, seed=3)
        path = tmp_path / "trace.csv"
        io.write_trace_csv(trace, path)
        out = tmp_path / "out"
        run_ok(runner, ["t1", "fit-traces", str(path), "-o", str(out)])
        payload = json.loads((out / "t1_traces.json").read_text())
        assert payload["traces"][0]["t1_us"] == pytest.approx(50.0, rel=0.05)

    def test_spc_scan_density_sweep(self, runner, dataset, tmp_path):
        out = tmp_path / "out"
        manifest = str(dataset / "manifest.json")
        run_ok(runner, ["spc", "scan", "-m", manifest, "-o", str(out), "--grid", "105:265:20"])
        scan = json.loads((out / "spc_scan.json").read_text())
        # noisy gap data: the cutoff lands inside the low-intensity gap
        # (precision on noiseless data is covered in test_spc / acceptance)
        assert 85.0 <= scan["selected_cutoff_cm"] <= 285.0
        assert np.all(np.isfinite(scan["total_rmse_log10"]))
        assert (out / "spc_scan.csv").exists()
        run_ok(runner, ["spc", "density", "-m", manifest, "-o", str(out), "--temps", "20,100"])
        assert (out / "spc_density_20K.csv").exists()
        run_ok(runner, ["spc", "sweep", "-m", manifest, "-o", str(out), "--cutoffs", "600,380"])
        sweep = json.loads((out / "spc_sweep.json").read_text())
        assert len(sweep["cells"]) == 2

    def test_lattice_anharm_modes(self, runner, dataset, tmp_path):
        out = tmp_path / "out"
        manifest = str(dataset / "manifest.json")
        run_ok(runner, ["lattice", "volume", "-m", manifest, "-o", str(out)])
        vol = json.loads((out / "lattice_volume.json").read_text())
        assert vol["reference_source"] == "highest-T fit"
        run_ok(runner, ["anharm", "peaks", "-m", manifest, "-o", str(out)])
        assert (out / "anharm_peaks.json").exists()
        run_ok(runner, ["anharm", "gruneisen", "-m", manifest, "-o", str(out)])
        grun = json.loads((out / "anharm_gruneisen.json").read_text())
        assert grun["modes"][0]["gamma"] > 0  # softening under expansion
        run_ok(runner, ["modes", "rmsd", "-m", manifest, "-o", str(out), "--emax", "400", "--temp", "300"])
        rmsd = json.loads((out / "modes_rmsd.json").read_text())
        assert rmsd["mean_core_A"] > 0
        run_ok(runner, ["modes", "stretch", "-m", manifest, "-o", str(out)])
        stretch = json.loads((out / "modes_stretch.json").read_text())
        assert stretch["ranking"][0]["freq_cm"] == 256.0

    def test_synth_commands(self, runner, tmp_path):
        out = tmp_path / "out"
        run_ok(runner, ["synth", "spectra", "-o", str(out), "--seed", "7"])
        assert (out / "synth_spectrum_5K.csv").exists()
        run_ok(runner, ["synth", "rates", "-o", str(out), "--seed", "7", "--noise", "0.05"])
        assert (out / "synth_rates.csv").exists()
        run_ok(runner, ["synth", "trace", "-o", str(out), "--seed", "7", "--noise", "0.01"])
        assert (out / "synth_trace.csv").exists()
        run_json = json.loads((out / "run.json").read_text())
        assert run_json["seeds"] == {"synth": 7}
        assert "PCG64" in run_json["rng_algorithm"]
