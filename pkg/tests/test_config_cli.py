import json

import numpy as np
import pytest

from vivrom import config as cfgmod
from vivrom.cli import main
from vivrom.exceptions import ConfigError
from vivrom.signals import TimeSeries, read_csv, write_csv

VDP = {"mu": 0.05, "amp": 1.18, "omega0_sq": 2117.0, "gain": 0.26, "forcing_kind": "acceleration"}


def write_config(path, **sections):
    cfg = {"vdp": VDP, "synth": {"T": 2.0, "spinup": 2.0}}
    cfg.update(sections)
    path.write_text(json.dumps(cfg))
    return path


class TestSchema:
    def test_valid(self):
        cfg = {"vdp": VDP, "coupling": {"tol": 1e-6, "omega0": 0.5}, "beam": {"n_elements": 20}}
        assert cfgmod.validate(cfg) is cfg

    def test_pointer_to_bad_value(self):
        with pytest.raises(ConfigError) as exc:
            cfgmod.validate({"coupling": {"omega0": 1.5}})
        assert exc.value.pointer == "/coupling/omega0"

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as exc:
            cfgmod.validate({"beam": {"E": 1.0, "Young": 2.0}})
        assert exc.value.pointer == "/beam/Young" and "unknown key" in str(exc.value)

    def test_missing_required(self):
        with pytest.raises(ConfigError):
            cfgmod.validate({"vdp": {"mu": 1.0}})

    def test_bad_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{nope")
        with pytest.raises(ConfigError):
            cfgmod.load(tmp_path / "c.json")

    def test_required_section(self):
        with pytest.raises(ConfigError):
            cfgmod.require({}, "vdp")


class TestUsage:
    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_no_subcommand(self):
        assert main([]) == 1

    def test_bad_seed(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        assert main(["synth", "--config", str(cfg), "--seed", "-3"]) == 1

    def test_config_required(self, tmp_path):
        assert main(["synth", "--out", str(tmp_path)]) == 1
        assert main(["simulate", "--out", str(tmp_path)]) == 1

    def test_invalid_config_names_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"vdp": {**VDP, "x": 1}}))
        assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "/vdp/x" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_help(self):
        assert main(["--help"]) == 0


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    cfg = write_config(d / "c.json")
    assert main(["synth", "--config", str(cfg), "--seed", "7", "--out", str(d)]) == 0
    return d / "dataset.csv"


class TestSynth:
    def test_channels(self, dataset):
        data = read_csv(dataset)
        assert set(data) == {"d_CF", "L_c", "D_c_fluct"}
        assert len(data["L_c"]) == 2001 and data["L_c"].dt == pytest.approx(1e-3)

    def test_deterministic(self, dataset, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        main(["synth", "--config", str(cfg), "--seed", "7", "--out", str(tmp_path)])
        assert (tmp_path / "dataset.csv").read_bytes() == dataset.read_bytes()

    def test_seed_changes_data(self, dataset, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        main(["synth", "--config", str(cfg), "--seed", "8", "--out", str(tmp_path)])
        assert (tmp_path / "dataset.csv").read_bytes() != dataset.read_bytes()

    def test_noise_level(self, tmp_path):
        runs = {}
        for noise in (0.0, 0.05):
            d = tmp_path / str(noise)
            cfg = write_config(tmp_path / f"{noise}.json", synth={"T": 20.0, "noise": noise})
            assert main(["synth", "--config", str(cfg), "--seed", "3", "--out", str(d)]) == 0
            runs[noise] = read_csv(d / "dataset.csv")
        for ch in ("L_c", "D_c_fluct"):
            clean = runs[0.0][ch].values
            added = runs[0.05][ch].values - clean
            target = 0.05 * np.sqrt(np.mean(clean**2))
            assert np.std(added) == pytest.approx(target, rel=0.05)
        np.testing.assert_array_equal(runs[0.05]["d_CF"].values, runs[0.0]["d_CF"].values)

    def test_no_motion(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", synth={"T": 1.0, "motion": {"kind": "none"}})
        assert main(["synth", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        assert not np.any(read_csv(tmp_path / "dataset.csv")["d_CF"].values)


class TestIdentify:
    def test_round_trip(self, dataset, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        code = main(["identify", str(dataset), "--config", str(cfg), "--variant", "acceleration",
                     "--out", str(tmp_path)])
        assert code == 0
        assert sorted(p.name for p in tmp_path.glob("report_*.json")) == ["report_acceleration.json"]
        rep = json.loads((tmp_path / "report_acceleration.json").read_text())
        assert set(rep) >= {"variant", "best_fit_percent", "params", "iterations", "converged"}
        assert rep["converged"] and rep["best_fit_percent"] >= 99.0

    def test_inline_model_file(self, dataset, tmp_path):
        assert main(["identify", str(dataset), "--variant", "lc2", "--out", str(tmp_path)]) == 0
        model = json.loads((tmp_path / "model_lc2.json").read_text())
        assert set(model) == {"n", "A", "B", "C", "D", "continuous_time", "dt_identified"}
        assert model["continuous_time"] is False

    def test_missing_channel(self, tmp_path):
        t = np.arange(100) * 0.01
        write_csv(tmp_path / "d.csv", {"L_c": TimeSeries(0.0, 0.01, np.sin(t))})
        assert main(["identify", str(tmp_path / "d.csv"), "--variant", "acceleration",
                     "--out", str(tmp_path / "o")]) == 1
        assert not (tmp_path / "o").exists()

    def test_uneven_sampling(self, tmp_path):
        (tmp_path / "d.csv").write_text("time,L_c,d_CF\n0,1,0\n0.01,2,0\n0.03,3,0\n")
        assert main(["identify", str(tmp_path / "d.csv"), "--variant", "velocity"]) == 1


class TestSpectrum:
    def write(self, path, values, dt=0.01):
        write_csv(path, {"y": TimeSeries(0.0, dt, values)})

    def test_peak(self, tmp_path):
        t = np.arange(4096) * 0.01
        self.write(tmp_path / "s.csv", np.sin(2 * np.pi * 2.0 * t))
        assert main(["spectrum", str(tmp_path / "s.csv"), "--channel", "y", "--out", str(tmp_path)]) == 0
        table = np.loadtxt(tmp_path / "spectrum_y.csv", delimiter=",", skiprows=1)
        assert table[np.argmax(table[:, 1]), 0] == pytest.approx(2.0, abs=0.1)

    def test_asd_is_root_psd(self, tmp_path, rng):
        self.write(tmp_path / "s.csv", rng.standard_normal(2048))
        main(["spectrum", str(tmp_path / "s.csv"), "--channel", "y", "--out", str(tmp_path / "p")])
        main(["spectrum", str(tmp_path / "s.csv"), "--channel", "y", "--asd", "--out", str(tmp_path / "a")])
        psd = np.loadtxt(tmp_path / "p" / "spectrum_y.csv", delimiter=",", skiprows=1)
        asd = np.loadtxt(tmp_path / "a" / "spectrum_y.csv", delimiter=",", skiprows=1)
        np.testing.assert_allclose(asd[:, 1], np.sqrt(psd[:, 1]), rtol=1e-8)

    def test_empty_file(self, tmp_path):
        (tmp_path / "e.csv").write_text("")
        assert main(["spectrum", str(tmp_path / "e.csv"), "--channel", "y"]) == 1

    def test_missing_channel(self, tmp_path):
        self.write(tmp_path / "s.csv", np.zeros(64))
        assert main(["spectrum", str(tmp_path / "s.csv"), "--channel", "z"]) == 1


class TestBestFitAndOrder:
    def test_bestfit(self, tmp_path, capsys):
        t = np.arange(500) * 0.01
        y = np.sin(t)
        write_csv(tmp_path / "a.csv", {"y": TimeSeries(0.0, 0.01, y)})
        write_csv(tmp_path / "b.csv", {"y": TimeSeries(0.0, 0.01, 0.5 * y)})
        assert main(["bestfit", str(tmp_path / "a.csv"), str(tmp_path / "b.csv"), "--channel", "y"]) == 0
        expected = 100 * (1 - np.linalg.norm(0.5 * y) / np.linalg.norm(y - y.mean()))
        assert float(capsys.readouterr().out) == pytest.approx(expected, abs=1e-5)

    def test_constant_reference(self, tmp_path):
        write_csv(tmp_path / "a.csv", {"y": TimeSeries(0.0, 0.01, np.ones(50))})
        assert main(["bestfit", str(tmp_path / "a.csv"), str(tmp_path / "a.csv"), "--channel", "y"]) == 1

    def test_hankel_order(self, dataset, tmp_path, capsys):
        assert main(["hankel-order", str(dataset), "--rel-threshold", "1e-6", "--out", str(tmp_path)]) == 0
        assert int(capsys.readouterr().out) == 2
        assert (tmp_path / "hankel_singular_values.csv").exists()


class TestSimulate:
    def config(self, path, gain):
        cfg = {"vdp": {**VDP, "gain": gain}, "beam": {"n_elements": 10},
               "coupling": {"T": 0.2, "dcm": 0.0}, "hydro": {"U": 1.4}}
        if gain == 0.0:
            cfg["vdp"]["ic"] = [0.0, 0.0]
        path.write_text(json.dumps(cfg))
        return path

    def test_at_rest(self, tmp_path):
        cfg = self.config(tmp_path / "c.json", 0.0)
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"),
                     "--snapshot-every", "0.1"]) == 0
        mid = np.loadtxt(tmp_path / "o" / "midpoint_trajectory.csv", delimiter=",", skiprows=1)
        assert mid.shape == (201, 3) and not np.any(mid[:, 1:])
        assert sorted(p.name for p in (tmp_path / "o" / "snapshots").iterdir()) == [
            "snapshot_0000000.csv", "snapshot_0000100.csv", "snapshot_0000200.csv"]

    def test_rerun_identical(self, tmp_path):
        cfg = self.config(tmp_path / "c.json", 0.26)
        for d in ("a", "b"):
            assert main(["simulate", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / d)]) == 0
        assert ((tmp_path / "a" / "midpoint_trajectory.csv").read_bytes()
                == (tmp_path / "b" / "midpoint_trajectory.csv").read_bytes())

    def test_coupling_failure(self, tmp_path):
        cfg = json.loads(self.config(tmp_path / "c.json", 0.26).read_text())
        cfg["coupling"].update(tol=1e-14, max_subiter=1)
        (tmp_path / "c.json").write_text(json.dumps(cfg))
        assert main(["simulate", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == 3
        diag = json.loads((tmp_path / "o" / "diagnostics.json").read_text())
        assert diag["error"] == "CouplingError" and len(diag["residual_history"]) == 1

    def test_missing_model_file(self, tmp_path):
        cfg = json.loads(self.config(tmp_path / "c.json", 0.26).read_text())
        cfg["ssmodel"] = "nope.json"
        (tmp_path / "c.json").write_text(json.dumps(cfg))
        assert main(["simulate", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == 1
