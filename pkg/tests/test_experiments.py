import json

import numpy as np
import pytest

from ris_cnnar.classifier import DopplerClassBank, NetConfig, build_convnet
from ris_cnnar.experiments import (ExperimentSpec, ResultTable, run_experiment, run_nmse_vs_doppler,
                                   run_nmse_vs_horizon, run_overhead, run_se_vs_distance, trial_rng)
from ris_cnnar.scenario import Geometry, SystemConfig


@pytest.fixture(scope="module")
def tiny():
    cfg = SystemConfig(n_bs_antennas=2, ris_elements_total=4, ris_groups=2, pilot_slots=3,
                       train_intervals=25, predict_intervals=20, ar_order=8,
                       doppler_grid=(20.0, 50.0, 80.0))
    bank = DopplerClassBank.from_config(cfg)
    net = build_convnet((4, 25), len(bank), seed=0, arch=NetConfig(conv_filters=(2,), kernel=3, hidden=(8,)))
    return cfg, Geometry(), net, bank


class TestResultTable:
    def test_csv_format(self):
        t = ResultTable("x", ["a", "b"], metadata={"experiment": "overhead", "seed": 3, "extra": 1})
        t.add("m", 0.1)
        assert t.to_csv() == "# experiment=overhead\n# seed=3\na,b\nm,0.1\n"

    def test_row_length(self):
        with pytest.raises(ValueError):
            ResultTable("x", ["a"]).add(1, 2)

    def test_select(self):
        t = ResultTable("x", ["m", "v"])
        t.add("p", 1)
        t.add("q", 2)
        assert t.select(m="q") == [{"m": "q", "v": 2}]
        assert t.column("v") == [1, 2]

    def test_write_sidecar(self, tmp_path):
        t = ResultTable("x", ["a"], metadata={"seed": 0})
        t.add(1)
        path = t.write(tmp_path, wall_clock=1.5)
        assert path.read_text() == "# seed=0\na\n1\n"
        assert json.loads((tmp_path / "x.meta.json").read_text())["wall_clock_s"] == 1.5


class TestSpec:
    def test_unknown_experiment(self):
        with pytest.raises(ValueError):
            ExperimentSpec("fig9")

    def test_trials(self):
        with pytest.raises(ValueError):
            ExperimentSpec("overhead", trials=0)

    def test_substreams_independent(self):
        a = trial_rng(0, "overhead", 1).random()
        assert a != trial_rng(0, "overhead", 2).random()
        assert a != trial_rng(0, "se-vs-distance", 1).random()
        assert a == trial_rng(0, "overhead", 1).random()


class TestRunners:
    def test_horizon_table(self, tiny):
        cfg, geom, net, bank = tiny
        t = run_nmse_vs_horizon(ExperimentSpec("nmse-vs-horizon", trials=3), cfg, geom, net, bank)
        methods = sorted(set(t.column("method")))
        assert methods == sorted(["AR(Q=8)", "AR(Q=16)", "AR(Q=24)", "CNN-AR",
                                  "CNN-AR(oracle class)", "CNN-AR(adjacent class)"])
        assert len(t.rows) == 6 * 20
        for row in t.select(method="AR(Q=8)"):
            assert row["nmse_q25"] <= row["nmse_median"] <= row["nmse_q75"]

    def test_doppler_table(self, tiny):
        cfg, geom, net, bank = tiny
        t = run_nmse_vs_doppler(ExperimentSpec("nmse-vs-doppler", trials=2), cfg, geom, net, bank)
        assert sorted(set(t.column("f_d_hz"))) == [20.0, 50.0, 80.0]
        assert sorted(set(t.column("horizon"))) == [10, 20]
        with pytest.raises(ValueError):
            run_nmse_vs_doppler(ExperimentSpec("nmse-vs-doppler", trials=1), cfg, geom, net, bank,
                                horizons=(30,))

    def test_se_table(self, tiny):
        cfg, geom, net, bank = tiny
        t = run_se_vs_distance(ExperimentSpec("se-vs-distance", trials=2), cfg, geom, net, bank,
                               distances=(1.0, 25.0))
        perfect = {r["d_h_m"]: r["se_median"] for r in t.select(method="perfect")}
        for r in t.select(method="AR(Q=8)"):
            assert r["se_median"] <= perfect[r["d_h_m"]] + 1e-9

    def test_overhead_table(self):
        t = run_overhead(ExperimentSpec("overhead"), SystemConfig(), Geometry())
        row = t.select(V=20, P=20)[0]
        assert (row["conventional"], row["proposed"], row["ratio"]) == (216960, 7680, 28.25)

    def test_requires_network(self, tiny, tmp_path):
        cfg, geom, _, _ = tiny
        with pytest.raises(FileNotFoundError):
            run_experiment(ExperimentSpec("nmse-vs-horizon", out_dir=str(tmp_path)), cfg, geom)

    def test_byte_identical(self, tiny, tmp_path):
        cfg, geom, net, bank = tiny
        texts = []
        for sub in ("a", "b"):
            spec = ExperimentSpec("nmse-vs-doppler", trials=2, out_dir=str(tmp_path / sub), seed=4)
            texts.append(run_experiment(spec, cfg, geom, net, bank).read_bytes())
        assert texts[0] == texts[1]
        spec = ExperimentSpec("nmse-vs-doppler", trials=2, out_dir=str(tmp_path / "c"), seed=5)
        assert run_experiment(spec, cfg, geom, net, bank).read_bytes() != texts[0]
