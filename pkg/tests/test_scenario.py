import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ris_cnnar.scenario import (Geometry, SystemConfig, config_hash, dbm_to_watts, dump_config,
                                load_config, normalized_doppler, path_loss, user_distances)


class TestPathLoss:
    def test_reference_distance(self):
        assert path_loss(1.0, 3, 1e-3) == pytest.approx(1e-3, rel=1e-15)

    def test_inverse_square(self):
        assert path_loss(10.0, 2, 1.0) == pytest.approx(0.01, rel=1e-15)

    def test_bs_ris_link(self):
        # 1e-3 / 51**2 evaluated at 50 digits
        assert path_loss(51.0, 2, 1e-3) == pytest.approx(3.8446751249519416e-07, rel=1e-14)

    @pytest.mark.parametrize("d", [0.0, -1.0])
    def test_rejects_non_positive_distance(self, d):
        with pytest.raises(ValueError):
            path_loss(d, 2, 1e-3)

    def test_monotonicity(self):
        d = np.linspace(0.5, 200, 400)
        for alpha in (2.0, 3.0, 3.5):
            assert np.all(np.diff(path_loss(d, alpha, 1e-3)) < 0)
        l0 = np.linspace(1e-5, 1, 50)
        assert np.all(np.diff([path_loss(20.0, 3, g) for g in l0]) > 0)


class TestDistances:
    def test_hand_example(self):
        geom = Geometry(51.0, (3.0,), (4.0,))
        d_bu, d_ru = user_distances(geom, 0)
        assert d_bu == pytest.approx(5.0)
        assert d_ru == pytest.approx(48.16637831516918, rel=1e-14)

    def test_under_ris(self):
        assert user_distances(Geometry(51.0, (51.0,), (2.0,)), 0)[1] == pytest.approx(2.0)

    def test_under_bs(self):
        assert user_distances(Geometry(51.0, (1e-4,), (2.0,)), 0)[0] == pytest.approx(2.0, abs=1e-8)

    def test_bad_index(self):
        with pytest.raises(IndexError):
            user_distances(Geometry(), 5)

    @given(st.floats(0.01, 51.0), st.floats(0.01, 30.0))
    def test_triangle(self, dh, dv):
        d_bu, d_ru = user_distances(Geometry(51.0, (dh,), (dv,)), 0)
        assert d_bu + d_ru >= 51.0 - 1e-9


class TestDoppler:
    def test_paper_speed(self):
        cfg = SystemConfig()
        assert normalized_doppler(5.0, cfg) / cfg.sample_interval == pytest.approx(50.0)

    def test_static(self):
        assert normalized_doppler(0.0, SystemConfig()) == 0.0

    def test_ten_mps(self):
        assert normalized_doppler(10.0, SystemConfig()) == pytest.approx(0.1, rel=1e-12)

    def test_aliasing(self):
        with pytest.raises(ValueError, match="alias"):
            normalized_doppler(60.0, SystemConfig())

    @given(st.floats(0.0, 20.0))
    def test_linear(self, v):
        cfg = SystemConfig()
        assert normalized_doppler(2 * v, cfg) == pytest.approx(2 * normalized_doppler(v, cfg), abs=1e-15)


class TestConfig:
    def test_defaults_match_table(self):
        cfg = SystemConfig()
        assert (cfg.n_bs_antennas, cfg.ris_elements_total, cfg.ris_groups) == (12, 225, 15)
        assert cfg.pilot_power == pytest.approx(1e-3)
        assert cfg.data_power == pytest.approx(10 ** (5 / 10) * 1e-3)
        assert cfg.noise_variance == pytest.approx(10 ** (-17.4) * 1e-3)
        assert cfg.pathloss_ref == pytest.approx(1e-3)
        assert cfg.pathloss_exponents == (3.0, 3.0, 2.0)
        assert cfg.loading == 0.1

    @pytest.mark.parametrize("changes", [
        {"ris_groups": 14},
        {"pilot_slots": 15},
        {"n_users": 0},
        {"ar_order": 40},
        {"noise_variance": 0.0},
        {"loading": 0.0},
    ])
    def test_invariants(self, changes):
        with pytest.raises(ValueError):
            SystemConfig().replace(**changes)

    def test_geometry_invariants(self):
        with pytest.raises(ValueError):
            Geometry(51.0, (0.0,), (2.0,))
        with pytest.raises(ValueError):
            Geometry(51.0, (60.0,), (2.0,))

    def test_round_trip(self, tmp_path):
        cfg = SystemConfig(train_intervals=30, rng_seed=7)
        geom = Geometry(51.0, (10.0, 20.0), (2.0, 3.0))
        path = tmp_path / "c.cfg"
        path.write_text(dump_config(cfg, geom))
        cfg2, geom2 = load_config(path)
        assert cfg2.train_intervals == 30 and cfg2.rng_seed == 7
        assert cfg2.data_power == pytest.approx(cfg.data_power, rel=1e-12)
        assert geom2 == geom
        assert config_hash(cfg2, geom2) == config_hash(cfg, geom)

    def test_dbm_units(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("[system]\npilot_power_dbm = 10\npathloss_ref_db = -20\n")
        cfg, _ = load_config(path)
        assert cfg.pilot_power == pytest.approx(dbm_to_watts(10.0)) == pytest.approx(1e-2)
        assert cfg.pathloss_ref == pytest.approx(1e-2)

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("[system]\nbogus = 1\n")
        with pytest.raises(KeyError):
            load_config(path)

    def test_shadowing_gain(self):
        assert SystemConfig().shadowing_gain == pytest.approx(0.1)
        assert math.isclose(SystemConfig().group_size, 15)
