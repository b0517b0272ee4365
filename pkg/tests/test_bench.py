import io
import math

import numpy as np
import pytest

from vlcbeam import bench, driver, scene
from vlcbeam.bench import (
    DEFAULT_LED_GRID,
    ResultRow,
    SweepSpec,
    emit_csv,
    load_scenario,
    place_users,
    run_sweep,
    snr_to_power,
)

SMALL_CONFIG = """
[leds]
subset = 1 2

[users]
user1 = 1.2 1.6 1.7
user2 = 1.9 1.1 1.7
radius = 0.05

[limits]
snr_db = 15
"""


class TestLoadScenario:
    def test_defaults(self):
        sc, sweep = load_scenario("")
        assert sc.num_leds == 9
        np.testing.assert_allclose(sc.led_positions, DEFAULT_LED_GRID)
        assert sc.num_users == 4
        assert np.all(sc.user_centers[:, 2] == 1.7)
        assert sc.user_radius == 0.05
        assert sc.params.semi_angle_deg == 60.0
        assert sc.total_power == pytest.approx(snr_to_power(sc, 15.0))
        assert sweep["snr_db"] == 15.0

    def test_led_subset(self):
        sc, _ = load_scenario("[leds]\nsubset = 1 2 3 4 6 7\n")
        assert sc.num_leds == 6
        np.testing.assert_allclose(
            sc.led_positions, DEFAULT_LED_GRID[[0, 1, 2, 3, 5, 6]]
        )

    def test_subset_out_of_range(self):
        with pytest.raises(ValueError):
            load_scenario("[leds]\nsubset = 1 10\n")

    def test_explicit_coordinates(self):
        sc, _ = load_scenario(SMALL_CONFIG)
        assert sc.num_leds == 2
        np.testing.assert_allclose(sc.user_centers[0], [1.2, 1.6, 1.7])
        assert sc.user_radius == 0.05

    def test_param_overrides(self):
        text = "[params]\nnoise_dbm = -90\ncurrent_min = 10\ncurrent_max = 20\n"
        sc, _ = load_scenario(text)
        assert sc.params.noise_power == pytest.approx(1e-12)
        # bias defaults to the midpoint of the current range
        assert sc.params.dc_bias == pytest.approx(15.0)
        assert sc.params.optical_limit == pytest.approx(5.0)

    def test_total_power_override(self):
        sc, _ = load_scenario("[limits]\ntotal_power = 0.25\n")
        assert sc.total_power == 0.25

    def test_sweep_section(self):
        text = SMALL_CONFIG + "[sweep]\naxis = radius\nvalues = 0.01 0.05\nschemes = rsma\n"
        _, sweep = load_scenario(text)
        assert sweep["axis"] == "radius"
        assert sweep["values"] == (0.01, 0.05)
        assert sweep["schemes"] == ("rsma",)

    def test_malformed_rejected(self):
        with pytest.raises(ValueError):
            load_scenario("just not a config\n")
        with pytest.raises(ValueError):
            load_scenario("[params]\namplitude = abc\n")


class TestPlaceUsers:
    def test_deterministic(self):
        a = place_users(5, seed=3)
        b = place_users(5, seed=3)
        np.testing.assert_array_equal(a, b)

    def test_separation_and_plane(self):
        pts = place_users(8, seed=0)
        assert pts.shape == (8, 3)
        assert np.all(pts[:, 2] == 1.7)
        for i in range(8):
            for j in range(i + 1, 8):
                assert np.linalg.norm(pts[i, :2] - pts[j, :2]) >= 0.2

    def test_impossible_separation(self):
        with pytest.raises(ValueError):
            place_users(10, seed=0, min_separation=5.0)


class TestSnrToPower:
    def test_ten_db_ratio(self):
        sc, _ = load_scenario(SMALL_CONFIG)
        assert snr_to_power(sc, 25.0) / snr_to_power(sc, 15.0) == pytest.approx(10.0)

    def test_matches_mean_gain(self):
        sc, _ = load_scenario(SMALL_CONFIG)
        ests = [scene.estimate_csit(sc, k) for k in range(sc.num_users)]
        gbar = np.mean([e.h_hat @ e.h_hat for e in ests])
        p = snr_to_power(sc, 20.0)
        assert p * gbar / sc.params.noise_power == pytest.approx(100.0)


class TestSweepSpec:
    def setup_method(self):
        self.sc, _ = load_scenario(SMALL_CONFIG)

    def test_bad_axis(self):
        with pytest.raises(ValueError):
            SweepSpec(axis="power", values=(1.0,), base_scenario=self.sc)

    def test_unsorted_or_empty(self):
        with pytest.raises(ValueError):
            SweepSpec(axis="snr_db", values=(15.0, 10.0), base_scenario=self.sc)
        with pytest.raises(ValueError):
            SweepSpec(axis="snr_db", values=(), base_scenario=self.sc)

    def test_bad_scheme(self):
        with pytest.raises(ValueError):
            SweepSpec(axis="snr_db", values=(15.0,), base_scenario=self.sc,
                      schemes=("zf",))

    def test_too_many_users(self):
        with pytest.raises(ValueError):
            SweepSpec(axis="num_users", values=(1, 5), base_scenario=self.sc)


class TestScenarioForAxis:
    def setup_method(self):
        self.sc, _ = load_scenario(SMALL_CONFIG)

    def spec(self, axis, values):
        return SweepSpec(axis=axis, values=values, base_scenario=self.sc)

    def test_snr_axis(self):
        sc = bench._scenario_for(self.spec("snr_db", (20.0,)), 20.0)
        assert sc.total_power == pytest.approx(snr_to_power(self.sc, 20.0))

    def test_current_axis(self):
        sc = bench._scenario_for(self.spec("current_min", (12.0,)), 12.0)
        assert sc.params.current_min == 12.0
        assert sc.params.current_max == 17.0
        assert sc.params.dc_bias == 14.5
        assert sc.params.optical_limit == pytest.approx(2.5)

    def test_user_axis_nested(self):
        sc1 = bench._scenario_for(self.spec("num_users", (1, 2)), 1)
        sc2 = bench._scenario_for(self.spec("num_users", (1, 2)), 2)
        assert sc1.num_users == 1 and sc2.num_users == 2
        np.testing.assert_array_equal(sc2.user_centers[:1], sc1.user_centers)

    def test_led_axis(self):
        sc = bench._scenario_for(self.spec("num_leds", (1, 2)), 1)
        assert sc.num_leds == 1

    def test_radius_axis(self):
        sc = bench._scenario_for(self.spec("radius", (0.01,)), 0.01)
        assert sc.user_radius == 0.01


class TestRunSweep:
    def test_rows_and_ordering(self):
        sc, _ = load_scenario(SMALL_CONFIG)
        spec = SweepSpec(axis="snr_db", values=(15.0,), base_scenario=sc,
                         schemes=("rsma", "sdma"), samples=50)
        rows = run_sweep(spec)
        assert [r.scheme for r in rows] == ["rsma", "sdma"]
        rsma, sdma = rows
        assert rsma.mmf_rate_bps_hz >= sdma.mmf_rate_bps_hz - 1e-6
        for r in rows:
            assert r.axis == "snr_db" and r.axis_value == 15.0
            assert r.mmf_rate_bps_hz > 0.0
            assert r.outer_iters >= 1
            assert r.rank_gap <= 1e-6
            assert r.mc_margin >= -1e-6
            assert r.wall_s > 0.0

    def test_failed_row_recorded(self, monkeypatch):
        sc, _ = load_scenario(SMALL_CONFIG)

        def boom(*a, **k):
            raise RuntimeError("synthetic failure")

        monkeypatch.setattr(driver, "run_mmf", boom)
        spec = SweepSpec(axis="snr_db", values=(15.0,), base_scenario=sc,
                         schemes=("rsma",), samples=10)
        rows = run_sweep(spec)
        assert len(rows) == 1
        assert math.isnan(rows[0].mmf_rate_bps_hz)
        assert math.isnan(rows[0].mc_margin)


class TestEmitCsv:
    def rows(self):
        return [
            ResultRow("rsma", "snr_db", 15.0, 1.23456789, 6, 3.2e-12, 1.7e-4, 2.5),
            ResultRow("sdma", "snr_db", 15.0, 0.87654321, 4, 1.1e-12, 0.0, 1.2),
        ]

    def test_header_and_format(self):
        buf = io.StringIO()
        emit_csv(self.rows(), buf)
        lines = buf.getvalue().split("\n")
        assert lines[0] == ("scheme,axis,axis_value,mmf_rate_bps_hz,"
                            "outer_iters,rank_gap,mc_margin,wall_s")
        assert lines[1].split(",")[3] == "1.23457"  # six significant digits
        assert lines[-1] == ""  # newline-terminated final row
        assert len(lines) == 4

    def test_byte_identical_reruns(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_csv(self.rows(), str(p1))
        emit_csv(self.rows(), str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_round_trip_parse(self):
        buf = io.StringIO()
        emit_csv(self.rows(), buf)
        buf.seek(0)
        import csv

        parsed = list(csv.DictReader(buf))
        assert parsed[0]["scheme"] == "rsma"
        assert float(parsed[0]["mmf_rate_bps_hz"]) == pytest.approx(1.23457)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            emit_csv([], io.StringIO())
