"""Geometry, conversions, and channel realization tests."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isacopt.scenario import (
    ArrayConfig,
    PlacementRange,
    PolarPlacement,
    Scenario,
    db_to_linear,
    dbm_to_watts,
    load_scenario,
    paper_scenario,
    random_d2d_placement,
    realize_channels,
    save_scenario,
    steering_vector,
)


class TestConversions:
    def test_dbm_to_watts(self):
        assert dbm_to_watts(-90.0) == pytest.approx(1e-12, rel=1e-12)
        assert dbm_to_watts(30.0) == pytest.approx(1.0, rel=1e-12)

    def test_db_to_linear(self):
        assert db_to_linear(-30.0) == pytest.approx(1e-3, rel=1e-12)
        assert db_to_linear(0.0) == 1.0


class TestSteeringVector:
    def test_broadside(self):
        a = steering_vector(0.0, 4)
        assert np.allclose(a, 0.5 * np.ones(4))

    def test_endfire(self):
        a = steering_vector(90.0, 2)
        assert np.allclose(a, np.array([1.0, -1.0]) / math.sqrt(2.0))

    def test_thirty_degrees(self):
        a = steering_vector(30.0, 2)
        assert np.allclose(a, np.array([1.0, 1.0j]) / math.sqrt(2.0))

    @given(
        st.floats(min_value=-89.9, max_value=89.9),
        st.integers(min_value=1, max_value=64),
    )
    @settings(max_examples=80, deadline=None)
    def test_unit_norm(self, angle, n):
        assert np.linalg.norm(steering_vector(angle, n)) == pytest.approx(
            1.0, abs=1e-12
        )

    def test_rejects_empty_array(self):
        with pytest.raises(ValueError):
            steering_vector(0.0, 0)


class TestPlacements:
    def test_polar_to_cartesian(self):
        x, y = PolarPlacement(30.0, 2.0).xy()
        assert x == pytest.approx(1.0)
        assert y == pytest.approx(math.sqrt(3.0))

    def test_angle_bounds(self):
        with pytest.raises(ValueError):
            PolarPlacement(90.0, 1.0)
        with pytest.raises(ValueError):
            PolarPlacement(0.0, 0.0)

    def test_scenario_length_checks(self):
        s = paper_scenario()
        with pytest.raises(ValueError):
            Scenario(
                array=s.array,
                cus=s.cus,
                d2d_tx=s.d2d_tx[:1],
                d2d_rx=s.d2d_rx,
                target_angle_deg=0.0,
                clutter_angles_deg=s.clutter_angles_deg,
                target_power_gain=s.target_power_gain,
                clutter_power_gains=s.clutter_power_gains,
                si_power_gain=s.si_power_gain,
                pathloss_ref=s.pathloss_ref,
                pathloss_exp=s.pathloss_exp,
                noise_cu=s.noise_cu,
                noise_d2d=s.noise_d2d,
                noise_radar=s.noise_radar,
                p_bs_max=s.p_bs_max,
                p_d2d_max=s.p_d2d_max,
                gamma_r=s.gamma_r,
            )


class TestChannels:
    def test_pathloss_magnitude(self):
        # sqrt(1e-3 * 20^-3) for the direct D2D link at 20 m
        s = paper_scenario()
        ch = realize_channels(s, seed=0)
        for m in range(s.n_d2d):
            d = math.dist(s.d2d_tx[m].xy(), s.d2d_rx[m].xy())
            assert d == pytest.approx(20.0, abs=1e-9)
            expect = math.sqrt(1e-3 * 20.0 ** -3.0)
            assert abs(ch.h_d2dtx_d2drx[m, m]) == pytest.approx(expect, rel=1e-12)
            assert expect == pytest.approx(3.5355339e-4, rel=1e-6)

    def test_bs_cu_direction(self):
        # a CU at broadside gets a channel collinear with the all-ones vector
        s = paper_scenario()
        s = type(s)(
            **{
                **s.__dict__,
                "cus": (PolarPlacement(1e-9, 50.0), s.cus[1]),
            }
        )
        ch = realize_channels(s, seed=0)
        h = ch.h_bs_cu[0]
        assert np.allclose(h / h[0], np.ones(s.array.n_tx), atol=1e-6)

    def test_channel_gains_and_shapes(self):
        s = paper_scenario(n_tx=8, n_rx=4)
        ch = realize_channels(s, seed=3)
        assert ch.h_bs_cu.shape == (2, 8)
        assert ch.h_d2dtx_bs.shape == (2, 4)
        assert ch.h_si.shape == (4, 8)
        assert np.allclose(np.abs(ch.h_si) ** 2, s.si_power_gain)
        assert abs(ch.target_amp) ** 2 == pytest.approx(s.target_power_gain)
        assert np.allclose(np.abs(ch.clutter_amps) ** 2, s.clutter_power_gains)

    def test_deterministic(self):
        s = paper_scenario()
        a = realize_channels(s, seed=42)
        b = realize_channels(s, seed=42)
        for field in (
            "h_bs_cu",
            "h_bs_d2drx",
            "h_d2dtx_bs",
            "h_d2dtx_d2drx",
            "h_d2dtx_cu",
            "h_si",
        ):
            assert np.array_equal(getattr(a, field), getattr(b, field))
        assert a.target_amp == b.target_amp

    def test_distance_monotonicity(self):
        s = paper_scenario()
        gains = []
        for d in (20.0, 40.0, 80.0):
            s2 = type(s)(**{**s.__dict__, "cus": (PolarPlacement(10.0, d), s.cus[1])})
            ch = realize_channels(s2, seed=0)
            gains.append(np.linalg.norm(ch.h_bs_cu[0]))
        assert gains[0] > gains[1] > gains[2]


class TestRandomPlacement:
    def test_rx_within_box(self):
        s = paper_scenario()
        for seed in range(20):
            s2 = random_d2d_placement(s, seed=seed)
            for rx, box in zip(s2.d2d_rx, s.d2d_rx_ranges):
                assert box.angle_deg[0] <= rx.angle_deg <= box.angle_deg[1]
                assert box.distance_m[0] <= rx.distance_m <= box.distance_m[1]

    def test_pair_separation(self):
        s = paper_scenario()
        for seed in range(20):
            s2 = random_d2d_placement(s, seed=seed)
            for tx, rx in zip(s2.d2d_tx, s2.d2d_rx):
                assert math.dist(tx.xy(), rx.xy()) == pytest.approx(20.0, abs=1e-9)

    def test_degenerate_interval(self):
        s = paper_scenario()
        s2 = type(s)(
            **{
                **s.__dict__,
                "d2d_rx_ranges": (
                    PlacementRange((-35.0, -35.0), (75.0, 75.0)),
                    PlacementRange((70.0, 70.0), (75.0, 75.0)),
                ),
            }
        )
        out = random_d2d_placement(s2, seed=5)
        assert out.d2d_rx[0].angle_deg == -35.0
        assert out.d2d_rx[0].distance_m == 75.0

    def test_deterministic(self):
        s = paper_scenario()
        a = random_d2d_placement(s, seed=9)
        b = random_d2d_placement(s, seed=9)
        assert a.d2d_tx == b.d2d_tx and a.d2d_rx == b.d2d_rx


class TestConfigRoundTrip:
    def test_save_load(self, tmp_path):
        s = paper_scenario(n_tx=8)
        path = str(tmp_path / "scenario.json")
        save_scenario(s, path)
        s2 = load_scenario(path)
        assert s2.array == s.array
        assert s2.cus == s.cus
        assert s2.p_bs_max == pytest.approx(s.p_bs_max, rel=1e-12)
        assert s2.gamma_r == pytest.approx(s.gamma_r, rel=1e-12)
        assert s2.d2d_rx_ranges == s.d2d_rx_ranges
