"""SINR / rate / beampattern evaluation against independent oracles."""

import math
from dataclasses import replace

import numpy as np
import pytest

from isacopt.metrics import (
    Solution,
    beampatterns,
    clutter_plus_si,
    covariance,
    cu_sinr,
    d2d_sinr,
    evaluate,
    radar_sinr,
    write_beampattern_csv,
)
from isacopt.scenario import ChannelSet, paper_scenario, realize_channels, steering_vector


def small_scenario(n_tx=4, n_rx=4):
    return paper_scenario(n_tx=n_tx, n_rx=n_rx)


def random_solution(s, rng, with_u=True):
    K, M = s.n_cu, s.n_d2d
    nt, nr = s.array.n_tx, s.array.n_rx
    w = (rng.normal(size=(K, nt)) + 1j * rng.normal(size=(K, nt))) * math.sqrt(
        s.p_bs_max / (2 * K * nt)
    )
    u = None
    if with_u:
        u = rng.normal(size=nr) + 1j * rng.normal(size=nr)
    p = rng.uniform(0.2, 1.0, M) * np.asarray(s.p_d2d_max)
    return Solution(w=w, big_w=None, u=u, p=p)


class TestCovariance:
    def test_single_beam(self):
        sol = Solution(w=np.array([[1.0, 0.0]]), big_w=None, u=None, p=np.zeros(0))
        assert np.allclose(covariance(sol), [[1.0, 0.0], [0.0, 0.0]])

    def test_orthonormal_beams(self):
        w = np.eye(2, dtype=complex)
        sol = Solution(w=w, big_w=None, u=None, p=np.zeros(0))
        f = covariance(sol)
        assert np.allclose(f, np.eye(2))
        assert np.trace(f) == pytest.approx(2.0)

    def test_outer_product_oracle(self):
        rng = np.random.default_rng(0)
        w = rng.normal(size=(3, 5)) + 1j * rng.normal(size=(3, 5))
        sol = Solution(w=w, big_w=None, u=None, p=np.zeros(0))
        brute = np.zeros((5, 5), dtype=complex)
        for k in range(3):
            brute += np.outer(w[k], w[k].conj())
        assert np.abs(covariance(sol) - brute).max() < 1e-12

    def test_big_w_authoritative(self):
        rng = np.random.default_rng(1)
        w = rng.normal(size=(2, 3)) + 1j * rng.normal(size=(2, 3))
        big_w = [np.outer(w[k], w[k].conj()) for k in range(2)]
        sol = Solution(w=None, big_w=big_w, u=None, p=np.zeros(0))
        assert np.abs(covariance(sol) - sum(big_w)).max() < 1e-14


def manual_cu_sinr(ch, s, sol, k):
    h = ch.h_bs_cu[k]
    sig = abs(np.vdot(h, sol.w[k])) ** 2
    interf = sum(
        abs(np.vdot(h, sol.w[kk])) ** 2 for kk in range(sol.w.shape[0]) if kk != k
    )
    d2d = sum(
        sol.p[m] * abs(ch.h_d2dtx_cu[m, k]) ** 2 for m in range(len(sol.p))
    )
    return sig / (interf + d2d + s.noise_cu)


def manual_d2d_sinr(ch, s, sol, m):
    sig = sol.p[m] * abs(ch.h_d2dtx_d2drx[m, m]) ** 2
    other = sum(
        sol.p[mm] * abs(ch.h_d2dtx_d2drx[mm, m]) ** 2
        for mm in range(len(sol.p))
        if mm != m
    )
    h = ch.h_bs_d2drx[m]
    bs = sum(abs(np.vdot(h, sol.w[k])) ** 2 for k in range(sol.w.shape[0]))
    return sig / (other + bs + s.noise_d2d)


class TestLinkSinrs:
    def test_cu_single_user(self):
        s = small_scenario(n_tx=2)
        ch = realize_channels(s, seed=0)
        ch2 = replace(
            ch,
            h_bs_cu=np.array([[1.0 + 0j, 0.0], [0.0, 1.0 + 0j]]),
        )
        s2 = replace(s, noise_cu=1.0)
        sol = Solution(
            w=np.array([[2.0 + 0j, 0.0], [0.0, 0.0]]),
            big_w=None,
            u=None,
            p=np.zeros(2),
        )
        assert cu_sinr(ch2, s2, sol, 0) == pytest.approx(4.0)

    def test_orthogonal_beam_gives_zero(self):
        s = small_scenario(n_tx=2)
        ch = realize_channels(s, seed=0)
        ch2 = replace(ch, h_bs_cu=np.array([[1.0 + 0j, 0.0], [0.0, 1.0 + 0j]]))
        sol = Solution(
            w=np.array([[0.0, 1.0 + 0j], [1.0 + 0j, 0.0]]),
            big_w=None,
            u=None,
            p=np.zeros(2),
        )
        assert cu_sinr(ch2, s, sol, 0) == 0.0

    def test_d2d_by_hand(self):
        s = small_scenario()
        ch = realize_channels(s, seed=0)
        ch2 = replace(
            ch,
            h_d2dtx_d2drx=np.array([[2.0 + 0j, 0.0], [0.0, 1.0]]),
            h_bs_d2drx=np.zeros_like(ch.h_bs_d2drx),
        )
        s2 = replace(s, noise_d2d=1.0)
        sol = Solution(
            w=np.zeros((2, s.array.n_tx), dtype=complex),
            big_w=None,
            u=None,
            p=np.array([1.0, 0.0]),
        )
        # p=1, |h|^2=4, no BS term, sigma^2=1 -> SINR 4/(0+0+1)... with the
        # spec's worked example the BS term carries 1: emulate via noise 2?
        assert d2d_sinr(ch2, s2, sol, 0) == pytest.approx(4.0)
        assert d2d_sinr(ch2, s2, sol, 1) == 0.0

    def test_random_instance_matches_manual(self):
        s = small_scenario()
        ch = realize_channels(s, seed=2)
        rng = np.random.default_rng(5)
        sol = random_solution(s, rng, with_u=False)
        for k in range(s.n_cu):
            assert cu_sinr(ch, s, sol, k) == pytest.approx(
                manual_cu_sinr(ch, s, sol, k), rel=1e-10
            )
        for m in range(s.n_d2d):
            assert d2d_sinr(ch, s, sol, m) == pytest.approx(
                manual_d2d_sinr(ch, s, sol, m), rel=1e-10
            )

    def test_quadratic_forms_agree_with_vector_forms(self):
        s = small_scenario()
        ch = realize_channels(s, seed=3)
        rng = np.random.default_rng(7)
        sol = random_solution(s, rng, with_u=False)
        sol_q = Solution(
            w=None,
            big_w=[np.outer(sol.w[k], sol.w[k].conj()) for k in range(s.n_cu)],
            u=None,
            p=sol.p,
        )
        for k in range(s.n_cu):
            assert cu_sinr(ch, s, sol_q, k) == pytest.approx(
                cu_sinr(ch, s, sol, k), rel=1e-10
            )
        for m in range(s.n_d2d):
            assert d2d_sinr(ch, s, sol_q, m) == pytest.approx(
                d2d_sinr(ch, s, sol, m), rel=1e-10
            )


def clean_channelset(s, alpha0):
    """Channels with no clutter response and no self-interference."""
    K, M = s.n_cu, s.n_d2d
    nt, nr = s.array.n_tx, s.array.n_rx
    return ChannelSet(
        h_bs_cu=np.zeros((K, nt), dtype=complex),
        h_bs_d2drx=np.zeros((M, nt), dtype=complex),
        h_d2dtx_bs=np.zeros((M, nr), dtype=complex),
        h_d2dtx_d2drx=np.ones((M, M), dtype=complex),
        h_d2dtx_cu=np.ones((M, K), dtype=complex),
        h_si=np.zeros((nr, nt), dtype=complex),
        target_amp=alpha0,
        clutter_amps=np.zeros(len(s.clutter_angles_deg), dtype=complex),
    )


class TestRadarSinr:
    def test_clean_case_value(self):
        # F = P a_t a_t^H, u = a_r, no clutter/SI/D2D: |a0|^2 P / sigma_r^2
        s = replace(
            small_scenario(),
            target_power_gain=1e-11,
            noise_radar=1e-12,
        )
        ch = clean_channelset(s, alpha0=math.sqrt(1e-11))
        nt, nr = s.array.n_tx, s.array.n_rx
        a_t = steering_vector(s.target_angle_deg, nt)
        a_r = steering_vector(s.target_angle_deg, nr)
        sol = Solution(
            w=np.array([a_t]),  # P = 1 W
            big_w=None,
            u=a_r,
            p=np.zeros(s.n_d2d),
        )
        assert radar_sinr(ch, s, sol) == pytest.approx(10.0, rel=1e-9)

    def test_scale_invariance_in_u(self):
        s = small_scenario()
        ch = realize_channels(s, seed=1)
        rng = np.random.default_rng(11)
        sol = random_solution(s, rng)
        base = radar_sinr(ch, s, sol)
        for _ in range(10):
            c = rng.normal() + 1j * rng.normal()
            if abs(c) < 1e-3:
                continue
            scaled = Solution(w=sol.w, big_w=None, u=c * sol.u, p=sol.p)
            assert radar_sinr(ch, s, scaled) == pytest.approx(base, rel=1e-10)

    def test_monte_carlo_symbol_oracle(self):
        # expectation form vs symbol-level simulation of the filtered return
        s = small_scenario(n_tx=4, n_rx=4)
        ch = realize_channels(s, seed=4)
        rng = np.random.default_rng(13)
        sol = random_solution(s, rng)
        expect = radar_sinr(ch, s, sol)

        a_t = steering_vector(s.target_angle_deg, 4)
        a_r = steering_vector(s.target_angle_deg, 4)
        a0 = ch.target_amp * np.outer(a_r, a_t.conj())
        b = clutter_plus_si(ch, s)
        u = sol.u
        draws = 1_000_000
        num = den = 0.0
        gen = np.random.default_rng(99)
        for _ in range(10):
            t = draws // 10
            sym = (gen.standard_normal((t, 2)) + 1j * gen.standard_normal((t, 2))) / math.sqrt(2)
            x = sym @ sol.w  # (t, N_t)
            num += float(np.mean(np.abs(x @ (u.conj() @ a0)) ** 2)) / 10
            den_part = np.abs(x @ (u.conj() @ b)) ** 2
            sym_d = (gen.standard_normal((t, 2)) + 1j * gen.standard_normal((t, 2))) / math.sqrt(2)
            coef = np.array([u.conj() @ ch.h_d2dtx_bs[m] for m in range(2)])
            d2d = (np.sqrt(sol.p) * sym_d) @ coef
            noise = (
                gen.standard_normal((t, 4)) + 1j * gen.standard_normal((t, 4))
            ) * math.sqrt(s.noise_radar / 2)
            den += float(
                np.mean(den_part + np.abs(d2d) ** 2 + np.abs(noise @ u.conj()) ** 2)
            ) / 10
        mc = num / den
        assert mc == pytest.approx(expect, rel=0.01)


class TestBeampatterns:
    def test_identity_covariance_flat(self):
        s = small_scenario()
        ch = realize_channels(s, seed=0)
        big_w = [np.eye(4, dtype=complex) * 0.5, np.eye(4, dtype=complex) * 0.5]
        sol = Solution(w=None, big_w=big_w, u=None, p=np.zeros(2))
        grid = np.linspace(-80, 80, 33)
        p1, p2, p3 = beampatterns(ch, s, sol, grid)
        assert np.allclose(p1, 1.0, atol=1e-12)
        assert np.all(p2 == 0.0) and np.all(p3 == 0.0)

    def test_receive_peak_at_target(self):
        s = small_scenario()
        ch = realize_channels(s, seed=0)
        a_r = steering_vector(s.target_angle_deg, 4)
        sol = Solution(
            w=np.zeros((2, 4), dtype=complex), big_w=None, u=a_r, p=np.zeros(2)
        )
        grid = np.linspace(-80, 80, 65)
        _, p2, _ = beampatterns(ch, s, sol, grid)
        at_target = beampatterns(ch, s, sol, np.array([s.target_angle_deg]))[1][0]
        assert at_target == pytest.approx(1.0, abs=1e-12)
        assert np.all(p2 <= 1.0 + 1e-12)

    def test_product_identity(self):
        s = small_scenario()
        ch = realize_channels(s, seed=6)
        rng = np.random.default_rng(17)
        sol = random_solution(s, rng)
        grid = np.linspace(-89, 89, 41)
        p1, p2, p3 = beampatterns(ch, s, sol, grid)
        assert np.abs(p3 - p1 * p2).max() < 1e-12

    def test_empty_grid_rejected(self):
        s = small_scenario()
        ch = realize_channels(s, seed=0)
        sol = random_solution(s, np.random.default_rng(0))
        with pytest.raises(ValueError):
            beampatterns(ch, s, sol, np.array([]))

    def test_csv_schema(self, tmp_path):
        path = tmp_path / "bp.csv"
        grid = np.array([-10.0, 0.0, 10.0])
        write_beampattern_csv(str(path), grid, np.ones(3), 0.5 * np.ones(3), np.zeros(3))
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "angle_deg,p1_db,p2_db,p3_db"
        assert len(lines) == 4
        assert lines[1].split(",")[3] == "-inf"


class TestAggregateMetrics:
    def test_sum_rate_recompute(self):
        s = small_scenario()
        ch = realize_channels(s, seed=8)
        sol = random_solution(s, np.random.default_rng(23))
        m = evaluate(ch, s, sol)
        manual = sum(
            math.log2(1.0 + manual_cu_sinr(ch, s, sol, k)) for k in range(s.n_cu)
        ) + sum(
            math.log2(1.0 + manual_d2d_sinr(ch, s, sol, m_)) for m_ in range(s.n_d2d)
        )
        assert m.sum_rate == pytest.approx(manual, abs=1e-10)
        assert np.all(m.sinr_cu >= 0) and np.all(m.sinr_d2d >= 0)
