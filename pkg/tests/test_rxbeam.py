"""MVDR receive filter tests against generalized-eigenvalue oracles."""

import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.linalg as sla

from isacopt.metrics import Solution, clutter_plus_si, radar_sinr
from isacopt.rxbeam import (
    InterferenceMatrix,
    interference_matrix,
    mvdr,
    optimal_radar_sinr,
)
from isacopt.scenario import paper_scenario, realize_channels, steering_vector

from test_metrics import clean_channelset, random_solution


def rand_psd(rng, n, scale=1.0):
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (m @ m.conj().T) / n


class TestInterferenceMatrix:
    def test_noise_only(self):
        s = paper_scenario(n_tx=4, n_rx=4)
        ch = clean_channelset(s, alpha0=math.sqrt(s.target_power_gain))
        g = interference_matrix(ch, s, np.zeros((4, 4)), np.zeros(2))
        assert np.allclose(g.g, s.noise_radar * np.eye(4))

    def test_zero_covariance_ignores_clutter(self):
        s = paper_scenario(n_tx=4, n_rx=4)
        ch = realize_channels(s, seed=0)
        g = interference_matrix(ch, s, np.zeros((4, 4)), np.zeros(2))
        assert np.allclose(g.g, s.noise_radar * np.eye(4))

    def test_term_by_term_accumulation(self):
        s = paper_scenario(n_tx=4, n_rx=4)
        ch = realize_channels(s, seed=5)
        rng = np.random.default_rng(3)
        f = rand_psd(rng, 4, s.p_bs_max)
        p = rng.uniform(0, 1, 2) * np.asarray(s.p_d2d_max)
        g = interference_matrix(ch, s, f, p).g
        b = clutter_plus_si(ch, s)
        brute = s.noise_radar * np.eye(4, dtype=complex)
        brute = brute + b @ f @ b.conj().T
        for m in range(2):
            brute += p[m] * np.outer(ch.h_d2dtx_bs[m], ch.h_d2dtx_bs[m].conj())
        assert np.abs(g - brute).max() < 1e-12 * max(1.0, np.abs(brute).max())

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            InterferenceMatrix(np.array([[1.0, 1.0], [0.0, 1.0]]))


class TestMvdr:
    def test_white_noise_matches_steering(self):
        s = paper_scenario(n_tx=4, n_rx=4)
        g = InterferenceMatrix(2.5 * np.eye(4, dtype=complex))
        u = mvdr(g, s)
        a_r = steering_vector(s.target_angle_deg, 4)
        assert np.abs(u - a_r).max() < 1e-12

    def test_distortionless_constraint(self):
        s = paper_scenario(n_tx=4, n_rx=6)
        rng = np.random.default_rng(7)
        a_r = steering_vector(s.target_angle_deg, 6)
        for _ in range(10):
            g = InterferenceMatrix(rand_psd(rng, 6) + 0.1 * np.eye(6))
            u = mvdr(g, s)
            assert abs(u.conj() @ a_r - 1.0) < 1e-10

    def test_solve_residual(self):
        s = paper_scenario(n_tx=4, n_rx=8)
        rng = np.random.default_rng(9)
        a_r = steering_vector(s.target_angle_deg, 8)
        g = InterferenceMatrix(rand_psd(rng, 8) + 0.05 * np.eye(8))
        u = mvdr(g, s)
        x = u / np.real(u.conj() @ g.g @ u)  # reconstruct G^{-1} a_r
        assert np.linalg.norm(g.g @ x - a_r) <= 1e-10 * np.linalg.norm(a_r)

    def test_generalized_eigenvalue_oracle(self):
        # Rayleigh quotient at the filter equals the top generalized
        # eigenvalue of (A0 F A0^H, G) on random PD instances
        s = paper_scenario(n_tx=4, n_rx=4)
        rng = np.random.default_rng(21)
        ch = realize_channels(s, seed=2)
        a_t = steering_vector(s.target_angle_deg, 4)
        a_r = steering_vector(s.target_angle_deg, 4)
        a0 = ch.target_amp * np.outer(a_r, a_t.conj())
        for _ in range(100):
            f = rand_psd(rng, 4, s.p_bs_max)
            g = rand_psd(rng, 4, 1e-10) + s.noise_radar * np.eye(4)
            u = mvdr(InterferenceMatrix(g), s)
            num = np.real(u.conj() @ a0 @ f @ a0.conj().T @ u)
            den = np.real(u.conj() @ g @ u)
            top = sla.eigh(
                a0 @ f @ a0.conj().T, g, eigvals_only=True
            )[-1]
            assert num / den == pytest.approx(top, rel=1e-8)

    def test_quotient_invariant_to_matrix_scaling(self):
        s = paper_scenario(n_tx=4, n_rx=4)
        rng = np.random.default_rng(31)
        ch = realize_channels(s, seed=2)
        f = rand_psd(rng, 4, s.p_bs_max)
        g = rand_psd(rng, 4, 1e-10) + s.noise_radar * np.eye(4)
        a_t = steering_vector(s.target_angle_deg, 4)
        a_r = steering_vector(s.target_angle_deg, 4)
        a0 = ch.target_amp * np.outer(a_r, a_t.conj())

        def quotient(gm):
            u = mvdr(InterferenceMatrix(gm), s)
            return np.real(u.conj() @ a0 @ f @ a0.conj().T @ u) / np.real(
                u.conj() @ gm @ u
            )

        base = quotient(g) / 1.0
        for c in (0.5, 3.0, 17.0):
            assert quotient(c * g) * c == pytest.approx(base, rel=1e-10)


class TestOptimalRadarSinr:
    def test_clean_case(self):
        s = replace(
            paper_scenario(n_tx=4, n_rx=4),
            target_power_gain=1e-11,
            noise_radar=1e-12,
        )
        ch = clean_channelset(s, alpha0=math.sqrt(1e-11))
        a_t = steering_vector(s.target_angle_deg, 4)
        f = np.outer(a_t, a_t.conj())  # P = 1 W
        assert optimal_radar_sinr(ch, s, f, np.zeros(2)) == pytest.approx(
            10.0, rel=1e-9
        )

    def test_zero_covariance(self):
        s = paper_scenario(n_tx=4, n_rx=4)
        ch = realize_channels(s, seed=0)
        assert optimal_radar_sinr(ch, s, np.zeros((4, 4)), np.zeros(2)) == 0.0

    def test_matches_metrics_at_mvdr_filter(self):
        s = paper_scenario(n_tx=4, n_rx=4)
        ch = realize_channels(s, seed=11)
        rng = np.random.default_rng(3)
        for _ in range(10):
            f = rand_psd(rng, 4, s.p_bs_max)
            p = rng.uniform(0, 1, 2) * np.asarray(s.p_d2d_max)
            g = interference_matrix(ch, s, f, p)
            u = mvdr(g, s)
            sol = Solution(w=None, big_w=[f, np.zeros_like(f)], u=u, p=p)
            assert optimal_radar_sinr(ch, s, f, p) == pytest.approx(
                radar_sinr(ch, s, sol), rel=1e-10
            )

    def test_optimality_over_random_filters(self):
        s = paper_scenario(n_tx=4, n_rx=4)
        ch = realize_channels(s, seed=13)
        rng = np.random.default_rng(5)
        for _ in range(100):
            f = rand_psd(rng, 4, s.p_bs_max)
            p = rng.uniform(0, 1, 2) * np.asarray(s.p_d2d_max)
            star = optimal_radar_sinr(ch, s, f, p)
            u = rng.normal(size=4) + 1j * rng.normal(size=4)
            sol = Solution(w=None, big_w=[f, np.zeros_like(f)], u=u, p=p)
            assert star >= radar_sinr(ch, s, sol) * (1.0 - 1e-9)
