"""SINR, rate, covariance, and beampattern evaluation for candidate solutions.

All functions are pure; a solution may carry rank-one beamformers ``w``,
transmit covariances ``big_w``, or both.  When covariances are present they
are the authoritative representation and the quadratic-form expressions are
used throughout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .scenario import ChannelSet, Scenario, linear_to_db, steering_vector

__all__ = [
    "Solution",
    "Metrics",
    "covariance",
    "cu_sinr",
    "d2d_sinr",
    "radar_sinr",
    "clutter_plus_si",
    "beampatterns",
    "evaluate",
    "write_beampattern_csv",
]


@dataclass
class Solution:
    """Transmit beamformers / covariances, receive filter, and D2D powers."""

    w: np.ndarray | None  # (K, N_t) rows are w_k
    big_w: list[np.ndarray] | None  # K Hermitian PSD (N_t, N_t)
    u: np.ndarray | None  # (N_r,)
    p: np.ndarray  # (M,) watts

    def n_users(self) -> int:
        return len(self.big_w) if self.big_w is not None else self.w.shape[0]


@dataclass
class Metrics:
    sinr_cu: np.ndarray
    sinr_d2d: np.ndarray
    rate_cu: np.ndarray
    rate_d2d: np.ndarray
    sum_rate: float
    radar_sinr: float

    @property
    def radar_sinr_db(self) -> float:
        return linear_to_db(self.radar_sinr)


def covariance(sol: Solution) -> np.ndarray:
    """Transmit covariance F = sum_k w_k w_k^H (or sum_k W_k)."""
    if sol.big_w is not None:
        f = np.sum(sol.big_w, axis=0)
    elif sol.w is not None:
        f = sol.w.T @ sol.w.conj()  # sum of outer products w_k w_k^H
    else:
        raise ValueError("solution carries neither w nor big_w")
    return 0.5 * (f + f.conj().T)


def _beam_power(h: np.ndarray, sol: Solution, k: int) -> float:
    """|h^H w_k|^2, or h^H W_k h when covariances are authoritative."""
    if sol.big_w is not None:
        return float(np.real(h.conj() @ sol.big_w[k] @ h))
    return float(np.abs(h.conj() @ sol.w[k]) ** 2)


def cu_sinr(ch: ChannelSet, s: Scenario, sol: Solution, k: int) -> float:
    """Downlink SINR at CU k: own beam power over other beams, D2D
    interference, and noise."""
    h = ch.h_bs_cu[k]
    sig = _beam_power(h, sol, k)
    interf = sum(
        _beam_power(h, sol, kk) for kk in range(sol.n_users()) if kk != k
    )
    d2d = float(np.sum(sol.p * np.abs(ch.h_d2dtx_cu[:, k]) ** 2))
    return sig / (interf + d2d + s.noise_cu)


def d2d_sinr(ch: ChannelSet, s: Scenario, sol: Solution, m: int) -> float:
    """SINR at D2D-RX m: own-pair power over other pairs, BS leakage, noise."""
    sig = sol.p[m] * float(np.abs(ch.h_d2dtx_d2drx[m, m]) ** 2)
    other = sum(
        sol.p[mm] * float(np.abs(ch.h_d2dtx_d2drx[mm, m]) ** 2)
        for mm in range(len(sol.p))
        if mm != m
    )
    h = ch.h_bs_d2drx[m]
    f = covariance(sol)
    bs = float(np.real(h.conj() @ f @ h))
    return sig / (other + bs + s.noise_d2d)


def clutter_plus_si(ch: ChannelSet, s: Scenario) -> np.ndarray:
    """Signal-dependent interference map B = sum_i alpha_i a_r a_t^H + H_SI."""
    nt, nr = s.array.n_tx, s.array.n_rx
    b = ch.h_si.astype(complex).copy()
    for amp, ang in zip(ch.clutter_amps, s.clutter_angles_deg):
        b += amp * np.outer(steering_vector(ang, nr), steering_vector(ang, nt).conj())
    return b


def radar_sinr(ch: ChannelSet, s: Scenario, sol: Solution) -> float:
    """Sensing SINR for the stored receive filter u.

    Ratio of target-return power to clutter + self-interference + D2D +
    noise power after filtering; invariant to rescaling of u.
    """
    if sol.u is None:
        raise ValueError("solution has no receive filter")
    nt, nr = s.array.n_tx, s.array.n_rx
    f = covariance(sol)
    a_t = steering_vector(s.target_angle_deg, nt)
    a_r = steering_vector(s.target_angle_deg, nr)
    a0 = ch.target_amp * np.outer(a_r, a_t.conj())
    b = clutter_plus_si(ch, s)
    u = sol.u
    num = float(np.real(u.conj() @ a0 @ f @ a0.conj().T @ u))
    den_mat = b @ f @ b.conj().T + s.noise_radar * np.eye(nr)
    for m in range(len(sol.p)):
        h = ch.h_d2dtx_bs[m]
        den_mat += sol.p[m] * np.outer(h, h.conj())
    den = float(np.real(u.conj() @ den_mat @ u))
    return num / den


def beampatterns(
    ch: ChannelSet, s: Scenario, sol: Solution, grid_deg: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Transmit, receive, and combined angular power responses.

    p1(theta) = a_t^H F a_t, p2(theta) = |u^H a_r|^2 / (u^H u), and
    p3 = p1 * p2.  p2 and p3 need a receive filter; they are returned as
    zeros when the solution has none.
    """
    grid_deg = np.asarray(grid_deg, dtype=float)
    if grid_deg.size == 0:
        raise ValueError("angle grid is empty")
    nt, nr = s.array.n_tx, s.array.n_rx
    f = covariance(sol)
    p1 = np.empty(grid_deg.size)
    p2 = np.zeros(grid_deg.size)
    for i, ang in enumerate(grid_deg):
        a_t = steering_vector(ang, nt)
        p1[i] = max(float(np.real(a_t.conj() @ f @ a_t)), 0.0)
        if sol.u is not None:
            a_r = steering_vector(ang, nr)
            p2[i] = float(
                np.abs(sol.u.conj() @ a_r) ** 2 / np.real(sol.u.conj() @ sol.u)
            )
    p3 = p1 * p2
    return p1, p2, p3


def evaluate(ch: ChannelSet, s: Scenario, sol: Solution) -> Metrics:
    """All per-link SINRs and rates plus the radar SINR for one solution."""
    K, M = s.n_cu, s.n_d2d
    sinr_cu_v = np.array([cu_sinr(ch, s, sol, k) for k in range(K)])
    sinr_d2d_v = np.array([d2d_sinr(ch, s, sol, m) for m in range(M)])
    rate_cu = np.log2(1.0 + sinr_cu_v)
    rate_d2d = np.log2(1.0 + sinr_d2d_v)
    return Metrics(
        sinr_cu=sinr_cu_v,
        sinr_d2d=sinr_d2d_v,
        rate_cu=rate_cu,
        rate_d2d=rate_d2d,
        sum_rate=float(np.sum(rate_cu) + np.sum(rate_d2d)),
        radar_sinr=radar_sinr(ch, s, sol) if sol.u is not None else 0.0,
    )


def write_beampattern_csv(
    path: str,
    grid_deg: np.ndarray,
    p1: np.ndarray,
    p2: np.ndarray,
    p3: np.ndarray,
) -> None:
    """CSV with columns angle_deg, p1_db, p2_db, p3_db (zeros map to -inf)."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["angle_deg", "p1_db", "p2_db", "p3_db"])
        for ang, a, b, c in zip(grid_deg, p1, p2, p3):
            row = [f"{ang:.6g}"]
            for v in (a, b, c):
                row.append(f"{linear_to_db(v):.10g}" if v > 0.0 else "-inf")
            wr.writerow(row)
