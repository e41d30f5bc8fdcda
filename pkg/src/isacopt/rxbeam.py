"""Closed-form optimal receive beamformer for the sensing path.

For fixed transmit covariance F and D2D powers p, the radar SINR is a
generalized Rayleigh quotient in the receive filter u; its maximizer is the
MVDR filter u = G^{-1} a_r / (a_r^H G^{-1} a_r) built from the interference
covariance G.  G^{-1} is never formed; a Hermitian Cholesky solve is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .metrics import clutter_plus_si
from .scenario import ChannelSet, Scenario, steering_vector

__all__ = [
    "InterferenceMatrix",
    "NumericalFailure",
    "interference_matrix",
    "mvdr",
    "optimal_radar_sinr",
]


class NumericalFailure(RuntimeError):
    """Raised when a dense factorization fails on supposedly PD input."""


@dataclass
class InterferenceMatrix:
    """Hermitian positive definite interference-plus-noise covariance at the
    radar receive array."""

    g: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError("G must be square")
        herm_err = np.linalg.norm(g - g.conj().T) / max(np.linalg.norm(g), 1e-300)
        if herm_err > 1e-10:
            raise ValueError("G is not Hermitian within tolerance")


def interference_matrix(
    ch: ChannelSet, s: Scenario, f: np.ndarray, p: np.ndarray
) -> InterferenceMatrix:
    """G = B F B^H + sum_m p_m h h^H + sigma_r^2 I (positive definite)."""
    nr = s.array.n_rx
    b = clutter_plus_si(ch, s)
    g = b @ f @ b.conj().T + s.noise_radar * np.eye(nr)
    for m in range(len(p)):
        h = ch.h_d2dtx_bs[m]
        g += p[m] * np.outer(h, h.conj())
    return InterferenceMatrix(0.5 * (g + g.conj().T))


def _solve_pd(g: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        c = sla.cho_factor(g, lower=True)
    except np.linalg.LinAlgError as e:  # pragma: no cover - guarded by invariants
        raise NumericalFailure(f"interference matrix not positive definite: {e}")
    return sla.cho_solve(c, rhs)


def mvdr(g: InterferenceMatrix, s: Scenario) -> np.ndarray:
    """Distortionless filter u = G^{-1} a_r(theta0) / (a_r^H G^{-1} a_r)."""
    a_r = steering_vector(s.target_angle_deg, s.array.n_rx)
    x = _solve_pd(g.g, a_r)
    denom = np.real(a_r.conj() @ x)
    if denom <= 0.0:
        raise NumericalFailure("a_r^H G^{-1} a_r is not positive")
    return x / denom


def optimal_radar_sinr(
    ch: ChannelSet, s: Scenario, f: np.ndarray, p: np.ndarray
) -> float:
    """Radar SINR achieved by the MVDR filter:
    |alpha0|^2 (a_t^H F a_t)(a_r^H G^{-1} a_r)."""
    a_t = steering_vector(s.target_angle_deg, s.array.n_tx)
    a_r = steering_vector(s.target_angle_deg, s.array.n_rx)
    g = interference_matrix(ch, s, f, p)
    x = _solve_pd(g.g, a_r)
    quad_rx = float(np.real(a_r.conj() @ x))
    quad_tx = float(np.real(a_t.conj() @ f @ a_t))
    return float(np.abs(ch.target_amp) ** 2) * max(quad_tx, 0.0) * quad_rx
