"""Network geometry, unit conversions, and channel realization.

The base station sits at the origin of a 2-D Cartesian plane; every other
node is placed by a polar tuple (angle, distance).  All powers and gains are
kept in linear units internally; dB/dBm conversion happens only at the
config boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "ArrayConfig",
    "PolarPlacement",
    "Scenario",
    "ChannelSet",
    "PlacementRange",
    "dbm_to_watts",
    "watts_to_dbm",
    "db_to_linear",
    "linear_to_db",
    "steering_vector",
    "realize_channels",
    "random_d2d_placement",
    "paper_scenario",
    "load_scenario",
    "save_scenario",
    "RNG_ALGORITHM",
]

# Seeded generators use numpy's default bit generator; recorded in run
# metadata so results are reproducible per build.
RNG_ALGORITHM = "numpy.random.PCG64"


def dbm_to_watts(x: float) -> float:
    """Convert dBm to watts: 10^((x - 30) / 10)."""
    return 10.0 ** ((x - 30.0) / 10.0)


def watts_to_dbm(x: float) -> float:
    return 10.0 * math.log10(x) + 30.0


def db_to_linear(x: float) -> float:
    """Convert a dB value to a linear ratio: 10^(x / 10)."""
    return 10.0 ** (x / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def steering_vector(angle_deg: float, n: int) -> np.ndarray:
    """Unit-norm ULA steering vector at half-wavelength spacing.

    Element i equals (1/sqrt(n)) * exp(j*pi*i*sin(theta)), i = 0..n-1.
    """
    if n < 1:
        raise ValueError("array size must be >= 1")
    theta = math.radians(angle_deg)
    phase = 1j * math.pi * math.sin(theta) * np.arange(n)
    return np.exp(phase) / math.sqrt(n)


@dataclass(frozen=True)
class ArrayConfig:
    """Transmit/receive ULA sizes; element spacing is fixed at lambda/2."""

    n_tx: int
    n_rx: int

    def __post_init__(self):
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError("antenna counts must be >= 1")


@dataclass(frozen=True)
class PolarPlacement:
    """BS-relative placement: bearing in degrees and range in meters."""

    angle_deg: float
    distance_m: float

    def __post_init__(self):
        if not -90.0 < self.angle_deg < 90.0:
            raise ValueError(f"angle {self.angle_deg} outside (-90, 90)")
        if self.distance_m <= 0.0:
            raise ValueError("distance must be positive")

    def xy(self) -> tuple[float, float]:
        """Cartesian coordinates (d*sin(theta), d*cos(theta))."""
        t = math.radians(self.angle_deg)
        return self.distance_m * math.sin(t), self.distance_m * math.cos(t)


@dataclass(frozen=True)
class PlacementRange:
    """Uniform sampling box for one D2D receiver."""

    angle_deg: tuple[float, float]
    distance_m: tuple[float, float]

    def __post_init__(self):
        if self.angle_deg[0] > self.angle_deg[1]:
            raise ValueError("empty angle interval")
        if self.distance_m[0] > self.distance_m[1]:
            raise ValueError("empty distance interval")


@dataclass(frozen=True)
class Scenario:
    """Full static description of one network instance.

    All powers/gains are linear (watts or dimensionless ratios).  Angle
    parameters are degrees.  Lengths must be consistent: K CUs, M D2D
    pairs, I clutter points.
    """

    array: ArrayConfig
    cus: tuple[PolarPlacement, ...]
    d2d_tx: tuple[PolarPlacement, ...]
    d2d_rx: tuple[PolarPlacement, ...]
    target_angle_deg: float
    clutter_angles_deg: tuple[float, ...]
    target_power_gain: float
    clutter_power_gains: tuple[float, ...]
    si_power_gain: float
    pathloss_ref: float
    pathloss_exp: float
    noise_cu: float
    noise_d2d: float
    noise_radar: float
    p_bs_max: float
    p_d2d_max: tuple[float, ...]
    gamma_r: float
    d2d_rx_ranges: tuple[PlacementRange, ...] = ()
    d2d_pair_separation_m: float = 20.0

    def __post_init__(self):
        if len(self.d2d_tx) != len(self.d2d_rx):
            raise ValueError("d2d_tx and d2d_rx lengths differ")
        if len(self.p_d2d_max) != len(self.d2d_tx):
            raise ValueError("p_d2d_max length must equal number of D2D pairs")
        if len(self.clutter_power_gains) != len(self.clutter_angles_deg):
            raise ValueError("clutter gains/angles lengths differ")
        for name, v in [
            ("target_power_gain", self.target_power_gain),
            ("si_power_gain", self.si_power_gain),
            ("pathloss_ref", self.pathloss_ref),
            ("noise_cu", self.noise_cu),
            ("noise_d2d", self.noise_d2d),
            ("noise_radar", self.noise_radar),
            ("p_bs_max", self.p_bs_max),
            ("gamma_r", self.gamma_r),
        ]:
            if v <= 0.0:
                raise ValueError(f"{name} must be positive")
        if any(g <= 0.0 for g in self.clutter_power_gains):
            raise ValueError("clutter power gains must be positive")
        if any(p <= 0.0 for p in self.p_d2d_max):
            raise ValueError("D2D power budgets must be positive")

    @property
    def n_cu(self) -> int:
        return len(self.cus)

    @property
    def n_d2d(self) -> int:
        return len(self.d2d_tx)

    @property
    def n_clutter(self) -> int:
        return len(self.clutter_angles_deg)


@dataclass(frozen=True)
class ChannelSet:
    """All realized channel coefficients for one Scenario draw.

    Shapes: h_bs_cu (K, N_t), h_bs_d2drx (M, N_t), h_d2dtx_bs (M, N_r),
    h_d2dtx_d2drx (M, M) with [m_tx, m_rx] ordering, h_d2dtx_cu (M, K),
    h_si (N_r, N_t).
    """

    h_bs_cu: np.ndarray
    h_bs_d2drx: np.ndarray
    h_d2dtx_bs: np.ndarray
    h_d2dtx_d2drx: np.ndarray
    h_d2dtx_cu: np.ndarray
    h_si: np.ndarray
    target_amp: complex
    clutter_amps: np.ndarray


def _distance(a: PolarPlacement, b: PolarPlacement) -> float:
    ax, ay = a.xy()
    bx, by = b.xy()
    return math.hypot(ax - bx, ay - by)


def _pathloss_amp(s: Scenario, d: float) -> float:
    # sqrt(eps0 * d^-nu); callers guarantee d > 0
    return math.sqrt(s.pathloss_ref * d ** (-s.pathloss_exp))


def realize_channels(s: Scenario, seed: int) -> ChannelSet:
    """Draw every channel coefficient for the scenario, deterministically.

    Direct BS links follow the LOS model (path loss amplitude times a
    scaled steering vector); scalar device-to-device and device-to-CU
    links carry the path loss amplitude only.  Self-interference entries
    and target/clutter amplitudes get i.i.d. uniform random phases.
    """
    rng = np.random.default_rng(seed)
    nt, nr = s.array.n_tx, s.array.n_rx
    K, M = s.n_cu, s.n_d2d

    h_bs_cu = np.zeros((K, nt), dtype=complex)
    for k, cu in enumerate(s.cus):
        h_bs_cu[k] = (
            _pathloss_amp(s, cu.distance_m)
            * math.sqrt(nt)
            * steering_vector(cu.angle_deg, nt)
        )

    h_bs_d2drx = np.zeros((M, nt), dtype=complex)
    for m, rx in enumerate(s.d2d_rx):
        h_bs_d2drx[m] = (
            _pathloss_amp(s, rx.distance_m)
            * math.sqrt(nt)
            * steering_vector(rx.angle_deg, nt)
        )

    h_d2dtx_bs = np.zeros((M, nr), dtype=complex)
    for m, tx in enumerate(s.d2d_tx):
        h_d2dtx_bs[m] = (
            _pathloss_amp(s, tx.distance_m)
            * math.sqrt(nr)
            * steering_vector(tx.angle_deg, nr)
        )

    h_d2dtx_d2drx = np.zeros((M, M), dtype=complex)
    for mt, tx in enumerate(s.d2d_tx):
        for mr, rx in enumerate(s.d2d_rx):
            d = _distance(tx, rx)
            if d <= 0.0:
                raise ValueError(f"coincident nodes: d2d_tx[{mt}] and d2d_rx[{mr}]")
            h_d2dtx_d2drx[mt, mr] = _pathloss_amp(s, d)

    h_d2dtx_cu = np.zeros((M, K), dtype=complex)
    for mt, tx in enumerate(s.d2d_tx):
        for k, cu in enumerate(s.cus):
            d = _distance(tx, cu)
            if d <= 0.0:
                raise ValueError(f"coincident nodes: d2d_tx[{mt}] and cu[{k}]")
            h_d2dtx_cu[mt, k] = _pathloss_amp(s, d)

    si_phase = rng.uniform(0.0, 2.0 * math.pi, size=(nr, nt))
    h_si = math.sqrt(s.si_power_gain) * np.exp(1j * si_phase)

    target_amp = math.sqrt(s.target_power_gain) * np.exp(
        1j * rng.uniform(0.0, 2.0 * math.pi)
    )
    clutter_amps = np.array(
        [
            math.sqrt(g) * np.exp(1j * rng.uniform(0.0, 2.0 * math.pi))
            for g in s.clutter_power_gains
        ],
        dtype=complex,
    )

    return ChannelSet(
        h_bs_cu=h_bs_cu,
        h_bs_d2drx=h_bs_d2drx,
        h_d2dtx_bs=h_d2dtx_bs,
        h_d2dtx_d2drx=h_d2dtx_d2drx,
        h_d2dtx_cu=h_d2dtx_cu,
        h_si=h_si,
        target_amp=complex(target_amp),
        clutter_amps=clutter_amps,
    )


def random_d2d_placement(s: Scenario, seed: int) -> Scenario:
    """Redraw D2D positions: each RX uniform in its configured (angle,
    distance) box, its TX at the fixed pair separation in a uniform random
    direction.

    TX bearings that would leave the (-90, 90) degree sector served by the
    arrays are rejected and redrawn.
    """
    if len(s.d2d_rx_ranges) != s.n_d2d:
        raise ValueError("scenario carries no placement range per D2D pair")
    rng = np.random.default_rng(seed)
    sep = s.d2d_pair_separation_m
    rxs, txs = [], []
    for box in s.d2d_rx_ranges:
        ang = rng.uniform(box.angle_deg[0], box.angle_deg[1])
        dist = rng.uniform(box.distance_m[0], box.distance_m[1])
        rx = PolarPlacement(ang, dist)
        rx_x, rx_y = rx.xy()
        while True:
            bearing = rng.uniform(0.0, 2.0 * math.pi)
            tx_x = rx_x + sep * math.sin(bearing)
            tx_y = rx_y + sep * math.cos(bearing)
            d = math.hypot(tx_x, tx_y)
            if d <= 0.0:
                continue
            theta = math.degrees(math.atan2(tx_x, tx_y))
            if -90.0 < theta < 90.0:
                txs.append(PolarPlacement(theta, d))
                break
        rxs.append(rx)
    return replace(s, d2d_rx=tuple(rxs), d2d_tx=tuple(txs))


def paper_scenario(
    n_tx: int = 16,
    n_rx: int | None = None,
    p_bs_dbm: float = 10.0 * math.log10(30.0),
    p_d2d_dbm: float = 10.0,
    gamma_r_db: float = 15.0,
) -> Scenario:
    """Reference scenario: 2 CUs, 2 D2D pairs, target at broadside with two
    clutter reflectors.

    Defaults use the desk-scale 16-antenna arrays; pass ``n_tx=32`` for the
    full-size setup.  Power defaults are P_BS = 30 mW, P_m = 10 mW,
    gamma_r = 15 dB.
    """
    if n_rx is None:
        n_rx = n_tx
    noise = dbm_to_watts(-90.0)
    # Target/clutter power gains are tied to the noise floor expressed in
    # milliwatt units (1e-9); the watt-unit reading would make the
    # reference operating point infeasible.
    noise_mw_units = noise * 1e3
    return Scenario(
        array=ArrayConfig(n_tx=n_tx, n_rx=n_rx),
        cus=(PolarPlacement(-75.0, 50.0), PolarPlacement(20.0, 60.0)),
        # Default (non-randomized) placements: RX mid-box, TX 20 m closer to
        # the BS along the same bearing.
        d2d_rx=(PolarPlacement(-35.0, 75.0), PolarPlacement(70.0, 75.0)),
        d2d_tx=(PolarPlacement(-35.0, 55.0), PolarPlacement(70.0, 55.0)),
        target_angle_deg=0.0,
        clutter_angles_deg=(-50.0, 40.0),
        target_power_gain=10.0 * noise_mw_units,
        clutter_power_gains=(1e3 * noise_mw_units, 1e3 * noise_mw_units),
        si_power_gain=db_to_linear(-130.0),
        pathloss_ref=db_to_linear(-30.0),
        pathloss_exp=3.0,
        noise_cu=noise,
        noise_d2d=noise,
        noise_radar=noise,
        p_bs_max=dbm_to_watts(p_bs_dbm),
        p_d2d_max=(dbm_to_watts(p_d2d_dbm), dbm_to_watts(p_d2d_dbm)),
        gamma_r=db_to_linear(gamma_r_db),
        d2d_rx_ranges=(
            PlacementRange((-40.0, -30.0), (70.0, 80.0)),
            PlacementRange((65.0, 75.0), (70.0, 80.0)),
        ),
        d2d_pair_separation_m=20.0,
    )


# --- config file schema (JSON, dB/dBm/meters/degrees at the boundary) ---


def _placement_to_json(p: PolarPlacement) -> dict:
    return {"angle_deg": p.angle_deg, "distance_m": p.distance_m}


def save_scenario(s: Scenario, path: str) -> None:
    """Write the scenario config as JSON (schema documented in README)."""
    doc = {
        "array": {"n_tx": s.array.n_tx, "n_rx": s.array.n_rx},
        "cus": [_placement_to_json(p) for p in s.cus],
        "d2d_tx": [_placement_to_json(p) for p in s.d2d_tx],
        "d2d_rx": [_placement_to_json(p) for p in s.d2d_rx],
        "target_angle_deg": s.target_angle_deg,
        "clutter_angles_deg": list(s.clutter_angles_deg),
        "target_power_gain_db": linear_to_db(s.target_power_gain),
        "clutter_power_gains_db": [linear_to_db(g) for g in s.clutter_power_gains],
        "si_power_gain_db": linear_to_db(s.si_power_gain),
        "pathloss_ref_db": linear_to_db(s.pathloss_ref),
        "pathloss_exp": s.pathloss_exp,
        "noise_cu_dbm": watts_to_dbm(s.noise_cu),
        "noise_d2d_dbm": watts_to_dbm(s.noise_d2d),
        "noise_radar_dbm": watts_to_dbm(s.noise_radar),
        "p_bs_dbm": watts_to_dbm(s.p_bs_max),
        "p_d2d_dbm": [watts_to_dbm(p) for p in s.p_d2d_max],
        "gamma_r_db": linear_to_db(s.gamma_r),
        "d2d_rx_ranges": [
            {"angle_deg": list(r.angle_deg), "distance_m": list(r.distance_m)}
            for r in s.d2d_rx_ranges
        ],
        "d2d_pair_separation_m": s.d2d_pair_separation_m,
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_scenario(path: str) -> Scenario:
    """Read a JSON scenario config written by :func:`save_scenario`."""
    with open(path) as f:
        doc = json.load(f)
    pl = lambda d: PolarPlacement(d["angle_deg"], d["distance_m"])
    return Scenario(
        array=ArrayConfig(doc["array"]["n_tx"], doc["array"]["n_rx"]),
        cus=tuple(pl(d) for d in doc["cus"]),
        d2d_tx=tuple(pl(d) for d in doc["d2d_tx"]),
        d2d_rx=tuple(pl(d) for d in doc["d2d_rx"]),
        target_angle_deg=doc["target_angle_deg"],
        clutter_angles_deg=tuple(doc["clutter_angles_deg"]),
        target_power_gain=db_to_linear(doc["target_power_gain_db"]),
        clutter_power_gains=tuple(
            db_to_linear(g) for g in doc["clutter_power_gains_db"]
        ),
        si_power_gain=db_to_linear(doc["si_power_gain_db"]),
        pathloss_ref=db_to_linear(doc["pathloss_ref_db"]),
        pathloss_exp=doc["pathloss_exp"],
        noise_cu=dbm_to_watts(doc["noise_cu_dbm"]),
        noise_d2d=dbm_to_watts(doc["noise_d2d_dbm"]),
        noise_radar=dbm_to_watts(doc["noise_radar_dbm"]),
        p_bs_max=dbm_to_watts(doc["p_bs_dbm"]),
        p_d2d_max=tuple(dbm_to_watts(p) for p in doc["p_d2d_dbm"]),
        gamma_r=db_to_linear(doc["gamma_r_db"]),
        d2d_rx_ranges=tuple(
            PlacementRange(tuple(r["angle_deg"]), tuple(r["distance_m"]))
            for r in doc.get("d2d_rx_ranges", [])
        ),
        d2d_pair_separation_m=doc.get("d2d_pair_separation_m", 20.0),
    )
