"""Successive convex approximation loop for the joint beamforming and
power-allocation design.

Each iteration linearizes the concave rate terms and the radar-SINR map at
the previous iterate, assembles the resulting convex subproblem over
transmit covariances {W_k} and D2D powers {p_m}, and solves it with the
embedded cone solver.  The surrogate objective values are non-increasing
across iterations; the final covariances are collapsed to beamformers by
eigendecomposition or Gaussian randomization and paired with the MVDR
receive filter.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import metrics as mt
from .conic.program import ConicProgram, LinExpr
from .conic.solve import ConicSolution, ToleranceSet, solve
from .rxbeam import InterferenceMatrix, interference_matrix, mvdr, optimal_radar_sinr
from .scenario import ChannelSet, Scenario, steering_vector

__all__ = [
    "ScaSettings",
    "Iterate",
    "RunReport",
    "InfeasibleRadarConstraint",
    "SolverFailure",
    "RandomizationFailure",
    "linearize_f",
    "linearize_rate_terms",
    "build_subproblem",
    "solution_from_conic",
    "sca_solve",
    "extract_rank_one",
    "complexity_estimate",
]

_LN2 = math.log(2.0)


class InfeasibleRadarConstraint(RuntimeError):
    """The sensing-SINR requirement cannot be met from the initial point."""


class SolverFailure(RuntimeError):
    """The embedded cone solver did not return a usable optimum."""


class RandomizationFailure(RuntimeError):
    """No randomized beamformer candidate satisfied the constraints."""


@dataclass
class ScaSettings:
    max_iters: int = 30
    rel_tol: float = 1e-4
    randomization_samples: int = 100
    rank_ratio_threshold: float = 1e5
    # subproblem KKT acceptance; value accuracy is far tighter (~1e-9)
    solver_feastol: float = 1e-5
    seed: int = 0

    def tolerances(self) -> ToleranceSet:
        return ToleranceSet(feastol=self.solver_feastol)


@dataclass
class Iterate:
    big_w: list[np.ndarray]
    p: np.ndarray
    objective: float  # surrogate optimum, negated sum-rate, bits/s/Hz
    g_prev: InterferenceMatrix


@dataclass
class RadarLinearization:
    """Affine minorant of f(G) = a_r^H G^{-1} a_r around an expansion point.

    f_tilde(W, p) = const - <coeff_w, W_k> summed over k - coeff_p . p,
    with equality (tangency) at the expansion point.
    """

    const: float
    coeff_w: np.ndarray  # Hermitian N_t x N_t, same for every k
    coeff_p: np.ndarray  # (M,)
    f0: float

    def value(self, big_w: list[np.ndarray], p: np.ndarray) -> float:
        tot = self.const
        for w in big_w:
            tot -= float(np.real(np.sum(self.coeff_w * np.conj(w))))
        tot -= float(self.coeff_p @ p)
        return tot


@dataclass
class RateLinearization:
    """Affine majorants of the concave interference terms of all rates.

    For CU k: E_tilde = const[k] + sum_{k'!=k} <grad_w[k], W_k'> +
    grad_p[k] . p; for D2D m the W-sum runs over every k.  Tangent at the
    expansion point.
    """

    cu_const: np.ndarray
    cu_grad_w: list[np.ndarray]
    cu_grad_p: np.ndarray  # (K, M)
    cu_denom: np.ndarray
    d2d_const: np.ndarray
    d2d_grad_w: list[np.ndarray]
    d2d_grad_p: np.ndarray  # (M, M), zero diagonal
    d2d_denom: np.ndarray

    def cu_value(self, k: int, big_w: list[np.ndarray], p: np.ndarray) -> float:
        tot = self.cu_const[k]
        for kk, w in enumerate(big_w):
            if kk != k:
                tot += float(np.real(np.sum(self.cu_grad_w[k] * np.conj(w))))
        tot += float(self.cu_grad_p[k] @ p)
        return tot

    def d2d_value(self, m: int, big_w: list[np.ndarray], p: np.ndarray) -> float:
        tot = self.d2d_const[m]
        for w in big_w:
            tot += float(np.real(np.sum(self.d2d_grad_w[m] * np.conj(w))))
        tot += float(self.d2d_grad_p[m] @ p)
        return tot


def linearize_f(
    g: InterferenceMatrix, ch: ChannelSet, s: Scenario
) -> RadarLinearization:
    """First-order minorant of the MVDR quadratic form at the expansion G.

    With v = G0^{-1} a_r, the tangent is 2 a_r^H v - v^H G(W, p) v, which is
    affine in the decision variables and never exceeds the true value.
    """
    import scipy.linalg as sla

    a_r = steering_vector(s.target_angle_deg, s.array.n_rx)
    c = sla.cho_factor(g.g, lower=True)
    v = sla.cho_solve(c, a_r)
    f0 = float(np.real(a_r.conj() @ v))
    b = mt.clutter_plus_si(ch, s)
    bv = b.conj().T @ v
    coeff_w = np.outer(bv, bv.conj())
    coeff_p = np.array(
        [float(np.abs(v.conj() @ ch.h_d2dtx_bs[m]) ** 2) for m in range(s.n_d2d)]
    )
    const = 2.0 * f0 - s.noise_radar * float(np.real(v.conj() @ v))
    return RadarLinearization(
        const=const, coeff_w=0.5 * (coeff_w + coeff_w.conj().T), coeff_p=coeff_p, f0=f0
    )


def linearize_rate_terms(
    prev: Iterate, ch: ChannelSet, s: Scenario
) -> RateLinearization:
    """Tangent majorants of the log interference terms at the previous
    iterate (upper bounds by concavity of the logarithm)."""
    K, M = s.n_cu, s.n_d2d
    cu_const = np.zeros(K)
    cu_grad_w = []
    cu_grad_p = np.zeros((K, M))
    cu_denom = np.zeros(K)
    for k in range(K):
        h = ch.h_bs_cu[k]
        d = s.noise_cu
        for kk in range(K):
            if kk != k:
                d += float(np.real(h.conj() @ prev.big_w[kk] @ h))
        for m in range(M):
            d += prev.p[m] * float(np.abs(ch.h_d2dtx_cu[m, k]) ** 2)
        cu_denom[k] = d
        outer = np.outer(h, h.conj())
        cu_grad_w.append(outer / (_LN2 * d))
        for m in range(M):
            cu_grad_p[k, m] = float(np.abs(ch.h_d2dtx_cu[m, k]) ** 2) / (_LN2 * d)
        cu_const[k] = math.log2(d) - (d - s.noise_cu) / (_LN2 * d)

    d2d_const = np.zeros(M)
    d2d_grad_w = []
    d2d_grad_p = np.zeros((M, M))
    d2d_denom = np.zeros(M)
    f_prev = np.sum(prev.big_w, axis=0)
    for m in range(M):
        h = ch.h_bs_d2drx[m]
        d = s.noise_d2d + float(np.real(h.conj() @ f_prev @ h))
        for mm in range(M):
            if mm != m:
                d += prev.p[mm] * float(np.abs(ch.h_d2dtx_d2drx[mm, m]) ** 2)
        d2d_denom[m] = d
        outer = np.outer(h, h.conj())
        d2d_grad_w.append(outer / (_LN2 * d))
        for mm in range(M):
            if mm != m:
                d2d_grad_p[m, mm] = float(np.abs(ch.h_d2dtx_d2drx[mm, m]) ** 2) / (
                    _LN2 * d
                )
        d2d_const[m] = math.log2(d) - (d - s.noise_d2d) / (_LN2 * d)
    return RateLinearization(
        cu_const=cu_const,
        cu_grad_w=cu_grad_w,
        cu_grad_p=cu_grad_p,
        cu_denom=cu_denom,
        d2d_const=d2d_const,
        d2d_grad_w=d2d_grad_w,
        d2d_grad_p=d2d_grad_p,
        d2d_denom=d2d_denom,
    )


@dataclass
class SubproblemMap:
    """Scalings used to map between solver variables and physical units."""

    p_bs: float
    p_max: np.ndarray
    refs: np.ndarray  # log-argument normalizers, length K + M
    radar: RadarLinearization | None
    rates: RateLinearization
    phi0: float = 1.0
    f0: float = 1.0


def _signal_args(ch: ChannelSet, s: Scenario):
    """Affine data of the full received-power log arguments (CU then D2D)."""
    K, M = s.n_cu, s.n_d2d
    args = []
    for k in range(K):
        h = ch.h_bs_cu[k]
        args.append(
            (
                np.outer(h, h.conj()),
                np.array([np.abs(ch.h_d2dtx_cu[m, k]) ** 2 for m in range(M)]),
                s.noise_cu,
            )
        )
    for m in range(M):
        h = ch.h_bs_d2drx[m]
        args.append(
            (
                np.outer(h, h.conj()),
                np.array([np.abs(ch.h_d2dtx_d2drx[mm, m]) ** 2 for mm in range(M)]),
                s.noise_d2d,
            )
        )
    return args


def build_subproblem(
    prev: Iterate,
    ch: ChannelSet,
    s: Scenario,
    include_radar: bool = True,
) -> ConicProgram:
    """Convex subproblem at the current expansion point.

    Variables are normalized (covariances in units of the BS budget, powers
    in units of their caps, log arguments to their expansion values) so the
    solver sees O(1) data regardless of the physical scales.  The program's
    objective equals the negated surrogate sum rate in bits/s/Hz, constant
    offsets included; the scaling map is attached as ``prog.meta``.
    """
    K, M = s.n_cu, s.n_d2d
    nt = s.array.n_tx
    rates = linearize_rate_terms(prev, ch, s)
    radar = linearize_f(prev.g_prev, ch, s) if include_radar else None

    prog = ConicProgram()
    for k in range(K):
        prog.add_psd_var(f"W{k}", nt)
    prog.add_nonneg_var("p", M)

    power = prog.trace("W0")
    for k in range(1, K):
        power = power + prog.trace(f"W{k}")
    prog.add_le(power, 1.0)
    for m in range(M):
        prog.add_le(prog.scalar("p", m), 1.0)

    p_max = np.asarray(s.p_d2d_max, dtype=float)
    sig_args = _signal_args(ch, s)
    refs = np.zeros(K + M)
    objective = LinExpr()

    for j, (outer, pcoef, noise) in enumerate(sig_args):
        ref = noise + float(
            np.real(np.sum(outer * np.conj(np.sum(prev.big_w, axis=0))))
        ) + float(pcoef @ prev.p)
        refs[j] = ref
        arg = LinExpr({}, noise / ref)
        for k in range(K):
            arg = arg + prog.mat_inner(f"W{k}", outer * (s.p_bs_max / ref))
        for m in range(M):
            arg = arg + prog.scalar("p", m) * (p_max[m] * pcoef[m] / ref)
        prog.add_log_term(1.0, arg)
        objective = objective + LinExpr({}, -math.log2(ref))

    # affine majorants of the interference terms
    for k in range(K):
        objective = objective + LinExpr({}, rates.cu_const[k])
        for kk in range(K):
            if kk != k:
                objective = objective + prog.mat_inner(
                    f"W{kk}", rates.cu_grad_w[k] * s.p_bs_max
                )
        for m in range(M):
            objective = objective + prog.scalar("p", m) * (
                rates.cu_grad_p[k, m] * p_max[m]
            )
    for m in range(M):
        objective = objective + LinExpr({}, rates.d2d_const[m])
        for k in range(K):
            objective = objective + prog.mat_inner(
                f"W{k}", rates.d2d_grad_w[m] * s.p_bs_max
            )
        for mm in range(M):
            objective = objective + prog.scalar("p", mm) * (
                rates.d2d_grad_p[m, mm] * p_max[mm]
            )
    prog.set_objective(objective)

    phi0 = f0 = 1.0
    if radar is not None:
        a_t = steering_vector(s.target_angle_deg, nt)
        f_prev = np.sum(prev.big_w, axis=0)
        phi_prev = float(np.real(a_t.conj() @ f_prev @ a_t))
        phi0 = max(phi_prev, 1e-3 * s.p_bs_max)
        f0 = radar.f0
        gamma_hat = (s.gamma_r / np.abs(ch.target_amp) ** 2) / (phi0 * f0)
        outer_t = np.outer(a_t, a_t.conj())
        phi_expr = LinExpr()
        for k in range(K):
            phi_expr = phi_expr + prog.mat_inner(
                f"W{k}", outer_t * (s.p_bs_max / phi0)
            )
        f_expr = LinExpr({}, radar.const / f0)
        for k in range(K):
            f_expr = f_expr + prog.mat_inner(
                f"W{k}", radar.coeff_w * (-s.p_bs_max / f0)
            )
        for m in range(M):
            f_expr = f_expr + prog.scalar("p", m) * (
                -radar.coeff_p[m] * p_max[m] / f0
            )
        # phi * f_tilde >= gamma via the hyperbolic second-order cone
        prog.add_soc(
            [
                phi_expr + f_expr,
                LinExpr({}, 2.0 * math.sqrt(gamma_hat)),
                phi_expr - f_expr,
            ]
        )

    prog.meta = SubproblemMap(
        p_bs=s.p_bs_max,
        p_max=p_max,
        refs=refs,
        radar=radar,
        rates=rates,
        phi0=phi0,
        f0=f0,
    )
    return prog


def solution_from_conic(
    prog: ConicProgram, sol: ConicSolution, s: Scenario
) -> tuple[list[np.ndarray], np.ndarray]:
    """De-normalize the solver's variables back to watts."""
    meta: SubproblemMap = prog.meta
    big_w = []
    for k in range(s.n_cu):
        w = meta.p_bs * sol.values[f"W{k}"]
        big_w.append(0.5 * (w + w.conj().T))
    p = np.clip(meta.p_max * sol.values["p"], 0.0, meta.p_max)
    return big_w, p


def surrogate_objective(
    prev: Iterate,
    ch: ChannelSet,
    s: Scenario,
    big_w: list[np.ndarray],
    p: np.ndarray,
    rates: RateLinearization | None = None,
) -> float:
    """Exact surrogate value (negated majorized sum rate) at a point."""
    if rates is None:
        rates = linearize_rate_terms(prev, ch, s)
    total = 0.0
    for j, (outer, pcoef, noise) in enumerate(_signal_args(ch, s)):
        y = noise + float(
            np.real(np.sum(outer * np.conj(np.sum(big_w, axis=0))))
        ) + float(pcoef @ p)
        total -= math.log2(y)
    for k in range(s.n_cu):
        total += rates.cu_value(k, big_w, p)
    for m in range(s.n_d2d):
        total += rates.d2d_value(m, big_w, p)
    return total


def true_negated_sum_rate(
    ch: ChannelSet, s: Scenario, big_w: list[np.ndarray], p: np.ndarray
) -> float:
    sol = mt.Solution(w=None, big_w=big_w, u=None, p=p)
    K, M = s.n_cu, s.n_d2d
    total = 0.0
    for k in range(K):
        total -= math.log2(1.0 + mt.cu_sinr(ch, s, sol, k))
    for m in range(M):
        total -= math.log2(1.0 + mt.d2d_sinr(ch, s, sol, m))
    return total


def _mrt_init(ch: ChannelSet, s: Scenario) -> list[np.ndarray]:
    big_w = []
    for k in range(s.n_cu):
        h = ch.h_bs_cu[k]
        hn = h / np.linalg.norm(h)
        big_w.append((s.p_bs_max / s.n_cu) * np.outer(hn, hn.conj()))
    return big_w


def _sensing_blend(ch: ChannelSet, s: Scenario) -> list[np.ndarray]:
    """MRT covariances blended half/half (in trace) with a target-steered
    rank-one covariance; fallback start when the sensing constraint rejects
    the communication-shaped initialization."""
    a_t = steering_vector(s.target_angle_deg, s.array.n_tx)
    sense = np.outer(a_t, a_t.conj())
    big_w = []
    for w in _mrt_init(ch, s):
        big_w.append(0.5 * w + 0.5 * (s.p_bs_max / s.n_cu) * sense)
    return big_w


@dataclass
class RunReport:
    """Per-run diagnostics: iteration trace, final metrics, solver stats."""

    iterations: list[dict] = field(default_factory=list)
    status: str = "ok"
    scheme: str = "proposed"
    final_metrics: mt.Metrics | None = None
    solution: mt.Solution | None = None
    rank_ratios: list[float] = field(default_factory=list)
    all_rank_ratios: list[list[float]] = field(default_factory=list)
    log_handler: str = "cutting_plane"
    wall_time_s: float = 0.0
    radar_sinr_target_db: float | None = None

    @property
    def objective_trace(self) -> list[float]:
        return [it["surrogate_objective"] for it in self.iterations]

    def to_json_dict(self) -> dict:
        out = {
            "scheme": self.scheme,
            "status": self.status,
            "log_handler": self.log_handler,
            "wall_time_s": self.wall_time_s,
            "iterations": self.iterations,
            "rank_ratios": self.rank_ratios,
        }
        if self.final_metrics is not None:
            out["sum_rate_bps_hz"] = self.final_metrics.sum_rate
            out["radar_sinr_db"] = self.final_metrics.radar_sinr_db
        return out


def sca_solve(
    ch: ChannelSet,
    s: Scenario,
    settings: ScaSettings | None = None,
    init: Iterate | None = None,
    include_radar: bool = True,
) -> RunReport:
    """Run the SCA loop to convergence and extract the final transceiver.

    Raises :class:`InfeasibleRadarConstraint` when the first subproblem is
    infeasible even after the sensing-blended restart, and
    :class:`SolverFailure` on an unusable subproblem solve.
    """
    settings = settings or ScaSettings()
    t_start = time.perf_counter()
    report = RunReport(
        scheme="proposed" if include_radar else "comm_only",
        radar_sinr_target_db=10.0 * math.log10(s.gamma_r) if include_radar else None,
    )

    if init is None:
        big_w = _mrt_init(ch, s)
        p = 0.5 * np.asarray(s.p_d2d_max, dtype=float)
    else:
        big_w, p = [w.copy() for w in init.big_w], init.p.copy()

    tol = settings.tolerances()
    prev_obj = None
    retried = False
    it_count = 0
    while it_count < settings.max_iters:
        it_count += 1
        f_prev = np.sum(big_w, axis=0)
        g_prev = interference_matrix(ch, s, f_prev, p)
        prev = Iterate(big_w=big_w, p=p, objective=math.nan, g_prev=g_prev)
        prog = build_subproblem(prev, ch, s, include_radar=include_radar)
        sol = solve(prog, tol)
        if sol.status == "infeasible":
            if include_radar and it_count == 1 and not retried:
                retried = True
                big_w = _sensing_blend(ch, s)
                it_count = 0
                continue
            raise InfeasibleRadarConstraint(
                f"radar SINR target {10*math.log10(s.gamma_r):.1f} dB unattainable"
            )
        if sol.status not in ("optimal",):
            raise SolverFailure(
                f"subproblem solve returned {sol.status} "
                f"(residuals {sol.residuals})"
            )
        big_w, p = solution_from_conic(prog, sol, s)
        surrogate = surrogate_objective(prev, ch, s, big_w, p, prog.meta.rates)
        ratios = [rank_ratio(w) for w in big_w]
        report.all_rank_ratios.append(ratios)
        report.iterations.append(
            {
                "iteration": it_count,
                "surrogate_objective": surrogate,
                "true_objective": true_negated_sum_rate(ch, s, big_w, p),
                "solver_status": sol.status,
                "solver_iterations": sol.iterations,
                "cut_rounds": sol.cut_rounds,
                "kkt_residuals": list(sol.residuals),
                "rank_ratios": ratios,
            }
        )
        if prev_obj is not None:
            change = abs(surrogate - prev_obj) / max(abs(prev_obj), 1e-12)
            if change < settings.rel_tol:
                prev_obj = surrogate
                break
        prev_obj = surrogate

    # rank-one extraction and the matched receive filter
    rng = np.random.default_rng(settings.seed)
    w_list = []
    for k in range(s.n_cu):
        w_vec = extract_rank_one(
            big_w[k],
            ch,
            s,
            k=k,
            big_w=big_w,
            p=p,
            settings=settings,
            rng=rng,
            check_radar=include_radar,
        )
        w_list.append(w_vec)
    w_arr = np.array(w_list)
    f_final = w_arr.T @ w_arr.conj()
    g_final = interference_matrix(ch, s, f_final, p)
    u = mvdr(g_final, s)
    solution = mt.Solution(w=w_arr, big_w=None, u=u, p=p)
    report.solution = solution
    report.final_metrics = mt.evaluate(ch, s, solution)
    report.rank_ratios = [rank_ratio(w) for w in big_w]
    report.wall_time_s = time.perf_counter() - t_start
    return report


def rank_ratio(w: np.ndarray) -> float:
    """Ratio of the two largest eigenvalues (inf for numerically rank one)."""
    eig = np.linalg.eigvalsh(w)
    lam1 = float(eig[-1])
    lam2 = float(eig[-2]) if eig.size > 1 else 0.0
    if lam2 <= 0.0:
        return math.inf
    return lam1 / lam2


def extract_rank_one(
    w_mat: np.ndarray,
    ch: ChannelSet,
    s: Scenario,
    k: int,
    big_w: list[np.ndarray],
    p: np.ndarray,
    settings: ScaSettings | None = None,
    rng: np.random.Generator | None = None,
    check_radar: bool = True,
) -> np.ndarray:
    """Collapse one transmit covariance to a beamformer.

    Numerically rank-one matrices take the dominant-eigenpair route with a
    deterministic phase (first significant component rotated real
    positive); otherwise Gaussian randomization draws trace-preserving
    candidates and keeps the best sum rate among those meeting the sensing
    constraint.
    """
    settings = settings or ScaSettings()
    rng = rng if rng is not None else np.random.default_rng(settings.seed)
    eig, vec = np.linalg.eigh(w_mat)
    lam1 = max(float(eig[-1]), 0.0)
    lam2 = max(float(eig[-2]), 0.0) if eig.size > 1 else 0.0
    v1 = vec[:, -1]

    def fix_phase(v: np.ndarray) -> np.ndarray:
        idx = np.argmax(np.abs(v) > 1e-12)
        ph = v[idx] / np.abs(v[idx]) if np.abs(v[idx]) > 0 else 1.0
        return v * np.conj(ph)

    if lam2 <= 0.0 or lam1 / max(lam2, 1e-300) > settings.rank_ratio_threshold:
        return fix_phase(math.sqrt(lam1) * v1)

    tr = float(np.real(np.trace(w_mat)))
    sqrt_w = (vec * np.sqrt(np.maximum(eig, 0.0))) @ vec.conj().T

    def score(w_vec: np.ndarray) -> tuple[bool, float]:
        cand = [m.copy() for m in big_w]
        cand[k] = np.outer(w_vec, w_vec.conj())
        if check_radar:
            f = np.sum(cand, axis=0)
            achieved = optimal_radar_sinr(ch, s, f, p)
            if achieved < s.gamma_r * (1.0 - 1e-6):
                return False, -math.inf
        return True, -true_negated_sum_rate(ch, s, cand, p)

    candidates = [fix_phase(math.sqrt(lam1) * v1)]
    n = w_mat.shape[0]
    for _ in range(settings.randomization_samples):
        xi = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)
        cand = sqrt_w @ xi
        nrm = np.linalg.norm(cand)
        if nrm <= 0.0:
            continue
        candidates.append(fix_phase(cand * math.sqrt(tr) / nrm))
    best = None
    for cand in candidates:
        ok, val = score(cand)
        if ok and (best is None or val > best[1]):
            best = (cand, val)
    if best is None:
        raise RandomizationFailure(
            "no rank-one candidate satisfied the sensing constraint"
        )
    return best[0]


def complexity_estimate(k_users: int, n_tx: int, m_pairs: int, eps: float) -> float:
    """Worst-case interior-point operation count for one subproblem.

    Accounting: l = K*N_t^2 + M scalar variables, 2M+1 semidefinite blocks
    of size 1, K of size N_t, one of size 2, no second-order blocks; the
    barrier parameter is the total semidefinite dimension.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must be in (0, 1)")
    l = k_users * n_tx**2 + m_pairs
    sd_sizes = [1] * (2 * m_pairs + 1) + [n_tx] * k_users + [2]
    mu = sum(sd_sizes)  # + 2 * n_soc with n_soc = 0
    sum_sq = sum(n**2 for n in sd_sizes)
    sum_cu = sum(n**3 for n in sd_sizes)
    return math.sqrt(mu) * (l**2 * sum_sq + l * sum_cu + l**3) * math.log(1.0 / eps)
