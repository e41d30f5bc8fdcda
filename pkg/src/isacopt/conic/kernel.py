"""Homogeneous self-dual interior-point kernel.

Solves   min c'x  s.t.  A x = b,  G x + s = h,  s in K
where K is a product of nonnegative, second-order, and Hermitian PSD
cones.  PSD blocks enter only as whole matrix variables (their rows of G
form a negated identity), which lets every KKT solve reduce to analytic
scaling applications plus one small dense bordered system; nothing of
cubic size in the matrix variables is ever factored.

The embedding follows the usual recipe: optimality and infeasibility are
both read off the limit of (x, y, z, s, tau, kappa), with Nesterov-Todd
scaled Mehrotra predictor-corrector steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cones import ConeLayout, NTScaling, smat, svec

__all__ = ["KernelProblem", "KernelResult", "solve_kernel"]


@dataclass
class KernelProblem:
    """Canonical data for one kernel solve.

    x layout: PSD matrix-variable coordinates first (one n*n slab per
    block, isometric Hermitian coordinates), then ``n_scalar`` scalar
    variables.  Small-cone rows (nonneg then SOCs) act on all of x.
    """

    n_x: int
    psd_vars: list[tuple[int, int]]  # (offset into x, matrix order)
    n_scalar: int
    c: np.ndarray
    g_small: np.ndarray  # (r, n_x)
    h_small: np.ndarray  # (r,)
    nn_rows: int
    soc_dims: tuple[int, ...]
    a_eq: np.ndarray  # (p, n_x)
    b_eq: np.ndarray  # (p,)


@dataclass
class KernelResult:
    status: str  # optimal | infeasible | unbounded | max_iter | numerical_failure
    x: np.ndarray | None
    y: np.ndarray | None
    z_small: np.ndarray | None
    z_psd: list[np.ndarray] | None
    s_small: np.ndarray | None
    pcost: float
    dcost: float
    pres: float
    dres: float
    relgap: float
    iterations: int
    cert: dict = field(default_factory=dict)


def _psd_cols(prob: KernelProblem) -> np.ndarray:
    cols = []
    for off, n in prob.psd_vars:
        cols.extend(range(off, off + n * n))
    return np.array(cols, dtype=int)


class _LuLongDouble:
    """Partial-pivoting LU in extended precision for small dense systems."""

    def __init__(self, a: np.ndarray):
        a = a.astype(np.longdouble).copy()
        n = a.shape[0]
        swaps = []
        for k in range(n - 1):
            i = k + int(np.argmax(np.abs(a[k:, k])))
            if i != k:
                a[[k, i]] = a[[i, k]]
                swaps.append((k, i))
            akk = a[k, k]
            if akk == 0.0:
                a[k, k] = akk = np.longdouble(1e-300)
            a[k + 1 :, k] /= akk
            a[k + 1 :, k + 1 :] -= np.outer(a[k + 1 :, k], a[k, k + 1 :])
        if n and a[n - 1, n - 1] == 0.0:
            a[n - 1, n - 1] = np.longdouble(1e-300)
        self.lu = a
        self.swaps = swaps

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = b.astype(np.longdouble).copy()
        lu = self.lu
        n = lu.shape[0]
        for k, i in self.swaps:
            x[[k, i]] = x[[i, k]]
        for k in range(1, n):
            x[k] -= lu[k, :k] @ x[:k]
        for k in range(n - 1, -1, -1):
            x[k] = (x[k] - lu[k, k + 1 :] @ x[k + 1 :]) / lu[k, k]
        return x.astype(float)


class _Kkt:
    """Per-iteration KKT factorization exploiting matrix-variable blocks."""

    def __init__(self, prob: KernelProblem, sc_small: NTScaling, sc_psd: NTScaling):
        self.prob = prob
        self.sc_small = sc_small
        self.sc_psd = sc_psd
        p = prob.a_eq.shape[0]
        r = prob.g_small.shape[0]
        w_cols = _psd_cols(prob)
        self.w_cols = w_cols
        nv = prob.n_scalar
        self.v_cols = np.arange(prob.n_x - nv, prob.n_x)
        gsw = prob.g_small[:, w_cols] if r else np.zeros((0, w_cols.size))
        gsv = prob.g_small[:, self.v_cols] if r else np.zeros((0, nv))
        aw = prob.a_eq[:, w_cols] if p else np.zeros((0, w_cols.size))
        av = prob.a_eq[:, self.v_cols] if p else np.zeros((0, nv))
        self.gsw, self.gsv, self.aw, self.av = gsw, gsv, aw, av

        # D^{-1} (inverse of the psd contribution to G' H^{-1} G) applied to
        # the w-rows of the small/equality systems.
        self.dg = self._dinv_rows(gsw)  # (n_w, r)
        self.da = self._dinv_rows(aw)  # (n_w, p)

        hs = self._h_small_mat()
        s11 = hs + (gsw @ self.dg if r else np.zeros((0, 0)))
        top = np.hstack([s11, -gsv, gsw @ self.da if (r and p) else np.zeros((r, p))])
        mid = np.hstack([gsv.T, np.zeros((nv, nv)), av.T])
        bot = np.hstack(
            [
                -(aw @ self.dg) if (r and p) else np.zeros((p, r)),
                av,
                -(aw @ self.da) if p else np.zeros((p, p)),
            ]
        )
        self.small = np.vstack([top, mid, bot])
        self.r, self.nv, self.p = r, nv, p
        if self.small.size:
            # extended-precision factorization: the bordered system carries
            # the squared endgame conditioning, and the extra mantissa bits
            # let iterative refinement against the float64 operator converge
            self.lu = _LuLongDouble(self.small)
        else:
            self.lu = None

    def _dinv_rows(self, rows_w: np.ndarray) -> np.ndarray:
        """Apply D^{-1} = H_psd to each row (given as rows over w coords)."""
        nrows = rows_w.shape[0]
        out = np.zeros((self.w_cols.size, nrows))
        if nrows == 0 or self.w_cols.size == 0:
            return out
        pos = 0
        for bi, (off, n) in enumerate(self.prob.psd_vars):
            blk = rows_w[:, pos : pos + n * n]
            lam = self.sc_psd._psd[bi]["r"] @ self.sc_psd._psd[bi]["r"].conj().T
            mats = _batch_smat(blk, n)
            sand = lam[None] @ mats @ lam[None]
            out[pos : pos + n * n, :] = _batch_svec(sand, n).T
            pos += n * n
        return out

    def _h_small_mat(self) -> np.ndarray:
        r = self.prob.g_small.shape[0]
        if r == 0:
            return np.zeros((0, 0))
        cols = np.eye(r)
        return np.column_stack([self.sc_small.H(cols[:, i]) for i in range(r)])

    def _dinv_apply(self, q_w: np.ndarray) -> np.ndarray:
        out = np.empty_like(q_w)
        pos = 0
        for bi, (off, n) in enumerate(self.prob.psd_vars):
            lam = self.sc_psd._psd[bi]["r"] @ self.sc_psd._psd[bi]["r"].conj().T
            m = smat(q_w[pos : pos + n * n], n)
            out[pos : pos + n * n] = svec(lam @ m @ lam)
            pos += n * n
        return out

    def hinv_psd(self, u_w: np.ndarray) -> np.ndarray:
        out = np.empty_like(u_w)
        pos = 0
        for bi, (off, n) in enumerate(self.prob.psd_vars):
            rinv = self.sc_psd._psd[bi]["rinv"]
            lam_i = rinv.conj().T @ rinv
            m = smat(u_w[pos : pos + n * n], n)
            out[pos : pos + n * n] = svec(lam_i @ m @ lam_i)
            pos += n * n
        return out

    def solve(self, bx: np.ndarray, by: np.ndarray, bz: np.ndarray):
        """One structured solve of the reduced KKT system.

        bz is the full cone-side right-hand side ordered (small, psd).
        Returns (ux, uy, uz).
        """

        prob = self.prob
        r, nv, p = self.r, self.nv, self.p
        m_small = prob.g_small.shape[0]
        bz_small, bz_psd = bz[:m_small], bz[m_small:]

        # q = bx + G' Hinv bz
        q = bx.copy()
        if r:
            q += prob.g_small.T @ self.sc_small.Hinv(bz_small)
        q_w = q[self.w_cols] - self.hinv_psd(bz_psd) if self.w_cols.size else q[self.w_cols]
        q_v = q[self.v_cols]

        dq_w = self._dinv_apply(q_w) if self.w_cols.size else q_w
        rhs = np.concatenate(
            [
                (self.gsw @ dq_w) if r else np.zeros(0),
                q_v,
                by - (self.aw @ dq_w if p else np.zeros(p)),
            ]
        )
        if self.lu is not None:
            sol = self.lu.solve(rhs)
        else:
            sol = rhs
        g = sol[:r]
        u_v = sol[r : r + nv]
        u_y = sol[r + nv :]

        u_w = dq_w
        if r:
            u_w = u_w - self.dg @ g
        if p:
            u_w = u_w - self.da @ u_y

        u_x = np.empty(prob.n_x)
        u_x[self.w_cols] = u_w
        u_x[self.v_cols] = u_v

        uz_small = (
            self.sc_small.Hinv(prob.g_small @ u_x - bz_small) if r else np.zeros(0)
        )
        # recover the psd dual block from the dual-feasibility row; unlike
        # Hinv(-u_w - bz_psd) this involves no ill-conditioned scaling apply
        if self.w_cols.size:
            uz_psd = -bx[self.w_cols]
            if p:
                uz_psd = uz_psd + self.aw.T @ u_y
            if r:
                uz_psd = uz_psd + self.gsw.T @ uz_small
        else:
            uz_psd = np.zeros(0)
        u_z = np.concatenate([uz_small, uz_psd])
        return u_x, u_y, u_z


def _batch_smat(v: np.ndarray, n: int) -> np.ndarray:
    """Vectorized smat over rows of v: (r, n*n) -> (r, n, n)."""
    r = v.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    k = iu.size
    m = np.zeros((r, n, n), dtype=complex)
    idx = np.arange(n)
    m[:, idx, idx] = v[:, :n]
    off = (v[:, n : n + k] + 1j * v[:, n + k : n + 2 * k]) / np.sqrt(2.0)
    m[:, iu, ju] = off
    m[:, ju, iu] = off.conj()
    return m


def _batch_svec(m: np.ndarray, n: int) -> np.ndarray:
    r = m.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    idx = np.arange(n)
    off = m[:, iu, ju]
    return np.concatenate(
        [np.real(m[:, idx, idx]), np.sqrt(2.0) * np.real(off), np.sqrt(2.0) * np.imag(off)],
        axis=1,
    )


def _apply_g(prob: KernelProblem, x: np.ndarray) -> np.ndarray:
    parts = [prob.g_small @ x] if prob.g_small.shape[0] else [np.zeros(0)]
    for off, n in prob.psd_vars:
        parts.append(-x[off : off + n * n])
    return np.concatenate(parts)


def _apply_gt(prob: KernelProblem, z: np.ndarray) -> np.ndarray:
    r = prob.g_small.shape[0]
    out = prob.g_small.T @ z[:r] if r else np.zeros(prob.n_x)
    pos = r
    for off, n in prob.psd_vars:
        out[off : off + n * n] -= z[pos : pos + n * n]
        pos += n * n
    return out


def _cone_layout(prob: KernelProblem) -> tuple[ConeLayout, ConeLayout, ConeLayout]:
    small = ConeLayout(nn=prob.nn_rows, socs=prob.soc_dims)
    psd = ConeLayout(psds=tuple(n for _, n in prob.psd_vars))
    full = ConeLayout(
        nn=prob.nn_rows, socs=prob.soc_dims, psds=tuple(n for _, n in prob.psd_vars)
    )
    return small, psd, full


def solve_kernel(
    prob: KernelProblem,
    tol: float = 1e-7,
    max_iter: int = 200,
    refine: int = 2,
    verbose: bool = False,
    ladder: tuple[float, ...] = (0.98, 0.95, 0.90, 0.99, 0.85),
) -> KernelResult:
    """Solve with a small retry ladder over step fractions.

    A stalled endgame on one trajectory usually converges on a slightly
    more conservative one; certified infeasible/unbounded results are
    returned immediately.
    """
    res = None
    for step_frac in ladder:
        res = _solve_once(
            prob,
            tol=tol,
            max_iter=max_iter,
            step_frac=step_frac,
            refine=refine,
            verbose=verbose,
        )
        if res.status in ("optimal", "infeasible", "unbounded"):
            return res
    return res


def _solve_once(
    prob: KernelProblem,
    tol: float = 1e-7,
    max_iter: int = 200,
    step_frac: float = 0.98,
    refine: int = 2,
    verbose: bool = False,
) -> KernelResult:
    """Run the homogeneous embedding until the de-homogenized iterate meets
    ``tol`` in primal/dual residual and relative gap.

    Internally aims a factor below ``tol``; when the endgame linear algebra
    stalls, the best iterate seen is returned (status ``optimal`` only if it
    meets ``tol``).
    """
    target = 0.2 * tol
    small_layout, psd_layout, layout = _cone_layout(prob)
    m = layout.dim
    m_small = small_layout.dim
    if prob.g_small.shape[0] != m_small:
        raise ValueError("small row count does not match cone layout")

    c = prob.c
    a, b = prob.a_eq, prob.b_eq
    h = np.concatenate([prob.h_small, np.zeros(m - m_small)])
    p = a.shape[0]

    e_full = layout.identity()
    x = np.zeros(prob.n_x)
    y = np.zeros(p)
    s = e_full.copy()
    z = e_full.copy()
    # least-squares start: one identity-scaled KKT solve gives a primal
    # point near the affine constraints and a dual near stationarity; both
    # are shifted into the cone interior
    try:
        sc0_small = NTScaling(small_layout, s[:m_small], z[:m_small])
        sc0_psd = NTScaling(psd_layout, s[m_small:], z[m_small:])
        kkt0 = _Kkt(prob, sc0_small, sc0_psd)
        x0, _, _ = kkt0.solve(np.zeros(prob.n_x), b.copy(), h.copy())
        s_try = h - _apply_g(prob, x0)
        margin = layout.min_eig(s_try)
        if np.isfinite(margin):
            shift = max(0.0, -margin) + 1.0
            x = x0
            s = s_try + shift * e_full
        _, y0, z0 = kkt0.solve(-c, np.zeros(p), np.zeros(m))
        margin = layout.min_eig(z0)
        if np.isfinite(margin):
            y = y0
            z = z0 + (max(0.0, -margin) + 1.0) * e_full
    except np.linalg.LinAlgError:
        pass
    tau, kappa = 1.0, 1.0
    rank = layout.rank

    norm_b = max(1.0, np.linalg.norm(b)) if p else 1.0
    norm_h = max(1.0, np.linalg.norm(h))
    norm_c = max(1.0, np.linalg.norm(c))

    best = None
    status = "max_iter"
    stall = 0
    it = 0
    for it in range(1, max_iter + 1):
        # residuals of the homogeneous model
        rx = (a.T @ y if p else 0.0) + _apply_gt(prob, z) + c * tau
        ry = a @ x - b * tau if p else np.zeros(0)
        rz = _apply_g(prob, x) + s - h * tau
        rt = float(c @ x + (b @ y if p else 0.0) + h @ z + kappa)

        gap_cone = float(s @ z)
        mu = (gap_cone + tau * kappa) / (rank + 1)

        # convergence bookkeeping on the de-homogenized point
        xh, yh, zh, sh = x / tau, y / tau, z / tau, s / tau
        pcost = float(c @ xh)
        dcost = float(-(b @ yh if p else 0.0) - h @ zh)
        pres_eq = np.linalg.norm(a @ xh - b) / norm_b if p else 0.0
        pres_in = np.linalg.norm(_apply_g(prob, xh) + sh - h) / norm_h
        pres = max(pres_eq, pres_in)
        dres = np.linalg.norm((a.T @ yh if p else 0.0) + _apply_gt(prob, zh) + c) / norm_c
        agap = float(sh @ zh)
        relgap = agap / max(1.0, abs(pcost), abs(dcost))

        if verbose:
            print(
                f"it={it:3d} pcost={pcost: .6e} gap={relgap:.2e} pres={pres:.2e} "
                f"dres={dres:.2e} mu={mu:.2e} tau={tau:.2e} kappa={kappa:.2e}"
            )

        metric = max(pres, dres, relgap)
        if best is None or metric < best[0]:
            best = (
                metric,
                xh.copy(),
                yh.copy(),
                zh.copy(),
                sh.copy(),
                pcost,
                dcost,
                pres,
                dres,
                relgap,
            )
            stall = 0
        else:
            stall += 1

        if metric <= target:
            status = "optimal"
            break
        if best[0] <= tol and (stall >= 3 or metric > 50.0 * best[0]):
            # endgame linear algebra has hit its accuracy floor
            status = "optimal"
            break
        if stall >= 6:
            status = "numerical_failure" if best[0] > tol else "optimal"
            break

        # infeasibility certificates
        e1 = float(-(b @ y if p else 0.0) - h @ z)
        if e1 > 0:
            num = np.linalg.norm((a.T @ y if p else 0.0) + _apply_gt(prob, z))
            if num / e1 <= tol * norm_c and tau <= 1e-6 * max(1.0, kappa):
                status = "infeasible"
                cert_y, cert_z = y / e1, z / e1
                return KernelResult(
                    status,
                    None,
                    None,
                    None,
                    None,
                    None,
                    np.nan,
                    np.nan,
                    pres,
                    dres,
                    relgap,
                    it,
                    cert={"y": cert_y, "z": cert_z, "violation": num / e1},
                )
        e2 = float(-c @ x)
        if e2 > 0:
            num = max(
                np.linalg.norm(a @ x) if p else 0.0,
                np.linalg.norm(_apply_g(prob, x) + s),
            )
            if num / e2 <= tol * norm_h and tau <= 1e-6 * max(1.0, kappa):
                status = "unbounded"
                return KernelResult(
                    status,
                    x / e2,
                    None,
                    None,
                    None,
                    None,
                    np.nan,
                    np.nan,
                    pres,
                    dres,
                    relgap,
                    it,
                    cert={"x": x / e2, "violation": num / e2},
                )

        # NT scalings and factorization
        try:
            sc_small = NTScaling(small_layout, s[:m_small], z[:m_small])
            sc_psd = NTScaling(psd_layout, s[m_small:], z[m_small:])
            kkt = _Kkt(prob, sc_small, sc_psd)
        except np.linalg.LinAlgError:
            status = "numerical_failure" if best[0] > tol else "optimal"
            break

        lam = np.concatenate([sc_small.lam, sc_psd.lam])
        lam_sq = np.concatenate(
            [sc_small.lam_jordan_sq, sc_psd.lam_jordan_sq]
        )

        def full_scaling(fn_small, fn_psd, u):
            return np.concatenate([fn_small(u[:m_small]), fn_psd(u[m_small:])])

        def w_t(u):
            return full_scaling(sc_small.WT, sc_psd.WT, u)

        def w_apply(u):
            return full_scaling(sc_small.W, sc_psd.W, u)

        def winv_t(u):
            return full_scaling(sc_small.WinvT, sc_psd.WinvT, u)

        def h_apply(u):
            return full_scaling(sc_small.H, sc_psd.H, u)

        def lam_div(u):
            return np.concatenate(
                [sc_small.lam_div(u[:m_small]), sc_psd.lam_div(u[m_small:])]
            )

        def jprod(u, v):
            return np.concatenate(
                [
                    small_layout.jordan_prod(u[:m_small], v[:m_small]),
                    psd_layout.jordan_prod(u[m_small:], v[m_small:]),
                ]
            )

        rhs_scale = None

        def kkt_solve_refined(bx, by, bz):
            # iterative refinement against the exact KKT operator; extra
            # rounds are cheap and extend the accuracy floor near mu -> 0
            ux, uy, uz = kkt.solve(bx, by, bz)
            scale = max(
                np.linalg.norm(bx), np.linalg.norm(by) if p else 0.0, np.linalg.norm(bz), 1e-300
            )
            prev = np.inf
            for _ in range(refine + 4):
                res_x = bx - ((a.T @ uy if p else 0.0) + _apply_gt(prob, uz))
                res_y = by - (a @ ux if p else np.zeros(0))
                res_z = bz - (_apply_g(prob, ux) - h_apply(uz))
                rnorm = max(
                    np.linalg.norm(res_x),
                    np.linalg.norm(res_y) if p else 0.0,
                    np.linalg.norm(res_z),
                )
                if rnorm <= 1e-14 * scale or rnorm >= 0.5 * prev:
                    break
                prev = rnorm
                dx, dy, dz = kkt.solve(res_x, res_y, res_z)
                ux, uy, uz = ux + dx, uy + dy, uz + dz
            return ux, uy, uz

        # static column
        x1, y1, z1 = kkt_solve_refined(-c, b.copy(), h.copy())
        cbh1 = float(c @ x1 + (b @ y1 if p else 0.0) + h @ z1)

        def direction(sigma, eta_s, eta_k):
            ds = sigma * mu * layout.identity() - lam_sq - eta_s
            dk = sigma * mu - tau * kappa - eta_k
            rho = lam_div(ds)
            bz2 = -(1.0 - sigma) * rz - w_t(rho)
            x2, y2, z2 = kkt_solve_refined(
                -(1.0 - sigma) * rx, -(1.0 - sigma) * ry, bz2
            )
            denom = cbh1 - kappa / tau
            num = (
                -(1.0 - sigma) * rt
                - float(c @ x2 + (b @ y2 if p else 0.0) + h @ z2)
                - dk / tau
            )
            dtau = num / denom
            dx = x2 + dtau * x1
            dy = y2 + dtau * y1
            dz = z2 + dtau * z1
            # compose in scaled space: W'(rho - W dz) loses fewer digits than
            # W' rho - (W'W) dz when the scaling is ill-conditioned
            dsv = w_t(rho - w_apply(dz))
            dkap = (dk - kappa * dtau) / tau
            return dx, dy, dz, dsv, dtau, dkap

        def max_alpha(dsv, dz, dtau, dkap):
            alpha = min(
                layout.max_step(s, dsv),
                layout.max_step(z, dz),
            )
            if dtau < 0:
                alpha = min(alpha, -tau / dtau)
            if dkap < 0:
                alpha = min(alpha, -kappa / dkap)
            return min(alpha, 1.0 / step_frac)

        # predictor
        dxa, dya, dza, dsa, dta, dka = direction(0.0, 0.0, 0.0)
        alpha_a = max_alpha(dsa, dza, dta, dka)
        sa = s + alpha_a * dsa
        za = z + alpha_a * dza
        mu_a = (float(sa @ za) + (tau + alpha_a * dta) * (kappa + alpha_a * dka)) / (
            rank + 1
        )
        sigma = min(1.0, max(0.0, (mu_a / mu) ** 3))

        # corrector
        eta_s = jprod(winv_t(dsa), w_apply(dza))
        eta_k = dta * dka
        dx, dy, dz, dsv, dtau, dkap = direction(sigma, eta_s, eta_k)
        alpha = step_frac * max_alpha(dsv, dz, dtau, dkap)

        if not np.isfinite(alpha) or alpha <= 1e-10:
            status = "numerical_failure" if best[0] > tol else "optimal"
            break

        def candidate_metric(al):
            xn, yn = x + al * dx, y + al * dy
            zn, sn = z + al * dz, s + al * dsv
            tn = tau + al * dtau
            pr = np.linalg.norm(a @ (xn / tn) - b) / norm_b if p else 0.0
            pr = max(pr, np.linalg.norm(_apply_g(prob, xn / tn) + sn / tn - h) / norm_h)
            dr = (
                np.linalg.norm((a.T @ (yn / tn) if p else 0.0) + _apply_gt(prob, zn / tn) + c)
                / norm_c
            )
            gp = float((sn / tn) @ (zn / tn))
            pc = float(c @ (xn / tn))
            dc = float(-(b @ (yn / tn) if p else 0.0) - h @ (zn / tn))
            return max(pr, dr, gp / max(1.0, abs(pc), abs(dc)))

        if metric <= 1e-4:
            # endgame guard: do not let a noisy direction destroy a nearly
            # converged iterate; halve the step while it makes things worse,
            # and skip the update entirely if no step length helps
            ok = False
            for _ in range(6):
                if candidate_metric(alpha) <= max(metric, target):
                    ok = True
                    break
                alpha *= 0.5
            if not ok:
                stall += 1
                if stall >= 6:
                    status = "numerical_failure" if best[0] > tol else "optimal"
                    break
                continue

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * dsv
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkap

    # unpack the best de-homogenized point
    _, xh, yh, zh, sh, pcost, dcost, pres, dres, relgap = best

    # dual polish: the stationarity residual on matrix-variable coordinates
    # can be folded exactly into the psd dual blocks (clipped back onto the
    # cone); this routinely gains an order of magnitude in dres
    if prob.psd_vars:
        resid = (a.T @ yh if p else 0.0) + _apply_gt(prob, zh) + c
        zh2 = zh.copy()
        pos = m_small
        for off, n in prob.psd_vars:
            blk = smat(zh2[pos : pos + n * n] + resid[off : off + n * n], n)
            w_eig, v_eig = np.linalg.eigh(blk)
            blk = (v_eig * np.maximum(w_eig, 0.0)) @ v_eig.conj().T
            zh2[pos : pos + n * n] = svec(blk)
            pos += n * n
        dres2 = (
            np.linalg.norm((a.T @ yh if p else 0.0) + _apply_gt(prob, zh2) + c) / norm_c
        )
        agap2 = float(sh @ zh2)
        dcost2 = float(-(b @ yh if p else 0.0) - h @ zh2)
        relgap2 = agap2 / max(1.0, abs(pcost), abs(dcost2))
        if max(pres, dres2, relgap2) < max(pres, dres, relgap):
            zh, dres, relgap, dcost = zh2, dres2, relgap2, dcost2

    if status in ("max_iter", "numerical_failure") and max(pres, dres, relgap) <= tol:
        status = "optimal"
    r = prob.g_small.shape[0]
    z_small = zh[:m_small]
    s_small = sh[:m_small]
    z_psd = []
    pos = m_small
    for off, n in prob.psd_vars:
        z_psd.append(smat(zh[pos : pos + n * n], n))
        pos += n * n
    return KernelResult(
        status,
        xh,
        yh,
        z_small,
        z_psd,
        s_small,
        pcost,
        dcost,
        pres,
        dres,
        relgap,
        it,
    )
