"""Cone layouts and the algebra the interior-point kernel runs on.

Supported cones: nonnegative orthant, second-order (Lorentz) cones, and
positive semidefinite cones of Hermitian matrices.  Hermitian blocks are
carried in complex arithmetic; this is the standard real-embedding picture
[[Re, -Im], [Im, Re]] worked in its invariant subalgebra, so sizes stay n
instead of 2n.

Flat iterates use isometric coordinates: a Hermitian block of size n
occupies n*n reals (diagonal, then sqrt(2)-scaled real and imaginary upper
triangles), so plain dot products equal Re tr(AB).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

__all__ = ["ConeLayout", "NTScaling", "svec", "smat", "svec_dim"]

_SQRT2 = math.sqrt(2.0)


def svec_dim(n: int) -> int:
    return n * n


def _triu_ix(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, k=1)


def svec(m: np.ndarray) -> np.ndarray:
    """Isometric real coordinates of a Hermitian matrix."""
    n = m.shape[0]
    iu, ju = _triu_ix(n)
    off = m[iu, ju]
    return np.concatenate(
        [np.real(np.diag(m)), _SQRT2 * np.real(off), _SQRT2 * np.imag(off)]
    )


def smat(v: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`svec`."""
    iu, ju = _triu_ix(n)
    k = iu.size
    m = np.zeros((n, n), dtype=complex)
    np.fill_diagonal(m, v[:n])
    off = (v[n : n + k] + 1j * v[n + k : n + 2 * k]) / _SQRT2
    m[iu, ju] = off
    m[ju, iu] = off.conj()
    return m


@dataclass(frozen=True)
class _Block:
    kind: str  # "nn" | "soc" | "psd"
    offset: int
    length: int
    n: int  # matrix order for psd, 0 otherwise


class ConeLayout:
    """Ordered product of cone blocks over a flat real vector."""

    def __init__(self, nn: int = 0, socs: tuple[int, ...] = (), psds: tuple[int, ...] = ()):
        blocks: list[_Block] = []
        off = 0
        if nn:
            blocks.append(_Block("nn", off, nn, 0))
            off += nn
        for d in socs:
            if d < 2:
                raise ValueError("second-order cone needs dimension >= 2")
            blocks.append(_Block("soc", off, d, 0))
            off += d
        for n in psds:
            blocks.append(_Block("psd", off, svec_dim(n), n))
            off += svec_dim(n)
        self.blocks = blocks
        self.dim = off
        self.rank = nn + 2 * len(socs) + sum(psds)

    def identity(self) -> np.ndarray:
        e = np.zeros(self.dim)
        for b in self.blocks:
            if b.kind == "nn":
                e[b.offset : b.offset + b.length] = 1.0
            elif b.kind == "soc":
                e[b.offset] = 1.0
            else:
                e[b.offset : b.offset + b.length] = svec(np.eye(b.n))
        return e

    def _slice(self, u: np.ndarray, b: _Block) -> np.ndarray:
        return u[b.offset : b.offset + b.length]

    def min_eig(self, u: np.ndarray) -> float:
        """Smallest 'eigenvalue' across blocks; > 0 means interior."""
        worst = np.inf
        for b in self.blocks:
            ub = self._slice(u, b)
            if b.kind == "nn":
                if ub.size:
                    worst = min(worst, float(ub.min()))
            elif b.kind == "soc":
                worst = min(worst, float(ub[0] - np.linalg.norm(ub[1:])))
            else:
                w = np.linalg.eigvalsh(smat(ub, b.n))
                worst = min(worst, float(w[0]))
        return worst

    # --- Jordan-algebra operations (blockwise) ---

    def jordan_prod(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.dim)
        for b in self.blocks:
            ub, vb = self._slice(u, b), self._slice(v, b)
            if b.kind == "nn":
                out[b.offset : b.offset + b.length] = ub * vb
            elif b.kind == "soc":
                r = np.empty(b.length)
                r[0] = ub @ vb
                r[1:] = ub[0] * vb[1:] + vb[0] * ub[1:]
                out[b.offset : b.offset + b.length] = r
            else:
                a, c = smat(ub, b.n), smat(vb, b.n)
                out[b.offset : b.offset + b.length] = svec(0.5 * (a @ c + c @ a))
        return out

    def max_step(self, u: np.ndarray, du: np.ndarray) -> float:
        """Largest t with u + t*du still in the (closed) cone; inf if always."""
        t = np.inf
        for b in self.blocks:
            ub, db = self._slice(u, b), self._slice(du, b)
            if b.kind == "nn":
                neg = db < 0
                if np.any(neg):
                    t = min(t, float(np.min(-ub[neg] / db[neg])))
            elif b.kind == "soc":
                t = min(t, _soc_max_step(ub, db))
            else:
                s_m = smat(ub, b.n)
                d_m = smat(db, b.n)
                try:
                    l = np.linalg.cholesky(s_m)
                except np.linalg.LinAlgError:
                    # point already on/near the boundary: shrink via eigenvalues
                    w = np.linalg.eigvalsh(s_m)
                    s_m = s_m + (abs(w[0]) + 1e-14 * max(1.0, w[-1])) * np.eye(b.n)
                    l = np.linalg.cholesky(s_m)
                y = sla.solve_triangular(l, d_m, lower=True)
                y = sla.solve_triangular(l, y.conj().T, lower=True)
                wmin = float(np.linalg.eigvalsh(0.5 * (y + y.conj().T))[0])
                if wmin < 0:
                    t = min(t, -1.0 / wmin)
        return t


def _soc_max_step(s: np.ndarray, d: np.ndarray) -> float:
    # det(s + t d) = c + 2 b t + a t^2 must stay >= 0 with s0 + t d0 >= 0
    a = d[0] ** 2 - d[1:] @ d[1:]
    bq = s[0] * d[0] - s[1:] @ d[1:]
    c = s[0] ** 2 - s[1:] @ s[1:]
    roots = []
    if abs(a) < 1e-300:
        if bq < 0:
            roots.append(-c / (2.0 * bq))
    else:
        disc = bq * bq - a * c
        if disc >= 0.0:
            sq = math.sqrt(disc)
            for r in ((-bq - sq) / a, (-bq + sq) / a):
                if r > 0:
                    roots.append(r)
    t = min(roots) if roots else np.inf
    if d[0] < 0:
        t = min(t, -s[0] / d[0])
    return float(t)


# --- second-order-cone Jordan helpers ---


def _soc_det(u: np.ndarray) -> float:
    return float(u[0] ** 2 - u[1:] @ u[1:])


def _soc_inv(u: np.ndarray) -> np.ndarray:
    j = u.copy()
    j[1:] = -j[1:]
    return j / _soc_det(u)


def _soc_sqrt(u: np.ndarray) -> np.ndarray:
    rd = math.sqrt(_soc_det(u))
    out = u.copy()
    out[0] += rd
    return out / math.sqrt(2.0 * (u[0] + rd))


def _soc_quad_apply(q: np.ndarray, u: np.ndarray) -> np.ndarray:
    # P(q) u = 2 q (q.u) - det(q) J u
    ju = u.copy()
    ju[1:] = -ju[1:]
    return 2.0 * q * (q @ u) - _soc_det(q) * ju


def _safe_chol(m: np.ndarray) -> np.ndarray:
    """Cholesky with a jitter fallback for nearly singular interior points."""
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(m)
        shift = abs(min(float(w[0]), 0.0)) + 1e-14 * max(1.0, float(w[-1]))
        return np.linalg.cholesky(m + shift * np.eye(m.shape[0]))


class NTScaling:
    """Nesterov-Todd scaling for a primal-dual pair (s, z) in the cone.

    Provides the linear maps W, W^T, W^{-1}, W^{-T}, H = W^T W and H^{-1}
    on flat vectors, plus the scaled point lambda = W z = W^{-T} s.
    """

    def __init__(self, layout: ConeLayout, s: np.ndarray, z: np.ndarray):
        self.layout = layout
        self._nn: dict[int, np.ndarray] = {}
        self._soc: dict[int, dict[str, np.ndarray]] = {}
        self._psd: dict[int, dict[str, np.ndarray]] = {}
        lam = np.empty(layout.dim)
        for bi, b in enumerate(layout.blocks):
            sb = s[b.offset : b.offset + b.length]
            zb = z[b.offset : b.offset + b.length]
            if b.kind == "nn":
                w = np.sqrt(sb / zb)
                self._nn[bi] = w
                lam[b.offset : b.offset + b.length] = np.sqrt(sb * zb)
            elif b.kind == "soc":
                shalf = _soc_sqrt(sb)
                inner = _soc_quad_apply(shalf, zb)
                w = _soc_quad_apply(shalf, _soc_sqrt(_soc_inv(inner)))
                wh = _soc_sqrt(w)
                whi = _soc_sqrt(_soc_inv(w))
                self._soc[bi] = {"w": w, "wh": wh, "whi": whi, "winv": _soc_inv(w)}
                lam[b.offset : b.offset + b.length] = _soc_quad_apply(wh, zb)
            else:
                s_m, z_m = smat(sb, b.n), smat(zb, b.n)
                ls = _safe_chol(s_m)
                lz = _safe_chol(z_m)
                _, sig, vh = np.linalg.svd(lz.conj().T @ ls)
                # R = Ls V Sigma^{-1/2}; R^{-1} = Sigma^{1/2} V^H Ls^{-1}
                r = ls @ (vh.conj().T / np.sqrt(sig))
                rinv = (np.sqrt(sig)[:, None] * vh) @ sla.solve_triangular(
                    ls, np.eye(b.n, dtype=complex), lower=True
                )
                self._psd[bi] = {"r": r, "rinv": rinv, "sig": sig}
                lam[b.offset : b.offset + b.length] = svec(np.diag(sig).astype(complex))
        self.lam = lam
        self.lam_jordan_sq = layout.jordan_prod(lam, lam)

    # --- generic application machinery ---

    def _apply(self, u: np.ndarray, mode: str) -> np.ndarray:
        out = np.empty(self.layout.dim)
        for bi, b in enumerate(self.layout.blocks):
            ub = u[b.offset : b.offset + b.length]
            if b.kind == "nn":
                w = self._nn[bi]
                if mode in ("W", "WT"):
                    r = w * ub
                elif mode in ("Winv", "WinvT"):
                    r = ub / w
                elif mode == "H":
                    r = w * w * ub
                else:  # Hinv
                    r = ub / (w * w)
            elif b.kind == "soc":
                d = self._soc[bi]
                if mode in ("W", "WT"):
                    r = _soc_quad_apply(d["wh"], ub)
                elif mode in ("Winv", "WinvT"):
                    r = _soc_quad_apply(d["whi"], ub)
                elif mode == "H":
                    r = _soc_quad_apply(d["w"], ub)
                else:
                    r = _soc_quad_apply(d["winv"], ub)
            else:
                d = self._psd[bi]
                m = smat(ub, b.n)
                rm, rinv = d["r"], d["rinv"]
                if mode == "W":
                    r = svec(rm.conj().T @ m @ rm)
                elif mode == "WT":
                    r = svec(rm @ m @ rm.conj().T)
                elif mode == "Winv":
                    r = svec(rinv.conj().T @ m @ rinv)
                elif mode == "WinvT":
                    r = svec(rinv @ m @ rinv.conj().T)
                elif mode == "H":
                    lam_m = rm @ rm.conj().T
                    r = svec(lam_m @ m @ lam_m)
                else:
                    lam_i = rinv.conj().T @ rinv
                    r = svec(lam_i @ m @ lam_i)
            out[b.offset : b.offset + b.length] = r
        return out

    def W(self, u: np.ndarray) -> np.ndarray:
        return self._apply(u, "W")

    def WT(self, u: np.ndarray) -> np.ndarray:
        return self._apply(u, "WT")

    def Winv(self, u: np.ndarray) -> np.ndarray:
        return self._apply(u, "Winv")

    def WinvT(self, u: np.ndarray) -> np.ndarray:
        return self._apply(u, "WinvT")

    def H(self, u: np.ndarray) -> np.ndarray:
        return self._apply(u, "H")

    def Hinv(self, u: np.ndarray) -> np.ndarray:
        return self._apply(u, "Hinv")

    def lam_div(self, d: np.ndarray) -> np.ndarray:
        """Solve lambda o x = d blockwise."""
        out = np.empty(self.layout.dim)
        for bi, b in enumerate(self.layout.blocks):
            db = d[b.offset : b.offset + b.length]
            lb = self.lam[b.offset : b.offset + b.length]
            if b.kind == "nn":
                r = db / lb
            elif b.kind == "soc":
                det = _soc_det(lb)
                x0 = (lb[0] * db[0] - lb[1:] @ db[1:]) / det
                x1 = (db[1:] - x0 * lb[1:]) / lb[0]
                r = np.concatenate([[x0], x1])
            else:
                sig = self._psd[bi]["sig"]
                dm = smat(db, b.n)
                denom = sig[:, None] + sig[None, :]
                r = svec(2.0 * dm / denom)
            out[b.offset : b.offset + b.length] = r
        return out
