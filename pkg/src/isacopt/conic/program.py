"""Problem container for the embedded cone solver.

A program owns named variable blocks (Hermitian PSD matrices, nonnegative
or free scalar vectors), affine equality/inequality rows, second-order-cone
constraints, and an objective of the form

    minimize  linear(x)  -  sum_j  w_j * log2(arg_j(x)),   w_j > 0.

Hermitian matrix data is interchangeable with its real symmetric embedding
[[Re, -Im], [Im, Re]] (see :func:`embed_complex`); the solver works in the
complex representation, which is the invariant subalgebra of that embedding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = ["LinExpr", "ConicProgram", "embed_complex", "complex_from_embedded"]


def embed_complex(h: np.ndarray) -> np.ndarray:
    """Real symmetric embedding of a complex Hermitian matrix.

    The embedding is PSD iff the input is; the trace doubles and every
    eigenvalue appears twice.  Non-Hermitian input is rejected.
    """
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("input must be square")
    if np.linalg.norm(h - h.conj().T) > 1e-12 * max(1.0, np.linalg.norm(h)):
        raise ValueError("input must be Hermitian")
    re, im = np.real(h), np.imag(h)
    return np.block([[re, -im], [im, re]])


def complex_from_embedded(s: np.ndarray) -> np.ndarray:
    """Recover the Hermitian matrix from (the symmetric part of) its
    real embedding."""
    s = np.asarray(s, dtype=float)
    n2 = s.shape[0]
    if n2 % 2:
        raise ValueError("embedded matrix must have even order")
    n = n2 // 2
    a = 0.5 * (s[:n, :n] + s[n:, n:])
    b = 0.5 * (s[n:, :n] - s[:n, n:])
    m = a + 1j * 0.5 * (b - b.T)
    return 0.5 * (m + m.conj().T)


class LinExpr:
    """Real-valued affine expression over the program's variables.

    Coefficients: a Hermitian matrix for a PSD block (meaning
    Re tr(C X)), or a vector for a scalar block.
    """

    __slots__ = ("terms", "const")

    def __init__(self, terms: dict | None = None, const: float = 0.0):
        self.terms = dict(terms or {})
        self.const = float(const)

    def copy(self) -> "LinExpr":
        return LinExpr({k: np.array(v) for k, v in self.terms.items()}, self.const)

    def __add__(self, other):
        out = self.copy()
        if isinstance(other, LinExpr):
            for k, v in other.terms.items():
                out.terms[k] = out.terms.get(k, 0) + v
            out.const += other.const
        else:
            out.const += float(other)
        return out

    __radd__ = __add__

    def __neg__(self):
        return LinExpr({k: -np.asarray(v) for k, v in self.terms.items()}, -self.const)

    def __sub__(self, other):
        return self + (-other if isinstance(other, LinExpr) else -float(other))

    def __rsub__(self, other):
        return (-self) + float(other)

    def __mul__(self, a: float):
        a = float(a)
        return LinExpr({k: a * np.asarray(v) for k, v in self.terms.items()}, a * self.const)

    __rmul__ = __mul__


@dataclass
class _PsdVar:
    name: str
    n: int


@dataclass
class _ScalarVar:
    name: str
    size: int
    nonneg: bool


@dataclass
class _LogTerm:
    weight: float
    expr: LinExpr


class ConicProgram:
    """Mixed PSD / second-order / linear program with concave-log objective
    terms, solved by :func:`isacopt.conic.solve`."""

    def __init__(self):
        self.psd_vars: list[_PsdVar] = []
        self.scalar_vars: list[_ScalarVar] = []
        self.ineqs: list[tuple[LinExpr, float]] = []  # expr <= rhs
        self.eqs: list[tuple[LinExpr, float]] = []
        self.socs: list[list[LinExpr]] = []  # [t, u1, ..., ud]
        self.log_terms: list[_LogTerm] = []
        self.objective: LinExpr = LinExpr()
        self._names: set[str] = set()

    # --- variables ---

    def _register(self, name: str):
        if name in self._names:
            raise ValueError(f"duplicate variable name {name!r}")
        self._names.add(name)

    def add_psd_var(self, name: str, n: int) -> str:
        """Hermitian PSD matrix variable of order n."""
        if n < 1:
            raise ValueError("matrix order must be >= 1")
        self._register(name)
        self.psd_vars.append(_PsdVar(name, n))
        return name

    def add_nonneg_var(self, name: str, size: int = 1) -> str:
        self._register(name)
        self.scalar_vars.append(_ScalarVar(name, size, True))
        return name

    def add_free_var(self, name: str, size: int = 1) -> str:
        self._register(name)
        self.scalar_vars.append(_ScalarVar(name, size, False))
        return name

    # --- expression helpers ---

    def mat_inner(self, name: str, coeff: np.ndarray) -> LinExpr:
        """Re tr(coeff @ X) for a PSD variable; coeff must be Hermitian."""
        coeff = np.asarray(coeff, dtype=complex)
        coeff = 0.5 * (coeff + coeff.conj().T)
        return LinExpr({name: coeff})

    def quad(self, name: str, h: np.ndarray) -> LinExpr:
        """h^H X h as an affine functional of the PSD variable X."""
        h = np.asarray(h, dtype=complex)
        return LinExpr({name: np.outer(h, h.conj())})

    def trace(self, name: str) -> LinExpr:
        n = next(v.n for v in self.psd_vars if v.name == name)
        return LinExpr({name: np.eye(n, dtype=complex)})

    def scalar(self, name: str, idx: int = 0) -> LinExpr:
        size = next(v.size for v in self.scalar_vars if v.name == name)
        coeff = np.zeros(size)
        coeff[idx] = 1.0
        return LinExpr({name: coeff})

    # --- constraints / objective ---

    def add_le(self, expr: LinExpr, rhs: float = 0.0) -> int:
        self.ineqs.append((expr.copy(), float(rhs)))
        return len(self.ineqs) - 1

    def add_eq(self, expr: LinExpr, rhs: float = 0.0) -> int:
        self.eqs.append((expr.copy(), float(rhs)))
        return len(self.eqs) - 1

    def add_soc(self, exprs: list[LinExpr]) -> int:
        """Constraint ||(e_1, ..., e_d)||_2 <= e_0."""
        if len(exprs) < 2:
            raise ValueError("second-order cone needs at least two entries")
        self.socs.append([e.copy() for e in exprs])
        return len(self.socs) - 1

    def set_objective(self, expr: LinExpr) -> None:
        """Linear part of the minimized objective."""
        self.objective = expr.copy()

    def add_log_term(self, weight: float, expr: LinExpr) -> int:
        """Append ``- weight * log2(expr)`` to the minimized objective."""
        if weight <= 0:
            raise ValueError("log-term weight must be positive")
        self.log_terms.append(_LogTerm(float(weight), expr.copy()))
        return len(self.log_terms) - 1

    # --- evaluation over named values ---

    def eval_expr(self, expr: LinExpr, values: dict[str, np.ndarray]) -> float:
        total = expr.const
        for name, coeff in expr.terms.items():
            v = values[name]
            if np.asarray(coeff).ndim == 2:
                # Re tr(C X) for Hermitian C, X
                total += float(np.real(np.sum(coeff * np.conj(v))))
            else:
                total += float(np.dot(np.asarray(coeff), np.asarray(v)))
        return total

    def objective_value(self, values: dict[str, np.ndarray]) -> float:
        """Full objective, log terms included."""
        val = self.eval_expr(self.objective, values)
        for lt in self.log_terms:
            arg = self.eval_expr(lt.expr, values)
            if arg <= 0.0:
                return float("inf")
            val -= lt.weight * np.log2(arg)
        return val

    # --- structured-text dump (offline debugging) ---

    def dump(self, path: str) -> None:
        def enc_expr(e: LinExpr):
            terms = {}
            for k, v in e.terms.items():
                v = np.asarray(v)
                if v.ndim == 2:
                    terms[k] = {
                        "re": np.real(v).tolist(),
                        "im": np.imag(v).tolist(),
                    }
                else:
                    terms[k] = {"vec": v.tolist()}
            return {"terms": terms, "const": e.const}

        doc = {
            "psd_vars": [{"name": v.name, "n": v.n} for v in self.psd_vars],
            "scalar_vars": [
                {"name": v.name, "size": v.size, "nonneg": v.nonneg}
                for v in self.scalar_vars
            ],
            "ineqs": [{"expr": enc_expr(e), "rhs": r} for e, r in self.ineqs],
            "eqs": [{"expr": enc_expr(e), "rhs": r} for e, r in self.eqs],
            "socs": [[enc_expr(e) for e in soc] for soc in self.socs],
            "log_terms": [
                {"weight": lt.weight, "expr": enc_expr(lt.expr)} for lt in self.log_terms
            ],
            "objective": enc_expr(self.objective),
        }
        with open(path, "w") as f:
            json.dump(doc, f)
            f.write("\n")

    @staticmethod
    def load(path: str) -> "ConicProgram":
        def dec_expr(d) -> LinExpr:
            terms = {}
            for k, v in d["terms"].items():
                if "vec" in v:
                    terms[k] = np.array(v["vec"])
                else:
                    terms[k] = np.array(v["re"]) + 1j * np.array(v["im"])
            return LinExpr(terms, d["const"])

        with open(path) as f:
            doc = json.load(f)
        prog = ConicProgram()
        for v in doc["psd_vars"]:
            prog.add_psd_var(v["name"], v["n"])
        for v in doc["scalar_vars"]:
            if v["nonneg"]:
                prog.add_nonneg_var(v["name"], v["size"])
            else:
                prog.add_free_var(v["name"], v["size"])
        for row in doc["ineqs"]:
            prog.add_le(dec_expr(row["expr"]), row["rhs"])
        for row in doc["eqs"]:
            prog.add_eq(dec_expr(row["expr"]), row["rhs"])
        for soc in doc["socs"]:
            prog.add_soc([dec_expr(e) for e in soc])
        for lt in doc["log_terms"]:
            prog.add_log_term(lt["weight"], dec_expr(lt["expr"]))
        prog.set_objective(dec_expr(doc["objective"]))
        return prog
