"""Standard-form convex QCQP / mixed-integer QCQP containers.

A problem is

    minimize    0.5 x^T P x + q^T x + c0
    subject to  A x = b
                G x <= h
                0.5 x^T Q_i x + r_i^T x + s_i <= 0        (convex, Q_i PSD)
                lb <= x <= ub
                x_j in {0, 1} for j in binary_idx

P and every Q_i must be positive semidefinite.  The same structure is used
for the continuous relaxations inside branch-and-bound (binary_idx empty or
ignored) and can be dumped to / loaded from JSON for offline debugging.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class QuadConstraint:
    """One convex quadratic inequality 0.5 x^T Q x + r^T x + s <= 0."""

    Q: np.ndarray
    r: np.ndarray
    s: float

    def value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.Q @ x + self.r @ x + self.s)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.Q @ x + self.r


@dataclass(frozen=True)
class Problem:
    """Standard-form problem; a MIQCQP when ``binary_idx`` is nonempty."""

    P: np.ndarray
    q: np.ndarray
    c0: float
    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    h: np.ndarray
    quads: tuple[QuadConstraint, ...]
    lb: np.ndarray
    ub: np.ndarray
    binary_idx: tuple[int, ...] = ()
    names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "quads", tuple(self.quads))
        object.__setattr__(self, "binary_idx", tuple(self.binary_idx))
        object.__setattr__(self, "names", tuple(self.names))
        n = self.q.size
        if self.P.shape != (n, n):
            raise ValueError("P must be n x n")
        if self.A.size and self.A.shape[1] != n or self.G.size and self.G.shape[1] != n:
            raise ValueError("constraint matrices must have n columns")
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("bounds must have length n")
        for j in self.binary_idx:
            if not (0 <= j < n):
                raise ValueError("binary index out of range")

    @property
    def n(self) -> int:
        return self.q.size

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.P @ x + self.q @ x + self.c0)

    def validate_convexity(self, tol: float = 1e-8) -> None:
        """Check PSD of the objective and every quadratic constraint."""
        scale = max(1.0, float(np.max(np.abs(self.P))) if self.P.size else 1.0)
        if self.P.size and float(np.linalg.eigvalsh(0.5 * (self.P + self.P.T))[0]) < -tol * scale:
            raise ValueError("objective quadratic part is not PSD")
        for i, qc in enumerate(self.quads):
            qscale = max(1.0, float(np.max(np.abs(qc.Q))))
            if float(np.linalg.eigvalsh(0.5 * (qc.Q + qc.Q.T))[0]) < -tol * qscale:
                raise ValueError(f"quadratic constraint {i} is not PSD")
        for j in self.binary_idx:
            if self.lb[j] < -1e-12 or self.ub[j] > 1.0 + 1e-12:
                raise ValueError(f"binary variable {j} must have bounds within [0, 1]")

    def residuals(self, x: np.ndarray) -> dict[str, float]:
        """Worst-case constraint violations at x, by constraint family."""
        out = {"eq": 0.0, "ineq": 0.0, "quad": 0.0, "bounds": 0.0, "integrality": 0.0}
        if self.A.size:
            out["eq"] = float(np.max(np.abs(self.A @ x - self.b)))
        if self.G.size:
            out["ineq"] = float(max(0.0, np.max(self.G @ x - self.h)))
        if self.quads:
            out["quad"] = max(0.0, max(qc.value(x) for qc in self.quads))
        lo = np.where(np.isfinite(self.lb), self.lb - x, -np.inf)
        hi = np.where(np.isfinite(self.ub), x - self.ub, -np.inf)
        viol = np.maximum(lo, hi)
        out["bounds"] = float(max(0.0, np.max(viol))) if viol.size else 0.0
        if self.binary_idx:
            bv = x[list(self.binary_idx)]
            out["integrality"] = float(np.max(np.abs(bv - np.round(bv))))
        return out

    def max_violation(self, x: np.ndarray) -> float:
        r = self.residuals(x)
        return max(r["eq"], r["ineq"], r["quad"], r["bounds"])

    def is_feasible(self, x: np.ndarray, tol: float = 1e-6) -> bool:
        return self.max_violation(x) <= tol


def empty_like(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.zeros((0, n)), np.zeros(0)


def fix_variables(p: Problem, fixes: dict[int, float]) -> tuple[Problem | None, "Reinserter"]:
    """Substitute fixed values and return the reduced problem.

    Returns (None, reinserter) when the fixes alone contradict a constraint
    that involves only fixed variables (constant infeasibility).
    """
    if not fixes:
        return p, Reinserter(p.n, {}, list(range(p.n)))
    fixed_idx = sorted(fixes)
    keep = [j for j in range(p.n) if j not in fixes]
    xf = np.array([fixes[j] for j in fixed_idx])
    reins = Reinserter(p.n, dict(fixes), keep)

    for j in fixed_idx:
        if not (p.lb[j] - 1e-9 <= fixes[j] <= p.ub[j] + 1e-9):
            return None, reins

    P_kk = p.P[np.ix_(keep, keep)]
    P_kf = p.P[np.ix_(keep, fixed_idx)]
    P_ff = p.P[np.ix_(fixed_idx, fixed_idx)]
    q_k = p.q[keep] + P_kf @ xf
    c0 = p.c0 + 0.5 * xf @ P_ff @ xf + p.q[fixed_idx] @ xf

    def reduce_rows(M: np.ndarray, rhs: np.ndarray, is_eq: bool):
        if not M.size:
            return np.zeros((0, len(keep))), np.zeros(0), True
        M_k = M[:, keep]
        rhs_k = rhs - M[:, fixed_idx] @ xf
        zero = np.max(np.abs(M_k), axis=1) == 0.0 if M_k.size else np.ones(len(rhs_k), bool)
        if is_eq:
            if np.any(np.abs(rhs_k[zero]) > 1e-9):
                return None, None, False
        else:
            if np.any(rhs_k[zero] < -1e-9):
                return None, None, False
        keep_rows = ~zero
        return M_k[keep_rows], rhs_k[keep_rows], True

    A_k, b_k, ok = reduce_rows(p.A, p.b, True)
    if not ok:
        return None, reins
    G_k, h_k, ok = reduce_rows(p.G, p.h, False)
    if not ok:
        return None, reins

    G_extra, h_extra = [], []
    quads_k = []
    for qc in p.quads:
        Q_kk = qc.Q[np.ix_(keep, keep)]
        r_k = qc.r[keep] + qc.Q[np.ix_(keep, fixed_idx)] @ xf
        s_k = qc.s + 0.5 * xf @ qc.Q[np.ix_(fixed_idx, fixed_idx)] @ xf + qc.r[fixed_idx] @ xf
        if not np.any(Q_kk):
            if not np.any(r_k):
                if s_k > 1e-9:
                    return None, reins
            else:
                G_extra.append(r_k)
                h_extra.append(-s_k)
        else:
            quads_k.append(QuadConstraint(Q=Q_kk, r=r_k, s=float(s_k)))
    if G_extra:
        G_k = np.vstack([G_k, np.array(G_extra)]) if G_k.size else np.array(G_extra)
        h_k = np.concatenate([h_k, np.array(h_extra)])

    old_to_new = {j: i for i, j in enumerate(keep)}
    reduced = Problem(
        P=P_kk,
        q=q_k,
        c0=float(c0),
        A=A_k,
        b=b_k,
        G=G_k,
        h=h_k,
        quads=tuple(quads_k),
        lb=p.lb[keep],
        ub=p.ub[keep],
        binary_idx=tuple(old_to_new[j] for j in p.binary_idx if j in old_to_new),
        names=tuple(p.names[j] for j in keep) if p.names else (),
    )
    return reduced, reins


@dataclass(frozen=True)
class Reinserter:
    """Maps a reduced solution vector back to the full variable space."""

    n_full: int
    fixes: dict[int, float]
    keep: list[int]

    def expand(self, x_reduced: np.ndarray) -> np.ndarray:
        x = np.empty(self.n_full)
        for j, v in self.fixes.items():
            x[j] = v
        x[self.keep] = x_reduced
        return x


def to_json(p: Problem, path: str | Path | None = None) -> str:
    """Serialize the standard form (all matrices dense) for offline debugging."""
    doc = {
        "P": p.P.tolist(),
        "q": p.q.tolist(),
        "c0": p.c0,
        "A": p.A.tolist(),
        "b": p.b.tolist(),
        "G": p.G.tolist(),
        "h": p.h.tolist(),
        "quads": [{"Q": qc.Q.tolist(), "r": qc.r.tolist(), "s": qc.s} for qc in p.quads],
        "lb": [x if np.isfinite(x) else None for x in p.lb],
        "ub": [x if np.isfinite(x) else None for x in p.ub],
        "binary_idx": list(p.binary_idx),
        "names": list(p.names),
    }
    text = json.dumps(doc)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def from_json(source: str | Path) -> Problem:
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        text = Path(source).read_text()
    else:
        text = source
    doc = json.loads(text)
    n = len(doc["q"])
    p = Problem(
        P=np.array(doc["P"], dtype=float).reshape(n, n),
        q=np.array(doc["q"], dtype=float),
        c0=float(doc["c0"]),
        A=np.array(doc["A"], dtype=float).reshape(-1, n),
        b=np.array(doc["b"], dtype=float),
        G=np.array(doc["G"], dtype=float).reshape(-1, n),
        h=np.array(doc["h"], dtype=float),
        quads=tuple(
            QuadConstraint(
                Q=np.array(qc["Q"], dtype=float).reshape(n, n),
                r=np.array(qc["r"], dtype=float),
                s=float(qc["s"]),
            )
            for qc in doc["quads"]
        ),
        lb=np.array([(-np.inf if x is None else x) for x in doc["lb"]], dtype=float),
        ub=np.array([(np.inf if x is None else x) for x in doc["ub"]], dtype=float),
        binary_idx=tuple(doc["binary_idx"]),
        names=tuple(doc["names"]),
    )
    p.validate_convexity()
    return p
