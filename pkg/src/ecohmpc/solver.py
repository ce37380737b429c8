"""Convex QCQP interior-point solver and branch-and-bound for binaries.

``solve_qcqp`` runs an infeasible-start primal-dual (Mehrotra
predictor-corrector) interior-point method on the slack form of the
problem.  Convex quadratic constraints are handled natively: their
linearization enters the Jacobian and their curvature (weighted by the
dual) enters the Newton system, no cone reformulation.  When the main
iteration cannot reach feasibility, a phase-I problem (minimize the worst
constraint violation) certifies infeasibility or produces a strictly
feasible restart point.

``solve_miqcqp`` wraps it in a best-first branch-and-bound over the binary
variables: node bounds come from continuous relaxations with branched bits
substituted out of the problem (so fixed binaries are *exact* in the
solution), branching picks the most fractional bit with ties to the
earliest index, and a warm binary pattern is first dived to an incumbent
and then steers child order.

Everything is deterministic: fixed starting point, no randomness, no
threading; identical inputs give identical reports (modulo wall time).
"""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .qcqp import Problem, QuadConstraint, fix_variables

log = logging.getLogger("ecohmpc.solver")

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_NODE_LIMIT = "node_limit"
STATUS_TIME_LIMIT = "time_limit"
STATUS_NUMERICAL = "numerical"

MAX_BINARIES = 64


@dataclass
class SolveReport:
    """Outcome of one continuous or mixed-integer solve."""

    status: str
    objective: float | None = None
    x: np.ndarray | None = None
    nodes: int = 0
    wall_time: float = 0.0
    iterations: int = 0
    residuals: dict[str, float] | None = None


@dataclass
class SolveOptions:
    """Branch-and-bound options.

    ``time_limit`` is None by default so closed-loop control stays
    deterministic; callers that want the real-time guard set it explicitly.
    """

    tol: float = 1e-8
    max_iter: int = 150
    node_limit: int = 10000
    time_limit: float | None = None
    warm_binaries: np.ndarray | None = None
    int_tol: float = 1e-9


# ---------------------------------------------------------------------------
# Interior-point method
# ---------------------------------------------------------------------------


class _Work:
    """Assembled, scaled problem data for the interior-point iteration.

    Quadratic constraints are stacked into one (n_quad, n, n) tensor so the
    per-iteration values, Jacobian rows, and curvature come from single
    vectorized operations.
    """

    def __init__(self, P, q, c0, A, b, G, h, quads):
        self.P, self.q, self.c0 = P, q, c0
        self.A, self.b = A, b
        self.G, self.h = G, h
        self.quads = quads
        self.n = q.size
        self.m_lin = h.size
        self.n_quad = len(quads)
        self.m = self.m_lin + self.n_quad
        self._J = np.zeros((self.m, self.n))
        if self.m_lin:
            self._J[: self.m_lin] = G
        if self.n_quad:
            self.Qs = np.stack([qc.Q for qc in quads])
            self.rs = np.stack([qc.r for qc in quads])
            self.ss = np.array([qc.s for qc in quads])
        else:
            self.Qs = np.zeros((0, self.n, self.n))
            self.rs = np.zeros((0, self.n))
            self.ss = np.zeros(0)

    def f(self, x: np.ndarray) -> np.ndarray:
        vals = np.empty(self.m)
        if self.m_lin:
            vals[: self.m_lin] = self.G @ x - self.h
        if self.n_quad:
            Qx = self.Qs @ x
            vals[self.m_lin :] = 0.5 * (Qx @ x) + self.rs @ x + self.ss
        return vals

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        if self.n_quad:
            self._J[self.m_lin :] = self.Qs @ x + self.rs
        return self._J

    def hessian(self, lam: np.ndarray) -> np.ndarray:
        if not self.n_quad:
            return self.P
        return self.P + np.tensordot(lam[self.m_lin :], self.Qs, axes=1)

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.P @ x + self.q @ x + self.c0)


def _column_scales(p: Problem) -> np.ndarray:
    """Per-variable scale factors d so that x = d * x_scaled is O(1)-conditioned."""
    n = p.n
    curv = np.abs(np.diag(p.P)).astype(float)
    for qc in p.quads:
        curv = np.maximum(curv, np.abs(np.diag(qc.Q)))
    lin = np.zeros(n)
    for M in (p.A, p.G):
        if M.size:
            lin = np.maximum(lin, np.max(np.abs(M), axis=0))
    for qc in p.quads:
        lin = np.maximum(lin, np.abs(qc.r))
    lin = np.maximum(lin, np.abs(p.q))
    c = np.maximum(np.sqrt(curv), lin)
    span = np.where(
        np.isfinite(p.ub) & np.isfinite(p.lb), np.maximum(np.abs(p.ub), np.abs(p.lb)), 0.0
    )
    c = np.where(span > 0.0, np.maximum(c, 1.0 / np.maximum(span, 1e-12)), c)
    d = 1.0 / np.clip(c, 1e-8, 1e8)
    return np.clip(d, 1e-8, 1e8)


def _assemble(p: Problem) -> tuple[_Work, np.ndarray, float]:
    """Fold bounds into inequality rows, apply column and row scaling."""
    n = p.n
    d = _column_scales(p)
    D = d[np.newaxis, :]

    G_rows, h_rows = [], []
    if p.G.size:
        Gs = p.G * D
        rn = np.maximum(np.max(np.abs(Gs), axis=1), 1e-12)
        G_rows.append(Gs / rn[:, np.newaxis])
        h_rows.append(p.h / rn)
    for j in range(n):
        if np.isfinite(p.ub[j]):
            row = np.zeros(n)
            row[j] = d[j]
            G_rows.append(row[np.newaxis, :])
            h_rows.append(np.array([p.ub[j]]))
        if np.isfinite(p.lb[j]):
            row = np.zeros(n)
            row[j] = -d[j]
            G_rows.append(row[np.newaxis, :])
            h_rows.append(np.array([-p.lb[j]]))
    G = np.vstack(G_rows) if G_rows else np.zeros((0, n))
    h = np.concatenate(h_rows) if h_rows else np.zeros(0)

    if p.A.size:
        As = p.A * D
        rn = np.maximum(np.max(np.abs(As), axis=1), 1e-12)
        A = As / rn[:, np.newaxis]
        b = p.b / rn
    else:
        A, b = np.zeros((0, n)), np.zeros(0)

    quads = []
    for qc in p.quads:
        Qs = qc.Q * d[np.newaxis, :] * d[:, np.newaxis]
        rs = qc.r * d
        rho = max(float(np.max(np.abs(Qs))) if Qs.size else 0.0, float(np.max(np.abs(rs))) if rs.size else 0.0, abs(qc.s), 1e-12)
        quads.append(QuadConstraint(Q=Qs / rho, r=rs / rho, s=qc.s / rho))

    Ps = p.P * d[np.newaxis, :] * d[:, np.newaxis]
    qs = p.q * d
    rho_obj = max(float(np.max(np.abs(Ps))) if Ps.size else 0.0, float(np.max(np.abs(qs))) if qs.size else 0.0, 1e-12)
    work = _Work(Ps / rho_obj, qs / rho_obj, 0.0, A, b, G, h, tuple(quads))
    return work, d, rho_obj


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0.0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def _ipm(
    work: _Work,
    tol: float,
    max_iter: int,
    x0: np.ndarray | None = None,
    s0: np.ndarray | None = None,
) -> tuple[str, np.ndarray, int]:
    """Mehrotra predictor-corrector on the slack KKT system.

    Returns (status, x, iterations); status is optimal/numerical/infeasible
    where infeasible only means the iteration strongly suggests it (the
    caller certifies with phase I).
    """
    n, m, me = work.n, work.m, work.b.size
    if x0 is None:
        x = np.linalg.lstsq(work.A, work.b, rcond=None)[0] if me else np.zeros(n)
    else:
        x = x0.copy()
    f0 = work.f(x)
    s = np.maximum(1.0, -f0) if s0 is None else s0.copy()
    lam = np.ones(m)
    nu = np.zeros(me)
    q_scale = 1.0 + float(np.linalg.norm(work.q, np.inf))
    b_scale = 1.0 + (float(np.linalg.norm(work.b, np.inf)) if me else 0.0)
    h_scale = 1.0 + (float(np.linalg.norm(work.h, np.inf)) if work.m_lin else 0.0)

    best_x = x.copy()
    best_merit = np.inf
    best_meas = (np.inf, np.inf, np.inf, np.inf)
    stall = 0
    it = 0
    for it in range(1, max_iter + 1):
        if not np.all(np.isfinite(x)):
            return STATUS_NUMERICAL, best_x, it
        f = work.f(x)
        J = work.jacobian(x)
        r_d = work.P @ x + work.q + J.T @ lam + (work.A.T @ nu if me else 0.0)
        r_pe = work.A @ x - work.b if me else np.zeros(0)
        r_pi = f + s
        mu = float(s @ lam) / m if m else 0.0

        obj = abs(work.objective(x))
        feas = float(np.max(f)) if m else 0.0
        m_d = float(np.linalg.norm(r_d, np.inf)) / q_scale
        m_pe = (float(np.linalg.norm(r_pe, np.inf)) / b_scale) if me else 0.0
        m_pi = max(feas, float(np.linalg.norm(r_pi, np.inf)) / 1e2) / h_scale
        m_mu = mu / (1.0 + obj)
        # The dual residual floors earlier than the others on ill-conditioned
        # late-stage systems; a looser threshold there costs objective accuracy
        # far below anything the callers resolve.
        tol_dual = max(tol, 1e-6)
        merit = max(m_d, m_pe, m_pi, m_mu)
        if merit < best_merit:
            if merit < 0.95 * best_merit:
                stall = 0
            best_merit, best_x = merit, x.copy()
            best_meas = (m_d, m_pe, m_pi, m_mu)
        else:
            stall += 1
        if m_d <= tol_dual and m_pe <= tol and m_pi <= tol and m_mu <= tol:
            return STATUS_OPTIMAL, x, it
        if stall >= 15:
            break
        collapsed = m and (float(np.min(s)) < 1e-200 or float(np.min(lam)) < 1e-200)
        if collapsed or (mu < 1e-13 and feas > 10.0 * tol * h_scale):
            # Complementarity collapsed without feasibility: infeasibility hint.
            return STATUS_INFEASIBLE, best_x, it

        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            H = work.hessian(lam)
            w_diag = lam / s
            M = H + (J.T * w_diag) @ J
        if not np.all(np.isfinite(M)):
            return STATUS_NUMERICAL, best_x, it
        # Static regularization: iterative refinement absorbs the error, and
        # anything tied to the barrier magnitude would poison the equality rows.
        reg = 1e-11
        K = np.zeros((n + me, n + me))
        K[:n, :n] = M + reg * np.eye(n)
        if me:
            K[:n, n:] = work.A.T
            K[n:, :n] = work.A
            K[n:, n:] = -reg * np.eye(me)
        try:
            lu = lu_factor(K, check_finite=False)
        except Exception:
            return STATUS_NUMERICAL, best_x, it

        def kkt_solve(rhs):
            # One step of iterative refinement recovers digits lost to the
            # ill-conditioned late-stage KKT matrix.
            sol = lu_solve(lu, rhs, check_finite=False)
            resid = rhs - K @ sol
            return sol + lu_solve(lu, resid, check_finite=False)

        def solve_direction(rc):
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                rhs = np.empty(n + me)
                rhs[:n] = -r_d - J.T @ ((lam * r_pi - rc) / s)
                if me:
                    rhs[n:] = -r_pe
                if not np.all(np.isfinite(rhs)):
                    return None
                sol = kkt_solve(rhs)
                dx = sol[:n]
                dnu = sol[n:]
                ds = -r_pi - J @ dx
                dlam = (lam * (J @ dx + r_pi) - rc) / s
            if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(ds)) and np.all(np.isfinite(dlam))):
                return None
            return dx, dnu, ds, dlam

        # Predictor (affine scaling) step.
        aff = solve_direction(lam * s)
        if aff is None:
            return STATUS_NUMERICAL, best_x, it
        dx_a, dnu_a, ds_a, dlam_a = aff
        a_p = _max_step(s, ds_a)
        a_d = _max_step(lam, dlam_a)
        mu_aff = float((s + a_p * ds_a) @ (lam + a_d * dlam_a)) / m
        sigma = np.clip((mu_aff / mu) ** 3 if mu > 0 else 0.1, 1e-8, 0.999)

        # Corrector step with centering.
        rc = lam * s - sigma * mu + ds_a * dlam_a
        corr = solve_direction(rc)
        if corr is None:
            return STATUS_NUMERICAL, best_x, it
        dx, dnu, ds, dlam = corr
        a_p = min(1.0, 0.99 * _max_step(s, ds))
        a_d = min(1.0, 0.99 * _max_step(lam, dlam))
        if a_p < 1e-13 and a_d < 1e-13:
            break
        x = x + a_p * dx
        s = np.maximum(s + a_p * ds, 1e-300)
        lam = np.maximum(lam + a_d * dlam, 1e-300)
        if me:
            nu = nu + a_d * dnu

    # Not converged in-loop: accept the best iterate at mildly relaxed
    # thresholds, otherwise distinguish a stuck-infeasible pattern from plain
    # numerical trouble (final word belongs to phase I either way).
    b_d, b_pe, b_pi, b_mu = best_meas
    if b_d <= 10.0 * max(tol, 1e-6) and b_pe <= 10.0 * tol and b_pi <= 10.0 * tol and b_mu <= 10.0 * tol:
        return STATUS_OPTIMAL, best_x, it
    f = work.f(best_x)
    if m and float(np.max(f)) > 10.0 * tol * h_scale:
        return STATUS_INFEASIBLE, best_x, it
    return STATUS_NUMERICAL, best_x, it


def _phase1(work: _Work, tol: float, max_iter: int) -> tuple[str, float, np.ndarray, int]:
    """Minimize the worst constraint violation t; equalities stay hard.

    Returns (status, t_star, x_at_t_star, iterations).  Always strictly
    feasible at its start, so the interior-point iteration is reliable here;
    an infeasibility certificate is only valid when status is optimal.
    """
    n, me = work.n, work.b.size
    G1 = np.hstack([work.G, -np.ones((work.m_lin, 1))]) if work.m_lin else np.zeros((0, n + 1))
    # Keep phase I bounded below.
    floor_row = np.zeros((1, n + 1))
    floor_row[0, n] = -1.0
    G1 = np.vstack([G1, floor_row])
    h1 = np.concatenate([work.h, [2.0]])
    quads1 = []
    for qc in work.quads:
        Q1 = np.zeros((n + 1, n + 1))
        Q1[:n, :n] = qc.Q
        r1 = np.concatenate([qc.r, [-1.0]])
        quads1.append(QuadConstraint(Q=Q1, r=r1, s=qc.s))
    A1 = np.hstack([work.A, np.zeros((me, 1))]) if me else np.zeros((0, n + 1))
    q1 = np.zeros(n + 1)
    q1[n] = 1.0
    w1 = _Work(np.zeros((n + 1, n + 1)), q1, 0.0, A1, work.b, G1, h1, tuple(quads1))

    x_eq = np.linalg.lstsq(work.A, work.b, rcond=None)[0] if me else np.zeros(n)
    t0 = float(np.max(work.f(x_eq))) + 1.0 if work.m else 0.0
    x0 = np.concatenate([x_eq, [max(t0, -0.5)]])
    s0 = np.maximum(1e-3, -w1.f(x0))
    status, x1, iters = _ipm(w1, tol, max_iter, x0=x0, s0=s0)
    return status, float(x1[n]), x1[:n], iters


def solve_qcqp(p: Problem, tol: float = 1e-8, max_iter: int = 150) -> SolveReport:
    """Solve a convex QCQP (continuous; any lb==ub variables are substituted).

    Status ``infeasible`` carries a phase-I certificate: the minimal
    achievable worst violation exceeded ``tol``.  Numerical failure is
    reported explicitly, never as a silent wrong answer.
    """
    t_start = time.perf_counter()
    fixes = {
        j: 0.5 * (p.lb[j] + p.ub[j])
        for j in range(p.n)
        if np.isfinite(p.lb[j]) and np.isfinite(p.ub[j]) and p.ub[j] - p.lb[j] <= 1e-12
    }
    reduced, reins = fix_variables(p, fixes)
    if reduced is None:
        return SolveReport(STATUS_INFEASIBLE, wall_time=time.perf_counter() - t_start)

    if reduced.n == 0:
        x_full = reins.expand(np.zeros(0))
        feasible = p.is_feasible(x_full, tol=1e-7)
        return SolveReport(
            STATUS_OPTIMAL if feasible else STATUS_INFEASIBLE,
            objective=p.objective(x_full) if feasible else None,
            x=x_full if feasible else None,
            wall_time=time.perf_counter() - t_start,
            residuals=p.residuals(x_full) if feasible else None,
        )

    # Quick consistency check of the equality system.
    if reduced.A.size:
        x_ls, *_ = np.linalg.lstsq(reduced.A, reduced.b, rcond=None)
        resid = float(np.linalg.norm(reduced.A @ x_ls - reduced.b, np.inf))
        if resid > 1e-7 * (1.0 + float(np.linalg.norm(reduced.b, np.inf))):
            return SolveReport(STATUS_INFEASIBLE, wall_time=time.perf_counter() - t_start)

    work, d, _ = _assemble(reduced)
    total_iters = 0

    if work.m == 0:
        x_s, ok = _solve_equality_qp(work)
        total_iters += 1
        if not ok:
            return SolveReport(STATUS_NUMERICAL, wall_time=time.perf_counter() - t_start)
        status = STATUS_OPTIMAL
    else:
        status, x_s, iters = _ipm(work, tol, max_iter)
        total_iters += iters
        if status != STATUS_OPTIMAL:
            p1_status, t_star, x_feas, it1 = _phase1(work, max(tol, 1e-10), max_iter)
            total_iters += it1
            if p1_status == STATUS_OPTIMAL and t_star > tol:
                return SolveReport(
                    STATUS_INFEASIBLE,
                    wall_time=time.perf_counter() - t_start,
                    iterations=total_iters,
                )
            if float(np.max(work.f(x_feas))) >= 0.0:
                return SolveReport(
                    STATUS_NUMERICAL,
                    wall_time=time.perf_counter() - t_start,
                    iterations=total_iters,
                )
            s_init = np.maximum(-work.f(x_feas), 1e-8)
            status, x_s, iters = _ipm(work, tol, max_iter, x0=x_feas, s0=s_init)
            total_iters += iters
            if status != STATUS_OPTIMAL:
                return SolveReport(
                    STATUS_NUMERICAL,
                    wall_time=time.perf_counter() - t_start,
                    iterations=total_iters,
                )

    x_full = reins.expand(d * x_s)
    residuals = p.residuals(x_full)
    max_viol = max(residuals["eq"], residuals["ineq"], residuals["quad"], residuals["bounds"])
    if max_viol > 1e-6:
        return SolveReport(
            STATUS_NUMERICAL,
            objective=p.objective(x_full),
            x=x_full,
            wall_time=time.perf_counter() - t_start,
            iterations=total_iters,
            residuals=residuals,
        )
    return SolveReport(
        STATUS_OPTIMAL,
        objective=p.objective(x_full),
        x=x_full,
        wall_time=time.perf_counter() - t_start,
        iterations=total_iters,
        residuals=residuals,
    )


def _solve_equality_qp(work: _Work) -> tuple[np.ndarray, bool]:
    """Equality-constrained QP via one KKT solve (no inequalities present)."""
    n, me = work.n, work.b.size
    K = np.zeros((n + me, n + me))
    K[:n, :n] = work.P + 1e-12 * np.eye(n)
    if me:
        K[:n, n:] = work.A.T
        K[n:, :n] = work.A
    rhs = np.concatenate([-work.q, work.b])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return np.zeros(n), False
    return sol[:n], True


# ---------------------------------------------------------------------------
# Branch and bound
# ---------------------------------------------------------------------------


def solve_miqcqp(p: Problem, opts: SolveOptions | None = None) -> SolveReport:
    """Best-first branch-and-bound over the binary variables.

    Nodes are continuous relaxations with branched bits substituted out, so
    every incumbent has exactly integral binaries.  A warm binary pattern is
    dived first (one fully fixed solve) to seed the incumbent.
    """
    opts = opts or SolveOptions()
    t_start = time.perf_counter()
    bidx = list(p.binary_idx)
    if len(bidx) > MAX_BINARIES:
        raise ValueError(f"at most {MAX_BINARIES} binaries supported, got {len(bidx)}")

    free_bits = [j for j in bidx if p.ub[j] - p.lb[j] > 1e-12]
    nodes = 0
    iters = 0

    def finish(status, obj, x, residuals=None):
        return SolveReport(
            status,
            objective=obj,
            x=x,
            nodes=nodes,
            wall_time=time.perf_counter() - t_start,
            iterations=iters,
            residuals=residuals,
        )

    if not free_bits:
        rep = solve_qcqp(p, tol=opts.tol, max_iter=opts.max_iter)
        rep.nodes = 1
        return rep

    best_obj = np.inf
    best_x = None
    best_res = None

    def node_solve(fixes: dict[int, float]) -> SolveReport:
        nonlocal nodes, iters
        sub_fix = dict(fixes)
        sub, reins = fix_variables(p, sub_fix)
        nodes += 1
        if sub is None:
            return SolveReport(STATUS_INFEASIBLE)
        rep = solve_qcqp(sub, tol=opts.tol, max_iter=opts.max_iter)
        iters += rep.iterations
        if rep.x is not None:
            rep.x = reins.expand(rep.x)
            rep.objective = p.objective(rep.x)
        return rep

    warm = None
    if opts.warm_binaries is not None:
        warm = {j: float(round(v)) for j, v in zip(bidx, np.asarray(opts.warm_binaries))}
        rep = node_solve({j: warm[j] for j in free_bits})
        if rep.status == STATUS_OPTIMAL:
            best_obj, best_x, best_res = rep.objective, rep.x, rep.residuals

    root = node_solve({})
    if root.status == STATUS_INFEASIBLE and best_x is None:
        return finish(STATUS_INFEASIBLE, None, None)

    # Rounding dive: an early incumbent is what gives best-first its pruning
    # power on cold starts.
    if root.status == STATUS_OPTIMAL and best_x is None:
        rounded = {j: float(round(root.x[j])) for j in free_bits}
        rep = node_solve(rounded)
        if rep.status == STATUS_OPTIMAL:
            best_obj, best_x, best_res = rep.objective, rep.x, rep.residuals

    heap: list[tuple[float, int, tuple, np.ndarray]] = []
    counter = 0
    if root.status == STATUS_OPTIMAL:
        heapq.heappush(heap, (root.objective, counter, (), root.x))
        counter += 1

    limit_status = None
    while heap:
        if nodes >= opts.node_limit:
            limit_status = STATUS_NODE_LIMIT
            break
        if opts.time_limit is not None and time.perf_counter() - t_start > opts.time_limit:
            limit_status = STATUS_TIME_LIMIT
            break
        bound, _, fixes_t, x_rel = heapq.heappop(heap)
        if bound >= best_obj - 1e-9 * (1.0 + abs(best_obj)):
            continue
        fixes = dict(fixes_t)
        free = [j for j in free_bits if j not in fixes]
        vals = x_rel[free]
        frac = np.abs(vals - np.round(vals))
        if float(np.max(frac)) <= opts.int_tol:
            rep = node_solve({**fixes, **{j: float(round(x_rel[j])) for j in free}})
            if rep.status == STATUS_OPTIMAL and rep.objective < best_obj:
                best_obj, best_x, best_res = rep.objective, rep.x, rep.residuals
            continue
        # Most fractional bit; ties to the earliest (temporal coherence).
        scores = 0.5 - np.abs(vals - 0.5)
        j_star = free[int(np.argmax(scores))]
        first = warm[j_star] if warm is not None else float(round(x_rel[j_star]))
        for val in (first, 1.0 - first):
            child_fixes = {**fixes, j_star: val}
            rep = node_solve(child_fixes)
            if rep.status == STATUS_INFEASIBLE:
                continue
            if rep.status != STATUS_OPTIMAL:
                # Unresolved node: keep it alive with the parent's bound so no
                # subtree is lost; deeper fixing usually solves cleanly.
                if len(child_fixes) < len(free_bits):
                    log.warning("node solve %s at depth %d; re-branching", rep.status, len(child_fixes))
                    heapq.heappush(heap, (bound, counter, tuple(sorted(child_fixes.items())), x_rel))
                    counter += 1
                else:
                    log.warning("leaf node solve %s; pattern skipped", rep.status)
                continue
            if rep.objective >= best_obj - 1e-9 * (1.0 + abs(best_obj)):
                continue
            if len(child_fixes) == len(free_bits):
                best_obj, best_x, best_res = rep.objective, rep.x, rep.residuals
            else:
                heapq.heappush(
                    heap, (rep.objective, counter, tuple(sorted(child_fixes.items())), rep.x)
                )
                counter += 1

    if limit_status is not None:
        if best_x is None:
            return finish(limit_status, None, None)
        return finish(limit_status, best_obj, best_x, best_res)
    if best_x is None:
        return finish(STATUS_INFEASIBLE, None, None)
    return finish(STATUS_OPTIMAL, best_obj, best_x, best_res)
