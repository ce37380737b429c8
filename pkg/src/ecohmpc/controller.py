"""Receding-horizon problem builders for the three controllers.

All three formulations share the discretized longitudinal model (affine
aero term, trapezoidal relative-distance update) and the per-gear convex
quadratic power surrogate:

* hybrid vehicle-following: fuel-energy objective over an engine power
  variable, binary engine state per step with a switching penalty, traction
  and power gated by the engine bit, hard safety gap, soft desired-region
  and jerk slacks;
* hybrid urban: adds the distance-to-stop state with its red-phase
  no-crossing constraint, the stop-line closeness slack, and reference
  speed tracking for green-wave driving;
* baseline: convex-only (no binaries), the surrogate power sits directly
  in the objective so the engine semantics are always-on, and only the
  currently visible signal phase is known.

The builders are pure; the ``Controller`` session object owns the mutable
receding-horizon state (previous engine bit, warm start, gear memory).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import powertrain as pt
from .mapfit import QuadPowerModel
from .qcqp import Problem, QuadConstraint
from .solver import SolveOptions, SolveReport, solve_miqcqp, solve_qcqp
from .vehicle import VehicleParams

log = logging.getLogger("ecohmpc.controller")

MODE_FOLLOWING = "following"
MODE_GREENWAVE = "greenwave"
MODE_STOPPING = "stopping"

EMERGENCY_WEIGHT = 1e6
# Tiny curvature on slacks whose weight a mode sets to zero; keeps the
# interior-point geometry non-degenerate at immaterial cost.
WEIGHT_FLOOR = 1e-9

# Far-away placeholder for the distance-to-stop state when no feature is ahead.
D_ITS_FAR = 1e6


@dataclass(frozen=True)
class ControllerConfig:
    """Horizon, sample time, and cost weights shared by all controllers."""

    N: int = 8
    dt: float = 0.2
    zeta1: float = 1e-5   # brake force squared
    zeta2: float = 9000.0  # engine on/off switching
    zeta3: float = 2e-4   # traction jerk beyond the comfort band
    zeta4: float = 10.0   # distance beyond the desired following region
    zeta5: float = 2000.0  # distance beyond the stop-line margin
    zeta6: float = 300.0  # reference speed tracking
    dF_t_max: float = 4000.0
    d_m: float = 2.0
    sensor_range: float = 100.0
    a_comf: float = 1.5
    warm_start: bool = True

    def __post_init__(self) -> None:
        if self.N < 2:
            raise ValueError("horizon N must be at least 2")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        for name in ("zeta1", "zeta2", "zeta3", "zeta4", "zeta5", "zeta6"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        if self.d_m <= 0.0:
            raise ValueError("d_m must be positive")


@dataclass(frozen=True)
class MpcState:
    """Measured state fed to a builder."""

    v_h: float
    d_rel: float
    d_ITS: float = D_ITS_FAR
    n_prev: int = 1
    s_host: float = 0.0

    def __post_init__(self) -> None:
        if self.v_h < 0.0:
            raise ValueError("v_h must be nonnegative")
        if self.n_prev not in (0, 1):
            raise ValueError("n_prev must be 0 or 1")


@dataclass(frozen=True)
class GearContext:
    """Per-gear data a builder needs: surrogate and offline ceilings."""

    gear: int
    model: QuadPowerModel
    F_t_max: float
    P_max: float


@dataclass(frozen=True)
class HorizonLimits:
    """Per-step speed bounds (length N+1), already including any stopping
    envelope the caller imposes."""

    v_min: np.ndarray
    v_max: np.ndarray


@dataclass
class MpcIndex:
    """Variable layout of a built problem."""

    N: int
    v: np.ndarray
    d: np.ndarray
    P: np.ndarray
    Ft: np.ndarray
    Fb: np.ndarray
    n: np.ndarray | None
    e1: np.ndarray | None
    e2: np.ndarray
    e3: np.ndarray
    dits: np.ndarray | None = None
    e4: np.ndarray | None = None
    e_em: int | None = None
    emergency: bool = False


@dataclass
class MpcSolution:
    """Optimal horizon trajectories extracted from a solver report."""

    status: str
    objective: float | None
    v: np.ndarray | None = None
    d_rel: np.ndarray | None = None
    d_ITS: np.ndarray | None = None
    P_ICE: np.ndarray | None = None
    F_t: np.ndarray | None = None
    F_b: np.ndarray | None = None
    n: np.ndarray | None = None
    eps1: np.ndarray | None = None
    eps2: np.ndarray | None = None
    eps3: np.ndarray | None = None
    eps4: np.ndarray | None = None
    emergency: bool = False
    nodes: int = 0
    wall_time: float = 0.0


def state_matrices(
    vp: VehicleParams, dt: float, theta: float, v_p_k: float, v_p_k1: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One-step state-space form x_{k+1} = A x_k + B u_k + w.

    States x = [v_h, d_rel, d_ITS]; inputs u = [P_ICE, F_t, F_b, n,
    eps1..eps4].  Derived symbol by symbol from the discrete velocity update
    with the affine aero term and trapezoidal integration of both distance
    states, so the printed structure is

        A = [[A11, 0, 0], [-A21, 1, 0], [-A21, 0, 1]]
        B row 1: [0,  B11, -B12, 0...0]
        B row 2: [0, -B21,  B22, 0...0]
        B row 3: [0, -B21,  B22, 0...0]
        w = [-w1, w2, w3]

    with psi = 0.5*rho*A_f*c_w*p1, A11 = 1 - (dt/m_eq)*psi,
    A21 = (dt/2)*(2 - (dt/m_eq)*psi), B11 = B12 = dt/m_eq,
    B21 = B22 = dt^2/(2*m_eq),
    w1 = (dt/m_eq)*(m_v*g*sin(theta) + c_r*m_v*g*cos(theta)
         + 0.5*rho*A_f*c_w*p2),
    w2 = (dt/2)*(v_p_k + v_p_k1 + w1), and w3 = (dt/2)*w1.
    """
    psi = 0.5 * vp.rho * vp.A_f * vp.c_w * vp.p1
    a11 = 1.0 - dt / vp.m_eq * psi
    a21 = 0.5 * dt * (2.0 - dt / vp.m_eq * psi)
    b11 = dt / vp.m_eq
    b21 = dt * dt / (2.0 * vp.m_eq)
    w1 = (
        dt
        / vp.m_eq
        * (
            vp.m_v * vp.g * np.sin(theta)
            + vp.c_r * vp.m_v * vp.g * np.cos(theta)
            + 0.5 * vp.rho * vp.A_f * vp.c_w * vp.p2
        )
    )
    A = np.array([[a11, 0.0, 0.0], [-a21, 1.0, 0.0], [-a21, 0.0, 1.0]])
    B = np.zeros((3, 8))
    B[0, 1] = b11
    B[0, 2] = -b11
    B[1, 1] = -b21
    B[1, 2] = b21
    B[2, 1] = -b21
    B[2, 2] = b21
    w = np.array([-w1, 0.5 * dt * (v_p_k + v_p_k1 + w1), 0.5 * dt * w1])
    return A, B, w


class _Builder:
    """Accumulates the standard form while tracking variable names."""

    def __init__(self):
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.P_entries: list[tuple[int, int, float]] = []
        self.q: dict[int, float] = {}
        self.c0 = 0.0
        self.A_rows: list[tuple[dict[int, float], float]] = []
        self.G_rows: list[tuple[dict[int, float], float]] = []
        self.quads: list[tuple[list[tuple[int, int, float]], dict[int, float], float]] = []
        self.binary: list[int] = []

    def add_vars(self, prefix: str, count: int, lb: float, ub: float) -> np.ndarray:
        start = len(self.names)
        for k in range(count):
            self.names.append(f"{prefix}{k}")
            self.lb.append(lb)
            self.ub.append(ub)
        return np.arange(start, start + count)

    def fix(self, idx: int, value: float) -> None:
        self.lb[idx] = value
        self.ub[idx] = value

    def bound(self, idx: int, lb: float, ub: float) -> None:
        self.lb[idx] = lb
        self.ub[idx] = ub

    def quad_cost(self, idx: int, w: float) -> None:
        if w != 0.0:
            self.P_entries.append((idx, idx, 2.0 * w))

    def lin_cost(self, idx: int, w: float) -> None:
        if w != 0.0:
            self.q[idx] = self.q.get(idx, 0.0) + w

    def eq(self, coeffs: dict[int, float], rhs: float) -> None:
        self.A_rows.append((coeffs, rhs))

    def le(self, coeffs: dict[int, float], rhs: float) -> None:
        self.G_rows.append((coeffs, rhs))

    def quad_le(self, qentries, lin, const) -> None:
        self.quads.append((qentries, lin, const))

    def build(self) -> Problem:
        n = len(self.names)
        P = np.zeros((n, n))
        for i, j, v in self.P_entries:
            P[i, j] += v
            if i != j:
                P[j, i] += v
        q = np.zeros(n)
        for i, v in self.q.items():
            q[i] = v
        A = np.zeros((len(self.A_rows), n))
        b = np.zeros(len(self.A_rows))
        for r, (coeffs, rhs) in enumerate(self.A_rows):
            for i, v in coeffs.items():
                A[r, i] = v
            b[r] = rhs
        G = np.zeros((len(self.G_rows), n))
        h = np.zeros(len(self.G_rows))
        for r, (coeffs, rhs) in enumerate(self.G_rows):
            for i, v in coeffs.items():
                G[r, i] = v
            h[r] = rhs
        quads = []
        for qentries, lin, const in self.quads:
            Q = np.zeros((n, n))
            for i, j, v in qentries:
                Q[i, j] += v
                if i != j:
                    Q[j, i] += v
            r_vec = np.zeros(n)
            for i, v in lin.items():
                r_vec[i] = v
            quads.append(QuadConstraint(Q=Q, r=r_vec, s=const))
        return Problem(
            P=P,
            q=q,
            c0=self.c0,
            A=A,
            b=b,
            G=G,
            h=h,
            quads=tuple(quads),
            lb=np.array(self.lb),
            ub=np.array(self.ub),
            binary_idx=tuple(self.binary),
            names=tuple(self.names),
        )


def _common_skeleton(
    state: MpcState,
    lead_pred: np.ndarray,
    theta_pred: np.ndarray,
    gear_ctx: GearContext,
    limits: HorizonLimits,
    vp: VehicleParams,
    cfg: ControllerConfig,
    hybrid: bool,
    with_dits: bool,
) -> tuple[_Builder, MpcIndex]:
    """Variables, dynamics, and the constraints shared by every formulation."""
    N = cfg.N
    lead_pred = np.asarray(lead_pred, dtype=float)
    theta_pred = np.asarray(theta_pred, dtype=float)
    if lead_pred.size != N + 1:
        raise ValueError(f"lead prediction must have N+1 = {N + 1} entries")
    if theta_pred.size != N:
        raise ValueError(f"elevation prediction must have N = {N} entries")
    if limits.v_min.size != N + 1 or limits.v_max.size != N + 1:
        raise ValueError("speed limits must have N+1 entries")

    bld = _Builder()
    ix = MpcIndex(
        N=N,
        v=bld.add_vars("v", N + 1, 0.0, np.inf),
        d=bld.add_vars("d", N + 1, -np.inf, np.inf),
        P=bld.add_vars("P", N, 0.0, np.inf) if hybrid else np.zeros(0, dtype=int),
        Ft=bld.add_vars("Ft", N, 0.0, np.inf),
        Fb=bld.add_vars("Fb", N, 0.0, vp.F_b_max),
        n=None,
        e1=None,
        e2=bld.add_vars("e2", N, 0.0, np.inf),
        e3=bld.add_vars("e3", N, 0.0, np.inf),
    )
    if with_dits:
        ix.dits = bld.add_vars("dits", N + 1, -np.inf, np.inf)
        ix.e4 = bld.add_vars("e4", N, 0.0, np.inf)
    if hybrid:
        ix.n = bld.add_vars("n", N, 0.0, 1.0)
        bld.binary.extend(int(i) for i in ix.n)
        ix.e1 = bld.add_vars("e1", N, -np.inf, np.inf)

    # Initial state enters through pinned variables.
    bld.fix(ix.v[0], state.v_h)
    bld.fix(ix.d[0], state.d_rel)
    if with_dits:
        bld.fix(ix.dits[0], state.d_ITS)
    # Last jerk slack has no pair constraint.
    bld.fix(ix.e2[N - 1], 0.0)

    # Speed limits (11g) on the free speed variables.
    for k in range(1, N + 1):
        bld.bound(ix.v[k], max(0.0, limits.v_min[k]), max(0.0, limits.v_max[k]))

    # Dynamics via the state-space form, one row per state per step.
    for k in range(N):
        A, B, w = state_matrices(vp, cfg.dt, float(theta_pred[k]), float(lead_pred[k]), float(lead_pred[k + 1]))
        bld.eq({ix.v[k + 1]: 1.0, ix.v[k]: -A[0, 0], ix.Ft[k]: -B[0, 1], ix.Fb[k]: -B[0, 2]}, w[0])
        bld.eq(
            {ix.d[k + 1]: 1.0, ix.d[k]: -1.0, ix.v[k]: -A[1, 0], ix.Ft[k]: -B[1, 1], ix.Fb[k]: -B[1, 2]},
            w[1],
        )
        if with_dits:
            bld.eq(
                {
                    ix.dits[k + 1]: 1.0,
                    ix.dits[k]: -1.0,
                    ix.v[k]: -A[2, 0],
                    ix.Ft[k]: -B[2, 1],
                    ix.Fb[k]: -B[2, 2],
                },
                w[2],
            )

    # Jerk comfort band (11i) as two linear rows per interior step.
    for k in range(N - 1):
        bld.le({ix.Ft[k]: 1.0, ix.Ft[k + 1]: -1.0, ix.e2[k]: -1.0}, cfg.dF_t_max)
        bld.le({ix.Ft[k]: -1.0, ix.Ft[k + 1]: 1.0, ix.e2[k]: -1.0}, cfg.dF_t_max)

    # Safety gap (11j), softened by a flagged emergency slack only when the
    # measured state already violates it.
    emergency = state.d_rel < vp.d_min + vp.h_s * state.v_h
    if emergency:
        ix.e_em = int(bld.add_vars("e_em", 1, 0.0, np.inf)[0])
        ix.emergency = True
        bld.quad_cost(ix.e_em, EMERGENCY_WEIGHT)
        log.warning(
            "initial gap %.1f m below safe distance %.1f m: safety constraint softened",
            state.d_rel,
            vp.d_min + vp.h_s * state.v_h,
        )
    for k in range(1, N + 1):
        coeffs = {ix.d[k]: -1.0, ix.v[k]: vp.h_s}
        if emergency:
            coeffs[ix.e_em] = -1.0
        bld.le(coeffs, -vp.d_min)

    # Desired-region soft constraint (11k).
    for k in range(1, N + 1):
        bld.le({ix.d[k]: 1.0, ix.v[k]: -vp.h_c, ix.e3[k - 1]: -1.0}, vp.d_max)

    # Brake penalty and slack weights shared by all formulations.
    for k in range(N):
        bld.quad_cost(ix.Fb[k], cfg.zeta1)
        bld.quad_cost(ix.e2[k], max(cfg.zeta3, WEIGHT_FLOOR))

    return bld, ix


def _hybrid_engine_rows(bld: _Builder, ix: MpcIndex, gear_ctx: GearContext, cfg: ControllerConfig, n_prev: int) -> None:
    """Engine bit coupling: switching slack, traction gate, surrogate power
    cone, and power gate."""
    m = gear_ctx.model
    for k in range(cfg.N):
        if k == 0:
            bld.eq({ix.n[0]: 1.0, ix.e1[0]: -1.0}, float(n_prev))
        else:
            bld.eq({ix.n[k]: 1.0, ix.n[k - 1]: -1.0, ix.e1[k]: -1.0}, 0.0)
        bld.le({ix.Ft[k]: 1.0, ix.n[k]: -gear_ctx.F_t_max}, 0.0)
        bld.le({ix.P[k]: 1.0, ix.n[k]: -gear_ctx.P_max}, 0.0)
        bld.quad_le(
            [(int(ix.v[k]), int(ix.v[k]), 2.0 * m.x20), (int(ix.Ft[k]), int(ix.Ft[k]), 2.0 * m.x02), (int(ix.v[k]), int(ix.Ft[k]), m.x11)],
            {int(ix.v[k]): m.x10, int(ix.Ft[k]): m.x01, int(ix.P[k]): -1.0, int(ix.n[k]): gear_ctx.P_max},
            m.x00 - gear_ctx.P_max,
        )
        bld.lin_cost(ix.P[k], cfg.dt)
        bld.quad_cost(ix.e1[k], cfg.zeta2)


def build_following(
    state: MpcState,
    lead_pred: np.ndarray,
    theta_pred: np.ndarray,
    gear_ctx: GearContext,
    limits: HorizonLimits,
    vp: VehicleParams,
    cfg: ControllerConfig,
) -> tuple[Problem, MpcIndex]:
    """Hybrid vehicle-following problem (no signal/stop state)."""
    bld, ix = _common_skeleton(state, lead_pred, theta_pred, gear_ctx, limits, vp, cfg, hybrid=True, with_dits=False)
    _hybrid_engine_rows(bld, ix, gear_ctx, cfg, state.n_prev)
    for k in range(cfg.N):
        bld.quad_cost(ix.e3[k], max(cfg.zeta4, WEIGHT_FLOOR))
    return bld.build(), ix


def build_urban(
    state: MpcState,
    lead_pred: np.ndarray,
    theta_pred: np.ndarray,
    v_ref: float | None,
    mode: str,
    gear_ctx: GearContext,
    limits: HorizonLimits,
    vp: VehicleParams,
    cfg: ControllerConfig,
    red_mask: np.ndarray | None = None,
) -> tuple[Problem, MpcIndex]:
    """Hybrid urban problem with the distance-to-stop state.

    ``mode`` selects the weight activation: vehicle-following disables
    reference tracking, green-wave disables the desired-region pull,
    stopping activates the stop-line slack.  ``red_mask[k]`` marks horizon
    steps whose predicted time falls in a red phase (or a pending stop);
    those steps get the hard no-crossing constraint.
    """
    if mode not in (MODE_FOLLOWING, MODE_GREENWAVE, MODE_STOPPING):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == MODE_GREENWAVE and v_ref is None:
        raise ValueError("green-wave mode needs a reference speed")
    if mode != MODE_GREENWAVE and v_ref is not None and mode == MODE_STOPPING:
        pass  # stopping may carry an advisory v_ref; it is ignored

    bld, ix = _common_skeleton(state, lead_pred, theta_pred, gear_ctx, limits, vp, cfg, hybrid=True, with_dits=True)
    _hybrid_engine_rows(bld, ix, gear_ctx, cfg, state.n_prev)

    zeta4 = cfg.zeta4 if mode == MODE_FOLLOWING else 0.0
    zeta5 = cfg.zeta5 if mode == MODE_STOPPING else 0.0
    zeta6 = cfg.zeta6 if mode == MODE_GREENWAVE else 0.0
    for k in range(cfg.N):
        bld.quad_cost(ix.e3[k], max(zeta4, WEIGHT_FLOOR))

    if red_mask is None:
        red_mask = np.zeros(cfg.N + 1, dtype=bool)
    for k in range(1, cfg.N + 1):
        if red_mask[k]:
            bld.le({ix.dits[k]: -1.0}, 0.0)

    if mode == MODE_STOPPING:
        for k in range(1, cfg.N + 1):
            bld.le({ix.dits[k]: 1.0, ix.e4[k - 1]: -1.0}, cfg.d_m)
        for k in range(cfg.N):
            bld.quad_cost(ix.e4[k], max(zeta5, WEIGHT_FLOOR))
    else:
        # Stop-line slack inactive outside stopping mode.
        for k in range(cfg.N):
            bld.fix(ix.e4[k], 0.0)

    if zeta6 > 0.0:
        for k in range(cfg.N):
            bld.quad_cost(ix.v[k], zeta6)
            bld.lin_cost(ix.v[k], -2.0 * zeta6 * v_ref)
            bld.c0 += zeta6 * v_ref * v_ref

    return bld.build(), ix


def build_baseline(
    state: MpcState,
    lead_pred: np.ndarray,
    theta_pred: np.ndarray,
    gear_ctx: GearContext,
    limits: HorizonLimits,
    vp: VehicleParams,
    cfg: ControllerConfig,
    red_mask: np.ndarray | None = None,
    stopping: bool = False,
) -> tuple[Problem, MpcIndex]:
    """Convex baseline: surrogate power in the objective, no binaries.

    The engine is semantically always on (coasting still pays the
    surrogate's positive zero-traction power).  Red-phase information is
    limited to what the caller encodes in ``red_mask`` (current phase only).
    """
    bld, ix = _common_skeleton(state, lead_pred, theta_pred, gear_ctx, limits, vp, cfg, hybrid=False, with_dits=True)
    m = gear_ctx.model
    for k in range(cfg.N):
        # Zero-coefficient fuel terms would leave stray flat directions; the
        # surrogate always has curvature in practice.
        bld.P_entries.append((int(ix.v[k]), int(ix.v[k]), 2.0 * m.x20))
        bld.P_entries.append((int(ix.Ft[k]), int(ix.Ft[k]), 2.0 * m.x02))
        bld.P_entries.append((int(ix.v[k]), int(ix.Ft[k]), m.x11))
        bld.lin_cost(ix.v[k], m.x10)
        bld.lin_cost(ix.Ft[k], m.x01)
        bld.c0 += m.x00
        bld.bound(ix.Ft[k], 0.0, gear_ctx.F_t_max)
        bld.quad_cost(ix.e3[k], max(cfg.zeta4, WEIGHT_FLOOR))

    if red_mask is None:
        red_mask = np.zeros(cfg.N + 1, dtype=bool)
    for k in range(1, cfg.N + 1):
        if red_mask[k]:
            bld.le({ix.dits[k]: -1.0}, 0.0)
    if stopping:
        for k in range(1, cfg.N + 1):
            bld.le({ix.dits[k]: 1.0, ix.e4[k - 1]: -1.0}, cfg.d_m)
        for k in range(cfg.N):
            bld.quad_cost(ix.e4[k], max(cfg.zeta5, WEIGHT_FLOOR))
    else:
        for k in range(cfg.N):
            bld.fix(ix.e4[k], 0.0)

    return bld.build(), ix


def extract_solution(report: SolveReport, ix: MpcIndex, hybrid: bool) -> MpcSolution:
    """Pull trajectories out of a solver report and polish engine-off steps.

    Steps with the engine bit at zero get their traction and power snapped
    to exactly zero (the constraints force them there up to solver
    tolerance).
    """
    sol = MpcSolution(
        status=report.status,
        objective=report.objective,
        emergency=ix.emergency,
        nodes=report.nodes,
        wall_time=report.wall_time,
    )
    if report.x is None:
        return sol
    x = report.x
    sol.v = x[ix.v].copy()
    sol.d_rel = x[ix.d].copy()
    sol.F_t = x[ix.Ft].copy()
    sol.F_b = x[ix.Fb].copy()
    sol.eps2 = x[ix.e2].copy()
    sol.eps3 = x[ix.e3].copy()
    if ix.dits is not None:
        sol.d_ITS = x[ix.dits].copy()
    if ix.e4 is not None:
        sol.eps4 = x[ix.e4].copy()
    if hybrid and ix.n is not None:
        sol.n = np.round(x[ix.n]).astype(int)
        sol.P_ICE = x[ix.P].copy()
        sol.eps1 = x[ix.e1].copy()
        off = sol.n == 0
        sol.F_t[off] = 0.0
        sol.P_ICE[off] = 0.0
        sol.F_t = np.maximum(sol.F_t, 0.0)
        sol.P_ICE = np.maximum(sol.P_ICE, 0.0)
    else:
        sol.F_t = np.maximum(sol.F_t, 0.0)
    sol.F_b = np.maximum(sol.F_b, 0.0)
    return sol


class Controller:
    """Receding-horizon session: owns warm start and engine-state memory."""

    def __init__(
        self,
        kind: str,
        vp: VehicleParams,
        sched: pt.GearSchedule,
        models: dict[int, QuadPowerModel],
        cfg: ControllerConfig,
        solve_options: SolveOptions | None = None,
    ):
        if kind not in ("hmpc", "baseline"):
            raise ValueError(f"unknown controller kind {kind!r}")
        self.kind = kind
        self.vp = vp
        self.sched = sched
        self.models = models
        self.cfg = cfg
        self.solve_options = solve_options or SolveOptions()
        self.n_prev = 1
        self.prev_solution: MpcSolution | None = None
        self.prev_gear: int | None = None

    def gear_context(self, gear: int) -> GearContext:
        g = self.sched.gears[gear - 1]
        return GearContext(gear=gear, model=self.models[gear], F_t_max=g.F_t_max, P_max=g.P_max)

    def select_gear(self, v: float) -> int:
        gear = pt.select_gear(v, self.sched, self.prev_gear)
        self.prev_gear = gear
        return gear

    def predicted_speeds(self, v_now: float) -> np.ndarray:
        """Warm-start speed trajectory: previous plan shifted, else constant."""
        N = self.cfg.N
        prev = self.prev_solution
        if prev is not None and prev.v is not None and self.cfg.warm_start:
            shifted = np.concatenate([prev.v[1:], prev.v[-1:]])
            shifted[0] = v_now
            return shifted
        return np.full(N + 1, v_now)

    def predicted_positions(self, s_host: float, v_now: float) -> np.ndarray:
        v = self.predicted_speeds(v_now)
        steps = 0.5 * self.cfg.dt * (v[:-1] + v[1:])
        return s_host + np.concatenate([[0.0], np.cumsum(steps)])

    def warm_binaries(self) -> np.ndarray | None:
        prev = self.prev_solution
        if not self.cfg.warm_start or prev is None or prev.n is None:
            return None
        return np.concatenate([prev.n[1:], prev.n[-1:]]).astype(float)

    def solve(self, problem: Problem, ix: MpcIndex) -> MpcSolution:
        if self.kind == "hmpc":
            opts = SolveOptions(
                tol=self.solve_options.tol,
                max_iter=self.solve_options.max_iter,
                node_limit=self.solve_options.node_limit,
                time_limit=self.solve_options.time_limit,
                warm_binaries=self.warm_binaries(),
                int_tol=self.solve_options.int_tol,
            )
            report = solve_miqcqp(problem, opts)
        else:
            report = solve_qcqp(problem, tol=self.solve_options.tol, max_iter=self.solve_options.max_iter)
            report.nodes = max(report.nodes, 1)
        sol = extract_solution(report, ix, hybrid=self.kind == "hmpc")
        if sol.status in ("optimal",):
            self.prev_solution = sol
            if sol.n is not None:
                self.n_prev = int(sol.n[0])
        return sol

    def advance_previous_plan(self) -> MpcSolution | None:
        """On solver limit/failure: shift the previous plan one step."""
        prev = self.prev_solution
        if prev is None or prev.v is None:
            return None
        def shift(a):
            return None if a is None else np.concatenate([a[1:], a[-1:]])
        shifted = MpcSolution(
            status="shifted_previous",
            objective=None,
            v=shift(prev.v),
            d_rel=shift(prev.d_rel),
            d_ITS=shift(prev.d_ITS),
            P_ICE=shift(prev.P_ICE),
            F_t=shift(prev.F_t),
            F_b=shift(prev.F_b),
            n=shift(prev.n),
            eps1=shift(prev.eps1),
            eps2=shift(prev.eps2),
            eps3=shift(prev.eps3),
            eps4=shift(prev.eps4),
        )
        self.prev_solution = shifted
        if shifted.n is not None:
            self.n_prev = int(shifted.n[0])
        return shifted
