"""Convex quadratic surrogate of the per-gear engine power map.

Fits f(v, F) = x00 + x10*v + x01*F + x20*v^2 + x02*F^2 + x11*v*F to
fuel-side power samples by least squares, subject to the quadratic part
being positive semidefinite so the surrogate is convex (Hessian
[[2*x20, x11], [x11, 2*x02]] >= 0).

The constrained solve parameterizes the quadratic part through its matrix
square root (unconstrained in the factor) and runs a damped Gauss-Newton
iteration from the PSD-projected unconstrained solution, falling back to
projected alternating minimization when the iteration stalls.  No
randomness anywhere; samples are canonically sorted first so the result is
independent of input order.

Note the surrogate's documented defect: f(v, 0) is generally positive
(friction and idle losses are baked into the fuel-power samples), so a
controller minimizing it would keep the engine on forever.  The hybrid
controller compensates with its engine-off power relief term.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger("ecohmpc.mapfit")

_MONOMIALS = ("1", "v", "F", "v^2", "F^2", "v*F")


class FitQualityError(RuntimeError):
    """Fit residual exceeded the configured limit."""


@dataclass(frozen=True)
class QuadPowerModel:
    """Convex quadratic power surrogate for one gear, SI units (W)."""

    gear: int
    x00: float
    x10: float
    x01: float
    x20: float
    x02: float
    x11: float
    fit_rms: float
    v_range: tuple[float, float]
    F_range: tuple[float, float]

    @property
    def coeffs(self) -> np.ndarray:
        return np.array([self.x00, self.x10, self.x01, self.x20, self.x02, self.x11])

    def hessian(self) -> np.ndarray:
        return np.array([[2.0 * self.x20, self.x11], [self.x11, 2.0 * self.x02]])

    def min_hessian_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.hessian())[0])


def eval_power(model: QuadPowerModel, v: float, F_t: float) -> float:
    """Evaluate the surrogate; extrapolation is allowed but logged."""
    if not (model.v_range[0] - 1e-9 <= v <= model.v_range[1] + 1e-9) or not (
        model.F_range[0] - 1e-9 <= F_t <= model.F_range[1] + 1e-9
    ):
        log.warning(
            "surrogate gear %d evaluated outside fitted range: v=%.2f, F_t=%.0f",
            model.gear,
            v,
            F_t,
        )
    return float(
        model.x00
        + model.x10 * v
        + model.x01 * F_t
        + model.x20 * v * v
        + model.x02 * F_t * F_t
        + model.x11 * v * F_t
    )


def fit(
    samples: list[tuple[float, float, float]],
    gear: int = 1,
    rms_limit: float | None = None,
) -> QuadPowerModel:
    """Fit one gear's surrogate from (v, F_t, P) samples.

    Raises ValueError on fewer than six samples or a rank-deficient sample
    set (the error names the monomial direction with no information), and
    FitQualityError when ``rms_limit`` is given and exceeded.
    """
    if len(samples) < 6:
        raise ValueError(f"need at least 6 samples, got {len(samples)}")
    data = np.array(sorted((float(v), float(f), float(p)) for v, f, p in samples))
    v, F, P = data[:, 0], data[:, 1], data[:, 2]

    # Scale each axis to O(1) so the normal equations stay well conditioned.
    v_s = max(float(np.max(np.abs(v))), 1e-12)
    F_s = max(float(np.max(np.abs(F))), 1e-12)
    P_s = max(float(np.max(np.abs(P))), 1e-12)
    vn, Fn, Pn = v / v_s, F / F_s, P / P_s

    phi = np.column_stack([np.ones_like(vn), vn, Fn, vn**2, Fn**2, vn * Fn])
    _check_rank(phi)
    theta_ls, *_ = np.linalg.lstsq(phi, Pn, rcond=None)

    M_ls = _quad_matrix(theta_ls)
    if np.linalg.eigvalsh(M_ls)[0] >= 0.0:
        theta = theta_ls
    else:
        theta = _fit_psd(phi, Pn, theta_ls)

    coeffs = _unscale(theta, v_s, F_s, P_s)
    resid = (
        coeffs[0]
        + coeffs[1] * v
        + coeffs[2] * F
        + coeffs[3] * v**2
        + coeffs[4] * F**2
        + coeffs[5] * v * F
        - P
    )
    rms = float(np.sqrt(np.mean(resid**2)))
    if rms_limit is not None and rms > rms_limit:
        raise FitQualityError(f"gear {gear}: fit RMS {rms:.1f} W exceeds limit {rms_limit:.1f} W")
    return QuadPowerModel(
        gear=gear,
        x00=coeffs[0],
        x10=coeffs[1],
        x01=coeffs[2],
        x20=coeffs[3],
        x02=coeffs[4],
        x11=coeffs[5],
        fit_rms=rms,
        v_range=(float(np.min(v)), float(np.max(v))),
        F_range=(float(np.min(F)), float(np.max(F))),
    )


def _check_rank(phi: np.ndarray) -> None:
    _, sv, vt = np.linalg.svd(phi, full_matrices=False)
    if sv[-1] <= 1e-10 * sv[0]:
        direction = _MONOMIALS[int(np.argmax(np.abs(vt[-1])))]
        raise ValueError(f"rank-deficient sample set: no information along '{direction}'")


def _quad_matrix(theta: np.ndarray) -> np.ndarray:
    """Quadratic-part matrix M with f_quad = [v F] M [v F]^T."""
    return np.array([[theta[3], theta[5] / 2.0], [theta[5] / 2.0, theta[4]]])


def _theta_from(linear: np.ndarray, M: np.ndarray) -> np.ndarray:
    return np.array([linear[0], linear[1], linear[2], M[0, 0], M[1, 1], 2.0 * M[0, 1]])


def _project_psd(M: np.ndarray) -> np.ndarray:
    lam, V = np.linalg.eigh(M)
    return (V * np.maximum(lam, 0.0)) @ V.T


def _factor(M: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L L^T = M for PSD M (jittered if singular)."""
    lam, V = np.linalg.eigh(M)
    C = V * np.sqrt(np.maximum(lam, 0.0) + 1e-14)
    q, r = np.linalg.qr(C.T)
    L = r.T
    return L * np.sign(np.diag(L))[np.newaxis, :]


def _objective(phi: np.ndarray, y: np.ndarray, theta: np.ndarray) -> float:
    r = phi @ theta - y
    return float(r @ r)


def _fit_psd(phi: np.ndarray, y: np.ndarray, theta_ls: np.ndarray) -> np.ndarray:
    """PSD-constrained least squares in scaled coordinates."""
    M0 = _project_psd(_quad_matrix(theta_ls))
    lin0 = _solve_linear_given_quad(phi, y, M0)
    theta, stalled = _gauss_newton(phi, y, lin0, _factor(M0))
    if stalled:
        theta_alt = _alternating(phi, y, theta)
        if _objective(phi, y, theta_alt) < _objective(phi, y, theta):
            theta = theta_alt
    return theta


def _solve_linear_given_quad(phi: np.ndarray, y: np.ndarray, M: np.ndarray) -> np.ndarray:
    quad = phi[:, 3] * M[0, 0] + phi[:, 4] * M[1, 1] + phi[:, 5] * 2.0 * M[0, 1]
    sol, *_ = np.linalg.lstsq(phi[:, :3], y - quad, rcond=None)
    return sol


def _gauss_newton(
    phi: np.ndarray, y: np.ndarray, lin: np.ndarray, L: np.ndarray
) -> tuple[np.ndarray, bool]:
    vn, Fn = phi[:, 1], phi[:, 2]
    params = np.array([lin[0], lin[1], lin[2], L[0, 0], L[1, 0], L[1, 1]])

    def residual(p):
        a = p[0] + p[1] * vn + p[2] * Fn
        t1 = p[3] * vn + p[4] * Fn
        t2 = p[5] * Fn
        return a + t1 * t1 + t2 * t2 - y

    def jacobian(p):
        t1 = p[3] * vn + p[4] * Fn
        t2 = p[5] * Fn
        return np.column_stack(
            [np.ones_like(vn), vn, Fn, 2.0 * t1 * vn, 2.0 * t1 * Fn, 2.0 * t2 * Fn]
        )

    lam = 1e-6
    r = residual(params)
    obj = float(r @ r)
    for _ in range(300):
        J = jacobian(params)
        g = J.T @ r
        if np.linalg.norm(g, np.inf) < 1e-14 * (1.0 + obj):
            return _params_to_theta(params), False
        H = J.T @ J
        step_taken = False
        for _ in range(40):
            try:
                delta = np.linalg.solve(H + lam * np.diag(np.diag(H)) + 1e-15 * np.eye(6), -g)
            except np.linalg.LinAlgError:
                lam *= 3.0
                continue
            cand = params + delta
            r_cand = residual(cand)
            obj_cand = float(r_cand @ r_cand)
            if obj_cand < obj:
                params, r, obj = cand, r_cand, obj_cand
                lam = max(lam / 3.0, 1e-12)
                step_taken = True
                break
            lam *= 3.0
        if not step_taken:
            return _params_to_theta(params), True
        if np.linalg.norm(delta) < 1e-14 * (1.0 + np.linalg.norm(params)):
            return _params_to_theta(params), False
    return _params_to_theta(params), True


def _params_to_theta(p: np.ndarray) -> np.ndarray:
    L = np.array([[p[3], 0.0], [p[4], p[5]]])
    return _theta_from(p[:3], L @ L.T)


def _alternating(phi: np.ndarray, y: np.ndarray, theta0: np.ndarray) -> np.ndarray:
    """Projected alternating minimization: linear part by LS, quadratic part
    by projected gradient with backtracking."""
    M = _project_psd(_quad_matrix(theta0))
    obj_prev = np.inf
    for _ in range(500):
        lin = _solve_linear_given_quad(phi, y, M)
        theta = _theta_from(lin, M)
        r = phi @ theta - y
        obj = float(r @ r)
        # Gradient of sum r^2 wrt (m11, m22, m12): quad term is
        # m11*v^2 + m22*F^2 + 2*m12*v*F.
        g = np.array(
            [2.0 * r @ phi[:, 3], 2.0 * r @ phi[:, 4], 4.0 * r @ phi[:, 5]]
        )
        G = np.array([[g[0], g[2] / 2.0], [g[2] / 2.0, g[1]]])
        t = 1.0 / (1.0 + np.linalg.norm(G))
        improved = False
        for _ in range(60):
            M_new = _project_psd(M - t * G)
            theta_new = _theta_from(_solve_linear_given_quad(phi, y, M_new), M_new)
            if _objective(phi, y, theta_new) < obj - 1e-16:
                M = M_new
                improved = True
                break
            t *= 0.5
        if not improved or obj_prev - obj < 1e-15 * (1.0 + obj):
            break
        obj_prev = obj
    lin = _solve_linear_given_quad(phi, y, M)
    return _theta_from(lin, M)


def _unscale(theta: np.ndarray, v_s: float, F_s: float, P_s: float) -> np.ndarray:
    return np.array(
        [
            P_s * theta[0],
            P_s * theta[1] / v_s,
            P_s * theta[2] / F_s,
            P_s * theta[3] / v_s**2,
            P_s * theta[4] / F_s**2,
            P_s * theta[5] / (v_s * F_s),
        ]
    )


def fit_gear_models(
    emap,
    sched,
    eta_t: float,
    n_v: int = 30,
    n_f: int = 30,
    rms_frac_limit: float | None = 0.05,
) -> dict[int, QuadPowerModel]:
    """Fit every gear's surrogate from the engine map.

    Samples an n_v x n_f grid over each gear's speed band times
    [0, F_t_max]; the power target is the interpolated fuel-side power
    mdot*H_u at the mapped engine operating point.
    """
    from . import powertrain as pt

    models = {}
    for gi, gear in enumerate(sched.gears, start=1):
        v_lo = max(gear.v_low, 0.05)
        vs = np.linspace(v_lo, gear.v_high, n_v)
        fs = np.linspace(0.0, gear.F_t_max, n_f)
        samples = []
        for v in vs:
            for F in fs:
                w, T = pt.engine_point(float(v), float(F), gi, sched, eta_t)
                w = min(max(w, emap.w_grid[0]), emap.w_grid[-1])
                T = min(T, emap.t_max_at(w))
                p_fuel = pt._bilinear(emap.w_grid, emap.T_grid, emap.mdot, w, T) * emap.H_u
                samples.append((float(v), float(F), p_fuel))
        limit = rms_frac_limit * gear.P_max if rms_frac_limit is not None else None
        models[gi] = fit(samples, gear=gi, rms_limit=limit)
        log.info("gear %d surrogate fit RMS %.0f W", gi, models[gi].fit_rms)
    return models


def save_models_csv(models: dict[int, QuadPowerModel], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gear", "x00", "x10", "x01", "x20", "x02", "x11", "fit_rms"])
        for gi in sorted(models):
            m = models[gi]
            writer.writerow(
                [gi] + [repr(x) for x in (m.x00, m.x10, m.x01, m.x20, m.x02, m.x11, m.fit_rms)]
            )


def load_models_csv(path: str | Path, sched=None) -> dict[int, QuadPowerModel]:
    """Load surrogates; ranges come from the gear schedule when given."""
    models = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            gi = int(row["gear"])
            if sched is not None:
                g = sched.gears[gi - 1]
                v_range = (g.v_low, g.v_high)
                f_range = (0.0, g.F_t_max)
            else:
                v_range = (0.0, np.inf)
                f_range = (0.0, np.inf)
            models[gi] = QuadPowerModel(
                gear=gi,
                x00=float(row["x00"]),
                x10=float(row["x10"]),
                x01=float(row["x01"]),
                x20=float(row["x20"]),
                x02=float(row["x02"]),
                x11=float(row["x11"]),
                fit_rms=float(row["fit_rms"]),
                v_range=v_range,
                F_range=f_range,
            )
    return models
