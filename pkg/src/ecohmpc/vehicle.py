"""Longitudinal dynamics of the host bus.

Resistance forces (aerodynamic, rolling, gradient), the discrete forward-Euler
velocity update, and the headway-distance policies used by the controllers.
All functions are pure; parameter containers are frozen dataclasses.

Two aerodynamic-drag models coexist on purpose: the exact quadratic form
(used by the simulation plant) and an affine approximation ``p1*v + p2``
(used inside every controller model to keep the optimization problems
quadratic).  The affine form is a deliberately poor model at low speed and
may return a negative force there; callers in the controller accept this.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

AERO_LINEAR = "linear"
AERO_EXACT = "exact"


@dataclass(frozen=True)
class VehicleParams:
    """Physical and policy constants of the host vehicle.

    Units: masses kg, areas m^2, forces N, speeds m/s, distances m.
    ``p1``/``p2`` are the affine drag coefficients making ``p1*v + p2``
    approximate ``v**2`` over the operating speed range.
    """

    m_v: float = 12000.0        # curb + payload mass
    m_eq: float = 12600.0       # equivalent mass incl. rotational inertia
    c_w: float = 0.7            # drag coefficient
    A_f: float = 7.0            # frontal area
    rho: float = 1.2            # air density
    c_r: float = 0.008          # rolling-resistance coefficient
    g: float = 9.81
    p1: float = 27.711          # affine drag slope
    p2: float = -168.459        # affine drag offset
    d_min: float = 5.0          # standstill safety gap
    h_s: float = 1.5            # safety headway (s)
    d_max: float = 12.0         # desired-region offset
    h_c: float = 2.0            # desired-region headway (s)
    F_b_max: float = 40000.0    # max brake force
    eta_t: float = 0.95         # transmission efficiency

    def __post_init__(self) -> None:
        if not (self.m_eq >= self.m_v > 0.0):
            raise ValueError("require m_eq >= m_v > 0")
        for name in ("c_w", "A_f", "rho", "c_r", "eta_t"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if self.eta_t > 1.0:
            raise ValueError("eta_t must be <= 1")
        if self.d_min <= 0.0 or self.h_s <= 0.0 or self.F_b_max <= 0.0:
            raise ValueError("d_min, h_s, F_b_max must be positive")
        if self.d_max < self.d_min:
            raise ValueError("d_max must be >= d_min")
        if self.h_c < 0.0:
            raise ValueError("h_c must be >= 0")

    @property
    def aero_gain(self) -> float:
        """Common prefactor 0.5 * rho * A_f * c_w of both drag models."""
        return 0.5 * self.rho * self.A_f * self.c_w


@dataclass(frozen=True)
class RoadPoint:
    """One sample of the route profile."""

    s: float        # route position (m)
    theta: float    # elevation angle (rad)
    v_min: float    # lower speed limit (m/s)
    v_max: float    # upper speed limit (m/s)

    def __post_init__(self) -> None:
        if not (0.0 <= self.v_min < self.v_max):
            raise ValueError("require 0 <= v_min < v_max")
        if abs(self.theta) >= math.pi / 2:
            raise ValueError("|theta| must be < pi/2")


class RouteProfile:
    """Piecewise-linear route lookup by position.

    Positions must be strictly increasing.  Queries outside the sampled
    range clamp to the first/last point.
    """

    def __init__(self, points: list[RoadPoint]):
        if len(points) < 2:
            raise ValueError("route profile needs at least two points")
        s = np.array([p.s for p in points], dtype=float)
        if np.any(np.diff(s) <= 0.0):
            raise ValueError("route positions must be strictly increasing")
        self.points = list(points)
        self._s = s
        self._theta = np.array([p.theta for p in points], dtype=float)
        self._v_min = np.array([p.v_min for p in points], dtype=float)
        self._v_max = np.array([p.v_max for p in points], dtype=float)

    @property
    def length(self) -> float:
        return float(self._s[-1])

    @property
    def start(self) -> float:
        return float(self._s[0])

    def theta_at(self, s) -> np.ndarray | float:
        out = np.interp(s, self._s, self._theta)
        return float(out) if np.isscalar(s) else out

    def v_min_at(self, s) -> np.ndarray | float:
        out = np.interp(s, self._s, self._v_min)
        return float(out) if np.isscalar(s) else out

    def v_max_at(self, s) -> np.ndarray | float:
        out = np.interp(s, self._s, self._v_max)
        return float(out) if np.isscalar(s) else out

    @classmethod
    def from_csv(cls, path: str | Path) -> "RouteProfile":
        """Load from CSV with header ``s_m, theta_rad, v_min_mps, v_max_mps``."""
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            required = {"s_m", "theta_rad", "v_min_mps", "v_max_mps"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise ValueError(
                    f"{path}: route CSV must have header columns {sorted(required)}"
                )
            points = [
                RoadPoint(
                    s=float(row["s_m"]),
                    theta=float(row["theta_rad"]),
                    v_min=float(row["v_min_mps"]),
                    v_max=float(row["v_max_mps"]),
                )
                for row in reader
            ]
        return cls(points)

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["s_m", "theta_rad", "v_min_mps", "v_max_mps"])
            for p in self.points:
                writer.writerow(
                    [repr(float(p.s)), repr(float(p.theta)), repr(float(p.v_min)), repr(float(p.v_max))]
                )


def aero_force_exact(v: float, p: VehicleParams) -> float:
    """Quadratic drag 0.5*rho*A_f*c_w*v^2.  Plant-side model only."""
    if v < 0.0:
        raise ValueError("speed must be nonnegative")
    return p.aero_gain * v * v


def aero_force_linear(v: float, p: VehicleParams) -> float:
    """Affine drag 0.5*rho*A_f*c_w*(p1*v + p2).

    Negative below v = -p2/p1; that is the controller model's documented
    low-speed error, not a bug.
    """
    if v < 0.0:
        raise ValueError("speed must be nonnegative")
    return p.aero_gain * (p.p1 * v + p.p2)


def resistance_force(
    v: float, theta: float, p: VehicleParams, aero_mode: str = AERO_EXACT
) -> float:
    """Total resistance: selected aero term + rolling + gradient."""
    if aero_mode == AERO_EXACT:
        f_a = aero_force_exact(v, p)
    elif aero_mode == AERO_LINEAR:
        f_a = aero_force_linear(v, p)
    else:
        raise ValueError(f"unknown aero_mode {aero_mode!r}")
    f_r = p.c_r * p.m_v * p.g * math.cos(theta)
    f_g = p.m_v * p.g * math.sin(theta)
    return f_a + f_r + f_g


def step_velocity(
    v: float, F_t: float, F_b: float, theta: float, dt: float, p: VehicleParams
) -> float:
    """Forward-Euler velocity update with the affine aero term.

    This is the controller-model update; the plant integrates with the exact
    aero term instead.  No clamping here: the caller decides whether a
    negative result is an error or gets clipped at zero.
    """
    if dt < 0.0:
        raise ValueError("dt must be nonnegative")
    if F_t < 0.0 or F_b < 0.0:
        raise ValueError("forces must be nonnegative")
    f_res = resistance_force(v, theta, p, aero_mode=AERO_LINEAR)
    return v + dt / p.m_eq * (F_t - F_b - f_res)


def step_velocity_plant(
    v: float, F_t: float, F_b: float, theta: float, dt: float, p: VehicleParams
) -> float:
    """Plant velocity update: exact aero, result clamped at zero."""
    if dt < 0.0:
        raise ValueError("dt must be nonnegative")
    if F_t < 0.0 or F_b < 0.0:
        raise ValueError("forces must be nonnegative")
    f_res = resistance_force(v, theta, p, aero_mode=AERO_EXACT)
    return max(0.0, v + dt / p.m_eq * (F_t - F_b - f_res))


def safe_distance(v: float, p: VehicleParams) -> float:
    """Minimum safe gap d_min + h_s*v below which following is unsafe."""
    if v < 0.0:
        raise ValueError("speed must be nonnegative")
    return p.d_min + p.h_s * v


def desired_distance(v: float, p: VehicleParams) -> float:
    """Upper edge d_max + h_c*v of the desired following region."""
    if v < 0.0:
        raise ValueError("speed must be nonnegative")
    return p.d_max + p.h_c * v
