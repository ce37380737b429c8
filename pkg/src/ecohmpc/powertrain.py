"""Engine map ingestion and scaling, gear schedule, and plant-side fuel lookup.

The reference fuel-flow map is a gridded (engine speed, torque) -> g/s table
loaded from CSV.  It is scaled to bus size by stretching the torque grid and
compressing the speed grid while carrying the fuel-flow entries over
cell-for-cell; engine efficiency is then re-derived from the scaled torque
and speed against the original fuel flows.

Fuel-side power here means the chemical power ``mdot * H_u`` of the burned
fuel; the per-gear power ceiling ``P_max`` and the quadratic power surrogate
both live on that scale, so the controller's power variable is directly a
fuel-energy rate.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

log = logging.getLogger("ecohmpc.powertrain")

# Diesel lower heating value, J per gram.
H_U_DIESEL = 42600.0

# Engine idle speed used for the zero-traction fuel flow (600 rpm).
W_IDLE_RADPS = 600.0 * 2.0 * np.pi / 60.0

# Default gear-shift hysteresis half-width is h_v/2 on each side of a band edge.
HYSTERESIS_BAND = 1.0


class InfeasibleOperatingPoint(ValueError):
    """Requested (speed, torque) point lies outside the engine map."""


@dataclass(frozen=True)
class EngineMap:
    """Gridded engine fuel-flow map.

    ``mdot[i, j]`` is the fuel mass flow (g/s) at speed ``w_grid[i]`` and
    torque ``T_grid[j]``.  ``T_max_curve[i]`` is the torque ceiling at
    ``w_grid[i]``.
    """

    w_grid: np.ndarray
    T_grid: np.ndarray
    mdot: np.ndarray
    T_max_curve: np.ndarray
    H_u: float = H_U_DIESEL

    def __post_init__(self) -> None:
        w = np.asarray(self.w_grid, dtype=float)
        T = np.asarray(self.T_grid, dtype=float)
        m = np.asarray(self.mdot, dtype=float)
        curve = np.asarray(self.T_max_curve, dtype=float)
        object.__setattr__(self, "w_grid", w)
        object.__setattr__(self, "T_grid", T)
        object.__setattr__(self, "mdot", m)
        object.__setattr__(self, "T_max_curve", curve)
        if w.ndim != 1 or T.ndim != 1 or np.any(np.diff(w) <= 0) or np.any(np.diff(T) <= 0):
            raise ValueError("speed and torque grids must be 1-D and strictly ascending")
        if m.shape != (w.size, T.size):
            raise ValueError(f"mdot shape {m.shape} != (n_w, n_T) = {(w.size, T.size)}")
        if np.any(m < 0.0):
            raise ValueError("fuel flow must be nonnegative everywhere")
        if curve.shape != w.shape:
            raise ValueError("T_max_curve must have one entry per speed grid point")
        if self.H_u <= 0.0:
            raise ValueError("H_u must be positive")

    def cleaned(self) -> "EngineMap":
        """Monotonize fuel flow in torque (cumulative max along each speed row)."""
        return replace(self, mdot=np.maximum.accumulate(self.mdot, axis=1))

    def is_torque_monotone(self) -> bool:
        return bool(np.all(np.diff(self.mdot, axis=1) >= 0.0))

    def interp_mdot(self, w: float, T: float) -> float:
        """Bilinear fuel-flow interpolation at an interior grid point."""
        return _bilinear(self.w_grid, self.T_grid, self.mdot, w, T)

    def t_max_at(self, w: float) -> float:
        return float(np.interp(w, self.w_grid, self.T_max_curve))

    @classmethod
    def from_csv(cls, path: str | Path, H_u: float = H_U_DIESEL, clean: bool = True) -> "EngineMap":
        """Load the documented CSV layout.

        First row: corner label then the speed grid (rad/s).  Each following
        row: a torque value (N m) then the fuel flows (g/s) for that torque
        across all speeds.
        """
        path = Path(path)
        with path.open(newline="") as fh:
            rows = [row for row in csv.reader(fh) if row]
        if len(rows) < 3 or len(rows[0]) < 3:
            raise ValueError(f"{path}: engine map CSV needs a speed row and >=2 torque rows")
        try:
            w_grid = np.array([float(x) for x in rows[0][1:]])
            T_grid = np.array([float(r[0]) for r in rows[1:]])
            body = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
        except ValueError as exc:
            raise ValueError(f"{path}: malformed engine map CSV: {exc}") from exc
        if body.shape != (T_grid.size, w_grid.size):
            raise ValueError(f"{path}: ragged fuel-flow body")
        m = cls(
            w_grid=w_grid,
            T_grid=T_grid,
            mdot=body.T,
            T_max_curve=np.full(w_grid.size, T_grid[-1]),
            H_u=H_u,
        )
        return m.cleaned() if clean else m

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["T_Nm\\w_radps"] + [repr(float(w)) for w in self.w_grid])
            for j, T in enumerate(self.T_grid):
                writer.writerow([repr(float(T))] + [repr(float(x)) for x in self.mdot[:, j]])


@dataclass(frozen=True)
class Gear:
    """One gear: ratio, speed band, and offline traction/power ceilings."""

    ratio: float
    v_low: float
    v_high: float
    F_t_max: float
    P_max: float


@dataclass(frozen=True)
class GearSchedule:
    """Rule-based 4-gear schedule over contiguous speed bands."""

    gears: tuple[Gear, ...]
    final_drive: float
    wheel_radius: float
    h_v: float = HYSTERESIS_BAND

    def __post_init__(self) -> None:
        object.__setattr__(self, "gears", tuple(self.gears))
        if not self.gears:
            raise ValueError("need at least one gear")
        if self.final_drive <= 0 or self.wheel_radius <= 0:
            raise ValueError("final_drive and wheel_radius must be positive")
        prev_high = 0.0
        for i, g in enumerate(self.gears):
            if g.F_t_max <= 0 or g.P_max <= 0:
                raise ValueError(f"gear {i + 1}: traction/power ceilings must be positive")
            if g.v_low != prev_high:
                raise ValueError(f"gear {i + 1}: bands must cover the speed range without gaps")
            if g.v_high <= g.v_low:
                raise ValueError(f"gear {i + 1}: empty speed band")
            prev_high = g.v_high

    @property
    def v_top(self) -> float:
        return self.gears[-1].v_high

    def speed_multiplier(self, gear: int) -> float:
        """Engine speed per unit vehicle speed for a 1-based gear index."""
        g = self.gears[gear - 1]
        return g.ratio * self.final_drive / self.wheel_radius

    def to_dict(self) -> dict:
        return {
            "final_drive": self.final_drive,
            "wheel_radius": self.wheel_radius,
            "h_v": self.h_v,
            "gears": [
                {
                    "ratio": g.ratio,
                    "v_low": g.v_low,
                    "v_high": g.v_high,
                    "F_t_max": g.F_t_max,
                    "P_max": g.P_max,
                }
                for g in self.gears
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GearSchedule":
        return cls(
            gears=tuple(Gear(**g) for g in d["gears"]),
            final_drive=float(d["final_drive"]),
            wheel_radius=float(d["wheel_radius"]),
            h_v=float(d.get("h_v", HYSTERESIS_BAND)),
        )


def scale_map(ref: EngineMap, T_max_new: float, w_max_new: float) -> EngineMap:
    """Rescale a reference map to new torque/speed corners.

    The torque grid is multiplied by ``T_max_new / max(T_ref)``, the speed
    grid divided by ``max(w_ref) / w_max_new``; fuel-flow entries carry over
    cell-for-cell.
    """
    if T_max_new <= 0.0 or w_max_new <= 0.0:
        raise ValueError("scale targets must be positive")
    f_T = T_max_new / float(ref.T_grid[-1])
    f_w = float(ref.w_grid[-1]) / w_max_new
    return replace(
        ref,
        w_grid=ref.w_grid / f_w,
        T_grid=ref.T_grid * f_T,
        T_max_curve=ref.T_max_curve * f_T,
    )


def efficiency(emap: EngineMap) -> np.ndarray:
    """Engine efficiency T*w / (mdot*H_u) over the map grid.

    Cells with zero fuel flow and zero mechanical power are 0 by convention;
    zero fuel flow with positive power means a corrupt map and raises.
    """
    power = np.outer(emap.w_grid, emap.T_grid)
    fuel = emap.mdot * emap.H_u
    bad = (emap.mdot == 0.0) & (power > 0.0)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise ValueError(
            f"corrupt map: zero fuel flow at w={emap.w_grid[i]:.1f} rad/s, "
            f"T={emap.T_grid[j]:.1f} N m with positive power"
        )
    eta = np.zeros_like(fuel)
    nz = fuel > 0.0
    eta[nz] = power[nz] / fuel[nz]
    return eta


def traction_power(F_t: float, v: float, eta_e: float, eta_t: float) -> float:
    """Fuel-side power F_t*v / (eta_e*eta_t) needed for a traction request."""
    if F_t < 0.0 or v < 0.0:
        raise ValueError("F_t and v must be nonnegative")
    if not (0.0 < eta_e <= 1.0) or not (0.0 < eta_t <= 1.0):
        raise ValueError("efficiencies must be in (0, 1]")
    return F_t * v / (eta_e * eta_t)


def select_gear(v: float, sched: GearSchedule, prev_gear: int | None = None) -> int:
    """Pick a 1-based gear from the speed bands.

    With a previous gear, a hysteresis band of total width ``h_v`` straddles
    each band edge: the previous gear is kept while v stays strictly inside
    (v_low - h_v/2, v_high + h_v/2).  Without history, the band containing v
    decides, the lower gear winning an exact boundary tie.
    """
    if v < 0.0:
        raise ValueError("speed must be nonnegative")
    half = sched.h_v / 2.0
    if prev_gear is not None:
        g = sched.gears[prev_gear - 1]
        lo = g.v_low - half if prev_gear > 1 else -np.inf
        hi = g.v_high + half if prev_gear < len(sched.gears) else np.inf
        if lo < v < hi:
            return prev_gear
    if v > sched.v_top:
        log.warning("speed %.2f m/s beyond gear coverage %.2f m/s; using top gear", v, sched.v_top)
        return len(sched.gears)
    for i, g in enumerate(sched.gears):
        if v <= g.v_high:
            return i + 1
    return len(sched.gears)


def engine_point(v: float, F_t: float, gear: int, sched: GearSchedule, eta_t: float) -> tuple[float, float]:
    """Map vehicle speed and traction force to engine speed and torque."""
    k = sched.speed_multiplier(gear)
    w = v * k
    T = F_t * sched.wheel_radius / (sched.gears[gear - 1].ratio * sched.final_drive * eta_t)
    return w, T


def fuel_flow(
    v: float,
    F_t: float,
    gear: int,
    emap: EngineMap,
    sched: GearSchedule,
    engine_on: bool,
    eta_t: float = 0.95,
) -> float:
    """Plant-side fuel mass flow (g/s).

    Engine off burns nothing.  Engine on with zero traction idles at the map
    value for (idle speed, zero torque) regardless of vehicle speed, which is
    what makes coasting with the engine off strictly cheaper than coasting
    in gear.  Engine speeds below the grid clamp to its lower edge (launch /
    converter slip); torque above the ceiling is an infeasible request.
    """
    if not engine_on:
        return 0.0
    if F_t <= 1e-12:
        w_idle = min(max(W_IDLE_RADPS, emap.w_grid[0]), emap.w_grid[-1])
        return _bilinear(emap.w_grid, emap.T_grid, emap.mdot, w_idle, emap.T_grid[0])
    w, T = engine_point(v, F_t, gear, sched, eta_t)
    if w > emap.w_grid[-1] + 1e-9:
        raise InfeasibleOperatingPoint(
            f"engine speed {w:.1f} rad/s exceeds map limit {emap.w_grid[-1]:.1f} "
            f"(v={v:.2f} m/s in gear {gear})"
        )
    w = min(max(w, emap.w_grid[0]), emap.w_grid[-1])
    if T > emap.t_max_at(w) + 1e-9:
        raise InfeasibleOperatingPoint(
            f"torque {T:.1f} N m exceeds ceiling {emap.t_max_at(w):.1f} at w={w:.1f} rad/s "
            f"(F_t={F_t:.0f} N in gear {gear})"
        )
    return _bilinear(emap.w_grid, emap.T_grid, emap.mdot, w, min(T, emap.T_grid[-1]))


def gear_limits(
    emap: EngineMap,
    ratio: float,
    final_drive: float,
    wheel_radius: float,
    eta_t: float,
    v_low: float,
    v_high: float,
) -> tuple[float, float]:
    """Offline map-feasible ceilings for one gear band.

    F_t_max is the largest traction deliverable anywhere in the band;
    P_max is the largest fuel-side power mdot*H_u reachable in the band,
    evaluated at grid columns (bilinear maxima sit on cell corners).
    """
    k = ratio * final_drive / wheel_radius
    w_lo = max(v_low * k, float(emap.w_grid[0]))
    w_hi = min(v_high * k, float(emap.w_grid[-1]))
    if w_hi < w_lo:
        w_hi = w_lo
    ws = [w_lo, w_hi] + [float(w) for w in emap.w_grid if w_lo <= w <= w_hi]
    T_cap = min(min(emap.t_max_at(w) for w in ws), float(emap.T_grid[-1]))
    F_t_max = T_cap * ratio * final_drive * eta_t / wheel_radius
    P_max = max(
        _bilinear(emap.w_grid, emap.T_grid, emap.mdot, w, T) * emap.H_u
        for w in ws
        for T in [float(t) for t in emap.T_grid if t <= emap.t_max_at(w)] + [emap.t_max_at(w)]
    )
    return F_t_max, P_max


def idle_fuel_flow(emap: EngineMap) -> float:
    """Fuel flow at (idle speed, zero torque)."""
    w_idle = min(max(W_IDLE_RADPS, emap.w_grid[0]), emap.w_grid[-1])
    return _bilinear(emap.w_grid, emap.T_grid, emap.mdot, w_idle, emap.T_grid[0])


def _bilinear(xg: np.ndarray, yg: np.ndarray, z: np.ndarray, x: float, y: float) -> float:
    if not (xg[0] - 1e-9 <= x <= xg[-1] + 1e-9) or not (yg[0] - 1e-9 <= y <= yg[-1] + 1e-9):
        raise InfeasibleOperatingPoint(f"point ({x:.2f}, {y:.2f}) outside map grid")
    x = min(max(x, xg[0]), xg[-1])
    y = min(max(y, yg[0]), yg[-1])
    i = min(int(np.searchsorted(xg, x, side="right")) - 1, xg.size - 2)
    j = min(int(np.searchsorted(yg, y, side="right")) - 1, yg.size - 2)
    i = max(i, 0)
    j = max(j, 0)
    tx = (x - xg[i]) / (xg[i + 1] - xg[i])
    ty = (y - yg[j]) / (yg[j + 1] - yg[j])
    return float(
        z[i, j] * (1 - tx) * (1 - ty)
        + z[i + 1, j] * tx * (1 - ty)
        + z[i, j + 1] * (1 - tx) * ty
        + z[i + 1, j + 1] * tx * ty
    )
