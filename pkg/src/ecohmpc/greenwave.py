"""Traffic-signal schedules, green-wave speed windows, and stop logic.

A green-wave window for a signal at distance d with a green phase starting
at g and ending at r (red start) is the constant-speed interval
[d/r, d/g] intersected with the road speed limits: any speed in it reaches
the signal while the light is green.  An already-started green (g <= now)
has no upper speed candidate.  The lower endpoint is used as the reference
speed since slower travel is the more fuel-efficient choice.

Boundary convention: arrival exactly at the green start is feasible,
arrival exactly at the red start is not (closed at g, open at r); the
distinction only matters for degenerate single-point windows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

MODE_GREENWAVE = "greenwave"
MODE_SET_SPEED = "set_speed"
MODE_STOPPING = "stopping"

# How many future phases of one signal are scanned for a window.
PHASE_LOOKAHEAD = 5


@dataclass(frozen=True)
class Phase:
    """One green interval: green start g, red start r (absolute seconds)."""

    g: float
    r: float

    def __post_init__(self) -> None:
        if not self.g < self.r:
            raise ValueError("phase must have g < r")


@dataclass(frozen=True)
class SignalSchedule:
    id: str
    s: float
    phases: tuple[Phase, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "phases", tuple(self.phases))
        if self.s < 0.0:
            raise ValueError("signal position must be nonnegative")
        if not self.phases:
            raise ValueError("signal needs at least one phase")
        for a, b in zip(self.phases, self.phases[1:]):
            if not a.r < b.g:
                raise ValueError("phases must be ascending and non-overlapping")

    def is_green(self, t: float) -> bool:
        """Green at time t; the instant of red start counts as red."""
        return any(p.g <= t < p.r for p in self.phases)

    def upcoming_phases(self, now: float, limit: int = PHASE_LOOKAHEAD) -> list[Phase]:
        """Phases not yet over at ``now``, earliest first."""
        return [p for p in self.phases if p.r > now][:limit]


@dataclass(frozen=True)
class BusStop:
    id: str
    s: float
    dwell: float = 10.0

    def __post_init__(self) -> None:
        if self.dwell <= 0.0:
            raise ValueError("dwell time must be positive")
        if self.s < 0.0:
            raise ValueError("stop position must be nonnegative")


def gwos_interval(
    d_TS: float, phase: tuple[float, float], v_lim: tuple[float, float]
) -> tuple[float, float] | None:
    """Constant-speed interval reaching the signal inside [g, r).

    ``phase`` times are relative to now.  Returns None when the window is
    unreachable within the speed limits, already over, or degenerate at the
    red-start boundary.
    """
    if d_TS <= 0.0:
        raise ValueError("already at or past the signal")
    g, r = phase
    if not g < r:
        raise ValueError("phase must have g < r")
    v_min, v_max = v_lim
    if v_min < 0.0 or v_max < v_min:
        raise ValueError("invalid speed limits")
    if r <= 0.0:
        return None
    lo = d_TS / r
    hi = d_TS / g if g > 0.0 else math.inf
    lo = max(lo, v_min)
    hi = min(hi, v_max)
    if lo > hi:
        return None
    if lo == hi:
        at_red_start = lo == d_TS / r
        at_green_start = g > 0.0 and lo == d_TS / g
        if at_red_start and not at_green_start:
            # Single point arriving exactly at red start: infeasible by convention.
            return None
    return (lo, hi)


def reference_speed(
    host_pos: float,
    now: float,
    signals: list[SignalSchedule],
    stops: list[BusStop],
    v_set: float,
    v_lim: tuple[float, float],
    exclude_stop_ids: set[str] | frozenset[str] = frozenset(),
    phase_lookahead: int = PHASE_LOOKAHEAD,
) -> tuple[float, str]:
    """Reference speed and mode from the next upcoming route feature.

    A bus stop ahead means a compulsory halt (mode ``stopping``); a signal
    is scanned phase by phase in time order and the first feasible window's
    lower endpoint becomes the reference (mode ``greenwave``); with no
    window the driver's set speed stands (mode ``set_speed``).  Served stops
    are excluded by id.
    """
    features: list[tuple[float, str, object]] = []
    for sig in signals:
        if sig.s > host_pos:
            features.append((sig.s, "signal", sig))
    for stop in stops:
        if stop.s > host_pos and stop.id not in exclude_stop_ids:
            features.append((stop.s, "stop", stop))
    if not features:
        return v_set, MODE_SET_SPEED
    features.sort(key=lambda f: (f[0], f[1] == "signal"))
    s_feat, kind, feat = features[0]
    if kind == "stop":
        return 0.0, MODE_STOPPING
    d = s_feat - host_pos
    for phase in feat.upcoming_phases(now, phase_lookahead):
        window = gwos_interval(d, (phase.g - now, phase.r - now), v_lim)
        if window is not None:
            return window[0], MODE_GREENWAVE
    return v_set, MODE_SET_SPEED


def load_spat(path: str | Path) -> tuple[list[SignalSchedule], list[BusStop]]:
    """Load the SPaT JSON: signals with phase lists plus bus stops."""
    with Path(path).open() as fh:
        doc = json.load(fh)
    signals = [
        SignalSchedule(
            id=str(s["id"]),
            s=float(s["s_m"]),
            phases=tuple(Phase(g=float(p["g_s"]), r=float(p["r_s"])) for p in s["phases"]),
        )
        for s in doc.get("signals", [])
    ]
    stops = [
        BusStop(id=str(b["id"]), s=float(b["s_m"]), dwell=float(b.get("dwell_s", 10.0)))
        for b in doc.get("stops", [])
    ]
    return signals, stops


def save_spat(signals: list[SignalSchedule], stops: list[BusStop], path: str | Path) -> None:
    doc = {
        "signals": [
            {"id": s.id, "s_m": s.s, "phases": [{"g_s": p.g, "r_s": p.r} for p in s.phases]}
            for s in signals
        ],
        "stops": [{"id": b.id, "s_m": b.s, "dwell_s": b.dwell} for b in stops],
    }
    with Path(path).open("w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
