"""Lead-vehicle speed prediction over the control horizon.

Two deterministic predictors: frozen-time (the current lead speed is held
constant over the horizon) and prescient (the future lead speed is read
exactly from the recorded trace).  Beyond the end of a trace the last
sample is held.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PREDICTOR_FROZEN = "frozen"
PREDICTOR_PRESCIENT = "prescient"


@dataclass(frozen=True)
class LeadTrace:
    """Sampled lead-vehicle speed profile with linear interpolation."""

    t: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)
        if t.ndim != 1 or t.size < 1 or t.size != v.size:
            raise ValueError("trace needs matching 1-D t and v arrays")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("trace times must be strictly ascending")
        if np.any(v < 0.0):
            raise ValueError("trace speeds must be nonnegative")

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def speed_at(self, t) -> np.ndarray | float:
        out = np.interp(t, self.t, self.v)
        return float(out) if np.isscalar(t) else out

    @classmethod
    def from_csv(cls, path: str | Path) -> "LeadTrace":
        """Load from CSV with header ``t_s, v_mps``."""
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"t_s", "v_mps"}.issubset(reader.fieldnames):
                raise ValueError(f"{path}: lead trace CSV must have columns t_s, v_mps")
            rows = [(float(r["t_s"]), float(r["v_mps"])) for r in reader]
        return cls(t=np.array([r[0] for r in rows]), v=np.array([r[1] for r in rows]))

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_s", "v_mps"])
            for ti, vi in zip(self.t, self.v):
                writer.writerow([repr(float(ti)), repr(float(vi))])


def predict_frozen(v_now: float, N: int, dt: float) -> np.ndarray:
    """Constant-speed prediction of length N+1."""
    if v_now < 0.0:
        raise ValueError("speed must be nonnegative")
    return np.full(N + 1, float(v_now))


def predict_prescient(trace: LeadTrace, t_now: float, N: int, dt: float) -> np.ndarray:
    """Exact interpolated lead speeds at t_now + k*dt, k = 0..N."""
    ts = t_now + dt * np.arange(N + 1)
    return np.asarray(trace.speed_at(ts), dtype=float)
