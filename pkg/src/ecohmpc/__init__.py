"""Fuel-minimal adaptive cruise control stack for a diesel city bus.

Subsystems: longitudinal vehicle model, engine map + gear schedule, convex
quadratic power surrogate fitting, green-wave speed planning from traffic
signal schedules, hybrid/baseline MPC problem builders, an interior-point
QCQP solver with branch-and-bound for the engine on/off binaries, and a
closed-loop simulation harness with fuel accounting.
"""

from importlib import resources as _resources
from pathlib import Path

__version__ = "0.1.0"


def data_path(*parts: str) -> Path:
    """Path to a bundled data asset (engine map, shipped scenarios, ...)."""
    root = _resources.files(__name__) / "data"
    p = Path(str(root)).joinpath(*parts)
    if not p.exists():
        raise FileNotFoundError(f"no bundled data asset {'/'.join(parts)!r}")
    return p
