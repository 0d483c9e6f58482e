"""Lateral steering control toolkit for car-like vehicles.

Kinematic and dynamic single-track models, discrete LQR synthesis,
speed-scheduled gains, curvature estimation with Kalman fusion, and a
deterministic closed-loop simulator with a CLI front end.
"""

__version__ = "0.1.0"


class SteerkitError(Exception):
    """Base class for toolkit errors."""


class NumericalError(SteerkitError):
    """Numerical failure: non-convergence, singularity, failed certification."""


class SimulationError(SteerkitError):
    """Simulation-domain failure: vehicle lost, diverged, or non-finite state."""
