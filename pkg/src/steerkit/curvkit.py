"""Curvature from steering geometry, from heading/yaw-rate/speed, and Kalman fusion.

The steering-derived (Ackermann) source is quantized but unbiased; the
differential source is noisy at low speed.  A scalar random-walk Kalman
filter fuses both.  All functions accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

MIN_CURVATURE_SPEED = 0.5
MIN_COS_HEADING = 0.05

# Filter defaults: steering channel is coarse but steady (low-resolution CAN
# measurement); the yaw-rate channel is clean at speed but noisy near zero,
# so its variance is scaled by 1/v^2 at use sites.
DEFAULT_Q_PROCESS = 1e-6
DEFAULT_R_ACKERMANN = 4e-6
DEFAULT_R_DIFFERENTIAL = 1e-4


def ackermann_curvature(delta, wheelbase: float):
    """Curvature from the steering angle: tan(delta) / L."""
    delta = np.asarray(delta, dtype=float)
    if np.any(np.abs(delta) >= math.pi / 2):
        raise ValueError("steer angle at/beyond the pi/2 tangent singularity")
    out = np.tan(delta) / wheelbase
    return float(out) if out.ndim == 0 else out


def feedforward_steer(kappa, wheelbase: float, max_steer: float | None = None):
    """Steering angle tracking curvature kappa: atan(kappa * L).

    Exact inverse of ackermann_curvature.  With max_steer given, the
    result is clamped; callers needing the saturation fact should compare
    against the bound themselves.
    """
    kappa = np.asarray(kappa, dtype=float)
    out = np.arctan(kappa * wheelbase)
    if max_steer is not None:
        out = np.clip(out, -max_steer, max_steer)
    return float(out) if out.ndim == 0 else out


def differential_curvature(psi, psi_dot, v):
    """Curvature from heading, yaw rate, and speed via the plane-curve formula.

    Evaluates kappa = Y'' / (1 + Y'^2)^(3/2) with Y' = tan(psi) and
    Y'' = psi_dot / (|v cos(psi)| cos(psi)^2).  The chain collapses
    algebraically to psi_dot / v; the full expression is evaluated so the
    simplification stays a testable property rather than an assumption.

    Guards: v >= 0.5 m/s and |cos(psi)| >= 0.05.  Near the heading
    singularity callers must rotate the frame or fall back to the
    Ackermann source.
    """
    psi = np.asarray(psi, dtype=float)
    psi_dot = np.asarray(psi_dot, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(v < MIN_CURVATURE_SPEED):
        raise ValueError(f"speed below the {MIN_CURVATURE_SPEED} m/s guard")
    cos_psi = np.cos(psi)
    if np.any(np.abs(cos_psi) < MIN_COS_HEADING):
        raise ValueError("heading too close to +-pi/2; rotate the frame first")
    y1 = np.tan(psi)
    y2 = psi_dot / (np.abs(v * cos_psi) * cos_psi**2)
    out = y2 / (1.0 + y1**2) ** 1.5
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CurvatureSample:
    """A time-stamped curvature measurement from one source."""

    t: float
    kappa: float
    source: str               # 'ackermann' | 'differential' | 'fused'
    variance: float

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError("measurement variance must be positive")
        if not math.isfinite(self.kappa):
            raise ValueError("kappa must be finite")
        if self.source not in ("ackermann", "differential", "fused"):
            raise ValueError(f"unknown source {self.source!r}")


@dataclass(frozen=True)
class KfState:
    """Scalar random-walk Kalman filter state for fused curvature.

    q_process is the random-walk intensity ((1/m)^2 per second); r_ack and
    r_diff are the default per-source measurement variances used when a
    sample does not carry its own.
    """

    kappa_hat: float = 0.0
    p: float = 1e-2
    q_process: float = DEFAULT_Q_PROCESS
    r_ack: float = DEFAULT_R_ACKERMANN
    r_diff: float = DEFAULT_R_DIFFERENTIAL

    def __post_init__(self):
        if self.p <= 0 or self.q_process <= 0 or self.r_ack <= 0 or self.r_diff <= 0:
            raise ValueError("variance parameters must be positive")


def kf_update(state: KfState, dt: float,
              z_ack: CurvatureSample | None = None,
              z_diff: CurvatureSample | None = None) -> KfState:
    """One filter cycle: random-walk predict, then sequential scalar updates.

    With both measurements absent only the predict step runs.  Sequential
    scalar updates commute, so simultaneous measurements may be applied in
    either order.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    kappa = state.kappa_hat
    p = state.p + state.q_process * dt
    for z in (z_ack, z_diff):
        if z is None:
            continue
        gain = p / (p + z.variance)
        kappa = kappa + gain * (z.kappa - kappa)
        p = (1.0 - gain) * p
    return replace(state, kappa_hat=kappa, p=p)


def kf_steady_state_variance(q_step: float, variances: tuple[float, ...]) -> float:
    """Closed-form steady-state posterior variance of the scalar filter.

    q_step is the per-cycle process noise (q_process * dt); variances are
    the per-cycle measurement variances applied sequentially.  Solves the
    fixed point p = update(p + q_step) by bisection; used as the
    independent oracle for the fusion tests.
    """
    if q_step <= 0 or any(r <= 0 for r in variances):
        raise ValueError("noise parameters must be positive")

    def cycle(p: float) -> float:
        p = p + q_step
        for r in variances:
            p = p * r / (p + r)
        return p

    lo, hi = 0.0, q_step + max(variances)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cycle(mid) > mid:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
