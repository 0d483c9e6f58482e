"""Reference paths: analytic generators, recorded-log ingestion, projection, smoothing.

Sign conventions, fixed once and asserted by the test fixtures:
positive lateral error means the vehicle is left of the path; positive
curvature means a left turn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import SimulationError
from .models import VehicleParams, Pose, wrap_angle

RECORDED_COLUMNS = ("t", "X", "Y", "psi", "yaw_rate", "speed", "steer")

MAX_SPACING = 0.5
DEFAULT_KAPPA_BOUND = 0.75   # 1/m, ~1/(0.5 L) for a mid-size wheelbase
HEADING_CONSISTENCY_TOL = 0.05


@dataclass(frozen=True)
class PathPoint:
    """One path sample: arc length, position, desired heading, signed curvature."""

    s: float
    x: float
    y: float
    psi: float
    kappa: float


@dataclass(frozen=True)
class PathProjection:
    """Projection of a pose onto a path: foot arc length and signed errors."""

    s: float
    e_y: float
    e_psi: float
    kappa: float


class RefPath:
    """Arc-length-indexed (position, heading, curvature) samples.

    Immutable after construction.  strict=True additionally enforces the
    heading-consistency and curvature sanity bounds, which generated and
    smoothed paths satisfy; raw recorded paths are ingested with
    strict=False and carry clipped curvature until smoothed.
    """

    def __init__(self, s, x, y, psi, kappa, closed: bool = False, strict: bool = True,
                 kappa_bound: float = DEFAULT_KAPPA_BOUND):
        self.s = np.asarray(s, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.psi = np.asarray(psi, dtype=float)
        self.kappa = np.asarray(kappa, dtype=float)
        self.closed = bool(closed)
        n = len(self.s)
        if n < 2:
            raise ValueError("a path needs at least two samples")
        for name in ("x", "y", "psi", "kappa"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} length mismatch")
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"column {name} contains non-finite values")
        ds = np.diff(self.s)
        if np.any(ds <= 0):
            raise ValueError("arc length must be strictly increasing")
        if np.any(ds > MAX_SPACING + 1e-9):
            raise ValueError(f"sample spacing exceeds {MAX_SPACING} m; resample first")
        if strict:
            self._check_consistency(kappa_bound)
        for arr in (self.s, self.x, self.y, self.psi, self.kappa):
            arr.setflags(write=False)

    def _check_consistency(self, kappa_bound: float) -> None:
        if np.max(np.abs(self.kappa)) > kappa_bound + 1e-12:
            raise ValueError(f"curvature exceeds drivable bound {kappa_bound} 1/m")
        chord = np.arctan2(np.diff(self.y), np.diff(self.x))
        dpsi = np.diff(self.psi)
        dpsi = np.arctan2(np.sin(dpsi), np.cos(dpsi))
        mid = self.psi[:-1] + 0.5 * dpsi
        err = np.abs(np.arctan2(np.sin(chord - mid), np.cos(chord - mid)))
        if np.max(err) > HEADING_CONSISTENCY_TOL:
            raise ValueError(
                f"heading inconsistent with geometry (max {np.max(err):.3f} rad); path too rough"
            )

    def __len__(self) -> int:
        return len(self.s)

    @property
    def length(self) -> float:
        return float(self.s[-1] - self.s[0])

    def point(self, i: int) -> PathPoint:
        return PathPoint(
            s=float(self.s[i]), x=float(self.x[i]), y=float(self.y[i]),
            psi=float(self.psi[i]), kappa=float(self.kappa[i]),
        )

    def start_pose(self) -> Pose:
        return Pose(float(self.x[0]), float(self.y[0]), float(self.psi[0]))


def _smoothstep(u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quintic smoothstep and its first two derivatives on u in [0, 1]."""
    sig = ((6.0 * u - 15.0) * u + 10.0) * u**3
    d1 = 30.0 * u**2 * (1.0 - u) ** 2
    d2 = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)
    return sig, d1, d2


def _lateral_profile(kind: str, xs: np.ndarray, length: float, offset: float):
    """Lateral profile y(x) with analytic y' and y'' for lane_change / s_curve."""
    u = np.clip(xs / length, 0.0, 1.0)
    if kind == "lane_change":
        sig, d1, d2 = _smoothstep(u)
        return offset * sig, offset / length * d1, offset / length**2 * d2
    # s_curve: smoothstep out on the first half, mirrored back on the second
    w_out = np.clip(2.0 * u, 0.0, 1.0)
    w_back = np.clip(2.0 - 2.0 * u, 0.0, 1.0)
    first = u <= 0.5
    sig_o, d1_o, d2_o = _smoothstep(w_out)
    sig_b, d1_b, d2_b = _smoothstep(w_back)
    y = np.where(first, offset * sig_o, offset * sig_b)
    dy = np.where(first, 2.0 * offset / length * d1_o, -2.0 * offset / length * d1_b)
    ddy = np.where(first, 4.0 * offset / length**2 * d2_o, 4.0 * offset / length**2 * d2_b)
    return y, dy, ddy


def profile_curvature(kind: str, x: np.ndarray, length: float, offset: float) -> np.ndarray:
    """Analytic curvature of a lateral-profile path at longitudinal positions x."""
    _, dy, ddy = _lateral_profile(kind, np.asarray(x, dtype=float), length, offset)
    return ddy / (1.0 + dy**2) ** 1.5


def gen_path(kind: str, spacing: float = 0.1, **params) -> RefPath:
    """Generate an analytic reference path sampled at ~uniform arc length.

    kinds and parameters:
      line:        length, heading=0, x0=0, y0=0
      circle:      radius, arc_deg=360 (or arc_rad), direction='left'|'right',
                   x0=0, y0=0, heading=0, wheelbase=2.7 (drivability check)
      lane_change: length, offset, x0=0, y0=0
      s_curve:     length, offset, x0=0, y0=0

    Samples carry exact analytic heading and curvature.
    """
    if not (0.01 < spacing <= MAX_SPACING):
        raise ValueError(f"spacing must be in (0.01, {MAX_SPACING}]")

    if kind == "line":
        length = float(params.get("length", 100.0))
        if length <= spacing:
            raise ValueError("line length must exceed spacing")
        heading = float(params.get("heading", 0.0))
        x0, y0 = float(params.get("x0", 0.0)), float(params.get("y0", 0.0))
        n = int(math.floor(length / spacing)) + 1
        s = np.linspace(0.0, spacing * (n - 1), n)
        if s[-1] < length - 1e-9:
            s = np.append(s, length)
        return RefPath(
            s=s,
            x=x0 + s * math.cos(heading),
            y=y0 + s * math.sin(heading),
            psi=np.full_like(s, wrap_angle(heading)),
            kappa=np.zeros_like(s),
        )

    if kind == "circle":
        radius = float(params.get("radius", 50.0))
        wheelbase = float(params.get("wheelbase", 2.7))
        if radius < 2.0 * wheelbase:
            raise ValueError(f"radius {radius} below drivable minimum {2 * wheelbase}")
        direction = params.get("direction", "left")
        if direction not in ("left", "right"):
            raise ValueError("direction must be 'left' or 'right'")
        sign = 1.0 if direction == "left" else -1.0
        if "arc_rad" in params:
            arc = float(params["arc_rad"])
        else:
            arc = math.radians(float(params.get("arc_deg", 360.0)))
        if arc <= 0:
            raise ValueError("arc must be positive")
        heading = float(params.get("heading", 0.0))
        x0, y0 = float(params.get("x0", 0.0)), float(params.get("y0", 0.0))
        total = radius * arc
        n = max(2, int(math.ceil(total / spacing)) + 1)
        s = np.linspace(0.0, total, n)
        theta = sign * s / radius
        # center sits one radius along the left/right normal of the start pose
        cx = x0 - sign * radius * math.sin(heading)
        cy = y0 + sign * radius * math.cos(heading)
        ang0 = math.atan2(y0 - cy, x0 - cx)
        ang = ang0 + theta
        return RefPath(
            s=s,
            x=cx + radius * np.cos(ang),
            y=cy + radius * np.sin(ang),
            psi=np.array([wrap_angle(heading + t) for t in theta]),
            kappa=np.full_like(s, sign / radius),
            closed=arc >= 2.0 * math.pi - 1e-9,
        )

    if kind in ("lane_change", "s_curve"):
        length = float(params.get("length", 60.0))
        offset = float(params.get("offset", 3.0))
        if length <= 4.0 * spacing:
            raise ValueError("profile length too short for the requested spacing")
        if offset == 0.0:
            raise ValueError("offset must be nonzero")
        x0, y0 = float(params.get("x0", 0.0)), float(params.get("y0", 0.0))
        # arc length by fine trapezoid quadrature, then uniform-s sample points
        fine = np.linspace(0.0, length, max(2000, 20 * int(length / spacing)))
        _, dy_f, _ = _lateral_profile(kind, fine, length, offset)
        seg = np.sqrt(1.0 + dy_f**2)
        s_fine = np.concatenate(([0.0], np.cumsum(0.5 * (seg[1:] + seg[:-1]) * np.diff(fine))))
        total = s_fine[-1]
        n = max(2, int(math.ceil(total / spacing)) + 1)
        s = np.linspace(0.0, total, n)
        xs = np.interp(s, s_fine, fine)
        y, dy, ddy = _lateral_profile(kind, xs, length, offset)
        kappa = ddy / (1.0 + dy**2) ** 1.5
        return RefPath(s=s, x=x0 + xs, y=y0 + y, psi=np.arctan(dy), kappa=kappa)

    raise ValueError(f"unknown path kind {kind!r}")


def load_recorded(t, x, y, psi, yaw_rate=None, speed=None, spacing: float = 0.25,
                  kappa_bound: float = DEFAULT_KAPPA_BOUND) -> RefPath:
    """Build a RefPath from recorded pose samples.

    Positions are deduplicated and resampled to uniform arc length.
    Headings come from central differences of the resampled positions
    (raw heading channels are noisy at parking speeds).  Curvature is
    initialized from the yaw-rate/speed differential estimate when both
    channels are present (evaluated in a sample-aligned frame), otherwise
    from heading finite differences, and clipped to the drivable bound.
    The result is not strict-validated: smooth it before control use.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if not (len(t) == len(x) == len(y) == len(psi)):
        raise ValueError("channel lengths differ")
    if len(t) < 10:
        raise ValueError(f"need at least 10 samples, got {len(t)}")
    if np.any(np.diff(t) < 0):
        raise ValueError("timestamps must be monotone")

    # drop consecutive duplicate positions
    keep = np.concatenate(([True], (np.abs(np.diff(x)) + np.abs(np.diff(y))) > 1e-9))
    x, y, psi, t = x[keep], y[keep], psi[keep], t[keep]
    if len(x) < 2:
        raise ValueError("recorded log has zero net displacement")
    ds = np.hypot(np.diff(x), np.diff(y))
    s_raw = np.concatenate(([0.0], np.cumsum(ds)))
    if s_raw[-1] < max(2.0 * spacing, 1e-6):
        raise ValueError("recorded log has zero net displacement")

    n = max(2, int(math.ceil(s_raw[-1] / spacing)) + 1)
    s = np.linspace(0.0, s_raw[-1], n)
    xr = np.interp(s, s_raw, x)
    yr = np.interp(s, s_raw, y)

    psi_d = np.empty(n)
    psi_d[1:-1] = np.arctan2(yr[2:] - yr[:-2], xr[2:] - xr[:-2])
    psi_d[0] = math.atan2(yr[1] - yr[0], xr[1] - xr[0])
    psi_d[-1] = math.atan2(yr[-1] - yr[-2], xr[-1] - xr[-2])

    if yaw_rate is not None and speed is not None:
        from .curvkit import differential_curvature, MIN_CURVATURE_SPEED

        yaw_rate = np.asarray(yaw_rate, dtype=float)[keep]
        speed = np.asarray(speed, dtype=float)[keep]
        kappa_raw = np.zeros(len(x))
        for i in range(len(x)):
            if speed[i] >= MIN_CURVATURE_SPEED:
                # rotate into a sample-aligned frame (heading 0) where the
                # differential formula is singularity-free
                kappa_raw[i] = differential_curvature(0.0, float(yaw_rate[i]), float(speed[i]))
            elif i > 0:
                kappa_raw[i] = kappa_raw[i - 1]
        kappa = np.interp(s, s_raw, kappa_raw)
    else:
        kappa = np.zeros(n)
        dpsi = np.arctan2(np.sin(np.diff(psi_d)), np.cos(np.diff(psi_d)))
        step = s[1] - s[0]
        kappa[1:-1] = (dpsi[:-1] + dpsi[1:]) / (2.0 * step)
        kappa[0] = dpsi[0] / step
        kappa[-1] = dpsi[-1] / step

    kappa = np.clip(kappa, -kappa_bound, kappa_bound)
    return RefPath(s=s, x=xr, y=yr, psi=psi_d, kappa=kappa, strict=False)


def project(path: RefPath, pose: Pose, prev_s: float | None = None,
            horizon: float = 50.0, window: float = 30.0) -> PathProjection:
    """Project a pose onto the path: foot point, signed lateral and heading error.

    The foot point comes from quadratic interpolation of the squared
    distance around the nearest sample.  Passing the previous projection's
    arc length restricts the search window, preventing backward jumps on
    self-near paths; that memory is caller-owned state.
    """
    n = len(path)
    if prev_s is None:
        lo, hi = 0, n
    else:
        lo = int(np.searchsorted(path.s, prev_s - 0.2 * window)) - 1
        hi = int(np.searchsorted(path.s, prev_s + window)) + 2
        lo, hi = max(0, lo), min(n, hi)
    dx = path.x[lo:hi] - pose.x
    dy = path.y[lo:hi] - pose.y
    d2 = dx * dx + dy * dy
    i = lo + int(np.argmin(d2))
    if math.sqrt(d2[i - lo]) > horizon:
        raise SimulationError(
            f"pose ({pose.x:.1f}, {pose.y:.1f}) is beyond the {horizon} m horizon: vehicle lost"
        )

    im = max(0, i - 1)
    ip = min(n - 1, i + 1)
    if im == ip:
        s_star = float(path.s[i])
    else:
        s0, s1, s2 = float(path.s[im]), float(path.s[i]), float(path.s[ip])
        f0 = (path.x[im] - pose.x) ** 2 + (path.y[im] - pose.y) ** 2
        f1 = (path.x[i] - pose.x) ** 2 + (path.y[i] - pose.y) ** 2
        f2 = (path.x[ip] - pose.x) ** 2 + (path.y[ip] - pose.y) ** 2
        # parabola vertex through the three bracketing squared distances
        denom = (s1 - s0) * (f1 - f2) - (s1 - s2) * (f1 - f0)
        if abs(denom) < 1e-30:
            s_star = s1
        else:
            s_star = s1 - 0.5 * ((s1 - s0) ** 2 * (f1 - f2) - (s1 - s2) ** 2 * (f1 - f0)) / denom
        s_star = min(max(s_star, s0), s2)

    j = int(np.clip(np.searchsorted(path.s, s_star) - 1, 0, n - 2))
    seg = float(path.s[j + 1] - path.s[j])
    a = (s_star - float(path.s[j])) / seg
    xf = float(path.x[j]) + a * float(path.x[j + 1] - path.x[j])
    yf = float(path.y[j]) + a * float(path.y[j + 1] - path.y[j])
    dpsi_seg = wrap_angle(float(path.psi[j + 1]) - float(path.psi[j]))
    psi_f = wrap_angle(float(path.psi[j]) + a * dpsi_seg)
    kappa_f = float(path.kappa[j]) + a * float(path.kappa[j + 1] - path.kappa[j])

    tx, ty = math.cos(psi_f), math.sin(psi_f)
    ox, oy = pose.x - xf, pose.y - yf
    e_y = tx * oy - ty * ox
    e_psi = wrap_angle(pose.psi - psi_f)
    return PathProjection(s=float(s_star), e_y=float(e_y), e_psi=float(e_psi), kappa=kappa_f)


def _moving_average(values: np.ndarray, half: int) -> np.ndarray:
    """Centered moving average with shrinking windows at the ends."""
    if half < 1:
        return values.copy()
    csum = np.concatenate(([0.0], np.cumsum(values)))
    n = len(values)
    out = np.empty(n)
    for i in range(n):
        lo = max(0, i - half)
        hi = min(n, i + half + 1)
        out[i] = (csum[hi] - csum[lo]) / (hi - lo)
    return out


def _condition_for_tracking(path: RefPath, window_m: float) -> RefPath:
    """Averaged copy of a rough path, good enough to feed the tracker.

    Raw recorded geometry carries heading and curvature noise large
    enough to saturate the steering through the feedforward term.
    Positions get a centered moving average over window_m meters,
    headings use a window-wide chord base, and the half-window edges
    (where the average is one-sided) are dropped.  The fine smoothing is
    still done by the vehicle run.
    """
    step = float(np.min(np.diff(path.s)))
    half = max(1, int(round(0.5 * window_m / step)))
    xs = _moving_average(path.x, half)
    ys = _moving_average(path.y, half)
    n = len(xs)
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half, n - 1)
    psi = np.arctan2(ys[hi] - ys[lo], xs[hi] - xs[lo])
    dpsi = np.arctan2(np.sin(psi[hi] - psi[lo]), np.cos(psi[hi] - psi[lo]))
    span = path.s[hi] - path.s[lo]
    kappa = _moving_average(np.clip(dpsi / span, -0.5, 0.5), half)
    trim = half if n > 6 * half else 0
    sl = slice(trim, n - trim if trim else n)
    return RefPath(s=path.s[sl], x=xs[sl], y=ys[sl], psi=psi[sl], kappa=kappa[sl], strict=False)


def read_recorded_csv(path) -> dict[str, np.ndarray]:
    """Read a recorded-log CSV: header t,X,Y,psi[,yaw_rate,speed,steer].

    UTF-8, '#' comment lines allowed, SI units and radians throughout.
    Returns one array per present column.
    """
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ValueError(f"cannot read {path}: {e}") from e
    rows = [ln.strip() for ln in lines if ln.strip() and not ln.strip().startswith("#")]
    if not rows:
        raise ValueError(f"{path}: empty log")
    header = [c.strip() for c in rows[0].split(",")]
    unknown = set(header) - set(RECORDED_COLUMNS)
    if unknown:
        raise ValueError(f"{path}: unknown columns {sorted(unknown)}")
    for col in ("t", "X", "Y", "psi"):
        if col not in header:
            raise ValueError(f"{path}: missing required channel '{col}'")
    data = []
    for ln in rows[1:]:
        cells = ln.split(",")
        if len(cells) != len(header):
            raise ValueError(f"{path}: row has {len(cells)} cells, header has {len(header)}")
        try:
            data.append([float(c) for c in cells])
        except ValueError as e:
            raise ValueError(f"{path}: non-numeric cell ({e})") from e
    if not data:
        raise ValueError(f"{path}: no data rows")
    arr = np.asarray(data)
    return {name: arr[:, i] for i, name in enumerate(header)}


def write_recorded_csv(path, t, x, y, psi, yaw_rate=None, speed=None, steer=None) -> None:
    """Write arrays in the recorded-log CSV schema with repr-exact floats."""
    cols = {"t": t, "X": x, "Y": y, "psi": psi}
    for name, val in (("yaw_rate", yaw_rate), ("speed", speed), ("steer", steer)):
        if val is not None:
            cols[name] = val
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(cols) + "\n")
        for row in zip(*cols.values()):
            f.write(",".join(repr(float(v)) for v in row) + "\n")


def position_noise_estimate(path: RefPath) -> float:
    """Position noise amplitude from midpoint residuals over a ~3 m base.

    r_i = p_i - (p_{i-h} + p_{i+h})/2 has variance 1.5 sigma^2 for white
    position noise (the wide base also sees noise that arc-length
    resampling correlated), while smooth geometry contributes only its
    sagitta, small for drivable curvature.
    """
    step = float(np.min(np.diff(path.s)))
    half = max(1, int(round(1.5 / step)))
    if len(path) < 2 * half + 1:
        return 0.0
    rx = path.x[half:-half] - 0.5 * (path.x[:-2 * half] + path.x[2 * half:])
    ry = path.y[half:-half] - 0.5 * (path.y[:-2 * half] + path.y[2 * half:])
    return float(np.sqrt(np.mean(rx**2 + ry**2) / 1.5))


def smooth_recorded(path: RefPath, p: VehicleParams, v: float = 3.0,
                    spacing: float = 0.25, window_m: float | None = None) -> RefPath:
    """Smooth a rough recorded path by driving the closed-loop kinematic model along it.

    The raw geometry is first averaged over a noise-scaled window so the
    feedforward stays sane, then the simulated vehicle tracks it gently
    (soft gains, slow actuator) at speed v from the path's start pose.
    The vehicle trajectory, resampled to uniform arc length, is the
    smoothed path.  Feasibility is guaranteed by construction: curvature
    comes from the actual steering angle, so |kappa| <= tan(max_steer)/L.
    Raises SimulationError if tracking diverges beyond 5 m, which marks
    the raw path as unusable.
    """
    from . import simkit
    from .lqr import LqrWeights, build_schedule

    v = float(v)
    if v <= 0:
        raise ValueError("smoothing speed must be positive")
    if window_m is None:
        window_m = min(12.0, max(1.0, 40.0 * position_noise_estimate(path)))
    ref = _condition_for_tracking(path, window_m)
    grid = np.linspace(max(0.6, 0.5 * v), min(29.0, 1.5 * v + 1.0), 4)
    # deliberately soft loop: the vehicle must not follow what noise remains
    # after conditioning, so high control weight and a slow linear actuator
    schedule = build_schedule(grid, "kinematic", p, LqrWeights(q_diag=(1.0, 1.0), r=100.0), dt=0.02)
    cfg = simkit.ScenarioConfig(
        path=ref,
        model="kinematic",
        controller="kinematic_ff_fb",
        speed=v,
        t_end=1.2 * ref.length / v + 30.0,
        initial_offset=(0.0, 0.0),
        initial_steer=float(np.clip(math.atan(ref.kappa[0] * p.wheelbase),
                                    -p.max_steer, p.max_steer)),
        actuator=simkit.ActuatorConfig(lag_tau=0.5, delay_steps=0, rate_limit=None),
        seed=0,
    )
    log = simkit.run_scenario(cfg, schedule, params=p)
    e_max = float(np.max(np.abs(log.e_y)))
    if e_max > 5.0:
        raise SimulationError(f"smoothing run diverged: max |e_y| = {e_max:.2f} m > 5 m")

    step = max(1, int(round(spacing / (v * cfg.sim_dt) / 4)))
    xs, ys = log.x[::step], log.y[::step]
    kap = np.tan(log.delta_act[::step]) / p.wheelbase
    ds = np.hypot(np.diff(xs), np.diff(ys))
    keep = np.concatenate(([True], ds > 1e-9))
    xs, ys, kap = xs[keep], ys[keep], kap[keep]
    s_raw = np.concatenate(([0.0], np.cumsum(np.hypot(np.diff(xs), np.diff(ys)))))
    n = max(2, int(math.ceil(s_raw[-1] / spacing)) + 1)
    s = np.linspace(0.0, s_raw[-1], n)
    xr = np.interp(s, s_raw, xs)
    yr = np.interp(s, s_raw, ys)
    psi_d = np.empty(n)
    psi_d[1:-1] = np.arctan2(yr[2:] - yr[:-2], xr[2:] - xr[:-2])
    psi_d[0] = math.atan2(yr[1] - yr[0], xr[1] - xr[0])
    psi_d[-1] = math.atan2(yr[-1] - yr[-2], xr[-1] - xr[-2])
    return RefPath(s=s, x=xr, y=yr, psi=psi_d, kappa=np.interp(s, s_raw, kap),
                   kappa_bound=math.tan(p.max_steer) / p.wheelbase + 1e-9)
