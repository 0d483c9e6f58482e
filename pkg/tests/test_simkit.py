import io
import math

import numpy as np
import pytest

from steerkit import SimulationError
from steerkit.models import ControlInput, ErrorState, Pose, \
    kinematic_derivative, pfaffian_residuals
from steerkit.pathkit import PathProjection, gen_path
from steerkit.simkit import (
    ActuatorConfig, CSV_COLUMNS, ScenarioConfig, SensorConfig, SimLog,
    compute_metrics, default_sensors, dynamic_controller, kinematic_controller,
    kinematic_deriv, rk4_step, run_scenario,
)


def circle_scenario(speed=10.0, arc_deg=270.0, **kw):
    path = gen_path("circle", spacing=0.1, radius=50.0, arc_deg=arc_deg)
    return ScenarioConfig(path=path, speed=speed, t_end=kw.pop("t_end", 40.0), **kw)


def synthetic_log(e_y, speed=2.0, dt=0.01):
    n = len(e_y)
    t = np.arange(n) * dt
    zeros = np.zeros(n)
    return SimLog(
        t=t, x=speed * t, y=np.asarray(e_y, dtype=float), psi=zeros, vy=zeros,
        yaw_rate=zeros, odometer=speed * t, v_cmd=np.full(n, speed), delta_cmd=zeros,
        delta_act=zeros, saturated=zeros, s=speed * t, e_y=np.asarray(e_y, dtype=float),
        e_psi=zeros, e_y_dot=zeros, e_psi_dot=zeros, kappa_path=zeros, kappa_ack=zeros,
        kappa_diff=zeros, kappa_fused=zeros,
    )


class TestRk4:
    def test_linear_motion_exact(self, params):
        deriv = kinematic_deriv(params)
        state = rk4_step(deriv, np.array([0.0, 0.0, 0.0]), ControlInput(1.0, 0.0), 0.01)
        assert state[0] == pytest.approx(0.01, abs=1e-18)
        assert state[1] == 0.0 and state[2] == 0.0

    def circle_arc_error(self, params, dt, arc=2 * math.pi):
        # endpoint error against the analytic circular solution
        radius, v = 50.0, 10.0
        delta = math.atan(params.wheelbase / radius)
        deriv = kinematic_deriv(params)
        u = ControlInput(v, delta)
        period = arc * radius / v
        n = int(round(period / dt))
        state = np.array([0.0, 0.0, 0.0])
        for _ in range(n):
            state = rk4_step(deriv, state, u, period / n)
        xe = radius * math.sin(arc)
        ye = radius * (1.0 - math.cos(arc))
        return math.hypot(state[0] - xe, state[1] - ye)

    def test_circle_closure_fine_step(self, params):
        assert self.circle_arc_error(params, 1e-3) < 1e-6

    def test_order_four_convergence(self, params):
        # quarter arc: per-step errors cannot cancel around the loop there
        e1 = self.circle_arc_error(params, 0.1, arc=math.pi / 2)
        e2 = self.circle_arc_error(params, 0.05, arc=math.pi / 2)
        assert 12.0 < e1 / e2 < 20.0

    def test_rejects_bad_dt(self, params):
        with pytest.raises(ValueError):
            rk4_step(kinematic_deriv(params), np.zeros(3), ControlInput(1.0, 0.0), 0.0)

    def test_nonfinite_state_aborts(self, params):
        def bad(state, u):
            return np.array([float("inf"), 0.0, 0.0])

        with pytest.raises(SimulationError):
            rk4_step(bad, np.zeros(3), ControlInput(1.0, 0.0), 0.01)


class TestKinematicController:
    def test_on_path_straight(self, params, kinematic_schedule):
        u = kinematic_controller(PathProjection(0.0, 0.0, 0.0, 0.0), 5.0,
                                 kinematic_schedule, params)
        assert u.delta == 0.0

    def test_pure_feedforward_on_circle(self, params, kinematic_schedule):
        u = kinematic_controller(PathProjection(0.0, 0.0, 0.0, 0.02), 10.0,
                                 kinematic_schedule, params)
        assert u.delta == pytest.approx(math.atan(0.02 * params.wheelbase), abs=1e-15)

    def test_left_offset_steers_right(self, params, kinematic_schedule):
        k1 = kinematic_schedule.lookup(5.0).k[0]
        u = kinematic_controller(PathProjection(0.0, 0.3, 0.0, 0.0), 5.0,
                                 kinematic_schedule, params)
        assert u.delta == pytest.approx(-0.3 * k1, abs=1e-12)
        assert u.delta < 0.0

    def test_clamps_at_max_steer(self, params, kinematic_schedule):
        u = kinematic_controller(PathProjection(0.0, 10.0, 0.0, 0.0), 5.0,
                                 kinematic_schedule, params)
        assert u.delta == -params.max_steer


class TestDynamicController:
    def test_zero_error_zero_curvature(self, params, dynamic_schedule):
        u = dynamic_controller(ErrorState(0, 0, 0, 0), 10.0, dynamic_schedule, 0.0, params)
        assert u.delta == 0.0

    def test_pure_feedforward(self, params, dynamic_schedule):
        u = dynamic_controller(ErrorState(0, 0, 0, 0), 10.0, dynamic_schedule, 0.02, params)
        assert u.delta == pytest.approx(math.atan(0.054), abs=1e-15)

    def test_feedback_linearity_before_clamp(self, params, dynamic_schedule):
        e1 = ErrorState(0.1, 0.01, 0.02, 0.001)
        e2 = ErrorState(0.2, 0.02, 0.04, 0.002)
        u1 = dynamic_controller(e1, 10.0, dynamic_schedule, 0.0, params)
        u2 = dynamic_controller(e2, 10.0, dynamic_schedule, 0.0, params)
        assert u2.delta == pytest.approx(2.0 * u1.delta, abs=1e-12)

    def test_speed_guard(self, params, dynamic_schedule):
        with pytest.raises(ValueError):
            dynamic_controller(ErrorState(0, 0, 0, 0), 0.3, dynamic_schedule, 0.0, params)


class TestScenarioConfig:
    def test_dt_divisibility(self):
        path = gen_path("line", spacing=0.1, length=30.0)
        with pytest.raises(ValueError):
            ScenarioConfig(path=path, sim_dt=0.003, control_dt=0.02)

    def test_sim_dt_bound(self):
        path = gen_path("line", spacing=0.1, length=30.0)
        with pytest.raises(ValueError):
            ScenarioConfig(path=path, sim_dt=0.05, control_dt=0.02)

    def test_unknown_channel_rejected(self):
        path = gen_path("line", spacing=0.1, length=30.0)
        with pytest.raises(ValueError):
            ScenarioConfig(path=path, sensors={"gps": SensorConfig()})

    def test_piecewise_speed(self):
        path = gen_path("line", spacing=0.1, length=30.0)
        cfg = ScenarioConfig(path=path, speed=[(0.0, 2.0), (10.0, 6.0)])
        assert cfg.speed_at(0.0) == 2.0
        assert cfg.speed_at(5.0) == pytest.approx(4.0)
        assert cfg.speed_at(20.0) == 6.0


class TestRunScenario:
    def test_straight_equilibrium_is_exact(self, params, kinematic_schedule):
        path = gen_path("line", spacing=0.1, length=80.0)
        cfg = ScenarioConfig(path=path, speed=8.0, t_end=12.0)
        log = run_scenario(cfg, kinematic_schedule, params=params)
        assert np.max(np.abs(log.e_y)) < 1e-9
        assert log.stop_reason == "path_end"

    def test_determinism_bit_identical(self, params, kinematic_schedule):
        path = gen_path("circle", spacing=0.1, radius=50.0, arc_deg=90.0)
        sensors = {"lateral": SensorConfig(noise_std=0.02),
                   "yaw_rate": SensorConfig(noise_std=0.01, rate_hz=200.0)}
        cfg = ScenarioConfig(path=path, speed=10.0, t_end=4.0, sensors=sensors, seed=99)
        b1, b2 = io.StringIO(), io.StringIO()
        run_scenario(cfg, kinematic_schedule, params=params).to_csv(b1)
        run_scenario(cfg, kinematic_schedule, params=params).to_csv(b2)
        assert b1.getvalue() == b2.getvalue()

    def test_seed_changes_noise(self, params, kinematic_schedule):
        path = gen_path("circle", spacing=0.1, radius=50.0, arc_deg=90.0)
        sensors = {"lateral": SensorConfig(noise_std=0.02)}
        log1 = run_scenario(ScenarioConfig(path=path, speed=10.0, t_end=3.0,
                                           sensors=sensors, seed=1),
                            kinematic_schedule, params=params)
        log2 = run_scenario(ScenarioConfig(path=path, speed=10.0, t_end=3.0,
                                           sensors=sensors, seed=2),
                            kinematic_schedule, params=params)
        assert not np.array_equal(log1.delta_cmd, log2.delta_cmd)

    def test_pfaffian_residuals_along_log(self, params, kinematic_schedule):
        cfg = circle_scenario(speed=10.0, arc_deg=90.0, t_end=8.0)
        log = run_scenario(cfg, kinematic_schedule, params=params)
        for i in range(0, len(log), 500):
            pose = Pose(log.x[i], log.y[i], log.psi[i])
            u = ControlInput(log.v_cmd[i], log.delta_act[i])
            vel = kinematic_derivative(pose, u, params)
            r_rear, r_front = pfaffian_residuals(pose, vel, u, params)
            assert abs(r_rear) < 1e-12 and abs(r_front) < 1e-12

    def test_speed_consistency(self, params, kinematic_schedule):
        cfg = circle_scenario(speed=7.0, arc_deg=90.0, t_end=8.0)
        log = run_scenario(cfg, kinematic_schedule, params=params)
        for i in range(0, len(log), 700):
            pose = Pose(log.x[i], log.y[i], log.psi[i])
            vel = kinematic_derivative(pose, ControlInput(log.v_cmd[i], log.delta_act[i]), params)
            assert math.hypot(vel[0], vel[1]) == pytest.approx(log.v_cmd[i], abs=1e-9)

    def test_vehicle_lost_raises(self, params):
        # negligible feedback plus a heading error pointing away from the
        # path walks the vehicle beyond the projection horizon
        from steerkit.lqr import GainSchedule, GainSet

        limp = GainSchedule(
            speeds=np.array([1.0, 10.0]),
            gains=[GainSet(k=np.array([1e-9, 1e-9]), v=v, dt=0.02, model="kinematic",
                           closed_loop_radius=0.999999) for v in (1.0, 10.0)],
            dt=0.02, model="kinematic", params=params)
        path = gen_path("line", spacing=0.1, length=400.0)
        cfg = ScenarioConfig(path=path, speed=10.0, t_end=20.0, initial_offset=(0.0, 1.5))
        with pytest.raises(SimulationError):
            run_scenario(cfg, limp, params=params)

    def test_gain_dimension_mismatch(self, params, kinematic_schedule, dynamic_schedule):
        path = gen_path("line", spacing=0.1, length=30.0)
        with pytest.raises(ValueError):
            run_scenario(ScenarioConfig(path=path, controller="dynamic_lqr"),
                         kinematic_schedule, params=params)
        with pytest.raises(ValueError):
            run_scenario(ScenarioConfig(path=path), dynamic_schedule, params=params)

    def test_dynamic_model_tracks_circle(self, params, dynamic_schedule):
        path = gen_path("circle", spacing=0.1, radius=50.0, arc_deg=120.0)
        cfg = ScenarioConfig(path=path, model="dynamic", controller="dynamic_lqr",
                             speed=10.0, t_end=20.0)
        log = run_scenario(cfg, dynamic_schedule, params=params)
        m = compute_metrics(log)
        assert m.max_abs_e_y < 0.15
        assert log.stop_reason == "path_end"

    def test_saturation_flagged(self, params, kinematic_schedule):
        path = gen_path("line", spacing=0.1, length=60.0)
        cfg = ScenarioConfig(path=path, speed=5.0, t_end=10.0, initial_offset=(2.0, 0.0))
        log = run_scenario(cfg, kinematic_schedule, params=params)
        assert np.any(log.saturated > 0)
        assert np.max(np.abs(log.delta_cmd)) <= params.max_steer + 1e-12

    def test_steer_quantization_visible_in_ack_channel(self, params, kinematic_schedule):
        cfg = circle_scenario(speed=10.0, arc_deg=90.0, t_end=8.0)
        log = run_scenario(cfg, kinematic_schedule, params=params)
        q = math.radians(0.1) / 16.0
        steer_meas = np.arctan(log.kappa_ack * params.wheelbase)
        steps = steer_meas / q
        assert np.max(np.abs(steps - np.round(steps))) < 1e-6

    def test_csv_columns_contract(self, params, kinematic_schedule):
        cfg = circle_scenario(speed=10.0, arc_deg=30.0, t_end=3.0)
        log = run_scenario(cfg, kinematic_schedule, params=params)
        buf = io.StringIO()
        log.to_csv(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0].startswith("#")
        assert lines[1] == ",".join(CSV_COLUMNS)
        assert len(lines) == 2 + len(log)


class TestMetrics:
    def test_constant_error(self):
        m = compute_metrics(synthetic_log(np.full(100, 0.03)))
        assert m.max_abs_e_y == pytest.approx(0.03)
        assert m.rms_e_y == pytest.approx(0.03)
        assert m.settled and m.settle_distance == 0.0

    def test_settle_distance_definition(self):
        # decays through the 0.05 band at a known odometer reading
        e = np.concatenate([np.linspace(1.0, 0.049, 621), np.full(200, 0.049)])
        log = synthetic_log(e, speed=2.0, dt=0.01)
        m = compute_metrics(log)
        # first in-band index is 620 -> odometer = 2.0 * 6.20
        assert m.settled
        assert m.settle_distance == pytest.approx(12.4, abs=0.05)

    def test_unsettled_flag(self):
        m = compute_metrics(synthetic_log(np.full(50, 0.2)))
        assert not m.settled
        assert m.settle_distance is None
        assert m.post_max_abs_e_y is None

    def test_refinement_invariance(self, params, kinematic_schedule):
        path = gen_path("circle", spacing=0.1, radius=50.0, arc_deg=120.0)
        logs = [run_scenario(ScenarioConfig(path=path, speed=10.0, t_end=12.0, sim_dt=dt),
                             kinematic_schedule, params=params)
                for dt in (0.001, 0.0005)]
        m1, m2 = (compute_metrics(lg) for lg in logs)
        assert m1.max_abs_e_y == pytest.approx(m2.max_abs_e_y, rel=0.02)
        assert m1.rms_e_y == pytest.approx(m2.rms_e_y, rel=0.02)

    def test_empty_log_rejected(self):
        with pytest.raises(ValueError):
            compute_metrics(synthetic_log(np.array([])))

    def test_to_dict_shape(self):
        d = compute_metrics(synthetic_log(np.full(10, 0.01))).to_dict()
        assert set(d) == {"max_abs_e_y", "rms_e_y", "max_abs_e_psi", "settle_distance",
                          "settled", "post_transient"}


class TestDelayMarginCrossCheck:
    def test_instability_onset_matches_phase_margin_estimate(self, params, kinematic_schedule):
        # time-delay margin predicted from the loop's phase margin agrees
        # with the simulated instability onset within a factor of two
        from steerkit.lqr import discrete_error_model
        from steerkit.margins import compute_margins, default_grid, loop_response

        v = 10.0
        gs = kinematic_schedule.lookup(v)
        sysd = discrete_error_model("kinematic", v, params, 0.02)
        rep = compute_margins(loop_response(sysd, gs, default_grid(0.02)))
        t_pm = math.radians(rep.pm) / rep.pm_freq

        path = gen_path("line", spacing=0.1, length=260.0)

        def unstable(delay_steps):
            cfg = ScenarioConfig(
                path=path, speed=v, t_end=22.0, sim_dt=0.002, initial_offset=(0.3, 0.0),
                actuator=ActuatorConfig(lag_tau=1e-3, delay_steps=delay_steps,
                                        rate_limit=None))
            try:
                log = run_scenario(cfg, kinematic_schedule, params=params)
            except SimulationError:
                return True
            tail = np.abs(log.e_y[len(log) // 2:])
            return bool(np.max(tail) > 1.0)

        onset = None
        for steps in range(1, 26):
            if unstable(steps):
                onset = steps * 0.02
                break
        assert onset is not None, "no instability found within the sweep"
        assert 0.5 * t_pm <= onset <= 2.0 * t_pm


class TestDefaultSensors:
    def test_channels(self):
        s = default_sensors()
        assert set(s) == {"lateral", "heading", "yaw_rate", "steer", "speed"}
        assert s["yaw_rate"].rate_hz == 200.0
        assert s["steer"].quantization_step == pytest.approx(math.radians(0.1) / 16.0)

    def test_sensor_validation(self):
        with pytest.raises(ValueError):
            SensorConfig(noise_std=-1.0)
        with pytest.raises(ValueError):
            SensorConfig(rate_hz=0.0)
        with pytest.raises(ValueError):
            ActuatorConfig(lag_tau=-0.1)
