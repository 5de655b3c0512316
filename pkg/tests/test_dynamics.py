import numpy as np
import pytest

from quadsim.dynamics import (
    ExternalWrench,
    QuadParams,
    QuadState,
    SimulationDiverged,
    derivative,
    hover_speed,
    rotor_wrench,
    step,
)
from quadsim.quat import quat_from_axis_angle


def make_state(params, **kw):
    s = QuadState.hover(1, params)
    for key, val in kw.items():
        getattr(s, key)[0] = val
    return s


def run_steps(state, cmd, params, dt, n, ext=None):
    ext = ext or ExternalWrench.zero(state.n)
    for _ in range(n):
        state = step(state, cmd, params, ext, dt)
    return state


class TestRotorWrench:
    def test_symmetric_hover_cancels_torque(self):
        p = QuadParams()
        omega_h = hover_speed(p)
        f, tau = rotor_wrench(np.full((1, 4), omega_h), p)
        assert np.allclose(f[0], [0, 0, 4 * p.thrust_coef * omega_h**2])
        assert np.allclose(tau[0], 0.0, atol=1e-12)

    def test_zero_speed(self):
        f, tau = rotor_wrench(np.zeros((1, 4)), QuadParams())
        assert np.all(f == 0) and np.all(tau == 0)

    def test_single_rotor_cross_product(self):
        # oracle: expand tau = sigma*c_d*w^2 z + r x (0,0,c_l*w^2) by hand
        p = QuadParams()
        w = 700.0
        x1, y1 = p.rotor_pos[0, 0], p.rotor_pos[0, 1]
        thrust = p.thrust_coef * w**2
        expected = np.array(
            [y1 * thrust, -x1 * thrust, p.spin_sign[0] * p.drag_torque_coef * w**2]
        )
        _, tau = rotor_wrench(np.array([[w, 0.0, 0.0, 0.0]]), p)
        assert np.allclose(tau[0], expected, rtol=1e-12)

    def test_homogeneous_degree_two(self):
        p = QuadParams()
        rng = np.random.default_rng(1)
        omega = rng.uniform(0, 1000, size=(3, 4))
        f1, t1 = rotor_wrench(omega, p)
        f2, t2 = rotor_wrench(2.0 * omega, p)
        assert np.allclose(f2, 4.0 * f1, rtol=1e-12)
        assert np.allclose(t2, 4.0 * t1, rtol=1e-12)


class TestDerivative:
    def test_hover_equilibrium(self):
        p = QuadParams()
        s = QuadState.hover(1, p)
        d = derivative(s, s.rotor_speed, p, ExternalWrench.zero(1))
        assert np.linalg.norm(d.d_vel[0]) < 1e-12

    def test_free_fall(self):
        p = QuadParams()
        s = make_state(p, rotor_speed=np.zeros(4))
        d = derivative(s, np.zeros((1, 4)), p, ExternalWrench.zero(1))
        assert np.allclose(d.d_vel[0], p.gravity)

    def test_pure_yaw_spin_is_torque_free(self):
        # oracle: omega x (J omega) = 0 when omega = (0,0,r) and Ix = Iy
        p = QuadParams()
        assert p.inertia[0] == p.inertia[1]
        s = make_state(p, rotor_speed=np.zeros(4), omega_b=np.array([0, 0, 2.0]))
        d = derivative(s, np.zeros((1, 4)), p, ExternalWrench.zero(1))
        assert np.allclose(d.d_omega[0], 0.0, atol=1e-15)

    def test_external_force(self):
        p = QuadParams()
        s = make_state(p, rotor_speed=np.zeros(4))
        ext = ExternalWrench(np.array([[p.mass, 0.0, 0.0]]), np.zeros((1, 3)))
        d = derivative(s, np.zeros((1, 4)), p, ext)
        assert np.allclose(d.d_vel[0], [1.0, 0.0, -9.81] + np.array([0, 0, 9.81]) * 0)
        assert d.d_vel[0][0] == pytest.approx(1.0)


class TestStep:
    def test_gravity_only_velocity(self):
        p = QuadParams()
        s = make_state(p, rotor_speed=np.zeros(4))
        s = run_steps(s, np.zeros((1, 4)), p, 0.01, 100)
        assert np.allclose(s.vel_w[0], [0, 0, -9.81], atol=1e-9)

    def test_gravity_only_position_closed_form(self):
        p = QuadParams()
        v0 = np.array([0.3, -0.2, 0.5])
        s = make_state(p, rotor_speed=np.zeros(4), vel_w=v0)
        p0 = s.pos_w[0].copy()
        t = 1.0
        s = run_steps(s, np.zeros((1, 4)), p, 0.01, 100)
        expected = p0 + v0 * t + 0.5 * p.gravity * t**2
        assert np.allclose(s.pos_w[0], expected, atol=1e-9)

    def test_constant_yaw_rate_quaternion_exponential(self):
        # oracle: closed-form q(t) = exp(t/2 * (0, omega)) for constant omega
        p = QuadParams()
        s = make_state(p, rotor_speed=np.zeros(4), omega_b=np.array([0, 0, np.pi]))
        s = run_steps(s, np.zeros((1, 4)), p, 0.01, 100)
        expected = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), np.pi * 1.0)
        assert np.allclose(s.quat_wb[0], expected, atol=1e-6)

    def test_motor_lag_63_percent_at_time_constant(self):
        # oracle: first-order lag speed(t) = c (1 - exp(-gain * t))
        p = QuadParams()
        s = make_state(p, rotor_speed=np.zeros(4))
        cmd = np.full((1, 4), 0.5 * p.rotor_speed_max)
        n = int(round(1.0 / p.motor_rate_gain / 0.01))
        s = run_steps(s, cmd, p, 0.01, n)
        frac = s.rotor_speed[0, 0] / cmd[0, 0]
        assert frac == pytest.approx(1.0 - np.exp(-1.0), rel=0.01)

    def test_motor_lag_full_curve(self):
        p = QuadParams()
        s = make_state(p, rotor_speed=np.zeros(4))
        cmd = np.full((1, 4), 1000.0)
        dt = 0.01
        for k in range(1, 50):
            s = step(s, cmd, p, ExternalWrench.zero(1), dt)
            expected = 1000.0 * (1.0 - np.exp(-p.motor_rate_gain * k * dt))
            assert s.rotor_speed[0, 0] == pytest.approx(expected, rel=1e-4)

    def test_rotor_speed_clamped(self):
        p = QuadParams()
        s = make_state(p, rotor_speed=np.full(4, p.rotor_speed_max))
        s = run_steps(s, np.full((1, 4), p.rotor_speed_max * 2), p, 0.01, 50)
        assert np.all(s.rotor_speed <= p.rotor_speed_max)

    def test_quaternion_norm_maintained(self):
        p = QuadParams()
        s = make_state(p, omega_b=np.array([1.0, -2.0, 0.5]))
        s = run_steps(s, s.rotor_speed.copy(), p, 0.01, 2000)
        assert abs(np.linalg.norm(s.quat_wb[0]) - 1.0) < 1e-9

    def test_deterministic(self):
        p = QuadParams()
        rng = np.random.default_rng(5)
        s0 = make_state(
            p,
            vel_w=rng.normal(size=3),
            omega_b=rng.normal(size=3),
        )
        cmd = np.full((1, 4), 900.0)
        a = run_steps(s0.copy(), cmd, p, 0.01, 200)
        b = run_steps(s0.copy(), cmd, p, 0.01, 200)
        for field in ("pos_w", "quat_wb", "vel_w", "omega_b", "rotor_speed"):
            assert np.array_equal(getattr(a, field), getattr(b, field))

    def test_rejects_bad_dt(self):
        p = QuadParams()
        s = QuadState.hover(1, p)
        with pytest.raises(ValueError):
            step(s, s.rotor_speed, p, ExternalWrench.zero(1), 0.0)

    def test_reports_divergence(self):
        p = QuadParams()
        s = QuadState.hover(1, p)
        s.vel_w[0, 0] = np.nan
        with pytest.raises(SimulationDiverged):
            step(s, s.rotor_speed, p, ExternalWrench.zero(1), 0.01)

    def test_linear_body_drag(self):
        p = QuadParams(body_drag=np.array([0.2, 0.2, 0.2]))
        s = make_state(p, rotor_speed=np.zeros(4), vel_w=np.array([2.0, 0, 0]))
        d = derivative(s, np.zeros((1, 4)), p, ExternalWrench.zero(1))
        assert d.d_vel[0, 0] == pytest.approx(-0.2 * 2.0 / p.mass)


class TestEnergyConservation:
    def rotational_energy(self, state, params):
        w = state.omega_b[0]
        return 0.5 * float(w @ (params.inertia * w))

    @pytest.mark.parametrize("dt,bound", [(1e-3, 1e-6), (0.01, 1e-4)])
    def test_torque_free_energy_drift(self, dt, bound):
        p = QuadParams(gravity=np.zeros(3))
        s = make_state(p, rotor_speed=np.zeros(4), omega_b=np.array([1.0, 2.0, 3.0]))
        e0 = self.rotational_energy(s, p)
        s = run_steps(s, np.zeros((1, 4)), p, dt, int(round(10.0 / dt)))
        drift = abs(self.rotational_energy(s, p) - e0) / e0
        assert drift < bound


class TestHoverSpeed:
    def test_hover_lift_matches_weight(self):
        p = QuadParams()
        omega_h = hover_speed(p)
        f, _ = rotor_wrench(np.full((1, 4), omega_h), p)
        assert f[0, 2] == pytest.approx(p.mass * 9.81, abs=1e-12)

    def test_scaling_law(self):
        p1 = QuadParams()
        p2 = QuadParams(thrust_coef=2 * p1.thrust_coef)
        assert hover_speed(p2) == pytest.approx(hover_speed(p1) / np.sqrt(2), rel=1e-12)

    def test_consistent_with_derivative(self):
        p = QuadParams()
        s = QuadState.hover(1, p)
        s.rotor_speed[:] = hover_speed(p)
        d = derivative(s, s.rotor_speed, p, ExternalWrench.zero(1))
        assert np.linalg.norm(d.d_vel) < 1e-12


class TestParamsValidation:
    def test_rejects_bad_mass(self):
        with pytest.raises(ValueError):
            QuadParams(mass=-1.0)

    def test_rejects_unbalanced_spin(self):
        with pytest.raises(ValueError):
            QuadParams(spin_sign=np.array([1.0, 1.0, 1.0, -1.0]))

    def test_rejects_bad_inertia(self):
        with pytest.raises(ValueError):
            QuadParams(inertia=np.array([0.0, 1e-3, 1e-3]))
