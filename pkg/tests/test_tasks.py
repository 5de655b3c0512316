import numpy as np
import pytest

from quadsim.dynamics import QuadParams, QuadState
from quadsim.quat import quat_from_axis_angle, quat_from_yaw
from quadsim.tasks import (
    ArenaLimits,
    AvoidGains,
    EpisodeOutcome,
    HitGains,
    HoverGains,
    PlanGains,
    TaskKind,
    TrackGains,
    lemniscate,
    lemniscate_lap_length,
    lemniscate_rate_for_speed,
    reward_avoid,
    reward_hit,
    reward_hover,
    reward_plan,
    reward_track,
    spawn_balloon,
    spawn_projectile,
    termination,
    trajectory_playback,
)


def hover_state(n=1, pos=(0.0, 0.0, 1.0)):
    return QuadState.hover(n, QuadParams(), pos=pos)


class TestLemniscate:
    def test_origin_at_t0(self):
        assert np.allclose(lemniscate(0.0), [0.0, 0.0, 1.0])

    def test_quarter_period(self):
        out = lemniscate(np.pi / 2, 1.0)
        assert np.allclose(out, [3.0, 0.0, 1.0], atol=1e-12)

    def test_max_x_is_three_by_grid_scan(self):
        # oracle: brute-force scan of one full lap
        t = np.linspace(0, 2 * np.pi, 400_001)
        pts = lemniscate(t, 1.0)
        assert np.abs(pts[:, 0]).max() == pytest.approx(3.0, abs=1e-6)

    def test_z_constant(self):
        t = np.linspace(0, 20, 500)
        assert np.allclose(lemniscate(t, 0.7)[:, 2], 1.0)

    def test_rate_calibration_gives_requested_mean_speed(self):
        # oracle: numerically integrate path speed at the calibrated rate
        rate = lemniscate_rate_for_speed(1.6)
        t = np.linspace(0, 2 * np.pi / rate, 200_001)
        pts = lemniscate(t, rate)
        length = np.linalg.norm(np.diff(pts, axis=0), axis=-1).sum()
        mean_speed = length / (2 * np.pi / rate)
        assert mean_speed == pytest.approx(1.6, rel=1e-4)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            lemniscate(0.0, 0.0)


class TestPlayback:
    def test_disabled_identity(self):
        assert trajectory_playback(5.0, 99.0, enabled=False) == 5.0

    def test_constant_lag(self):
        assert trajectory_playback(2.0, 0.3) == pytest.approx(1.7)

    def test_negative_offset_clipped(self):
        assert trajectory_playback(2.0, -0.4) == pytest.approx(2.0)

    def test_rectified_normal_mean(self):
        # oracle: E[max(0,X)] = mu*Phi(mu/sigma) + sigma*phi(mu/sigma)
        mu, sigma, n = 0.3, 0.5, 100_000
        rng = np.random.default_rng(0)
        offsets = rng.normal(mu, sigma, n)
        lags = 10.0 - trajectory_playback(np.full(n, 10.0), offsets)
        from math import erf, exp, pi, sqrt

        cdf = 0.5 * (1 + erf(mu / sigma / sqrt(2)))
        pdf = exp(-0.5 * (mu / sigma) ** 2) / sqrt(2 * pi)
        expected = mu * cdf + sigma * pdf
        assert lags.mean() == pytest.approx(expected, rel=0.02)


class TestRewardHover:
    def setup_method(self):
        self.g = HoverGains()
        self.kw = dict(
            target_pos=np.array([0.0, 0.0, 1.0]),
            target_yaw=0.0,
            hover_throttle=1.0 / 9.0,
            gains=self.g,
        )

    def eval(self, state, action=None, prev=None, rotor_norm=None, throttle=None,
             learns_thrust=True, **over):
        n = state.n
        kw = dict(self.kw, **over)
        return reward_hover(
            state,
            kw["target_pos"],
            kw["target_yaw"],
            np.zeros((n, 4)) if action is None else action,
            np.zeros((n, 4)) if prev is None else prev,
            np.full((n, 4), 1.0 / 3.0) if rotor_norm is None else rotor_norm,
            np.full(n, kw["hover_throttle"]) if throttle is None else throttle,
            kw["hover_throttle"],
            kw["gains"],
            learns_thrust=learns_thrust,
        )

    def test_perfect_hover_term_values(self):
        g = self.g
        total, terms = self.eval(hover_state())
        rotor = 1.0 / 3.0
        assert terms["smooth"][0] == pytest.approx(g.k_smooth)
        assert terms["effort"][0] == pytest.approx(g.k_effort * 4 * (1 - rotor))
        assert terms["pos"][0] == pytest.approx(g.k_pos)
        assert terms["throttle"][0] == pytest.approx(g.k_throttle)
        assert terms["pos_x_upright"][0] == pytest.approx(g.k_pos * g.k_upright * 4)
        assert terms["pos_x_spin"][0] == pytest.approx(g.k_pos * g.k_spin)
        assert terms["pos_x_heading"][0] == pytest.approx(g.k_pos * g.k_heading)
        assert terms["pos_x_vel_dir"][0] == pytest.approx(g.k_pos * g.k_vel_dir)
        expected = (
            g.k_smooth
            + g.k_effort * 4 * (1 - rotor)
            + g.k_pos
            + g.k_throttle
            + g.k_pos * (g.k_upright * 4 + g.k_spin + g.k_heading + g.k_vel_dir)
        )
        assert total[0] == pytest.approx(expected)

    def test_unit_error_position_half(self):
        g = HoverGains(k_pos=1.0, k_pos_width=1.0)
        total, terms = self.eval(hover_state(pos=(1.0, 0.0, 1.0)), gains=g)
        assert terms["pos"][0] == pytest.approx(0.5)

    def test_vel_dir_ordering_flips_with_direction(self):
        # oracle: evaluate both signs of the velocity/target dot product
        toward = hover_state(pos=(-1.0, 0.0, 1.0))
        toward.vel_w[0] = [1.0, 0.0, 0.0]
        away = hover_state(pos=(-1.0, 0.0, 1.0))
        away.vel_w[0] = [-1.0, 0.0, 0.0]
        _, t_toward = self.eval(toward)
        _, t_away = self.eval(away)
        assert t_toward["pos_x_vel_dir"][0] != t_away["pos_x_vel_dir"][0]
        # d points from target to vehicle, so approaching earns more
        assert t_toward["pos_x_vel_dir"][0] > t_away["pos_x_vel_dir"][0]

    def test_throttle_zero_without_thrust_learning(self):
        _, terms = self.eval(hover_state(), learns_thrust=False)
        assert terms["throttle"][0] == 0.0

    def test_breakdown_sums_to_total(self):
        rng = np.random.default_rng(2)
        state = hover_state(4)
        state.pos_w[:] = rng.normal(size=(4, 3))
        state.vel_w[:] = rng.normal(size=(4, 3))
        total, terms = self.eval(
            state,
            action=rng.normal(size=(4, 4)),
            prev=rng.normal(size=(4, 4)),
            rotor_norm=rng.uniform(0, 1, (4, 4)),
            throttle=rng.uniform(0, 1, 4),
        )
        assert np.allclose(total, sum(terms.values()), atol=1e-12)

    def test_pos_strictly_decreasing_in_error(self):
        dists = np.linspace(0, 5, 200)
        vals = []
        for d in dists:
            _, terms = self.eval(hover_state(pos=(d, 0.0, 1.0)))
            vals.append(terms["pos"][0])
        assert np.all(np.diff(vals) < 0)

    def test_smooth_bounded(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a, b = rng.normal(size=(2, 1, 4)) * 5
            _, terms = self.eval(hover_state(), action=a, prev=b)
            assert 0.0 < terms["smooth"][0] <= self.g.k_smooth


class TestRewardTrack:
    def test_on_trajectory_dist_is_k(self):
        g = TrackGains()
        state = hover_state(pos=(0.0, 0.0, 1.0))
        total, terms = reward_track(
            state, np.array([0.0, 0.0, 1.0]), 0.0,
            np.zeros((1, 4)), np.zeros((1, 4)), np.full((1, 4), 0.3),
            np.full(1, 1 / 9), 1 / 9, g,
        )
        assert terms["dist"][0] == pytest.approx(g.k_dist)

    def test_monotone_decay_with_distance(self):
        g = TrackGains()
        vals = []
        for d in np.linspace(0, 4, 100):
            state = hover_state(pos=(d, 0.0, 1.0))
            _, terms = reward_track(
                state, np.array([0.0, 0.0, 1.0]), 0.0,
                np.zeros((1, 4)), np.zeros((1, 4)), np.full((1, 4), 0.3),
                np.full(1, 1 / 9), 1 / 9, g,
            )
            vals.append(terms["dist"][0])
        assert np.all(np.diff(vals) < 0)

    def test_breakdown_sums(self):
        g = TrackGains()
        state = hover_state(pos=(0.7, -0.3, 1.4))
        state.omega_b[0] = [0.1, 0.2, -0.4]
        total, terms = reward_track(
            state, np.array([0.0, 0.0, 1.0]), 0.5,
            np.full((1, 4), 0.2), np.zeros((1, 4)), np.full((1, 4), 0.3),
            np.full(1, 0.2), 1 / 9, g,
        )
        assert total[0] == pytest.approx(sum(v[0] for v in terms.values()), abs=1e-12)


class TestRewardHit:
    def setup_method(self):
        self.g = HitGains()

    def eval(self, state, prev_pos, balloon, hit=False, action=None):
        n = state.n
        a = np.zeros((n, 4)) if action is None else action
        return reward_hit(state, prev_pos, balloon, a, np.zeros((n, 4)),
                          self.g, np.full(n, hit))

    def test_no_motion_no_guidance(self):
        s = hover_state()
        _, terms = self.eval(s, s.pos_w.copy(), np.array([3.0, 0.0, 1.0]))
        assert terms["guidance"][0] == pytest.approx(0.0)

    def test_one_meter_progress(self):
        g = HitGains(k_guidance=1.0)
        s = hover_state(pos=(1.0, 0.0, 1.0))
        prev = np.array([[0.0, 0.0, 1.0]])
        _, terms = reward_hit(s, prev, np.array([5.0, 0.0, 1.0]),
                              np.zeros((1, 4)), np.zeros((1, 4)), g,
                              np.array([False]))
        assert terms["guidance"][0] == pytest.approx(1.0)

    def test_hit_bonus_exact(self):
        s = hover_state()
        _, no_hit = self.eval(s, s.pos_w.copy(), np.array([3.0, 0.0, 1.0]), hit=False)
        _, hit = self.eval(s, s.pos_w.copy(), np.array([3.0, 0.0, 1.0]), hit=True)
        assert hit["hit"][0] - no_hit["hit"][0] == pytest.approx(self.g.hit_bonus)

    def test_guidance_telescopes(self):
        # oracle: sum of per-step differentials telescopes to total progress
        g = HitGains(k_guidance=1.0)
        balloon = np.array([4.0, 1.0, 2.0])
        rng = np.random.default_rng(0)
        path = np.cumsum(rng.normal(0, 0.2, (20, 3)), axis=0) + np.array([0, 0, 1.0])
        total_guidance = 0.0
        for k in range(1, 20):
            s = hover_state(pos=path[k])
            _, terms = reward_hit(s, path[k - 1][None, :], balloon,
                                  np.zeros((1, 4)), np.zeros((1, 4)), g,
                                  np.array([False]))
            total_guidance += terms["guidance"][0]
        expected = np.linalg.norm(balloon - path[0]) - np.linalg.norm(balloon - path[-1])
        assert total_guidance == pytest.approx(expected, abs=1e-12)


class TestRewardAvoid:
    def setup_method(self):
        self.g = AvoidGains()

    def eval(self, state, hit=False):
        from quadsim.frames import euler_zyx

        n = state.n
        return reward_avoid(
            state,
            np.array([0.0, 0.0, 1.0]),
            np.zeros(3),
            euler_zyx(state.quat_wb),
            np.zeros((n, 4)),
            np.zeros((n, 4)),
            np.full(n, 1 / 9),
            1 / 9,
            self.g,
            np.full(n, hit),
        )

    def test_at_pose_target(self):
        _, terms = self.eval(hover_state())
        assert terms["pose"][0] == pytest.approx(self.g.k_pose)

    def test_alive_bonus(self):
        _, terms = self.eval(hover_state(), hit=False)
        assert terms["alive"][0] == pytest.approx(self.g.alive_bonus)

    def test_hit_penalty_negative(self):
        assert self.g.hit_penalty < 0
        _, terms = self.eval(hover_state(), hit=True)
        assert terms["alive"][0] == pytest.approx(self.g.hit_penalty)

    def test_pose_decays_with_orientation_error(self):
        state = hover_state()
        _, aligned = self.eval(state)
        state.quat_wb[0] = quat_from_yaw(1.0)
        _, yawed = self.eval(state)
        assert yawed["pose"][0] < aligned["pose"][0]


class TestRewardPlan:
    def setup_method(self):
        self.g = PlanGains()

    def eval(self, state, x_esdf=4.5, goal_reached=False, vx=0.0, prev_pos=None):
        n = state.n
        return reward_plan(
            state,
            state.pos_w.copy() if prev_pos is None else prev_pos,
            np.array([7.0, 0.0, 1.0]),
            np.full(n, x_esdf),
            np.zeros((n, 4)),
            np.zeros((n, 4)),
            np.full(n, 1 / 9),
            1 / 9,
            np.zeros((n, 3)),
            np.full(n, vx),
            self.g,
            np.full(n, goal_reached),
        )

    def test_esdf_zero_at_contact(self):
        g = self.g
        state = hover_state()
        _, terms = self.eval(state, x_esdf=0.0, prev_pos=state.pos_w + [[0.1, 0, 0]])
        # guidance_x_esdf = guidance * k_esdf*(1 - e^0) = 0
        assert terms["guidance_x_esdf"][0] == pytest.approx(0.0)

    def test_esdf_monotone_increasing(self):
        # positive guidance so the product preserves esdf ordering
        state = hover_state()
        prev = state.pos_w - np.array([[0.5, 0.0, 0.0]])
        vals = []
        for x in np.linspace(0, 4.5, 100):
            _, terms = self.eval(state, x_esdf=x, prev_pos=prev)
            vals.append(terms["guidance_x_esdf"][0])
        assert np.all(np.diff(vals) > 0)

    def test_speed_peak_at_target(self):
        state = hover_state()
        _, at_target = self.eval(state, vx=self.g.speed_target)
        assert at_target["speed"][0] == pytest.approx(0.0, abs=1e-12)
        for vx in (0.0, self.g.speed_target / 2, self.g.speed_target * 2):
            if vx == self.g.speed_target:
                continue
            _, terms = self.eval(state, vx=vx)
            assert terms["speed"][0] < 0.0

    def test_height_zero_inside_band(self):
        for z in np.linspace(self.g.height_min, self.g.height_max, 20):
            state = hover_state(pos=(0.0, 0.0, z))
            _, terms = self.eval(state)
            assert terms["height"][0] == pytest.approx(0.0)

    def test_height_penalty_outside_band(self):
        low = hover_state(pos=(0.0, 0.0, self.g.height_min - 0.3))
        high = hover_state(pos=(0.0, 0.0, self.g.height_max + 0.4))
        _, t_low = self.eval(low)
        _, t_high = self.eval(high)
        assert t_low["height"][0] == pytest.approx(-0.3)
        assert t_high["height"][0] == pytest.approx(-0.4)

    def test_alive_gated_by_distance(self):
        state = hover_state()
        prev = state.pos_w - np.array([[0.5, 0.0, 0.0]])
        _, near = self.eval(state, x_esdf=self.g.crash_distance / 2, prev_pos=prev)
        _, far = self.eval(state, x_esdf=1.0, prev_pos=prev)
        assert near["guidance_x_alive"][0] == pytest.approx(0.0)
        assert far["guidance_x_alive"][0] > 0.0

    def test_goal_bonus(self):
        state = hover_state()
        _, no_goal = self.eval(state, goal_reached=False)
        _, goal = self.eval(state, goal_reached=True)
        assert goal["goal"][0] - no_goal["goal"][0] == pytest.approx(self.g.goal_bonus)

    def test_breakdown_sums(self):
        state = hover_state(pos=(0.3, 0.2, 1.1))
        total, terms = self.eval(state, x_esdf=1.3, vx=0.9)
        assert total[0] == pytest.approx(sum(v[0] for v in terms.values()), abs=1e-12)


class TestSpawners:
    def test_balloon_inside_bounds(self):
        rng = np.random.default_rng(0)
        lo, hi = np.array([2.0, -2.0, 1.0]), np.array([5.0, 2.0, 2.5])
        for _ in range(200):
            b = spawn_balloon(rng, (lo, hi))
            assert np.all(b >= lo) and np.all(b <= hi)

    def test_projectile_speed_in_range(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            _, vel = spawn_projectile(rng, np.array([0.0, 0.0, 1.5]))
            assert 4.0 - 1e-9 <= np.linalg.norm(vel) <= 8.0 + 1e-9

    def test_zero_noise_projectile_passes_through_aim(self):
        # oracle: closed-form ballistic flight p(t) = p0 + v t + g t^2 / 2
        rng = np.random.default_rng(2)
        aim = np.array([0.3, -0.2, 1.5])
        for _ in range(50):
            pos, vel = spawn_projectile(rng, aim, direction_noise=0.0)
            t = np.linspace(0, 4.0, 80001)[:, None]
            traj = pos + vel * t + 0.5 * np.array([0, 0, -9.81]) * t**2
            miss = np.linalg.norm(traj - aim, axis=-1).min()
            assert miss < 1e-3

    def test_projectile_spawn_distance(self):
        rng = np.random.default_rng(3)
        aim = np.array([0.0, 0.0, 1.5])
        pos, _ = spawn_projectile(rng, aim, distance=6.0)
        horizontal = np.linalg.norm((pos - aim)[:2])
        assert horizontal == pytest.approx(6.0)


class TestTermination:
    def setup_method(self):
        self.limits = ArenaLimits()

    def term(self, state, task=TaskKind.HOVERING, steps=0, max_steps=100, **kw):
        return termination(
            task, state, np.full(state.n, steps), max_steps, self.limits, **kw
        )

    def test_fresh_state_running(self):
        out = self.term(hover_state())
        assert out[0] == EpisodeOutcome.RUNNING

    def test_timeout(self):
        out = self.term(hover_state(), steps=100)
        assert out[0] == EpisodeOutcome.TIMED_OUT

    def test_out_of_box(self):
        out = self.term(hover_state(pos=(11.0, 0.0, 1.0)))
        assert out[0] == EpisodeOutcome.CRASHED

    def test_below_floor(self):
        out = self.term(hover_state(pos=(0.0, 0.0, -0.1)))
        assert out[0] == EpisodeOutcome.CRASHED

    def test_excessive_tilt(self):
        s = hover_state()
        s.quat_wb[0] = quat_from_axis_angle(np.array([1.0, 0, 0]), np.deg2rad(85))
        out = self.term(s)
        assert out[0] == EpisodeOutcome.CRASHED

    def test_esdf_crash_half_threshold(self):
        out = self.term(
            hover_state(), task=TaskKind.PLANNING,
            x_esdf=np.array([0.1]), crash_distance=0.2,
        )
        assert out[0] == EpisodeOutcome.CRASHED

    def test_balloon_hit(self):
        out = self.term(
            hover_state(pos=(3.0, 0.0, 1.0)), task=TaskKind.TARGET_HITTING,
            balloon=np.array([[3.1, 0.0, 1.0]]),
        )
        assert out[0] == EpisodeOutcome.HIT

    def test_goal_reached(self):
        out = self.term(
            hover_state(pos=(7.0, 0.1, 1.0)), task=TaskKind.PLANNING,
            goal=np.array([[7.0, 0.0, 1.0]]), x_esdf=np.array([4.5]),
        )
        assert out[0] == EpisodeOutcome.GOAL_REACHED

    def test_terminal_outcomes_priority(self):
        # crashed wins over goal when both fire
        out = self.term(
            hover_state(pos=(7.0, 0.1, 1.0)), task=TaskKind.PLANNING,
            goal=np.array([[7.0, 0.0, 1.0]]), x_esdf=np.array([0.05]),
        )
        assert out[0] == EpisodeOutcome.CRASHED


class TestArcLength:
    def test_lap_length_positive_and_stable(self):
        a = lemniscate_lap_length(50_000)
        b = lemniscate_lap_length(100_000)
        assert a == pytest.approx(b, rel=1e-6)
        assert a > 4 * 3.0   # longer than the span
