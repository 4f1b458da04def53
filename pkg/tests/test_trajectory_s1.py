import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risuav import rates
from risuav.channel import SteeringChannel, aoa_cosine, cascaded_gain, distance
from risuav.convex_core import hessian_psd_check
from risuav.orchestrator import round_robin
from risuav.scenario import Trajectory, default_paper_scenario, initial_trajectory
from risuav.trajectory_s1 import (aligned_phases, concave_tangent_h, exact_zeta,
                                  linearize_rate_slack, optimize_trajectory_s1,
                                  product_lower_bound_g, product_upper_bound_f, rate_in_slack,
                                  schedule_phases, solve_trajectory_subproblem)

H = 100.0
S_MAX = 50 * 80 / 12


def sq(q, w):
    return np.sum((q - w) ** 2, axis=-1) + H * H


def _samples(rng, n=10_000):
    """Reference points, moves within s_max, and ground points."""
    q_ref = rng.uniform(-600, 600, (n, 2))
    r = S_MAX * np.sqrt(rng.uniform(0, 1, n))
    ang = rng.uniform(0, 2 * np.pi, n)
    q = q_ref + np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)
    return q, q_ref, rng.uniform(-600, 600, (n, 2)), rng.uniform(-600, 600, (n, 2))


# --- phases ------------------------------------------------------------------

def test_aligned_phases_examples():
    cfg = default_paper_scenario()
    th = aligned_phases((120.0, -30.0), (300.0, 300.0), (0.0, 0.0), cfg)
    assert th[0] == 0.0
    assert np.all((th >= 0) & (th < 2 * np.pi))
    # same x as user and BS -> equal AoA cosines (both 0) -> all zero
    assert np.all(aligned_phases((0.0, 50.0), (0.0, 300.0), (0.0, 0.0), cfg) == 0)


def test_aligned_phases_reach_closed_form():
    cfg = default_paper_scenario()
    q, wk, wb = np.array([120.0, -30.0]), np.array([300.0, 300.0]), np.zeros(2)
    th = aligned_phases(q, wk, wb, cfg)
    amp = lambda w: np.sqrt(cfg.ref_gain * distance(q, w, H) ** -cfg.pathloss)  # noqa: E731
    rx = SteeringChannel(amp(wb), aoa_cosine(q, wb, H), cfg.ris_elements)
    tx = SteeringChannel(amp(wk), aoa_cosine(q, wk, H), cfg.ris_elements)
    assert abs(cascaded_gain(rx, th, tx)) == pytest.approx(rx.amplitude * tx.amplitude * 10, rel=1e-12)


def test_schedule_silent_slots_carry_over():
    cfg = default_paper_scenario()
    Q = initial_trajectory(cfg)
    A = round_robin(cfg)
    A[:, 5] = 0
    prev = np.full((12, cfg.ris_elements), 0.25)
    th = schedule_phases(cfg, A, Q.slot_positions(), prev)
    assert np.all(th[5] == 0.25)
    # without a previous row the slot copies the last served user, aligned at its own position
    th2 = schedule_phases(cfg, A, Q.slot_positions())
    k = int(np.argmax(A[:, 4]))
    want = aligned_phases(Q.slot_positions()[5], cfg.users[k], cfg.bs_pos, cfg)
    assert np.allclose(th2[5], want, atol=1e-12)


# --- rate in the slack -------------------------------------------------------

def test_rate_slack_examples():
    assert rate_in_slack(1.0, 1.0) == pytest.approx(1.0)
    assert rate_in_slack(2.0, 1.0) == pytest.approx(0.584963, abs=1e-6)
    assert rate_in_slack(3.0, 1.0) == pytest.approx(0.415037, abs=1e-6)
    assert rate_in_slack(2.0, 1.0) <= (rate_in_slack(1.0, 1.0) + rate_in_slack(3.0, 1.0)) / 2
    b, a = linearize_rate_slack(4.0, 0.0)
    assert rate_in_slack(4.0, 0.0) == 0 and b == 0 and a == 0


def test_rate_slack_tangent_lower_bound_sampled():
    rng = np.random.default_rng(21)
    z_ref = 10 ** rng.uniform(-3, 3, 10_000)
    z = 10 ** rng.uniform(-3, 3, 10_000)
    B = 10 ** rng.uniform(-4, 3, 10_000)
    b, a = linearize_rate_slack(z_ref, B)
    r = rate_in_slack(z, B)
    assert np.all(b + a * z <= r + 1e-12 * np.maximum(1, r))
    assert np.allclose(b + a * z_ref, rate_in_slack(z_ref, B), rtol=1e-9, atol=1e-15)


def test_rate_slack_midpoint_convexity():
    rng = np.random.default_rng(22)
    z1, z2 = 10 ** rng.uniform(-2, 3, (2, 1000))
    B = 10 ** rng.uniform(-3, 3, 1000)
    mid = rate_in_slack((z1 + z2) / 2, B)
    assert np.all(mid <= (rate_in_slack(z1, B) + rate_in_slack(z2, B)) / 2 + 1e-12)


# --- product bounds ----------------------------------------------------------

def test_f_bound_sampled():
    q, q_ref, wk, wb = _samples(np.random.default_rng(23))
    f = product_upper_bound_f(q, q_ref, wk, wb, H)
    exact = sq(q, wk) * sq(q, wb)
    assert np.all(f >= exact * (1 - 1e-12))
    tight = product_upper_bound_f(q_ref, q_ref, wk, wb, H)
    assert np.allclose(tight, sq(q_ref, wk) * sq(q_ref, wb), rtol=1e-9, atol=0)


def test_f_bound_printed_form():
    """Matches 1/2 (dk^2 + db^2)^2 minus the tangent planes of dk^4 and db^4."""
    rng = np.random.default_rng(24)
    q, q_ref, wk, wb = _samples(rng, 200)
    printed = 0.5 * (sq(q, wk) + sq(q, wb)) ** 2
    for w in (wk, wb):
        r2 = sq(q_ref, w)
        grad = 4 * r2[:, None] * (q_ref - w)
        printed -= 0.5 * (r2 ** 2 + np.sum(grad * (q - q_ref), axis=1))
    assert np.allclose(product_upper_bound_f(q, q_ref, wk, wb, H), printed, rtol=1e-9)


def test_f_bound_symmetric_collapse():
    rng = np.random.default_rng(25)
    q, q_ref, wk, _ = _samples(rng, 1000)
    f = product_upper_bound_f(q, q_ref, wk, wk, H)
    assert np.all(f >= sq(q, wk) ** 2 * (1 - 1e-12))


def test_g_bound_sampled():
    q, q_ref, wk, we = _samples(np.random.default_rng(26))
    g = product_lower_bound_g(q, q_ref, wk, we, H)
    exact = sq(q, wk) * sq(q, we)
    assert np.all(g <= exact * (1 + 1e-12))
    tight = product_lower_bound_g(q_ref, q_ref, wk, we, H)
    assert np.allclose(tight, sq(q_ref, wk) * sq(q_ref, we), rtol=1e-9, atol=0)


def test_g_bound_is_concave_tangent_form():
    """Tangent of 1/2 (dk^2 + de^2)^2 minus 1/2 (dk^4 + de^4), written out."""
    rng = np.random.default_rng(27)
    q, q_ref, wk, we = _samples(rng, 200)
    S_r = sq(q_ref, wk) + sq(q_ref, we)
    grad = 2 * S_r[:, None] * (2 * q_ref - wk - we)
    written = 0.5 * S_r ** 2 + np.sum(grad * (q - q_ref), axis=1) - 0.5 * (sq(q, wk) ** 2 + sq(q, we) ** 2)
    assert np.allclose(product_lower_bound_g(q, q_ref, wk, we, H), written, rtol=1e-9, atol=1e-3)


def test_g_bound_symmetric_collapse():
    q, q_ref, wk, _ = _samples(np.random.default_rng(28), 1000)
    g = product_lower_bound_g(q, q_ref, wk, wk, H)
    assert np.all(g <= sq(q, wk) ** 2 * (1 + 1e-12))


def test_h_tangent():
    v = np.array([0.5, 2.0, 7.0])
    assert np.allclose(concave_tangent_h(v, 3.0, 2.0), v)
    assert concave_tangent_h(3.0, 3.0, 2.2) == pytest.approx(3.0 ** (2 / 2.2), rel=1e-12)
    rng = np.random.default_rng(29)
    v, v_ref = 10 ** rng.uniform(-3, 6, (2, 10_000))
    h = concave_tangent_h(v, v_ref, 2.2)
    assert np.all(h >= v ** (2 / 2.2) * (1 - 1e-12))


@given(st.floats(2.0, 6.0), st.floats(1e-3, 1e6), st.floats(1e-3, 1e6))
def test_h_tangent_property(alpha, v, v_ref):
    # rounding in the tangent scales with its largest term, v_ref^(2/alpha)
    scale = max(v, v_ref) ** (2 / alpha)
    assert concave_tangent_h(v, v_ref, alpha) >= v ** (2 / alpha) - 1e-12 * scale


def test_distance_powers_convex():
    rng = np.random.default_rng(30)
    for _ in range(1000):
        w = rng.uniform(-600, 600, 2)
        q = rng.uniform(-600, 600, 2)
        assert hessian_psd_check(lambda x: sq(x, w), q, 1e-1)
        assert hessian_psd_check(lambda x: sq(x, w) ** 2, q, 1e-1)


# --- subproblem and SCA loop -------------------------------------------------

def _setup(cfg):
    Q = initial_trajectory(cfg)
    A = round_robin(cfg)
    return A, A * cfg.max_power, Q


def test_subproblem_hover():
    cfg = default_paper_scenario().replace(v_max=0.0)
    A, P, Q = _setup(cfg)
    res = solve_trajectory_subproblem(A, P, Q, cfg)
    assert not res.ok
    assert np.array_equal(res.trajectory.points, Q.points)
    Q2, _ = optimize_trajectory_s1(A, P, Q, cfg)
    assert np.array_equal(Q2.points, Q.points)


def test_subproblem_feasible_and_surrogate_safe():
    cfg = default_paper_scenario()
    A, P, Q = _setup(cfg)
    res = solve_trajectory_subproblem(A, P, Q, cfg)
    assert res.ok and res.status == "optimal"
    T = res.trajectory
    assert np.all(T.step_lengths() <= cfg.s_max + 1e-6)
    assert np.array_equal(T.points[-1], T.points[0])
    th = schedule_phases(cfg, A, T.slot_positions())
    R = rates.secrecy_matrix(cfg, rates.Allocation(A, P), T.slot_positions(), th, eve="bound")
    assert res.zeta <= rates.min_avg_secrecy(R) * (1 + 1e-9)


def test_far_eve_pulls_trajectory_in():
    cfg = default_paper_scenario().replace(eve_pos=(0.0, 2e8))
    A, P, Q = _setup(cfg)
    th0 = schedule_phases(cfg, A, Q.slot_positions())
    z0 = exact_zeta(cfg, A, P, Q.slot_positions(), th0)
    Q1, th1 = optimize_trajectory_s1(A, P, Q, cfg)
    assert exact_zeta(cfg, A, P, Q1.slot_positions(), th1) > z0 * 1.01
    assert Q1.is_feasible(cfg.s_max, tol=1e-6)


def test_sca_loop_monotone_and_fixed_point():
    cfg = default_paper_scenario()
    A, P, Q = _setup(cfg)
    stats = {}
    Q1, th1 = optimize_trajectory_s1(A, P, Q, cfg, stats=stats)
    th0 = schedule_phases(cfg, A, Q.slot_positions())
    z0 = exact_zeta(cfg, A, P, Q.slot_positions(), th0)
    z1 = exact_zeta(cfg, A, P, Q1.slot_positions(), th1)
    assert z1 >= z0
    assert stats["zeta"] == pytest.approx(z1, rel=1e-12)
    assert Q1.is_feasible(cfg.s_max, tol=1e-6)
    # restarting from a point the loop cannot improve leaves it where it is
    stats2 = {}
    Q2, _ = optimize_trajectory_s1(A, P, Q1, cfg, th1, stats=stats2)
    assert stats2["zeta"] >= z1
    if stats2["zeta"] == z1:
        assert np.array_equal(Q2.points, Q1.points)
