import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risuav.convex_core import grid_oracle
from risuav.power import (SlotGains, dinkelbach, dinkelbach_eta, exact_objective,
                          linearize_eve_rate, optimize_power, solve_power_subproblem)
from risuav.rates import Allocation, SolutionState, evaluate, secrecy_ee
from risuav.scenario import default_paper_scenario, initial_trajectory
from risuav.trajectory_s1 import schedule_phases

LN2 = np.log(2.0)


def c_exact(p, g, s2):
    return np.log1p(p * g / s2) / LN2


def test_eve_tangent_touches():
    b, a = linearize_eve_rate(0.4, 3e-16, 1e-15)
    assert b + a * 0.4 == pytest.approx(c_exact(0.4, 3e-16, 1e-15), rel=1e-12)


def test_eve_tangent_zero_gain():
    b, a = linearize_eve_rate(0.4, 0.0, 1e-15)
    assert b == 0.0 and a == 0.0


def test_eve_tangent_upper_bound_sampled():
    rng = np.random.default_rng(11)
    n = 10_000
    p_ref = rng.uniform(0, 1, n)
    p = rng.uniform(0, 1, n)
    g = 10 ** rng.uniform(-20, -10, n)
    s2 = 10 ** rng.uniform(-16, -12, n)
    b, a = linearize_eve_rate(p_ref, g, s2)
    c = c_exact(p, g, s2)
    assert np.all(b + a * p >= c - 1e-12 * np.maximum(1.0, c))
    assert np.allclose(b + a * p_ref, c_exact(p_ref, g, s2), rtol=1e-9, atol=0)


def test_dinkelbach_eta_examples():
    alloc = Allocation(np.ones((1, 2)), np.array([[1.0, 2.0]]))
    assert dinkelbach_eta(2.0, alloc, 1.0) == 0.5
    assert dinkelbach_eta(0.0, alloc, 1.0) == 0.0
    assert dinkelbach_eta(1.3, alloc, 0.7) == secrecy_ee(1.3, alloc.power, 0.7)


def _one_slot_cfg():
    return default_paper_scenario().replace(users=((100.0, 0.0),), num_slots=1)


def _random_gains(rng, K, N, snr=1e3):
    G = snr * rng.uniform(0.1, 1.0, (K, N))
    E = G * rng.uniform(0.0, 1.2, (K, N))
    return SlotGains(G, E)


def test_eta_zero_improves_max_min():
    cfg = default_paper_scenario()
    rng = np.random.default_rng(3)
    for _ in range(5):
        A = np.zeros((4, 12))
        A[np.arange(12) % 4, np.arange(12)] = 1
        gains = _random_gains(rng, 4, 12)
        P_ref = A * rng.uniform(0.05, 1.0, (4, 12))
        P, _, _, _ = solve_power_subproblem(0.0, A, gains, cfg, P_ref)
        z_ref, _ = exact_objective(P_ref, A, gains, cfg.circuit_power)
        z, _ = exact_objective(P, A, gains, cfg.circuit_power)
        assert z >= z_ref * (1 - 1e-9)


def test_no_secrecy_margin_gets_zero_power():
    cfg = default_paper_scenario()
    A = np.zeros((4, 12))
    A[np.arange(12) % 4, np.arange(12)] = 1
    G = np.full((4, 12), 100.0)
    res = dinkelbach(A, SlotGains(G, G.copy()), A.copy(), cfg)
    assert np.all(res.power == 0)
    assert res.zeta == 0 and res.gamma == 0


@pytest.mark.parametrize("G,E", [(1e3, 10.0), (50.0, 1.0), (2.0, 0.5), (1e-9, 1e-11),
                                 (1e8, 1e2), (1e6, 1e5)])
def test_single_slot_matches_grid_oracle(G, E):
    cfg = _one_slot_cfg()
    A = np.ones((1, 1))
    gains = SlotGains(np.array([[G]]), np.array([[E]]))
    res = dinkelbach(A, gains, np.ones((1, 1)), cfg)
    _, best = grid_oracle(lambda p: exact_objective(np.array([[p[0]]]), A, gains, 1.0)[1],
                          [(0.0, cfg.max_power)], 10_000)
    assert res.gamma >= best * 0.98
    # F(eta) of the last Dinkelbach step is ~0
    assert abs(res.F[-1]) <= 1e-6 * (res.power.sum() + cfg.circuit_power)


def _small():
    cfg = default_paper_scenario().replace(users=((300.0, 300.0), (-300.0, -300.0)), num_slots=6)
    A = np.zeros((2, 6))
    A[np.arange(6) % 2, np.arange(6)] = 1
    return cfg, A


@pytest.mark.parametrize("snr", [1e-2, 10.0, 1e3])
def test_dinkelbach_traces(snr):
    cfg, A = _small()
    gains = _random_gains(np.random.default_rng(8), 2, 6, snr)
    res = dinkelbach(A, gains, A.copy(), cfg)
    # eta is the incumbent ratio, so its sequence is the Gamma trace
    assert np.all(np.diff(res.eta) >= -1e-12 * max(res.eta))
    assert res.gamma >= res.eta[-1]
    assert all(F >= -1e-9 * max(abs(e), 1e-300) for F, e in zip(res.F[:-1], res.eta))
    assert abs(res.F[-1]) <= 1e-6 * (res.power.sum() + cfg.circuit_power)
    assert np.all((res.power >= 0) & (res.power <= cfg.max_power))


def test_max_min_zeta_trace_non_decreasing():
    """With eta held at 0 each SCA step is a max-min step: zeta never drops."""
    cfg, A = _small()
    gains = _random_gains(np.random.default_rng(12), 2, 6, 30.0)
    P = A * 0.05
    zetas = [exact_objective(P, A, gains, 1.0)[0]]
    for _ in range(6):
        P, _, _, _ = solve_power_subproblem(0.0, A, gains, cfg, P)
        zetas.append(exact_objective(P, A, gains, 1.0)[0])
    assert np.all(np.diff(zetas) >= -1e-9 * max(zetas))
    assert zetas[-1] > zetas[0]


def test_gamma_never_drops():
    cfg, A = _small()
    rng = np.random.default_rng(9)
    for _ in range(4):
        gains = _random_gains(rng, 2, 6, 10 ** rng.uniform(-3, 2))
        P0 = A * rng.uniform(0, 1, (2, 6))
        before = exact_objective(P0, A, gains, cfg.circuit_power)[1]
        res = dinkelbach(A, gains, P0, cfg)
        assert res.gamma >= before - 1e-9 * max(before, 1e-300)


def test_optimize_power_on_default_geometry():
    cfg = default_paper_scenario()
    Q = initial_trajectory(cfg)
    A = np.zeros((4, 12))
    A[np.arange(12) % 4, np.arange(12)] = 1
    theta = schedule_phases(cfg, A, Q.slot_positions())
    P0 = A * cfg.max_power
    res = optimize_power(A, Q, theta, P0, cfg)
    g0 = evaluate(cfg, SolutionState(Allocation(A, P0), Q, theta))[1]
    z1, g1 = evaluate(cfg, SolutionState(Allocation(A, res.power), Q, theta))
    assert g1 >= g0 - 1e-9 * g0
    assert g1 == pytest.approx(res.gamma, rel=1e-12)
    assert np.all((res.power >= 0) & (res.power <= cfg.max_power))
    assert abs(res.F[-1]) <= 1e-6 * (res.power.sum() + cfg.circuit_power)
    # stationary input: one more pass returns the same powers
    again = optimize_power(A, Q, theta, res.power, cfg)
    assert len(again.eta) <= 2
    assert np.allclose(again.power, res.power, rtol=1e-4, atol=1e-9)
    assert again.gamma >= res.gamma * (1 - 1e-9)


@given(st.floats(0, 1), st.floats(1e-3, 1e4), st.floats(0, 1))
def test_surrogate_never_overstates(p_ref, G, ratio):
    """r(p) - c_hat(p) <= r(p) - c(p) for every p: the surrogate is conservative."""
    E = G * ratio
    b, a = linearize_eve_rate(p_ref, E, 1.0)
    p = np.linspace(0, 1, 51)
    assert np.all(b + a * p >= np.log1p(p * E) / LN2 - 1e-12)
