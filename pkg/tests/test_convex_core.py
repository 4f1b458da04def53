import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risuav.convex_core import (Affine, ConvexProgram, SecondOrderCone, SmoothConvex,
                                finite_difference_hessian, grid_oracle, hessian_psd_check, solve)

LN2 = np.log(2.0)


def _log_rate_atom(X):
    """t - log2(1 + 1/z) <= 0 on [t, z]."""
    t, z = X[:, 0], X[:, 1]
    g = t - np.log1p(1 / z) / LN2
    G = np.stack([np.ones_like(z), 1 / (z * (z + 1)) / LN2], axis=1)
    H = np.zeros((len(z), 2, 2))
    H[:, 1, 1] = -(2 * z + 1) / (z * (z + 1)) ** 2 / LN2
    return g, G, H


def _log2_atom(X):
    """t - log2(z) <= 0 (convex)."""
    t, z = X[:, 0], X[:, 1]
    g = t - np.log(z) / LN2
    G = np.stack([np.ones_like(z), -1 / (z * LN2)], axis=1)
    H = np.zeros((len(z), 2, 2))
    H[:, 1, 1] = 1 / (z * z * LN2)
    return g, G, H


def test_lp_corner():
    prog = ConvexProgram(1, np.array([1.0]), [Affine([[1.0]], [3.0])])
    rep = solve(prog, np.array([0.0]))
    assert rep.status == "optimal"
    assert rep.x[0] == pytest.approx(3.0, abs=1e-5)


def test_log_rate_boundary():
    prog = ConvexProgram(2, np.array([1.0, 0.0]),
                         [SmoothConvex([[0, 1]], _log_rate_atom), Affine([[0, -1.0]], [-1.0])])
    rep = solve(prog, np.array([0.0, 2.0]))
    assert rep.status == "optimal"
    assert rep.x[0] == pytest.approx(1.0, abs=1e-5)
    assert rep.x[1] == pytest.approx(1.0, abs=1e-5)


def test_log_epigraph_and_soc():
    # maximize t s.t. t <= log2 z, ||(z, 3)|| <= 5  ->  z = 4, t = 2
    soc = SecondOrderCone(np.array([[[0, 1], [0, 0]]], float), np.array([[0.0, 3.0]]),
                          np.zeros((1, 2)), np.array([5.0]))
    prog = ConvexProgram(2, np.array([1.0, 0]), [SmoothConvex([[0, 1]], _log2_atom), soc])
    rep = solve(prog, np.array([-1.0, 1.0]))
    assert rep.status == "optimal"
    assert rep.x[1] == pytest.approx(4.0, abs=1e-4)
    assert rep.objective == pytest.approx(2.0, abs=1e-4)


def test_infeasible_start_reported():
    prog = ConvexProgram(1, np.array([1.0]), [Affine([[1.0]], [3.0])])
    rep = solve(prog, np.array([5.0]))
    assert rep.status == "numerical-failure"
    assert rep.x[0] == 5.0


@given(st.lists(st.floats(0.5, 10), min_size=2, max_size=5), st.floats(0.1, 0.9))
def test_never_worse_than_start_and_resolve_monotone(caps, frac):
    n = len(caps)
    c = np.ones(n)
    prog = ConvexProgram(n, c, [Affine(np.eye(n), caps), Affine([np.ones(n)], [sum(caps) * 0.8])])
    x0 = np.asarray(caps) * frac * 0.5
    rep = solve(prog, x0)
    assert rep.objective >= c @ x0
    assert rep.objective == pytest.approx(sum(caps) * 0.8, rel=1e-4)
    rep2 = solve(prog, x0 + 0.999 * (rep.x - x0))
    assert rep2.objective >= rep.objective - 1e-6 * rep.objective


def test_deterministic():
    prog = ConvexProgram(2, np.array([1.0, 0.0]),
                         [SmoothConvex([[0, 1]], _log_rate_atom), Affine([[0, -1.0]], [-1.0])])
    a = solve(prog, np.array([0.0, 2.0]))
    b = solve(prog, np.array([0.0, 2.0]))
    assert np.array_equal(a.x, b.x) and a.iterations == b.iterations


def test_grid_oracle_examples():
    x, v = grid_oracle(lambda x: -x[0] ** 2, [(-1, 1)], 101)
    assert x[0] == pytest.approx(0.0, abs=1e-12) and v == pytest.approx(0.0)
    x, _ = grid_oracle(lambda x: x.sum(), [(0, 1), (2, 3)], 11)
    assert np.allclose(x, [1, 3])
    with pytest.raises(ValueError):
        grid_oracle(lambda x: 0.0, [(0, 1)] * 5, 3)


def _d2(q, w=np.array([30.0, -40.0]), H=100.0):
    return np.sum((q - w) ** 2) + H * H


def test_hessian_examples():
    rng = np.random.default_rng(0)
    q = rng.uniform(-300, 300, 2)
    assert hessian_psd_check(_d2, q)
    assert np.allclose(finite_difference_hessian(_d2, q, 1e-2), 2 * np.eye(2), atol=1e-6)
    assert hessian_psd_check(lambda x: _d2(x) ** 2, q, 1e-2)
    assert not hessian_psd_check(lambda x: -np.sum(x * x), q)


def test_rate_slack_convexity_midpoint_example():
    r = lambda z: np.log2(1 + 1 / z)  # noqa: E731
    assert r(2) == pytest.approx(0.584963, abs=1e-6)
    assert (r(1) + r(3)) / 2 == pytest.approx(0.707519, abs=1e-6)
    assert r(2) <= (r(1) + r(3)) / 2
