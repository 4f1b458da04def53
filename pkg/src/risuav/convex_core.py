"""Convex subproblem solver and the verification oracles.

The solver is a primal log-barrier method (Newton centering with
backtracking) for programs of the form

    maximize  c^T x
    s.t.      A x <= b                                  (Affine)
              ||A_i x + b_i|| <= c_i^T x + d_i           (SecondOrderCone)
              g_i(x[idx_i]) <= 0,  g_i convex, C^2       (SmoothConvex)

The smooth family carries the log / power epigraphs used by the rate
surrogates. Callers must supply a strictly feasible start, normally the
previous SCA iterate nudged inward, which is what makes every returned
point at least as good as the start.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

FEAS_TOL = 1e-7
OPT_TOL = 1e-6


@dataclass
class Affine:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))

    @property
    def size(self):
        return len(self.b)

    def values(self, x):
        return self.A @ x - self.b

    def barrier(self, x, derivs=True):
        s = self.b - self.A @ x
        if np.any(s <= 0):
            return None
        phi = -np.sum(np.log(s))
        if not derivs:
            return phi
        inv = 1.0 / s
        return phi, self.A.T @ inv, (self.A.T * inv ** 2) @ self.A


@dataclass
class SecondOrderCone:
    """Stack of cones ||A[i] x + b[i]|| <= c[i] x + d[i]."""

    A: np.ndarray  # m x k x n
    b: np.ndarray  # m x k
    c: np.ndarray  # m x n
    d: np.ndarray  # m

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        self.d = np.asarray(self.d, dtype=float)
        # only the touched columns matter; the cone Hessians are constant there
        self._cols = np.flatnonzero(np.any(self.A != 0, axis=(0, 1)) | np.any(self.c != 0, axis=0))
        As, cs = self.A[:, :, self._cols], self.c[:, self._cols]
        self._hw = 2 * np.einsum("mi,mj->mij", cs, cs) - 2 * np.einsum("mki,mkj->mij", As, As)

    @property
    def size(self):
        return len(self.d)

    def values(self, x):
        u = np.einsum("mkn,n->mk", self.A, x) + self.b
        return np.linalg.norm(u, axis=1) - (self.c @ x + self.d)

    def barrier(self, x, derivs=True):
        u = np.einsum("mkn,n->mk", self.A, x) + self.b
        s = self.c @ x + self.d
        w = s * s - np.sum(u * u, axis=1)
        if np.any(s <= 0) or np.any(w <= 0):
            return None
        phi = -np.sum(np.log(w))
        if not derivs:
            return phi
        # grad w_i = 2 s_i c_i - 2 A_i^T u_i ; hess w_i = 2 c_i c_i^T - 2 A_i^T A_i
        cols = self._cols
        gw = 2 * s[:, None] * self.c[:, cols] - 2 * np.einsum(
            "mkn,mk->mn", self.A[:, :, cols], u)
        gw = gw / w[:, None]
        n = len(x)
        grad = np.zeros(n)
        grad[cols] = -gw.sum(axis=0)
        hess = np.zeros((n, n))
        hess[np.ix_(cols, cols)] = gw.T @ gw - np.einsum("m,mij->ij", 1.0 / w, self._hw)
        return phi, grad, hess


@dataclass
class SmoothConvex:
    """Constraints g_i(x[idx[i]]) <= 0 with a vectorised ``fun``.

    ``fun(X)`` takes the m x p gathered variables and returns ``(g, G, Hs)``
    with shapes (m,), (m, p), (m, p, p). It may return NaN outside its
    domain; such points count as infeasible.
    """

    idx: np.ndarray
    fun: Callable
    name: str = ""

    def __post_init__(self):
        self.idx = np.atleast_2d(np.asarray(self.idx, dtype=int))

    @property
    def size(self):
        return self.idx.shape[0]

    def values(self, x):
        with np.errstate(all="ignore"):
            return self.fun(x[self.idx])[0]

    def barrier(self, x, derivs=True):
        with np.errstate(all="ignore"):
            g, G, Hs = self.fun(x[self.idx])
        if not np.all(np.isfinite(g)) or np.any(g >= 0):
            return None
        s = -g
        phi = -np.sum(np.log(s))
        if not derivs:
            return phi
        n = len(x)
        grad = np.zeros(n)
        hess = np.zeros((n, n))
        Gs = G / s[:, None]
        local = np.einsum("mi,mj->mij", Gs, Gs) + Hs / s[:, None, None]
        np.add.at(grad, self.idx, Gs)
        rows = np.repeat(self.idx[:, :, None], self.idx.shape[1], axis=2)
        cols = np.repeat(self.idx[:, None, :], self.idx.shape[1], axis=1)
        np.add.at(hess, (rows, cols), local)
        return phi, grad, hess


@dataclass
class ConvexProgram:
    num_vars: int
    objective: np.ndarray  # maximize objective @ x
    constraints: list = field(default_factory=list)
    names: dict = field(default_factory=dict)

    @property
    def num_constraints(self):
        return sum(c.size for c in self.constraints)

    def barrier(self, x, derivs=True):
        if not derivs:
            total = 0.0
            for con in self.constraints:
                val = con.barrier(x, derivs=False)
                if val is None:
                    return None
                total += val
            return total
        phi, grad, hess = 0.0, np.zeros(self.num_vars), np.zeros((self.num_vars,) * 2)
        for con in self.constraints:
            out = con.barrier(x)
            if out is None:
                return None
            phi += out[0]
            grad += out[1]
            hess += out[2]
        return phi, grad, hess

    def max_violation(self, x) -> float:
        worst = 0.0
        for con in self.constraints:
            with np.errstate(all="ignore"):
                v = con.values(x)
            if not np.all(np.isfinite(v)):
                return np.inf
            if v.size:
                worst = max(worst, float(v.max()))
        return worst


@dataclass
class SolveReport:
    status: str  # optimal | max-iterations | numerical-failure
    x: np.ndarray
    objective: float
    residual: float
    iterations: int


def _newton_direction(hess, grad):
    # Jacobi scaling first: barrier Hessians near the boundary span many decades
    diag = np.diag(hess)
    d = np.sqrt(np.where(diag > 0, diag, 1.0))
    Hs = hess / np.outer(d, d)
    gs = grad / d
    try:
        L = np.linalg.cholesky(Hs)
        y = np.linalg.solve(L, -gs)
        return np.linalg.solve(L.T, y) / d
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(Hs)
        floor = 1e-12 * max(1.0, float(np.max(np.abs(w))))
        w = np.maximum(np.abs(w), floor)
        return -(V @ ((V.T @ gs) / w)) / d


def solve(program: ConvexProgram, x0, tol=OPT_TOL, feas_tol=FEAS_TOL,
          max_iter=400, mu=12.0, t0=None) -> SolveReport:
    """Maximize ``program.objective @ x`` from a strictly feasible ``x0``.

    Never raises on numerical trouble: a failed start or a stalled line
    search is reported through ``status`` and the best point seen so far
    (never worse than ``x0``) is returned.
    """
    c = np.asarray(program.objective, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    obj0 = float(c @ x0)
    if program.barrier(x0, derivs=False) is None:
        return SolveReport("numerical-failure", x0.copy(), obj0,
                           program.max_violation(x0), 0)
    m = max(program.num_constraints, 1)
    x = x0.copy()
    # start with a duality gap of about 10% of the objective scale
    t = t0 if t0 is not None else m / (0.1 * max(1.0, abs(obj0)))
    iters = 0
    status = "max-iterations"
    while iters < max_iter:
        while iters < max_iter:
            phi, g, H = program.barrier(x)
            grad = g - t * c
            dx = _newton_direction(H, grad)
            slope = float(grad @ dx)
            if -slope <= 1e-10 * max(1.0, t * abs(float(c @ x))):
                break
            f0 = phi - t * float(c @ x)
            step = 1.0
            while step > 1e-12:
                xn = x + step * dx
                val = program.barrier(xn, derivs=False)
                if val is not None and val - t * float(c @ xn) <= f0 + 0.25 * step * slope:
                    break
                step *= 0.5
            iters += 1
            if step <= 1e-12:
                break
            x = xn
        if m / t <= tol * max(1.0, abs(float(c @ x))):
            status = "optimal"
            break
        t *= mu
    obj = float(c @ x)
    if obj < obj0:
        x, obj = x0.copy(), obj0
    residual = program.max_violation(x)
    if status == "optimal" and residual > feas_tol:
        status = "numerical-failure"
    return SolveReport(status, x, obj, residual, iters)


def solve_lp(c, A_ub, b_ub, bounds) -> SolveReport:
    """Maximize c^T x over a polyhedron with HiGHS (vertex solutions)."""
    res = optimize.linprog(-np.asarray(c, dtype=float), A_ub=A_ub, b_ub=b_ub,
                           bounds=bounds, method="highs")
    if res.status != 0:
        status = "max-iterations" if res.status == 1 else "numerical-failure"
        x = np.zeros(len(c)) if res.x is None else res.x
        return SolveReport(status, x, float(np.dot(c, x)), np.inf, int(res.nit))
    resid = float(max(0.0, np.max(A_ub @ res.x - b_ub))) if len(b_ub) else 0.0
    return SolveReport("optimal", res.x, float(-res.fun), resid, int(res.nit))


def grid_oracle(objective, box, resolution=101):
    """Exhaustive grid maximiser for at most four variables (tests only)."""
    box = np.atleast_2d(np.asarray(box, dtype=float))
    if box.shape[0] > 4:
        raise ValueError("grid oracle supports at most 4 variables")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in box]
    best_x, best_v = None, -np.inf
    for pt in itertools.product(*axes):
        v = objective(np.array(pt))
        if v > best_v:
            best_x, best_v = np.array(pt), v
    return best_x, float(best_v)


def finite_difference_hessian(f, point, step=1e-3):
    x = np.asarray(point, dtype=float)
    n = len(x)
    H = np.empty((n, n))
    E = np.eye(n) * step
    for i in range(n):
        for j in range(i, n):
            v = (f(x + E[i] + E[j]) - f(x + E[i] - E[j])
                 - f(x - E[i] + E[j]) + f(x - E[i] - E[j])) / (4 * step * step)
            H[i, j] = H[j, i] = v
    return H


def hessian_psd_check(f, point, step=1e-3) -> bool:
    eig = np.linalg.eigvalsh(finite_difference_hessian(f, point, step))
    return bool(eig.min() >= -1e-6 * (1.0 + abs(eig.max())))
