"""Scheme I: align the RIS toward the BS in closed form, then move the UAV by SCA.

With aligned phases the BS gain only depends on d_k d_b, and the Eve gain is
bounded by its coherent worst case. Slacks z >= (d_k d_b)^alpha and
v <= (d_k d_e)^alpha turn the rate difference into a convex program once the
products are replaced by the one-sided bounds f (above) and g (below) and
v^(2/alpha) by its tangent h.

Inside the program every quantity is normalised by its value at the
reference trajectory: q = L q_hat, z = z_ref z_hat, v = v_ref v_hat, and the
rates by R0. Without that the solver would see numbers around 1e-9.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rates
from .channel import aligned_phases_from_aoa
from .convex_core import Affine, ConvexProgram, SecondOrderCone, SmoothConvex, solve
from .scenario import Trajectory

LN2 = np.log(2.0)
PAD = 1e-8  # relative inward shift of the slack start values


def aligned_phases(q, w_k, w_b, cfg):
    """Phases co-phasing user -> RIS -> BS at UAV position ``q`` (omega = 0)."""
    H = cfg.altitude
    from .channel import aoa_cosine

    return aligned_phases_from_aoa(aoa_cosine(q, w_k, H), aoa_cosine(q, w_b, H),
                                   cfg.ris_elements, cfg.element_spacing_ratio)


def schedule_phases(cfg, A, points, theta_prev=None):
    """Per-slot phases: aligned to the served user, silent slots carry over.

    A silent slot keeps its previous row when one is given, otherwise it
    copies the alignment of the most recent served slot (user 0 if none).
    """
    A = np.asarray(A)
    K, N = A.shape
    g = rates.geometry(cfg, points)
    served = A.max(axis=0) > 0.5
    users = np.argmax(A, axis=0)
    if not served.any():
        users[:] = 0
    else:
        last = users[np.flatnonzero(served)[-1]]
        for n in range(N):
            if served[n]:
                last = users[n]
            else:
                users[n] = last
    theta = aligned_phases_from_aoa(g["phi_k"][users, np.arange(N)], g["phi_b"],
                                    cfg.ris_elements, cfg.element_spacing_ratio)
    if theta_prev is not None:
        theta[~served] = np.asarray(theta_prev)[~served]
    return theta


def rate_in_slack(z, B):
    return np.log1p(np.asarray(B) / np.asarray(z)) / LN2


def linearize_rate_slack(z_ref, B):
    """r_hat(z) = intercept + slope z, the tangent of the convex log2(1 + B/z)."""
    z_ref = np.asarray(z_ref, dtype=float)
    B = np.asarray(B, dtype=float)
    slope = -B / (z_ref * (z_ref + B) * LN2)
    return rate_in_slack(z_ref, B) - slope * z_ref, slope


def _sq(q, w, H):
    d = np.asarray(q, dtype=float) - np.asarray(w, dtype=float)
    return np.sum(d * d, axis=-1) + H * H


def product_upper_bound_f(q, q_ref, w_k, w_b, H):
    """Convex majorant of d_k^2 d_b^2, tight at q_ref.

    Same as 1/2 (d_k^2 + d_b^2)^2 minus the tangent planes of d_k^4 and d_b^4,
    written as the exact product plus the (nonnegative) tangent gaps.
    """
    dq = np.asarray(q, dtype=float) - np.asarray(q_ref, dtype=float)
    step2 = np.sum(dq * dq, axis=-1)
    out = _sq(q, w_k, H) * _sq(q, w_b, H)
    for w in (w_k, w_b):
        r2 = _sq(q_ref, w, H)
        e = _sq(q, w, H) - r2
        out = out + r2 * step2 + 0.5 * e * e
    return out


def product_lower_bound_g(q, q_ref, w_k, w_e, H):
    """Concave minorant of d_k^2 d_e^2, tight at q_ref.

    Tangent plane of 1/2 (d_k^2 + d_e^2)^2 minus 1/2 (d_k^4 + d_e^4), written
    as the exact product minus the gap of the convex square.
    """
    dq = np.asarray(q, dtype=float) - np.asarray(q_ref, dtype=float)
    step2 = np.sum(dq * dq, axis=-1)
    S = _sq(q, w_k, H) + _sq(q, w_e, H)
    S_r = _sq(q_ref, w_k, H) + _sq(q_ref, w_e, H)
    return _sq(q, w_k, H) * _sq(q, w_e, H) - 2 * S_r * step2 - 0.5 * (S - S_r) ** 2


def concave_tangent_h(v, v_ref, alpha):
    a = 2.0 / alpha
    v_ref = np.asarray(v_ref, dtype=float)
    return v_ref ** a + a * v_ref ** (a - 1) * (np.asarray(v, dtype=float) - v_ref)


# --- constraint blocks in normalised variables -------------------------------

def _f_block(L, H, wk, wb, qr, dk_r2, db_r2, a, fixed=None):
    """Rows: f(q)/(dk_r2 db_r2) - z_hat^a <= 0 on [qx_hat, qy_hat, z_hat]."""
    scale = dk_r2 * db_r2

    def fun(X):
        if fixed is None:
            q = L * X[:, :2]
            z = X[:, 2]
        else:
            q = np.broadcast_to(fixed, (len(X), 2))
            z = X[:, 0]
        dq = q - qr
        rk, rb = q - wk, q - wb
        dk2 = np.sum(rk * rk, axis=1) + H * H
        db2 = np.sum(rb * rb, axis=1) + H * H
        ek, eb = dk2 - dk_r2, db2 - db_r2
        step2 = np.sum(dq * dq, axis=1)
        f = dk2 * db2 + (dk_r2 + db_r2) * step2 + 0.5 * (ek * ek + eb * eb)
        za = z ** a
        g = f / scale - za
        dz = -a * z ** (a - 1)
        d2z = -a * (a - 1) * z ** (a - 2)
        m = len(X)
        if fixed is not None:
            return g, dz[:, None], d2z[:, None, None]
        grad_q = (2 * rk * db2[:, None] + 2 * rb * dk2[:, None]
                  + 2 * (dk_r2 + db_r2)[:, None] * dq
                  + 2 * ek[:, None] * rk + 2 * eb[:, None] * rb)
        dS = 2 * (rk + rb)
        S = dk2 + db2
        hess_q = np.einsum("mi,mj->mij", dS, dS) + 4 * S[:, None, None] * np.eye(2)
        G = np.empty((m, 3))
        G[:, :2] = L * grad_q / scale[:, None]
        G[:, 2] = dz
        Hs = np.zeros((m, 3, 3))
        Hs[:, :2, :2] = L * L * hess_q / scale[:, None, None]
        Hs[:, 2, 2] = d2z
        return g, G, Hs

    return fun


def _g_block(L, H, wk, we, qr, dk_r2, de_r2, a, fixed=None):
    """Rows: 1 + a (v_hat - 1) - g(q)/(dk_r2 de_r2) <= 0 on [qx_hat, qy_hat, v_hat]."""
    scale = dk_r2 * de_r2
    S_r = dk_r2 + de_r2

    def fun(X):
        if fixed is None:
            q = L * X[:, :2]
            v = X[:, 2]
        else:
            q = np.broadcast_to(fixed, (len(X), 2))
            v = X[:, 0]
        dq = q - qr
        rk, re = q - wk, q - we
        dk2 = np.sum(rk * rk, axis=1) + H * H
        de2 = np.sum(re * re, axis=1) + H * H
        S = dk2 + de2
        step2 = np.sum(dq * dq, axis=1)
        gq = dk2 * de2 - 2 * S_r * step2 - 0.5 * (S - S_r) ** 2
        g = 1.0 + a * (v - 1.0) - gq / scale
        m = len(X)
        if fixed is not None:
            return g, np.full((m, 1), a), np.zeros((m, 1, 1))
        dS = 2 * (rk + re)
        grad_gq = (2 * rk * de2[:, None] + 2 * re * dk2[:, None]
                   - 4 * S_r[:, None] * dq - (S - S_r)[:, None] * dS)
        I2 = np.eye(2)
        hess_gq = -(2 * dk2[:, None, None] * I2 + 4 * np.einsum("mi,mj->mij", rk, rk)
                    + 2 * de2[:, None, None] * I2 + 4 * np.einsum("mi,mj->mij", re, re))
        G = np.empty((m, 3))
        G[:, :2] = -L * grad_gq / scale[:, None]
        G[:, 2] = a
        Hs = np.zeros((m, 3, 3))
        Hs[:, :2, :2] = -L * L * hess_gq / scale[:, None, None]
        return g, G, Hs

    return fun


def _rate_block(coef, bz, bv):
    """zeta_hat - sum_s coef [r_hat(z_hat_s) - log2(1 + bv_s / v_hat_s)] <= 0.

    Gathered variables: [zeta_hat, z_hat_1..z_hat_S, v_hat_1..v_hat_S].
    """
    S = len(bz)
    r0 = np.log1p(bz) / LN2
    rs = bz / ((1.0 + bz) * LN2)

    def fun(X):
        zeta, z, v = X[:, 0], X[:, 1:1 + S], X[:, 1 + S:]
        rhat = r0 - rs * (z - 1.0)
        c = np.log1p(bv / v) / LN2
        g = zeta - np.sum(coef * (rhat - c), axis=1)
        m = len(X)
        G = np.empty((m, 1 + 2 * S))
        G[:, 0] = 1.0
        G[:, 1:1 + S] = coef * rs
        G[:, 1 + S:] = -coef * bv / (v * (v + bv) * LN2)
        Hs = np.zeros((m, 1 + 2 * S, 1 + 2 * S))
        i = np.arange(1 + S, 1 + 2 * S)
        Hs[:, i, i] = coef * bv * (2 * v + bv) / ((v * (v + bv)) ** 2 * LN2)
        return g, G, Hs

    return fun


@dataclass
class SubproblemResult:
    trajectory: Trajectory
    z: np.ndarray  # per slot, nan where unused
    v: np.ndarray
    zeta: float  # surrogate value at the returned point
    ok: bool
    status: str


def interior_start(Q: Trajectory, s_max):
    """Slot positions strictly inside the speed limits.

    Steps already shorter than s_max are left alone; otherwise the path is
    pulled toward the fixed start point just enough.
    """
    pts = Q.slot_positions()
    longest = float(Q.step_lengths().max())
    if longest < s_max * (1 - 1e-9):
        return pts
    q0 = Q.points[0]
    return q0 + (s_max * (1 - 1e-7) / longest) * (pts - q0)


def _served_slots(A, P):
    A = np.asarray(A)
    P = np.asarray(P)
    users = np.argmax(A, axis=0)
    n_idx = np.flatnonzero((A.max(axis=0) > 0.5) & (P[users, np.arange(A.shape[1])] > 0))
    return n_idx, users[n_idx], P[users[n_idx], n_idx]


def _pick_slots(cfg, users, margins, K):
    """Slots entering each user's surrogate.

    Slots whose incumbent (Eve-bounded) margin is non-positive contribute zero
    under the clamp and are left out, unless every slot of that user is in
    that state; then all of them stay in so the user still has a gradient.
    """
    keep = np.zeros(len(users), dtype=bool)
    for k in range(K):
        mine = users == k
        pos = mine & (margins > 0)
        keep |= pos if pos.any() else mine
    return keep


def solve_trajectory_subproblem(A, P, Q_ref: Trajectory, cfg) -> SubproblemResult:
    """One convex surrogate step for the trajectory at fixed A and P."""
    A = np.asarray(A, dtype=float)
    K, N = A.shape
    H, alpha = cfg.altitude, cfg.pathloss
    a = 2.0 / alpha
    s_max = cfg.s_max
    nan = np.full(N, np.nan)
    refs = Q_ref.slot_positions()
    n_idx, users, pw = _served_slots(A, P)
    if s_max <= 1e-9 * max(1.0, H) or len(n_idx) == 0 or len(set(users)) < K:
        return SubproblemResult(Q_ref, nan, nan, 0.0, False, "nothing-to-move")

    W = cfg.user_array
    wb = np.asarray(cfg.bs_pos, dtype=float)
    we = np.asarray(cfg.eve_pos, dtype=float)
    q0 = Q_ref.points[0]
    L = max(H, float(np.max(np.abs(np.vstack([W, wb, we, Q_ref.points])))))

    wk = W[users]
    qr = refs[n_idx]
    dk_r2, db_r2, de_r2 = _sq(qr, wk, H), _sq(qr, wb, H), _sq(qr, we, H)
    z_ref = (dk_r2 * db_r2) ** (alpha / 2)
    v_ref = (dk_r2 * de_r2) ** (alpha / 2)
    Bs = pw * cfg.ref_gain ** 2 * cfg.ris_elements ** 2 / cfg.noise
    bz, bv = Bs / z_ref, Bs / v_ref
    margins = np.log1p(bz) - np.log1p(bv)
    keep = _pick_slots(cfg, users, margins, K)
    # left-out slots carry no variables: their z would be unbounded above
    n_idx, users, wk, qr = n_idx[keep], users[keep], wk[keep], qr[keep]
    dk_r2, db_r2, de_r2 = dk_r2[keep], db_r2[keep], de_r2[keep]
    z_ref, v_ref, bz, bv = z_ref[keep], v_ref[keep], bz[keep], bv[keep]

    S = len(n_idx)
    nq = 2 * (N - 1)
    iz = 1 + nq + np.arange(S)
    iv = 1 + nq + S + np.arange(S)
    nv = 1 + nq + 2 * S

    def qcols(n):  # slot n is 1-based; slot N is the fixed start point
        return None if n == N else 1 + 2 * (n - 1) + np.arange(2)

    cons = []
    free = np.array([n + 1 != N for n in n_idx])
    if free.any():
        sel = np.flatnonzero(free)
        idx_f = np.array([np.r_[qcols(n_idx[s] + 1), iz[s]] for s in sel])
        idx_g = np.array([np.r_[qcols(n_idx[s] + 1), iv[s]] for s in sel])
        cons.append(SmoothConvex(idx_f, _f_block(L, H, wk[sel], wb, qr[sel],
                                                 dk_r2[sel], db_r2[sel], a), "f"))
        cons.append(SmoothConvex(idx_g, _g_block(L, H, wk[sel], we, qr[sel],
                                                 dk_r2[sel], de_r2[sel], a), "g"))
    for s in np.flatnonzero(~free):
        cons.append(SmoothConvex([[iz[s]]], _f_block(L, H, wk[[s]], wb, qr[[s]], dk_r2[[s]],
                                                     db_r2[[s]], a, fixed=q0), "f_end"))
        cons.append(SmoothConvex([[iv[s]]], _g_block(L, H, wk[[s]], we, qr[[s]], dk_r2[[s]],
                                                     de_r2[[s]], a, fixed=q0), "g_end"))

    R0 = float(np.max(np.log1p(bz) / LN2)) / N
    coef = 1.0 / (N * R0)
    for k in range(K):
        mine = np.flatnonzero(users == k)
        idx = np.r_[0, iz[mine], iv[mine]]
        cons.append(SmoothConvex(idx[None, :], _rate_block(coef, bz[mine], bv[mine]), f"rate{k}"))

    # speed limits ||q[n] - q[n-1]|| <= s_max, with q[0] = q[N] = q0 fixed
    socA = np.zeros((N, 2, nv))
    socb = np.zeros((N, 2))
    for n in range(1, N + 1):
        cn, cp = qcols(n), qcols(n - 1) if n > 1 else None
        if cn is not None:
            socA[n - 1, :, cn] = np.eye(2)
        else:
            socb[n - 1] += q0 / L
        if cp is not None:
            socA[n - 1, :, cp] -= np.eye(2)
        else:
            socb[n - 1] -= q0 / L
    cons.append(SecondOrderCone(socA, socb, np.zeros((N, nv)), np.full(N, s_max / L)))

    zlb = H ** (2 * alpha) / z_ref
    vlb = H ** (2 * alpha) * 1e-6 / v_ref
    lb = np.zeros((2 * S, nv))
    lb[np.arange(S), iz] = -1.0
    lb[S + np.arange(S), iv] = -1.0
    cons.append(Affine(lb, np.r_[-zlb, -vlb]))

    obj = np.zeros(nv)
    obj[0] = 1.0
    prog = ConvexProgram(nv, obj, cons)

    # strictly feasible start: pull the reference toward q0, pad the slacks
    start = interior_start(Q_ref, s_max)
    x0 = np.zeros(nv)
    for n in range(1, N):
        x0[qcols(n)] = start[n - 1] / L
    qs = start[n_idx]
    f0 = product_upper_bound_f(qs, qr, wk, wb, H) / (dk_r2 * db_r2)
    g0 = product_lower_bound_g(qs, qr, wk, we, H) / (dk_r2 * de_r2)
    x0[iz] = np.maximum((f0 * (1 + PAD)) ** (alpha / 2), zlb * (1 + PAD))
    x0[iv] = np.maximum(1.0 + (g0 * (1 - PAD) - 1.0) / a, vlb * (1 + PAD))
    rhs = [-c.values(x0)[0] for c in cons if getattr(c, "name", "").startswith("rate")]
    z0 = min(rhs)
    x0[0] = z0 - 1e-6 * (1.0 + abs(z0))

    rep = solve(prog, x0, tol=1e-8)
    if rep.status == "numerical-failure" and prog.barrier(rep.x, derivs=False) is None:
        return SubproblemResult(Q_ref, nan, nan, 0.0, False, rep.status)
    x = rep.x
    pts = np.empty((N + 1, 2))
    pts[0] = pts[N] = q0
    for n in range(1, N):
        pts[n] = L * x[qcols(n)]
    Z, V = nan.copy(), nan.copy()
    Z[n_idx] = z_ref * x[iz]
    V[n_idx] = v_ref * x[iv]
    zeta = R0 * float(x[0])
    return SubproblemResult(Trajectory(pts), Z, V, zeta, True, rep.status)


def exact_zeta(cfg, A, P, points, theta):
    R = rates.secrecy_matrix(cfg, rates.Allocation(A, P), points, theta)
    return rates.min_avg_secrecy(R)


def line_search(cfg, A, P, Q_ref, Q_new, theta_ref, zeta_ref, steps=8):
    """Largest step toward Q_new (1, 1/2, ...) whose exact zeta does not drop.

    Convex combinations of two feasible trajectories stay feasible.
    Returns ``(Q, theta, zeta)`` or ``None``.
    """
    lam = 1.0
    for _ in range(steps):
        pts = Q_ref.points + lam * (Q_new.points - Q_ref.points)
        Q = Trajectory(pts)
        theta = schedule_phases(cfg, A, Q.slot_positions(), theta_ref)
        z = exact_zeta(cfg, A, P, Q.slot_positions(), theta)
        if z >= zeta_ref:
            return Q, theta, z
        lam *= 0.5
    return None


def optimize_trajectory_s1(A, P, Q_init: Trajectory, cfg, theta_init=None, stats=None):
    """SCA over the trajectory, phases re-aligned after every accepted step.

    Returns ``(Q, Theta)``. ``stats`` (a dict) collects iteration counts and
    solver statuses when given.
    """
    Q = Q_init
    theta = schedule_phases(cfg, A, Q.slot_positions(), theta_init)
    zeta = exact_zeta(cfg, A, P, Q.slot_positions(), theta)
    it = 0
    statuses = []
    for it in range(1, cfg.max_sca_iter + 1):
        sub = solve_trajectory_subproblem(A, P, Q, cfg)
        statuses.append(sub.status)
        if not sub.ok:
            break
        step = line_search(cfg, A, P, Q, sub.trajectory, theta, zeta)
        if step is None:
            break
        Q_n, theta_n, zeta_n = step
        gain = zeta_n - zeta
        Q, theta, zeta = Q_n, theta_n, zeta_n
        if gain <= cfg.sca_tol * max(zeta, 1e-300):
            break
    if stats is not None:
        stats.update(iterations=it, statuses=statuses, zeta=zeta)
    return Q, theta
