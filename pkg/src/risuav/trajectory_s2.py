"""Scheme II: phases and trajectory in one SCA program.

AoA cosines are linearised in x with the previous distance, the squared
phase sums |sum_m exp(j t_m)|^2 toward the BS and Eve by their first-order
expansion in the composite phases t, and the rate difference by keeping the
concave log terms and taking tangents of the convex ones. Neither the AoA
step nor the phase-sum step is one-sided, so every step goes through an
exact-objective gate and a trust region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rates
from .channel import TWO_PI
from .convex_core import Affine, ConvexProgram, SecondOrderCone, SmoothConvex, solve
from .scenario import Trajectory
from .trajectory_s1 import (PAD, _f_block, _g_block, _pick_slots, _served_slots, _sq,
                            exact_zeta, interior_start, product_lower_bound_g, product_upper_bound_f)

LN2 = np.log(2.0)
THETA_STEP = 0.2  # radians, half-width of the phase trust box


def approx_aoa(q, w, d_ref):
    """(x - x_w) / d_ref: the AoA cosine with the distance frozen."""
    q = np.asarray(q, dtype=float)
    w = np.asarray(w, dtype=float)
    return (q[..., 0] - w[..., 0]) / np.asarray(d_ref, dtype=float)


def linearize_phase_sum(t_ref):
    """First-order model of |sum_m exp(j t_m)|^2 around ``t_ref``.

    Returns ``(value, grad)``; the surrogate is value + grad . (t - t_ref).
    """
    t_ref = np.asarray(t_ref, dtype=float)
    c, s = np.cos(t_ref), np.sin(t_ref)
    C, S = c.sum(axis=-1, keepdims=True), s.sum(axis=-1, keepdims=True)
    value = (C * C + S * S)[..., 0]
    grad = 2.0 * (S * c - C * s)
    return value, grad


@dataclass
class JointReference:
    """Per-slot constants of the joint surrogate at the reference point."""

    beta_b: np.ndarray  # kappa / z_ref
    beta_e: np.ndarray  # kappa / v_ref
    gb_ref: np.ndarray
    ge_ref: np.ndarray


def secrecy_lower_bound_joint(ref: JointReference, z_hat, v_hat, gb, ge):
    """Surrogate secrecy rate of one slot in normalised slacks.

    log2(z + k G_b) - log2 z with the tangent of -log2 z, plus
    log2 v - log2(v + k G_e) with the tangent of -log2(v + k G_e).
    """
    dz = np.asarray(z_hat, dtype=float) - 1.0
    v_hat = np.asarray(v_hat, dtype=float)
    den = 1.0 + ref.beta_e * ref.ge_ref
    legit = (np.log1p(dz + ref.beta_b * gb) - dz) / LN2
    eve = (np.log2(v_hat) - np.log1p(ref.beta_e * ref.ge_ref) / LN2
           - ((v_hat - 1.0) + ref.beta_e * (ge - ref.ge_ref)) / (LN2 * den))
    return legit + eve


def _rate_block(coef, ref, ab_th, ab_x, ae_th, ae_x, x_ref, theta_ref):
    """zeta_hat - coef sum_s R_hat_s <= 0.

    Gathered: zeta_hat, then per slot [z_hat, v_hat, x_hat, theta_1..theta_M].
    G_b and G_e are affine in (theta, x_hat) through ``ab_*`` / ``ae_*``.
    """
    S, M = ab_th.shape
    w = M + 3
    den = 1.0 + ref.beta_e * ref.ge_ref
    jac = np.zeros((S, w))  # d(z + beta_b G_b) per slot variable
    jac[:, 0] = 1.0
    jac[:, 2] = ref.beta_b * ab_x
    jac[:, 3:] = ref.beta_b[:, None] * ab_th
    outer = np.einsum("si,sj->sij", jac, jac)

    def fun(X):
        m = len(X)
        Y = X[:, 1:].reshape(m, S, w)
        z, v, xh, th = Y[:, :, 0], Y[:, :, 1], Y[:, :, 2], Y[:, :, 3:]
        dx = xh - x_ref
        dth = th - theta_ref
        gb = ref.gb_ref + np.sum(dth * ab_th, axis=2) + ab_x * dx
        ge = ref.ge_ref + np.sum(dth * ae_th, axis=2) + ae_x * dx
        R = secrecy_lower_bound_joint(ref, z, v, gb, ge)
        g = X[:, 0] - coef * R.sum(axis=1)
        wz = z + ref.beta_b * gb
        dR_dgb = ref.beta_b / (wz * LN2)
        dR_dge = -ref.beta_e / (LN2 * den)
        Gs = np.empty((m, S, w))
        Gs[:, :, 0] = (1.0 / wz - 1.0) / LN2
        Gs[:, :, 1] = 1.0 / (v * LN2) - 1.0 / (LN2 * den)
        Gs[:, :, 2] = dR_dgb * ab_x + dR_dge * ae_x
        Gs[:, :, 3:] = dR_dgb[:, :, None] * ab_th + (dR_dge[:, None] * ae_th)[None]
        G = np.empty((m, 1 + S * w))
        G[:, 0] = 1.0
        G[:, 1:] = -coef * Gs.reshape(m, -1)
        Hs = np.zeros((m, 1 + S * w, 1 + S * w))
        for s in range(S):
            lo = 1 + s * w
            blk = (coef / (LN2 * wz[:, s] ** 2))[:, None, None] * outer[s][None]
            blk[:, 1, 1] += coef / (LN2 * v[:, s] ** 2)
            Hs[:, lo:lo + w, lo:lo + w] = blk
        return g, G, Hs

    return fun


@dataclass
class JointResult:
    trajectory: Trajectory
    phases: np.ndarray
    zeta: float  # surrogate value
    ok: bool
    status: str


def solve_joint_subproblem(A, P, Q_ref: Trajectory, theta_ref, cfg, radius,
                           theta_step=THETA_STEP) -> JointResult:
    """One convex step over (Q, Theta) inside the trust region."""
    A = np.asarray(A, dtype=float)
    theta_ref = np.asarray(theta_ref, dtype=float)
    K, N = A.shape
    M, sp = cfg.ris_elements, cfg.element_spacing_ratio
    H, alpha = cfg.altitude, cfg.pathloss
    a = 2.0 / alpha
    n_idx, users, pw = _served_slots(A, P)
    if len(n_idx) == 0 or len(set(users)) < K:
        return JointResult(Q_ref, theta_ref, 0.0, False, "nothing-to-move")

    W = cfg.user_array
    wb = np.asarray(cfg.bs_pos, dtype=float)
    we = np.asarray(cfg.eve_pos, dtype=float)
    q0 = Q_ref.points[0]
    refs = Q_ref.slot_positions()
    L = max(H, float(np.max(np.abs(np.vstack([W, wb, we, Q_ref.points])))))
    movable = cfg.s_max > 1e-9 * max(1.0, H)

    wk, qr = W[users], refs[n_idx]
    dk_r2, db_r2, de_r2 = _sq(qr, wk, H), _sq(qr, wb, H), _sq(qr, we, H)
    z_ref = (dk_r2 * db_r2) ** (alpha / 2)
    v_ref = (dk_r2 * de_r2) ** (alpha / 2)
    kappa = pw * cfg.ref_gain ** 2 / cfg.noise
    g = rates.geometry(cfg, refs)
    phi_k = g["phi_k"][users, n_idx]
    m_idx = np.arange(M)
    tb = theta_ref[n_idx] + TWO_PI * sp * m_idx * (g["phi_b"][n_idx] - phi_k)[:, None]
    te = theta_ref[n_idx] + TWO_PI * sp * m_idx * (g["phi_e"][n_idx] - phi_k)[:, None]
    gb_ref, db = linearize_phase_sum(tb)
    ge_ref, de = linearize_phase_sum(te)
    margins = np.log1p(kappa * gb_ref / z_ref) - np.log1p(kappa * ge_ref / v_ref)
    keep = _pick_slots(cfg, users, margins, K)
    sel = np.flatnonzero(keep)
    n_idx, users, wk, qr = n_idx[sel], users[sel], wk[sel], qr[sel]
    dk_r2, db_r2, de_r2 = dk_r2[sel], db_r2[sel], de_r2[sel]
    z_ref, v_ref, kappa = z_ref[sel], v_ref[sel], kappa[sel]
    gb_ref, db, ge_ref, de = gb_ref[sel], db[sel], ge_ref[sel], de[sel]
    ref = JointReference(kappa / z_ref, kappa / v_ref, gb_ref, ge_ref)

    S = len(n_idx)
    free_slot = (n_idx + 1 != N) & movable
    nq = 2 * (N - 1) if movable else 0
    w = M + 3
    base = 1 + nq + w * np.arange(S)
    iz, iv, ith = base, base + 1, base[:, None] + 3 + m_idx
    nv = 1 + nq + w * S

    def qcols(n):
        return None if (n == N or not movable) else 1 + 2 * (n - 1) + np.arange(2)

    # dG/dx through the frozen-distance AoA, per unit of x_hat
    kx = TWO_PI * sp * m_idx
    cb = L * (1.0 / np.sqrt(db_r2) - 1.0 / np.sqrt(dk_r2))
    ce = L * (1.0 / np.sqrt(de_r2) - 1.0 / np.sqrt(dk_r2))
    ab_x = np.where(free_slot, (db * kx).sum(axis=1) * cb, 0.0)
    ae_x = np.where(free_slot, (de * kx).sum(axis=1) * ce, 0.0)
    x_ref = np.where(free_slot, qr[:, 0] / L, 0.0)

    cons = []
    fs = np.flatnonzero(free_slot)
    if len(fs):
        idx_f = np.array([np.r_[qcols(n_idx[s] + 1), iz[s]] for s in fs])
        idx_g = np.array([np.r_[qcols(n_idx[s] + 1), iv[s]] for s in fs])
        cons.append(SmoothConvex(idx_f, _f_block(L, H, wk[fs], wb, qr[fs], dk_r2[fs],
                                                 db_r2[fs], a), "f"))
        cons.append(SmoothConvex(idx_g, _g_block(L, H, wk[fs], we, qr[fs], dk_r2[fs],
                                                 de_r2[fs], a), "g"))
    for s in np.flatnonzero(~free_slot):
        qf = qr[s]
        cons.append(SmoothConvex([[iz[s]]], _f_block(L, H, wk[[s]], wb, qr[[s]], dk_r2[[s]],
                                                     db_r2[[s]], a, fixed=qf), "f_fixed"))
        cons.append(SmoothConvex([[iv[s]]], _g_block(L, H, wk[[s]], we, qr[[s]], dk_r2[[s]],
                                                     de_r2[[s]], a, fixed=qf), "g_fixed"))

    R0 = float(np.max(np.log1p(ref.beta_b * gb_ref) / LN2)) / N
    coef = 1.0 / (N * R0)
    for k in range(K):
        mine = np.flatnonzero(users == k)
        cols = [0]
        for s in mine:
            qc = qcols(n_idx[s] + 1)
            cols += [iz[s], iv[s], qc[0] if qc is not None else 0, *ith[s]]
        sub = JointReference(ref.beta_b[mine], ref.beta_e[mine], gb_ref[mine], ge_ref[mine])
        fun = _rate_block(coef, sub, db[mine], ab_x[mine], de[mine], ae_x[mine],
                          x_ref[mine], theta_ref[n_idx[mine]])
        cons.append(SmoothConvex(np.array(cols)[None, :], fun, f"rate{k}"))

    if movable:
        socA = np.zeros((N, 2, nv))
        socb = np.zeros((N, 2))
        for n in range(1, N + 1):
            cn, cp = qcols(n), (qcols(n - 1) if n > 1 else None)
            if cn is not None:
                socA[n - 1, :, cn] = np.eye(2)
            else:
                socb[n - 1] += q0 / L
            if cp is not None:
                socA[n - 1, :, cp] -= np.eye(2)
            else:
                socb[n - 1] -= q0 / L
        cons.append(SecondOrderCone(socA, socb, np.zeros((N, nv)), np.full(N, cfg.s_max / L)))
        trA = np.zeros((N - 1, 2, nv))
        for n in range(1, N):
            trA[n - 1, :, qcols(n)] = np.eye(2)
        cons.append(SecondOrderCone(trA, -refs[:N - 1] / L, np.zeros((N - 1, nv)),
                                    np.full(N - 1, radius / L)))

    th_cols = ith.ravel()
    box = np.zeros((2 * len(th_cols), nv))
    box[np.arange(len(th_cols)), th_cols] = 1.0
    box[len(th_cols) + np.arange(len(th_cols)), th_cols] = -1.0
    th_r = theta_ref[n_idx].ravel()
    cons.append(Affine(box, np.r_[th_r + theta_step, -(th_r - theta_step)]))
    zlb = H ** (2 * alpha) / z_ref
    vlb = H ** (2 * alpha) * 1e-6 / v_ref
    lb = np.zeros((2 * S, nv))
    lb[np.arange(S), iz] = -1.0
    lb[S + np.arange(S), iv] = -1.0
    cons.append(Affine(lb, np.r_[-zlb, -vlb]))

    obj = np.zeros(nv)
    obj[0] = 1.0
    prog = ConvexProgram(nv, obj, cons)

    start = interior_start(Q_ref, cfg.s_max) if movable else refs
    x0 = np.zeros(nv)
    for n in range(1, N):
        if qcols(n) is not None:
            x0[qcols(n)] = start[n - 1] / L
    qs = start[n_idx]
    f0 = product_upper_bound_f(qs, qr, wk, wb, H) / (dk_r2 * db_r2)
    g0 = product_lower_bound_g(qs, qr, wk, we, H) / (dk_r2 * de_r2)
    x0[iz] = np.maximum((f0 * (1 + PAD)) ** (alpha / 2), zlb * (1 + PAD))
    x0[iv] = np.maximum(1.0 + (g0 * (1 - PAD) - 1.0) / a, vlb * (1 + PAD))
    x0[ith] = theta_ref[n_idx]
    rhs = [-c.values(x0)[0] for c in cons if getattr(c, "name", "").startswith("rate")]
    z0 = min(rhs)
    x0[0] = z0 - 1e-6 * (1.0 + abs(z0))

    rep = solve(prog, x0, tol=1e-8)
    if prog.barrier(rep.x, derivs=False) is None and rep.status == "numerical-failure":
        return JointResult(Q_ref, theta_ref, 0.0, False, rep.status)
    x = rep.x
    pts = Q_ref.points.copy()
    for n in range(1, N):
        if qcols(n) is not None:
            pts[n] = L * x[qcols(n)]
    theta = theta_ref.copy()
    theta[n_idx] = rates.wrap_phases(x[ith])
    return JointResult(Trajectory(pts), theta, R0 * float(x[0]), True, rep.status)


def optimize_trajectory_s2(A, P, Q_init: Trajectory, theta_init, cfg, stats=None):
    """Joint SCA with a monotone gate on the exact zeta.

    A rejected step halves both trust regions. Returns ``(Q, Theta)``.
    """
    Q = Q_init
    theta = rates.wrap_phases(theta_init)
    zeta = exact_zeta(cfg, A, P, Q.slot_positions(), theta)
    radius = min(cfg.s_max, 0.2 * cfg.altitude)
    step = THETA_STEP
    statuses = []
    it = 0
    for it in range(1, cfg.max_sca_iter + 1):
        sub = solve_joint_subproblem(A, P, Q, theta, cfg, max(radius, 1e-9), step)
        statuses.append(sub.status)
        if not sub.ok:
            break
        z_new = exact_zeta(cfg, A, P, sub.trajectory.slot_positions(), sub.phases)
        if z_new >= zeta and sub.trajectory.is_feasible(cfg.s_max, 1e-6):
            gain = z_new - zeta
            Q, theta, zeta = sub.trajectory, sub.phases, z_new
            if gain <= cfg.sca_tol * max(zeta, 1e-300):
                break
        else:
            radius *= 0.5
            step *= 0.5
            if step < 1e-4:
                break
    if stats is not None:
        stats.update(iterations=it, statuses=statuses, zeta=zeta)
    return Q, theta
