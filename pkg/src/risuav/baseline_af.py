"""Comparison without the RIS: the UAV acts as a half-duplex AF relay.

End-to-end SNR gamma1 gamma2 / (gamma1 + gamma2 + 1) with gamma1 the
user -> UAV hop and gamma2 the UAV -> receiver hop at relay power P_UAV.
The secrecy rate simplifies to

    1/2 [log2(1 + p u / (1 + g2e)) - log2(1 + p u / (1 + g2b))],   u = h0 / (sigma^2 d_k^a)

which has the same shape as the RIS secrecy rate, so the power block is
shared. The relay power is charged for every slot that carries traffic.
"""

from __future__ import annotations

import numpy as np

from .channel import distance
from .convex_core import Affine, ConvexProgram, SecondOrderCone, solve
from .orchestrator import run_alternating, slot_power
from .power import SlotGains
from .scenario import ScenarioConfig, Trajectory
from .trajectory_s1 import _pick_slots, interior_start

LN2 = np.log(2.0)


def af_rate_snr(g1, g2):
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    return 0.5 * np.log1p(g1 * g2 / (g1 + g2 + 1.0)) / LN2


def hop_snr(power_w, d, cfg):
    return np.asarray(power_w, dtype=float) * cfg.ref_gain / (cfg.noise * np.asarray(d) ** cfg.pathloss)


def af_rate(p_user, d_k, d_b, cfg):
    """Half-duplex AF rate user -> UAV -> receiver at distance ``d_b``."""
    return af_rate_snr(hop_snr(p_user, d_k, cfg), hop_snr(cfg.af_relay_power, d_b, cfg))


def af_gains(cfg, points, A=None) -> SlotGains:
    """Per-watt SNRs in the shared secrecy form (weight 1/2).

    ``fixed_power`` charges P_UAV for every slot served in ``A``.
    """
    pts = np.asarray(points, dtype=float)
    H = cfg.altitude
    d_k = distance(pts[None], cfg.user_array[:, None, :], H)
    u = hop_snr(1.0, d_k, cfg)
    g2b = hop_snr(cfg.af_relay_power, distance(pts, cfg.bs_pos, H), cfg)[None]
    g2e = hop_snr(cfg.af_relay_power, distance(pts, cfg.eve_pos, H), cfg)[None]
    served = 0 if A is None else int((np.asarray(A).max(axis=0) > 0.5).sum())
    return SlotGains(u / (1.0 + g2e), u / (1.0 + g2b), 0.5, cfg.af_relay_power * served)


def af_secrecy(cfg, P, points):
    """Unclamped secrecy rate for every (user, slot) at powers ``P``."""
    g = af_gains(cfg, points)
    P = np.asarray(P, dtype=float)
    return g.weight * (np.log1p(P * g.legit) - np.log1p(P * g.eve)) / LN2


def active_slots(A, P):
    A = np.asarray(A)
    return int(((A > 0.5) & (np.asarray(P) > 0)).any(axis=0).sum())


class AfModel:
    name = "af"

    def initial_phases(self, cfg, A, Q):
        return np.zeros((cfg.num_slots, cfg.ris_elements))

    def extra_power(self, cfg, A, P):
        return cfg.af_relay_power * active_slots(A, P)

    def slot_secrecy(self, cfg, A, P, Q, theta, eve="exact"):
        return np.asarray(A) * np.maximum(af_secrecy(cfg, P, Q.slot_positions()), 0.0)

    def candidate_secrecy(self, cfg, A, P, Q, theta):
        K, N = A.shape
        p = np.broadcast_to(slot_power(A, P, cfg.max_power)[None], (K, N))
        return np.maximum(af_secrecy(cfg, p, Q.slot_positions()), 0.0), p

    def realign(self, cfg, A_new, A_old, Q, theta):
        return theta

    def gains(self, cfg, A, Q, theta):
        return af_gains(cfg, Q.slot_positions(), A)

    def move(self, cfg, A, P, Q, theta, stats):
        return optimize_trajectory_af(A, P, Q, cfg, stats), theta


def _zeta(cfg, A, P, Q):
    R = np.asarray(A) * np.maximum(af_secrecy(cfg, P, Q.slot_positions()), 0.0)
    return float(np.min(R.mean(axis=1)))


def _gradients(cfg, P, points, step=1e-2):
    """Central differences of the unclamped secrecy in each slot position."""
    grads = np.zeros(P.shape + (2,))
    for i in range(2):
        e = np.zeros(2)
        e[i] = step
        grads[..., i] = (af_secrecy(cfg, P, points + e) - af_secrecy(cfg, P, points - e)) / (2 * step)
    return grads


def solve_af_step(A, P, Q_ref: Trajectory, cfg, radius):
    """Linearised max-min secrecy step over the trajectory in a trust region."""
    A = np.asarray(A, dtype=float)
    P = np.asarray(P, dtype=float)
    K, N = A.shape
    if cfg.s_max <= 1e-9 * max(1.0, cfg.altitude):
        return None
    users = np.argmax(A, axis=0)
    n_idx = np.flatnonzero((A.max(axis=0) > 0.5) & (P[users, np.arange(N)] > 0))
    users = users[n_idx]
    if len(n_idx) == 0 or len(set(users)) < K:
        return None
    refs = Q_ref.slot_positions()
    sec = af_secrecy(cfg, P, refs)[users, n_idx]
    grad = _gradients(cfg, P, refs)[users, n_idx]
    keep = _pick_slots(cfg, users, sec, K)
    n_idx, users, sec, grad = n_idx[keep], users[keep], sec[keep], grad[keep]

    q0 = Q_ref.points[0]
    L = max(cfg.altitude, float(np.max(np.abs(Q_ref.points))), 1.0)
    nq = 2 * (N - 1)
    nv = 1 + nq
    R0 = max(float(np.max(np.abs(sec))), 1e-300) / N

    def qcols(n):
        return None if n == N else 1 + 2 * (n - 1) + np.arange(2)

    # zeta_hat - sum_s (sec_s + grad_s . dq_s) / (N R0) <= 0, one row per user
    Arows = np.zeros((K, nv))
    brows = np.zeros(K)
    Arows[:, 0] = 1.0
    for s, (n, k) in enumerate(zip(n_idx, users)):
        brows[k] += sec[s] / (N * R0)
        qc = qcols(n + 1)
        if qc is not None:
            Arows[k, qc] -= L * grad[s] / (N * R0)
            brows[k] -= grad[s] @ refs[n] / (N * R0)
    cons = [Affine(Arows, brows)]
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
    obj = np.zeros(nv)
    obj[0] = 1.0
    prog = ConvexProgram(nv, obj, cons)
    x0 = np.zeros(nv)
    start = interior_start(Q_ref, cfg.s_max)
    for n in range(1, N):
        x0[qcols(n)] = start[n - 1] / L
    z0 = float(np.min(brows - Arows[:, 1:] @ x0[1:]))
    x0[0] = z0 - 1e-6 * (1.0 + abs(z0))
    rep = solve(prog, x0, tol=1e-8)
    pts = Q_ref.points.copy()
    for n in range(1, N):
        pts[n] = L * rep.x[qcols(n)]
    return Trajectory(pts), rep.status


def optimize_trajectory_af(A, P, Q_init: Trajectory, cfg, stats=None):
    """Trust-region SCA on the exact AF secrecy; never lowers zeta."""
    Q = Q_init
    zeta = _zeta(cfg, A, P, Q)
    radius = min(cfg.s_max, 0.2 * cfg.altitude)
    statuses = []
    it = 0
    for it in range(1, cfg.max_sca_iter + 1):
        out = solve_af_step(A, P, Q, cfg, radius)
        if out is None:
            break
        Q_new, status = out
        statuses.append(status)
        lam, accepted = 1.0, None
        for _ in range(6):
            Qc = Trajectory(Q.points + lam * (Q_new.points - Q.points))
            zc = _zeta(cfg, A, P, Qc)
            if zc >= zeta:
                accepted = (Qc, zc)
                break
            lam *= 0.5
        if accepted is None:
            radius *= 0.5
            if radius < 1e-3:
                break
            continue
        gain = accepted[1] - zeta
        Q, zeta = accepted
        if gain <= cfg.sca_tol * max(zeta, 1e-300):
            break
    if stats is not None:
        stats.update(iterations=it, statuses=statuses, zeta=zeta)
    return Q


def run_baseline(cfg: ScenarioConfig):
    """Same alternating loop with the AF relay in place of the RIS."""
    return run_alternating(cfg, AfModel())
