"""Transmit power control: Dinkelbach outer loop with SCA on the Eve rate.

Every slot's secrecy rate is modelled as

    weight * [log2(1 + p G) - log2(1 + p E)]

with G, E the legitimate and eavesdropper SNR per watt. The RIS link uses
weight 1 and G = g_b / sigma^2; the half-duplex AF relay fits the same form
with weight 1/2 (see ``baseline_af``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rates
from .convex_core import Affine, ConvexProgram, SmoothConvex, solve

LN2 = np.log(2.0)


@dataclass(frozen=True)
class SlotGains:
    legit: np.ndarray
    eve: np.ndarray
    weight: float = 1.0
    fixed_power: float = 0.0  # watts added to the denominator (relay power)


@dataclass
class PowerResult:
    power: np.ndarray
    zeta: float
    gamma: float
    eta: list = field(default_factory=list)
    F: list = field(default_factory=list)
    zeta_trace: list = field(default_factory=list)
    sca_iterations: int = 0
    statuses: list = field(default_factory=list)


def linearize_eve_rate(p_ref, gain_e, noise):
    """Tangent of c(p) = log2(1 + p g / sigma^2) at p_ref as (intercept, slope).

    c is concave in p, so intercept + slope * p upper-bounds it everywhere.
    """
    g = np.asarray(gain_e, dtype=float)
    p_ref = np.asarray(p_ref, dtype=float)
    c0 = np.log1p(p_ref * g / noise) / LN2
    slope = g / (LN2 * (noise + p_ref * g))
    return c0 - slope * p_ref, slope


def dinkelbach_eta(zeta, allocation, circuit_power, extra_power=0.0):
    return rates.secrecy_ee(zeta, allocation.power, circuit_power, extra_power)


def secrecy_per_slot(P, A, gains: SlotGains):
    r = np.log1p(P * gains.legit) / LN2
    c = np.log1p(P * gains.eve) / LN2
    return gains.weight * A * np.maximum(r - c, 0.0)


def exact_objective(P, A, gains: SlotGains, circuit_power):
    zeta = rates.min_avg_secrecy(secrecy_per_slot(P, A, gains))
    return zeta, zeta / (P.sum() + circuit_power + gains.fixed_power)


def active_mask(A, gains: SlotGains, max_power):
    """Served pairs that can carry secret bits at all (G > E)."""
    mask = (np.asarray(A) > 0.5) & (gains.legit > gains.eve)
    return mask if max_power > 0 else np.zeros_like(mask)


def _user_constraint(G, c_slope, c_int, p_ref_scale, coef):
    """zeta_hat - sum_j coef * (r_j(p_j) - chat_j(p_j)) <= 0 on [zeta, p_hat...]."""

    def fun(X):
        zeta = X[:, 0]
        ph = X[:, 1:]
        u = p_ref_scale * G  # SNR at full power
        r = np.log1p(u * ph) / LN2
        chat = c_int + c_slope * p_ref_scale * ph
        g = zeta - np.sum(coef * (r - chat), axis=1)
        dr = u / ((1.0 + u * ph) * LN2)
        grad = np.concatenate([np.ones((len(zeta), 1)),
                               -coef * (dr - c_slope * p_ref_scale)], axis=1)
        d2 = -(u ** 2) / ((1.0 + u * ph) ** 2 * LN2)
        p = X.shape[1]
        H = np.zeros((len(zeta), p, p))
        i = np.arange(1, p)
        H[:, i, i] = -coef * d2
        return g, grad, H

    return fun


def solve_power_subproblem(eta, A, gains: SlotGains, cfg, P_ref):
    """One convex step of the parametric problem at fixed eta.

    Maximises zeta - eta (sum p + P0 + fixed) with the Eve rate replaced by
    its tangent at ``P_ref``. Pairs with G <= E are pinned to zero power.
    Returns ``(P, zeta_surrogate, F, status)``.
    """
    A = np.asarray(A, dtype=float)
    K, N = A.shape
    Pmax = cfg.max_power
    mask = active_mask(A, gains, Pmax)
    P = np.zeros((K, N))
    denom0 = cfg.circuit_power + gains.fixed_power
    users_ok = mask.any(axis=1)
    if not users_ok.all():
        return P, 0.0, -eta * denom0, "trivial"
    pairs = np.argwhere(mask)
    npair = len(pairs)
    G = gains.legit[mask]
    E = gains.eve[mask]
    p_ref = np.clip(np.asarray(P_ref, dtype=float)[mask], 0.0, Pmax)
    c_int, c_slope = linearize_eve_rate(p_ref, E, 1.0)
    coef_full = gains.weight / N
    # normalise rates so the solver sees O(1) numbers
    R0 = max(float(np.max(coef_full * np.log1p(Pmax * G) / LN2)), 1e-300)
    nv = 1 + npair
    cons = []
    for k in range(K):
        js = np.flatnonzero(pairs[:, 0] == k)
        idx = np.concatenate([[0], 1 + js])
        coef = coef_full / R0
        cons.append(SmoothConvex(idx[None, :], _user_constraint(
            G[js], c_slope[js], c_int[js], Pmax, coef), name=f"user{k}"))
    box = np.zeros((2 * npair, nv))
    box[:npair, 1:] = np.eye(npair)
    box[npair:, 1:] = -np.eye(npair)
    cons.append(Affine(box, np.concatenate([np.ones(npair), np.zeros(npair)])))
    obj = np.zeros(nv)
    obj[0] = 1.0
    obj[1:] = -eta * Pmax / R0
    prog = ConvexProgram(nv, obj, cons)

    ph0 = np.clip(p_ref / Pmax, 1e-9, 1.0 - 1e-9)
    x0 = np.concatenate([[0.0], ph0])
    rhs = [-c.values(x0)[0] for c in cons[:-1]]  # zeta=0 so g = -rhs
    z0 = min(rhs)
    x0[0] = z0 - 1e-6 * (1.0 + abs(z0))
    rep = solve(prog, x0, tol=1e-9)

    p = np.clip(rep.x[1:] * Pmax, 0.0, Pmax)
    p[p < 1e-9 * Pmax] = 0.0
    P[mask] = p
    chat = c_int + c_slope * p
    sur = coef_full * (np.log1p(p * G) / LN2 - chat)
    zeta_sur = min(float(sur[pairs[:, 0] == k].sum()) for k in range(K))
    F = zeta_sur - eta * (P.sum() + denom0)
    return P, zeta_sur, F, rep.status


def dinkelbach(A, gains: SlotGains, P_init, cfg) -> PowerResult:
    """Algorithm-1 style loop: eta from the incumbent, inner SCA, monotone."""
    A = np.asarray(A, dtype=float)
    mask = active_mask(A, gains, cfg.max_power)
    P = np.where(mask, np.clip(np.asarray(P_init, dtype=float), 0.0, cfg.max_power), 0.0)
    zeta, gamma = exact_objective(P, A, gains, cfg.circuit_power)
    res = PowerResult(P, zeta, gamma)
    denom = lambda Q: Q.sum() + cfg.circuit_power + gains.fixed_power  # noqa: E731
    for _ in range(cfg.max_dinkelbach_iter):
        eta = gamma
        P_t, F_prev, F = P, None, None
        for _ in range(cfg.max_sca_iter):
            P_n, zeta_s, F, status = solve_power_subproblem(eta, A, gains, cfg, P_t)
            res.sca_iterations += 1
            res.statuses.append(status)
            P_t = P_n
            if F_prev is not None and abs(F - F_prev) <= cfg.sca_tol * max(abs(F), 1e-9 * abs(zeta_s), 1e-300):
                break
            F_prev = F
        zeta_n, gamma_n = exact_objective(P_t, A, gains, cfg.circuit_power)
        res.eta.append(eta)
        res.F.append(F)
        if gamma_n < gamma:
            break
        dzeta = abs(zeta_n - zeta)
        P, zeta, gamma = P_t, zeta_n, gamma_n
        res.zeta_trace.append(zeta)
        # F is in rate units: absolute 1e-6 for O(1) rates, relative below that
        if F <= 1e-6 * min(1.0, eta) * denom(P) or (
                dzeta <= 1e-3 * cfg.dinkelbach_tol * max(zeta, 1e-300)
                and gamma_n - eta <= 1e-3 * cfg.dinkelbach_tol * max(gamma_n, 1e-300)):
            break
    res.power, res.zeta, res.gamma = P, zeta, gamma
    return res


def ris_gains(cfg, points, phases) -> SlotGains:
    gb, ge = rates.slot_gains(cfg, points, phases, eve="exact")
    return SlotGains(gb / cfg.noise, ge / cfg.noise)


def optimize_power(A, Q, theta, P_init, cfg) -> PowerResult:
    """Power block for the RIS link at fixed association, trajectory and phases."""
    return dinkelbach(A, ris_gains(cfg, Q.slot_positions(), theta), P_init, cfg)
