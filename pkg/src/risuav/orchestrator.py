"""Alternating optimisation over association, power and trajectory/phases.

The loop is written against a small link-model interface so the RIS schemes
and the AF relay baseline share the same block order, gates and safeguard.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import assoc, power, rates, trajectory_s1
from .channel import aligned_phases_from_aoa, phase_sum
from .rates import Allocation, SolutionState
from .scenario import ScenarioConfig, initial_trajectory

TRACE_FIELDS = [
    "iteration", "gamma", "zeta", "gamma_eve_bound", "zeta_eve_bound",
    "total_power_w", "served_slots", "assoc_changed", "dinkelbach_iters",
    "power_sca_iters", "trajectory_iters", "trajectory_status", "safeguard",
    "t_assoc_s", "t_power_s", "t_trajectory_s", "wall_s",
]
TIMING_FIELDS = {"t_assoc_s", "t_power_s", "t_trajectory_s", "wall_s"}
TRACE_SCHEMA_VERSION = 1
# column names as written to CSV, with units
CSV_HEADER = {
    "gamma": "gamma_bit_per_s_hz_w", "zeta": "zeta_bit_per_s_hz",
    "gamma_eve_bound": "gamma_eve_bound_bit_per_s_hz_w",
    "zeta_eve_bound": "zeta_eve_bound_bit_per_s_hz",
}


@dataclass
class IterationTrace:
    rows: list = field(default_factory=list)

    def append(self, **row):
        self.rows.append({k: row.get(k, "") for k in TRACE_FIELDS})

    @property
    def gammas(self):
        return np.array([r["gamma"] for r in self.rows], dtype=float)

    @property
    def zetas(self):
        return np.array([r["zeta"] for r in self.rows], dtype=float)

    def min_step(self):
        g = self.gammas
        return float(np.min(np.diff(g))) if len(g) > 1 else 0.0

    def deterministic_rows(self):
        return [{k: v for k, v in r.items() if k not in TIMING_FIELDS} for r in self.rows]

    @classmethod
    def read_csv(cls, path):
        """Inverse of ``write_csv`` (numbers come back as float/int)."""
        names = {v: k for k, v in CSV_HEADER.items()}
        out = cls()
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                row = {}
                for key, val in r.items():
                    key = names.get(key, key)
                    if key == "trajectory_status" or val == "":
                        row[key] = val
                    else:
                        try:
                            row[key] = int(val)
                        except ValueError:
                            row[key] = float(val)
                out.rows.append(row)
        return out

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=TRACE_FIELDS)
            w.writerow({k: CSV_HEADER.get(k, k) for k in TRACE_FIELDS})
            for r in self.rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


# --- link models -------------------------------------------------------------

class RisModel:
    """UAV-mounted RIS; ``scheme`` 1 aligns then moves, 2 optimises jointly."""

    name = "ris"

    def __init__(self, scheme=1):
        if scheme not in (1, 2):
            raise ValueError("scheme must be 1 or 2")
        self.scheme = scheme

    def initial_phases(self, cfg, A, Q):
        return trajectory_s1.schedule_phases(cfg, A, Q.slot_positions())

    def extra_power(self, cfg, A, P):
        return 0.0

    def slot_secrecy(self, cfg, A, P, Q, theta, eve="exact"):
        return rates.secrecy_matrix(cfg, Allocation(A, P), Q.slot_positions(), theta, eve)

    def candidate_secrecy(self, cfg, A, P, Q, theta):
        """Secrecy rate of every user in every slot if it were served there.

        Slot power is the incumbent one (P_k in silent slots); the incumbent
        user keeps the current phases, any other user gets BS-aligned ones.
        """
        K, N = A.shape
        pts = Q.slot_positions()
        g = rates.geometry(cfg, pts)
        M, sp = cfg.ris_elements, cfg.element_spacing_ratio
        theta_c = aligned_phases_from_aoa(g["phi_k"], g["phi_b"][None], M, sp)
        served = A > 0.5
        theta_c[served] = np.broadcast_to(theta[None], (K, N, M))[served]
        h2, a = cfg.ref_gain ** 2, cfg.pathloss
        pl_k = g["d_k"] ** a
        Cb = np.abs(phase_sum(theta_c, g["phi_b"][None], g["phi_k"], sp)) ** 2
        Ce = np.abs(phase_sum(theta_c, g["phi_e"][None], g["phi_k"], sp)) ** 2
        gb = h2 * Cb / (pl_k * g["d_b"][None] ** a)
        ge = h2 * Ce / (pl_k * g["d_e"][None] ** a)
        p = slot_power(A, P, cfg.max_power)[None]
        r = rates.rate_bs(p, gb, cfg.noise)
        c = rates.rate_eve(p, ge, cfg.noise)
        return np.maximum(r - c, 0.0), np.broadcast_to(p, (K, N))

    def realign(self, cfg, A_new, A_old, Q, theta):
        """Re-align slots whose user changed; the rest keep their phases."""
        out = trajectory_s1.schedule_phases(cfg, A_new, Q.slot_positions(), theta)
        same = (A_new > 0.5).any(axis=0) & (np.argmax(A_new, 0) == np.argmax(A_old, 0)) \
            & (A_old > 0.5).any(axis=0)
        out[same] = theta[same]
        return out

    def gains(self, cfg, A, Q, theta):
        return power.ris_gains(cfg, Q.slot_positions(), theta)

    def move(self, cfg, A, P, Q, theta, stats):
        if self.scheme == 1:
            return trajectory_s1.optimize_trajectory_s1(A, P, Q, cfg, theta, stats=stats)
        from . import trajectory_s2

        return trajectory_s2.optimize_trajectory_s2(A, P, Q, theta, cfg, stats=stats)


def slot_power(A, P, max_power):
    """Power used in each slot: the served user's, or P_k if nobody transmits."""
    A = np.asarray(A)
    P = np.asarray(P)
    N = A.shape[1]
    users = np.argmax(A, axis=0)
    p = P[users, np.arange(N)]
    live = (A.max(axis=0) > 0.5) & (p > 0)
    return np.where(live, p, max_power)


def model_evaluate(cfg, model, A, P, Q, theta, eve="exact"):
    R = model.slot_secrecy(cfg, A, P, Q, theta, eve)
    zeta = rates.min_avg_secrecy(R)
    return zeta, rates.secrecy_ee(zeta, P, cfg.circuit_power, model.extra_power(cfg, A, P))


def silence_idle(A, P):
    """Slots with zero power carry nothing; mark them unassociated."""
    A = np.where(P > 0, A, 0.0)
    return A, np.where(A > 0.5, P, 0.0)


def round_robin(cfg):
    K, N = cfg.num_users, cfg.num_slots
    A = np.zeros((K, N))
    A[np.arange(N) % K, np.arange(N)] = 1.0
    return A


# --- blocks ------------------------------------------------------------------

def association_block(cfg, model, A, P, Q, theta):
    R, p_cand = model.candidate_secrecy(cfg, A, P, Q, theta)
    A_lp, _ = assoc.solve_association_lp(R)
    A_new = assoc.prune_unprofitable(assoc.round_association(A_lp), R)
    P_new = np.where(A_new > 0.5, p_cand, 0.0)
    return A_new, P_new, model.realign(cfg, A_new, A, Q, theta)


def power_block(cfg, model, A, P, Q, theta):
    res = power.dinkelbach(A, model.gains(cfg, A, Q, theta), P, cfg)
    A2, P2 = silence_idle(A, res.power)
    return A2, P2, res


def run_alternating(cfg: ScenarioConfig, model, Q0=None, A0=None, P0=None):
    """Generic outer loop; returns ``(SolutionState, IterationTrace)``."""
    t_start = time.perf_counter()
    Q = Q0 if Q0 is not None else initial_trajectory(cfg)
    A = round_robin(cfg) if A0 is None else np.asarray(A0, dtype=float)
    P = A * cfg.max_power if P0 is None else np.asarray(P0, dtype=float)
    theta = model.initial_phases(cfg, A, Q)
    zeta, gamma = model_evaluate(cfg, model, A, P, Q, theta)
    trace = IterationTrace()

    def record(it, **extra):
        zb, gb = model_evaluate(cfg, model, A, P, Q, theta, eve="bound")
        trace.append(iteration=it, gamma=gamma, zeta=zeta, gamma_eve_bound=gb,
                     zeta_eve_bound=zb, total_power_w=float(P.sum()),
                     served_slots=int((A.max(axis=0) > 0.5).sum()),
                     wall_s=time.perf_counter() - t_start, **extra)

    record(0)
    prev_zero = gamma == 0
    for it in range(1, cfg.max_outer_iter + 1):
        gamma_prev = gamma
        # (a) association, gated through the power block against the incumbent
        t0 = time.perf_counter()
        A_c, P_c, theta_c = association_block(cfg, model, A, P, Q, theta)
        t1 = time.perf_counter()
        cands = [(A, P, theta)]
        if not np.array_equal(A_c, A):
            cands.append((A_c, P_c, theta_c))
        best = None
        dk_iters = sca_iters = 0
        for Ai, Pi, thi in cands:
            A2, P2, res = power_block(cfg, model, Ai, Pi, Q, thi)
            dk_iters += len(res.eta)
            sca_iters += res.sca_iterations
            z2, g2 = model_evaluate(cfg, model, A2, P2, Q, thi)
            if best is None or g2 > best[4]:
                best = (A2, P2, thi, z2, g2)
        changed = best[0] is not cands[0][0] and not np.array_equal(best[0], A)
        A, P, theta, zeta, gamma = best
        t2 = time.perf_counter()
        # (b) trajectory and phases, with the step-8 safeguard
        stats = {}
        Q_keep, theta_keep, zeta_keep, gamma_keep = Q, theta, zeta, gamma
        Q, theta = model.move(cfg, A, P, Q, theta, stats)
        zeta, gamma = model_evaluate(cfg, model, A, P, Q, theta)
        reverted = gamma < gamma_keep
        if reverted:
            Q, theta, zeta, gamma = Q_keep, theta_keep, zeta_keep, gamma_keep
        t3 = time.perf_counter()
        record(it, assoc_changed=int(changed), dinkelbach_iters=dk_iters,
               power_sca_iters=sca_iters, trajectory_iters=stats.get("iterations", 0),
               trajectory_status=";".join(stats.get("statuses", [])),
               safeguard=int(reverted), t_assoc_s=t1 - t0, t_power_s=t2 - t1,
               t_trajectory_s=t3 - t2)
        if gamma == 0:
            if prev_zero:
                break
            prev_zero = True
            continue
        prev_zero = False
        if abs(gamma - gamma_prev) <= cfg.outer_tol * gamma:
            break
    state = SolutionState(Allocation(A, P), Q, theta, zeta, gamma, trace.rows)
    return state, trace


def run_algorithm2(cfg: ScenarioConfig, scheme=1):
    """Alternating optimisation of the RIS link with Scheme I or II."""
    return run_alternating(cfg, RisModel(scheme))


def complexity_estimate(cfg: ScenarioConfig, scheme=1, trace: IterationTrace | None = None):
    """Per-iteration interior-point operation counts of the three blocks."""
    K, N, M = cfg.num_users, cfg.num_slots, cfg.ris_elements
    e1, e2 = cfg.dinkelbach_tol, cfg.sca_tol
    out = {
        "association": K * N,
        "power": (K * N) ** 3.5 * math.log2(1 / e1),
        "trajectory_scheme1": (2 * K * N) ** 3.5 * math.log2(1 / e2),
        "trajectory_scheme2": ((6 * K + M) * N) ** 3.5 * math.log2(1 / e2),
    }
    key = "trajectory_scheme1" if scheme in (1, "I") else "trajectory_scheme2"
    out["per_iteration"] = out["association"] + out["power"] + out[key]
    if trace is not None:
        rows = trace.rows[1:]
        out["measured"] = {
            "outer_iterations": len(rows),
            "dinkelbach_iterations": sum(int(r["dinkelbach_iters"] or 0) for r in rows),
            "power_sca_iterations": sum(int(r["power_sca_iters"] or 0) for r in rows),
            "trajectory_iterations": sum(int(r["trajectory_iters"] or 0) for r in rows),
        }
    return out
