"""Rates, secrecy rates and the fair secrecy energy efficiency.

``evaluate`` is the single place where the reported objective is computed.
It always uses the exact Eve array factor; the M^2 bound is available for
the surrogate-safety checks only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import TWO_PI, aoa_cosine, distance, phase_sum
from .scenario import ScenarioConfig, Trajectory

FEAS_TOL = 1e-6


class InfeasibleState(ValueError):
    pass


@dataclass
class Allocation:
    """Association a_k[n] and transmit power p_k[n] (both K x N)."""

    assoc: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        self.assoc = np.asarray(self.assoc, dtype=float)
        self.power = np.asarray(self.power, dtype=float)
        if self.assoc.shape != self.power.shape or self.assoc.ndim != 2:
            raise ValueError("assoc and power must both be K x N")

    def copy(self) -> "Allocation":
        return Allocation(self.assoc.copy(), self.power.copy())

    def check(self, max_power: float, tol: float = FEAS_TOL):
        if np.any(self.assoc < -tol) or np.any(self.assoc > 1 + tol):
            raise InfeasibleState("association outside [0, 1]")
        if np.any(self.assoc.sum(axis=0) > 1 + tol):
            raise InfeasibleState("more than one user served in a slot")
        if np.any(self.power < -tol) or np.any(self.power > max_power + tol):
            raise InfeasibleState("transmit power outside [0, P_k]")


@dataclass
class SolutionState:
    allocation: Allocation
    trajectory: Trajectory
    phases: np.ndarray  # N x M, radians in [0, 2pi)
    zeta: float = 0.0
    gamma: float = 0.0
    trace: list = field(default_factory=list)


def wrap_phases(theta):
    return np.mod(np.asarray(theta, dtype=float), TWO_PI)


def rate_bs(p, gain_power, noise):
    """log2(1 + p g / sigma^2); log1p keeps tiny SNRs exact."""
    return np.log1p(np.asarray(p) * gain_power / noise) / np.log(2.0)


def rate_eve(p, gain_power_eve, noise):
    return rate_bs(p, gain_power_eve, noise)


def secrecy_rate(a, r, c):
    return a * np.maximum(np.asarray(r) - np.asarray(c), 0.0)


def min_avg_secrecy(R) -> float:
    R = np.atleast_2d(np.asarray(R, dtype=float))
    return float(np.min(R.mean(axis=1)))


def secrecy_ee(zeta, power, circuit_power, extra_power=0.0) -> float:
    """zeta / (sum p + P0)."""
    return float(zeta / (np.sum(power) + circuit_power + extra_power))


def geometry(cfg: ScenarioConfig, points):
    """Distances and AoA cosines for slot positions ``points`` (N x 2).

    Returns a dict of arrays: ``d_k``/``phi_k`` are K x N, the BS and Eve
    entries have shape (N,).
    """
    q = np.asarray(points, dtype=float)
    H = cfg.altitude
    W = cfg.user_array[:, None, :]
    return {
        "d_k": distance(q[None], W, H),
        "phi_k": aoa_cosine(q[None], W, H),
        "d_b": distance(q, cfg.bs_pos, H),
        "phi_b": aoa_cosine(q, np.asarray(cfg.bs_pos), H),
        "d_e": distance(q, cfg.eve_pos, H),
        "phi_e": aoa_cosine(q, np.asarray(cfg.eve_pos), H),
    }


def slot_gains(cfg: ScenarioConfig, points, phases, eve="exact"):
    """Cascaded power gains toward the BS and Eve for every (user, slot).

    ``phases`` is N x M; slot n uses row n for whichever user transmits.
    """
    g = geometry(cfg, points)
    a, h2, M = cfg.pathloss, cfg.ref_gain ** 2, cfg.ris_elements
    theta = np.asarray(phases, dtype=float)[None, :, :]
    sp = cfg.element_spacing_ratio
    Cb2 = np.abs(phase_sum(theta, g["phi_b"][None], g["phi_k"], sp)) ** 2
    pl_k = g["d_k"] ** a
    gain_b = h2 * Cb2 / (pl_k * g["d_b"][None] ** a)
    if eve == "exact":
        Ce2 = np.abs(phase_sum(theta, g["phi_e"][None], g["phi_k"], sp)) ** 2
    elif eve == "bound":
        Ce2 = float(M) ** 2
    else:
        raise ValueError(f"unknown eve mode {eve!r}")
    gain_e = h2 * Ce2 / (pl_k * g["d_e"][None] ** a)
    return gain_b, gain_e


def secrecy_matrix(cfg, allocation: Allocation, points, phases, eve="exact"):
    gb, ge = slot_gains(cfg, points, phases, eve)
    r = rate_bs(allocation.power, gb, cfg.noise)
    c = rate_eve(allocation.power, ge, cfg.noise)
    return secrecy_rate(allocation.assoc, r, c)


def evaluate(cfg: ScenarioConfig, state: SolutionState, eve="exact",
             check=True) -> tuple[float, float]:
    """Recompute (zeta, Gamma) from scratch for a solution state."""
    if check:
        state.allocation.check(cfg.max_power)
        if not state.trajectory.is_feasible(cfg.s_max, tol=FEAS_TOL):
            raise InfeasibleState("trajectory violates closure or speed limit")
    R = secrecy_matrix(cfg, state.allocation, state.trajectory.slot_positions(),
                       state.phases, eve)
    zeta = min_avg_secrecy(R)
    return zeta, secrecy_ee(zeta, state.allocation.power, cfg.circuit_power)
