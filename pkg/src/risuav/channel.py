"""Deterministic line-of-sight geometry and RIS cascaded gains.

All functions broadcast over leading axes of the position arrays, so the
same code serves a single point and a whole (users x slots) grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


def distance(q, w, H):
    """3-D distance between a UAV at horizontal ``q`` and ground point ``w``."""
    diff = np.asarray(q, dtype=float) - np.asarray(w, dtype=float)
    return np.sqrt(np.sum(diff * diff, axis=-1) + H * H)


def aoa_cosine(q, w, H):
    """Cosine of the angle of arrival along the array (x) axis."""
    q = np.asarray(q, dtype=float)
    w = np.asarray(w, dtype=float)
    return (q[..., 0] - w[..., 0]) / distance(q, w, H)


@dataclass(frozen=True)
class SteeringChannel:
    amplitude: float
    phi: float
    num_elements: int
    spacing: float = 0.5

    def __post_init__(self):
        if abs(self.phi) > 1.0 + 1e-12:
            raise ValueError("AoA cosine must lie in [-1, 1]")

    def vector(self) -> np.ndarray:
        m = np.arange(self.num_elements)
        return self.amplitude * np.exp(-1j * TWO_PI * self.spacing * m * self.phi)


def steering_channel(q, w, H, cfg) -> SteeringChannel:
    d = float(distance(q, w, H))
    amp = np.sqrt(cfg.ref_gain * d ** (-cfg.pathloss))
    return SteeringChannel(amp, float(aoa_cosine(q, w, H)), cfg.ris_elements,
                           cfg.element_spacing_ratio)


def phase_sum(theta, phi_rx, phi_tx, spacing):
    """sum_m exp(j(theta_m + 2 pi (m-1) spacing (phi_rx - phi_tx))).

    ``theta`` has the element axis last; ``phi_rx``/``phi_tx`` broadcast
    against the remaining axes.
    """
    theta = np.asarray(theta, dtype=float)
    m = np.arange(theta.shape[-1])
    dphi = np.asarray(phi_rx - phi_tx, dtype=float)[..., None]
    return np.exp(1j * (theta + TWO_PI * spacing * m * dphi)).sum(axis=-1)


def cascaded_gain(g_rx: SteeringChannel, theta, g_tx: SteeringChannel) -> complex:
    """g_rx^H diag(e^{j theta}) g_tx for two ULA channels."""
    theta = np.asarray(theta, dtype=float)
    if not (len(theta) == g_rx.num_elements == g_tx.num_elements):
        raise ValueError("phase vector and channels must have equal length M")
    s = phase_sum(theta, g_rx.phi, g_tx.phi, g_rx.spacing)
    return complex(g_rx.amplitude * g_tx.amplitude * s)


def aligned_phases_from_aoa(phi_tx, phi_rx, num_elements, spacing, omega=0.0):
    """Phases that co-phase the tx->RIS->rx path, wrapped to [0, 2pi)."""
    m = np.arange(num_elements)
    dphi = np.asarray(phi_tx - phi_rx, dtype=float)[..., None]
    return np.mod(TWO_PI * spacing * m * dphi + omega, TWO_PI)


def aligned_gain_power(d_rx, d_tx, cfg):
    """|cascaded gain|^2 under coherent alignment: h0^2 M^2 / (d_rx^a d_tx^a)."""
    a = cfg.pathloss
    return cfg.ref_gain ** 2 * cfg.ris_elements ** 2 / (
        np.asarray(d_rx, dtype=float) ** a * np.asarray(d_tx, dtype=float) ** a)


def eve_gain_power(q, w_k, cfg, theta=None, exact=True):
    """Power gain user -> RIS -> Eve.

    With ``exact`` the array factor of ``theta`` toward Eve is used; otherwise
    the coherent worst case M^2 (an upper bound for every phase choice).
    """
    H, a = cfg.altitude, cfg.pathloss
    d_k = distance(q, w_k, H)
    d_e = distance(q, cfg.eve_pos, H)
    if exact:
        if theta is None:
            raise ValueError("exact Eve gain needs the phase vector")
        phi_k = aoa_cosine(q, w_k, H)
        phi_e = aoa_cosine(q, cfg.eve_pos, H)
        C2 = np.abs(phase_sum(theta, phi_e, phi_k, cfg.element_spacing_ratio)) ** 2
    else:
        C2 = float(cfg.ris_elements) ** 2
    return cfg.ref_gain ** 2 * C2 / (d_k ** a * d_e ** a)
