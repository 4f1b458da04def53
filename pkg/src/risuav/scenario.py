"""Scenario configuration, unit handling and the initial trajectory."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
import yaml


class ConfigError(ValueError):
    """Raised for missing, malformed or physically invalid scenario input."""


Point = tuple[float, float]


def db_to_linear(x: float) -> float:
    return 10.0 ** (x / 10.0)


def dbm_to_watts(x: float) -> float:
    return 10.0 ** ((x - 30.0) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """All physical and algorithmic parameters, in linear SI units.

    Lengths are meters, powers watts, times seconds. ``ref_gain`` is the
    linear channel power gain at 1 m and ``noise`` the noise power in W.
    """

    users: tuple[Point, ...]
    eve_pos: Point
    bs_pos: Point
    num_slots: int
    period: float
    altitude: float
    v_max: float
    pathloss: float
    ris_elements: int
    element_spacing_ratio: float
    ref_gain: float
    noise: float
    circuit_power: float
    max_power: float
    af_relay_power: float = 0.2
    q0: Point | None = None
    outer_tol: float = 1e-4
    dinkelbach_tol: float = 1e-4
    sca_tol: float = 1e-3
    max_outer_iter: int = 50
    max_dinkelbach_iter: int = 30
    max_sca_iter: int = 30

    def __post_init__(self):
        users = tuple((float(x), float(y)) for x, y in self.users)
        object.__setattr__(self, "users", users)
        for name in ("eve_pos", "bs_pos", "q0"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, (float(val[0]), float(val[1])))
        if len(users) < 1:
            raise ConfigError("at least one user is required")
        if self.num_slots < 1:
            raise ConfigError("num_slots must be >= 1")
        if self.ris_elements < 1:
            raise ConfigError("ris_elements must be >= 1")
        if self.pathloss < 2:
            raise ConfigError("pathloss exponent must be >= 2")
        for name in ("period", "altitude", "ref_gain", "noise", "circuit_power",
                     "element_spacing_ratio"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        # zero is allowed for the degenerate no-transmission case
        for name in ("max_power", "af_relay_power", "v_max"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be non-negative")
        for name in ("outer_tol", "dinkelbach_tol", "sca_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def slot_duration(self) -> float:
        return self.period / self.num_slots

    @property
    def s_max(self) -> float:
        return self.v_max * self.period / self.num_slots

    @property
    def user_array(self) -> np.ndarray:
        return np.asarray(self.users, dtype=float)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class Trajectory:
    """UAV horizontal positions q[0..N]; q[0] is the fixed start."""

    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("trajectory points must have shape (N+1, 2)")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def num_slots(self) -> int:
        return self.points.shape[0] - 1

    def slot_positions(self) -> np.ndarray:
        """Positions q[1..N] used in slots 1..N."""
        return self.points[1:]

    def step_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)

    def violations(self, s_max: float) -> tuple[float, float]:
        """(closure gap, worst speed excess) in meters."""
        closure = float(np.linalg.norm(self.points[-1] - self.points[0]))
        excess = float(max(0.0, np.max(self.step_lengths()) - s_max))
        return closure, excess

    def is_feasible(self, s_max: float, tol: float = 1e-9) -> bool:
        closure, excess = self.violations(s_max)
        return closure <= tol and excess <= tol


def default_paper_scenario() -> ScenarioConfig:
    return ScenarioConfig(
        users=((300.0, 300.0), (-300.0, 300.0), (-300.0, -300.0), (300.0, -300.0)),
        eve_pos=(0.0, 200.0),
        bs_pos=(0.0, 0.0),
        num_slots=12,
        period=80.0,
        altitude=100.0,
        v_max=50.0,
        pathloss=2.2,
        ris_elements=10,
        element_spacing_ratio=0.5,
        ref_gain=db_to_linear(-80.0),
        noise=dbm_to_watts(-120.0),
        circuit_power=1.0,
        max_power=1.0,
        af_relay_power=0.2,
    )


# key in the document -> dataclass field
_KEYS = {
    "eve": "eve_pos",
    "bs": "bs_pos",
    "num_slots": "num_slots",
    "period_s": "period",
    "altitude_m": "altitude",
    "v_max_mps": "v_max",
    "pathloss_exponent": "pathloss",
    "ris_elements": "ris_elements",
    "element_spacing_ratio": "element_spacing_ratio",
    "circuit_power_w": "circuit_power",
    "max_power_w": "max_power",
    "af_relay_power_w": "af_relay_power",
    "q0": "q0",
}
_OPTIONAL = {"af_relay_power_w", "q0", "element_spacing_ratio"}
_ALGO_KEYS = {"outer_tol", "dinkelbach_tol", "sca_tol", "max_outer_iter",
              "max_dinkelbach_iter", "max_sca_iter"}
_INT_FIELDS = {"num_slots", "ris_elements", "max_outer_iter",
               "max_dinkelbach_iter", "max_sca_iter"}


def _point(value, key) -> Point:
    try:
        x, y = value
        return float(x), float(y)
    except (TypeError, ValueError):
        raise ConfigError(f"{key!r} must be a pair of coordinates in meters") from None


def _scalar(value, key, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key!r} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{key!r} must be finite")
    if integer:
        if int(value) != value:
            raise ConfigError(f"{key!r} must be an integer")
        return int(value)
    return float(value)


def _gain_key(doc, base, kind):
    """Read a power quantity given linearly, in dB or in dBm."""
    given = [k for k in (base, base + "_db", base + "_dbm") if k in doc]
    if not given:
        raise ConfigError(f"missing key {base!r} (or {base}_db / {base}_dbm)")
    if len(given) > 1:
        raise ConfigError(f"conflicting keys {given}")
    key = given[0]
    val = _scalar(doc[key], key)
    if key.endswith("_dbm"):
        return dbm_to_watts(val)
    if key.endswith("_db"):
        return db_to_linear(val)
    if val <= 0:
        raise ConfigError(f"{key!r} must be positive ({kind})")
    return val


def config_from_dict(doc: dict) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError("scenario document must be a mapping")
    if "users" not in doc:
        raise ConfigError("missing key 'users'")
    users = doc["users"]
    if not isinstance(users, list) or not users:
        raise ConfigError("'users' must be a non-empty list")
    kw = {"users": tuple(
        _point(u["pos"] if isinstance(u, dict) else u, "users") for u in users)}
    for key, name in _KEYS.items():
        if key not in doc:
            if key in _OPTIONAL:
                continue
            raise ConfigError(f"missing key {key!r}")
        if name in ("eve_pos", "bs_pos", "q0"):
            kw[name] = None if doc[key] is None else _point(doc[key], key)
        else:
            kw[name] = _scalar(doc[key], key, integer=name in _INT_FIELDS)
    kw["ref_gain"] = _gain_key(doc, "ref_gain", "linear power ratio")
    kw["noise"] = _gain_key(doc, "noise_power", "watts")
    for key in _ALGO_KEYS & doc.keys():
        kw[key] = _scalar(doc[key], key, integer=key in _INT_FIELDS)
    unknown = set(doc) - set(_KEYS) - _ALGO_KEYS - {
        "users", "s_max_m", "ref_gain", "ref_gain_db", "ref_gain_dbm",
        "noise_power", "noise_power_db", "noise_power_dbm", "schema"}
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    kw.setdefault("element_spacing_ratio", 0.5)  # half-wavelength array
    cfg = ScenarioConfig(**kw)
    if "s_max_m" in doc:
        s_max = _scalar(doc["s_max_m"], "s_max_m")
        if not math.isclose(s_max, cfg.s_max, rel_tol=1e-9, abs_tol=1e-9):
            raise ConfigError(
                f"s_max_m={s_max} disagrees with v_max*T/N={cfg.s_max}")
    return cfg


def parse_config(text: str) -> ScenarioConfig:
    """Parse a YAML (or JSON) scenario document into a validated config."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"unparseable scenario document: {exc}") from None
    return config_from_dict(doc)


def config_to_dict(cfg: ScenarioConfig) -> dict:
    doc = {"users": [list(u) for u in cfg.users]}
    for key, name in _KEYS.items():
        val = getattr(cfg, name)
        if isinstance(val, tuple):
            val = list(val)
        doc[key] = val
    doc["ref_gain"] = cfg.ref_gain
    doc["noise_power"] = cfg.noise
    for key in sorted(_ALGO_KEYS):
        doc[key] = getattr(cfg, key)
    return doc


def serialize_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _polygon_waypoints(cfg: ScenarioConfig) -> np.ndarray:
    bs = np.asarray(cfg.bs_pos)
    rel = 0.5 * (cfg.user_array - bs)
    order = np.argsort(np.arctan2(rel[:, 1], rel[:, 0]), kind="stable")
    return bs + rel[order]


def _resample_closed(vertices: np.ndarray, n: int) -> np.ndarray:
    """n points equally spaced by arc length along the closed polygon."""
    closed = np.vstack([vertices, vertices[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    total = seg.sum()
    if total == 0.0:
        return np.repeat(vertices[:1], n, axis=0)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.arange(n) * total / n
    out = np.empty((n, 2))
    for i, si in enumerate(s):
        j = min(np.searchsorted(cum, si, side="right") - 1, len(seg) - 1)
        frac = 0.0 if seg[j] == 0 else (si - cum[j]) / seg[j]
        out[i] = closed[j] + frac * (closed[j + 1] - closed[j])
    return out


def initial_trajectory(cfg: ScenarioConfig) -> Trajectory:
    """Closed polygon through half-scaled user waypoints, resampled to N steps.

    The polygon is shrunk toward its centroid when the equal spacing would
    exceed ``s_max``; with ``s_max == 0`` this collapses to hovering.
    """
    verts = _polygon_waypoints(cfg)
    n = cfg.num_slots
    closed = np.vstack([verts, verts[:1]])
    perimeter = np.linalg.norm(np.diff(closed, axis=0), axis=1).sum()
    if perimeter / n > cfg.s_max:
        scale = cfg.s_max * n / perimeter
        # strictly inside the speed limit
        scale *= 1.0 - 1e-12
        centroid = verts.mean(axis=0)
        verts = centroid + scale * (verts - centroid)
    pts = _resample_closed(verts, n)
    if cfg.q0 is not None:
        pts = pts + (np.asarray(cfg.q0) - pts[0])
    return Trajectory(np.vstack([pts, pts[:1]]))
