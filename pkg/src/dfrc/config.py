"""Scenario configuration, URA geometry helpers and the dual-mode frame plan."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

C_LIGHT = 3.0e8
BOLTZMANN = 1.380649e-23

# Beamwidth products are integers only up to floating rounding.
_GRID_TOL = 1e-6


class ConfigError(ValueError):
    """Invalid scenario configuration or argument."""


@dataclass(frozen=True)
class SystemConfig:
    """All scenario constants.

    Defaults reproduce the simulation table of the reference scenario
    (4x4 transmit URA, 2x2 receive URA, 20 symbols of 5 us per block,
    2.4 GHz carrier, chirp rate 1e10 Hz/s, 30 dBm total power).
    Angles are radians; use :func:`load_config` to read degrees from file.
    """

    n_tx: int = 4
    n_ty: int = 4
    n_rx: int = 2
    n_ry: int = 2
    d_x: float = 0.0625
    d_y: float = 0.0625
    f_c: float = 2.4e9
    mu: float = 1.0e10
    t_s: float = 5.0e-6
    n_symbols: int = 20
    m_blocks: int = 324
    delta_theta: float = math.radians(10.0)
    delta_phi: float = math.radians(10.0)
    mask_order: int = 2
    mod_index: float = 0.5
    pulse: str = "rect"
    rolloff: float = 0.35
    samples_per_symbol: int = 16
    p_tot: float = 1.0
    alpha: float = 3.0
    d_0: float = 100.0
    sigma_delta: float = 1.0
    cell_radius: float = 1000.0
    # UE receiver noise; the swept "p_tot / sigma^2" axis sets this one.
    ue_noise_power: float = 0.1
    # BS receiver noise in the radar SINR, tied to ue_noise_power by a
    # fixed ratio when an SNR axis is swept.
    noise_power: float = 1.0e-16
    # Per-UE interference power at the BS in units of noise_power.
    interference_to_noise: float = 1.0
    rho_user: float = 0.0
    rho_target: float = 0.0
    target_range: float = 400.0
    target_velocity: float = 0.0
    rcs: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_tx", "n_ty", "n_rx", "n_ry", "n_symbols", "m_blocks",
                     "samples_per_symbol"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        for name in ("d_x", "d_y", "f_c", "t_s", "p_tot", "d_0", "cell_radius",
                     "ue_noise_power", "noise_power", "delta_theta", "delta_phi",
                     "target_range"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be strictly positive")
        m = self.mask_order
        if m < 2 or m & (m - 1):
            raise ConfigError(f"mask_order must be a power of two >= 2, got {m}")
        if not 0 < self.mod_index <= 1:
            raise ConfigError("mod_index must lie in (0, 1]")
        if self.pulse not in PULSE_KINDS:
            raise ConfigError(f"pulse must be one of {PULSE_KINDS}, got {self.pulse!r}")
        if not 0 <= self.rolloff <= 1:
            raise ConfigError("rolloff must lie in [0, 1]")
        if self.sigma_delta < 0 or self.interference_to_noise < 0 or self.rcs < 0:
            raise ConfigError("sigma_delta, interference_to_noise and rcs must be >= 0")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        m_e, m_a = grid_shape(self.delta_theta, self.delta_phi)
        if m_e * m_a != self.m_blocks:
            raise ConfigError(
                f"m_blocks={self.m_blocks} does not factor as M_e*M_a={m_e}*{m_a} "
                "for the configured beamwidths")

    @property
    def n_t(self) -> int:
        return self.n_tx * self.n_ty

    @property
    def n_r(self) -> int:
        return self.n_rx * self.n_ry

    @property
    def wavelength(self) -> float:
        return C_LIGHT / self.f_c

    @property
    def block_duration(self) -> float:
        return self.n_symbols * self.t_s

    @property
    def sample_rate(self) -> float:
        return self.samples_per_symbol / self.t_s

    @property
    def bits_per_symbol(self) -> int:
        return int(math.log2(self.mask_order))

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def with_snr_db(self, snr_db: float) -> "SystemConfig":
        """Set ``p_tot / ue_noise_power`` to ``snr_db``, keeping the BS/UE noise ratio."""
        ratio = self.noise_power / self.ue_noise_power
        ue = self.p_tot / 10.0 ** (snr_db / 10.0)
        return self.replace(ue_noise_power=ue, noise_power=ue * ratio)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


PULSE_KINDS = ("rect", "raised-cosine")

_ANGLE_FIELDS = ("delta_theta", "delta_phi")


def config_from_mapping(data: Mapping[str, Any]) -> SystemConfig:
    """Build a config from a key-value mapping; unknown keys are rejected.

    Beamwidths may be given in degrees as ``delta_theta_deg``/``delta_phi_deg``.
    Power fields may be given in dBm with a ``_dbm`` suffix.
    """
    known = {f.name for f in dataclasses.fields(SystemConfig)}
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key.endswith("_deg") and key[:-4] in _ANGLE_FIELDS:
            kwargs[key[:-4]] = math.radians(float(value))
        elif key.endswith("_dbm") and key[:-4] in ("p_tot", "ue_noise_power", "noise_power"):
            kwargs[key[:-4]] = 10.0 ** ((float(value) - 30.0) / 10.0)
        elif key in _ANGLE_FIELDS:
            raise ConfigError(f"{key} must be given in degrees as {key}_deg")
        elif key in known:
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    try:
        return SystemConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot or sign (``1e-17``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)$"),
    list("-+0123456789."))


def load_config(path: str | Path) -> tuple[SystemConfig, dict[str, Any]]:
    """Read a YAML/JSON file. Returns the system config and the optional
    ``experiment`` section (empty dict when absent)."""
    with open(path) as fh:
        data = yaml.load(fh, Loader=_Loader) or {}
    if not isinstance(data, dict):
        raise ConfigError("configuration file must hold a mapping")
    data = dict(data)
    experiment = data.pop("experiment", None) or {}
    if not isinstance(experiment, dict):
        raise ConfigError("'experiment' section must be a mapping")
    return config_from_mapping(data), experiment


@dataclass(frozen=True)
class Direction:
    theta: float
    phi: float

    def is_target_region(self) -> bool:
        return 0 < self.theta < math.pi / 2 and 0 < self.phi < 2 * math.pi

    def is_user_region(self) -> bool:
        return math.pi / 2 < self.theta < math.pi and 0 < self.phi < 2 * math.pi


@dataclass(frozen=True)
class FramePlan:
    scan_directions: tuple[Direction, ...]
    chirp_signs: tuple[int, ...]

    def __len__(self):
        return len(self.scan_directions)


@dataclass(frozen=True)
class UserRecord:
    id: int
    direction: Direction
    distance: float
    shadow: float


def grid_shape(delta_theta: float, delta_phi: float) -> tuple[int, int]:
    """Number of elevation and azimuth cells, ``(pi/2)/delta_theta`` and ``2pi/delta_phi``."""
    if not (delta_theta > 0 and delta_phi > 0):
        raise ConfigError("beamwidths must be strictly positive")
    m_e = (math.pi / 2) / delta_theta
    m_a = (2 * math.pi) / delta_phi
    if abs(m_e - round(m_e)) > _GRID_TOL or abs(m_a - round(m_a)) > _GRID_TOL:
        raise ConfigError("beamwidths must divide pi/2 and 2*pi")
    return int(round(m_e)), int(round(m_a))


def build_frame_plan(cfg: SystemConfig, delta_theta: float | None = None,
                     delta_phi: float | None = None) -> FramePlan:
    """Scan grid for the dynamic beam, elevation-major then azimuth.

    Each direction sits at its cell centre; chirp signs alternate starting
    with an up-chirp.
    """
    d_theta = cfg.delta_theta if delta_theta is None else delta_theta
    d_phi = cfg.delta_phi if delta_phi is None else delta_phi
    m_e, m_a = grid_shape(d_theta, d_phi)
    directions = tuple(
        Direction((i + 0.5) * d_theta, (j + 0.5) * d_phi)
        for i in range(m_e) for j in range(m_a)
    )
    signs = tuple(1 if m % 2 == 0 else -1 for m in range(len(directions)))
    return FramePlan(directions, signs)


def spawn_users(cfg: SystemConfig, count: int, cell_radius: float | None = None,
                rng: np.random.Generator | None = None) -> list[UserRecord]:
    """Drop ``count`` users uniformly over the annulus ``[d_0, cell_radius]``.

    Elevation is uniform on (pi/2, pi), azimuth on (0, 2pi) and the shadowing
    factor is ``exp(sigma_delta * z)`` with standard normal ``z``.
    """
    radius = cfg.cell_radius if cell_radius is None else cell_radius
    if count < 1:
        raise ConfigError("count must be >= 1")
    if radius <= cfg.d_0:
        raise ConfigError("cell_radius must exceed the reference distance d_0")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    u = rng.random(count)
    dist = np.sqrt(cfg.d_0 ** 2 + u * (radius ** 2 - cfg.d_0 ** 2))
    # open intervals: resample the measure-zero endpoints away
    theta = math.pi / 2 + (math.pi / 2) * _open_unit(rng, count)
    phi = 2 * math.pi * _open_unit(rng, count)
    shadow = np.exp(cfg.sigma_delta * rng.standard_normal(count))
    return [UserRecord(i, Direction(float(theta[i]), float(phi[i])), float(dist[i]),
                       float(shadow[i])) for i in range(count)]


def annulus_cdf(d, d_0: float, radius: float):
    """Distance CDF of a point uniform over the annulus ``[d_0, radius]``."""
    d = np.clip(np.asarray(d, dtype=float), d_0, radius)
    return (d ** 2 - d_0 ** 2) / (radius ** 2 - d_0 ** 2)


def _open_unit(rng: np.random.Generator, n: int) -> np.ndarray:
    x = rng.random(n)
    x[x == 0.0] = 0.5
    return x
