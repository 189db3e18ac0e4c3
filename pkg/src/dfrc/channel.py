"""URA steering vectors, downlink channels, UE reception and target echoes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import C_LIGHT, ConfigError, Direction, SystemConfig, UserRecord
from .waveform import ComplexSignal


@dataclass(frozen=True)
class ChannelSet:
    """Downlink rows ``H`` (K x N_t), two-way target matrix ``A`` (N_r x N_t),
    UE receive steering columns ``A_K`` (N_r x K) and per-UE amplitude gains."""

    H: np.ndarray
    A: np.ndarray
    A_K: np.ndarray
    gains: np.ndarray


@dataclass(frozen=True)
class EchoParams:
    tau: float
    f_d: float
    gain: float
    rcs: float = 1.0

    def __post_init__(self):
        if self.tau < 0 or self.gain < 0:
            raise ConfigError("echo delay and gain must be nonnegative")


def steering(direction: Direction, nx: int, ny: int, dx: float, dy: float,
             wavelength: float) -> np.ndarray:
    """Unit-norm URA response, element ``(n_y - 1) * nx + n_x`` (x index fastest)."""
    cos_t = math.cos(direction.theta)
    ux = dx / wavelength * cos_t * math.cos(direction.phi)
    uy = dy / wavelength * cos_t * math.sin(direction.phi)
    ax = np.exp(2j * np.pi * ux * np.arange(nx)) / math.sqrt(nx)
    ay = np.exp(2j * np.pi * uy * np.arange(ny)) / math.sqrt(ny)
    return np.kron(ay, ax)


def tx_steering(direction: Direction, cfg: SystemConfig) -> np.ndarray:
    return steering(direction, cfg.n_tx, cfg.n_ty, cfg.d_x, cfg.d_y, cfg.wavelength)


def rx_steering(direction: Direction, cfg: SystemConfig) -> np.ndarray:
    return steering(direction, cfg.n_rx, cfg.n_ry, cfg.d_x, cfg.d_y, cfg.wavelength)


def large_scale_gain(distance: float, shadow: float, cfg: SystemConfig) -> float:
    """Power gain ``(d / d_0)^-alpha * delta``."""
    if distance < cfg.d_0:
        raise ConfigError(f"distance {distance} is below the reference distance {cfg.d_0}")
    return (distance / cfg.d_0) ** (-cfg.alpha) * shadow


def channel_row(user: UserRecord, cfg: SystemConfig) -> np.ndarray:
    """``sqrt((d/d_0)^-alpha * delta) * a_t(theta, phi)``."""
    g = large_scale_gain(user.distance, user.shadow, cfg)
    return math.sqrt(g) * tx_steering(user.direction, cfg)


def build_channel_set(users: list[UserRecord], scan: Direction, cfg: SystemConfig) -> ChannelSet:
    a_t = tx_steering(scan, cfg)
    a_r = rx_steering(scan, cfg)
    if users:
        H = np.vstack([channel_row(u, cfg) for u in users])
        A_K = np.column_stack([rx_steering(u.direction, cfg) for u in users])
        gains = np.array([math.sqrt(large_scale_gain(u.distance, u.shadow, cfg)) for u in users])
    else:
        H = np.zeros((0, cfg.n_t), dtype=complex)
        A_K = np.zeros((cfg.n_r, 0), dtype=complex)
        gains = np.zeros(0)
    return ChannelSet(H, np.outer(a_r, a_t), A_K, gains)


def radar_attenuation(distance: float, cfg: SystemConfig) -> float:
    """Two-way propagation loss ``lambda^2 / ((4 pi)^3 d^4)``."""
    return cfg.wavelength ** 2 / ((4 * math.pi) ** 3 * distance ** 4)


def echo_params(distance: float, velocity: float, rcs: float, cfg: SystemConfig) -> EchoParams:
    """Delay ``2d/c``, Doppler ``2v/lambda`` and amplitude ``sqrt(L_T * rcs)``."""
    return EchoParams(tau=2 * distance / C_LIGHT, f_d=2 * velocity / cfg.wavelength,
                      gain=math.sqrt(radar_attenuation(distance, cfg) * rcs), rcs=rcs)


def target_matrix(A: np.ndarray, echo: EchoParams, cfg: SystemConfig) -> np.ndarray:
    """``Z = L * A * exp(j(2 pi f_c tau + pi mu tau^2))`` used in the radar SINR."""
    phase = 2 * np.pi * cfg.f_c * echo.tau + np.pi * cfg.mu * echo.tau ** 2
    return echo.gain * A * np.exp(1j * phase)


def complex_noise(rng: np.random.Generator, shape, power: float) -> np.ndarray:
    """Circularly symmetric complex Gaussian samples of variance ``power``."""
    scale = math.sqrt(power / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def ue_receive(x: np.ndarray, h_k: np.ndarray, noise_power: float,
               rng: np.random.Generator | None = None) -> np.ndarray:
    """``y_k = h_k x + n_k`` for per-antenna transmit samples ``x`` (N_t x L)."""
    x = np.atleast_2d(x)
    if x.shape[0] != h_k.shape[-1]:
        raise ConfigError("channel length does not match the number of antennas")
    y = h_k @ x
    if noise_power > 0:
        if rng is None:
            raise ConfigError("an rng is required when noise_power > 0")
        y = y + complex_noise(rng, y.shape, noise_power)
    return y


def fractional_delay(x: np.ndarray, delay_samples: float) -> np.ndarray:
    """Band-limited delay ``y[n] = sum_m x[m] sinc(n - m - D)`` over the window of ``x``.

    Samples that arrive from before the window start are zero.
    """
    x = np.atleast_2d(x)
    n = np.arange(x.shape[-1])
    d = float(delay_samples)
    if abs(d - round(d)) < 1e-12:
        k = int(round(d))
        y = np.zeros_like(x)
        if k < x.shape[-1]:
            y[:, k:] = x[:, :x.shape[-1] - k]
        return y
    kernel = np.sinc(n[:, None] - n[None, :] - d)
    return x @ kernel.T


def target_echo(tx: ComplexSignal, echo: EchoParams, A: np.ndarray, cfg: SystemConfig,
                A_K: np.ndarray | None = None, noise_power: float = 0.0,
                interference_power: float = 1.0,
                rng: np.random.Generator | None = None) -> ComplexSignal:
    """Receive-array baseband ``L A s(t - tau) e^{j 2 pi f_d t} e^{-j 2 pi f_c tau}
    + A_K I_K(t) + n(t)`` over the transmit window.

    ``tx`` holds the N_t antenna signals of one block. UE interference
    waveforms are unit-power complex Gaussian sequences scaled by
    ``interference_power``.
    """
    if echo.tau >= tx.n_samples / tx.sample_rate:
        raise ConfigError("echo delay falls outside the block window")
    s = np.atleast_2d(tx.samples)
    delayed = fractional_delay(s, echo.tau * tx.sample_rate)
    t = tx.times
    rot = np.exp(2j * np.pi * echo.f_d * t) * np.exp(-2j * np.pi * cfg.f_c * echo.tau)
    r = echo.gain * (A @ delayed) * rot
    if A_K is not None and A_K.shape[1] and interference_power > 0:
        if rng is None:
            raise ConfigError("an rng is required for UE interference")
        interf = complex_noise(rng, (A_K.shape[1], r.shape[-1]), interference_power)
        r = r + A_K @ interf
    if noise_power > 0:
        if rng is None:
            raise ConfigError("an rng is required when noise_power > 0")
        r = r + complex_noise(rng, r.shape, noise_power)
    return ComplexSignal(r, tx.sample_rate, tx.t0)
