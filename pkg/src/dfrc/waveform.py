"""MASK mapping, CPM modulation, precoding and sampled CPM-LFM synthesis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ConfigError, SystemConfig


@dataclass(frozen=True)
class CpmBaseband:
    phases: np.ndarray
    samples: np.ndarray


@dataclass(frozen=True)
class ComplexSignal:
    """Uniformly sampled complex baseband; ``samples`` may be 2-D (antennas x time)."""

    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0

    @property
    def n_samples(self) -> int:
        return self.samples.shape[-1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_samples) / self.sample_rate

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2) / self.sample_rate)


@dataclass
class PrecoderState:
    """Precoder ``W`` (columns w_T, w_1..w_K), receive processor ``V`` and powers ``P``."""

    W: np.ndarray
    V: np.ndarray
    P: np.ndarray

    def copy(self) -> "PrecoderState":
        return PrecoderState(self.W.copy(), self.V.copy(), self.P.copy())

    @property
    def n_users(self) -> int:
        return self.W.shape[1] - 1

    def check(self, p_tot: float, atol: float = 1e-9) -> None:
        norms = np.linalg.norm(self.W, axis=0)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise ValueError("precoder columns must have unit norm")
        if np.any(self.P < -atol) or self.P.sum() > p_tot * (1 + 1e-9) + atol:
            raise ValueError("powers must be nonnegative and sum to at most p_tot")
        if not np.any(self.V):
            raise ValueError("processing vector must be nonzero")


def _gray_decode(g: np.ndarray) -> np.ndarray:
    b = g.copy()
    shift = g >> 1
    while np.any(shift):
        b ^= shift
        shift >>= 1
    return b


def mask_map(bits, order: int) -> np.ndarray:
    """Gray-map groups of ``log2(order)`` bits (MSB first) onto odd levels.

    Level index ``i`` (0 for the most negative level) carries bit label
    ``i ^ (i >> 1)``, so adjacent levels differ in a single bit.
    """
    bits = np.asarray(bits, dtype=np.int64)
    k = int(np.log2(order))
    if order < 2 or 2 ** k != order:
        raise ConfigError("order must be a power of two >= 2")
    if bits.ndim != 1 or bits.size % k:
        raise ConfigError(f"bit count {bits.size} is not a multiple of {k}")
    if np.any((bits != 0) & (bits != 1)):
        raise ConfigError("bits must be 0 or 1")
    groups = bits.reshape(-1, k)
    labels = groups @ (1 << np.arange(k - 1, -1, -1))
    index = _gray_decode(labels)
    return 2 * index - (order - 1)


def mask_demap(levels, order: int) -> np.ndarray:
    """Inverse of :func:`mask_map`."""
    levels = np.asarray(levels, dtype=np.int64)
    k = int(np.log2(order))
    index = (levels + order - 1) // 2
    labels = index ^ (index >> 1)
    bits = (labels[:, None] >> np.arange(k - 1, -1, -1)) & 1
    return bits.reshape(-1)


def cpm_modulate(symbols, h: float) -> CpmBaseband:
    """Full-response CPM: phase ``beta_n = h*pi*sum_{i<=n} b_i`` and ``c_n = exp(j beta_n)``.

    ``symbols`` may be 2-D; the phase accumulates along the last axis.
    """
    b = np.asarray(symbols, dtype=float)
    if b.size == 0:
        raise ConfigError("symbol stream must be nonempty")
    phases = np.cumsum(b * h * np.pi, axis=-1)
    return CpmBaseband(phases, np.exp(1j * phases))


def precode_block(C: np.ndarray, state: PrecoderState) -> np.ndarray:
    """Per-antenna transmit data ``X = W diag(sqrt(P)) C`` (shape N_t x N)."""
    C = np.atleast_2d(C)
    if C.shape[0] != state.W.shape[1] or state.P.shape[0] != state.W.shape[1]:
        raise ConfigError(
            f"data rows {C.shape[0]} / powers {state.P.shape[0]} do not match "
            f"{state.W.shape[1]} precoder columns")
    return (state.W * np.sqrt(state.P)) @ C


def pulse_taps(kind: str, sps: int, t_s: float, rolloff: float = 0.35,
               span: int = 4) -> tuple[np.ndarray, int]:
    """Sampled unit-energy pulse and the index of its symbol-start sample.

    ``rect`` occupies one symbol. ``raised-cosine`` is the Nyquist raised-cosine
    pulse truncated to ``+-span`` symbols, centred mid-symbol.
    """
    fs = sps / t_s
    if kind == "rect":
        taps = np.ones(sps)
        start = 0
    elif kind == "raised-cosine":
        n = np.arange(-span * sps, span * sps + 1)
        t = n / sps
        taps = np.sinc(t)
        if rolloff > 0:
            denom = 1.0 - (2.0 * rolloff * t) ** 2
            sing = np.isclose(denom, 0.0)
            taps = np.where(sing, np.pi / 4 * np.sinc(1 / (2 * rolloff)),
                            taps * np.cos(np.pi * rolloff * t) / np.where(sing, 1.0, denom))
        start = span * sps - sps // 2
    else:
        raise ConfigError(f"unknown pulse kind {kind!r}")
    taps = taps / np.sqrt(np.sum(taps ** 2) / fs)
    return taps, start


def shape_symbols(x_row: np.ndarray, cfg: SystemConfig, pulse: str | None = None,
                  sample_rate: float | None = None) -> np.ndarray:
    """Pulse-shaped baseband over one block ``[0, N*T_s)`` without the chirp."""
    fs = cfg.sample_rate if sample_rate is None else sample_rate
    sps = fs * cfg.t_s
    if abs(sps - round(sps)) > 1e-9:
        raise ConfigError("sample_rate must be an integer multiple of 1/T_s")
    sps = int(round(sps))
    kind = cfg.pulse if pulse is None else pulse
    taps, start = pulse_taps(kind, sps, cfg.t_s, cfg.rolloff)
    x_row = np.asarray(x_row)
    n_sym = x_row.shape[-1]
    length = n_sym * sps
    up = np.zeros(x_row.shape[:-1] + (length,), dtype=complex)
    up[..., ::sps] = x_row
    full = np.apply_along_axis(lambda r: np.convolve(r, taps), -1, up) if up.ndim > 1 \
        else np.convolve(up, taps)
    return full[..., start:start + length]


def chirp(n_samples: int, sample_rate: float, mu: float, sign: int = 1) -> np.ndarray:
    t = np.arange(n_samples) / sample_rate
    return np.exp(1j * np.pi * sign * mu * t ** 2)


def min_sample_rate(cfg: SystemConfig) -> float:
    return 2.0 * (abs(cfg.mu) * cfg.n_symbols * cfg.t_s + 1.0 / cfg.t_s)


def synthesize_chirp(x_row, cfg: SystemConfig, chirp_sign: int = 1, pulse: str | None = None,
                     sample_rate: float | None = None) -> ComplexSignal:
    """Complex-baseband CPM-LFM block ``sum_n x_n g(t-(n-1)T_s) exp(j pi sign mu t^2)``.

    Time is block-local. ``x_row`` may be 2-D (one row per antenna).
    """
    fs = cfg.sample_rate if sample_rate is None else sample_rate
    if fs < min_sample_rate(cfg) * (1 - 1e-12):
        raise ConfigError(f"sample rate {fs:.4g} Hz is below the Nyquist rate "
                          f"{min_sample_rate(cfg):.4g} Hz")
    if chirp_sign not in (1, -1):
        raise ConfigError("chirp_sign must be +1 or -1")
    base = shape_symbols(x_row, cfg, pulse, fs)
    return ComplexSignal(base * chirp(base.shape[-1], fs, cfg.mu, chirp_sign), fs)


def sweep_bandwidth(cfg: SystemConfig) -> float:
    """Sweep bandwidth ``mu * N * T_s``."""
    return cfg.mu * cfg.n_symbols * cfg.t_s


def pulse_bandwidth(cfg: SystemConfig, pulse: str | None = None) -> float:
    kind = cfg.pulse if pulse is None else pulse
    if kind == "rect":
        return 1.0 / cfg.t_s
    return (1.0 + cfg.rolloff) / (2.0 * cfg.t_s)


def random_bits(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 2, size=shape, dtype=np.int64)
