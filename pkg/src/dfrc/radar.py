"""Dechirp ranging, spectra, Fresnel-based LFM spectrum and ambiguity functions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .config import C_LIGHT, ConfigError, SystemConfig
from .waveform import ComplexSignal, chirp, sweep_bandwidth

PAD_FACTOR = 8


@dataclass(frozen=True)
class RadarEstimate:
    f_up: float
    f_down: float
    tau_hat: float
    f_d_hat: float
    range_hat: float
    velocity_hat: float


@dataclass(frozen=True)
class SpectrumEstimate:
    freq_grid: np.ndarray
    magnitude: np.ndarray
    occupied_bandwidth: float


@dataclass(frozen=True)
class AmbiguitySurface:
    tau_grid: np.ndarray
    fd_grid: np.ndarray
    values: np.ndarray  # shape (len(tau_grid), len(fd_grid))

    def zero_doppler_cut(self) -> np.ndarray:
        return self.values[:, int(np.argmin(np.abs(self.fd_grid)))]

    def zero_delay_cut(self) -> np.ndarray:
        return self.values[int(np.argmin(np.abs(self.tau_grid))), :]


# ---------------------------------------------------------------- dechirp ---

def dechirp(rx: ComplexSignal, chirp_sign: int, cfg: SystemConfig) -> ComplexSignal:
    """Mix with the conjugate reference chirp of the block.

    A delayed, Doppler-shifted echo leaves a tone at ``f_d - sign * mu * tau``;
    at complex baseband the image band never appears, so no filter is needed.
    """
    ref = chirp(rx.n_samples, rx.sample_rate, cfg.mu, chirp_sign)
    return ComplexSignal(rx.samples * np.conj(ref), rx.sample_rate, rx.t0)


def peak_frequency(x: np.ndarray, sample_rate: float, pad: int = PAD_FACTOR) -> tuple[float, float]:
    """Frequency and magnitude of the strongest tone in ``x``.

    Zero-padded DFT followed by 3-point parabolic interpolation on the
    magnitude around the peak bin.
    """
    x = np.asarray(x).ravel()
    nfft = pad * x.size
    spec = np.abs(np.fft.fft(x, nfft))
    k = int(np.argmax(spec))
    a, b, c = spec[k - 1], spec[k], spec[(k + 1) % nfft]
    denom = a - 2 * b + c
    delta = 0.5 * (a - c) / denom if denom != 0 else 0.0
    freq = (k + delta) * sample_rate / nfft
    if freq >= sample_rate / 2:
        freq -= sample_rate
    return freq, float(b - 0.25 * (a - c) * delta)


def beat_frequency(rx: ComplexSignal, chirp_sign: int, cfg: SystemConfig,
                   reference: np.ndarray | None = None,
                   max_delay: float | None = None) -> float:
    """Beat frequency ``mu*tau - sign*f_d`` of one received block.

    ``rx`` is a single receive channel (already combined across the array).
    When the transmitted baseband envelope ``reference`` (chirp removed) is
    given, its delayed conjugate is mixed in to strip the data modulation.
    The integer-sample delay of that strip is searched over ``[0, max_delay]``
    and the candidate with the strongest tone wins.
    """
    mixed = dechirp(rx, chirp_sign, cfg).samples.ravel()
    fs = rx.sample_rate
    if reference is None:
        f_peak, _ = peak_frequency(mixed, fs)
        return -chirp_sign * f_peak
    reference = np.asarray(reference).ravel()
    limit = rx.n_samples - 1 if max_delay is None else min(int(math.ceil(max_delay * fs)),
                                                          rx.n_samples - 1)
    best = (-1.0, 0.0)
    for q in range(limit + 1):
        strip = np.zeros(rx.n_samples, dtype=complex)
        strip[q:] = np.conj(reference[:rx.n_samples - q])
        f_peak, mag = peak_frequency(mixed * strip, fs)
        if mag > best[0]:
            best = (mag, f_peak)
    return -chirp_sign * best[1]


def estimate_target(f_up: float, f_down: float, cfg: SystemConfig) -> RadarEstimate:
    """Invert ``f_up = mu*tau - f_d`` and ``f_down = mu*tau + f_d``."""
    if cfg.mu == 0:
        raise ConfigError("chirp rate must be nonzero to recover latency")
    tau = (f_up + f_down) / (2.0 * cfg.mu)
    f_d = (f_down - f_up) / 2.0
    return RadarEstimate(f_up, f_down, tau, f_d, C_LIGHT * tau / 2.0,
                         cfg.wavelength * f_d / 2.0)


# ---------------------------------------------------------------- spectra ---

def fresnel(x):
    """Fresnel integrals ``(C(x), S(x))`` with kernel ``cos/sin(pi a^2 / 2)``."""
    s, c = special.fresnel(x)
    return c, s


def lfm_spectrum_closed_form(f, cfg: SystemConfig, duration: float | None = None):
    """|G(f)| of the unit-amplitude chirp ``exp(j pi mu t^2)`` on ``[0, T]``.

    Completing the square gives ``|G| = |[C(x) + jS(x)]_{x1}^{x2}| / sqrt(2 mu)``
    with ``x = sqrt(2 mu) (t - f/mu)``. For negative rates the magnitude is
    mirrored through conjugate symmetry.
    """
    if cfg.mu == 0:
        raise ConfigError("closed form requires a nonzero chirp rate")
    t_b = cfg.block_duration if duration is None else duration
    mu = abs(cfg.mu)
    f = np.asarray(f, dtype=float)
    if cfg.mu < 0:
        f = -f
    k = math.sqrt(2.0 * mu)
    x1 = -k * f / mu
    x2 = k * (t_b - f / mu)
    c1, s1 = fresnel(x1)
    c2, s2 = fresnel(x2)
    return np.hypot(c2 - c1, s2 - s1) / k


def lfm_spectrum_quadrature(f: float, cfg: SystemConfig, duration: float | None = None) -> float:
    """Reference |G(f)| by adaptive quadrature of the defining integral."""
    from scipy import integrate

    t_b = cfg.block_duration if duration is None else duration
    phase = lambda t: np.pi * (cfg.mu * t * t - 2.0 * f * t)  # noqa: E731
    opts = dict(limit=2000, epsabs=1e-13, epsrel=1e-12)
    re, _ = integrate.quad(lambda t: math.cos(phase(t)), 0.0, t_b, **opts)
    im, _ = integrate.quad(lambda t: math.sin(phase(t)), 0.0, t_b, **opts)
    return math.hypot(re, im)


def occupied_bandwidth(freq: np.ndarray, magnitude: np.ndarray, drop_db: float = 20.0) -> float:
    """Span between the outermost frequencies whose magnitude is within
    ``drop_db`` of the peak."""
    level = magnitude.max() * 10.0 ** (-drop_db / 20.0)
    idx = np.flatnonzero(magnitude >= level)
    return float(freq[idx[-1]] - freq[idx[0]])


def signal_spectrum(sig: ComplexSignal, pad: int = PAD_FACTOR, drop_db: float = 20.0,
                    average: bool = True) -> SpectrumEstimate:
    """Windowless zero-padded DFT, scaled by ``1/fs`` so that
    ``sum |S|^2 df`` equals the time-domain energy.

    For 2-D input (several blocks or antennas as rows) the magnitude is the
    root-mean-square over rows when ``average`` is set.
    """
    x = np.atleast_2d(sig.samples)
    if x.size == 0:
        raise ConfigError("signal must be nonempty")
    nfft = pad * x.shape[-1]
    spec = np.fft.fftshift(np.fft.fft(x, nfft, axis=-1), axes=-1) / sig.sample_rate
    freq = np.fft.fftshift(np.fft.fftfreq(nfft, 1.0 / sig.sample_rate))
    mag = np.sqrt(np.mean(np.abs(spec) ** 2, axis=0)) if average else np.abs(spec[0])
    return SpectrumEstimate(freq, mag, occupied_bandwidth(freq, mag, drop_db))


def spectrum_energy(est: SpectrumEstimate) -> float:
    df = est.freq_grid[1] - est.freq_grid[0]
    return float(np.sum(est.magnitude ** 2) * df)


def mean_symbol_amplitude(weights, order: int, h: float, n: int) -> complex:
    """Closed form stated for ``E|x_{n_t,n}|``:
    ``|sum_k w_k| * (n / order) * sum_{xi odd, |xi| < order} exp(j xi h pi / order)``.

    It grows linearly in ``n`` and so cannot be the mean of a bounded
    variable; compare with :func:`mean_symbol_amplitude_mc`.
    """
    weights = np.asarray(weights, dtype=complex)
    levels = np.arange(-(order - 1), order, 2)
    level_sum = np.sum(np.exp(1j * levels * h * np.pi / order))
    return complex(abs(np.sum(weights)) * n / order * level_sum)


def mean_symbol_amplitude_mc(weights, order: int, h: float, n: int, draws: int,
                             rng: np.random.Generator) -> float:
    """Sample mean of ``|sum_k w_k exp(j h pi sum_{i<=n} b_{k,i})|`` over i.i.d.
    uniform levels, one independent stream per weight."""
    weights = np.asarray(weights, dtype=complex)
    levels = np.arange(-(order - 1), order, 2)
    b = rng.choice(levels, size=(draws, weights.size, n))
    phase = h * np.pi * b.sum(axis=-1)
    return float(np.mean(np.abs(np.exp(1j * phase) @ weights)))


# -------------------------------------------------------------- ambiguity ---

def ambiguity(sig: ComplexSignal, tau_grid, fd_grid) -> AmbiguitySurface:
    """``|sum_t s(t) s*(t - tau) exp(j 2 pi f_d t)|^2``, peak-normalized.

    Delays are rounded to whole samples; samples outside the window are zero.
    """
    s = np.asarray(sig.samples).ravel()
    fs = sig.sample_rate
    L = s.size
    tau_grid = np.asarray(tau_grid, dtype=float)
    fd_grid = np.asarray(fd_grid, dtype=float)
    lags = np.rint(tau_grid * fs).astype(int)
    if np.any(np.abs(lags) >= L):
        raise ConfigError("delay grid exceeds the signal duration")
    prod = np.zeros((lags.size, L), dtype=complex)
    for i, q in enumerate(lags):
        if q >= 0:
            prod[i, q:] = s[q:] * np.conj(s[:L - q])
        else:
            prod[i, :L + q] = s[:L + q] * np.conj(s[-q:])
    # time relative to the window centre keeps the phase reference symmetric
    t = (np.arange(L) - (L - 1) / 2.0) / fs
    kernel = np.exp(2j * np.pi * np.outer(t, fd_grid))
    chi = np.abs(prod @ kernel) ** 2
    return AmbiguitySurface(lags / fs, fd_grid, chi / chi.max())


def ambiguity_volume(sig: ComplexSignal) -> float:
    """Integral of the unnormalized |chi|^2 over all delays and Doppler.

    Parseval in Doppler reduces it to ``sum_q sum_t |s(t)|^2 |s(t-q)|^2 / fs^2``,
    which equals the squared energy in the continuous limit.
    """
    p = np.abs(np.asarray(sig.samples).ravel()) ** 2
    return float(np.sum(np.correlate(p, p, mode="full")) / sig.sample_rate ** 2)


def first_null(grid: np.ndarray, cut: np.ndarray) -> float:
    """First local minimum of ``cut`` on the positive side of ``grid``."""
    pos = np.flatnonzero(grid > 0)
    g, v = grid[pos], cut[pos]
    for i in range(1, v.size - 1):
        if v[i] <= v[i - 1] and v[i] <= v[i + 1]:
            return float(g[i])
    raise ValueError("no null found on the positive half of the grid")


@dataclass(frozen=True)
class ResolutionReport:
    kappa: float
    d_min: float
    v_min: float
    tau_w: float
    fd_w: float
    valid: bool = True


def resolution_report(cfg: SystemConfig) -> ResolutionReport:
    """Time-bandwidth product and range/velocity resolution of one block.

    With a zero chirp rate the range quantities are undefined; they are
    returned as ``inf`` and ``valid`` is False.
    """
    t_b = cfg.block_duration
    b_w = sweep_bandwidth(cfg)
    v_min = cfg.wavelength / (2.0 * t_b)
    if b_w == 0:
        return ResolutionReport(0.0, math.inf, v_min, math.inf, 1.0 / t_b, valid=False)
    b_w = abs(b_w)
    return ResolutionReport(t_b * b_w, C_LIGHT / (2.0 * b_w), v_min, 1.0 / b_w, 1.0 / t_b)
