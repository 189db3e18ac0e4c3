"""Viterbi CPM detection, Monte Carlo BER curves and the analytic upper bound."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import special

from .config import ConfigError
from .waveform import cpm_modulate, mask_demap, mask_map, random_bits


@dataclass(frozen=True)
class BerPoint:
    snr_db: float
    ber: float
    bits_simulated: int
    ci95: float
    errors: int = 0


def rational_index(h: float, max_den: int = 64) -> tuple[int, int]:
    """``h = p/q`` in lowest terms; non-rational (to 1e-9) indices are rejected."""
    frac = Fraction(h).limit_denominator(max_den)
    if abs(float(frac) - h) > 1e-9 or frac <= 0:
        raise ConfigError(f"modulation index {h} is not a small rational p/q")
    return frac.numerator, frac.denominator


def check_decodable(order: int, h: float) -> tuple[int, int]:
    """``(p, q)`` of ``h``; rejects pairs whose phase steps ``h pi xi`` collide mod 2 pi.

    Two levels differ by ``2d`` with ``d < order``; their steps coincide when
    ``h d`` is an integer, i.e. when ``q <= order - 1``.
    """
    p, q = rational_index(h)
    if q <= order - 1:
        raise ConfigError(f"modulation index {h} maps distinct {order}-ary levels onto the "
                          "same phase step; use a denominator of at least the order")
    return p, q


def q_function(x):
    return 0.5 * special.erfc(np.asarray(x) / math.sqrt(2.0))


def viterbi_cpm_detect(y, order: int, h: float, channel: complex = 1.0,
                       start_state: int = 0) -> np.ndarray:
    """ML sequence detection of MASK-CPM over the phase trellis.

    ``y`` holds symbol-rate samples ``channel * exp(j beta_n) + noise``, one
    block per row. Phase states are multiples of ``pi/q`` for ``h = p/q``;
    every block starts in ``start_state``. Returns hard bits, concatenated
    block by block.
    """
    p, q = check_decodable(order, h)
    y = np.atleast_2d(np.asarray(y, dtype=complex))
    B, N = y.shape
    S = 2 * q
    levels = np.arange(-(order - 1), order, 2)
    # predecessor table: state ns is reached from (ns - b*p) mod S with level b
    prev = (np.arange(S)[:, None] - levels[None, :] * p) % S  # (S, order)
    points = channel * np.exp(1j * np.pi * np.arange(S) / q)
    metric = np.full((B, S), np.inf)
    metric[:, start_state % S] = 0.0
    back = np.empty((N, B, S), dtype=np.int8 if order < 128 else np.int16)
    for n in range(N):
        branch = np.abs(y[:, n, None] - points[None, :]) ** 2          # (B, S) by next state
        cand = metric[:, prev] + branch[:, :, None]                      # (B, S, order)
        choice = np.argmin(cand, axis=2)
        metric = np.take_along_axis(cand, choice[:, :, None], axis=2)[:, :, 0]
        back[n] = choice
    state = np.argmin(metric, axis=1)
    out = np.empty((B, N), dtype=np.int64)
    rows = np.arange(B)
    for n in range(N - 1, -1, -1):
        c = back[n, rows, state]
        out[:, n] = levels[c]
        state = prev[state, c]
    return mask_demap(out.ravel(), order)


def differential_detect(y, order: int, h: float, channel: complex = 1.0) -> np.ndarray:
    """Symbol-by-symbol detection from the phase step between neighbours."""
    check_decodable(order, h)
    y = np.atleast_2d(np.asarray(y, dtype=complex)) / channel
    B, N = y.shape
    ref = np.concatenate([np.ones((B, 1)), y[:, :-1]], axis=1)
    step = np.angle(y * np.conj(ref))
    levels = np.arange(-(order - 1), order, 2)
    expected = np.angle(np.exp(1j * h * np.pi * levels))
    dist = np.abs(np.angle(np.exp(1j * (step[..., None] - expected))))
    return mask_demap(levels[np.argmin(dist, axis=-1)].ravel(), order)


def binomial_ci95(errors: int, bits: int) -> float:
    if bits == 0:
        return 1.0
    p = errors / bits
    return float(1.96 * math.sqrt(max(p * (1 - p), 0.0) / bits))


def simulate_link(channel: complex, interference: np.ndarray, noise_power: float,
                  order: int, h: float, n_blocks: int, n_symbols: int,
                  rng: np.random.Generator, detector: str = "viterbi") -> tuple[int, int]:
    """Bit errors and bits for one user over ``n_blocks`` blocks.

    ``interference`` lists the complex gains ``sqrt(P_j) h_k w_j`` of the other
    streams; each carries its own random MASK-CPM sequence.
    """
    k_bits = int(math.log2(order))
    bits = random_bits(rng, n_blocks * n_symbols * k_bits)
    sym = mask_map(bits, order).reshape(n_blocks, n_symbols)
    y = channel * cpm_modulate(sym, h).samples
    for g in np.atleast_1d(interference):
        ib = random_bits(rng, n_blocks * n_symbols * k_bits)
        isym = mask_map(ib, order).reshape(n_blocks, n_symbols)
        y = y + g * cpm_modulate(isym, h).samples
    scale = math.sqrt(noise_power / 2.0)
    y = y + scale * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
    if detector == "viterbi":
        est = viterbi_cpm_detect(y, order, h, channel)
    else:
        est = differential_detect(y, order, h, channel)
    return int(np.sum(est != bits)), int(bits.size)


# ----------------------------------------------------------------- bound ---

@dataclass(frozen=True)
class SinrSupport:
    gamma_lo: float
    gamma_hi: float


def power_law_support(p_user: float, alpha: float, d_0: float, d_1: float, d_2: float,
                      sigma_delta: float, mean_interference: float, noise: float,
                      spread: float = 2.0) -> SinrSupport:
    """SINR window ``P g / (E[I] + noise)`` for ``d in [d_1, d_2]`` and
    shadowing within ``+-spread`` standard deviations."""
    den = mean_interference + noise
    lo = p_user * (d_2 / d_0) ** (-alpha) * math.exp(-spread * sigma_delta) / den
    hi = p_user * (d_1 / d_0) ** (-alpha) * math.exp(spread * sigma_delta) / den
    return SinrSupport(lo, hi)


def ber_kernel(gamma, order: int, h: float):
    """``2 Q(sqrt(log2(M) (1 - sin(2 pi h)/(2 pi h)) gamma))``."""
    k = math.log2(order) * (1.0 - math.sin(2 * math.pi * h) / (2 * math.pi * h))
    return 2.0 * q_function(np.sqrt(k * np.asarray(gamma)))


def ber_bound_integral(support: SinrSupport, alpha: float, order: int, h: float,
                       n_points: int = 2001) -> float:
    """Kernel averaged over the density ``~ gamma^(-1/alpha - 1)`` on the support.

    Composite Simpson in ``u = ln(gamma)``; a collapsed support is a point mass.
    """
    lo, hi = support.gamma_lo, support.gamma_hi
    if not (lo > 0 and hi >= lo and math.isfinite(hi)):
        raise ValueError("SINR support must be finite and positive")
    if hi <= lo * (1 + 1e-12):
        return float(ber_kernel(lo, order, h))
    if n_points % 2 == 0:
        n_points += 1
    u = np.linspace(math.log(lo), math.log(hi), n_points)
    g = np.exp(u)
    # density in u: gamma * gamma^(-1/alpha - 1) = gamma^(-1/alpha)
    w = g ** (-1.0 / alpha)
    from scipy.integrate import simpson
    return float(simpson(ber_kernel(g, order, h) * w, x=u) / simpson(w, x=u))


def gamma_density(gamma, support: SinrSupport, alpha: float):
    """Normalized power-law density on the support, zero outside."""
    gamma = np.asarray(gamma, dtype=float)
    a = -1.0 / alpha
    lo, hi = support.gamma_lo, support.gamma_hi
    norm = (hi ** a - lo ** a) / a
    return np.where((gamma >= lo) & (gamma <= hi), gamma ** (a - 1.0) / norm, 0.0)


# ------------------------------------------------------------ full chain ---

def _link_gains(problem, state, k: int) -> tuple[complex, np.ndarray]:
    amp = (problem.H[k] @ state.W) * np.sqrt(state.P)
    own = amp[k + 1]
    return own, np.delete(amp, k + 1)


def ber_curve(cfg, kind: str, snr_grid, n_users: int = 4, radar_fraction: float = 0.1,
              candidates: int = 30, min_errors: int = 100, max_bits: int = 2_000_000,
              blocks_per_drop: int = 10, min_drops: int = 200, seed: int | None = None,
              detector: str = "viterbi", selection_fraction: float = 0.1) -> list[BerPoint]:
    """Average user BER versus ``p_tot / sigma_k^2``.

    Each drop selects ``n_users`` of ``candidates`` users, designs the precoder
    with the radar stream fixed at ``radar_fraction * p_tot`` and equal user
    powers, then runs every user's link through the Viterbi detector. Drops
    continue until both ``min_drops`` drops and ``min_errors`` errors are
    reached, or ``max_bits`` bits. Every SNR point
    reuses the same seed, so the geometry sequence is common to all points.

    Selection always scores users with ``selection_fraction`` on the radar
    stream, so curves that differ only in ``radar_fraction`` serve the same
    users and differ only in the power split.
    """
    from .scenario import design, draw, split_power

    seed = cfg.seed if seed is None else seed
    points = []
    for snr in snr_grid:
        c = cfg.with_snr_db(float(snr))
        rng = np.random.default_rng(seed)
        errors = bits = drops = 0
        while (errors < min_errors or drops < min_drops) and bits < max_bits:
            drops += 1
            drop = draw(c, rng, n_users, candidates, selection_fraction)
            K = drop.problem.n_users
            state = design(drop, kind, fixed_power=split_power(c.p_tot, K, radar_fraction))
            for k in range(K):
                own, interf = _link_gains(drop.problem, state, k)
                e, b = simulate_link(own, interf, c.ue_noise_power, c.mask_order, c.mod_index,
                                     blocks_per_drop, c.n_symbols, rng, detector)
                errors += e
                bits += b
        points.append(BerPoint(float(snr), errors / bits, bits, binomial_ci95(errors, bits),
                               errors))
    return points


def interference_moment(cfg, n_users: int, radar_fraction: float, draws: int = 10_000,
                        seed: int | None = None) -> float:
    """Monte Carlo mean of the per-user interference power with MRT columns."""
    from .channel import channel_row, tx_steering
    from .config import build_frame_plan, spawn_users
    from .optimizer import baseline_precoders
    from .scenario import split_power

    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    plan = build_frame_plan(cfg)
    P = split_power(cfg.p_tot, n_users, radar_fraction)
    total = 0.0
    for _ in range(draws):
        users = spawn_users(cfg, n_users, rng=rng)
        H = np.vstack([channel_row(u, cfg) for u in users])
        scan = plan.scan_directions[int(rng.integers(len(plan)))]
        W = np.column_stack([np.conj(tx_steering(scan, cfg)), baseline_precoders(H, "MRT")])
        S = np.abs(H @ W) ** 2 * P[None, :]
        idx = np.arange(n_users)
        total += float(np.mean(S.sum(axis=1) - S[idx, idx + 1]))
    return total / draws


def ber_upper_bound(cfg, snr_grid, n_users: int = 4, radar_fraction: float = 0.1,
                    draws: int = 10_000, n_points: int = 2001,
                    mean_interference: float | None = None) -> list[BerPoint]:
    """Kernel ``2Q(sqrt(log2 M (1 - sinc-term) gamma))`` averaged over the
    power-law SINR density on the window set by ``[d_0, cell_radius]``,
    ``+-2 sigma_delta`` shadowing and the mean interference power."""
    if cfg.alpha <= 1:
        raise ValueError("the SINR density needs alpha > 1")
    mi = (interference_moment(cfg, n_users, radar_fraction, draws)
          if mean_interference is None else mean_interference)
    p_user = (1.0 - radar_fraction) * cfg.p_tot / n_users
    out = []
    for snr in snr_grid:
        c = cfg.with_snr_db(float(snr))
        sup = power_law_support(p_user, c.alpha, c.d_0, c.d_0, c.cell_radius, c.sigma_delta,
                                mi, c.ue_noise_power)
        val = ber_bound_integral(sup, c.alpha, c.mask_order, c.mod_index, n_points)
        out.append(BerPoint(float(snr), val, 0, 0.0))
    return out
