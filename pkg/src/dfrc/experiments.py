"""Batch experiments that turn the library into comma-separated tables.

Every runner takes ``(cfg, experiment, seed)`` and returns a :class:`Table`.
Random draws come from ``SeedSequence(seed).spawn``; cells are computed in a
worker pool (``DFRC_THREADS``) and assembled by index, so the output does not
depend on scheduling.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .ber import ber_curve, ber_upper_bound
from .channel import (EchoParams, echo_params, rx_steering, target_echo, target_matrix,
                      tx_steering)
from .config import ConfigError, Direction, SystemConfig, build_frame_plan, spawn_users
from .optimizer import (InfeasibleError, complexity_counts, rates, smi_select,
                        traversal_select)
from .radar import (ambiguity, beat_frequency, estimate_target, first_null, resolution_report,
                    signal_spectrum)
from .scenario import PRECODERS, design, draw, make_problem, tradeoff_rate
from .waveform import (ComplexSignal, cpm_modulate, mask_map, pulse_bandwidth, random_bits,
                       shape_symbols, sweep_bandwidth, synthesize_chirp)

KINDS = ("spectrum", "ber", "ambiguity", "sumrate", "selection", "tradeoff", "detect")


@dataclass
class Table:
    columns: list[str]
    rows: list[list[Any]]
    notes: list[str] = field(default_factory=list)


# ------------------------------------------------------------- plumbing ---

def format_cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return str(v)


def manifest(kind: str, cfg: SystemConfig, experiment: dict, seed: int) -> dict[str, str]:
    return {
        "tool": f"dfrc {__version__}",
        "kind": kind,
        "config_digest": cfg.digest(),
        "seed": str(seed),
        "experiment": json.dumps(experiment, sort_keys=True, default=str),
    }


def render(table: Table, meta: dict[str, str]) -> str:
    lines = [f"# {k}: {v}" for k, v in meta.items()]
    lines += [f"# note: {n}" for n in table.notes]
    lines.append(",".join(table.columns))
    lines += [",".join(format_cell(v) for v in row) for row in table.rows]
    return "\n".join(lines) + "\n"


def write_table(path: str | Path, table: Table, meta: dict[str, str]) -> None:
    Path(path).write_text(render(table, meta))


def worker_count() -> int:
    raw = os.environ.get("DFRC_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"DFRC_THREADS must be an integer, got {raw!r}") from None


def pmap(fn: Callable, items: list) -> list:
    """Ordered map over a process pool of ``DFRC_THREADS`` workers."""
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * n))))


def child_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


def parse_sweep(text: str) -> tuple[str, list[float]]:
    """``key=start:stop:step`` with an inclusive stop."""
    key, sep, rng = text.partition("=")
    parts = rng.split(":")
    if not sep or not key or len(parts) != 3:
        raise ConfigError(f"sweep must look like key=start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"sweep bounds must be numbers in {text!r}") from None
    if step <= 0 or stop < start:
        raise ConfigError(f"sweep {text!r} must be nonempty and increasing")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    values = [round(start + i * step, 12) for i in range(n)]
    return key.strip(), [int(v) if float(v).is_integer() and key.strip() in _INT_KEYS else v
                         for v in values]


_INT_KEYS = {"U", "K", "n_users", "candidates"}


def _grid(experiment: dict, key: str, default) -> list:
    vals = experiment.get(key, default)
    vals = list(vals) if isinstance(vals, (list, tuple)) else [vals]
    if not vals:
        raise ConfigError(f"experiment grid {key!r} is empty")
    return vals


# ------------------------------------------------------------- spectrum ---

def run_spectrum(cfg: SystemConfig, experiment: dict, seed: int) -> Table:
    """Occupied -20 dB bandwidth of averaged CPM-LFM blocks per pulse and chirp rate."""
    pulses = _grid(experiment, "pulse", ["rect", "raised-cosine"])
    mus = _grid(experiment, "mu", [1e10, 5e9])
    blocks = int(experiment.get("blocks", 64))
    drop_db = float(experiment.get("drop_db", 20.0))
    rows = []
    seeds = child_seeds(seed, len(pulses) * len(mus))
    for i, (pulse, mu) in enumerate((p, m) for p in pulses for m in mus):
        c = cfg.replace(pulse=pulse, mu=float(mu))
        rng = np.random.default_rng(seeds[i])
        bits = random_bits(rng, blocks * c.n_symbols * int(math.log2(c.mask_order)))
        x = cpm_modulate(mask_map(bits, c.mask_order).reshape(blocks, -1),
                         c.mod_index).samples
        est = signal_spectrum(synthesize_chirp(x, c), drop_db=drop_db)
        b_w, b_g = sweep_bandwidth(c), pulse_bandwidth(c)
        pred = b_w + b_g
        rows.append([pulse, float(mu), b_w, b_g, pred, est.occupied_bandwidth,
                     est.occupied_bandwidth / pred - 1.0])
    return Table(["pulse", "mu [Hz/s]", "B_w [Hz]", "B_g [Hz]", "predicted [Hz]",
                  "occupied [Hz]", "relative_error [1]"], rows)


# ------------------------------------------------------------------ BER ---

def _ber_cells(args):
    cfg, snr, curve, seed, opts = args
    pts = ber_curve(cfg, curve.get("precoder", "MMLM"), snr, n_users=int(curve["K"]),
                    radar_fraction=float(curve["radar_fraction"]), seed=seed, **opts)
    return pts


def run_ber(cfg: SystemConfig, experiment: dict, seed: int) -> Table:
    snr = [float(s) for s in _grid(experiment, "snr_db", [0, 5, 10, 15, 20])]
    curves = experiment.get("curves") or [{"K": 4, "radar_fraction": 0.1},
                                          {"K": 6, "radar_fraction": 0.1},
                                          {"K": 4, "radar_fraction": 0.3}]
    opts = {k: experiment[k] for k in ("candidates", "min_errors", "max_bits", "blocks_per_drop",
                                       "min_drops") if k in experiment}
    results = pmap(_ber_cells, [(cfg, snr, c, seed, opts) for c in curves])
    rows = []
    for curve, pts in zip(curves, results):
        label = f"{curve.get('precoder', 'MMLM')} K={curve['K']} P_T={curve['radar_fraction']}"
        rows += [[label, p.snr_db, p.ber, p.ci95, p.bits_simulated, p.errors] for p in pts]
    if experiment.get("bound", True):
        base = curves[0]
        for p in ber_upper_bound(cfg, snr, int(base["K"]), float(base["radar_fraction"]),
                                 draws=int(experiment.get("bound_draws", 10_000))):
            rows.append([f"bound K={base['K']} P_T={base['radar_fraction']}", p.snr_db, p.ber,
                         None, None, None])
    return Table(["curve", "snr_db [dB]", "ber [1]", "ci95 [1]", "bits [count]",
                  "errors [count]"], rows)


# ------------------------------------------------------------ ambiguity ---

def ambiguity_signal(cfg: SystemConfig, rng: np.random.Generator) -> ComplexSignal:
    """One CPM-LFM block carrying a random symbol stream."""
    bits = random_bits(rng, cfg.n_symbols * int(math.log2(cfg.mask_order)))
    x = cpm_modulate(mask_map(bits, cfg.mask_order), cfg.mod_index).samples
    return synthesize_chirp(x, cfg)


def run_ambiguity(cfg: SystemConfig, experiment: dict, seed: int) -> Table:
    """Zero-Doppler and zero-latency cuts of the normalized ambiguity surface."""
    tau_max = float(experiment.get("tau_max", 10e-6))
    fd_max = float(experiment.get("fd_max", 100e3))
    n = int(experiment.get("points", 201))
    tau = np.linspace(-tau_max, tau_max, n)
    fd = np.linspace(-fd_max, fd_max, n)
    sig = ambiguity_signal(cfg, np.random.default_rng(child_seeds(seed, 1)[0]))
    surf = ambiguity(sig, tau, fd)
    res = resolution_report(cfg)
    rows = [["zero_doppler", t, v] for t, v in zip(tau, surf.zero_doppler_cut())]
    rows += [["zero_delay", f, v] for f, v in zip(fd, surf.zero_delay_cut())]
    notes = [f"first null delay {first_null(tau, surf.zero_doppler_cut()):.6g} s "
             f"(1/B_w = {res.tau_w:.6g} s)",
             f"first null Doppler {first_null(fd, surf.zero_delay_cut()):.6g} Hz "
             f"(1/(N T_s) = {res.fd_w:.6g} Hz)"]
    return Table(["cut", "axis [s or Hz]", "magnitude [1]"], rows, notes)


# -------------------------------------------------------------- sumrate ---

def radar_only_rate(problem, w_t: np.ndarray) -> float:
    """``R_rad`` with the whole budget on the scan-matched radar column."""
    if problem.p_tot <= 0:
        return 0.0
    r = problem.Z @ (w_t / np.linalg.norm(w_t))
    gamma = problem.e_rad * problem.p_tot * float(np.real(np.vdot(r, np.linalg.solve(
        problem.q2(), r))))
    return float(np.log2(1.0 + gamma))


def comm_only_rate(problem, w_t: np.ndarray) -> float:
    """Users alone: MMLM columns with the budget split equally and no radar stream."""
    from .optimizer import mmlm

    K = problem.n_users
    if problem.p_tot <= 0 or K == 0:
        return 0.0
    P = np.concatenate([[0.0], np.full(K, problem.p_tot / K)])
    state, _ = mmlm(problem, w_t, fixed_power=P)
    return rates(problem, state).r_com


def sumrate_drop(cfg: SystemConfig, seed, n_users: int, candidates: int,
                 radar_fraction: float) -> list[float]:
    """``[MMLM, MMSE, ZF, MRT, comm-only, radar-only]`` sum rates of one drop."""
    if cfg.p_tot <= 0:
        return [0.0] * (len(PRECODERS) + 2)
    rng = np.random.default_rng(seed)
    drop = draw(cfg, rng, n_users, candidates, radar_fraction)
    out = [rates(drop.problem, design(drop, kind)).r_sum for kind in PRECODERS]
    out.append(comm_only_rate(drop.problem, drop.w_t))
    out.append(radar_only_rate(drop.problem, drop.w_t))
    return out


def _sumrate_cell(args):
    return sumrate_drop(*args)


def run_sumrate(cfg: SystemConfig, experiment: dict, seed: int) -> Table:
    snr = [float(s) for s in _grid(experiment, "snr_db", [0, 5, 10, 15, 20])]
    n = int(experiment.get("drops", 50))
    K = int(experiment.get("K", 4))
    U = int(experiment.get("candidates", 30))
    frac = float(experiment.get("radar_fraction", 0.1))
    seeds = child_seeds(seed, n)
    cells = [(cfg.with_snr_db(s), seeds[d], K, U, frac) for s in snr for d in range(n)]
    vals = np.array(pmap(_sumrate_cell, cells)).reshape(len(snr), n, -1)
    mean = vals.mean(axis=1)
    se = vals.std(axis=1, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    names = list(PRECODERS) + ["comm-only", "radar-only"]
    cols = ["snr_db [dB]"] + [f"{c} [bit/s/Hz]" for c in names] + \
        [f"{c}_se [bit/s/Hz]" for c in names]
    rows = [[s] + list(mean[i]) + list(se[i]) for i, s in enumerate(snr)]
    notes = ["comm-only: no radar stream, MMLM user columns, equal user powers, R_com",
             "radar-only: whole budget on the scan-matched radar column, R_rad",
             "se: standard error of the mean over drops"]
    return Table(cols, rows, notes)


# ------------------------------------------------------------ selection ---

def scan_cell(direction: Direction, plan_delta: tuple[float, float]) -> Direction:
    """Centre of the scan cell that contains ``direction``."""
    dt, dp = plan_delta
    i = min(int(direction.theta // dt), int(round((math.pi / 2) / dt)) - 1)
    j = min(int(direction.phi // dp), int(round((2 * math.pi) / dp)) - 1)
    return Direction((i + 0.5) * dt, (j + 0.5) * dp)


def radar_rate(cfg: SystemConfig, users, target: Direction, w_t: np.ndarray,
               p_target: float) -> float:
    """``R_rad`` of the radar column alone for a target at ``target``."""
    echo = echo_params(cfg.target_range, cfg.target_velocity, cfg.rcs, cfg)
    A = np.outer(rx_steering(target, cfg), tx_steering(target, cfg))
    problem, _ = make_problem(cfg, users, target)
    r = target_matrix(A, echo, cfg) @ w_t
    gamma = problem.e_rad * p_target * float(np.real(np.vdot(r, np.linalg.solve(
        problem.q2(), r))))
    return float(np.log2(1.0 + gamma))


def selection_drop(cfg: SystemConfig, seed, U: int, K: int, radar_fraction: float,
                   deltas: list[tuple[float, float]], guard: int) -> list[float]:
    """``[traversal, SMI per grid...]`` for one drop; the traversal uses the first grid."""
    rng = np.random.default_rng(seed)
    users = spawn_users(cfg, U, rng=rng)
    target = Direction(float(rng.uniform(0, math.pi / 2)), float(rng.uniform(0, 2 * math.pi)))
    from .channel import channel_row
    H = np.vstack([channel_row(u, cfg) for u in users])
    p_t = radar_fraction * cfg.p_tot
    out = []
    for g, delta in enumerate(deltas):
        w_t = np.conj(tx_steering(scan_cell(target, delta), cfg))
        picks = [smi_select(H, K, w_t, cfg.p_tot, p_t, cfg.ue_noise_power)]
        if g == 0:
            picks.insert(0, traversal_select(H, K, w_t, cfg.p_tot, p_t, cfg.ue_noise_power,
                                             guard=guard))
        for sel in picks:
            chosen = [users[i] for i in sel.chosen]
            out.append(sel.sum_rate + radar_rate(cfg, chosen, target, w_t, p_t))
    return out


def _selection_cell(args):
    return selection_drop(*args)


def run_selection(cfg: SystemConfig, experiment: dict, seed: int) -> Table:
    Us = [int(u) for u in _grid(experiment, "U", list(range(6, 31, 4)))]
    K = int(experiment.get("K", 4))
    n = int(experiment.get("drops", 20))
    frac = float(experiment.get("radar_fraction", 0.1))
    guard = int(experiment.get("guard", 10 ** 6))
    snr = experiment.get("snr_db")
    c = cfg.with_snr_db(float(snr)) if snr is not None else cfg
    fine = (c.delta_theta, c.delta_phi)
    coarse = (math.radians(float(experiment.get("coarse_delta_theta_deg", 15.0))), c.delta_phi)
    deltas = [fine, coarse]
    m_fine, m_coarse = (len(build_frame_plan(c, *d)) for d in deltas)
    seeds = child_seeds(seed, n)
    cells = [(c, seeds[d], U, K, frac, deltas, guard) for U in Us for d in range(n)]
    vals = np.array(pmap(_selection_cell, cells)).reshape(len(Us), n, -1).mean(axis=1)
    rows = []
    for i, U in enumerate(Us):
        smi_m, trav_m = complexity_counts(U, K)
        rows.append([U, vals[i, 0], vals[i, 1], vals[i, 2], smi_m, trav_m])
    cols = ["U [users]", f"traversal_M{m_fine} [bit/s/Hz]", f"SMI_M{m_fine} [bit/s/Hz]",
            f"SMI_M{m_coarse} [bit/s/Hz]", "SMI_multiplies [count]",
            "traversal_multiplies [count]"]
    notes = ["sum rate: selection objective with MRT columns plus R_rad of the scan cell "
             "that contains a random target direction"]
    return Table(cols, rows, notes)


# ------------------------------------------------------------- tradeoff ---

def tradeoff_drop(cfg: SystemConfig, seed, K: int, candidates: int, rcs_list, ranges,
                  rho_target: float) -> list[float]:
    rng = np.random.default_rng(seed)
    drop = draw(cfg, rng, K, candidates, 0.1)
    out = []
    for rcs in rcs_list:
        for r in ranges:
            problem, w_t = make_problem(cfg, drop.users, drop.scan, target_range=float(r),
                                        rcs=float(rcs))
            try:
                out.append(tradeoff_rate(problem, w_t, rho_target)[1])
            except InfeasibleError:
                out.append(math.nan)
    return out


def _tradeoff_cell(args):
    return tradeoff_drop(*args)


def run_tradeoff(cfg: SystemConfig, experiment: dict, seed: int) -> Table:
    ranges = [float(r) for r in _grid(experiment, "range", [100 * i for i in range(1, 11)])]
    if any(r <= 0 for r in ranges):
        raise ConfigError("detection ranges must be positive")
    Ks = [int(k) for k in _grid(experiment, "K", [4, 6])]
    rcs_list = [float(x) for x in _grid(experiment, "rcs", [0.5, 0.8, 1.0])]
    n = int(experiment.get("drops", 100))
    U = int(experiment.get("candidates", 30))
    rho = float(experiment.get("rho_target", 1.0))
    snr = experiment.get("snr_db")
    c = cfg.with_snr_db(float(snr)) if snr is not None else cfg
    seeds = child_seeds(seed, n)
    cells = [(c, seeds[d], K, U, rcs_list, ranges, rho) for K in Ks for d in range(n)]
    vals = np.array(pmap(_tradeoff_cell, cells)).reshape(len(Ks), n, len(rcs_list), len(ranges))
    # a cell is infeasible when any drop cannot meet the radar floor
    mean = vals.mean(axis=1)
    cols = ["range [m]"] + [f"K{K}_rcs{rcs:g} [bit/s/Hz]" for K in Ks for rcs in rcs_list]
    rows = []
    for j, r in enumerate(ranges):
        row: list[Any] = [r]
        for a in range(len(Ks)):
            for b in range(len(rcs_list)):
                v = mean[a, b, j]
                row.append("infeasible" if math.isnan(v) else v)
        rows.append(row)
    notes = [f"radar floor gamma_T >= 2^{rho:g} - 1 on the scan-matched radar column; "
             "ZF user columns water-filled with the remaining budget"]
    return Table(cols, rows, notes)


# --------------------------------------------------------------- detect ---

def block_gamma(cfg: SystemConfig, scan: Direction, target: Direction | None,
                echo: EchoParams, p_target: float) -> float:
    """Target SINR of the block that steers the radar column at ``scan``."""
    if target is None:
        return 0.0
    A = np.outer(rx_steering(target, cfg), tx_steering(target, cfg))
    r = target_matrix(A, echo, cfg) @ np.conj(tx_steering(scan, cfg))
    return cfg.n_symbols * p_target * float(np.vdot(r, r).real) / cfg.noise_power


def measure_target(cfg: SystemConfig, scan: Direction, echo: EchoParams,
                   rng: np.random.Generator):
    """Up- and down-chirp blocks steered at ``scan``, dechirped and inverted."""
    a_t = tx_steering(scan, cfg)
    a_r = rx_steering(scan, cfg)
    A = np.outer(a_r, a_t)
    freqs = []
    for sign in (1, -1):
        bits = random_bits(rng, cfg.n_symbols * int(math.log2(cfg.mask_order)))
        c = cpm_modulate(mask_map(bits, cfg.mask_order), cfg.mod_index).samples
        tx = synthesize_chirp(np.conj(a_t)[:, None] * c[None, :], cfg, sign)
        rx = target_echo(tx, echo, A, cfg)
        y = ComplexSignal(np.conj(a_r) @ rx.samples, rx.sample_rate)
        freqs.append(beat_frequency(y, sign, cfg, reference=shape_symbols(c, cfg),
                                    max_delay=cfg.block_duration / 2))
    return estimate_target(freqs[0], freqs[1], cfg)


def run_detect(cfg: SystemConfig, experiment: dict, seed: int) -> Table:
    """Scan the frame, flag blocks with ``gamma_T`` above threshold and range the best one."""
    plan = build_frame_plan(cfg)
    threshold = 10.0 ** (float(experiment.get("threshold_db", 10.0)) / 10.0)
    p_t = float(experiment.get("radar_power", cfg.p_tot))
    tgt = experiment.get("target", {"theta_deg": 45.0, "phi_deg": 45.0})
    target = None if tgt is None else Direction(math.radians(float(tgt["theta_deg"])),
                                                math.radians(float(tgt["phi_deg"])))
    distance = float(experiment.get("distance", cfg.target_range))
    velocity = float(experiment.get("velocity", cfg.target_velocity))
    echo = echo_params(distance, velocity, cfg.rcs, cfg)
    gammas = np.array([block_gamma(cfg, d, target, echo, p_t) for d in plan.scan_directions])
    detected = gammas >= threshold
    hit = int(np.argmax(gammas)) if detected.any() else None
    est = None
    if hit is not None:
        rng = np.random.default_rng(child_seeds(seed, 1)[0])
        est = measure_target(cfg, plan.scan_directions[hit], echo, rng)
    rows = []
    for m, (d, s) in enumerate(zip(plan.scan_directions, plan.chirp_signs)):
        g_db = 10 * math.log10(gammas[m]) if gammas[m] > 0 else None
        rng_m = est.range_hat if m == hit else None
        vel_m = est.velocity_hat if m == hit else None
        rows.append([m, math.degrees(d.theta), math.degrees(d.phi), s, g_db,
                     bool(detected[m]), rng_m, vel_m])
    notes = [f"threshold gamma_T >= {threshold:.6g}", f"hit block: {hit}"]
    return Table(["block [index]", "theta [deg]", "phi [deg]", "chirp_sign [1]",
                  "gamma_T [dB]", "detected [bool]", "range [m]", "velocity [m/s]"], rows, notes)


RUNNERS: dict[str, Callable[[SystemConfig, dict, int], Table]] = {
    "spectrum": run_spectrum,
    "ber": run_ber,
    "ambiguity": run_ambiguity,
    "sumrate": run_sumrate,
    "selection": run_selection,
    "tradeoff": run_tradeoff,
    "detect": run_detect,
}


def run_experiment(kind: str, cfg: SystemConfig, experiment: dict, seed: int) -> Table:
    if kind not in RUNNERS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    return RUNNERS[kind](cfg, experiment, seed)
