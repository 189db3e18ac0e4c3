"""Random drops: candidate users, selection and the per-block design problem."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import build_channel_set, channel_row, echo_params, target_matrix, tx_steering
from .config import Direction, SystemConfig, UserRecord, build_frame_plan, spawn_users
from .optimizer import (PrecoderState, Problem, baseline_state, mmlm, smi_select,
                        traversal_select)

PRECODERS = ("MMLM", "MMSE", "ZF", "MRT")


@dataclass(frozen=True)
class Drop:
    problem: Problem
    w_t: np.ndarray
    users: tuple[UserRecord, ...]
    scan: Direction


def make_problem(cfg: SystemConfig, users, scan: Direction, target_range: float | None = None,
                 rcs: float | None = None) -> tuple[Problem, np.ndarray]:
    """Design problem for the block that points at ``scan`` with the target
    sitting in that beam. Returns the problem and the scan-matched radar column."""
    cs = build_channel_set(list(users), scan, cfg)
    echo = echo_params(cfg.target_range if target_range is None else target_range,
                       cfg.target_velocity, cfg.rcs if rcs is None else rcs, cfg)
    Z = target_matrix(cs.A, echo, cfg)
    problem = Problem(cs.H, Z, cs.A_K, cfg.ue_noise_power, cfg.noise_power, cfg.p_tot,
                      float(cfg.n_symbols), cfg.interference_to_noise, cfg.rho_user,
                      cfg.rho_target)
    return problem, np.conj(tx_steering(scan, cfg))


def draw(cfg: SystemConfig, rng: np.random.Generator, n_users: int, candidates: int,
         radar_fraction: float = 0.1, selector: str = "smi",
         scan: Direction | None = None) -> Drop:
    """Drop ``candidates`` users, pick ``n_users`` of them and build the problem.

    The scan block is drawn uniformly from the frame unless given. Selection
    scores users with MRT columns, the scan-matched radar column and
    ``radar_fraction * p_tot`` on the radar stream.
    """
    users = spawn_users(cfg, candidates, rng=rng)
    if scan is None:
        plan = build_frame_plan(cfg)
        scan = plan.scan_directions[int(rng.integers(len(plan)))]
    w_t = np.conj(tx_steering(scan, cfg))
    if candidates > n_users:
        H_all = np.vstack([channel_row(u, cfg) for u in users])
        pick = smi_select if selector == "smi" else traversal_select
        sel = pick(H_all, n_users, w_t, cfg.p_tot, radar_fraction * cfg.p_tot,
                   cfg.ue_noise_power)
        chosen = tuple(users[i] for i in sel.chosen)
    else:
        chosen = tuple(users[:n_users])
    problem, w_t = make_problem(cfg, chosen, scan)
    return Drop(problem, w_t, chosen, scan)


def design(drop: Drop, kind: str, fixed_power: np.ndarray | None = None,
           nu_max: int = 50, epsilon: float = 1e-3) -> PrecoderState:
    kind = kind.upper()
    if kind == "MMLM":
        state, _ = mmlm(drop.problem, drop.w_t, nu_max=nu_max, epsilon=epsilon,
                        fixed_power=fixed_power)
        return state
    return baseline_state(drop.problem, drop.w_t, kind, fixed_power)


def split_power(p_tot: float, n_users: int, radar_fraction: float) -> np.ndarray:
    """Radar stream gets ``radar_fraction * p_tot``; users share the rest equally."""
    P = np.empty(n_users + 1)
    P[0] = radar_fraction * p_tot
    P[1:] = (p_tot - P[0]) / max(n_users, 1)
    return P


def radar_power_floor(problem: Problem, w_t: np.ndarray, rho_target: float) -> float:
    """Smallest radar-stream power meeting ``gamma_T >= 2^rho_T - 1`` when the
    radar column alone lights the target and V is matched to it."""
    r = problem.Z @ w_t
    q2 = problem.q2()
    per_watt = problem.e_rad * float(np.real(np.vdot(r, np.linalg.solve(q2, r))))
    if per_watt <= 0:
        return float("inf")
    return (2.0 ** rho_target - 1.0) / per_watt


def tradeoff_rate(problem: Problem, w_t: np.ndarray, rho_target: float) -> tuple[float, float]:
    """``(P_T, R_com)`` with the radar floor on ``w_t``, ZF user columns and the
    remaining budget water-filled over users against noise plus radar leakage.

    Raises ``InfeasibleError`` when the floor exceeds the budget.
    """
    from .optimizer import InfeasibleError, baseline_precoders, water_fill

    p_t = radar_power_floor(problem, w_t, rho_target)
    if not p_t <= problem.p_tot:
        raise InfeasibleError(f"radar floor {p_t:.4g} W exceeds the {problem.p_tot:.4g} W budget")
    H = problem.H
    W = baseline_precoders(H, "ZF")
    signal = np.abs(np.sum(H * W.T, axis=1)) ** 2
    leak = p_t * np.abs(H @ w_t) ** 2
    gains = signal / (problem.ue_noise + leak)
    P = water_fill(gains, problem.p_tot - p_t)
    return p_t, float(np.sum(np.log2(1.0 + gains * P)))
