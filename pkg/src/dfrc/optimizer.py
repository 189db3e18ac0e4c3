"""SINR and rate evaluation, user selection and the MMLM joint design.

Column 0 of every precoder ``W`` and entry 0 of every power vector ``P``
belong to the radar stream; columns ``1..K`` serve the selected users.
Gradients are Wirtinger derivatives with respect to the conjugate variable,
so that ``df = 2 Re <grad, dz>``.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .waveform import PrecoderState

LOG2E = 1.0 / math.log(2.0)
TRAVERSAL_GUARD = 10 ** 6


class InfeasibleError(RuntimeError):
    """The SINR floors cannot be met within the power budget."""


class GuardExceeded(RuntimeError):
    """An exhaustive search would exceed the combinatorial guard."""


@dataclass(frozen=True)
class Problem:
    """Everything the joint design needs for one scan block.

    ``ue_noise`` may be a scalar or one value per user. Interference from the
    users at the BS receiver is ``interference_to_noise * noise`` per user.
    """

    H: np.ndarray
    Z: np.ndarray
    A_K: np.ndarray
    ue_noise: np.ndarray
    noise: float
    p_tot: float
    e_rad: float
    interference_to_noise: float = 1.0
    rho_user: float = 0.0
    rho_target: float = 0.0
    coherent: bool = False

    def __post_init__(self):
        k = self.H.shape[0]
        object.__setattr__(self, "ue_noise", np.broadcast_to(
            np.asarray(self.ue_noise, dtype=float), (k,)).copy())
        if self.A_K.shape[1] != k:
            raise ValueError("A_K must have one column per user")

    @property
    def n_users(self) -> int:
        return self.H.shape[0]

    @property
    def n_t(self) -> int:
        return self.H.shape[1] if self.H.size else self.Z.shape[1]

    def floors(self) -> np.ndarray:
        """Minimum SINRs ``2^rho - 1`` (target first)."""
        t = np.full(self.n_users + 1, 2.0 ** self.rho_user - 1.0)
        t[0] = 2.0 ** self.rho_target - 1.0
        return t

    def q2(self) -> np.ndarray:
        n_r = self.Z.shape[0]
        return self.noise * (self.interference_to_noise * self.A_K @ self.A_K.conj().T
                             + np.eye(n_r))


@dataclass(frozen=True)
class RateReport:
    gamma_users: np.ndarray
    gamma_target: float
    r_com: float
    r_rad: float
    r_sum: float
    residuals: np.ndarray  # C1 (per user), C2, C3; >= 0 when satisfied

    def feasible(self, tol: float = 1e-6) -> bool:
        return bool(np.all(self.residuals >= -tol))


# ------------------------------------------------------------------ SINR ---

def sinr_users(H: np.ndarray, W: np.ndarray, P: np.ndarray, ue_noise,
               coherent: bool = False) -> np.ndarray:
    """Per-user SINR.

    Interference from the radar beam and the other users adds in power
    (independent unit-power streams). ``coherent=True`` adds the amplitudes
    ``sqrt(P_j) h_k w_j`` before squaring instead.
    """
    K = H.shape[0]
    if K == 0:
        return np.zeros(0)
    Y = H @ W
    amp = Y * np.sqrt(P)[None, :]
    idx = np.arange(K)
    signal = np.abs(amp[idx, idx + 1]) ** 2
    if coherent:
        interf = np.abs(amp.sum(axis=1) - amp[idx, idx + 1]) ** 2
    else:
        interf = np.sum(np.abs(amp) ** 2, axis=1) - signal
    return signal / (interf + np.broadcast_to(ue_noise, (K,)))


def sinr_target(V: np.ndarray, Z: np.ndarray, W: np.ndarray, P: np.ndarray, A_K: np.ndarray,
                noise: float, e_rad: float, interference_to_noise: float = 1.0) -> float:
    """``e_rad * sum_j P_j |V Z w_j|^2 / (noise * (inr * |V A_K|^2 + |V|^2))``."""
    V = np.asarray(V).ravel()
    vv = np.vdot(V, V).real
    if vv == 0:
        raise ValueError("processing vector must be nonzero")
    num = e_rad * np.sum(P * np.abs(V @ Z @ W) ** 2)
    den = noise * (interference_to_noise * np.sum(np.abs(V @ A_K) ** 2) + vv)
    return float(num / den)


def rates(problem: Problem, state: PrecoderState) -> RateReport:
    g_u = sinr_users(problem.H, state.W, state.P, problem.ue_noise, problem.coherent)
    g_t = sinr_target(state.V, problem.Z, state.W, state.P, problem.A_K, problem.noise,
                      problem.e_rad, problem.interference_to_noise)
    return sum_rate(g_u, g_t, problem, state.P)


def sum_rate(gamma_users, gamma_target: float, problem: Problem | None = None,
             P: np.ndarray | None = None) -> RateReport:
    g_u = np.asarray(gamma_users, dtype=float)
    r_com = float(np.sum(np.log2(1.0 + g_u)))
    r_rad = float(np.log2(1.0 + gamma_target))
    if problem is not None and P is not None:
        floors = problem.floors()
        res = np.concatenate([g_u - floors[1:], [gamma_target - floors[0]],
                              [problem.p_tot - float(np.sum(P))]])
    else:
        res = np.zeros(0)
    return RateReport(g_u, float(gamma_target), r_com, r_rad, r_com + r_rad, res)


def log_det_rate(gammas) -> float:
    """``log2 det(I + diag(gammas))`` evaluated as a determinant."""
    g = np.asarray(gammas, dtype=float)
    sign, logdet = np.linalg.slogdet(np.eye(g.size) + np.diag(g))
    return float(logdet * LOG2E)


def surrogate_value(Gamma, Gamma0) -> float:
    """Tangent of ``-log2 det(I + Gamma)`` at ``Gamma0``.

    ``-log2det(I+G0) - log2(e) tr((I+G0)^-1 (G-G0))``. The tangent of the
    convex map touches it at ``Gamma0`` and lies below it elsewhere.
    """
    G = np.diag(np.atleast_1d(Gamma)) if np.ndim(Gamma) <= 1 else np.asarray(Gamma)
    G0 = np.diag(np.atleast_1d(Gamma0)) if np.ndim(Gamma0) <= 1 else np.asarray(Gamma0)
    eye = np.eye(G0.shape[0])
    base = -np.linalg.slogdet(eye + G0)[1] * LOG2E
    return float(base - LOG2E * np.trace(np.linalg.solve(eye + G0, G - G0)).real)


# ------------------------------------------------------------- gradients ---

def _user_terms(H, W, P, ue_noise):
    Y = H @ W
    S = np.abs(Y) ** 2 * P[None, :]
    K = H.shape[0]
    idx = np.arange(K)
    sig = S[idx, idx + 1]
    D = S.sum(axis=1) - sig + ue_noise
    return Y, sig, D


def weighted_grad_w(weights: np.ndarray, problem: Problem, W: np.ndarray, V: np.ndarray,
                    P: np.ndarray) -> np.ndarray:
    """Gradient of ``sum_v weights_v * gamma_v`` with respect to ``conj(W)``.

    ``weights`` is ordered (target, user 1..K). Power-sum interference only.
    """
    H, K = problem.H, problem.n_users
    G = np.zeros_like(W, dtype=complex)
    if K:
        Y, sig, D = _user_terms(H, W, P, problem.ue_noise)
        wu = weights[1:]
        # coef[i, j]: multiplier of h_i^H (h_i w_j) in the gradient of column j
        coef = -(wu * sig / D ** 2)[:, None] * P[None, :]
        idx = np.arange(K)
        coef[idx, idx + 1] = wu * P[idx + 1] / D
        G += H.conj().T @ (coef * Y)
    V = np.asarray(V).ravel()
    r = V @ problem.Z
    den = problem.noise * (problem.interference_to_noise * np.sum(np.abs(V @ problem.A_K) ** 2)
                           + np.vdot(V, V).real)
    G += weights[0] * problem.e_rad / den * np.outer(r.conj(), (r @ W) * P)
    return G


def kkt_grad_w(k: int, W, V, P, problem: Problem, eta) -> np.ndarray:
    """Gradient of the Lagrangian ``sum (1+eta_v) gamma_v + ...`` in ``conj(w_k)``.

    ``k = 0`` is the radar column; ``eta`` is ordered (target, users..., power).
    """
    eta = np.asarray(eta, dtype=float)
    weights = 1.0 + eta[:problem.n_users + 1]
    return weighted_grad_w(weights, problem, W, V, P)[:, k]


def kkt_grad_v(W, V, P, problem: Problem, eta_t: float = 0.0) -> np.ndarray:
    """Gradient of ``(1+eta_T) gamma_T`` in ``conj(V)``.

    With ``Q1 = e_rad Z W P W^H Z^H`` and ``Q2`` the noise-plus-interference
    form, it is ``(1+eta_T) [V Q1 (V Q2 V^H) - (V Q1 V^H) V Q2] / (V Q2 V^H)^2``.
    """
    V = np.asarray(V).ravel()
    q1 = _q1(problem, W, P)
    q2 = problem.q2()
    a = (V @ q1 @ V.conj()).real
    b = (V @ q2 @ V.conj()).real
    return (1.0 + eta_t) * ((V @ q1) * b - a * (V @ q2)) / b ** 2


def _q1(problem: Problem, W, P) -> np.ndarray:
    ZW = problem.Z @ W
    return problem.e_rad * (ZW * P[None, :]) @ ZW.conj().T


def lagrangian(W, V, P, problem: Problem, eta) -> float:
    eta = np.asarray(eta, dtype=float)
    K = problem.n_users
    g_u = sinr_users(problem.H, W, P, problem.ue_noise)
    g_t = sinr_target(V, problem.Z, W, P, problem.A_K, problem.noise, problem.e_rad,
                      problem.interference_to_noise)
    fl = problem.floors()
    val = np.sum((1 + eta[1:K + 1]) * g_u + eta[1:K + 1] * (-fl[1:]))
    val += (1 + eta[0]) * g_t + eta[0] * (-fl[0])
    if eta.size > K + 1:
        val += eta[K + 1] * (np.sum(P) - problem.p_tot)
    return float(val)


def optimal_v(problem: Problem, W, P, previous: np.ndarray | None = None) -> np.ndarray:
    """Receive row vector maximizing the target SINR for fixed ``W, P``.

    Top generalized eigenvector of ``(Q1, Q2)``, unit norm, phase aligned with
    ``previous`` when given.
    """
    q1 = _q1(problem, W, P)
    q2 = problem.q2()
    _, vecs = linalg.eigh(q1, q2)
    u = vecs[:, -1]
    if not np.any(np.abs(q1) > 0):
        u = previous.conj() if previous is not None else np.eye(q1.shape[0])[:, 0]
    V = u.conj() / np.linalg.norm(u)
    if previous is not None:
        ph = np.vdot(V, np.asarray(previous).ravel())
        if abs(ph) > 0:
            V = V * ph / abs(ph)
    return V


# ---------------------------------------------------------- power control ---

def water_fill(gains, p_tot: float, floors=None, objective: str = "log",
               names: list[str] | None = None, tol: float = 1e-12) -> np.ndarray:
    """Split ``p_tot`` over streams with per-stream minimum powers.

    ``objective="log"`` maximizes ``sum log(1 + g_i P_i)``: ``P_i = max(floor_i,
    level - 1/g_i)`` with the water level found by bisection so the budget is
    spent. ``objective="linear"`` maximizes ``sum g_i P_i``: floors first, then
    the residual to the largest gain (lowest index on ties).
    """
    g = np.asarray(gains, dtype=float)
    if np.any(g <= 0):
        raise ValueError("gains must be strictly positive")
    f = np.zeros_like(g) if floors is None else np.asarray(floors, dtype=float)
    if np.any(~np.isfinite(f)) or f.sum() > p_tot * (1 + 1e-12):
        bad = int(np.argmax(f))
        label = names[bad] if names else f"stream {bad}"
        raise InfeasibleError(f"SINR floor of {label} needs {f[bad]:.4g} W; "
                              f"floors total {f.sum():.4g} W exceed the {p_tot:.4g} W budget")
    residual = p_tot - f.sum()
    if objective == "linear":
        P = f.copy()
        P[int(np.argmax(g))] += residual
        return P
    if objective != "log":
        raise ValueError(f"unknown objective {objective!r}")
    inv = 1.0 / g
    spend = lambda lvl: np.sum(np.maximum(f, lvl - inv))  # noqa: E731
    lo, hi = 0.0, float(np.max(f + inv)) + p_tot
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if spend(mid) > p_tot:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol * max(1.0, hi):
            break
    P = np.maximum(f, lo - inv)
    # put the bisection remainder where it does the most good
    P[int(np.argmax(g / (1 + g * P)))] += p_tot - P.sum()
    return P


def _stream_names(K: int) -> list[str]:
    return ["target (C2)"] + [f"user {k} (C1)" for k in range(1, K + 1)]


def min_power_floors(problem: Problem, W, V) -> np.ndarray:
    """Smallest powers meeting every SINR floor, from a linear program.

    Raises :class:`InfeasibleError` when no allocation within the budget
    satisfies C1 and C2 together.
    """
    K = problem.n_users
    t = problem.floors()
    if np.all(t <= 0):
        return np.zeros(K + 1)
    A_ub, b_ub = [], []
    if K:
        S = np.abs(problem.H @ W) ** 2
        for k in range(K):
            row = t[k + 1] * S[k].copy()
            row[k + 1] = -S[k, k + 1]
            A_ub.append(row)
            b_ub.append(-t[k + 1] * problem.ue_noise[k])
    V = np.asarray(V).ravel()
    b = problem.e_rad * np.abs(V @ problem.Z @ W) ** 2
    den = problem.noise * (problem.interference_to_noise * np.sum(np.abs(V @ problem.A_K) ** 2)
                           + np.vdot(V, V).real)
    A_ub.append(-b)
    b_ub.append(-t[0] * den)
    A_ub.append(np.ones(K + 1))
    b_ub.append(problem.p_tot)
    res = optimize.linprog(np.ones(K + 1), A_ub=np.array(A_ub), b_ub=np.array(b_ub),
                           bounds=[(0, None)] * (K + 1), method="highs")
    if res.status != 0:
        single = _binding_constraint(problem, W, V, t, b, den)
        raise InfeasibleError(f"SINR floors cannot be met within {problem.p_tot:.4g} W; "
                              f"binding constraint: {single}")
    return np.asarray(res.x)


def _binding_constraint(problem, W, V, t, b, den) -> str:
    names = _stream_names(problem.n_users)
    need = np.full(problem.n_users + 1, np.inf)
    need[0] = t[0] * den / b[0] if b[0] > 0 else np.inf
    if problem.n_users:
        S = np.abs(problem.H @ W) ** 2
        for k in range(problem.n_users):
            if S[k, k + 1] > 0:
                need[k + 1] = t[k + 1] * problem.ue_noise[k] / S[k, k + 1]
    worst = int(np.argmax(need))
    if need[worst] > problem.p_tot:
        return names[worst]
    return "joint C1/C2 interference coupling"


def effective_gains(problem: Problem, state: PrecoderState) -> np.ndarray:
    """SINR per unit own power with everything else frozen (target first)."""
    K = problem.n_users
    g = np.empty(K + 1)
    V = np.asarray(state.V).ravel()
    b = problem.e_rad * np.abs(V @ problem.Z @ state.W[:, 0]) ** 2
    den = problem.noise * (problem.interference_to_noise * np.sum(np.abs(V @ problem.A_K) ** 2)
                           + np.vdot(V, V).real)
    g[0] = b / den
    if K:
        _, sig, D = _user_terms(problem.H, state.W, state.P, problem.ue_noise)
        S = np.abs(problem.H @ state.W) ** 2
        g[1:] = S[np.arange(K), np.arange(K) + 1] / D
    return np.maximum(g, 1e-300)


def allocate_power(problem: Problem, state: PrecoderState, rounds: int = 20) -> np.ndarray:
    """Log-objective water filling with interference frozen at the current powers.

    Floors are refreshed until every C1/C2 floor holds at the new powers.
    """
    K = problem.n_users
    base = min_power_floors(problem, state.W, state.V)
    t = problem.floors()
    names = _stream_names(K)
    cur = state.copy()
    P = cur.P
    for _ in range(rounds):
        g = effective_gains(problem, cur)
        floors = np.maximum(base, t / g)
        floors = np.where(t > 0, floors, 0.0)
        if floors.sum() > problem.p_tot:
            floors = base
        P = water_fill(g, problem.p_tot, floors, "log", names)
        cur = PrecoderState(cur.W, cur.V, P)
        if rates(problem, cur).feasible(1e-9):
            return P
    # the linear-program point meets every floor; fall back to it
    return base


# ---------------------------------------------------------------- MMLM ---

def _power_step(problem: Problem, state: PrecoderState, it: int) -> None:
    try:
        P = allocate_power(problem, state)
    except InfeasibleError:
        if it == 1:
            raise
        return
    if rates(problem, PrecoderState(state.W, state.V, P)).r_sum >= rates(problem, state).r_sum:
        state.P = P

@dataclass
class IterationRecord:
    iteration: int
    r_sum: float
    surrogate: float
    residuals: list
    dW: float
    dV: float
    W: np.ndarray = field(repr=False)
    V: np.ndarray = field(repr=False)
    P: np.ndarray = field(repr=False)


@dataclass
class MmlmTrace:
    records: list = field(default_factory=list)
    iterations: int = 0
    reason: str = "max-iter"
    initial_r_sum: float = 0.0

    @property
    def r_sum(self) -> np.ndarray:
        return np.array([self.initial_r_sum] + [r.r_sum for r in self.records])

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps({"iteration": r.iteration, "r_sum": r.r_sum,
                                     "surrogate": r.surrogate, "residuals": r.residuals,
                                     "dW": r.dW, "dV": r.dV}) + "\n")


def _normalize_columns(W: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(W, axis=0)
    n[n == 0] = 1.0
    return W / n


def mrt_state(problem: Problem, w_t: np.ndarray,
              fixed_power: np.ndarray | None = None) -> PrecoderState:
    """MRT user columns, the given radar column, optimal V and allocated powers."""
    return baseline_state(problem, w_t, "MRT", fixed_power)


def baseline_state(problem: Problem, w_t: np.ndarray, kind: str,
                   fixed_power: np.ndarray | None = None) -> PrecoderState:
    """Closed-form user columns with the radar column ``w_t``.

    Powers come from :func:`allocate_power` unless ``fixed_power`` is given;
    V is the matching generalized eigenvector.
    """
    W = np.column_stack([w_t / np.linalg.norm(w_t), baseline_precoders(
        problem.H, kind, float(np.mean(problem.ue_noise)) if problem.n_users else 1.0,
        problem.p_tot)])
    K = problem.n_users
    if fixed_power is not None:
        P = np.asarray(fixed_power, dtype=float).copy()
        return PrecoderState(W, optimal_v(problem, W, P), P)
    P = np.full(K + 1, problem.p_tot / (K + 1))
    V = optimal_v(problem, W, P)
    state = PrecoderState(W, V, P)
    state.P = allocate_power(problem, state)
    state.V = optimal_v(problem, W, state.P, V)
    return state


def baseline_precoders(H: np.ndarray, kind: str, noise: float = 1.0,
                       p_tot: float = 1.0) -> np.ndarray:
    """Unit-norm MRT, ZF or MMSE (regularized ZF) columns for the rows of ``H``."""
    K, n_t = H.shape
    if K == 0:
        return np.zeros((n_t, 0), dtype=complex)
    kind = kind.upper()
    if kind == "MRT":
        W = H.conj().T
    elif kind == "ZF":
        gram = H @ H.conj().T
        if np.linalg.matrix_rank(gram) < K:
            warnings.warn("rank-deficient channel; ZF falls back to the pseudo-inverse")
            W = np.linalg.pinv(H)
        else:
            W = H.conj().T @ np.linalg.inv(gram)
    elif kind == "MMSE":
        reg = K * noise / p_tot
        W = H.conj().T @ np.linalg.inv(H @ H.conj().T + reg * np.eye(K))
    else:
        raise ValueError(f"unknown precoder kind {kind!r}")
    return _normalize_columns(W)


def _inner_w_ascent(problem: Problem, state: PrecoderState, eta: np.ndarray,
                    steps: int, step0: float) -> tuple[np.ndarray, float, float]:
    """Projected gradient ascent on the re-anchored surrogate, one step per anchor.

    Each step linearizes the rate at the current point (weights
    ``(1+eta_v) log2(e) / (1+gamma_v)``), moves along the tangent-projected
    gradient and renormalizes the columns. The step halves until the true
    sum rate does not drop.
    """
    W, V, P = state.W, state.V, state.P
    start = rates(problem, state)
    cur = start.r_sum
    keep_feasible = start.feasible(1e-9)
    step = step0
    for _ in range(steps):
        rep = rates(problem, PrecoderState(W, V, P))
        gam = np.concatenate([[rep.gamma_target], rep.gamma_users])
        weights = (1.0 + eta[:problem.n_users + 1]) * LOG2E / (1.0 + gam)
        G = weighted_grad_w(weights, problem, W, V, P)
        G = G - W * np.real(np.sum(W.conj() * G, axis=0))[None, :]
        gnorm = np.linalg.norm(G)
        if gnorm < 1e-14:
            break
        accepted = False
        for _ in range(30):
            W_new = _normalize_columns(W + (step / gnorm) * G)
            trial = rates(problem, PrecoderState(W_new, V, P))
            val = trial.r_sum
            if val >= cur and (not keep_feasible or trial.feasible(1e-9)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        gain = val - cur
        W, cur = W_new, val
        step = min(step * 2.0, 1.0)
        if gain < 1e-10 * max(1.0, abs(cur)):
            break
    return W, cur, step


def mmlm(problem: Problem, w_t0: np.ndarray, nu_max: int = 50, epsilon: float = 1e-3,
         inner_steps: int = 50, init: PrecoderState | None = None,
         fixed_power: np.ndarray | None = None) -> tuple[PrecoderState, MmlmTrace]:
    """Alternate V (generalized eigenvector), W (surrogate ascent) and P
    (water filling) until both ``|dW|^2`` and ``|dV|^2`` fall below ``epsilon``
    or ``nu_max`` iterations run. With ``fixed_power`` the P step is skipped.

    The start point is the MRT design with the radar column ``w_t0``. Every
    update is kept only if the sum rate does not decrease.
    """
    K = problem.n_users
    state = init.copy() if init is not None else mrt_state(problem, w_t0, fixed_power)
    trace = MmlmTrace(initial_r_sum=rates(problem, state).r_sum)
    eta = np.zeros(K + 2)
    step = 0.25
    for it in range(1, nu_max + 1):
        prev = state.copy()
        rep0 = rates(problem, state)
        gam0 = np.concatenate([[rep0.gamma_target], rep0.gamma_users])
        # V update: exact maximizer of the only term that depends on V
        V = optimal_v(problem, state.W, state.P, state.V)
        if rates(problem, PrecoderState(state.W, V, state.P)).r_sum >= rep0.r_sum:
            state.V = V
        # W update
        W, _, step = _inner_w_ascent(problem, state, eta, inner_steps, max(step, 1e-3))
        state.W = W
        # P update
        if fixed_power is None:
            _power_step(problem, state, it)
        rep = rates(problem, state)
        # multipliers: projected ascent on the sign-constrained Lagrangian
        g = np.concatenate([[rep.gamma_target], rep.gamma_users]) + 1.0 - 2.0 ** np.concatenate(
            [[problem.rho_target], np.full(K, problem.rho_user)])
        slack_p = np.sum(state.P) - problem.p_tot
        lr = 0.1 / math.sqrt(it)
        eta[:K + 1] = np.clip(eta[:K + 1] + lr * g / (1.0 + np.abs(g)), -1.0, 0.0)
        eta[K + 1] = np.clip(eta[K + 1] + lr * slack_p, -1.0, 0.0)
        dW = float(np.linalg.norm(state.W - prev.W) ** 2)
        dV = float(np.linalg.norm(state.V - prev.V) ** 2)
        gam = np.concatenate([[rep.gamma_target], rep.gamma_users])
        trace.records.append(IterationRecord(
            it, rep.r_sum, surrogate_value(gam, gam0), rep.residuals.tolist(), dW, dV,
            state.W.copy(), state.V.copy(), state.P.copy()))
        trace.iterations = it
        if dW < epsilon and dV < epsilon:
            trace.reason = "W-converged-and-V-converged"
            break
    return state, trace


# ------------------------------------------------------- user selection ---

@dataclass(frozen=True)
class SelectionResult:
    chosen: tuple
    trace: tuple
    sum_rate: float
    multiplies: int


def selection_gains(H_all: np.ndarray, w_t: np.ndarray) -> np.ndarray:
    """``|h_u w_j|^2`` for MRT columns of every candidate plus the radar column
    (last column)."""
    W = np.column_stack([_normalize_columns(H_all.conj().T), w_t / np.linalg.norm(w_t)])
    return np.abs(H_all @ W) ** 2


def subset_rate(G: np.ndarray, subset, p_user: float, p_target: float, noise) -> float:
    """Sum rate of ``subset`` with MRT columns and fixed per-stream powers."""
    s = np.asarray(subset, dtype=int)
    if s.size == 0:
        return 0.0
    sub = G[np.ix_(s, s)]
    sig = np.diag(sub) * p_user
    interf = (sub.sum(axis=1) - np.diag(sub)) * p_user + G[s, -1] * p_target
    noise = np.broadcast_to(noise, (G.shape[0],))[s]
    return float(np.sum(np.log2(1.0 + sig / (interf + noise))))


def smi_select(H_all: np.ndarray, K: int, w_t: np.ndarray, p_tot: float, p_target: float,
               noise, ids=None) -> SelectionResult:
    """Greedy selection: each round adds the candidate with the largest sum rate;
    stops early when no candidate raises it. Ties go to the lowest id."""
    U = H_all.shape[0]
    if U == 0:
        raise ValueError("candidate set is empty")
    if K > U or K < 1:
        raise ValueError(f"cannot select {K} of {U} candidates")
    ids = list(range(U)) if ids is None else list(ids)
    p_user = (p_tot - p_target) / K
    G = selection_gains(H_all, w_t)
    if K == U:
        chosen = list(range(U))
        return SelectionResult(tuple(ids[i] for i in chosen), (),
                               subset_rate(G, chosen, p_user, p_target, noise), U * K)
    chosen: list[int] = []
    remaining = sorted(range(U), key=lambda i: ids[i])
    c_delta = 0.0
    trace = []
    mults = 0
    for _ in range(K):
        best, best_val = None, -math.inf
        for q in remaining:
            mults += 1
            val = subset_rate(G, chosen + [q], p_user, p_target, noise)
            if val > best_val:
                best, best_val = q, val
        trace.append(best_val)
        if best_val > c_delta:
            chosen.append(best)
            remaining.remove(best)
            c_delta = best_val
        else:
            break
    return SelectionResult(tuple(ids[i] for i in chosen), tuple(trace), c_delta, mults)


def traversal_select(H_all: np.ndarray, K: int, w_t: np.ndarray, p_tot: float,
                     p_target: float, noise, ids=None,
                     guard: int = TRAVERSAL_GUARD) -> SelectionResult:
    """Exhaustive search over every subset of at most ``K`` candidates with the
    same rate model as SMI (which may also stop below ``K``)."""
    U = H_all.shape[0]
    if U == 0:
        raise ValueError("candidate set is empty")
    if K > U or K < 1:
        raise ValueError(f"cannot select {K} of {U} candidates")
    count = sum(math.comb(U, k) for k in range(1, K + 1))
    if count > guard:
        raise GuardExceeded(f"{count} subsets of up to {K} of {U} users exceed the guard of {guard}")
    ids = list(range(U)) if ids is None else list(ids)
    p_user = (p_tot - p_target) / K
    G = selection_gains(H_all, w_t)
    if K == U:
        return SelectionResult(tuple(ids), (), subset_rate(G, range(U), p_user, p_target, noise),
                               complexity_counts(U, K)[1])
    best_val, best_set = -math.inf, ()
    for k in range(1, K + 1):
        subsets = np.array(list(itertools.combinations(range(U), k)), dtype=int)
        vals = _subset_rates(G, subsets, p_user, p_target, noise)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_set = float(vals[i]), tuple(subsets[i])
    chosen = tuple(ids[i] for i in best_set)
    return SelectionResult(chosen, (best_val,), best_val, complexity_counts(U, K)[1])


def _subset_rates(G, subsets, p_user, p_target, noise) -> np.ndarray:
    sub = G[subsets[:, :, None], subsets[:, None, :]]
    diag = np.einsum("nii->ni", sub)
    sig = diag * p_user
    interf = (sub.sum(axis=2) - diag) * p_user + G[subsets, -1] * p_target
    nz = np.broadcast_to(noise, (G.shape[0],))[subsets]
    return np.sum(np.log2(1.0 + sig / (interf + nz)), axis=1)


def complexity_counts(U: int, K: int) -> tuple[int, int]:
    """Complex-multiply counts: ``U*K`` for SMI and ``U**K`` for traversal."""
    return U * K, U ** K
