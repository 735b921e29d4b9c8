"""Offline (non-causal CSI) energy allocation.

Single-user water-filling and the Gauss-Seidel iterative water-filling (IWF)
sweep for the sum-throughput problem, plus a KKT residual checker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .model import (
    ENERGY_TOL,
    AllocationMatrix,
    ChannelRealization,
    InvalidArgument,
    OfflinePolicy,
    SystemParams,
)


class InfeasibleError(ValueError):
    """Positive budget but no slot with a positive gain."""


@dataclass(frozen=True)
class IwfConfig:
    max_iters: int = 10_000
    objective_tol: float = 1e-9

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise InvalidArgument("max_iters must be a positive integer")
        if not self.objective_tol > 0:
            raise InvalidArgument("objective_tol must be positive")


@dataclass(frozen=True)
class WaterFillProblem:
    """Per-slot noise-to-gain ratios (``inf`` for dead slots) and an energy budget."""

    noise_ratios: np.ndarray
    budget: float

    def __post_init__(self):
        gamma = np.array(self.noise_ratios, dtype=float).ravel()
        if gamma.size == 0 or np.any(np.isnan(gamma)) or np.any(gamma <= 0):
            raise InvalidArgument("noise ratios must be positive (or +inf)")
        if not (math.isfinite(self.budget) and self.budget >= 0):
            raise InvalidArgument("budget must be finite and non-negative")
        object.__setattr__(self, "noise_ratios", gamma)


@dataclass(frozen=True)
class KktReport:
    water_levels: np.ndarray
    stationarity_residual: float
    complementary_slackness_residual: float
    budget_residual: float

    @property
    def max_residual(self) -> float:
        return max(self.stationarity_residual, self.complementary_slackness_residual,
                   self.budget_residual)


@numba.njit(cache=True, nogil=True)
def _water_fill_into(gamma, budget, out):
    """Fill ``out`` with (level - gamma)^+ summing to ``budget``; return the level.

    Returns NaN when the budget is positive and every gamma is infinite.
    """
    n = gamma.size
    order = np.argsort(gamma)
    finite = 0
    for k in range(n):
        out[k] = 0.0
        if np.isfinite(gamma[k]):
            finite += 1
    if finite == 0:
        return np.inf if budget == 0.0 else np.nan
    # grow the active set over the best slots while the level clears the next one
    m = 1
    acc = gamma[order[0]]
    level = budget + acc
    while m < finite:
        nxt = gamma[order[m]]
        if level <= nxt * m:
            break
        acc += nxt
        m += 1
        level = budget + acc
    level = level / m
    for k in range(m):
        j = order[k]
        e = level - gamma[j]
        out[j] = e if e > 0.0 else 0.0
    return level


@numba.njit(cache=True, nogil=True)
def _iwf_kernel(gains, budgets, noise, max_iters, tol, alloc, trace):
    T, N = gains.shape
    gamma = np.empty(T)
    col = np.empty(T)
    received = np.zeros(T)
    prev = 0.0
    for t in range(T):
        for n in range(N):
            received[t] += gains[t, n] * alloc[t, n]
        prev += np.log1p(received[t] / noise)
    step_tol = tol
    for i in range(N):
        if budgets[i] > 1.0:
            step_tol = max(step_tol, tol * budgets[i])
    for it in range(max_iters):
        moved = 0.0
        for i in range(N):
            for t in range(T):
                h = gains[t, i]
                interference = noise + received[t] - h * alloc[t, i]
                if interference < noise:
                    interference = noise
                gamma[t] = interference / h if h > 0.0 else np.inf
            level = _water_fill_into(gamma, budgets[i], col)
            if np.isnan(level):
                return -(i + 1), False
            for t in range(T):
                moved = max(moved, abs(col[t] - alloc[t, i]))
                alloc[t, i] = col[t]
            for t in range(T):
                s = 0.0
                for n in range(N):
                    s += gains[t, n] * alloc[t, n]
                received[t] = s
        obj = 0.0
        for t in range(T):
            obj += np.log1p(received[t] / noise)
        trace[it] = obj
        if obj - prev <= tol * abs(obj) and moved <= step_tol:
            return it + 1, True
        prev = obj
    return max_iters, False


def water_fill(problem: WaterFillProblem) -> tuple[np.ndarray, float]:
    """Solve ``max sum log(1 + e_t / gamma_t)`` s.t. ``sum e_t = budget``.

    Returns the allocation ``(level - gamma_t)^+`` and the water level.
    Slots with ``gamma_t = inf`` get nothing.
    """
    out = np.empty_like(problem.noise_ratios)
    level = _water_fill_into(problem.noise_ratios, float(problem.budget), out)
    if math.isnan(level):
        raise InfeasibleError("positive budget but every slot has zero gain")
    return out, float(level)


@dataclass(frozen=True)
class IwfResult:
    allocation: AllocationMatrix
    iterations: int
    objective_trace: np.ndarray  # nats, after each sweep
    converged: bool


def _run_iwf(gains: np.ndarray, budgets: np.ndarray, params: SystemParams,
             max_iters: int, tol: float) -> IwfResult:
    alloc = np.zeros(gains.shape)
    trace = np.zeros(max_iters)
    iters, converged = _iwf_kernel(gains, budgets, params.noise_energy, int(max_iters),
                        float(tol), alloc, trace)
    if iters < 0:
        raise InfeasibleError(
            f"user {-iters - 1} has a positive budget but zero gain in every slot"
        )
    return IwfResult(AllocationMatrix(alloc), int(iters),
                     params.rate_scale * trace[:iters], bool(converged))


def iterative_water_fill(params: SystemParams, realization: ChannelRealization,
                         max_iters: int = 10_000, objective_tol: float = 1e-9) -> IwfResult:
    """Optimal offline allocation by iterative water-filling.

    Each sweep water-fills users 0..N-1 in turn against the others' current
    signals treated as noise. Stops after ``max_iters`` sweeps, or once a sweep
    both improves the objective by at most ``objective_tol`` (relative) and
    moves no allocation entry by more than ``objective_tol * max(1, E_max)``.
    The second test matters: near a flat optimum the objective stalls long
    before the allocation settles.
    """
    IwfConfig(max_iters, objective_tol)
    gains = np.ascontiguousarray(realization.gains, dtype=float)
    if gains.shape != (params.horizon, params.n_users):
        raise InvalidArgument(
            f"realization shape {gains.shape} does not match "
            f"({params.horizon}, {params.n_users})"
        )
    return _run_iwf(gains, params.budgets, params, max_iters, objective_tol)


def iwf_sweep(params: SystemParams, realization: ChannelRealization,
              start: AllocationMatrix) -> AllocationMatrix:
    """One Gauss-Seidel sweep over the users starting from ``start``."""
    alloc = np.array(start.energies, dtype=float)
    trace = np.zeros(1)
    iters, _ = _iwf_kernel(np.ascontiguousarray(realization.gains, dtype=float),
                           params.budgets, params.noise_energy, 1, 1.0, alloc, trace)
    if iters < 0:
        raise InfeasibleError(f"user {-iters - 1} has a positive budget but no usable slot")
    return AllocationMatrix(alloc)


def objective_nats(params: SystemParams, realization: ChannelRealization,
                   alloc: AllocationMatrix) -> float:
    snr = np.einsum("tn,tn->t", realization.gains, alloc.energies) / params.noise_energy
    return params.rate_scale * float(np.sum(np.log1p(snr)))


def verify_kkt(params: SystemParams, realization: ChannelRealization,
               alloc: AllocationMatrix, active_tol: float = ENERGY_TOL) -> KktReport:
    """Relative KKT residuals of an allocation for the offline problem.

    The per-user multiplier is inferred from the marginal rates of the slots
    where the user is active (energy above ``active_tol``).
    """
    h = realization.gains
    e = alloc.energies
    received = params.noise_energy + np.einsum("tn,tn->t", h, e)
    # marginal rate d R / d e_t^i up to the common factor tau W / ln 2
    marginal = h / received[:, None]
    levels = np.empty(params.n_users)
    stat = slack = 0.0
    for i in range(params.n_users):
        active = e[:, i] > active_tol
        g = marginal[:, i]
        mu = g[active].mean() if active.any() else g.max()
        if mu <= 0:
            levels[i] = math.inf
            continue
        levels[i] = 1.0 / mu
        if active.any():
            stat = max(stat, float(np.max(np.abs(g[active] - mu)) / mu))
        if (~active).any():
            slack = max(slack, float(np.max(np.maximum(g[~active] - mu, 0.0)) / mu))
    budgets = params.budgets
    budget_res = float(np.max(np.abs(e.sum(axis=0) - budgets) / np.maximum(1.0, budgets)))
    return KktReport(levels, stat, slack, budget_res)


def single_iteration_gap_check(params: SystemParams, realization: ChannelRealization,
                               max_iters: int = 10_000,
                               objective_tol: float = 1e-9) -> tuple[float, float]:
    """Gap in nats between one IWF sweep and the converged objective, and the
    ``tau W (N - 1) T / 2`` bound it should respect."""
    one = iterative_water_fill(params, realization, 1, objective_tol)
    full = iterative_water_fill(params, realization, max_iters, objective_tol)
    gap = full.objective_trace[-1] - one.objective_trace[-1]
    bound = params.rate_scale * (params.n_users - 1) * params.horizon / 2
    return float(gap), float(bound)


class OfflineIwf(OfflinePolicy):
    """Full-CSI benchmark."""

    name = "offline_iwf"

    def __init__(self, params: SystemParams, config: IwfConfig = IwfConfig()):
        self.params = params
        self.config = config

    def allocate_all(self, realization: ChannelRealization) -> AllocationMatrix:
        return iterative_water_fill(self.params, realization, self.config.max_iters,
                                    self.config.objective_tol).allocation
