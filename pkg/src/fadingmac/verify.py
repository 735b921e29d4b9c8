"""Reduced-scale property checks driven by an experiment config."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy import integrate

from .fading import Deterministic, TabulatedInverseCdf
from .model import ChannelRealization, SystemParams, run_episode
from .offline import iterative_water_fill, single_iteration_gap_check, verify_kkt
from .online_dp import DpConfig, DpPolicy, build_value_tables
from .policies import Cec, one_shot_thresholds
from .sim import DominanceError, ExperimentSpec, realization, run_experiment

KKT_TOL = 1e-6
THRESHOLD_TOL = 1e-6
CEC_OFFLINE_TOL = 1e-6
VERIFY_DP = DpConfig(energy_grid_points=21, quadrature_order=8, inner_opt_points=17)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    skipped: bool = False

    def line(self) -> str:
        status = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        return f"{status} {self.name}: {self.detail}"


def _base_params(spec: ExperimentSpec) -> SystemParams:
    return spec.points()[0][1]


def _random_instances(spec: ExperimentSpec, count: int):
    params = _base_params(spec)
    rng = np.random.default_rng(spec.seed)
    for k in range(count):
        budgets = tuple(rng.uniform(0.1, 10.0, params.n_users))
        p = params.with_budgets(budgets)
        yield p, realization(p, spec.seed, k)


def check_kkt(spec: ExperimentSpec, count: int = 20) -> CheckResult:
    worst = 0.0
    for p, real in _random_instances(spec, count):
        res = iterative_water_fill(p, real, spec.iwf.max_iters, spec.iwf.objective_tol)
        worst = max(worst, verify_kkt(p, real, res.allocation).max_residual)
    return CheckResult("kkt_residuals", worst <= KKT_TOL,
                       f"worst residual {worst:.3e} (limit {KKT_TOL:g}) over {count} instances")


def check_iwf_trace(spec: ExperimentSpec, count: int = 20) -> CheckResult:
    worst = 0.0
    for p, real in _random_instances(spec, count):
        trace = iterative_water_fill(p, real, spec.iwf.max_iters,
                                     spec.iwf.objective_tol).objective_trace
        if trace.size > 1:
            worst = max(worst, float(np.max(-np.diff(trace) / np.abs(trace[1:]).clip(1e-300))))
    return CheckResult("iwf_trace_non_decreasing", worst <= 1e-12,
                       f"largest relative drop {worst:.3e}")


def check_single_sweep_gap(spec: ExperimentSpec, count: int = 20) -> CheckResult:
    violations = 0
    for p, real in _random_instances(spec, count):
        gap, bound = single_iteration_gap_check(p, real, spec.iwf.max_iters,
                                                spec.iwf.objective_tol)
        violations += gap > bound
    return CheckResult("single_sweep_gap_bound", violations == 0,
                       f"{violations} of {count} instances above (N-1)T/2 nats")


def _expected_max_oracle(dist, floor: float) -> float:
    if isinstance(dist, Deterministic):
        return max(dist.value, floor)
    upper = max(dist.x) if isinstance(dist, TabulatedInverseCdf) else math.inf
    if floor >= upper:
        return floor
    tail, _ = integrate.quad(lambda x: 1.0 - float(dist.cdf(x)), floor, upper, limit=200)
    return floor + tail


def check_thresholds(spec: ExperimentSpec) -> CheckResult:
    params = _base_params(spec)
    nu = one_shot_thresholds(params).nu
    worst = 0.0
    ok = True
    for i, dist in enumerate(params.fading):
        ok &= bool(np.all(np.diff(nu[i]) <= 1e-15))
        ok &= abs(nu[i, -2] - dist.mean) <= THRESHOLD_TOL
        for k in range(params.horizon):
            worst = max(worst, abs(nu[i, k] - _expected_max_oracle(dist, nu[i, k + 1])))
    ok &= worst <= THRESHOLD_TOL
    return CheckResult("one_shot_thresholds", bool(ok),
                       f"max recursion error vs quadrature oracle {worst:.3e}, "
                       f"non-increasing and last threshold equals the mean gain")


def check_dominance(spec: ExperimentSpec) -> CheckResult:
    params = _base_params(spec)
    names = ["offline_iwf", "cec", "one_shot", "equal_energy"]
    if params.n_users <= min(spec.dp_max_users, 2):
        names.insert(1, "dp_optimal")
    small = replace(spec, policies=tuple(names), n_realizations=min(spec.n_realizations, 200),
                    sweep=None, snr_db=None, params=params, dp=VERIFY_DP, dp_cache=None)
    try:
        result = run_experiment(small)
    except DominanceError as exc:
        return CheckResult("offline_dominance", False, str(exc).splitlines()[0])
    point = result.points[0]
    if point.errors:
        return CheckResult("offline_dominance", False, f"policy errors: {point.errors}")
    return CheckResult("offline_dominance", True,
                       f"offline >= {', '.join(names[1:])} on {small.n_realizations} "
                       f"realizations, all allocations within budget")


def check_cec_matches_offline(spec: ExperimentSpec) -> CheckResult:
    params = _base_params(spec)
    if not all(isinstance(d, Deterministic) for d in params.fading):
        return CheckResult("cec_equals_offline", True, "fading is random, not engaged",
                           skipped=True)
    real = ChannelRealization(np.tile(params.mean_gains, (params.horizon, 1)))
    cec = run_episode(Cec(params, spec.iwf), params, real).energies
    off = iterative_water_fill(params, real, spec.iwf.max_iters,
                               spec.iwf.objective_tol).allocation.energies
    diff = float(np.max(np.abs(cec - off)))
    return CheckResult("cec_equals_offline", diff <= CEC_OFFLINE_TOL,
                       f"max-norm difference {diff:.3e} (limit {CEC_OFFLINE_TOL:g})")


def check_dp_sanity(spec: ExperimentSpec) -> CheckResult:
    p = SystemParams(1, 2, 1e6, 1.0, 1.0, (1.0,), (Deterministic(1.0),))
    table = build_value_tables(p, spec.dp)
    e1 = float(DpPolicy(table).allocate(0, np.array([1.0]), np.array([1.0]))[0])
    step = 1.0 / (spec.dp.energy_grid_points - 1)
    return CheckResult("dp_two_slot_split", abs(e1 - 0.5) <= step,
                       f"first-slot spend {e1:.6f}, expected 0.5 within {step:.4f}")


CHECKS: list[Callable[[ExperimentSpec], CheckResult]] = [
    check_kkt,
    check_iwf_trace,
    check_single_sweep_gap,
    check_thresholds,
    check_dominance,
    check_cec_matches_offline,
    check_dp_sanity,
]


def run_checks(spec: ExperimentSpec) -> list[CheckResult]:
    return [check(spec) for check in CHECKS]
