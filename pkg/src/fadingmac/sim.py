"""Seeded Monte Carlo comparison of allocation policies.

All policies at a sweep point see the same channel realizations. Realization
``k`` is generated from a Philox counter-based stream keyed by ``(seed, k)``,
so it can be reproduced on its own and the order in which realizations are
evaluated never matters.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .model import (
    AllocationMatrix,
    ChannelRealization,
    InvalidArgument,
    SystemParams,
    realized_throughput,
    run_episode,
)
from .offline import IwfConfig, OfflineIwf
from .online_dp import DpConfig, DpPolicy, load_or_build
from .policies import Cec, EqualEnergy, OneShot, one_shot_thresholds

log = logging.getLogger(__name__)

POLICY_NAMES = ("offline_iwf", "dp_optimal", "cec", "one_shot", "equal_energy")
SWEEP_AXES = ("snr_db", "n_users")
DOMINANCE_RTOL = 1e-9
CHUNK = 256


class DominanceError(RuntimeError):
    """A causal policy beat the offline optimum on some realization."""


@dataclass(frozen=True)
class Sweep:
    axis: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise InvalidArgument(f"unknown sweep axis {self.axis!r}")
        values = tuple(self.values)
        if not values or not all(math.isfinite(v) for v in values):
            raise InvalidArgument("sweep values must be finite and non-empty")
        if self.axis == "n_users" and any(int(v) != v or v < 1 for v in values):
            raise InvalidArgument("n_users sweep values must be positive integers")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run. ``snr_db`` (when given) overrides the budgets in
    ``params`` for every point; an ``n_users`` sweep requires it."""

    params: SystemParams
    policies: tuple[str, ...] = POLICY_NAMES
    n_realizations: int = 10_000
    seed: int = 0
    sweep: Sweep | None = None
    snr_db: float | None = None
    iwf: IwfConfig = IwfConfig()
    dp: DpConfig = DpConfig()
    dp_max_users: int = 2
    dp_cache: str | None = None

    def __post_init__(self):
        unknown = [p for p in self.policies if p not in POLICY_NAMES]
        if unknown:
            raise InvalidArgument(f"unknown policies {unknown}")
        if self.n_realizations < 1:
            raise InvalidArgument("n_realizations must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise InvalidArgument("seed must be an unsigned 64-bit integer")
        if self.sweep is not None and self.sweep.axis == "n_users" and self.snr_db is None:
            raise InvalidArgument("an n_users sweep needs snr_db to set the budgets")

    def points(self) -> list[tuple[float | None, SystemParams]]:
        base = self.params
        if self.snr_db is not None:
            base = budgets_for_snr(base, self.snr_db)
        if self.sweep is None:
            return [(None, base)]
        if self.sweep.axis == "snr_db":
            return [(v, budgets_for_snr(base, v)) for v in self.sweep.values]
        out = []
        for v in self.sweep.values:
            n = int(v)
            p = SystemParams(n, base.horizon, base.bandwidth_hz, base.slot_seconds,
                             base.noise_watts, (0.0,) * n, (base.fading[0],) * n)
            out.append((v, budgets_for_snr(p, self.snr_db)))
        return out


@dataclass
class PolicyStats:
    mean_bits: float
    stderr_bits: float
    n_realizations: int
    runtime_s: float


@dataclass
class PointResult:
    sweep_value: float | None
    params: SystemParams
    stats: dict[str, PolicyStats] = field(default_factory=dict)
    errors: dict[str, Exception] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)
    dp_predicted_bits: float | None = None
    samples: dict[str, np.ndarray] | None = None


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    points: list[PointResult]


def budgets_for_snr(params: SystemParams, snr_db: float) -> SystemParams:
    """Budgets giving every user transmit SNR ``E_i h_o / (tau N_o)`` = ``snr_db``."""
    snr = 10.0 ** (snr_db / 10.0)
    means = params.mean_gains
    if np.any(means <= 0):
        raise InvalidArgument("SNR is undefined for a user with zero mean gain")
    return params.with_budgets(tuple(snr * params.noise_energy / means))


def realization(params: SystemParams, seed: int, index: int) -> ChannelRealization:
    """Realization ``index`` of the stream keyed by ``seed``.

    Uniforms are laid out user-major, so user ``i``'s gains do not depend on
    how many users there are.
    """
    bitgen = np.random.Philox(key=(int(index) << 64) | int(seed))
    u = np.random.Generator(bitgen).random((params.n_users, params.horizon))
    gains = np.empty((params.horizon, params.n_users))
    for i, dist in enumerate(params.fading):
        gains[:, i] = dist.inverse_cdf(u[i])
    return ChannelRealization(gains)


def generate_realizations(params: SystemParams, n: int, seed: int,
                          start: int = 0) -> Iterator[ChannelRealization]:
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    for k in range(start, start + n):
        yield realization(params, seed, k)


def build_policies(spec: ExperimentSpec, params: SystemParams):
    """Instantiate the selected policies; failures are reported, not raised."""
    built, errors, skipped = {}, {}, {}
    dp_prediction = None
    for name in spec.policies:
        try:
            if name == "offline_iwf":
                built[name] = OfflineIwf(params, spec.iwf)
            elif name == "dp_optimal":
                if params.n_users > spec.dp_max_users:
                    skipped[name] = f"N={params.n_users} exceeds dp_max_users={spec.dp_max_users}"
                    continue
                table = load_or_build(params, spec.dp, spec.dp_cache)
                dp_prediction = table.full_budget_value()
                built[name] = DpPolicy(table)
            elif name == "cec":
                built[name] = Cec(params, spec.iwf)
            elif name == "one_shot":
                built[name] = OneShot(one_shot_thresholds(params), params)
            elif name == "equal_energy":
                built[name] = EqualEnergy(params)
        except Exception as exc:  # noqa: BLE001 - reported per policy
            log.error("policy %s failed to build: %s", name, exc)
            errors[name] = exc
    return built, errors, skipped, dp_prediction


def _evaluate_chunk(params: SystemParams, seed: int, policies: dict, indices: range):
    names = list(policies)
    values = np.empty((len(indices), len(names)))
    elapsed = np.zeros(len(names))
    for row, k in enumerate(indices):
        real = realization(params, seed, k)
        for col, name in enumerate(names):
            pol = policies[name]
            start = time.perf_counter()
            if name == "offline_iwf":
                alloc = pol.allocate_all(real)
                alloc.check_budgets(params.budgets, exact=True)
            else:
                alloc = run_episode(pol, params, real)
                alloc.check_budgets(params.budgets)
            values[row, col] = realized_throughput(params, real, alloc)
            elapsed[col] += time.perf_counter() - start
        if "offline_iwf" in policies:
            _check_dominance(params, seed, k, names, values[row])
    return values, elapsed


def _check_dominance(params, seed, k, names, row):
    best = row[names.index("offline_iwf")]
    for name, value in zip(names, row):
        if value - best > DOMINANCE_RTOL * max(abs(best), 1e-300):
            real = realization(params, seed, k)
            raise DominanceError(
                f"realization {k} (seed {seed}): {name} got {float(value)!r} bits, "
                f"offline got {float(best)!r}; gains=\n{real.gains!r}"
            )


def evaluate_point(spec: ExperimentSpec, params: SystemParams, policies: dict,
                   threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Per-realization throughput (rows in realization order) and runtimes."""
    n = spec.n_realizations
    chunks = [range(a, min(a + CHUNK, n)) for a in range(0, n, CHUNK)]
    if threads <= 1:
        parts = [_evaluate_chunk(params, spec.seed, policies, c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(
                lambda c: _evaluate_chunk(params, spec.seed, policies, c), chunks))
    values = np.concatenate([v for v, _ in parts], axis=0)
    elapsed = np.sum([e for _, e in parts], axis=0)
    return values, elapsed


def run_experiment(spec: ExperimentSpec, threads: int = 1,
                   keep_samples: bool = False) -> ExperimentResult:
    points = []
    for value, params in spec.points():
        policies, errors, skipped, prediction = build_policies(spec, params)
        point = PointResult(value, params, errors=errors, skipped=skipped,
                            dp_predicted_bits=prediction)
        if policies:
            values, elapsed = evaluate_point(spec, params, policies, threads)
            n = values.shape[0]
            for col, name in enumerate(policies):
                x = values[:, col]
                se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
                point.stats[name] = PolicyStats(float(np.mean(x)), se, n, float(elapsed[col]))
            if keep_samples:
                point.samples = {name: values[:, c].copy() for c, name in enumerate(policies)}
        points.append(point)
    return ExperimentResult(spec, points)
