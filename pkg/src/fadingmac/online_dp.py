"""Optimal online policy by backward induction on a discretised energy grid.

``Ubar[t](eps)`` is the expected sum-throughput collectable from slot ``t``
(0-based) to the deadline when the users hold energies ``eps`` and have not
yet seen slot ``t``'s gains. It is tabulated on a uniform grid of
``energy_grid_points`` levels per user spanning ``[0, E_i]``.

During the build the spend options at a grid state are exactly the moves to
another grid state, so no interpolation enters the recursion and the table
invariants (monotone in energy, monotone in remaining horizon) hold by
construction. The executing policy starts from arbitrary states after the
first slot and uses multilinear interpolation of the tables.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass
from itertools import product
from pathlib import Path

import numba
import numpy as np

from .model import ENERGY_TOL, CausalPolicy, InvalidArgument, SystemParams

log = logging.getLogger(__name__)

MAX_GRID_CELLS = 10**7
MAX_WORK = 2 * 10**10
TABLE_FORMAT_VERSION = 1


class CapacityError(RuntimeError):
    """The exact DP would not fit the memory/compute budget."""


@dataclass(frozen=True)
class DpConfig:
    energy_grid_points: int = 51
    quadrature_order: int = 16
    inner_opt_points: int = 33

    def __post_init__(self):
        if self.energy_grid_points < 2 or self.inner_opt_points < 2:
            raise InvalidArgument("grid sizes must be >= 2")
        if self.quadrature_order < 1:
            raise InvalidArgument("quadrature_order must be >= 1")


def params_fingerprint(params: SystemParams, config: DpConfig) -> str:
    payload = {
        "n_users": params.n_users,
        "horizon": params.horizon,
        "bandwidth_hz": params.bandwidth_hz,
        "slot_seconds": params.slot_seconds,
        "noise_watts": params.noise_watts,
        "energy_budgets": list(params.energy_budgets),
        "fading": [d.to_dict() for d in params.fading],
        "config": asdict(config),
        "version": TABLE_FORMAT_VERSION,
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _product_quadrature(params: SystemParams, order: int) -> tuple[np.ndarray, np.ndarray]:
    per_user = [d.quadrature_nodes(order) for d in params.fading]
    nodes = np.array(list(product(*[x for x, _ in per_user])), dtype=float)
    weights = np.array([math.prod(w) for w in product(*[w for _, w in per_user])])
    return nodes.reshape(-1, params.n_users), weights


@numba.njit(cache=True, nogil=True)
def _bellman_step(v_next, gains, weights, steps, m, rate_scale, noise, out):
    """One backward step over every grid state of a flattened N-d table."""
    n = steps.size
    s_count = v_next.size
    strides = np.empty(n, dtype=np.int64)
    stride = 1
    for i in range(n - 1, -1, -1):
        strides[i] = stride
        stride *= m
    j = np.empty(n, dtype=np.int64)
    r = np.empty(n, dtype=np.int64)
    rate = np.empty(s_count)
    out[:] = 0.0
    inv_ln2 = 1.0 / np.log(2.0)
    for q in range(gains.shape[0]):
        # reward of spending grid offset a, flattened the same way as the table
        for a in range(s_count):
            snr = 0.0
            rem = a
            for i in range(n):
                k = rem // strides[i]
                rem -= k * strides[i]
                snr += gains[q, i] * k * steps[i]
            rate[a] = rate_scale * np.log1p(snr / noise) * inv_ln2
        for s in range(s_count):
            rem = s
            for i in range(n):
                j[i] = rem // strides[i]
                rem -= j[i] * strides[i]
                r[i] = 0
            best = -np.inf
            sr = 0
            while True:
                v = rate[s - sr] + v_next[sr]
                if v > best:
                    best = v
                i = n - 1
                r[i] += 1
                sr += strides[i]
                while r[i] > j[i]:
                    sr -= r[i] * strides[i]
                    r[i] = 0
                    i -= 1
                    if i < 0:
                        break
                    r[i] += 1
                    sr += strides[i]
                if i < 0:
                    break
            out[s] += weights[q] * best


@numba.njit(cache=True, nogil=True)
def _interp(table, m, steps, point):
    """Multilinear interpolation of a flattened N-d uniform-grid table."""
    n = steps.size
    base = 0
    stride = 1
    lo = np.empty(n, dtype=np.int64)
    frac = np.empty(n)
    for i in range(n - 1, -1, -1):
        pos = point[i] / steps[i] if steps[i] > 0.0 else 0.0
        if pos < 0.0:
            pos = 0.0
        elif pos > m - 1:
            pos = m - 1.0
        k = min(int(np.floor(pos)), m - 2)
        lo[i] = k
        frac[i] = pos - k
        base += k * stride
        stride *= m
    total = 0.0
    for corner in range(1 << n):
        w = 1.0
        off = 0
        stride = 1
        for i in range(n - 1, -1, -1):
            if (corner >> i) & 1:
                w *= frac[i]
                off += stride
            else:
                w *= 1.0 - frac[i]
            stride *= m
        if w != 0.0:
            total += w * table[base + off]
    return total


@numba.njit(cache=True, nogil=True)
def _grid_search(table, m, steps, levels, gains, lo, hi, points, rate_scale, noise, best_e):
    """Exhaustive search of reward + interpolated value-to-go over a product
    grid on the box [lo, hi]. Ties go to the larger total spend."""
    n = levels.size
    idx = np.zeros(n, dtype=np.int64)
    e = np.empty(n)
    rest = np.empty(n)
    inv_ln2 = 1.0 / np.log(2.0)
    best = -np.inf
    best_sum = -1.0
    while True:
        snr = 0.0
        spend = 0.0
        for i in range(n):
            e[i] = lo[i] + (hi[i] - lo[i]) * idx[i] / (points - 1)
            snr += gains[i] * e[i]
            spend += e[i]
            r = levels[i] - e[i]
            rest[i] = r if r > 0.0 else 0.0
        score = rate_scale * np.log1p(snr / noise) * inv_ln2 + _interp(table, m, steps, rest)
        tol = 1e-12 * max(1.0, abs(best)) if best > -np.inf else 0.0
        if score > best + tol or (score >= best - tol and spend > best_sum):
            if score > best:
                best = score
            best_sum = spend
            for i in range(n):
                best_e[i] = e[i]
        i = n - 1
        idx[i] += 1
        while idx[i] == points:
            idx[i] = 0
            i -= 1
            if i < 0:
                break
            idx[i] += 1
        if i < 0:
            break
    return best


@dataclass(frozen=True)
class ValueTable:
    """Expected value-to-go tables; ``values[t]`` is an N-d array (bits),
    ``values[T]`` is identically zero."""

    params: SystemParams
    config: DpConfig
    values: np.ndarray

    @property
    def steps(self) -> np.ndarray:
        return self.params.budgets / (self.config.energy_grid_points - 1)

    @property
    def axes(self) -> list[np.ndarray]:
        m = self.config.energy_grid_points
        return [np.linspace(0.0, e, m) for e in self.params.budgets]

    def value(self, t: int, levels) -> float:
        """Interpolated ``Ubar[t](levels)``."""
        point = np.asarray(levels, dtype=float).reshape(-1)
        return float(_interp(self.values[t].ravel(), self.config.energy_grid_points,
                             self.steps, point))

    def full_budget_value(self) -> float:
        """The DP's own prediction of the expected total throughput."""
        return float(self.values[0][(-1,) * self.params.n_users])

    def check_invariants(self, rtol: float = 1e-9) -> None:
        scale = max(1.0, float(np.max(np.abs(self.values))))
        tol = rtol * scale
        T = self.params.horizon
        for t in range(T + 1):
            v = self.values[t]
            if abs(v[(0,) * v.ndim]) > tol:
                raise AssertionError(f"Ubar[{t}] is not zero at zero energy")
            for axis in range(v.ndim):
                if np.any(np.diff(v, axis=axis) < -tol):
                    raise AssertionError(f"Ubar[{t}] decreases along user {axis}")
            if t < T and np.any(v < self.values[t + 1] - tol):
                raise AssertionError(f"Ubar[{t}] < Ubar[{t + 1}] somewhere")

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            version=TABLE_FORMAT_VERSION,
            fingerprint=params_fingerprint(self.params, self.config),
            values=self.values,
        )

    @classmethod
    def load(cls, path, params: SystemParams, config: DpConfig) -> "ValueTable":
        with np.load(path) as data:
            if int(data["version"]) != TABLE_FORMAT_VERSION:
                raise ValueError(f"{path}: unsupported table version {int(data['version'])}")
            if str(data["fingerprint"]) != params_fingerprint(params, config):
                raise ValueError(f"{path}: table was built for different parameters")
            values = data["values"]
        return cls(params, config, values)


def check_capacity(params: SystemParams, config: DpConfig) -> None:
    m, n, T = config.energy_grid_points, params.n_users, params.horizon
    cells = m**n * T
    if cells > MAX_GRID_CELLS:
        raise CapacityError(
            f"exact DP needs {cells:.3g} grid cells (limit {MAX_GRID_CELLS:.0e}) for "
            f"N={n}; use the cec or one_shot policy instead"
        )
    nodes = math.prod(len(d.quadrature_nodes(config.quadrature_order)[0])
                      for d in params.fading)
    work = T * nodes * (m * (m + 1) // 2) ** n
    if work > MAX_WORK:
        raise CapacityError(
            f"exact DP needs ~{work:.3g} inner evaluations (limit {MAX_WORK:.0e}) for "
            f"N={n}; reduce the grid or use the cec or one_shot policy instead"
        )


def build_value_tables(params: SystemParams, config: DpConfig = DpConfig(),
                       check: bool = True) -> ValueTable:
    """Backward induction from the deadline.

    At the last slot everything left is spent; before that each grid state
    maximises current reward plus next-slot expected value over all spends
    that land on the grid, averaged over product quadrature of the gains.
    """
    check_capacity(params, config)
    m, n, T = config.energy_grid_points, params.n_users, params.horizon
    gains, weights = _product_quadrature(params, config.quadrature_order)
    steps = params.budgets / (m - 1)
    values = np.zeros((T + 1,) + (m,) * n)
    for t in range(T - 1, -1, -1):
        out = np.empty(m**n)
        _bellman_step(values[t + 1].ravel(), gains, weights, steps, m,
                      params.rate_scale, params.noise_energy, out)
        values[t] = out.reshape((m,) * n)
    table = ValueTable(params, config, values)
    if check:
        table.check_invariants()
    return table


def load_or_build(params: SystemParams, config: DpConfig, cache_dir=None) -> ValueTable:
    if cache_dir is None:
        return build_value_tables(params, config)
    path = Path(cache_dir) / f"dp-{params_fingerprint(params, config)}.npz"
    if path.exists():
        return ValueTable.load(path, params, config)
    table = build_value_tables(params, config)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.save(path)
    return table


class DpPolicy(CausalPolicy):
    """Greedy one-step lookahead against the tabulated value-to-go."""

    name = "dp_optimal"

    def __init__(self, table: ValueTable):
        self.table = table
        self.params = table.params
        self.points = table.config.inner_opt_points

    def search(self, t: int, levels, gains) -> tuple[np.ndarray, float]:
        """Best spend vector for slot ``t < T - 1`` and its score in bits."""
        p = self.params
        table = self.table.values[t + 1].ravel()
        m = self.table.config.energy_grid_points
        steps = self.table.steps
        zero = np.zeros_like(levels)
        coarse = np.empty_like(levels)
        score = _grid_search(table, m, steps, levels, gains, zero, levels, self.points,
                             p.rate_scale, p.noise_energy, coarse)
        # one local refinement pass around the incumbent
        width = levels / (self.points - 1)
        fine = np.empty_like(levels)
        fine_score = _grid_search(table, m, steps, levels, gains,
                                  np.maximum(coarse - width, 0.0),
                                  np.minimum(coarse + width, levels), self.points,
                                  p.rate_scale, p.noise_energy, fine)
        if fine_score > score + 1e-12 * max(1.0, abs(score)):
            return fine, fine_score
        return coarse, score

    def allocate(self, t, levels, gains):
        levels = np.array(levels, dtype=float)
        if t >= self.params.horizon - 1:
            return levels
        budgets = self.params.budgets
        if np.any(levels > budgets + ENERGY_TOL):
            log.warning("state %s outside the DP grid, clamping", levels)
        levels = np.minimum(levels, budgets)
        e, _ = self.search(t, levels, np.asarray(gains, dtype=float))
        return np.minimum(e, levels)


def dp_policy(tables: ValueTable, params: SystemParams | None = None,
              config: DpConfig | None = None) -> DpPolicy:
    if params is not None and params != tables.params:
        raise InvalidArgument("value tables were built for different parameters")
    if config is not None and config != tables.config:
        raise InvalidArgument("value tables were built with a different DpConfig")
    return DpPolicy(tables)
