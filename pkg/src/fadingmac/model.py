"""Problem description, sum-throughput reward and energy-queue dynamics.

Slots are indexed from 0 throughout the package; slot ``t`` here is slot
``t + 1`` in the usual 1-based notation.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .fading import FadingDistribution

ENERGY_TOL = 1e-9
"""Absolute tolerance (joules) used for every energy comparison."""


class InvalidArgument(ValueError):
    """Raised on malformed inputs: wrong shapes, negative entries, bad ranges."""


class OverdraftError(ValueError):
    """A user tried to spend more energy than it has left."""

    def __init__(self, user: int, spent: float, available: float):
        self.user = user
        self.spent = spent
        self.available = available
        super().__init__(
            f"user {user} overdraft: spent {spent!r} J with only {available!r} J left"
        )


def _as_vector(values, n: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (n,):
        raise InvalidArgument(f"{name} must have shape ({n},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} has non-finite entries")
    if np.any(arr < 0):
        raise InvalidArgument(f"{name} has negative entries")
    return arr


@dataclass(frozen=True)
class SystemParams:
    """Static description of an N-user, T-slot fading MAC."""

    n_users: int
    horizon: int
    bandwidth_hz: float
    slot_seconds: float
    noise_watts: float
    energy_budgets: tuple[float, ...]
    fading: tuple["FadingDistribution", ...]

    def __post_init__(self):
        if int(self.n_users) != self.n_users or self.n_users < 1:
            raise InvalidArgument(f"n_users must be a positive integer, got {self.n_users}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise InvalidArgument(f"horizon must be a positive integer, got {self.horizon}")
        for name in ("bandwidth_hz", "slot_seconds", "noise_watts"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidArgument(f"{name} must be strictly positive, got {value}")
        budgets = tuple(float(b) for b in self.energy_budgets)
        if len(budgets) != self.n_users:
            raise InvalidArgument("energy_budgets must have n_users entries")
        if any(not math.isfinite(b) or b < 0 for b in budgets):
            raise InvalidArgument("energy budgets must be finite and non-negative")
        fading = tuple(self.fading)
        if len(fading) != self.n_users:
            raise InvalidArgument("fading must have n_users entries")
        object.__setattr__(self, "energy_budgets", budgets)
        object.__setattr__(self, "fading", fading)

    @property
    def noise_energy(self) -> float:
        """tau * N_o, the per-slot noise energy appearing in the rate formula."""
        return self.slot_seconds * self.noise_watts

    @property
    def rate_scale(self) -> float:
        """tau * W."""
        return self.slot_seconds * self.bandwidth_hz

    @property
    def budgets(self) -> np.ndarray:
        return np.array(self.energy_budgets)

    @property
    def mean_gains(self) -> np.ndarray:
        return np.array([d.mean for d in self.fading])

    def with_budgets(self, budgets: Sequence[float]) -> "SystemParams":
        return SystemParams(
            self.n_users, self.horizon, self.bandwidth_hz, self.slot_seconds,
            self.noise_watts, tuple(budgets), self.fading,
        )


@dataclass(frozen=True)
class ChannelRealization:
    """T x N matrix of channel power gains for one episode."""

    gains: np.ndarray

    def __post_init__(self):
        gains = np.array(self.gains, dtype=float)
        if gains.ndim != 2:
            raise InvalidArgument("gains must be a T x N matrix")
        if not np.all(np.isfinite(gains)) or np.any(gains < 0):
            raise InvalidArgument("gains must be finite and non-negative")
        gains.setflags(write=False)
        object.__setattr__(self, "gains", gains)

    @property
    def horizon(self) -> int:
        return self.gains.shape[0]

    @property
    def n_users(self) -> int:
        return self.gains.shape[1]


@dataclass(frozen=True)
class AllocationMatrix:
    """T x N matrix of consumed energies."""

    energies: np.ndarray

    def __post_init__(self):
        energies = np.array(self.energies, dtype=float)
        if energies.ndim != 2:
            raise InvalidArgument("energies must be a T x N matrix")
        if not np.all(np.isfinite(energies)) or np.any(energies < 0):
            raise InvalidArgument("energies must be finite and non-negative")
        energies.setflags(write=False)
        object.__setattr__(self, "energies", energies)

    @property
    def spent(self) -> np.ndarray:
        """Per-user total energy."""
        return self.energies.sum(axis=0)

    def check_budgets(self, budgets, *, exact: bool = False, tol: float = ENERGY_TOL) -> None:
        """Raise if any column sum exceeds (or, with ``exact``, differs from) its budget."""
        budgets = np.asarray(budgets, dtype=float)
        excess = self.spent - budgets
        if np.any(excess > tol):
            i = int(np.argmax(excess))
            raise OverdraftError(i, float(self.spent[i]), float(budgets[i]))
        if exact and np.any(np.abs(excess) > tol):
            i = int(np.argmax(np.abs(excess)))
            raise InvalidArgument(
                f"user {i} spent {self.spent[i]!r} J, budget is {budgets[i]!r} J"
            )


@dataclass(frozen=True)
class EnergyState:
    levels: np.ndarray = field()

    def __post_init__(self):
        levels = np.array(self.levels, dtype=float)
        if levels.ndim != 1 or not np.all(np.isfinite(levels)) or np.any(levels < 0):
            raise InvalidArgument("energy levels must be a finite non-negative vector")
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)


def _sum_rate_arg(params: SystemParams, energies, gains) -> float:
    e = _as_vector(energies, params.n_users, "energies")
    h = _as_vector(gains, params.n_users, "gains")
    return float(h @ e) / params.noise_energy


def sum_throughput(params: SystemParams, energies, gains) -> float:
    """Sum-throughput of one slot in bits, ``tau W log2(1 + sum(h e) / (tau N_o))``."""
    return params.rate_scale * math.log1p(_sum_rate_arg(params, energies, gains)) / math.log(2)


def sum_throughput_nats(params: SystemParams, energies, gains) -> float:
    """Same as :func:`sum_throughput` with the natural logarithm."""
    return params.rate_scale * math.log1p(_sum_rate_arg(params, energies, gains))


def advance_energy(state: EnergyState, spent, tol: float = ENERGY_TOL) -> EnergyState:
    """Subtract this slot's expenditure from the energy queue.

    Overdrafts up to ``tol`` are treated as round-off and clamped; anything
    larger raises :class:`OverdraftError`.
    """
    levels = state.levels
    spent = _as_vector(spent, levels.size, "spent")
    over = spent - levels
    if np.any(over > tol):
        i = int(np.argmax(over))
        raise OverdraftError(i, float(spent[i]), float(levels[i]))
    return EnergyState(np.clip(levels - spent, 0.0, levels))


def slot_rates(params: SystemParams, realization: ChannelRealization,
               alloc: AllocationMatrix) -> np.ndarray:
    """Per-slot sum-throughput in bits."""
    shape = (params.horizon, params.n_users)
    if realization.gains.shape != shape or alloc.energies.shape != shape:
        raise InvalidArgument(
            f"expected {shape} matrices, got gains {realization.gains.shape} "
            f"and energies {alloc.energies.shape}"
        )
    snr = np.einsum("tn,tn->t", realization.gains, alloc.energies) / params.noise_energy
    return params.rate_scale * np.log1p(snr) / math.log(2)


def realized_throughput(params: SystemParams, realization: ChannelRealization,
                        alloc: AllocationMatrix) -> float:
    """Total sum-throughput over the horizon, in bits."""
    total = 0.0
    for rate in slot_rates(params, realization, alloc):
        total += float(rate)
    return total


class CausalPolicy(abc.ABC):
    """Online policy: picks this slot's energies from the current state only.

    Implementations must not look at gains of later slots. They are expected
    to be immutable after construction so one instance can serve many episodes.
    """

    name: str = "causal"

    @abc.abstractmethod
    def allocate(self, t: int, levels: np.ndarray, gains: np.ndarray) -> np.ndarray:
        """Energies to spend in slot ``t`` (0-based) given remaining ``levels``
        and the current gains row. Must satisfy ``0 <= e <= levels``."""


class OfflinePolicy(abc.ABC):
    """Policy that sees the whole realization up front."""

    name: str = "offline"

    @abc.abstractmethod
    def allocate_all(self, realization: ChannelRealization) -> AllocationMatrix:
        ...


def run_episode(policy: CausalPolicy, params: SystemParams,
                realization: ChannelRealization) -> AllocationMatrix:
    """Drive a causal policy slot by slot through the energy queue.

    Each call only receives the gains row of the current slot.
    """
    state = EnergyState(params.budgets)
    rows = np.zeros((params.horizon, params.n_users))
    for t in range(params.horizon):
        e = np.asarray(policy.allocate(t, state.levels, realization.gains[t]), dtype=float)
        if np.any(e < -ENERGY_TOL):
            raise InvalidArgument(f"{policy.name} returned negative energy at slot {t}")
        e = np.maximum(e, 0.0)
        new_state = advance_energy(state, e)
        rows[t] = state.levels - new_state.levels
        state = new_state
    return AllocationMatrix(rows)
