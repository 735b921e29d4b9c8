"""Low-complexity causal policies: equal energy, one-shot thresholds and the
certainty-equivalent controller (CEC)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CausalPolicy, SystemParams
from .offline import InfeasibleError, IwfConfig, _iwf_kernel


class EqualEnergy(CausalPolicy):
    """Spend ``E_i / T`` every slot, whatever the channel does."""

    name = "equal_energy"

    def __init__(self, params: SystemParams):
        self.params = params
        self.per_slot = params.budgets / params.horizon

    def allocate(self, t, levels, gains):
        return np.minimum(self.per_slot, levels)


@dataclass(frozen=True)
class OneShotThresholds:
    """``nu[i, k]`` holds the threshold of user ``i`` for 1-based slot ``k + 1``;
    the last column is the zero threshold past the deadline."""

    nu: np.ndarray

    def for_slot(self, t: int) -> np.ndarray:
        """Thresholds a gain in 0-based slot ``t`` has to beat."""
        return self.nu[:, t + 1]


def one_shot_thresholds(params: SystemParams) -> OneShotThresholds:
    """Backward recursion ``nu_{t-1} = E[max(h, nu_t)]`` from ``nu_{T+1} = 0``.

    The first step gives ``nu_T = E[h]``, the mean gain.
    """
    T = params.horizon
    nu = np.zeros((params.n_users, T + 1))
    for i, dist in enumerate(params.fading):
        for k in range(T - 1, -1, -1):
            nu[i, k] = dist.expected_max_with(nu[i, k + 1])
    nu.setflags(write=False)
    return OneShotThresholds(nu)


class OneShot(CausalPolicy):
    """Each user dumps everything it has into the first slot whose gain
    strictly beats that slot's threshold."""

    name = "one_shot"

    def __init__(self, thresholds: OneShotThresholds, params: SystemParams):
        if thresholds.nu.shape != (params.n_users, params.horizon + 1):
            raise ValueError("thresholds do not match the system parameters")
        self.thresholds = thresholds
        self.params = params

    def allocate(self, t, levels, gains):
        fire = np.asarray(gains) > self.thresholds.for_slot(t)
        return np.where(fire, levels, 0.0)


def one_shot_policy(thresholds: OneShotThresholds, params: SystemParams) -> OneShot:
    return OneShot(thresholds, params)


class Cec(CausalPolicy):
    """Certainty-equivalent control.

    Every slot it pretends the remaining slots will see the mean gains, solves
    that deterministic problem with iterative water-filling over the current
    budgets, and keeps only the first slot of the plan.
    """

    name = "cec"

    def __init__(self, params: SystemParams, iwf: IwfConfig = IwfConfig()):
        self.params = params
        self.iwf = iwf
        self.mean_gains = params.mean_gains

    def plan(self, t: int, levels, gains) -> np.ndarray:
        """The full plan for slots ``t..T-1``."""
        p = self.params
        rows = np.empty((p.horizon - t, p.n_users))
        rows[0] = gains
        rows[1:] = self.mean_gains
        alloc = np.zeros_like(rows)
        trace = np.zeros(self.iwf.max_iters)
        iters, _ = _iwf_kernel(rows, np.asarray(levels, dtype=float), p.noise_energy,
                               self.iwf.max_iters, self.iwf.objective_tol, alloc, trace)
        if iters < 0:
            raise InfeasibleError(f"user {-iters - 1} has energy but no usable slot left")
        return alloc

    def allocate(self, t, levels, gains):
        if t >= self.params.horizon - 1:
            return np.array(levels, dtype=float)
        return np.minimum(self.plan(t, levels, gains)[0], levels)


def equal_energy_policy(params: SystemParams) -> EqualEnergy:
    return EqualEnergy(params)


def cec_policy(params: SystemParams, iwf_config: IwfConfig = IwfConfig()) -> Cec:
    return Cec(params, iwf_config)
