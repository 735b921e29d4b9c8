"""Channel-gain distributions.

Every distribution samples by inverse CDF from an externally supplied uniform
draw, so randomness stays with the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .model import InvalidArgument

MAX_LAGUERRE_ORDER = 100


class UnsupportedQuadrature(ValueError):
    pass


def _check_draw(u: float) -> float:
    u = float(u)
    if not 0.0 <= u < 1.0:
        raise InvalidArgument(f"uniform draw must lie in [0, 1), got {u}")
    return u


def _check_floor(floor: float) -> float:
    floor = float(floor)
    if not floor >= 0.0:
        raise InvalidArgument(f"floor must be non-negative, got {floor}")
    return floor


class FadingDistribution:
    """Base class for per-user fading descriptors."""

    kind: ClassVar[str]

    @property
    def mean(self) -> float:
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def inverse_cdf(self, u):
        """Vectorised inverse CDF, no range checking."""
        raise NotImplementedError

    def sample(self, uniform_draw: float) -> float:
        return float(self.inverse_cdf(_check_draw(uniform_draw)))

    def expected_max_with(self, floor: float) -> float:
        raise NotImplementedError

    def quadrature_nodes(self, order: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(FadingDistribution):
    """Exponential power gain (Rayleigh amplitude) with rate ``rate``."""

    rate: float = 1.0
    kind: ClassVar[str] = "exponential"

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise InvalidArgument(f"exponential rate must be positive, got {self.rate}")

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    def cdf(self, x):
        return -np.expm1(-self.rate * np.maximum(x, 0.0))

    def inverse_cdf(self, u):
        return -np.log1p(-np.asarray(u, dtype=float)) / self.rate

    def expected_max_with(self, floor: float) -> float:
        floor = _check_floor(floor)
        return floor + math.exp(-self.rate * floor) / self.rate

    def quadrature_nodes(self, order: int):
        # Gauss-Laguerre: exact for polynomials of degree < 2 * order.
        if order > MAX_LAGUERRE_ORDER:
            raise UnsupportedQuadrature(
                f"Gauss-Laguerre order {order} exceeds {MAX_LAGUERRE_ORDER}"
            )
        x, w = np.polynomial.laguerre.laggauss(order)
        return x / self.rate, w / w.sum()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class Deterministic(FadingDistribution):
    """Constant gain."""

    value: float = 1.0
    kind: ClassVar[str] = "deterministic"

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value >= 0):
            raise InvalidArgument(f"deterministic gain must be >= 0, got {self.value}")

    @property
    def mean(self) -> float:
        return self.value

    def cdf(self, x):
        return (np.asarray(x) >= self.value).astype(float)

    def inverse_cdf(self, u):
        return np.full(np.shape(u), self.value)

    def expected_max_with(self, floor: float) -> float:
        return max(self.value, _check_floor(floor))

    def quadrature_nodes(self, order: int):
        return np.array([self.value]), np.array([1.0])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class TabulatedInverseCdf(FadingDistribution):
    """Piecewise-linear inverse CDF through the points ``(u[k], x[k])``.

    ``u`` must run strictly increasing from 0 to 1 and ``x`` must be
    non-decreasing and non-negative.
    """

    u: tuple[float, ...]
    x: tuple[float, ...]
    kind: ClassVar[str] = "tabulated"

    def __post_init__(self):
        u = tuple(float(v) for v in self.u)
        x = tuple(float(v) for v in self.x)
        if len(u) != len(x) or len(u) < 2:
            raise InvalidArgument("tabulated inverse CDF needs >= 2 matching (u, x) pairs")
        du = np.diff(u)
        if u[0] != 0.0 or u[-1] != 1.0 or np.any(du <= 0):
            raise InvalidArgument("u grid must increase strictly from 0 to 1")
        if x[0] < 0 or np.any(np.diff(x) < 0) or not all(map(math.isfinite, x)):
            raise InvalidArgument("x grid must be finite, non-negative and non-decreasing")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "x", x)

    @property
    def mean(self) -> float:
        u, x = np.array(self.u), np.array(self.x)
        return float(np.sum(np.diff(u) * (x[1:] + x[:-1]) / 2))

    def cdf(self, x):
        xs, us = np.array(self.x), np.array(self.u)
        # right-continuous on flat stretches of the inverse
        return np.interp(x, xs, us, left=0.0, right=1.0)

    def inverse_cdf(self, u):
        return np.interp(u, self.u, self.x)

    def expected_max_with(self, floor: float) -> float:
        floor = _check_floor(floor)
        total = 0.0
        for u0, u1, x0, x1 in zip(self.u, self.u[1:], self.x, self.x[1:]):
            width = u1 - u0
            if x0 >= floor:
                total += width * (x0 + x1) / 2
            elif x1 <= floor:
                total += width * floor
            else:
                frac = (floor - x0) / (x1 - x0)
                total += width * frac * floor + width * (1 - frac) * (floor + x1) / 2
        return total

    def quadrature_nodes(self, order: int):
        # equal-weight midpoints of the u-strata
        u = (np.arange(order) + 0.5) / order
        return self.inverse_cdf(u), np.full(order, 1.0 / order)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "u": list(self.u), "x": list(self.x)}


def from_dict(data: dict) -> FadingDistribution:
    kind = data.get("kind")
    if kind == "exponential":
        return Exponential(float(data.get("rate", 1.0)))
    if kind == "deterministic":
        return Deterministic(float(data["value"]))
    if kind == "tabulated":
        return TabulatedInverseCdf(tuple(data["u"]), tuple(data["x"]))
    raise InvalidArgument(f"unknown fading kind {kind!r}")


def sample(dist: FadingDistribution, uniform_draw: float) -> float:
    return dist.sample(uniform_draw)


def mean(dist: FadingDistribution) -> float:
    return dist.mean


def expected_max_with(dist: FadingDistribution, floor: float) -> float:
    """``E[max(H, floor)]``."""
    return dist.expected_max_with(floor)


def quadrature_nodes(dist: FadingDistribution, order: int) -> list[tuple[float, float]]:
    """(gain, weight) pairs approximating expectations under ``dist``.

    Weights are non-negative and sum to one.
    """
    if int(order) != order or order < 1:
        raise InvalidArgument(f"quadrature order must be a positive integer, got {order}")
    nodes, weights = dist.quadrature_nodes(int(order))
    return list(zip(nodes.tolist(), weights.tolist()))
