"""Convex piecewise-linear generator costs and violation penalties.

Both are sums of hinge terms ``max(0, t - kink)``. The smoothed variants replace
each hinge by a quadratic blend on ``[kink - mu, kink + mu]`` so the result is
C1 and coincides with the exact function outside those windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def hinge(t, mu: float = 0.0):
    """Return ``(value, derivative)`` of ``max(0, t)``, smoothed when ``mu > 0``."""
    t = np.asarray(t, dtype=float)
    if mu <= 0:
        return np.maximum(t, 0.0), (t > 0).astype(float)
    inner = (t + mu) ** 2 / (4.0 * mu)
    value = np.where(t <= -mu, 0.0, np.where(t >= mu, t, inner))
    deriv = np.where(t <= -mu, 0.0, np.where(t >= mu, 1.0, (t + mu) / (2.0 * mu)))
    return value, deriv


@dataclass(frozen=True)
class CostFunction:
    """Convex piecewise-linear cost.

    ``breakpoints`` is a sequence of ``(p, marginal_cost)``: from ``p_i`` up to
    ``p_{i+1}`` output costs ``marginal_cost_i`` per unit. The last segment
    extends to infinity and the first one is extrapolated below ``p_0``.
    The cost is zero at ``p_0``.
    """

    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        bp = tuple((float(p), float(c)) for p, c in self.breakpoints)
        if not bp:
            raise ValueError("cost function needs at least one breakpoint")
        object.__setattr__(self, "breakpoints", bp)

    @classmethod
    def linear(cls, marginal_cost: float, p0: float = 0.0) -> "CostFunction":
        return cls(((p0, marginal_cost),))

    def problems(self) -> list[str]:
        out = []
        ps = [p for p, _ in self.breakpoints]
        cs = [c for _, c in self.breakpoints]
        if any(b <= a for a, b in zip(ps, ps[1:])):
            out.append("breakpoints not strictly increasing")
        if any(b < a for a, b in zip(cs, cs[1:])):
            out.append("marginal costs decreasing (nonconvex)")
        return out

    def __call__(self, p, mu: float = 0.0):
        return self.evaluate(p, mu)[0]

    def evaluate(self, p, mu: float = 0.0):
        p = np.asarray(p, dtype=float)
        p0, c0 = self.breakpoints[0]
        value = c0 * (p - p0)
        deriv = np.full_like(p, c0)
        prev = c0
        for pk, ck in self.breakpoints[1:]:
            h, dh = hinge(p - pk, mu)
            value = value + (ck - prev) * h
            deriv = deriv + (ck - prev) * dh
            prev = ck
        return value, deriv


@dataclass(frozen=True)
class PenaltyTiers:
    """Tiered penalty: ``(width, price)`` pairs, last width may be ``inf``.

    A symmetric penalty charges ``|sigma|``; an asymmetric one charges only the
    positive part (a negative overload margin costs nothing).
    """

    tiers: tuple[tuple[float, float], ...]
    symmetric: bool = True

    def __post_init__(self):
        tiers = tuple((float(w), float(c)) for w, c in self.tiers)
        if not tiers:
            raise ValueError("penalty needs at least one tier")
        object.__setattr__(self, "tiers", tiers)

    def problems(self) -> list[str]:
        out = []
        if any(not w > 0 for w, _ in self.tiers):
            out.append("tier widths must be positive")
        prices = [c for _, c in self.tiers]
        if prices[0] < 0:
            out.append("tier prices must be nonnegative")
        if any(b <= a for a, b in zip(prices, prices[1:])):
            out.append("tier prices must be strictly increasing")
        return out

    def _kinks(self):
        """Hinge decomposition of the one-sided penalty: ``[(kink, slope_jump)]``."""
        out = []
        start, prev = 0.0, 0.0
        for width, price in self.tiers:
            out.append((start, price - prev))
            start += width
            prev = price
            if math.isinf(start):
                break
        return out

    @property
    def max_price(self) -> float:
        return max(c for _, c in self.tiers)


def _one_sided(tiers: PenaltyTiers, t, mu):
    value = np.zeros_like(t)
    deriv = np.zeros_like(t)
    for kink, jump in tiers._kinks():
        h, dh = hinge(t - kink, mu)
        value = value + jump * h
        deriv = deriv + jump * dh
    return value, deriv


def smoothed_penalty(tiers: PenaltyTiers, sigma, mu: float):
    """Penalty and its derivative with every kink smoothed over ``+-mu``."""
    s = np.asarray(sigma, dtype=float)
    value, deriv = _one_sided(tiers, s, mu)
    if tiers.symmetric:
        vn, dn = _one_sided(tiers, -s, mu)
        value = value + vn
        deriv = deriv - dn
    return value, deriv


def penalty_value(tiers: PenaltyTiers, sigma):
    """Exact tiered penalty of a violation ``sigma`` (array or scalar)."""
    value, _ = smoothed_penalty(tiers, sigma, 0.0)
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class PenaltySpec:
    imbalance: PenaltyTiers
    overload: PenaltyTiers

    @classmethod
    def default(cls) -> "PenaltySpec":
        return cls(
            imbalance=PenaltyTiers(((0.02, 1e3), (0.05, 5e3), (math.inf, 1e6)), symmetric=True),
            overload=PenaltyTiers(((0.05, 1e3), (math.inf, 5e5)), symmetric=False),
        )

    def problems(self) -> list[str]:
        return [f"imbalance penalty: {p}" for p in self.imbalance.problems()] + [
            f"overload penalty: {p}" for p in self.overload.problems()
        ]
