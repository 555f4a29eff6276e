"""Reduced-space base-case objective.

The free variables are ``x = (p_g, q_g, v, theta without the reference bus, b)``.
Balance and thermal slacks are not variables: they are computed from ``x``
through the mismatch and flow equations and priced by the penalty tiers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acpf import bus_mismatch, flow_partials, line_flows, mismatch_jacobian
from .costs import penalty_value, smoothed_penalty
from .network import Network, OperatingPoint


class VariableLayout:
    """Packing of an operating point into the optimizer's flat vector."""

    def __init__(self, net: Network):
        a = net.arrays
        self.net = net
        self.n, self.ng = a.n_bus, a.n_gen
        self.ref = a.ref
        self.theta_idx = np.array([i for i in range(a.n_bus) if i != a.ref], dtype=int)
        ng, n = self.ng, self.n
        self.s_p = slice(0, ng)
        self.s_q = slice(ng, 2 * ng)
        self.s_v = slice(2 * ng, 2 * ng + n)
        self.s_th = slice(2 * ng + n, 2 * ng + 2 * n - 1)
        self.s_b = slice(2 * ng + 2 * n - 1, 2 * ng + 3 * n - 1)
        self.size = 2 * ng + 3 * n - 1

    def pack(self, pt: OperatingPoint) -> np.ndarray:
        return np.concatenate([pt.p_g, pt.q_g, pt.v, pt.theta[self.theta_idx], pt.b])

    def unpack(self, x) -> OperatingPoint:
        theta = np.zeros(self.n)
        theta[self.theta_idx] = x[self.s_th]
        return OperatingPoint(x[self.s_v], theta, x[self.s_b], x[self.s_p], x[self.s_q])

    def lower(self) -> np.ndarray:
        a = self.net.arrays
        return np.concatenate([a.p_min, a.q_min, a.vmin, np.full(self.n - 1, -np.inf), a.b_min])

    def upper(self) -> np.ndarray:
        a = self.net.arrays
        return np.concatenate([a.p_max, a.q_max, a.vmax, np.full(self.n - 1, np.inf), a.b_max])

    def project(self, pt: OperatingPoint) -> OperatingPoint:
        """Clip every bounded variable onto its box and zero the reference angle."""
        x = np.clip(self.pack(pt), self.lower(), self.upper())
        out = self.unpack(x)
        out.theta[self.theta_idx] = np.asarray(pt.theta, float)[self.theta_idx]
        return out


@dataclass
class BaseTerms:
    cost: float
    imbalance_penalty: float
    overload_penalty: float
    slack_p: np.ndarray
    slack_q: np.ndarray
    sigma_o: np.ndarray
    sigma_d: np.ndarray

    @property
    def penalty(self) -> float:
        return self.imbalance_penalty + self.overload_penalty

    @property
    def total(self) -> float:
        return self.cost + self.penalty


def base_terms(net: Network, pt: OperatingPoint) -> BaseTerms:
    """Exact cost, penalties and recomputed slacks of a base-case point."""
    a = net.arrays
    cost = float(sum(g.cost(p) for g, p in zip(net.generators, pt.p_g)))
    dp, dq = bus_mismatch(net, pt)
    p_o, q_o, p_d, q_d = line_flows(net, pt)
    sigma_o = np.maximum(np.hypot(p_o, q_o) - a.rating * pt.v[a.line_o], 0.0)
    sigma_d = np.maximum(np.hypot(p_d, q_d) - a.rating * pt.v[a.line_d], 0.0)
    pen = net.penalty
    imb = float(np.sum(penalty_value(pen.imbalance, dp)) + np.sum(penalty_value(pen.imbalance, dq)))
    over = float(np.sum(penalty_value(pen.overload, sigma_o)) + np.sum(penalty_value(pen.overload, sigma_d)))
    return BaseTerms(cost, imb, over, dp, dq, sigma_o, sigma_d)


def _thermal_grad(layout, a, pt, w_o, w_d, rating, grad):
    o, d = a.line_o, a.line_d
    p_o, q_o, p_d, q_d = line_flows(layout.net, pt)
    parts = flow_partials(a.g, a.b, a.b_ch, pt.v[o], pt.theta[o], pt.v[d], pt.theta[d])
    g_v = np.zeros(layout.n)
    g_th = np.zeros(layout.n)
    for (p, q, pn, qn, w, end) in ((p_o, q_o, "p_o", "q_o", w_o, o), (p_d, q_d, "p_d", "q_d", w_d, d)):
        s = np.hypot(p, q)
        safe = np.where(s > 0, s, 1.0)
        cp, cq = np.where(s > 0, w * p / safe, 0.0), np.where(s > 0, w * q / safe, 0.0)
        dp, dq = parts[pn], parts[qn]
        np.add.at(g_v, o, cp * dp[0] + cq * dq[0])
        np.add.at(g_v, d, cp * dp[1] + cq * dq[1])
        dth = cp * dp[2] + cq * dq[2]
        np.add.at(g_th, o, dth)
        np.add.at(g_th, d, -dth)
        np.add.at(g_v, end, -w * rating)
    grad[layout.s_v] += g_v
    grad[layout.s_th] += g_th[layout.theta_idx]


def objective_and_gradient(net: Network, layout: VariableLayout, x, mu: float):
    """Value and gradient of the (optionally smoothed) base objective at flat vector ``x``."""
    a = net.arrays
    pt = layout.unpack(x)
    pen = net.penalty
    grad = np.zeros(layout.size)

    value = 0.0
    for j, g in enumerate(net.generators):
        c, dc = g.cost.evaluate(pt.p_g[j], mu)
        value += float(c)
        grad[j] = float(dc)

    dp, dq = bus_mismatch(net, pt)
    vp, wp = smoothed_penalty(pen.imbalance, dp, mu)
    vq, wq = smoothed_penalty(pen.imbalance, dq, mu)
    value += float(np.sum(vp) + np.sum(vq))
    grad[layout.s_p] += wp[a.gen_bus]
    grad[layout.s_q] += wq[a.gen_bus]
    grad[layout.s_b] += wq * pt.v**2
    jt = mismatch_jacobian(net, pt).T @ np.concatenate([wp, wq])
    grad[layout.s_th] += jt[: layout.n][layout.theta_idx]
    grad[layout.s_v] += jt[layout.n :]

    p_o, q_o, p_d, q_d = line_flows(net, pt)
    over_o = np.hypot(p_o, q_o) - a.rating * pt.v[a.line_o]
    over_d = np.hypot(p_d, q_d) - a.rating * pt.v[a.line_d]
    vo, w_o = smoothed_penalty(pen.overload, over_o, mu)
    vd, w_d = smoothed_penalty(pen.overload, over_d, mu)
    value += float(np.sum(vo) + np.sum(vd))
    if a.n_line:
        _thermal_grad(layout, a, pt, w_o, w_d, a.rating, grad)
    return value, grad


def base_objective(net: Network, state: OperatingPoint, mu: float = 0.0):
    """``(value, gradient)`` of cost plus base-case penalties.

    The gradient is over ``VariableLayout(net).pack`` ordering. With ``mu > 0``
    every cost and penalty kink is smoothed over ``+-mu``; with ``mu = 0`` the
    value is exact and the gradient is a subgradient.
    """
    layout = VariableLayout(net)
    return objective_and_gradient(net, layout, layout.pack(state), mu)


def full_objective(net: Network, base: OperatingPoint, contingency_penalties) -> float:
    """Base cost and penalties plus the contingency penalties averaged over all of K."""
    total = base_terms(net, base).total
    pens = list(contingency_penalties)
    if net.contingencies:
        if len(pens) != len(net.contingencies):
            raise ValueError("one penalty per contingency required")
        total += float(np.sum(pens)) / len(net.contingencies)
    return total
