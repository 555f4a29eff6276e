"""Post-contingency response: voltage regulation, droop and frequency deviation.

Given a fixed base operating point, every online generator's active output
follows ``clamp(p0 + A * delta, p_min, p_max)`` and every bus hosting an online
generator holds its base voltage until the units there run out of reactive
capability. ``solve_contingency`` finds that state with a Newton solve on the
extended mismatch system (angles, PQ voltages, delta) and PV/PQ switching;
``smoothed_contingency_penalty`` is the C1 variant used inside the hedged
base-case optimizer.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.linalg import splu

from .acpf import bus_mismatch, line_flows, mismatch_jacobian
from .costs import hinge, penalty_value, smoothed_penalty
from .network import Contingency, Network, OperatingPoint, islands, online_masks

log = logging.getLogger(__name__)

# below this many buses the Newton systems are assembled and factored densely
DENSE_LIMIT = 150


@dataclass
class ContingencyConfig:
    comp_tol: float = 1e-6
    max_switch_rounds: int = 15
    tol: float = 1e-10
    max_iter: int = 30
    max_halvings: int = 10
    delta_guard: float = 10.0
    deadline: Optional[float] = None  # time.monotonic() value


@dataclass(eq=False)
class ContingencyState:
    """Post-contingency variables; ``nu_*`` are per bus, ``rho_*`` per generator."""

    contingency: str
    point: OperatingPoint
    delta: float
    nu_plus: np.ndarray
    nu_minus: np.ndarray
    rho_plus: np.ndarray
    rho_minus: np.ndarray
    slack_p: np.ndarray
    slack_q: np.ndarray
    sigma_o: np.ndarray
    sigma_d: np.ndarray
    converged: bool = True
    fallback: bool = False
    degraded: bool = False
    switch_rounds: int = 0


@dataclass
class ComplementarityReport:
    max_residual: float
    by_family: dict[str, float]
    definition_residual: float
    worst: Optional[tuple[str, int]] = None  # (family, generator id)


def droop_response(p_g0, droop, delta, p_min, p_max):
    """Active output after a frequency deviation ``delta``, saturated at the limits."""
    return np.clip(np.asarray(p_g0, float) + np.asarray(droop, float) * delta, p_min, p_max)


def soft_clamp(x, lo, hi, width: float):
    """C1 approximation of ``clip(x, lo, hi)``; exact outside ``width`` of either limit."""
    h_lo, d_lo = hinge(np.asarray(x) - lo, width)
    h_hi, d_hi = hinge(np.asarray(x) - hi, width)
    return lo + h_lo - h_hi, d_lo - d_hi


class _Topology:
    """Index sets shared by the exact and smoothed solves of one contingency."""

    def __init__(self, net: Network, k: Contingency):
        a = net.arrays
        self.net = net
        self.a = a
        self.k = k
        self.gen_mask, self.line_mask = online_masks(net, k)
        labels = islands(a.n_bus, a.line_o, a.line_d, self.line_mask)
        online_gen_bus = a.gen_bus[self.gen_mask]
        energized_labels = sorted(set(labels[online_gen_bus].tolist()))
        self.energized = np.isin(labels, energized_labels)
        self.regulated = np.zeros(a.n_bus, bool)
        self.regulated[online_gen_bus] = True

        # angle reference of each energized island: the system reference bus
        # when present, otherwise the lowest-index bus of the island
        self.angle_refs = []
        self.main_ref = None
        for lab in energized_labels:
            members = np.flatnonzero(labels == lab)
            ref = a.ref if a.ref in members else int(members[0])
            self.angle_refs.append(ref)
        if self.angle_refs:
            if labels[a.ref] in energized_labels:
                self.main_ref = a.ref
            else:
                self.main_ref = min(self.angle_refs)
        self.main_island = labels == labels[self.main_ref] if self.main_ref is not None else np.zeros(a.n_bus, bool)
        main_units = self.gen_mask & self.main_island[a.gen_bus]
        self.droop_active = bool(np.sum(a.droop[main_units]) > 0)
        self.theta_vars = np.array(
            [i for i in range(a.n_bus) if self.energized[i] and i not in self.angle_refs], dtype=int
        )
        dropped = [r for r in self.angle_refs if r != self.main_ref or not self.droop_active]
        self.p_rows = np.array([i for i in range(a.n_bus) if self.energized[i] and i not in dropped], dtype=int)
        self.units_at = {
            int(i): np.flatnonzero(self.gen_mask & (a.gen_bus == i)) for i in np.flatnonzero(self.regulated)
        }

    def bus_order(self, buses):
        ids = [self.net.buses[i].id for i in buses]
        return [b for _, b in sorted(zip(ids, buses))]


def contingency_topology(net: Network, k: Contingency) -> _Topology:
    """Precomputed index sets for repeated solves of one contingency."""
    return _Topology(net, k)


def _base_start(net: Network, base: OperatingPoint, top: _Topology) -> OperatingPoint:
    pt = base.copy()
    pt.p_g[~top.gen_mask] = 0.0
    pt.q_g[~top.gen_mask] = 0.0
    return pt


def _delta_bracket(a, base, units):
    droop = a.droop[units]
    active = droop > 0
    if not np.any(active):
        return 0.0, 0.0
    lo = (a.p_min[units][active] - base.p_g[units][active]) / droop[active]
    hi = (a.p_max[units][active] - base.p_g[units][active]) / droop[active]
    return float(np.min(lo)), float(np.max(hi))


def _solve_delta(total_mismatch, lo: float, hi: float) -> float:
    """Root of a nondecreasing function on ``[lo, hi]``; clamps to the bracket end when none exists."""
    f_lo, f_hi = total_mismatch(lo), total_mismatch(hi)
    if f_lo >= 0:
        return lo
    if f_hi <= 0:
        return hi
    return float(brentq(total_mismatch, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps))


def _initial_delta(net, base, top, start, region) -> float:
    a = net.arrays
    units = np.flatnonzero(top.gen_mask & region[a.gen_bus])
    lo, hi = _delta_bracket(a, base, units)
    if lo == hi == 0.0:
        return 0.0

    def total(delta):
        pt = start.copy()
        pt.p_g[units] = droop_response(base.p_g[units], a.droop[units], delta, a.p_min[units], a.p_max[units])
        dp, _ = bus_mismatch(net, pt, (top.gen_mask, top.line_mask))
        return float(np.sum(dp[region]))

    return _solve_delta(total, lo, hi)


def _newton(residual, jacobian, x0, tol, max_iter, max_halvings, deadline=None):
    x = np.array(x0, float)
    f = residual(x)
    if not np.all(np.isfinite(f)):
        return x, False
    for _ in range(max_iter):
        if np.max(np.abs(f), initial=0.0) <= tol:
            return x, True
        if deadline is not None and time.monotonic() > deadline:
            return x, False
        try:
            jac = jacobian(x)
            if isinstance(jac, np.ndarray):
                step = np.linalg.solve(jac, -f)
            else:
                step = splu(jac.tocsc()).solve(-f)
        except (RuntimeError, ValueError, np.linalg.LinAlgError):
            return x, False
        if not np.all(np.isfinite(step)):
            return x, False
        norm0 = np.linalg.norm(f)
        alpha = 1.0
        for _ in range(max_halvings + 1):
            x_trial = x + alpha * step
            f_trial = residual(x_trial)
            if np.all(np.isfinite(f_trial)) and np.linalg.norm(f_trial) < norm0:
                break
            alpha *= 0.5
        else:
            # no descent along the Newton direction: stalled
            return x, False
        x, f = x_trial, f_trial
    return x, bool(np.max(np.abs(f), initial=0.0) <= tol)


class _ExactSystem:
    """Extended mismatch system for one PV/PQ assignment."""

    def __init__(self, net, base, top: _Topology, demoted: dict[int, str]):
        a = net.arrays
        self.net, self.base, self.top, self.a = net, base, top, a
        self.demoted = demoted
        self.pv = np.array([i for i in np.flatnonzero(top.regulated) if i not in demoted], dtype=int)
        self.v_vars = np.array(
            [i for i in range(a.n_bus) if top.energized[i] and i not in set(self.pv.tolist())], dtype=int
        )
        self.q_rows = self.v_vars
        self.units = np.flatnonzero(top.gen_mask)
        self.n_th = len(top.theta_vars)
        self.n_v = len(self.v_vars)

    def point(self, x, template):
        a, top = self.a, self.top
        pt = template.copy()
        pt.theta[top.theta_vars] = x[: self.n_th]
        pt.v[self.v_vars] = x[self.n_th : self.n_th + self.n_v]
        pt.v[self.pv] = self.base.v[self.pv]
        delta = x[-1] if top.droop_active else 0.0
        u = self.units
        pt.p_g[u] = droop_response(self.base.p_g[u], a.droop[u], delta, a.p_min[u], a.p_max[u])
        for bus, side in self.demoted.items():
            units = top.units_at[bus]
            pt.q_g[units] = a.q_max[units] if side == "upper" else a.q_min[units]
        return pt, delta

    def x0(self, pt, delta):
        x = np.concatenate([pt.theta[self.top.theta_vars], pt.v[self.v_vars]])
        return np.append(x, delta) if self.top.droop_active else x

    def residual(self, x, template):
        pt, _ = self.point(x, template)
        dp, dq = bus_mismatch(self.net, pt, (self.top.gen_mask, self.top.line_mask))
        return np.concatenate([dp[self.top.p_rows], dq[self.q_rows]])

    def jacobian(self, x, template):
        a, top = self.a, self.top
        pt, delta = self.point(x, template)
        n = a.n_bus
        dense = n <= DENSE_LIMIT
        full = mismatch_jacobian(self.net, pt, top.line_mask, dense=dense)
        rows = np.concatenate([top.p_rows, n + self.q_rows])
        cols = np.concatenate([top.theta_vars, n + self.v_vars])
        jac = full[np.ix_(rows, cols)] if dense else full[rows][:, cols]
        if not top.droop_active:
            return jac
        u = self.units
        raw = self.base.p_g[u] + a.droop[u] * delta
        interior = (raw > a.p_min[u]) & (raw < a.p_max[u])
        dpd = np.bincount(a.gen_bus[u], weights=np.where(interior, a.droop[u], 0.0), minlength=n)
        col = np.concatenate([dpd[top.p_rows], np.zeros(len(self.q_rows))])
        if dense:
            return np.hstack([jac, col[:, None]])
        return sp.hstack([jac, sp.csr_matrix(col[:, None])]).tocsr()


def _reactive_need(net, pt, top, bus):
    """Total reactive output the units at ``bus`` must supply to zero its mismatch."""
    units = top.units_at[bus]
    dp, dq = bus_mismatch(net, pt, (top.gen_mask, top.line_mask))
    return float(np.sum(pt.q_g[units]) - dq[bus])


def _share_reactive(a, units, need):
    lo, hi = a.q_min[units], a.q_max[units]
    span = float(np.sum(hi - lo))
    if span <= 0:
        return lo.copy()
    lam = min(max((need - float(np.sum(lo))) / span, 0.0), 1.0)
    return lo + lam * (hi - lo)


def _finalize(net, base, k, top, pt, delta, **flags) -> ContingencyState:
    a = net.arrays
    pt = pt.copy()
    pt.p_g[~top.gen_mask] = 0.0
    pt.q_g[~top.gen_mask] = 0.0
    pt.v = np.clip(pt.v, a.vmin_e, a.vmax_e)
    pt.theta[a.ref] = 0.0
    dev_v = np.where(top.regulated, pt.v - base.v, 0.0)
    u = top.gen_mask
    dev_p = np.where(u, pt.p_g - (base.p_g + a.droop * delta), 0.0)
    dp, dq = bus_mismatch(net, pt, (top.gen_mask, top.line_mask))
    p_o, q_o, p_d, q_d = line_flows(net, pt, top.line_mask)
    v_o, v_d = pt.v[a.line_o], pt.v[a.line_d]
    sigma_o = np.where(top.line_mask, np.maximum(np.hypot(p_o, q_o) - a.rating_e * v_o, 0.0), 0.0)
    sigma_d = np.where(top.line_mask, np.maximum(np.hypot(p_d, q_d) - a.rating_e * v_d, 0.0), 0.0)
    return ContingencyState(
        contingency=k.id,
        point=pt,
        delta=float(delta),
        nu_plus=np.maximum(dev_v, 0.0),
        nu_minus=np.maximum(-dev_v, 0.0),
        rho_plus=np.maximum(dev_p, 0.0),
        rho_minus=np.maximum(-dev_p, 0.0),
        slack_p=dp,
        slack_q=dq,
        sigma_o=sigma_o,
        sigma_d=sigma_d,
        **flags,
    )


def fallback_state(net: Network, base: OperatingPoint, k: Contingency, top: Optional[_Topology] = None) -> ContingencyState:
    """Base voltages and reactive output, droop response with a bisected ``delta``; residuals go to slacks."""
    top = top or _Topology(net, k)
    a = net.arrays
    start = _base_start(net, base, top)
    everywhere = np.ones(a.n_bus, bool)
    delta = _initial_delta(net, base, top, start, everywhere)
    u = top.gen_mask
    start.p_g[u] = droop_response(base.p_g[u], a.droop[u], delta, a.p_min[u], a.p_max[u])
    start.q_g[u] = np.clip(base.q_g[u], a.q_min[u], a.q_max[u])
    return _finalize(net, base, k, top, start, delta, converged=False, fallback=True, degraded=not np.any(u))


def solve_contingency(
    net: Network, base: OperatingPoint, k: Contingency, cfg: Optional[ContingencyConfig] = None
) -> ContingencyState:
    """Post-contingency state reached from ``base`` by automatic controls only."""
    cfg = cfg or ContingencyConfig()
    top = _Topology(net, k)
    a = net.arrays
    start = _base_start(net, base, top)
    if top.main_ref is None:
        # no online generation anywhere: nothing can respond
        return _finalize(net, base, k, top, start, 0.0, degraded=True)
    delta = _initial_delta(net, base, top, start, top.main_island) if top.droop_active else 0.0
    degraded = bool(np.any(~top.energized & ((a.p_load != 0) | (a.q_load != 0))))

    demoted: dict[int, str] = {}
    locked: set[int] = set()
    seen = {frozenset()}
    pt = start
    rounds = 0
    while True:
        system = _ExactSystem(net, base, top, demoted)
        x, ok = _newton(
            lambda x: system.residual(x, pt),
            lambda x: system.jacobian(x, pt),
            system.x0(pt, delta),
            cfg.tol,
            cfg.max_iter,
            cfg.max_halvings,
            cfg.deadline,
        )
        new_pt, new_delta = system.point(x, pt)
        if not ok or abs(new_delta) > cfg.delta_guard:
            log.debug("contingency %s: Newton failed in round %d, using fallback", k.id, rounds)
            return fallback_state(net, base, k, top)
        pt, delta = new_pt, new_delta
        for bus in system.pv:
            units = top.units_at[int(bus)]
            pt.q_g[units] = _share_reactive(a, units, _reactive_need(net, pt, top, int(bus)))

        switches = _switches(net, base, top, pt, demoted, locked)
        if not switches:
            break
        proposal = dict(demoted)
        for bus, side in switches:
            if side is None:
                proposal.pop(bus)
            else:
                proposal[bus] = side
        key = frozenset(proposal.items())
        if key in seen or rounds >= cfg.max_switch_rounds:
            # cycling: pin the buses involved as PV with clamped output and
            # leave their reactive shortfall to the slack
            locked.update(bus for bus, _ in switches)
            proposal = {b: side for b, side in demoted.items() if b not in locked}
            key = frozenset(proposal.items())
        seen.add(key)
        demoted = proposal
        rounds += 1

    return _finalize(net, base, k, top, pt, delta, degraded=degraded, switch_rounds=rounds)


def _switches(net, base, top, pt, demoted, locked=frozenset()):
    """PV/PQ changes for the next round, in ascending bus id."""
    a = net.arrays
    out = []
    for bus in top.bus_order([int(i) for i in np.flatnonzero(top.regulated)]):
        if bus in locked:
            continue
        units = top.units_at[bus]
        if bus in demoted:
            side = demoted[bus]
            if (side == "upper" and pt.v[bus] > base.v[bus] + 1e-12) or (
                side == "lower" and pt.v[bus] < base.v[bus] - 1e-12
            ):
                out.append((bus, None))
            continue
        if np.sum(a.q_max[units] - a.q_min[units]) <= 0:
            # no reactive range: the bus cannot regulate
            out.append((bus, "upper"))
            continue
        need = _reactive_need(net, pt, top, bus)
        tol = 1e-9 * (1.0 + abs(need))
        if need > np.sum(a.q_max[units]) + tol:
            out.append((bus, "upper"))
        elif need < np.sum(a.q_min[units]) - tol:
            out.append((bus, "lower"))
    return out


def complementarity_residual(net: Network, base: OperatingPoint, k: Contingency, state: ContingencyState) -> ComplementarityReport:
    """Residual of every complementarity pair ``a _|_ b``, measured as ``min(a+, b+)``."""
    a = net.arrays
    gen_mask, _ = online_masks(net, k)
    pt = state.point
    units = np.flatnonzero(gen_mask)
    buses = a.gen_bus[units]

    def pair(x, y):
        return np.minimum(np.maximum(x, 0.0), np.maximum(y, 0.0))

    families = {
        "v_regulator_up": pair(state.nu_minus[buses], a.q_max[units] - pt.q_g[units]),
        "v_regulator_down": pair(state.nu_plus[buses], pt.q_g[units] - a.q_min[units]),
        "droop_up": pair(state.rho_minus[units], a.p_max[units] - pt.p_g[units]),
        "droop_down": pair(state.rho_plus[units], pt.p_g[units] - a.p_min[units]),
    }
    by_family = {name: float(np.max(r, initial=0.0)) for name, r in families.items()}
    worst = None
    best = 0.0
    for name, r in families.items():
        if len(r) and r.max() > best:
            best = float(r.max())
            worst = (name, net.generators[units[int(np.argmax(r))]].id)
    definition = 0.0
    if len(units):
        dv = state.nu_plus[buses] - state.nu_minus[buses] - (pt.v[buses] - base.v[buses])
        dpg = state.rho_plus[units] - state.rho_minus[units] - (
            pt.p_g[units] - (base.p_g[units] + a.droop[units] * state.delta)
        )
        definition = float(max(np.max(np.abs(dv)), np.max(np.abs(dpg))))
    return ComplementarityReport(max(by_family.values(), default=0.0), by_family, definition, worst)


def contingency_penalty(net: Network, state: ContingencyState) -> float:
    """Exact penalty of a post-contingency state (imbalance plus overload)."""
    pen = net.penalty
    return float(
        np.sum(penalty_value(pen.imbalance, state.slack_p))
        + np.sum(penalty_value(pen.imbalance, state.slack_q))
        + np.sum(penalty_value(pen.overload, state.sigma_o))
        + np.sum(penalty_value(pen.overload, state.sigma_d))
    )


# -- smoothed response ---------------------------------------------------------


class _SmoothSystem:
    """Switching-free response: soft clamps replace the droop and regulator limits.

    Each regulating bus gets a parameter ``t``: its units supply
    ``q_min + soft_clamp(t, 0, 1) * (q_max - q_min)`` and its voltage moves
    away from the base value by ``-(t - soft_clamp(t, 0, 1))``, so the voltage
    only deviates once the reactive range is exhausted.
    """

    def __init__(self, net, base, top: _Topology, width: float):
        a = net.arrays
        self.net, self.base, self.top, self.a, self.w = net, base, top, a, width
        reg = []
        for i in np.flatnonzero(top.regulated):
            units = top.units_at[int(i)]
            if np.sum(a.q_max[units] - a.q_min[units]) > 0:
                reg.append(int(i))
        self.reg = np.array(reg, dtype=int)
        regset = set(reg)
        self.v_vars = np.array([i for i in range(a.n_bus) if top.energized[i] and i not in regset], dtype=int)
        self.q_rows = np.array([i for i in range(a.n_bus) if top.energized[i]], dtype=int)
        self.units = np.flatnonzero(top.gen_mask)
        self.n_th, self.n_v, self.n_t = len(top.theta_vars), len(self.v_vars), len(self.reg)
        self.fixed_q = [int(i) for i in np.flatnonzero(top.regulated) if int(i) not in regset]

    def point(self, x, template):
        a, top, w = self.a, self.top, self.w
        pt = template.copy()
        pt.theta[top.theta_vars] = x[: self.n_th]
        pt.v[self.v_vars] = x[self.n_th : self.n_th + self.n_v]
        t = x[self.n_th + self.n_v : self.n_th + self.n_v + self.n_t]
        lam, dlam = soft_clamp(t, 0.0, 1.0, w)
        pt.v[self.reg] = self.base.v[self.reg] - (t - lam)
        for j, bus in enumerate(self.reg):
            units = top.units_at[int(bus)]
            pt.q_g[units] = a.q_min[units] + lam[j] * (a.q_max[units] - a.q_min[units])
        for bus in self.fixed_q:
            pt.q_g[top.units_at[bus]] = a.q_min[top.units_at[bus]]
        delta = x[-1] if top.droop_active else 0.0
        u = self.units
        pt.p_g[u], dp_dd = soft_clamp(self.base.p_g[u] + a.droop[u] * delta, a.p_min[u], a.p_max[u], w)
        return pt, delta, t, dlam, dp_dd

    def x0(self, pt, delta):
        x = np.concatenate([pt.theta[self.top.theta_vars], pt.v[self.v_vars], np.full(self.n_t, 0.5)])
        return np.append(x, delta) if self.top.droop_active else x

    def residual(self, x, template):
        pt = self.point(x, template)[0]
        dp, dq = bus_mismatch(self.net, pt, (self.top.gen_mask, self.top.line_mask))
        return np.concatenate([dp[self.top.p_rows], dq[self.q_rows]])

    def jacobian(self, x, template):
        a, top = self.a, self.top
        pt, delta, t, dlam, dp_dd = self.point(x, template)
        n = a.n_bus
        dense = n <= DENSE_LIMIT
        full = mismatch_jacobian(self.net, pt, top.line_mask, dense=dense)
        if not dense:
            full = full.tocsc()
        rows = np.concatenate([top.p_rows, n + self.q_rows])
        blocks = [full[:, np.concatenate([top.theta_vars, n + self.v_vars])]]
        if self.n_t:
            # dv/dt = -(1 - dlam); dq/dt = span * dlam
            span = np.array([np.sum(a.q_max[top.units_at[int(b)]] - a.q_min[top.units_at[int(b)]]) for b in self.reg])
            q_part = sp.csc_matrix((span * dlam, (n + self.reg, np.arange(self.n_t))), shape=(2 * n, self.n_t))
            if dense:
                blocks.append(full[:, n + self.reg] * -(1.0 - dlam)[None, :] + q_part.toarray())
            else:
                cols_v = full[:, n + self.reg].multiply(-(1.0 - dlam)[None, :])
                blocks.append(sp.csc_matrix(cols_v) + q_part)
        col = None
        if top.droop_active:
            u = self.units
            col = np.bincount(a.gen_bus[u], weights=a.droop[u] * dp_dd, minlength=n)
            col = np.concatenate([col, np.zeros(n)])[:, None]
        if dense:
            return np.hstack(blocks + ([col] if col is not None else []))[rows]
        if col is not None:
            blocks.append(sp.csc_matrix(col))
        return sp.hstack(blocks).tocsr()[rows]


def _smooth_solve(net, base, top, start, width, tol=1e-11, max_iter=40):
    delta = _initial_delta(net, base, top, start, top.main_island) if top.droop_active else 0.0
    system = _SmoothSystem(net, base, top, width)
    x, ok = _newton(
        lambda x: system.residual(x, start),
        lambda x: system.jacobian(x, start),
        system.x0(start, delta),
        tol,
        max_iter,
        10,
    )
    return system, x, ok


def smooth_response_exists(
    net: Network, base: OperatingPoint, k: Contingency, width: float = 1e-3, top: Optional[_Topology] = None
) -> bool:
    """Whether the switching-free smoothed response converges at ``base``.

    It has no slack variables, so it fails whenever the exact response needs
    a locked regulator or a nonzero imbalance to exist.
    """
    top = top or _Topology(net, k)
    if top.main_ref is None:
        return True
    return _smooth_solve(net, base, top, _base_start(net, base, top), width)[2]


def smoothed_contingency_penalty(
    net: Network,
    base: OperatingPoint,
    k: Contingency,
    width: float = 1e-3,
    mu: float = 1e-3,
    tol: float = 1e-11,
    max_iter: int = 40,
    top: Optional[_Topology] = None,
) -> float:
    """Smoothed penalty of the switching-free response; exact penalty when the smooth solve fails.

    ``top`` may carry a topology built earlier for the same network and contingency.
    """
    top = top or _Topology(net, k)
    a = net.arrays
    start = _base_start(net, base, top)
    if top.main_ref is None:
        return contingency_penalty(net, _finalize(net, base, k, top, start, 0.0))
    system, x, ok = _smooth_solve(net, base, top, start, width, tol, max_iter)
    if not ok:
        # no smooth response exists near this base point; price the exact one
        return contingency_penalty(net, solve_contingency(net, base, k))
    pt = system.point(x, start)[0]
    pt.v = np.clip(pt.v, a.vmin_e, a.vmax_e)
    pen = net.penalty
    dp, dq = bus_mismatch(net, pt, (top.gen_mask, top.line_mask))
    p_o, q_o, p_d, q_d = line_flows(net, pt, top.line_mask)
    over_o = np.hypot(p_o, q_o) - a.rating_e * pt.v[a.line_o]
    over_d = np.hypot(p_d, q_d) - a.rating_e * pt.v[a.line_d]
    lm = top.line_mask
    total = (
        np.sum(smoothed_penalty(pen.imbalance, dp, mu)[0])
        + np.sum(smoothed_penalty(pen.imbalance, dq, mu)[0])
        + np.sum(smoothed_penalty(pen.overload, over_o[lm], mu)[0])
        + np.sum(smoothed_penalty(pen.overload, over_d[lm], mu)[0])
    )
    return float(total)
