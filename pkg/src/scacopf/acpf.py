"""Polar-form branch flows, bus mismatches and a Newton power-flow solver."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .network import Line, Network, OperatingPoint

log = logging.getLogger(__name__)


def flows(g, b, b_ch, v_o, th_o, v_d, th_d):
    """Power entering each line at its origin and destination terminals.

    All arguments broadcast. Returns ``(p_o, q_o, p_d, q_d)``.
    """
    delta = th_o - th_d
    c, s = np.cos(delta), np.sin(delta)
    vv = v_o * v_d
    b_sh = b + b_ch / 2.0
    p_o = g * v_o**2 - vv * (g * c + b * s)
    q_o = -b_sh * v_o**2 + vv * (b * c - g * s)
    p_d = g * v_d**2 - vv * (g * c - b * s)
    q_d = -b_sh * v_d**2 + vv * (b * c + g * s)
    return p_o, q_o, p_d, q_d


def flow_partials(g, b, b_ch, v_o, th_o, v_d, th_d):
    """Partials of the four terminal flows.

    Returns a dict keyed by flow name (``p_o`` ...) whose values are tuples
    ``(d/dv_o, d/dv_d, d/dtheta_o)``; the ``theta_d`` partial is the negated
    ``theta_o`` one.
    """
    delta = th_o - th_d
    c, s = np.cos(delta), np.sin(delta)
    vv = v_o * v_d
    b_sh = b + b_ch / 2.0
    gc_bs = g * c + b * s
    bc_gs = b * c - g * s
    gc_mbs = g * c - b * s
    bc_pgs = b * c + g * s
    return {
        "p_o": (2 * g * v_o - v_d * gc_bs, -v_o * gc_bs, vv * (g * s - b * c)),
        "q_o": (-2 * b_sh * v_o + v_d * bc_gs, v_o * bc_gs, -vv * (b * s + g * c)),
        "p_d": (-v_d * gc_mbs, 2 * g * v_d - v_o * gc_mbs, vv * (g * s + b * c)),
        "q_d": (v_d * bc_pgs, -2 * b_sh * v_d + v_o * bc_pgs, vv * (g * c - b * s)),
    }


def branch_flows(line: Line, v_o: float, th_o: float, v_d: float, th_d: float):
    """``(p_o, q_o, p_d, q_d)`` for a single line."""
    return tuple(float(x) for x in flows(line.g, line.b, line.b_ch, v_o, th_o, v_d, th_d))


def _masks(net: Network, online):
    if online is None:
        return np.ones(len(net.generators), bool), np.ones(len(net.lines), bool)
    gen_mask, line_mask = online
    return np.asarray(gen_mask, bool), np.asarray(line_mask, bool)


def line_flows(net: Network, point: OperatingPoint, line_mask=None):
    """Terminal flows of every line; offline lines carry zero."""
    a = net.arrays
    o, d = a.line_o, a.line_d
    out = flows(a.g, a.b, a.b_ch, point.v[o], point.theta[o], point.v[d], point.theta[d])
    if line_mask is not None:
        out = tuple(np.where(line_mask, f, 0.0) for f in out)
    return out


def bus_mismatch(net: Network, point: OperatingPoint, online=None):
    """Active and reactive imbalance per bus (generation minus load minus outflow).

    ``online`` is an optional ``(gen_mask, line_mask)`` pair; offline generators
    inject nothing and offline lines carry nothing.
    """
    a = net.arrays
    gen_mask, line_mask = _masks(net, online)
    p_o, q_o, p_d, q_d = line_flows(net, point, line_mask)
    n = a.n_bus
    dp = np.bincount(a.gen_bus, weights=np.where(gen_mask, point.p_g, 0.0), minlength=n) - a.p_load
    dq = np.bincount(a.gen_bus, weights=np.where(gen_mask, point.q_g, 0.0), minlength=n) - a.q_load
    dq = dq + point.b * point.v**2
    dp = dp - np.bincount(a.line_o, weights=p_o, minlength=n) - np.bincount(a.line_d, weights=p_d, minlength=n)
    dq = dq - np.bincount(a.line_o, weights=q_o, minlength=n) - np.bincount(a.line_d, weights=q_d, minlength=n)
    return dp, dq


def mismatch_jacobian(net: Network, point: OperatingPoint, line_mask=None, dense: bool = False):
    """Jacobian of ``(dP, dQ)`` with respect to ``(theta, v)``, shape ``(2n, 2n)``.

    Generator injections are held fixed; the shunt term ``b v^2`` is included.
    Returns CSR, or a numpy array when ``dense`` (cheaper for small systems).
    """
    a = net.arrays
    n = a.n_bus
    keep = np.ones(a.n_line, bool) if line_mask is None else np.asarray(line_mask, bool)
    o, d = a.line_o[keep], a.line_d[keep]
    parts = flow_partials(a.g[keep], a.b[keep], a.b_ch[keep], point.v[o], point.theta[o], point.v[d], point.theta[d])
    rows, cols, vals = [], [], []

    def add(r, c, x):
        rows.append(r)
        cols.append(c)
        vals.append(x)

    for name, row_bus, row_off in (("p_o", o, 0), ("p_d", d, 0), ("q_o", o, n), ("q_d", d, n)):
        dvo, dvd, dtho = parts[name]
        # outflows enter the mismatch with a minus sign
        add(row_off + row_bus, o, -dtho)
        add(row_off + row_bus, d, dtho)
        add(row_off + row_bus, n + o, -dvo)
        add(row_off + row_bus, n + d, -dvd)
    idx = np.arange(n)
    add(n + idx, n + idx, 2.0 * point.b * point.v)
    if dense:
        out = np.zeros((2 * n, 2 * n))
        np.add.at(out, (np.concatenate(rows), np.concatenate(cols)), np.concatenate(vals))
        return out
    jac = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(2 * n, 2 * n)
    )
    return jac.tocsr()


class BusType(enum.Enum):
    SLACK = "slack"
    PV = "pv"
    PQ = "pq"


@dataclass
class BusTypeSpec:
    """Bus typing for a power-flow solve, keyed by bus index.

    ``pv`` maps bus index to voltage target. The slack bus keeps the voltage
    of the initial point.
    """

    slack: int
    pv: dict[int, float] = field(default_factory=dict)

    def kind(self, i: int) -> BusType:
        if i == self.slack:
            return BusType.SLACK
        return BusType.PV if i in self.pv else BusType.PQ

    @classmethod
    def standard(cls, net: Network, point: OperatingPoint, gen_mask=None) -> "BusTypeSpec":
        """Reference bus as slack, every other bus hosting an online generator PV at its current voltage."""
        a = net.arrays
        mask = np.ones(a.n_gen, bool) if gen_mask is None else np.asarray(gen_mask, bool)
        pv = {int(i): float(point.v[i]) for i in sorted(set(a.gen_bus[mask].tolist())) if i != a.ref}
        return cls(slack=a.ref, pv=pv)


@dataclass
class PowerFlowResult:
    point: OperatingPoint
    converged: bool
    iterations: int
    max_mismatch: float


def newton_powerflow(
    net: Network,
    types: BusTypeSpec,
    init: OperatingPoint,
    online=None,
    tol: float = 1e-8,
    max_iter: int = 30,
    v_floor: float = 0.1,
    max_halvings: int = 10,
) -> PowerFlowResult:
    """Full Newton-Raphson on the polar mismatch equations.

    Unknowns are angles at every non-slack bus and magnitudes at PQ buses.
    After the solve the slack bus generators absorb the residual active and
    reactive power and PV bus generators absorb the residual reactive power,
    shared equally among the online units at each bus.
    """
    gen_mask, line_mask = _masks(net, online)
    a = net.arrays
    n = a.n_bus
    point = init.copy()
    for i, vt in types.pv.items():
        point.v[i] = vt
    non_slack = np.array([i for i in range(n) if i != types.slack], dtype=int)
    pq = np.array([i for i in range(n) if types.kind(i) is BusType.PQ], dtype=int)
    eq_rows = np.concatenate([non_slack, n + pq])
    var_cols = np.concatenate([non_slack, n + pq])

    def residual(pt):
        dp, dq = bus_mismatch(net, pt, (gen_mask, line_mask))
        return np.concatenate([dp, dq])[eq_rows]

    def apply(pt, step):
        new = pt.copy()
        new.theta[non_slack] += step[: len(non_slack)]
        new.v[pq] = np.maximum(new.v[pq] + step[len(non_slack):], v_floor)
        return new

    f = residual(point)
    best, best_norm = point, np.linalg.norm(f)
    iters = 0
    converged = np.max(np.abs(f), initial=0.0) <= tol
    while not converged and iters < max_iter:
        jac = mismatch_jacobian(net, point, line_mask)[eq_rows][:, var_cols].tocsc()
        try:
            step = splu(jac).solve(-f)
        except RuntimeError:
            log.debug("singular power-flow Jacobian at iteration %d", iters)
            break
        if not np.all(np.isfinite(step)):
            break
        iters += 1
        norm0 = np.linalg.norm(f)
        alpha = 1.0
        for _ in range(max_halvings + 1):
            trial = apply(point, alpha * step)
            f_trial = residual(trial)
            if np.all(np.isfinite(f_trial)) and np.linalg.norm(f_trial) < norm0:
                break
            alpha *= 0.5
        if not np.all(np.isfinite(f_trial)):
            break
        point, f = trial, f_trial
        nrm = np.linalg.norm(f)
        if nrm < best_norm:
            best, best_norm = point, nrm
        converged = np.max(np.abs(f), initial=0.0) <= tol
    if not converged:
        point = best
    point = _absorb_residuals(net, point, types, gen_mask, line_mask)
    dp, dq = bus_mismatch(net, point, (gen_mask, line_mask))
    mm = float(np.max(np.abs(np.concatenate([dp, dq])[eq_rows]), initial=0.0))
    return PowerFlowResult(point, bool(converged), iters, mm)


def _absorb_residuals(net, point, types, gen_mask, line_mask):
    a = net.arrays
    dp, dq = bus_mismatch(net, point, (gen_mask, line_mask))
    out = point.copy()
    for i in [types.slack, *sorted(types.pv)]:
        units = np.flatnonzero(gen_mask & (a.gen_bus == i))
        if len(units) == 0:
            continue
        if i == types.slack:
            out.p_g[units] -= dp[i] / len(units)
        out.q_g[units] -= dq[i] / len(units)
    return out
