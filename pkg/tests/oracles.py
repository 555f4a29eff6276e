"""Reference computations used only by the tests.

None of these go through the package's flow or Newton code: balances come
from a complex bus admittance matrix, and equations are solved by grid search
followed by bisection or a generic root finder.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import root


def ybus(net, line_mask=None):
    """Dense bus admittance matrix of the pi-model lines (bus shunts excluded)."""
    n = len(net.buses)
    idx = net.bus_index
    y = np.zeros((n, n), complex)
    for e, line in enumerate(net.lines):
        if line_mask is not None and not line_mask[e]:
            continue
        o, d = idx[line.origin], idx[line.destination]
        ys = complex(line.g, line.b)
        ysh = 0.5j * line.b_ch
        y[o, o] += ys + ysh
        y[d, d] += ys + ysh
        y[o, d] -= ys
        y[d, o] -= ys
    return y


def balance(net, v, theta, b, p_g, q_g, gen_mask=None, line_mask=None):
    """Complex generation minus load minus network injection per bus."""
    n = len(net.buses)
    vc = np.asarray(v) * np.exp(1j * np.asarray(theta))
    gen = np.zeros(n, complex)
    for j, g in enumerate(net.generators):
        if gen_mask is None or gen_mask[j]:
            gen[net.bus_index[g.bus]] += complex(p_g[j], q_g[j])
    load = np.array([complex(bus.p_load, bus.q_load) for bus in net.buses])
    shunt = 1j * np.asarray(b) * np.abs(vc) ** 2
    return gen - load + shunt - vc * np.conj(ybus(net, line_mask) @ vc)


def bisect(f, lo, hi, tol=1e-15, iters=200):
    """Plain bisection; ``f(lo)`` and ``f(hi)`` must differ in sign."""
    f_lo = f(lo)
    if f_lo * f(hi) > 0:
        raise ValueError("no sign change")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0 or hi - lo < tol:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def two_bus_lossless(p_load, q_load, b_line=-10.0, v1=1.0):
    """High-voltage solution ``(v2, theta2)`` of a slack bus feeding a PQ load over one lossless line.

    With ``B = -b_line``, bus 2 balance reduces to ``B v1 v2 sin(d) = P`` and
    ``B v1 v2 cos(d) - B v2^2 = Q`` where ``d = theta1 - theta2``; eliminating
    ``d`` leaves one equation in ``v2``, solved by grid search then bisection.
    Returns ``None`` when no real solution exists.
    """
    big_b = -b_line

    def h(v2):
        s = p_load / (big_b * v1 * v2)
        if abs(s) > 1:
            return -math.inf
        return big_b * v1 * v2 * math.sqrt(1 - s * s) - big_b * v2 * v2 - q_load

    grid = np.linspace(1.5, 0.05, 3001)
    vals = [h(v) for v in grid]
    for k in range(len(grid) - 1):
        if vals[k] < 0 <= vals[k + 1] or vals[k] >= 0 > vals[k + 1]:
            if math.isinf(vals[k + 1]):
                continue
            v2 = bisect(h, grid[k + 1], grid[k])
            return v2, -math.asin(p_load / (big_b * v1 * v2))
    return None


def power_flow(net, slack, pv, p_g, q_g=None, b=None, grid_points=7, gen_mask=None, line_mask=None):
    """Solve the bus balances by brute force.

    ``slack`` is a bus index held at ``v = 1`` (or the ``pv`` target if given),
    ``theta = 0``; ``pv`` maps bus index to voltage target. Unknowns are the
    non-slack angles and PQ magnitudes. A coarse grid picks the start closest
    to a root; ``scipy.optimize.root`` refines it. Returns ``(v, theta)`` or
    ``None`` if no root is found.
    """
    n = len(net.buses)
    q_g = np.zeros(len(net.generators)) if q_g is None else q_g
    b = np.zeros(n) if b is None else b
    th_idx = [i for i in range(n) if i != slack]
    pq_idx = [i for i in range(n) if i != slack and i not in pv]
    v_fixed = np.ones(n)
    for i, t in pv.items():
        v_fixed[i] = t

    def unpack(z):
        v = v_fixed.copy()
        th = np.zeros(n)
        th[th_idx] = z[: len(th_idx)]
        v[pq_idx] = z[len(th_idx):]
        return v, th

    def resid(z):
        v, th = unpack(z)
        s = balance(net, v, th, b, p_g, q_g, gen_mask, line_mask)
        return np.concatenate([s.real[th_idx], s.imag[pq_idx]])

    axes = [np.linspace(-1, 1, grid_points)] * len(th_idx) + [np.linspace(0.5, 1.5, grid_points)] * len(pq_idx)
    best, best_val = None, math.inf
    for z in itertools.product(*axes):
        val = np.max(np.abs(resid(np.array(z))))
        if val < best_val:
            best, best_val = np.array(z), val
    sol = root(resid, best, method="hybr", tol=1e-14)
    # hybr can report lack of progress once already at machine precision
    if np.max(np.abs(resid(sol.x))) > 1e-11:
        return None
    return unpack(sol.x)


def zoom_grid_min(f, lo, hi, points=9, rounds=12):
    """Minimize ``f`` over a box by repeated grid search, halving the box around the best point each round."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    box_lo, box_hi = lo.copy(), hi.copy()
    best_val, best = math.inf, None
    for _ in range(rounds):
        axes = [np.linspace(a, b, points) for a, b in zip(lo, hi)]
        for z in itertools.product(*axes):
            val = f(np.array(z))
            if val < best_val:
                best_val, best = val, np.array(z)
        if best is None:
            return math.inf, None
        half = (hi - lo) / 4
        lo = np.maximum(best - half, box_lo)
        hi = np.minimum(best + half, box_hi)
    return best_val, best


def tier_penalty(sigma, tiers):
    """Piecewise-linear charge of a nonnegative violation under ``(width, price)`` tiers."""
    value, lo = 0.0, 0.0
    for width, price in tiers:
        value += price * max(0.0, min(sigma, lo + width) - lo)
        lo += width
    return value


def parallel_pair_sweep(net, points=2001, v=(1.0, 1.0)):
    """Base and full objective of a two-bus, two-identical-line case as the bus 1 output varies.

    Both voltages are held at ``v``. For each bus 1 output the base angle
    follows from the bus 1 balance by bisection and the bus 2 unit covers the
    rest. After losing one line, bus 1 output moves by ``delta`` and bus 2 by
    its droop times ``delta`` (clipped), and the angle solving the bus 2
    balance is found by bisection. Rows are ``(p1, base objective, full
    objective)``; outputs whose reactive or active needs fall outside the unit
    limits are skipped.
    """
    line = net.lines[0]
    y = complex(line.g, line.b)
    y_sh = 0.5j * line.b_ch
    g1, g2 = net.generators
    p_load, q_load = net.buses[1].p_load, net.buses[1].q_load
    tiers = net.penalty.overload.tiers

    def ends(th):
        e1, e2 = complex(v[0]), v[1] * complex(math.cos(th), math.sin(th))
        return e1 * np.conj(y * (e1 - e2) + y_sh * e1), e2 * np.conj(y * (e2 - e1) + y_sh * e2)

    def over(s_o, s_d, rating):
        return tier_penalty(max(0.0, abs(s_o) - rating * v[0]), tiers) + tier_penalty(
            max(0.0, abs(s_d) - rating * v[1]), tiers
        )

    rows = []
    for p1 in np.linspace(g1.p_min, g1.p_max, points):
        try:
            th = bisect(lambda t: 2 * ends(t)[0].real - p1, -1.2, 0.0)
        except ValueError:
            continue
        s_o, s_d = ends(th)
        p2, q1, q2 = p_load + 2 * s_d.real, 2 * s_o.imag, q_load + 2 * s_d.imag
        if not (g2.p_min <= p2 <= g2.p_max and g1.q_min <= q1 <= g1.q_max and g2.q_min <= q2 <= g2.q_max):
            continue
        base = g1.cost(p1) + g2.cost(p2) + 2 * over(s_o, s_d, line.rating)

        def after(t):
            c_o, c_d = ends(t)
            delta = c_o.real - p1
            return min(max(p2 + g2.droop * delta, g2.p_min), g2.p_max) - p_load - c_d.real

        try:
            tk = bisect(after, -1.5, 0.0)
        except ValueError:
            continue
        c_o, c_d = ends(tk)
        if not g1.p_min <= c_o.real <= g1.p_max:
            continue
        rows.append((p1, base, base + over(c_o, c_d, line.rating_e)))
    return np.array(rows)
