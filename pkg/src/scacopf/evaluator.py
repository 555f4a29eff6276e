"""Independent solution checker.

Slacks are always recomputed from the submitted ``(v, theta, b, p, q)`` and
``delta``; nothing the solver reports about its own violations is trusted.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional

import numpy as np

from .acpf import bus_mismatch, line_flows
from .costs import penalty_value
from .network import Network, OperatingPoint, online_masks

HARD_TOL = 1e-6
COMP_TOL = 1e-4


@dataclass
class Violation:
    constraint: str
    element: str
    magnitude: float


@dataclass
class EvaluationReport:
    base_cost: float
    base_penalty: float
    contingency_penalty_avg: float
    total: float
    hard_violations: list[Violation] = field(default_factory=list)
    feasible: bool = True
    contingency_penalties: dict[str, float] = field(default_factory=dict)
    unscored: list[str] = field(default_factory=list)
    slacks: dict[str, dict] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.unscored

    def to_dict(self) -> dict:
        out = asdict(self)
        out["complete"] = self.complete
        return out

    def summary(self) -> str:
        lines = [
            f"total            {self.total:.6f}",
            f"  base cost      {self.base_cost:.6f}",
            f"  base penalty   {self.base_penalty:.6f}",
            f"  contingencies  {self.contingency_penalty_avg:.6f} (average over {len(self.contingency_penalties) + len(self.unscored)})",
            f"feasible         {self.feasible}",
        ]
        if self.unscored:
            lines.append(f"unscored         {', '.join(self.unscored)}")
        for v in self.hard_violations[:20]:
            lines.append(f"  violation {v.constraint} at {v.element}: {v.magnitude:.3e}")
        if len(self.hard_violations) > 20:
            lines.append(f"  ... {len(self.hard_violations) - 20} more")
        return "\n".join(lines)


def _check_dims(net: Network, pt: OperatingPoint, what: str):
    n, ng = len(net.buses), len(net.generators)
    if any(np.shape(x) != (n,) for x in (pt.v, pt.theta, pt.b)) or any(np.shape(x) != (ng,) for x in (pt.p_g, pt.q_g)):
        raise ValueError(f"{what}: operating point is not dimensioned to the network")


def _box(out, name, ids, x, lo, hi, tol, prefix):
    over = np.maximum(x - hi, 0.0)
    under = np.maximum(lo - x, 0.0)
    for i in np.flatnonzero((over > tol) | (under > tol)):
        out.append(Violation(name, f"{prefix} {ids[i]}", float(max(over[i], under[i]))))


def _penalties(net, pt, gen_mask, line_mask, rating):
    a = net.arrays
    dp, dq = bus_mismatch(net, pt, (gen_mask, line_mask))
    p_o, q_o, p_d, q_d = line_flows(net, pt, line_mask)
    sig_o = np.where(line_mask, np.maximum(np.hypot(p_o, q_o) - rating * pt.v[a.line_o], 0.0), 0.0)
    sig_d = np.where(line_mask, np.maximum(np.hypot(p_d, q_d) - rating * pt.v[a.line_d], 0.0), 0.0)
    pen = net.penalty
    total = float(
        np.sum(penalty_value(pen.imbalance, dp))
        + np.sum(penalty_value(pen.imbalance, dq))
        + np.sum(penalty_value(pen.overload, sig_o))
        + np.sum(penalty_value(pen.overload, sig_d))
    )
    tables = {"p_imbalance": dp.tolist(), "q_imbalance": dq.tolist(), "overload_o": sig_o.tolist(), "overload_d": sig_d.tolist()}
    return total, tables


def _base_checks(net: Network, pt: OperatingPoint, tol: float) -> list[Violation]:
    a = net.arrays
    bus_ids = [b.id for b in net.buses]
    gen_ids = [g.id for g in net.generators]
    out: list[Violation] = []
    _box(out, "voltage", bus_ids, pt.v, a.vmin, a.vmax, tol, "bus")
    _box(out, "shunt", bus_ids, pt.b, a.b_min, a.b_max, tol, "bus")
    _box(out, "p_gen", gen_ids, pt.p_g, a.p_min, a.p_max, tol, "generator")
    _box(out, "q_gen", gen_ids, pt.q_g, a.q_min, a.q_max, tol, "generator")
    if abs(pt.theta[a.ref]) > tol:
        out.append(Violation("reference_angle", f"bus {net.ref_bus}", float(abs(pt.theta[a.ref]))))
    return out


def evaluate_base(net: Network, base: OperatingPoint, tol: float = HARD_TOL) -> EvaluationReport:
    """Base-case cost, penalties and hard-constraint violations (contingency terms left at zero)."""
    _check_dims(net, base, "base")
    a = net.arrays
    cost = float(sum(float(g.cost(p)) for g, p in zip(net.generators, base.p_g)))
    ones_g, ones_l = online_masks(net, None)
    pen, tables = _penalties(net, base, ones_g, ones_l, a.rating)
    viol = _base_checks(net, base, tol)
    return EvaluationReport(
        base_cost=cost,
        base_penalty=pen,
        contingency_penalty_avg=0.0,
        total=cost + pen,
        hard_violations=viol,
        feasible=not viol,
        slacks={"base": tables},
    )


def _complementarity(net, base, pt, delta, gen_mask):
    """Largest ``min(a+, b+)`` over the regulator and droop pairs, with minimal splits of the deviations."""
    a = net.arrays
    units = np.flatnonzero(gen_mask)
    if len(units) == 0:
        return 0.0
    buses = a.gen_bus[units]
    dev_v = pt.v[buses] - base.v[buses]
    nu_p, nu_m = np.maximum(dev_v, 0.0), np.maximum(-dev_v, 0.0)
    dev_p = pt.p_g[units] - (base.p_g[units] + a.droop[units] * delta)
    rho_p, rho_m = np.maximum(dev_p, 0.0), np.maximum(-dev_p, 0.0)

    def pair(x, y):
        return np.minimum(np.maximum(x, 0.0), np.maximum(y, 0.0))

    res = [
        pair(nu_m, a.q_max[units] - pt.q_g[units]),
        pair(nu_p, pt.q_g[units] - a.q_min[units]),
        pair(rho_m, a.p_max[units] - pt.p_g[units]),
        pair(rho_p, pt.p_g[units] - a.p_min[units]),
    ]
    return float(max(np.max(r) for r in res))


def _contingency_checks(net, base, k, pt, delta, tol, tol_comp):
    a = net.arrays
    gen_mask, line_mask = online_masks(net, k)
    bus_ids = [b.id for b in net.buses]
    gen_ids = [g.id for g in net.generators]
    tag = f"{k.id}:"
    out: list[Violation] = []
    _box(out, f"{tag}voltage_emergency", bus_ids, pt.v, a.vmin_e, a.vmax_e, tol, "bus")
    _box(out, f"{tag}shunt", bus_ids, pt.b, a.b_min, a.b_max, tol, "bus")
    on = np.flatnonzero(gen_mask)
    _box(out, f"{tag}p_gen", [gen_ids[j] for j in on], pt.p_g[on], a.p_min[on], a.p_max[on], tol, "generator")
    _box(out, f"{tag}q_gen", [gen_ids[j] for j in on], pt.q_g[on], a.q_min[on], a.q_max[on], tol, "generator")
    for j in np.flatnonzero(~gen_mask):
        mag = float(max(abs(pt.p_g[j]), abs(pt.q_g[j])))
        if mag > tol:
            out.append(Violation(f"{tag}failed_generator", f"generator {gen_ids[j]}", mag))
    if abs(pt.theta[a.ref]) > tol:
        out.append(Violation(f"{tag}reference_angle", f"bus {net.ref_bus}", float(abs(pt.theta[a.ref]))))
    if not math.isfinite(delta):
        out.append(Violation(f"{tag}delta", "system", math.inf))
        return out, gen_mask, line_mask
    comp = _complementarity(net, base, pt, delta, gen_mask)
    if comp > tol_comp:
        out.append(Violation(f"{tag}complementarity", "controls", comp))
    return out, gen_mask, line_mask


def _unpack(sol):
    """Accept ``(delta, point)`` pairs or objects with ``delta`` and ``point``."""
    if isinstance(sol, tuple):
        return float(sol[0]), sol[1]
    return float(sol.delta), sol.point


def evaluate_full(
    net: Network,
    base: OperatingPoint,
    cont_states: Mapping[str, object],
    tol: float = HARD_TOL,
    tol_comp: float = COMP_TOL,
) -> EvaluationReport:
    """Full objective: base terms plus contingency penalties summed and divided by ``|K|``.

    ``cont_states`` maps contingency label to a state (``delta`` and ``point``).
    Labels absent from it are listed in ``unscored``.
    """
    rep = evaluate_base(net, base, tol)
    a = net.arrays
    total_pen = 0.0
    for k in net.contingencies:
        if k.id not in cont_states:
            rep.unscored.append(k.id)
            continue
        delta, pt = _unpack(cont_states[k.id])
        _check_dims(net, pt, f"contingency {k.id}")
        viol, gen_mask, line_mask = _contingency_checks(net, base, k, pt, delta, tol, tol_comp)
        rep.hard_violations.extend(viol)
        pen, tables = _penalties(net, pt, gen_mask, line_mask, a.rating_e)
        rep.contingency_penalties[k.id] = pen
        rep.slacks[k.id] = tables
        total_pen += pen
    if net.contingencies:
        rep.contingency_penalty_avg = total_pen / len(net.contingencies)
    rep.total = rep.base_cost + rep.base_penalty + rep.contingency_penalty_avg
    rep.feasible = not rep.hard_violations
    return rep


def worst_case_point(net: Network) -> OperatingPoint:
    """The instance's prior operating point (or a flat start) projected onto the variable bounds."""
    a = net.arrays
    if net.prior is not None:
        pt = net.prior.copy()
    else:
        pt = OperatingPoint(
            np.ones(a.n_bus), np.zeros(a.n_bus), np.zeros(a.n_bus), 0.5 * (a.p_min + a.p_max), 0.5 * (a.q_min + a.q_max)
        )
    pt.v = np.clip(pt.v, a.vmin, a.vmax)
    pt.b = np.clip(pt.b, a.b_min, a.b_max)
    pt.p_g = np.clip(pt.p_g, a.p_min, a.p_max)
    pt.q_g = np.clip(pt.q_g, a.q_min, a.q_max)
    pt.theta = pt.theta - pt.theta[a.ref]
    return pt


def worst_case_states(net: Network, base: Optional[OperatingPoint] = None) -> dict[str, tuple[float, OperatingPoint]]:
    """Contingency states of the worst-case solution: base values, delta = 0, outaged units at zero."""
    base = worst_case_point(net) if base is None else base
    out = {}
    for k in net.contingencies:
        gen_mask, _ = online_masks(net, k)
        pt = base.copy()
        pt.p_g[~gen_mask] = 0.0
        pt.q_g[~gen_mask] = 0.0
        out[k.id] = (0.0, pt)
    return out


def worst_case_score(net: Network) -> float:
    base = worst_case_point(net)
    return evaluate_full(net, base, worst_case_states(net, base)).total


def score_or_worst_case(net: Network, report: Optional[EvaluationReport], worst: Optional[float] = None) -> float:
    """The report's total, or the worst-case score when the submission is missing, infeasible, incomplete or worse."""
    worst = worst_case_score(net) if worst is None else worst
    if report is None or not report.feasible or not report.complete or not math.isfinite(report.total):
        return worst
    return min(report.total, worst)
