"""Penalized base-case optimization, contingency screening and hedging.

``solve_base`` runs bounded L-BFGS over the reduced-space objective with a
decreasing smoothing width. ``solve_sc`` wraps it in an outer loop that adds
the worst contingencies to the objective through their smoothed response and
keeps a round only when the exact objective over every contingency improves.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .acpf import BusTypeSpec, mismatch_jacobian, newton_powerflow
from .contingency import (
    ContingencyConfig,
    ContingencyState,
    contingency_penalty,
    contingency_topology,
    fallback_state,
    smooth_response_exists,
    smoothed_contingency_penalty,
    solve_contingency,
)
from .costs import penalty_value, smoothed_penalty  # noqa: F401  (re-exported)
from .network import Contingency, Network, OperatingPoint
from .objective import VariableLayout, base_terms, full_objective, objective_and_gradient

log = logging.getLogger(__name__)


@dataclass
class SolveConfig:
    time_budget: float = 600.0
    smoothing_mu: float = 1e-2
    mu_floor: float = 1e-6
    lbfgs_memory: int = 20
    max_inner_iter: int = 300
    pgtol: float = 1e-10
    k_top: int = 3
    max_rounds: int = 4
    screen_threshold: float = 1e-6
    contingency_width: float = 1e-3
    hedge_mu: float = 1e-3
    hedge_mu_floor: float = 1e-4
    hedge_max_iter: int = 60
    fd_step: float = 1e-6
    workers: int = 1
    contingency: ContingencyConfig = field(default_factory=ContingencyConfig)

    def __post_init__(self):
        for name in ("time_budget", "smoothing_mu", "mu_floor", "pgtol", "fd_step", "hedge_mu", "hedge_mu_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.k_top < 1 or self.workers < 1 or self.lbfgs_memory < 1:
            raise ValueError("k_top, workers and lbfgs_memory must be at least 1")


@dataclass
class SolveResult:
    point: OperatingPoint
    objective: float
    base_objective: float
    trace: list[float] = field(default_factory=list)
    included: list[str] = field(default_factory=list)
    states: list[ContingencyState] = field(default_factory=list)
    timed_out: bool = False


class _Deadline(Exception):
    pass


# -- starting points ------------------------------------------------------------


def flat_point(net: Network) -> OperatingPoint:
    """v = 1, theta = 0, dispatch at mid-bounds, shunts at zero; projected onto the box."""
    a = net.arrays
    pt = OperatingPoint(
        np.ones(a.n_bus), np.zeros(a.n_bus), np.zeros(a.n_bus), 0.5 * (a.p_min + a.p_max), 0.5 * (a.q_min + a.q_max)
    )
    return VariableLayout(net).project(pt)


def proportional_dispatch(net: Network) -> OperatingPoint:
    """Flat voltages with every unit at the same fraction of its active range covering the load."""
    a = net.arrays
    pt = flat_point(net)
    span = float(np.sum(a.p_max - a.p_min))
    frac = (float(np.sum(a.p_load)) - float(np.sum(a.p_min))) / span if span > 0 else 0.0
    pt.p_g = a.p_min + np.clip(frac, 0.0, 1.0) * (a.p_max - a.p_min)
    pt.q_g = np.clip(np.zeros(a.n_gen), a.q_min, a.q_max)
    return pt


def polish(net: Network, pt: OperatingPoint, tol: float = 1e-10) -> OperatingPoint:
    """Power flow holding voltages at generator buses and non-reference dispatch, then box projection."""
    res = newton_powerflow(net, BusTypeSpec.standard(net, pt), pt, tol=tol)
    return VariableLayout(net).project(res.point)


def warm_start(net: Network) -> OperatingPoint:
    start = net.prior if net.prior is not None else proportional_dispatch(net)
    return polish(net, VariableLayout(net).project(start))


# -- optimizer ------------------------------------------------------------------


def _column_scale(net, layout, x) -> np.ndarray:
    """Diagonal scaling from the mismatch Jacobian's column norms at ``x``.

    Angles and voltages couple to every adjacent bus through the line
    admittances while dispatch enters one row with unit weight; scaling by the
    column norms evens out the curvature the penalties induce.
    """
    jac = mismatch_jacobian(net, layout.unpack(x))
    norms = np.sqrt(np.asarray(jac.multiply(jac).sum(axis=0)).ravel())
    scale = np.ones(layout.size)
    scale[layout.s_th] = norms[: layout.n][layout.theta_idx]
    scale[layout.s_v] = norms[layout.n :]
    return np.maximum(scale, 1.0)


def _run_lbfgs(layout, fun, x0, mu_start, mu_floor, cfg, deadline, max_iter):
    """Bounded L-BFGS with mu halved after each stage; returns the last stage's best iterate."""
    x = np.clip(x0, layout.lower(), layout.upper())
    scale = _column_scale(layout.net, layout, x)
    bounds = [
        (None if np.isinf(lo) else lo, None if np.isinf(hi) else hi)
        for lo, hi in zip(layout.lower() * scale, layout.upper() * scale)
    ]
    mu = mu_start
    timed_out = False
    while True:
        best = {"f": np.inf, "x": x}

        def wrapped(z, mu=mu, best=best):
            if deadline is not None and time.monotonic() > deadline:
                raise _Deadline
            f, g = fun(z / scale, mu)
            if f < best["f"]:
                best["f"], best["x"] = f, z / scale
            return f, g / scale

        try:
            res = minimize(
                wrapped,
                x * scale,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxcor": cfg.lbfgs_memory, "maxiter": max_iter, "ftol": 1e-15, "gtol": cfg.pgtol},
            )
            x = res.x / scale if res.fun <= best["f"] else best["x"]
        except _Deadline:
            x = best["x"]
            timed_out = True
            break
        if mu <= mu_floor:
            break
        mu = max(0.5 * mu, mu_floor)
    return np.clip(x, layout.lower(), layout.upper()), timed_out


def _exact_base(net, pt):
    return base_terms(net, pt).total


def _pick(candidates, score):
    """Lowest score wins; earlier candidates win ties."""
    best, best_val = None, np.inf
    for c in candidates:
        val = score(c)
        if val < best_val:
            best, best_val = c, val
    return best, best_val


def _solve_base(net: Network, cfg: SolveConfig, deadline: Optional[float]):
    layout = VariableLayout(net)
    candidates = [flat_point(net)]
    try:
        candidates.append(warm_start(net))
    except Exception:  # a failed warm start leaves the flat point
        log.warning("warm start failed", exc_info=True)
    start, _ = _pick(candidates, lambda p: _exact_base(net, p))
    x, timed_out = _run_lbfgs(
        layout,
        lambda z, mu: objective_and_gradient(net, layout, z, mu),
        layout.pack(start),
        cfg.smoothing_mu,
        cfg.mu_floor,
        cfg,
        deadline,
        cfg.max_inner_iter,
    )
    opt = layout.unpack(x)
    candidates.append(opt)
    try:
        candidates.append(polish(net, opt))
    except Exception:
        log.warning("polish failed", exc_info=True)
    best, val = _pick(candidates, lambda p: _exact_base(net, p))
    return best, val, timed_out


def solve_base(net: Network, cfg: Optional[SolveConfig] = None, deadline: Optional[float] = None) -> OperatingPoint:
    """Box-feasible base-case point minimizing cost plus base penalties (contingencies ignored)."""
    cfg = cfg or SolveConfig()
    if deadline is None:
        deadline = time.monotonic() + cfg.time_budget
    return _solve_base(net, cfg, deadline)[0]


# -- contingencies --------------------------------------------------------------


def _solve_one(args):
    net, base, k, ccfg, limit = args
    if limit is not None:
        ccfg = ContingencyConfig(**{**ccfg.__dict__, "deadline": time.monotonic() + limit})
    try:
        return solve_contingency(net, base, k, ccfg)
    except Exception:
        log.warning("contingency %s failed; using fallback", k.id, exc_info=True)
        return fallback_state(net, base, k)


def solve_all_contingencies(
    net: Network,
    base: OperatingPoint,
    ks: Optional[Sequence[Contingency]] = None,
    workers: int = 1,
    cfg: Optional[ContingencyConfig] = None,
    per_contingency_limit: Optional[float] = None,
) -> list[ContingencyState]:
    """Exact post-contingency states in the order of ``ks`` (all of K by default)."""
    ks = list(net.contingencies if ks is None else ks)
    cfg = cfg or ContingencyConfig()
    tasks = [(net, base, k, cfg, per_contingency_limit) for k in ks]
    if workers <= 1 or len(tasks) <= 1:
        return [_solve_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_solve_one, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _rank(net, states, floor: float = 0.0) -> list[tuple[Contingency, float]]:
    scored = []
    for s in states:
        pen = contingency_penalty(net, s)
        # Newton residuals leave penalties of order 1e-8; treat them as zero
        scored.append((net.contingency(s.contingency), pen if pen > floor else 0.0))
    return sorted(scored, key=lambda kp: (-kp[1], kp[0].id))


def screen_contingencies(net: Network, base: OperatingPoint, cfg: Optional[SolveConfig] = None):
    """Every contingency with its exact penalty, worst first; ties broken by id.

    Penalties at or below ``cfg.screen_threshold`` are reported as zero.
    """
    cfg = cfg or SolveConfig()
    states = solve_all_contingencies(net, base, workers=cfg.workers, cfg=cfg.contingency)
    return _rank(net, states, cfg.screen_threshold)


def _full(net, base, cfg):
    states = solve_all_contingencies(net, base, workers=cfg.workers, cfg=cfg.contingency)
    return full_objective(net, base, [contingency_penalty(net, s) for s in states]), states


def _hedge_term(net, layout, included, cfg) -> Callable:
    """Smoothed contingency penalties of ``included`` with finite-difference gradients over coupling variables."""
    a = net.arrays
    weight = 1.0 / len(net.contingencies)
    gen_buses = np.unique(a.gen_bus)
    coupling = [layout.s_p.start + j for j in range(a.n_gen)] + [layout.s_v.start + int(i) for i in gen_buses]

    tops = [(k, contingency_topology(net, k)) for k in included]

    def value(x, mu):
        pt = layout.unpack(x)
        return weight * sum(
            smoothed_contingency_penalty(net, pt, k, width=cfg.contingency_width, mu=mu, top=top) for k, top in tops
        )

    def fun(x, mu):
        f = value(x, mu)
        grad = np.zeros_like(x)
        h = cfg.fd_step
        for idx in coupling:
            e = np.zeros_like(x)
            e[idx] = h
            grad[idx] = (value(x + e, mu) - value(x - e, mu)) / (2 * h)
        return f, grad

    return fun


def solve_sc_full(net: Network, cfg: Optional[SolveConfig] = None) -> SolveResult:
    """Base solve followed by screening rounds; see :func:`solve_sc`."""
    cfg = cfg or SolveConfig()
    t0 = time.monotonic()
    stop = t0 + 0.8 * cfg.time_budget
    layout = VariableLayout(net)
    base, base_val, timed_out = _solve_base(net, cfg, stop)
    if not net.contingencies:
        return SolveResult(base, base_val, base_val, [base_val], timed_out=timed_out)
    total, states = _full(net, base, cfg)
    trace = [total]
    included: list[Contingency] = []
    skipped: set[str] = set()
    for _ in range(cfg.max_rounds):
        if timed_out or time.monotonic() > stop:
            break
        offenders = [k for k, p in _rank(net, states) if p > cfg.screen_threshold and k not in included]
        if not offenders:
            break
        picked = offenders[: cfg.k_top]
        included += picked
        for k in picked:
            if not smooth_response_exists(net, base, k, cfg.contingency_width):
                log.info("contingency %s has no smooth response; left out of the hedge", k.id)
                skipped.add(k.id)
        hedged = [k for k in included if k.id not in skipped]
        if not hedged:
            trace.append(total)
            continue
        base_fun = lambda z, mu: objective_and_gradient(net, layout, z, mu)  # noqa: E731
        hedge = _hedge_term(net, layout, hedged, cfg)

        def fun(z, mu):
            f0, g0 = base_fun(z, mu)
            f1, g1 = hedge(z, mu)
            return f0 + f1, g0 + g1

        x, timed_out = _run_lbfgs(
            layout, fun, layout.pack(base), cfg.hedge_mu, cfg.hedge_mu_floor, cfg, stop, cfg.hedge_max_iter
        )
        cand = layout.unpack(x)
        pool = [cand]
        try:
            pool.append(polish(net, cand))
        except Exception:
            log.warning("polish failed", exc_info=True)
        for p in pool:
            val, st = _full(net, p, cfg)
            if val < total:
                base, total, states = p, val, st
        trace.append(total)
    return SolveResult(
        point=base,
        objective=total,
        base_objective=base_terms(net, base).total,
        trace=trace,
        included=[k.id for k in included],
        states=states,
        timed_out=timed_out,
    )


def solve_sc(net: Network, cfg: Optional[SolveConfig] = None) -> OperatingPoint:
    """Base-case point hedged against the contingencies that screening flags.

    Each round adds the ``k_top`` worst remaining contingencies to the objective
    through their smoothed response and re-optimizes from the current point. A
    round is kept only if the exact objective over all of K decreases, so the
    recorded trace is nonincreasing.
    """
    return solve_sc_full(net, cfg).point
