import dataclasses

import numpy as np
import pytest

from oracles import balance
from scacopf.cases import random_network, two_bus
from scacopf.contingency import solve_contingency
from scacopf.costs import CostFunction, penalty_value
from scacopf.evaluator import (
    EvaluationReport,
    evaluate_base,
    evaluate_full,
    score_or_worst_case,
    worst_case_point,
    worst_case_score,
)
from scacopf.opf import SolveConfig, solve_base


@pytest.fixture(scope="module")
def solved():
    net = random_network(21, n_bus=6)
    base = solve_base(net, SolveConfig(time_budget=30))
    states = {k.id: solve_contingency(net, base, k) for k in net.contingencies}
    return net, base, states


def test_solver_output_is_feasible(solved):
    net, base, _ = solved
    rep = evaluate_base(net, base)
    assert rep.feasible and rep.hard_violations == []
    assert rep.base_penalty < 1e-6


def test_slacks_recomputed_from_variables(solved):
    net, base, _ = solved
    rep = evaluate_base(net, base)
    ref = balance(net, base.v, base.theta, base.b, base.p_g, base.q_g)
    assert np.max(np.abs(np.array(rep.slacks["base"]["p_imbalance"]) - ref.real)) < 1e-12
    assert np.max(np.abs(np.array(rep.slacks["base"]["q_imbalance"]) - ref.imag)) < 1e-12


def test_voltage_over_bound(solved):
    net, base, _ = solved
    pt = base.copy()
    pt.v[2] = net.buses[2].vmax + 0.01
    rep = evaluate_base(net, pt)
    assert not rep.feasible
    [viol] = rep.hard_violations
    assert viol.constraint == "voltage" and viol.magnitude == pytest.approx(0.01)


def test_dispatch_perturbation_penalty(solved):
    net, base, _ = solved
    pt = base.copy()
    pt.p_g[0] += 0.1
    rep = evaluate_base(net, pt)
    assert rep.base_penalty == pytest.approx(penalty_value(net.penalty.imbalance, 0.1), rel=1e-6)


def test_full_report_on_benign_case(solved):
    net, base, states = solved
    rep = evaluate_full(net, base, states)
    assert rep.feasible and rep.complete
    assert rep.total == pytest.approx(rep.base_cost, abs=1e-5)
    assert rep.total == rep.base_cost + rep.base_penalty + rep.contingency_penalty_avg


def test_outaged_generator_with_power(solved):
    net, base, states = solved
    k = next(k for k in net.contingencies if k.kind.value == "generator")
    bad = dict(states)
    pt = states[k.id].point.copy()
    pt.p_g[net.gen_index[k.element]] = 0.2
    bad[k.id] = (states[k.id].delta, pt)
    rep = evaluate_full(net, base, bad)
    assert not rep.feasible
    assert any(v.constraint == f"{k.id}:failed_generator" for v in rep.hard_violations)


def test_missing_block_unscored(solved):
    net, base, states = solved
    partial = dict(states)
    dropped = net.contingencies[-1].id
    del partial[dropped]
    rep = evaluate_full(net, base, partial)
    assert rep.unscored == [dropped] and not rep.complete
    assert score_or_worst_case(net, rep) == worst_case_score(net)


def test_complementarity_violation_is_hard(solved):
    net, base, states = solved
    k = next(k for k in net.contingencies if k.kind.value == "line")
    delta, pt = states[k.id].delta, states[k.id].point.copy()
    # sag a regulated voltage while its units keep reactive headroom
    bus = net.arrays.gen_bus[0]
    pt.v[bus] -= 0.01
    rep = evaluate_full(net, base, {**states, k.id: (delta, pt)})
    assert any(v.constraint == f"{k.id}:complementarity" for v in rep.hard_violations)


def test_zero_load_zero_cost_worst_case():
    net = random_network(3, n_bus=4)
    net = dataclasses.replace(
        net,
        buses=tuple(dataclasses.replace(b, p_load=0.0, q_load=0.0) for b in net.buses),
        generators=tuple(
            dataclasses.replace(g, p_max=0.0, cost=CostFunction.linear(0.0)) for g in net.generators
        ),
        lines=tuple(dataclasses.replace(e, b_ch=0.0) for e in net.lines),
    )
    assert worst_case_score(net) == 0.0


def test_two_bus_worst_case_by_hand():
    net = two_bus(p_load=0.5, q_load=0.1)
    # flat point: unit at mid-range 2.5, no flow; bus 1 surplus 2.5, bus 2 short 0.5 and 0.1
    pt = worst_case_point(net)
    assert pt.p_g[0] == 2.5 and pt.q_g[0] == 0.0

    def tier(x):
        return 0.02 * 1e3 + 0.05 * 5e3 + (x - 0.07) * 1e6

    expected = 20 * 2.5 + tier(2.5) + tier(0.5) + tier(0.1)
    assert expected == pytest.approx(2890860.0)
    assert worst_case_score(net) == pytest.approx(expected, rel=1e-12)


def test_prior_point_is_projected():
    net = two_bus()
    prior = net.empty_point()
    prior.v[:] = 2.0
    prior.p_g[:] = -1.0
    net = dataclasses.replace(net, prior=prior)
    pt = worst_case_point(net)
    assert np.all(pt.v == 1.5) and pt.p_g[0] == 0.0


def _report(total, feasible=True):
    return EvaluationReport(total, 0.0, 0.0, total, feasible=feasible)


def test_score_or_worst_case_rules():
    net = two_bus()
    worst = worst_case_score(net)
    assert score_or_worst_case(net, _report(10.0)) == 10.0
    assert score_or_worst_case(net, _report(10.0, feasible=False)) == worst
    assert score_or_worst_case(net, _report(worst * 2)) == worst
    assert score_or_worst_case(net, None) == worst


def test_dimension_mismatch():
    net = two_bus()
    pt = net.empty_point()
    pt.v = np.ones(3)
    with pytest.raises(ValueError):
        evaluate_base(net, pt)
