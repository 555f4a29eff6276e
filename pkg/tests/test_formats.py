import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scacopf.cases import random_network, two_bus
from scacopf.contingency import solve_contingency
from scacopf.formats import (
    ContingencySolution,
    FormatError,
    InstanceSemanticError,
    InstanceSyntaxError,
    parse_contingency_list,
    parse_instance,
    read_base_solution,
    read_contingency_solutions,
    write_base_solution,
    write_contingency_list,
    write_contingency_solutions,
    write_instance,
)
from scacopf.network import OperatingPoint

MINIMAL = {
    "base_mva": 100,
    "ref_bus": 1,
    "buses": [
        {"id": 1, "vmin": 0.9, "vmax": 1.1, "vmin_e": 0.85, "vmax_e": 1.15},
        {"id": 2, "vmin": 0.9, "vmax": 1.1, "vmin_e": 0.85, "vmax_e": 1.15, "p_load_mw": 50, "q_load_mvar": 10},
    ],
    "generators": [
        {"id": 1, "bus": 1, "p_min_mw": 0, "p_max_mw": 200, "q_min_mvar": -100, "q_max_mvar": 100,
         "droop_mw": 100, "cost": [[0, 20]]}
    ],
    "lines": [{"id": 1, "from": 1, "to": 2, "r": 0.01, "x": 0.1, "rating_mva": 150}],
    "contingencies": [{"id": "L1", "kind": "line", "element": 1}],
}


def doc(**changes):
    d = json.loads(json.dumps(MINIMAL))
    d.update(changes)
    return json.dumps(d)


def test_minimal_document():
    net = parse_instance(doc())
    assert (len(net.buses), len(net.generators), len(net.lines)) == (2, 1, 1)
    assert net.buses[1].p_load == pytest.approx(0.5)
    assert net.lines[0].rating == pytest.approx(1.5)
    assert net.generators[0].cost(1.0) == pytest.approx(2000.0)


def test_missing_rating_names_line():
    d = json.loads(doc())
    del d["lines"][0]["rating_mva"]
    with pytest.raises(InstanceSemanticError, match="line 1.*rating"):
        parse_instance(json.dumps(d))


def test_duplicate_bus_id():
    d = json.loads(doc())
    d["buses"][1]["id"] = 1
    with pytest.raises(InstanceSemanticError, match="duplicate id"):
        parse_instance(json.dumps(d))


def test_syntax_error_position():
    with pytest.raises(InstanceSyntaxError) as err:
        parse_instance('{"base_mva": 100,\n  "buses": [,]}')
    assert err.value.line == 2


def test_instance_round_trip():
    net = random_network(9, n_bus=7, with_shunts=True)
    again = parse_instance(write_instance(net))
    for a, b in zip(again.buses, net.buses):
        assert a.id == b.id
        assert (a.p_load, a.q_load, a.b_min, a.b_max, a.vmin) == pytest.approx((b.p_load, b.q_load, b.b_min, b.b_max, b.vmin), rel=1e-14)
    assert again.contingencies == net.contingencies
    for a, b in zip(again.lines, net.lines):
        assert (a.g, a.b, a.rating) == pytest.approx((b.g, b.b, b.rating), rel=1e-12)
    assert write_instance(again) == write_instance(parse_instance(write_instance(again)))


def test_contingency_list_round_trip():
    net = random_network(2, n_bus=5)
    assert parse_contingency_list(write_contingency_list(net.contingencies)) == net.contingencies


finite = st.floats(-10, 10, allow_nan=False)


@st.composite
def points(draw, n_bus, n_gen):
    arr = lambda n: np.array(draw(st.lists(finite, min_size=n, max_size=n)))  # noqa: E731
    theta = arr(n_bus)
    theta[0] = 0.0
    return OperatingPoint(arr(n_bus), theta, arr(n_bus), arr(n_gen), arr(n_gen))


NET = random_network(31, n_bus=5, n_gen=3)


@settings(max_examples=50, deadline=None)
@given(points(5, 3))
def test_base_solution_round_trip(pt):
    back = read_base_solution(NET, write_base_solution(NET, pt))
    assert back.max_abs_diff(pt) == 0.0


@settings(max_examples=20, deadline=None)
@given(points(5, 3), st.floats(-5, 5))
def test_contingency_solution_round_trip(pt, delta):
    states = []
    for k in NET.contingencies:
        p = pt.copy()
        if k.kind.value == "generator":
            p.p_g[NET.gen_index[k.element]] = 0.0
            p.q_g[NET.gen_index[k.element]] = 0.0
        states.append(ContingencySolution(k.id, delta, p))
    text = write_contingency_solutions(NET, states)
    back = read_contingency_solutions(NET, text)
    assert list(back) == [k.id for k in NET.contingencies]
    for s in states:
        assert back[s.label].delta == s.delta
        assert back[s.label].point.max_abs_diff(s.point) == 0.0


def test_serialization_deterministic():
    pt = NET.empty_point()
    pt.v[:] = 1.0 / 3.0
    assert write_base_solution(NET, pt) == write_base_solution(NET, pt.copy())
    assert "\r" not in write_base_solution(NET, pt)


def test_unknown_generator_row():
    head, sep, tail = write_base_solution(NET, NET.empty_point()).rpartition("\n3,")
    text = head + "\n99," + tail
    with pytest.raises(FormatError, match="unknown generator"):
        read_base_solution(NET, text)


def test_missing_bus_row():
    lines = write_base_solution(NET, NET.empty_point()).splitlines()
    del lines[3]
    with pytest.raises(FormatError):
        read_base_solution(NET, "\n".join(lines))


def test_writer_refuses_nonzero_reference_angle():
    pt = NET.empty_point()
    pt.theta[NET.arrays.ref] = 1e-3
    with pytest.raises(FormatError, match="reference"):
        write_base_solution(NET, pt)


def test_missing_contingency_block():
    base = random_network(3, n_bus=4)
    states = [solve_contingency(base, base.empty_point(), k) for k in base.contingencies[:-1]]
    text = write_contingency_solutions(base, states)
    with pytest.raises(FormatError, match="missing contingency"):
        read_contingency_solutions(base, text)
    assert len(read_contingency_solutions(base, text, strict=False)) == len(states)


def test_outaged_generator_must_report_zero():
    k = next(k for k in NET.contingencies if k.kind.value == "generator")
    pt = NET.empty_point()
    pt.p_g[:] = 0.1
    with pytest.raises(FormatError, match="outaged generator"):
        write_contingency_solutions(NET, [ContingencySolution(k.id, 0.0, pt)])


def test_empty_contingency_file_is_valid():
    net = two_bus()
    assert write_contingency_solutions(net, []) == ""
    assert read_contingency_solutions(net, "") == {}
