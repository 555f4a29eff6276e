import sys
import time
from pathlib import Path

import pytest

from scacopf.cases import acceptance_corpus, hedging_case
from scacopf.opf import SolveConfig, solve_base, solve_sc_full

sys.path.insert(0, str(Path(__file__).parent))

# generous enough for every corpus case to reach zero slacks on one CPU
CORPUS_BUDGET = 20.0


@pytest.fixture(scope="session")
def corpus():
    return acceptance_corpus()


@pytest.fixture(scope="session")
def corpus_solves(corpus):
    """``(network, SolveResult, wall seconds)`` for every corpus case."""
    out = []
    for net in corpus:
        t0 = time.monotonic()
        res = solve_sc_full(net, SolveConfig(time_budget=CORPUS_BUDGET))
        out.append((net, res, time.monotonic() - t0))
    return out


@pytest.fixture(scope="session")
def hedging():
    """Unhedged and hedged solutions of the reserve-scarce case."""
    net = hedging_case()
    cfg = SolveConfig(time_budget=120.0)
    return net, solve_base(net, cfg), solve_sc_full(net, cfg)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(rep.user_properties)
            if rep.when != "call" or "criterion" not in props:
                continue
            status = "PASS" if rep.passed else "FAIL"
            lines.append((props["criterion"], f"{status} criterion {props['criterion']}: {props.get('detail', '')}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
