"""Small synthetic networks for testing and benchmarking.

All builders are deterministic functions of their arguments.
"""

from __future__ import annotations

import numpy as np

from .costs import CostFunction, PenaltySpec
from .network import Bus, Contingency, ContingencyKind, Generator, Line, Network


def line_from_impedance(id, origin, destination, r, x, b_ch=0.0, rating=10.0, rating_e=None) -> Line:
    y = 1.0 / complex(r, x)
    return Line(id, origin, destination, y.real, y.imag, b_ch, rating, rating if rating_e is None else rating_e)


def _bus(id, p_load=0.0, q_load=0.0, vmin=0.9, vmax=1.1, vmin_e=0.85, vmax_e=1.15, b_min=0.0, b_max=0.0):
    return Bus(id, vmin, vmax, vmin_e, vmax_e, p_load, q_load, b_min, b_max)


def two_bus(p_load=0.5, q_load=0.1, b_line=-10.0, g_line=0.0, b_ch=0.0, rating=10.0, marginal_cost=20.0) -> Network:
    """Generator at bus 1 (reference) feeding a load at bus 2 through one line."""
    buses = (_bus(1, vmin=0.5, vmax=1.5, vmin_e=0.5, vmax_e=1.5), _bus(2, p_load, q_load, vmin=0.5, vmax=1.5, vmin_e=0.5, vmax_e=1.5))
    gens = (Generator(1, 1, 0.0, 5.0, -5.0, 5.0, 1.0, CostFunction.linear(marginal_cost)),)
    lines = (Line(1, 1, 2, g_line, b_line, b_ch, rating, rating),)
    return Network(buses, gens, lines, (), ref_bus=1)


def all_contingencies(gens, lines) -> tuple[Contingency, ...]:
    out = [Contingency(f"G{g.id}", ContingencyKind.GEN_OUT, g.id) for g in gens]
    out += [Contingency(f"L{e.id}", ContingencyKind.LINE_OUT, e.id) for e in lines]
    return tuple(out)


def random_network(
    seed: int,
    n_bus: int = 8,
    n_gen: int = None,
    load_level: float = 0.3,
    chord_fraction: float = 0.5,
    tight_q_fraction: float = 0.0,
    rating_margin: float = 10.0,
    with_shunts: bool = False,
) -> Network:
    """Ring network plus random chords, so no single line outage islands a bus.

    Generators have ample active headroom and droop so every generator outage
    can be covered; ``tight_q_fraction`` of them get narrow reactive ranges to
    exercise voltage-regulator saturation.
    """
    rng = np.random.default_rng(seed)
    n_gen = n_gen or max(2, n_bus // 3)
    ids = [int(i) for i in 1 + np.arange(n_bus)]
    loads_p = rng.uniform(0.5, 1.5, n_bus) * load_level
    loads_q = loads_p * rng.uniform(0.1, 0.4, n_bus)
    gen_buses = sorted(rng.choice(n_bus, size=n_gen, replace=n_gen > n_bus).tolist())
    if 0 not in gen_buses:
        gen_buses[0] = 0
    for i in set(gen_buses):
        loads_p[i] *= 0.3
        loads_q[i] *= 0.3
    buses = []
    for i in range(n_bus):
        b_lo, b_hi = (-0.2, 0.3) if with_shunts and rng.random() < 0.3 else (0.0, 0.0)
        buses.append(_bus(ids[i], float(loads_p[i]), float(loads_q[i]), b_min=b_lo, b_max=b_hi))
    total = float(loads_p.sum())
    gens = []
    for j, i in enumerate(gen_buses):
        p_max = float(total * rng.uniform(1.2, 1.6))
        tight = rng.random() < tight_q_fraction
        q_max = float(rng.uniform(0.02, 0.08)) if tight else float(total)
        q_min = -q_max
        c1 = float(rng.uniform(10, 40))
        c2 = c1 + float(rng.uniform(5, 30))
        cost = CostFunction(((0.0, c1), (0.5 * p_max, c2)))
        gens.append(Generator(j + 1, ids[i], 0.0, p_max, q_min, q_max, p_max, cost))
    pairs = [(i, (i + 1) % n_bus) for i in range(n_bus)] if n_bus > 2 else [(0, 1)]
    n_chords = int(round(chord_fraction * n_bus)) if n_bus > 3 else 0
    existing = {tuple(sorted(p)) for p in pairs}
    tries = 0
    while n_chords > 0 and tries < 100 * n_bus:
        tries += 1
        i, j = sorted(rng.choice(n_bus, 2, replace=False).tolist())
        if (i, j) not in existing:
            existing.add((i, j))
            pairs.append((i, j))
            n_chords -= 1
    lines = []
    for e, (i, j) in enumerate(pairs):
        x = float(rng.uniform(0.05, 0.15))
        r = x * float(rng.uniform(0.05, 0.2))
        rating = rating_margin * total
        lines.append(line_from_impedance(e + 1, ids[i], ids[j], r, x, float(rng.uniform(0.0, 0.04)), rating, 1.2 * rating))
    return Network(tuple(buses), tuple(gens), tuple(lines), all_contingencies(gens, lines), ref_bus=ids[0])


def hedging_case() -> Network:
    """Reserve-scarce two-generator case where a line outage punishes the cheap dispatch.

    A large cheap unit at bus 1 serves a load at bus 2 over two parallel lines;
    a small expensive unit sits at the load. Losing either line leaves the
    other above its emergency rating unless the base dispatch leans on the
    small unit.
    """
    buses = (_bus(1), _bus(2, p_load=1.0, q_load=0.2))
    gens = (
        Generator(1, 1, 0.0, 2.0, -1.0, 1.0, 1.0, CostFunction.linear(20.0)),
        Generator(2, 2, 0.0, 0.6, -0.5, 0.5, 2.0, CostFunction.linear(60.0)),
    )
    lines = (
        line_from_impedance(1, 1, 2, 0.01, 0.1, 0.0, 0.6, 0.6),
        line_from_impedance(2, 1, 2, 0.01, 0.1, 0.0, 0.6, 0.6),
    )
    ks = (Contingency("L1", ContingencyKind.LINE_OUT, 1),)
    return Network(buses, gens, lines, ks, ref_bus=1, penalty=PenaltySpec.default())


def acceptance_corpus() -> list[Network]:
    """Ten feasible cases of 5 to 30 buses with generator and line outages."""
    sizes = [5, 6, 8, 10, 12, 14, 18, 22, 26, 30]
    return [
        random_network(1000 + i, n_bus=n, tight_q_fraction=0.3 if i % 2 else 0.0, with_shunts=i % 3 == 0)
        for i, n in enumerate(sizes)
    ]
