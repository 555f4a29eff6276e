"""Immutable per-unit grid model and contingency topology sets."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .costs import CostFunction, PenaltySpec


@dataclass(frozen=True)
class Bus:
    id: int
    vmin: float
    vmax: float
    vmin_e: float
    vmax_e: float
    p_load: float = 0.0
    q_load: float = 0.0
    b_min: float = 0.0
    b_max: float = 0.0


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    droop: float
    cost: CostFunction


@dataclass(frozen=True)
class Line:
    id: int
    origin: int
    destination: int
    g: float
    b: float
    b_ch: float
    rating: float
    rating_e: float


class ContingencyKind(enum.Enum):
    GEN_OUT = "generator"
    LINE_OUT = "line"


@dataclass(frozen=True)
class Contingency:
    id: str
    kind: ContingencyKind
    element: int


@dataclass(eq=False)
class OperatingPoint:
    """Voltages, shunts and generator dispatch for one system condition.

    Arrays follow network order: ``v``, ``theta``, ``b`` per bus and ``p_g``,
    ``q_g`` per generator.
    """

    v: np.ndarray
    theta: np.ndarray
    b: np.ndarray
    p_g: np.ndarray
    q_g: np.ndarray

    def __post_init__(self):
        for name in ("v", "theta", "b", "p_g", "q_g"):
            setattr(self, name, np.array(getattr(self, name), dtype=float))

    def copy(self) -> "OperatingPoint":
        return OperatingPoint(self.v.copy(), self.theta.copy(), self.b.copy(), self.p_g.copy(), self.q_g.copy())

    def max_abs_diff(self, other: "OperatingPoint") -> float:
        return max(
            float(np.max(np.abs(getattr(self, n) - getattr(other, n)), initial=0.0))
            for n in ("v", "theta", "b", "p_g", "q_g")
        )


BaseState = OperatingPoint


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkArrays:
    """Index-based numpy view of a network used by the numerical kernels."""

    n_bus: int
    n_gen: int
    n_line: int
    vmin: np.ndarray
    vmax: np.ndarray
    vmin_e: np.ndarray
    vmax_e: np.ndarray
    p_load: np.ndarray
    q_load: np.ndarray
    b_min: np.ndarray
    b_max: np.ndarray
    gen_bus: np.ndarray
    p_min: np.ndarray
    p_max: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    droop: np.ndarray
    line_o: np.ndarray
    line_d: np.ndarray
    g: np.ndarray
    b: np.ndarray
    b_ch: np.ndarray
    rating: np.ndarray
    rating_e: np.ndarray
    ref: int


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    generators: tuple[Generator, ...]
    lines: tuple[Line, ...]
    contingencies: tuple[Contingency, ...] = ()
    ref_bus: int = 0
    penalty: PenaltySpec = field(default_factory=PenaltySpec.default)
    base_mva: float = 100.0
    prior: Optional[OperatingPoint] = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("buses", "generators", "lines", "contingencies"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def gen_index(self) -> dict[int, int]:
        return {g.id: i for i, g in enumerate(self.generators)}

    @cached_property
    def line_index(self) -> dict[int, int]:
        return {e.id: i for i, e in enumerate(self.lines)}

    @cached_property
    def arrays(self) -> NetworkArrays:
        bi = self.bus_index

        def col(items, attr):
            return np.array([getattr(x, attr) for x in items], dtype=float)

        return NetworkArrays(
            n_bus=len(self.buses),
            n_gen=len(self.generators),
            n_line=len(self.lines),
            vmin=col(self.buses, "vmin"),
            vmax=col(self.buses, "vmax"),
            vmin_e=col(self.buses, "vmin_e"),
            vmax_e=col(self.buses, "vmax_e"),
            p_load=col(self.buses, "p_load"),
            q_load=col(self.buses, "q_load"),
            b_min=col(self.buses, "b_min"),
            b_max=col(self.buses, "b_max"),
            gen_bus=np.array([bi[g.bus] for g in self.generators], dtype=int),
            p_min=col(self.generators, "p_min"),
            p_max=col(self.generators, "p_max"),
            q_min=col(self.generators, "q_min"),
            q_max=col(self.generators, "q_max"),
            droop=col(self.generators, "droop"),
            line_o=np.array([bi[e.origin] for e in self.lines], dtype=int),
            line_d=np.array([bi[e.destination] for e in self.lines], dtype=int),
            g=col(self.lines, "g"),
            b=col(self.lines, "b"),
            b_ch=col(self.lines, "b_ch"),
            rating=col(self.lines, "rating"),
            rating_e=col(self.lines, "rating_e"),
            ref=bi[self.ref_bus],
        )

    def contingency(self, label: str) -> Contingency:
        for k in self.contingencies:
            if k.id == label:
                return k
        raise KeyError(label)

    def empty_point(self) -> OperatingPoint:
        nb, ng = len(self.buses), len(self.generators)
        return OperatingPoint(np.ones(nb), np.zeros(nb), np.zeros(nb), np.zeros(ng), np.zeros(ng))


def islands(n_bus: int, line_o, line_d, line_mask=None) -> np.ndarray:
    """Component label per bus of the graph formed by the (masked) lines."""
    o = np.asarray(line_o, dtype=int)
    d = np.asarray(line_d, dtype=int)
    if line_mask is not None:
        o, d = o[line_mask], d[line_mask]
    adj = coo_matrix((np.ones(len(o)), (o, d)), shape=(n_bus, n_bus))
    _, labels = connected_components(adj, directed=False)
    return labels


def validate(net: Network) -> list[str]:
    """List every violated model invariant; empty when the network is well formed."""
    out: list[str] = []

    def dupes(items, what):
        seen = set()
        for x in items:
            if x.id in seen:
                out.append(f"duplicate id: {what} {x.id}")
            seen.add(x.id)

    dupes(net.buses, "bus")
    dupes(net.generators, "generator")
    dupes(net.lines, "line")
    dupes(net.contingencies, "contingency")

    bus_ids = {b.id for b in net.buses}
    for b in net.buses:
        if not 0 < b.vmin_e <= b.vmin <= b.vmax <= b.vmax_e:
            out.append(f"bus {b.id}: voltage bounds must satisfy 0 < vmin_e <= vmin <= vmax <= vmax_e")
        if b.b_min > b.b_max:
            out.append(f"bus {b.id}: b_min > b_max")
    for g in net.generators:
        if g.bus not in bus_ids:
            out.append(f"generator {g.id}: dangling reference to bus {g.bus}")
        if g.p_min > g.p_max:
            out.append(f"generator {g.id}: p_min > p_max")
        if g.q_min > g.q_max:
            out.append(f"generator {g.id}: q_min > q_max")
        if g.droop < 0:
            out.append(f"generator {g.id}: negative droop")
        for msg in g.cost.problems():
            out.append(f"generator {g.id}: cost {msg}")
        if g.cost.breakpoints[0][0] > g.p_min:
            out.append(f"generator {g.id}: cost domain does not cover p_min")
    for e in net.lines:
        for end in (e.origin, e.destination):
            if end not in bus_ids:
                out.append(f"line {e.id}: dangling reference to bus {end}")
        if e.origin == e.destination:
            out.append(f"line {e.id}: origin equals destination")
        if not e.rating > 0:
            out.append(f"line {e.id}: rating must be positive")
        if e.rating_e < e.rating:
            out.append(f"line {e.id}: emergency rating below normal rating")
    gen_ids = {g.id for g in net.generators}
    line_ids = {e.id for e in net.lines}
    for k in net.contingencies:
        pool = gen_ids if k.kind is ContingencyKind.GEN_OUT else line_ids
        if k.element not in pool:
            out.append(f"contingency {k.id}: dangling reference to {k.kind.value} {k.element}")
    if net.ref_bus not in bus_ids:
        out.append(f"reference bus {net.ref_bus} does not exist")
    out.extend(net.penalty.problems())

    if not out and net.buses:
        bi = {b.id: i for i, b in enumerate(net.buses)}
        labels = islands(len(net.buses), [bi[e.origin] for e in net.lines], [bi[e.destination] for e in net.lines])
        if len(set(labels.tolist())) > 1:
            out.append("base-case network is not connected")
    return out


def post_contingency_sets(net: Network, k: Contingency) -> tuple[frozenset, frozenset]:
    """Ids of generators and lines still online after contingency ``k``."""
    gens = frozenset(g.id for g in net.generators)
    lines = frozenset(e.id for e in net.lines)
    if k.kind is ContingencyKind.GEN_OUT:
        if k.element not in gens:
            raise NetworkError(f"contingency {k.id}: unknown generator {k.element}")
        return gens - {k.element}, lines
    if k.element not in lines:
        raise NetworkError(f"contingency {k.id}: unknown line {k.element}")
    return gens, lines - {k.element}


def online_masks(net: Network, k: Optional[Contingency]) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks over generators and lines in network order (``k=None`` is the base case)."""
    gen_mask = np.ones(len(net.generators), dtype=bool)
    line_mask = np.ones(len(net.lines), dtype=bool)
    if k is None:
        return gen_mask, line_mask
    post_contingency_sets(net, k)
    if k.kind is ContingencyKind.GEN_OUT:
        gen_mask[net.gen_index[k.element]] = False
    else:
        line_mask[net.line_index[k.element]] = False
    return gen_mask, line_mask
