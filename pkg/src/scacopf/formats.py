"""GOC-lite instance documents and solution files.

Instance documents are JSON. Physical quantities carry their unit in the key
(``p_load_mw``, ``rating_mva``, ``cost`` in MW and $/MWh) and are converted to
per unit on ``base_mva`` when parsed. Line impedances ``r``, ``x`` and the
charging susceptance ``b_ch`` are already per unit. The optional
``operating_point`` section is per unit with angles in radians.

Solution files are plain text, UTF-8 with LF endings. Every float is written
with 17 significant digits so reading it back reproduces the binary value.
Angles are in radians.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .costs import CostFunction, PenaltySpec, PenaltyTiers
from .network import (
    Bus,
    Contingency,
    ContingencyKind,
    Generator,
    Line,
    Network,
    OperatingPoint,
    online_masks,
    validate,
)


class FormatError(ValueError):
    pass


class InstanceSyntaxError(FormatError):
    def __init__(self, msg, line, column):
        super().__init__(f"line {line}, column {column}: {msg}")
        self.line = line
        self.column = column


class InstanceSemanticError(FormatError):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".16e")


# -- instance documents ----------------------------------------------------------


def _req(obj: dict, key: str, where: str):
    if key not in obj:
        raise InstanceSemanticError(f"{where}: missing field '{key}'")
    return obj[key]


def _num(obj: dict, key: str, where: str, default=None) -> float:
    if key not in obj:
        if default is None:
            raise InstanceSemanticError(f"{where}: missing field '{key}'")
        return float(default)
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise InstanceSemanticError(f"{where}: field '{key}' must be a number")
    return float(val)


def _int(obj: dict, key: str, where: str) -> int:
    val = _req(obj, key, where)
    if isinstance(val, bool) or not isinstance(val, int):
        raise InstanceSemanticError(f"{where}: field '{key}' must be an integer")
    return val


def _tiers(rows, base: float, symmetric: bool, where: str) -> PenaltyTiers:
    if not isinstance(rows, list) or not rows:
        raise InstanceSemanticError(f"{where}: expected a nonempty list of [width, price]")
    tiers = []
    for row in rows:
        if not isinstance(row, list) or len(row) != 2:
            raise InstanceSemanticError(f"{where}: tier must be [width, price]")
        width = math.inf if row[0] is None else float(row[0]) / base
        tiers.append((width, float(row[1]) * base))
    return PenaltyTiers(tuple(tiers), symmetric=symmetric)


def parse_instance(text: str) -> Network:
    """Parse a GOC-lite JSON document into a validated per-unit network."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise InstanceSemanticError("top level must be an object")
    base = _num(doc, "base_mva", "instance", 100.0)
    if not base > 0:
        raise InstanceSemanticError("instance: base_mva must be positive")

    buses = []
    for i, row in enumerate(_req(doc, "buses", "instance")):
        where = f"bus {row.get('id', f'#{i}')}"
        buses.append(
            Bus(
                id=_int(row, "id", where),
                vmin=_num(row, "vmin", where),
                vmax=_num(row, "vmax", where),
                vmin_e=_num(row, "vmin_e", where),
                vmax_e=_num(row, "vmax_e", where),
                p_load=_num(row, "p_load_mw", where, 0.0) / base,
                q_load=_num(row, "q_load_mvar", where, 0.0) / base,
                b_min=_num(row, "b_min_mvar", where, 0.0) / base,
                b_max=_num(row, "b_max_mvar", where, 0.0) / base,
            )
        )

    gens = []
    for i, row in enumerate(doc.get("generators", [])):
        where = f"generator {row.get('id', f'#{i}')}"
        points = _req(row, "cost", where)
        if not isinstance(points, list) or not points:
            raise InstanceSemanticError(f"{where}: cost must be a nonempty list of [mw, usd_per_mwh]")
        cost = CostFunction(tuple((float(p) / base, float(c) * base) for p, c in points))
        gens.append(
            Generator(
                id=_int(row, "id", where),
                bus=_int(row, "bus", where),
                p_min=_num(row, "p_min_mw", where) / base,
                p_max=_num(row, "p_max_mw", where) / base,
                q_min=_num(row, "q_min_mvar", where) / base,
                q_max=_num(row, "q_max_mvar", where) / base,
                droop=_num(row, "droop_mw", where, 0.0) / base,
                cost=cost,
            )
        )

    lines = []
    for i, row in enumerate(doc.get("lines", [])):
        where = f"line {row.get('id', f'#{i}')}"
        r, x = _num(row, "r", where), _num(row, "x", where)
        if r == 0 and x == 0:
            raise InstanceSemanticError(f"{where}: zero impedance")
        y = 1.0 / complex(r, x)
        rating = _num(row, "rating_mva", where) / base
        lines.append(
            Line(
                id=_int(row, "id", where),
                origin=_int(row, "from", where),
                destination=_int(row, "to", where),
                g=y.real,
                b=y.imag,
                b_ch=_num(row, "b_ch", where, 0.0),
                rating=rating,
                rating_e=_num(row, "rating_e_mva", where, rating * base) / base,
            )
        )

    contingencies = parse_contingency_rows(doc.get("contingencies", []))

    penalty = PenaltySpec.default()
    if "penalty" in doc:
        pen = doc["penalty"]
        penalty = PenaltySpec(
            imbalance=_tiers(_req(pen, "imbalance", "penalty"), base, True, "penalty imbalance"),
            overload=_tiers(_req(pen, "overload", "penalty"), base, False, "penalty overload"),
        )

    ref_bus = _int(doc, "ref_bus", "instance") if "ref_bus" in doc else (buses[0].id if buses else 0)
    net = Network(tuple(buses), tuple(gens), tuple(lines), contingencies, ref_bus, penalty, base)
    problems = validate(net)
    if problems:
        raise InstanceSemanticError("; ".join(problems))
    if "operating_point" in doc:
        net = Network(
            net.buses, net.generators, net.lines, net.contingencies, net.ref_bus, net.penalty, net.base_mva,
            prior=_parse_operating_point(net, doc["operating_point"]),
        )
    return net


def _parse_operating_point(net: Network, section) -> OperatingPoint:
    pt = net.empty_point()
    seen_b, seen_g = set(), set()
    for row in _req(section, "buses", "operating_point"):
        i = net.bus_index.get(row.get("id"))
        if i is None:
            raise InstanceSemanticError(f"operating_point: unknown bus {row.get('id')}")
        seen_b.add(i)
        pt.v[i] = _num(row, "v", "operating_point bus")
        pt.theta[i] = _num(row, "theta", "operating_point bus", 0.0)
        pt.b[i] = _num(row, "b", "operating_point bus", 0.0)
    for row in _req(section, "generators", "operating_point"):
        j = net.gen_index.get(row.get("id"))
        if j is None:
            raise InstanceSemanticError(f"operating_point: unknown generator {row.get('id')}")
        seen_g.add(j)
        pt.p_g[j] = _num(row, "p", "operating_point generator")
        pt.q_g[j] = _num(row, "q", "operating_point generator", 0.0)
    if len(seen_b) != len(net.buses) or len(seen_g) != len(net.generators):
        raise InstanceSemanticError("operating_point: every bus and generator must appear")
    return pt


def parse_contingency_rows(rows) -> tuple[Contingency, ...]:
    out = []
    kinds = {k.value: k for k in ContingencyKind}
    for i, row in enumerate(rows):
        where = f"contingency {row.get('id', f'#{i}')}"
        kind = _req(row, "kind", where)
        if kind not in kinds:
            raise InstanceSemanticError(f"{where}: kind must be 'generator' or 'line'")
        label = _req(row, "id", where)
        out.append(Contingency(str(label), kinds[kind], _int(row, "element", where)))
    return tuple(out)


def parse_contingency_list(text: str) -> tuple[Contingency, ...]:
    """A standalone contingency list: ``{"contingencies": [...]}``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    rows = doc.get("contingencies") if isinstance(doc, dict) else doc
    if not isinstance(rows, list):
        raise InstanceSemanticError("contingency list must be a list")
    return parse_contingency_rows(rows)


def _contingency_rows(ks: Iterable[Contingency]) -> list[dict]:
    return [{"id": k.id, "kind": k.kind.value, "element": k.element} for k in ks]


def write_contingency_list(ks: Iterable[Contingency]) -> str:
    return json.dumps({"contingencies": _contingency_rows(ks)}, indent=1) + "\n"


def write_instance(net: Network) -> str:
    """Serialize a network back to a GOC-lite document (inverse of :func:`parse_instance`)."""
    base = net.base_mva

    def tiers(t: PenaltyTiers):
        return [[None if math.isinf(w) else w * base, c / base] for w, c in t.tiers]

    lines = []
    for e in net.lines:
        z = 1.0 / complex(e.g, e.b)
        lines.append(
            {"id": e.id, "from": e.origin, "to": e.destination, "r": z.real, "x": z.imag, "b_ch": e.b_ch,
             "rating_mva": e.rating * base, "rating_e_mva": e.rating_e * base}
        )
    doc = {
        "base_mva": base,
        "ref_bus": net.ref_bus,
        "buses": [
            {"id": b.id, "vmin": b.vmin, "vmax": b.vmax, "vmin_e": b.vmin_e, "vmax_e": b.vmax_e,
             "p_load_mw": b.p_load * base, "q_load_mvar": b.q_load * base,
             "b_min_mvar": b.b_min * base, "b_max_mvar": b.b_max * base}
            for b in net.buses
        ],
        "generators": [
            {"id": g.id, "bus": g.bus, "p_min_mw": g.p_min * base, "p_max_mw": g.p_max * base,
             "q_min_mvar": g.q_min * base, "q_max_mvar": g.q_max * base, "droop_mw": g.droop * base,
             "cost": [[p * base, c / base] for p, c in g.cost.breakpoints]}
            for g in net.generators
        ],
        "lines": lines,
        "contingencies": _contingency_rows(net.contingencies),
        "penalty": {"imbalance": tiers(net.penalty.imbalance), "overload": tiers(net.penalty.overload)},
    }
    if net.prior is not None:
        pt = net.prior
        doc["operating_point"] = {
            "buses": [{"id": b.id, "v": pt.v[i], "theta": pt.theta[i], "b": pt.b[i]} for i, b in enumerate(net.buses)],
            "generators": [{"id": g.id, "p": pt.p_g[j], "q": pt.q_g[j]} for j, g in enumerate(net.generators)],
        }
    return json.dumps(doc, indent=1) + "\n"


# -- solution files ---------------------------------------------------------------


@dataclass(eq=False)
class ContingencySolution:
    label: str
    delta: float
    point: OperatingPoint


def _point_rows(net: Network, pt: OperatingPoint) -> list[str]:
    out = ["BUS", "id,v,theta,b"]
    for i, b in enumerate(net.buses):
        out.append(f"{b.id},{_fmt(pt.v[i])},{_fmt(pt.theta[i])},{_fmt(pt.b[i])}")
    out += ["GENERATOR", "id,p,q"]
    for j, g in enumerate(net.generators):
        out.append(f"{g.id},{_fmt(pt.p_g[j])},{_fmt(pt.q_g[j])}")
    return out


def _check_point(net: Network, pt: OperatingPoint):
    if pt.v.shape != (len(net.buses),) or pt.p_g.shape != (len(net.generators),):
        raise FormatError("operating point is not dimensioned to the network")
    if pt.theta[net.arrays.ref] != 0.0:
        raise FormatError(f"reference bus {net.ref_bus} angle must be exactly 0, got {pt.theta[net.arrays.ref]!r}")


def write_base_solution(net: Network, state: OperatingPoint) -> str:
    _check_point(net, state)
    return "\n".join(_point_rows(net, state)) + "\n"


def write_contingency_solutions(net: Network, states) -> str:
    """One block per state, in the order given.

    ``states`` holds objects with ``contingency``/``label``, ``delta`` and ``point``.
    """
    out = []
    for s in states:
        label = getattr(s, "contingency", None) or s.label
        k = net.contingency(label)
        _check_point(net, s.point)
        gen_mask, _ = online_masks(net, k)
        off = ~gen_mask
        if np.any(s.point.p_g[off] != 0) or np.any(s.point.q_g[off] != 0):
            raise FormatError(f"contingency {label}: outaged generator must report zero power")
        out += [f"CONTINGENCY {label}", f"DELTA {_fmt(s.delta)}"]
        out += _point_rows(net, s.point)
        out.append("END")
    return "".join(line + "\n" for line in out)


class _Lines:
    def __init__(self, text: str):
        self.rows = [r.strip() for r in text.replace("\r\n", "\n").split("\n")]
        self.pos = 0

    def next(self) -> Optional[str]:
        while self.pos < len(self.rows):
            row = self.rows[self.pos]
            self.pos += 1
            if row and not row.startswith("#"):
                return row
        return None

    def expect(self, what: str) -> str:
        row = self.next()
        if row is None:
            raise FormatError(f"unexpected end of file, expected {what}")
        return row

    def where(self) -> str:
        return f"line {self.pos}"


def _float(tok: str, lines: _Lines) -> float:
    try:
        return float(tok)
    except ValueError:
        raise FormatError(f"{lines.where()}: bad number {tok!r}") from None


def _read_point(net: Network, lines: _Lines) -> OperatingPoint:
    pt = net.empty_point()
    if lines.expect("BUS") != "BUS":
        raise FormatError(f"{lines.where()}: expected BUS section")
    lines.expect("bus header")
    seen = set()
    for _ in range(len(net.buses)):
        parts = lines.expect("bus row").split(",")
        if len(parts) != 4:
            raise FormatError(f"{lines.where()}: bus row needs 4 fields")
        i = net.bus_index.get(int(parts[0])) if parts[0].strip().lstrip("-").isdigit() else None
        if i is None:
            raise FormatError(f"{lines.where()}: unknown bus {parts[0]}")
        if i in seen:
            raise FormatError(f"{lines.where()}: bus {parts[0]} repeated")
        seen.add(i)
        pt.v[i], pt.theta[i], pt.b[i] = (_float(t, lines) for t in parts[1:])
    if lines.expect("GENERATOR") != "GENERATOR":
        raise FormatError(f"{lines.where()}: expected GENERATOR section (missing bus rows?)")
    lines.expect("generator header")
    seen = set()
    for _ in range(len(net.generators)):
        parts = lines.expect("generator row").split(",")
        if len(parts) != 3:
            raise FormatError(f"{lines.where()}: generator row needs 3 fields")
        j = net.gen_index.get(int(parts[0])) if parts[0].strip().lstrip("-").isdigit() else None
        if j is None:
            raise FormatError(f"{lines.where()}: unknown generator {parts[0]}")
        if j in seen:
            raise FormatError(f"{lines.where()}: generator {parts[0]} repeated")
        seen.add(j)
        pt.p_g[j], pt.q_g[j] = (_float(t, lines) for t in parts[1:])
    return pt


def read_base_solution(net: Network, text: str) -> OperatingPoint:
    lines = _Lines(text)
    pt = _read_point(net, lines)
    extra = lines.next()
    if extra is not None:
        raise FormatError(f"{lines.where()}: unexpected content {extra!r}")
    return pt


def read_contingency_solutions(net: Network, text: str, strict: bool = True) -> dict[str, ContingencySolution]:
    """Blocks keyed by contingency label.

    With ``strict`` every contingency of the network must be present; otherwise
    missing blocks are simply absent from the result.
    """
    lines = _Lines(text)
    out: dict[str, ContingencySolution] = {}
    known = {k.id for k in net.contingencies}
    while True:
        head = lines.next()
        if head is None:
            break
        if not head.startswith("CONTINGENCY "):
            raise FormatError(f"{lines.where()}: expected CONTINGENCY, got {head!r}")
        label = head[len("CONTINGENCY "):].strip()
        if label not in known:
            raise FormatError(f"{lines.where()}: unknown contingency {label!r}")
        if label in out:
            raise FormatError(f"{lines.where()}: contingency {label!r} repeated")
        row = lines.expect("DELTA")
        if not row.startswith("DELTA "):
            raise FormatError(f"{lines.where()}: expected DELTA")
        delta = _float(row[len("DELTA "):].strip(), lines)
        pt = _read_point(net, lines)
        if lines.expect("END") != "END":
            raise FormatError(f"{lines.where()}: expected END")
        out[label] = ContingencySolution(label, delta, pt)
    if strict:
        missing = [k.id for k in net.contingencies if k.id not in out]
        if missing:
            raise FormatError(f"missing contingency blocks: {', '.join(missing)}")
    return out
