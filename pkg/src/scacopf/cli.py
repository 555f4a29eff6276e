"""Batch entry points: ``code1``, ``code2``, ``evaluate``, ``score`` and ``generate``.

Exit codes: 0 success, 1 success through a fallback, 2 input error.
``SCACOPF_WORKERS`` and ``SCACOPF_LOG_LEVEL`` override the worker count and
log level.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .cases import random_network
from .contingency import ContingencyConfig
from .evaluator import evaluate_full, score_or_worst_case, worst_case_point, worst_case_score
from .formats import (
    FormatError,
    parse_contingency_list,
    parse_instance,
    read_base_solution,
    read_contingency_solutions,
    write_base_solution,
    write_contingency_solutions,
    write_instance,
)
from .network import Network, validate
from .opf import SolveConfig, solve_all_contingencies, solve_sc_full
from .scoring import ScoreTable

log = logging.getLogger("scacopf")

EXIT_OK, EXIT_FALLBACK, EXIT_INPUT = 0, 1, 2
MODE_LIMITS = {"rt": 600.0, "offline": 2700.0}
GRACE = 5.0


@dataclass
class RunManifest:
    phase: str
    instance: str
    contingencies: Optional[str] = None
    mode: str = "offline"
    time_limit: float = 0.0
    per_contingency_limit: Optional[float] = None
    workers: int = 1
    outputs: dict[str, str] = field(default_factory=dict)
    exit_status: int = EXIT_OK
    fallback: bool = False
    fallback_contingencies: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    objective: Optional[float] = None
    input_digest: Optional[str] = None

    def write(self, path: Optional[str]):
        if path:
            _atomic_write(path, json.dumps(asdict(self), indent=1, sort_keys=True) + "\n")


def _atomic_write(path, text: str):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _load_network(args) -> Network:
    text = Path(args.network).read_text(encoding="utf-8")
    net = parse_instance(text)
    if getattr(args, "contingencies", None):
        ks = parse_contingency_list(Path(args.contingencies).read_text(encoding="utf-8"))
        net = Network(net.buses, net.generators, net.lines, ks, net.ref_bus, net.penalty, net.base_mva, net.prior)
        problems = validate(net)
        if problems:
            raise FormatError("; ".join(problems))
    if getattr(args, "seedpoint", None):
        prior = read_base_solution(net, Path(args.seedpoint).read_text(encoding="utf-8"))
        net = Network(net.buses, net.generators, net.lines, net.contingencies, net.ref_bus, net.penalty, net.base_mva, prior)
    return net


def _workers(args) -> int:
    env = os.environ.get("SCACOPF_WORKERS")
    return max(1, int(env)) if env else max(1, args.workers)


def _time_limit(args) -> float:
    return float(args.time_limit) if args.time_limit is not None else MODE_LIMITS[args.mode]


# -- code1 ------------------------------------------------------------------------


def run_code1(args) -> int:
    t0 = time.monotonic()
    limit = _time_limit(args)
    man = RunManifest("code1", args.network, args.contingencies, args.mode, limit, workers=_workers(args))
    man.outputs["solution1"] = args.out
    try:
        net = _load_network(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        man.exit_status = EXIT_INPUT
        man.write(args.report)
        return EXIT_INPUT
    man.timings["parse"] = time.monotonic() - t0

    # a valid file exists from here on, whatever happens to the solver
    _atomic_write(args.out, write_base_solution(net, worst_case_point(net)))
    man.fallback = True
    man.exit_status = EXIT_FALLBACK
    done = threading.Event()

    def watchdog():
        if not done.wait(max(0.0, limit - (time.monotonic() - t0))):
            log.error("time limit reached; leaving the last written solution in place")
            man.timings["total"] = time.monotonic() - t0
            man.write(args.report)
            os._exit(EXIT_FALLBACK)

    threading.Thread(target=watchdog, daemon=True).start()
    try:
        budget = max(0.5, 0.9 * limit - (time.monotonic() - t0))
        cfg = SolveConfig(time_budget=budget, workers=man.workers)
        res = solve_sc_full(net, cfg)
        man.timings["solve"] = time.monotonic() - t0 - man.timings["parse"]
        if res.objective < worst_case_score(net):
            _atomic_write(args.out, write_base_solution(net, res.point))
            man.fallback = False
            man.exit_status = EXIT_OK
            man.objective = res.objective
    except Exception:
        log.exception("solver failed; fallback solution kept")
    done.set()
    man.timings["total"] = time.monotonic() - t0
    man.write(args.report)
    return man.exit_status


# -- code2 ------------------------------------------------------------------------


def run_code2(args) -> int:
    t0 = time.monotonic()
    man = RunManifest(
        "code2", args.network, args.contingencies, args.mode, _time_limit(args),
        per_contingency_limit=args.per_contingency_limit, workers=_workers(args),
    )
    man.outputs["solution2"] = args.out
    try:
        net = _load_network(args)
        digest = _digest(args.base)
        with open(args.base, "r", encoding="utf-8") as fh:
            base = read_base_solution(net, fh.read())
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        man.exit_status = EXIT_INPUT
        man.write(args.report)
        return EXIT_INPUT
    man.input_digest = digest
    ccfg = ContingencyConfig()
    states = solve_all_contingencies(
        net, base, workers=man.workers, cfg=ccfg, per_contingency_limit=args.per_contingency_limit
    )
    _atomic_write(args.out, write_contingency_solutions(net, states))
    if _digest(args.base) != digest:
        print("error: base solution changed while code2 ran", file=sys.stderr)
        man.exit_status = EXIT_INPUT
        man.write(args.report)
        return EXIT_INPUT
    man.fallback_contingencies = [s.contingency for s in states if s.fallback]
    man.fallback = bool(man.fallback_contingencies)
    man.exit_status = EXIT_FALLBACK if man.fallback else EXIT_OK
    man.timings["total"] = time.monotonic() - t0
    man.timings["per_contingency_avg"] = man.timings["total"] / max(1, len(states))
    man.write(args.report)
    return man.exit_status


# -- evaluate / score -------------------------------------------------------------


def run_evaluate(args) -> int:
    try:
        net = _load_network(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    worst = worst_case_score(net)
    report, problem = None, None
    try:
        base = read_base_solution(net, Path(args.base).read_text(encoding="utf-8"))
        conts = {}
        if args.contingency_solutions and Path(args.contingency_solutions).exists():
            text = Path(args.contingency_solutions).read_text(encoding="utf-8")
            conts = read_contingency_solutions(net, text, strict=False)
        report = evaluate_full(net, base, conts)
    except (OSError, ValueError) as exc:
        problem = str(exc)
    score = score_or_worst_case(net, report, worst)
    out = {
        "network": args.name or Path(args.network).stem,
        "scenario": args.scenario,
        "team": args.team,
        "score": score,
        "worst_case": worst,
        "substituted": report is None or score != report.total,
        "error": problem,
        "report": report.to_dict() if report else None,
    }
    if args.report:
        _atomic_write(args.report, json.dumps(out, indent=1, sort_keys=True) + "\n")
    print(report.summary() if report else f"unreadable solution: {problem}")
    print(f"score            {score:.6f}")
    return EXIT_OK


def collect_scores(results_dir) -> dict:
    """``team -> network -> scenario -> score`` from every evaluation JSON under ``results_dir``."""
    scores: dict = {}
    for path in sorted(Path(results_dir).rglob("*.json")):
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            continue
        if not isinstance(doc, dict) or "score" not in doc:
            continue
        team = doc.get("team") or "default"
        scores.setdefault(team, {}).setdefault(doc.get("network") or path.stem, {})[str(doc.get("scenario", "1"))] = float(
            doc["score"]
        )
    return scores


def run_score(args) -> int:
    scores = collect_scores(args.results)
    if not scores:
        print(f"error: no evaluation reports under {args.results}", file=sys.stderr)
        return EXIT_INPUT
    try:
        table = ScoreTable.build(scores, args.tau_max)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    text = json.dumps(table.to_dict(), indent=1, sort_keys=True) + "\n"
    if args.out:
        _atomic_write(args.out, text)
        rows = ["team,overall_geomean,profile_area"]
        rows += [f"{r['team']},{r['overall_geomean']!r},{r['profile_area']!r}" for r in table.rows()]
        _atomic_write(Path(args.out).with_suffix(".csv"), "\n".join(rows) + "\n")
    for r in table.rows():
        print(f"{r['team']:<20} {r['overall_geomean']:.6f} {r['profile_area']:.6f}")
    return EXIT_OK


def run_generate(args) -> int:
    net = random_network(
        args.seed, n_bus=args.n_bus, tight_q_fraction=args.tight_q, with_shunts=args.shunts, rating_margin=args.rating_margin
    )
    _atomic_write(args.out, write_instance(net))
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scacopf", description="Security-constrained AC OPF batch tools")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--network", required=True, help="instance document (JSON)")
        sp.add_argument("--contingencies", help="contingency list replacing the instance's own")
        sp.add_argument("--mode", choices=sorted(MODE_LIMITS), default="offline")
        sp.add_argument("--time-limit", type=float, help="seconds; default from --mode")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--report", help="write a JSON run manifest or report here")

    c1 = sub.add_parser("code1", help="solve the base case")
    common(c1)
    c1.add_argument("--out", default="solution1.txt")
    c1.add_argument("--seedpoint", help="base solution file used as the prior operating point")
    c1.set_defaults(func=run_code1)

    c2 = sub.add_parser("code2", help="solve every contingency from a base solution")
    common(c2)
    c2.add_argument("--base", default="solution1.txt")
    c2.add_argument("--out", default="solution2.txt")
    c2.add_argument("--per-contingency-limit", type=float, default=2.0)
    c2.set_defaults(func=run_code2)

    ev = sub.add_parser("evaluate", help="score a solution pair")
    ev.add_argument("--network", required=True)
    ev.add_argument("--contingencies")
    ev.add_argument("--base", default="solution1.txt")
    ev.add_argument("--contingency-solutions", default="solution2.txt")
    ev.add_argument("--report")
    ev.add_argument("--team", default="default")
    ev.add_argument("--name", help="network name in the report; default the instance file stem")
    ev.add_argument("--scenario", default="1")
    ev.set_defaults(func=run_evaluate)

    sc = sub.add_parser("score", help="build the leaderboard from evaluation reports")
    sc.add_argument("--results", required=True, help="directory searched recursively for reports")
    sc.add_argument("--out", help="leaderboard JSON (a CSV is written next to it)")
    sc.add_argument("--tau-max", type=float, default=10.0)
    sc.set_defaults(func=run_score)

    gen = sub.add_parser("generate", help="write a random instance")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--n-bus", type=int, default=8)
    gen.add_argument("--tight-q", type=float, default=0.0)
    gen.add_argument("--shunts", action="store_true")
    gen.add_argument("--rating-margin", type=float, default=10.0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=run_generate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=os.environ.get("SCACOPF_LOG_LEVEL", "WARNING").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
