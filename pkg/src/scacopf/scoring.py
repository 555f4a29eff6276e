"""Cross-scenario scoring and difficulty metrics.

Two leaderboards are supported: nested geometric means (scenarios within a
network, then networks) and the area under each team's performance profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


class ScoringError(ValueError):
    pass


def _positive(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ScoringError("no scores")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ScoringError("scores must be finite and positive")
    return arr


def geometric_mean(values) -> float:
    """Geometric mean computed through logarithms."""
    return float(np.exp(np.mean(np.log(_positive(values)))))


def network_scores(scores: Mapping[str, Mapping[str, float] | Sequence[float]]) -> dict[str, float]:
    """Geometric mean over the scenarios of each network."""
    out = {}
    for net, per_scenario in scores.items():
        vals = list(per_scenario.values()) if isinstance(per_scenario, Mapping) else list(per_scenario)
        out[net] = geometric_mean(vals)
    return out


def geometric_mean_overall(scores: Mapping[str, Mapping[str, float] | Sequence[float]]) -> float:
    """Geometric mean over networks of the per-network geometric means."""
    return geometric_mean(list(network_scores(scores).values()))


def performance_profile_area(scores, tau_max: float = 10.0):
    """Area under each team's performance profile on ``[1, tau_max]``.

    ``scores`` is either a ``team -> per-problem scores`` mapping (same problem
    order for every team) or a 2-D array with one row per team. The profile is
    piecewise constant, so the integral is exact:
    ``(1/P) * sum_p max(0, tau_max - r_tp)`` with ``r_tp >= 1``.
    Areas are not normalized by ``tau_max - 1``.
    """
    if isinstance(scores, Mapping):
        teams = list(scores)
        table = np.array([list(scores[t]) for t in teams], dtype=float)
    else:
        teams = None
        table = np.asarray(scores, dtype=float)
    if table.ndim != 2:
        raise ScoringError("scores must be a team by problem table")
    if table.shape[0] < 2:
        raise ScoringError("performance profiles need at least two teams")
    if not tau_max > 1:
        raise ScoringError("tau_max must exceed 1")
    _positive(table)
    ratios = table / table.min(axis=0, keepdims=True)
    areas = np.mean(np.maximum(tau_max - ratios, 0.0), axis=1)
    if teams is None:
        return areas
    return {t: float(a) for t, a in zip(teams, areas)}


def profile(scores, tau) -> np.ndarray:
    """Fraction of problems on which each team is within a factor ``tau`` of the best."""
    table = _positive(scores)
    ratios = table / table.min(axis=0, keepdims=True)
    return np.mean(ratios <= tau, axis=1)


def gap(o1: float, o2: float) -> float:
    """Relative gap between the best and second-best objective."""
    if not (o1 > 0 and o2 >= o1):
        raise ScoringError("gap needs 0 < o1 <= o2")
    return o2 / o1 - 1.0


def hardness_index(c_rel: float, p_rel: float, p_ub_rel: float) -> float:
    """Product of relative cost, relative penalty and the decimal log of the penalty upper-bound ratio."""
    if not p_ub_rel > 1:
        raise ScoringError("p_ub_rel must exceed 1")
    return c_rel * p_rel * math.log10(p_ub_rel)


@dataclass
class ScoreTable:
    """Scores of every team on every (network, scenario) pair with both leaderboards."""

    scores: dict[str, dict[str, dict[str, float]]]
    tau_max: float = 10.0
    network: dict[str, dict[str, float]] = field(default_factory=dict)
    overall: dict[str, float] = field(default_factory=dict)
    profile_area: dict[str, float] = field(default_factory=dict)
    gaps: dict[str, float] = field(default_factory=dict)

    @classmethod
    def build(cls, scores: Mapping[str, Mapping[str, Mapping[str, float]]], tau_max: float = 10.0) -> "ScoreTable":
        scores = {t: {n: dict(s) for n, s in nets.items()} for t, nets in scores.items()}
        tab = cls(scores, tau_max)
        for team, nets in scores.items():
            tab.network[team] = network_scores(nets)
            tab.overall[team] = geometric_mean(list(tab.network[team].values()))
        problems = sorted({(n, s) for nets in scores.values() for n, ss in nets.items() for s in ss})
        teams = sorted(scores)
        for t in teams:
            missing = [p for p in problems if p[1] not in scores[t].get(p[0], {})]
            if missing:
                raise ScoringError(f"team {t} has no score for {missing[0]}")
        if len(teams) >= 2:
            table = {t: [scores[t][n][s] for n, s in problems] for t in teams}
            tab.profile_area = performance_profile_area(table, tau_max)
            for n, s in problems:
                col = sorted(scores[t][n][s] for t in teams)
                tab.gaps[f"{n}/{s}"] = gap(col[0], col[1])
        return tab

    def to_dict(self) -> dict:
        return {
            "tau_max": self.tau_max,
            "overall": self.overall,
            "network": self.network,
            "profile_area": self.profile_area,
            "gap": self.gaps,
            "scores": self.scores,
        }

    def rows(self) -> list[dict]:
        return [
            {"team": t, "overall_geomean": self.overall[t], "profile_area": self.profile_area.get(t, float("nan"))}
            for t in sorted(self.overall, key=lambda t: (self.overall[t], t))
        ]
