"""
Frontier dominance between two sets of (utility%, privacy%) points.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Tuple

import pandas as pd

logger = logging.getLogger(__name__)

_TOL = 1e-9


def _point(record) -> Tuple[float, float]:
    if isinstance(record, dict):
        return float(record["utility_pct"]), float(record["privacy_pct"])
    return float(record.utility_pct), float(record.privacy_pct)


def frontier(records: Iterable) -> List[Tuple[float, float]]:
    """Non-dominated (utility, privacy) points, sorted by privacy."""
    points = sorted(set(_point(r) for r in records), key=lambda p: (-p[1], -p[0]))
    front = []
    best_utility = float("-inf")
    for utility, privacy in points:
        if utility > best_utility + _TOL:
            front.append((utility, privacy))
            best_utility = utility
    return sorted(front, key=lambda p: p[1])


@dataclass
class DominanceReport:
    checked: int
    dominated: int
    failures: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def fraction(self) -> float:
        if self.checked == 0:
            return 1.0
        return self.dominated / self.checked

    @property
    def holds(self) -> bool:
        return not self.failures


def pareto_check(records_a: Iterable, records_b: Iterable, tol: float = _TOL) -> DominanceReport:
    """
    For every point of B, check that A has a point with at least the same privacy and
    at least the same utility (within tol). Ties count as dominated.
    """
    points_a = [_point(r) for r in records_a]
    points_b = [_point(r) for r in records_b]
    failures = []
    for utility, privacy in points_b:
        if not any(ua >= utility - tol and pa >= privacy - tol for ua, pa in points_a):
            failures.append((utility, privacy))
    report = DominanceReport(checked=len(points_b), dominated=len(points_b) - len(failures), failures=failures)
    if failures:
        logger.info(f"Dominance holds for {report.dominated}/{report.checked} points; first failure {failures[0]}")
    return report


# Sweep columns that identify one comparison group.
GROUP_KEYS = ("alpha", "threat", "theta", "k")


def _plain(value):
    if value is None or pd.isna(value):
        return None
    return value.item() if hasattr(value, "item") else value


def compare_methods(records: Iterable[dict], method_a: str, method_b: str, tol: float = _TOL) -> List[dict]:
    """
    Group sweep rows by (alpha, threat, theta, k) and, in every group holding both
    methods, report each frontier and whether A dominates B. Groups keep sweep order.
    """
    groups: Dict[tuple, Dict[str, list]] = {}
    for record in records:
        key = tuple(_plain(record.get(name)) for name in GROUP_KEYS)
        groups.setdefault(key, {}).setdefault(record["method"], []).append(record)

    rows = []
    for key, by_method in groups.items():
        if method_a not in by_method or method_b not in by_method:
            continue
        report = pareto_check(by_method[method_a], by_method[method_b], tol)
        rows.append({
            **dict(zip(GROUP_KEYS, key)),
            "frontier_a": frontier(by_method[method_a]),
            "frontier_b": frontier(by_method[method_b]),
            "checked": report.checked,
            "dominated": report.dominated,
            "fraction": report.fraction,
            "holds": report.holds,
        })
    logger.info(f"{method_a} vs {method_b}: {sum(r['holds'] for r in rows)}/{len(rows)} groups dominated")
    return rows
