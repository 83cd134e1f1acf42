"""
Defense solutions and the single metrics path every defense reports through.

    cost      = alpha * ||delta||_1 + (1 - alpha) * |M|      (||delta||_1 = |F| for beacons)
    objective = cost - w * |Z|
    utility%  = 100 * (1 - cost / m)
    privacy%  = 100 * |Z| / n
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from src.core.lrt import BeaconConstants, ReleaseState
from src.core.threat import ThreatModel, score_and_cover
from src.data.panel import BEACON, GenotypePanel

logger = logging.getLogger(__name__)


def defense_cost(alpha: float, noise_l1: float, n_masked: int) -> float:
    return alpha * noise_l1 + (1.0 - alpha) * n_masked


def objective_value(alpha: float, w: float, noise_l1: float, n_masked: int, n_covered: int) -> float:
    return defense_cost(alpha, noise_l1, n_masked) - w * n_covered


def utility_pct(alpha: float, noise_l1: float, n_masked: int, m: int) -> float:
    return 100.0 * (1.0 - defense_cost(alpha, noise_l1, n_masked) / m)


@dataclass(eq=False)
class DefenseSolution:
    """Masks, flips/noise and the metrics they achieve under one threat model."""

    method: str
    mode: str
    alpha: float
    w: float
    model: ThreatModel
    flips: np.ndarray
    masks: np.ndarray
    delta: np.ndarray
    noise_l1: float
    objective: float
    covered: np.ndarray
    threshold: float
    m: int
    feasible: bool = True
    trace: List[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.covered.size

    @property
    def n_covered(self) -> int:
        return int(self.covered.sum())

    @property
    def cost(self) -> float:
        return defense_cost(self.alpha, self.noise_l1, self.masks.size)

    @property
    def utility_pct(self) -> float:
        return utility_pct(self.alpha, self.noise_l1, self.masks.size, self.m)

    @property
    def privacy_pct(self) -> float:
        return 100.0 * self.n_covered / self.n

    def summary(self) -> dict:
        return {
            "method": self.method,
            "alpha": self.alpha,
            "w": self.w,
            "threat": self.model.label,
            "utility_pct": self.utility_pct,
            "privacy_pct": self.privacy_pct,
            "objective": self.objective,
            "n_masked": int(self.masks.size),
            "n_flipped": int(self.flips.size),
            "noise_l1": self.noise_l1,
            "feasible": self.feasible,
        }

    def to_dict(self) -> dict:
        record = self.summary()
        record.update({
            "mode": self.mode,
            "m": self.m,
            "threat_model": self.model.to_dict(),
            "flips": [int(j) for j in self.flips],
            "masks": [int(j) for j in self.masks],
            "delta": [float(v) for v in self.delta] if self.mode != BEACON else [],
            "covered": [int(i) for i in np.flatnonzero(self.covered)],
            "threshold": self.threshold,
            "extra": {k: v for k, v in self.extra.items() if isinstance(v, (int, float, str, bool))},
        })
        return record


def evaluate_solution(
    panel: GenotypePanel,
    state: ReleaseState,
    model: ThreatModel,
    alpha: float,
    w: float,
    consts: Optional[BeaconConstants] = None,
    method: str = "",
    feasible: bool = True,
    trace: Optional[List[dict]] = None,
    extra: Optional[dict] = None,
) -> DefenseSolution:
    """Score `state` from scratch and package it as a DefenseSolution."""
    state.validate()
    report, _, _ = score_and_cover(panel, state, model, consts)
    noise = state.noise_l1()
    masks = state.mask_indices()
    delta = np.where(state.masked, 0.0, state.delta)
    return DefenseSolution(
        method=method,
        mode=state.mode,
        alpha=alpha,
        w=w,
        model=model,
        flips=state.flip_indices(),
        masks=masks,
        delta=delta,
        noise_l1=noise,
        objective=objective_value(alpha, w, noise, masks.size, report.size),
        covered=report.covered,
        threshold=report.threshold,
        m=panel.m,
        feasible=feasible,
        trace=trace or [],
        extra=extra or {},
    )


def save_solution(solution: DefenseSolution, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(solution.to_dict(), indent=2), encoding="utf-8")
    logger.info(f"Solution written to {path}")
    return path


def load_solution(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Solution file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"Invalid JSON in solution file: {e}")


def state_from_record(panel: GenotypePanel, record: dict) -> ReleaseState:
    """Rebuild the release state stored in a solution record."""
    delta = record.get("delta") or None
    return ReleaseState.for_panel(
        panel,
        flips=record.get("flips", []),
        masks=record.get("masks", []),
        delta=np.asarray(delta, dtype=np.float64) if delta else None,
    )
