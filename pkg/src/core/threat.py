"""
Attacker models: fixed threshold, adaptive (lowest-K-percentile) threshold, and the
LD correlation attack that re-infers suppressed Beacon responses.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from src.core.errors import ModeMismatchError, ParameterError
from src.core.ld import LdIndex, build_index
from src.core.lrt import BeaconConstants, ReleaseState, lrt_scores
from src.data.panel import BEACON, DATASET, REFERENCE, GenotypePanel

logger = logging.getLogger(__name__)

FIXED = "fixed"
ADAPTIVE = "adaptive"


@dataclass
class ThreatModel:
    """Attacker threshold rule plus optional LD-attack parameters."""

    kind: str = FIXED
    theta: float = 0.0
    k: float = 10.0
    ld_aware: bool = False
    t_ld: float = 0.2
    window: int = 250
    quorum: float = 0.75

    def __post_init__(self):
        if self.kind not in (FIXED, ADAPTIVE):
            raise ParameterError("model", self.kind, "fixed or adaptive")
        if not 0.0 < self.k <= 100.0:
            raise ParameterError("k", self.k, "in (0, 100]")
        if not 0.0 < self.quorum <= 1.0:
            raise ParameterError("quorum", self.quorum, "in (0, 1]")
        if self.window < 0:
            raise ParameterError("window", self.window, ">= 0")

    @classmethod
    def fixed(cls, theta: float, **kwargs) -> "ThreatModel":
        return cls(kind=FIXED, theta=theta, **kwargs)

    @classmethod
    def adaptive(cls, k: float, **kwargs) -> "ThreatModel":
        return cls(kind=ADAPTIVE, k=k, **kwargs)

    @classmethod
    def from_config(cls, section: dict) -> "ThreatModel":
        return cls(
            kind=section.get("model", FIXED),
            theta=section.get("theta", 0.0),
            k=section.get("k", 10.0),
            ld_aware=section.get("ld", False),
            t_ld=section.get("t_ld", 0.2),
            window=section.get("window", 250),
            quorum=section.get("quorum", 0.75),
        )

    @property
    def is_adaptive(self) -> bool:
        return self.kind == ADAPTIVE

    @property
    def label(self) -> str:
        base = f"adaptive(K={self.k:g})" if self.is_adaptive else f"fixed(theta={self.theta:g})"
        if self.ld_aware:
            return f"{base}+ld(t_ld={self.t_ld:g},window={self.window},quorum={self.quorum:g})"
        return base

    def to_dict(self) -> dict:
        return {
            "model": self.kind,
            "theta": self.theta,
            "k": self.k,
            "ld": self.ld_aware,
            "t_ld": self.t_ld,
            "window": self.window,
            "quorum": self.quorum,
        }


@dataclass(eq=False)
class CoverageReport:
    """Protected set Z with the threshold that produced it."""

    covered: np.ndarray
    threshold: float
    margins: np.ndarray

    @property
    def size(self) -> int:
        return int(self.covered.sum())

    @property
    def privacy_pct(self) -> float:
        return 100.0 * self.size / self.covered.size

    def covered_indices(self) -> np.ndarray:
        return np.flatnonzero(self.covered)


def lowest_k_members(ref_scores: np.ndarray, k: float) -> np.ndarray:
    """
    Indices of the reference individuals in the lowest K percentile: ceil(K/100 * n_ref)
    of them (at least one), ordered by score then index.
    """
    ref_scores = np.asarray(ref_scores, dtype=np.float64)
    if ref_scores.size == 0:
        raise ParameterError("ref_scores", "empty", "at least one reference score")
    if not 0.0 < k <= 100.0:
        raise ParameterError("k", k, "in (0, 100]")
    count = max(1, math.ceil(k * ref_scores.size / 100.0 - 1e-9))
    order = np.lexsort((np.arange(ref_scores.size), ref_scores))
    return order[:count]


def adaptive_threshold(ref_scores: np.ndarray, k: float) -> float:
    """Mean score of the lowest-K-percentile reference individuals."""
    members = lowest_k_members(ref_scores, k)
    return float(np.mean(np.asarray(ref_scores, dtype=np.float64)[members]))


def threshold_for(model: ThreatModel, ref_scores: Optional[np.ndarray]) -> float:
    if model.is_adaptive:
        if ref_scores is None:
            raise ParameterError("ref_scores", None, "reference scores for the adaptive model")
        return adaptive_threshold(ref_scores, model.k)
    return float(model.theta)


def coverage(
    panel: GenotypePanel,
    state: ReleaseState,
    model: ThreatModel,
    scores_d: np.ndarray,
    scores_ref: Optional[np.ndarray] = None,
) -> CoverageReport:
    """Z = {i in D : L_i - theta >= 0} for scores computed under `state`."""
    theta = threshold_for(model, scores_ref)
    margins = np.asarray(scores_d, dtype=np.float64) - theta
    return CoverageReport(covered=margins >= 0.0, threshold=theta, margins=margins)


def attacker_index(panel: GenotypePanel, model: ThreatModel) -> LdIndex:
    """LD index the correlation attacker builds from the released panel."""
    return _cached_index(panel, model.window, model.t_ld)


@lru_cache(maxsize=8)
def _cached_index(panel: GenotypePanel, window: int, t_ld: float) -> LdIndex:
    return build_index(panel, window, t_ld)


def score_and_cover(
    panel: GenotypePanel,
    state: ReleaseState,
    model: ThreatModel,
    consts: Optional[BeaconConstants] = None,
    ld_index: Optional[LdIndex] = None,
) -> Tuple[CoverageReport, np.ndarray, np.ndarray]:
    """
    Score dataset and reference under `state` and compute coverage.

    An LD-aware model on a beacon release scores the attacker's reconstructed release
    instead; `ld_index` defaults to the one built from the model's window and t_LD.
    AAF releases are always scored as released.
    """
    if model.ld_aware and state.mode == BEACON:
        index = ld_index if ld_index is not None else attacker_index(panel, model)
        state = apply_inference(state, ld_infer(state, index, quorum=model.quorum))
    scores_d = lrt_scores(panel, state, consts, DATASET)
    scores_ref = lrt_scores(panel, state, consts, REFERENCE)
    return coverage(panel, state, model, scores_d, scores_ref), scores_d, scores_ref


def ld_infer(
    state: ReleaseState,
    ld_index: LdIndex,
    suspects: Optional[Iterable[int]] = None,
    quorum: float = 0.75,
) -> Dict[int, bool]:
    """
    Infer Beacon responses of suspected SNVs from their correlated neighbours.

    Suspects default to the SNVs actually flipped or masked. A suspect j with a
    non-empty N_LD(j) is inferred yes iff at least `quorum` of N_LD(j) is released
    as yes; suspects without neighbours are left out of the result.
    """
    if state.mode != BEACON:
        raise ModeMismatchError("the LD attack applies to beacon releases")
    if suspects is None:
        suspects = np.flatnonzero(state.flipped | state.masked)
    yes = (state.released() > 0.5) & ~state.masked

    inferred = {}
    for j in suspects:
        neighbors = ld_index.neighbors(int(j))
        if neighbors.size == 0:
            continue
        inferred[int(j)] = bool(yes[neighbors].mean() >= quorum - 1e-12)
    return inferred


def apply_inference(state: ReleaseState, inferred: Dict[int, bool]) -> ReleaseState:
    """
    Release as the attacker reconstructs it: every inferred SNV is unmasked and takes
    its inferred response, every other SNV keeps what was published.
    """
    x = state.released().copy()
    masked = state.masked.copy()
    for j, is_yes in inferred.items():
        x[j] = 1.0 if is_yes else 0.0
        masked[j] = False
    view = ReleaseState(mode=state.mode, x=x, masked=masked,
                        flipped=np.zeros(state.m, dtype=bool), delta=state.delta.copy())
    view.validate()
    return view


@dataclass(eq=False)
class LdAttackReport:
    """Outcome of the LD correlation attack (worst case: only actioned SNVs are inferred)."""

    inferred: Dict[int, bool]
    recovered: np.ndarray
    coverage: CoverageReport
    scores: np.ndarray
    label: str = field(default="worst-case: correlation attack on actioned SNVs only")


def ld_attack(
    panel: GenotypePanel,
    consts: BeaconConstants,
    state: ReleaseState,
    model: ThreatModel,
    ld_index: LdIndex,
) -> LdAttackReport:
    """Run ld_infer on the actioned SNVs and rescore with the attacker's view."""
    inferred = ld_infer(state, ld_index, quorum=model.quorum)
    truth = state.x > 0.5
    recovered = np.array(sorted(j for j, is_yes in inferred.items() if is_yes == truth[j]), dtype=np.int64)
    view = apply_inference(state, inferred)
    report, scores, _ = score_and_cover(panel, view, replace(model, ld_aware=False), consts)
    logger.info(
        f"LD attack: {len(inferred)} SNVs inferred, {recovered.size} recovered, "
        f"privacy {report.privacy_pct:.2f}% under {model.label}"
    )
    return LdAttackReport(inferred=inferred, recovered=recovered, coverage=report, scores=scores)
