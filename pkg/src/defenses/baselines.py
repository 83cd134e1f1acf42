"""
Reference defenses: SF/SFM, random flipping, DP-beacon, MIG and the AAF baselines
(linkage-equilibrium release, noise only, masking only).

All of them report through evaluate_solution so their metrics are comparable with
SPG-B and SPG-R.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from src.core.errors import ModeMismatchError, ParameterError
from src.core.ld import LdIndex
from src.core.lrt import (
    FLIP,
    MASK,
    BeaconConstants,
    ReleaseState,
    aaf_log_terms,
    beacon_contributions,
    marginal_contributions,
)
from src.core.solution import DefenseSolution, evaluate_solution
from src.core.threat import ThreatModel, threshold_for
from src.data.panel import AAF, BEACON, GenotypePanel
from src.defenses.spgb import SpgbConfig, greedy_trajectory
from src.defenses.spgr import SpgrConfig, spgr_search

logger = logging.getLogger(__name__)

SF = "sf"
SFM = "sfm"
RF = "rf"
DP_BEACON = "dp-beacon"
MIG = "mig"
MASK_ONLY = "mask-only"
LINKAGE = "linkage"
DP_LAPLACE = "dp-laplace"

BEACON_METHODS = (SF, SFM, RF, DP_BEACON, MIG)
AAF_METHODS = (MASK_ONLY, LINKAGE, DP_LAPLACE)


@dataclass
class BaselineConfig:
    method: str = SF
    action: str = FLIP
    model: ThreatModel = field(default_factory=ThreatModel)
    alpha: float = 0.9
    w: float = 1.0
    p: float = 0.5
    epsilon: float = 1.0
    min_privacy_pct: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.method not in BEACON_METHODS + AAF_METHODS:
            raise ParameterError("method", self.method, ", ".join(BEACON_METHODS + AAF_METHODS))
        if self.action not in (FLIP, MASK):
            raise ParameterError("action", self.action, "flip or mask")
        if not 0.0 <= self.p <= 1.0:
            raise ParameterError("p", self.p, "in [0, 1]")
        if self.epsilon < 0:
            raise ParameterError("epsilon", self.epsilon, ">= 0")
        if not 0.0 <= self.min_privacy_pct <= 100.0:
            raise ParameterError("min_privacy_pct", self.min_privacy_pct, "in [0, 100]")
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError("alpha", self.alpha, "in (0, 1)")

    @classmethod
    def from_config(cls, section: dict, model: Optional[ThreatModel] = None) -> "BaselineConfig":
        return cls(
            method=section.get("method", SF),
            action=section.get("action", FLIP),
            model=model or ThreatModel(),
            alpha=section.get("alpha", 0.9),
            w=section.get("w", 1.0),
            p=section.get("p", 0.5),
            epsilon=section.get("epsilon", 1.0),
            min_privacy_pct=section.get("min_privacy_pct", 0.0),
            seed=section.get("seed", 0),
        )

    @property
    def label(self) -> str:
        if self.method in (SF, SFM, RF, DP_BEACON, MIG):
            return f"{self.method}-{self.action}"
        return self.method


def _require(panel: GenotypePanel, mode: str, method: str):
    if panel.mode != mode:
        raise ModeMismatchError(f"{method} needs a {mode} panel, got {panel.mode!r}")


def _report(panel, state, cfg: BaselineConfig, consts=None, feasible=True, extra=None) -> DefenseSolution:
    solution = evaluate_solution(panel, state, cfg.model, cfg.alpha, cfg.w, consts=consts,
                                 method=cfg.label, feasible=feasible, extra=extra)
    logger.info(
        f"{cfg.label} done: |F|={solution.flips.size}, |M|={solution.masks.size}, "
        f"privacy {solution.privacy_pct:.2f}%, utility {solution.utility_pct:.4f}%"
    )
    return solution


def _action_state(panel: GenotypePanel, chosen, action: str) -> ReleaseState:
    if action == FLIP:
        return ReleaseState.for_panel(panel, flips=chosen)
    return ReleaseState.for_panel(panel, masks=chosen)


def run_sf(panel: GenotypePanel, consts: BeaconConstants, cfg: BaselineConfig) -> DefenseSolution:
    """
    Action yes-SNVs by decreasing total LRT lift until everyone is protected, then drop
    actions one at a time while nobody protected loses protection.

    SF builds the set against the fixed threshold; SFM uses the configured threat model,
    so it follows the adaptive threshold when one is set.
    """
    _require(panel, BEACON, cfg.label)
    build_model = cfg.model if cfg.method == SFM else ThreatModel.fixed(cfg.model.theta)
    d, d_ref = panel.d, panel.d_ref
    change = consts.delta_flip if cfg.action == FLIP else consts.delta_mask

    state = ReleaseState.for_panel(panel)
    eligible = np.flatnonzero((state.x > 0.5) & ~consts.degenerate)
    power = change[eligible] * d[:, eligible].sum(axis=0)
    order = eligible[np.lexsort((eligible, -power))]

    contrib = beacon_contributions(consts, state)
    scores = d @ contrib
    ref_scores = d_ref @ contrib

    def covered_now():
        return scores >= threshold_for(build_model, ref_scores)

    chosen = []
    covered = covered_now()
    for j in order:
        if covered.all():
            break
        scores += d[:, j] * change[j]
        ref_scores += d_ref[:, j] * change[j]
        chosen.append(int(j))
        covered = covered_now()

    target = covered.copy()
    changed = True
    while changed:
        changed = False
        for j in reversed(list(chosen)):
            scores -= d[:, j] * change[j]
            ref_scores -= d_ref[:, j] * change[j]
            if (covered_now() | ~target).all():
                chosen.remove(j)
                changed = True
                logger.debug(f"{cfg.label}: dropped SNV {j} in local search")
            else:
                scores += d[:, j] * change[j]
                ref_scores += d_ref[:, j] * change[j]

    return _report(panel, _action_state(panel, sorted(chosen), cfg.action), cfg, consts)


def run_rf(panel: GenotypePanel, consts: BeaconConstants, cfg: BaselineConfig) -> DefenseSolution:
    """Action each SNV carried by exactly one dataset individual with probability p."""
    _require(panel, BEACON, cfg.label)
    unique = np.flatnonzero(panel.d.sum(axis=0) == 1)
    rng = np.random.default_rng(cfg.seed)
    chosen = unique[rng.random(unique.size) < cfg.p]
    logger.debug(f"RF: {chosen.size} of {unique.size} unique-allele SNVs actioned (p={cfg.p})")
    return _report(panel, _action_state(panel, chosen, cfg.action), cfg, consts,
                   extra={"unique_snvs": int(unique.size)})


def dp_flip_probability(epsilon: float) -> float:
    """Randomized-response probability 1 / (1 + e^eps)."""
    if epsilon < 0:
        raise ParameterError("epsilon", epsilon, ">= 0")
    tail = math.exp(-epsilon)
    return tail / (1.0 + tail)


def run_dp_beacon(panel: GenotypePanel, consts: BeaconConstants, cfg: BaselineConfig) -> DefenseSolution:
    """Flip (or mask) every yes-response independently with probability 1 / (1 + e^eps)."""
    _require(panel, BEACON, cfg.label)
    prob = dp_flip_probability(cfg.epsilon)
    yes = np.flatnonzero(panel.beacon_response() > 0)
    rng = np.random.default_rng(cfg.seed)
    chosen = yes[rng.random(yes.size) < prob]
    return _report(panel, _action_state(panel, chosen, cfg.action), cfg, consts,
                   extra={"flip_probability": prob, "epsilon": cfg.epsilon})


def run_mig(panel: GenotypePanel, consts: BeaconConstants, cfg: BaselineConfig) -> DefenseSolution:
    """
    Greedy SPG-B steps run until everyone is protected. Reports feasible=False when
    the candidates run out first (e.g. mask-only against a positive threshold).
    """
    _require(panel, BEACON, cfg.label)
    greedy_cfg = SpgbConfig(alpha=cfg.alpha, w=cfg.w, model=cfg.model, restrict_mode=cfg.action)
    result = greedy_trajectory(panel, consts, greedy_cfg)
    flips, masks = result.actions_until(len(result.actions))
    feasible = bool(result.final_covered.all())
    if not feasible:
        logger.warning(
            f"{cfg.label}: full protection unreachable, {int(result.final_covered.sum())}/{panel.n} covered "
            f"after {len(result.actions)} actions"
        )
    state = ReleaseState.for_panel(panel, flips=flips, masks=masks)
    solution = evaluate_solution(panel, state, cfg.model, cfg.alpha, cfg.w, consts=consts, method=cfg.label,
                                 feasible=feasible, trace=result.snapshots)
    logger.info(f"{cfg.label} done: |F|={len(flips)}, |M|={len(masks)}, privacy {solution.privacy_pct:.2f}%")
    return solution


def run_linkage(panel: GenotypePanel, ld_index: LdIndex, cfg: BaselineConfig) -> DefenseSolution:
    """
    Release a set of mutually LD-independent SNVs, adding them by ascending |average
    mask marginal| as long as privacy stays at or above cfg.min_privacy_pct. Everything
    else is masked.
    """
    _require(panel, AAF, cfg.label)
    if ld_index.m != panel.m:
        raise ParameterError("ld_index", f"m={ld_index.m}", f"m={panel.m}")
    full = ReleaseState.for_panel(panel)
    key = np.abs(marginal_contributions(panel, None, full, MASK).average(panel.d))
    order = np.lexsort((np.arange(panel.m), key))

    a, b = aaf_log_terms(panel.p_ref, full.released())
    d, d_ref = panel.d, panel.d_ref
    scores = np.zeros(panel.n)
    ref_scores = np.zeros(panel.n_ref)
    released = np.zeros(panel.m, dtype=bool)
    need = math.ceil(cfg.min_privacy_pct * panel.n / 100.0 - 1e-9)

    for j in order:
        if released[ld_index.neighbors(j)].any():
            continue
        col = d[:, j] * (a[j] - b[j]) + b[j]
        ref_col = d_ref[:, j] * (a[j] - b[j]) + b[j]
        scores += col
        ref_scores += ref_col
        if int((scores >= threshold_for(cfg.model, ref_scores)).sum()) >= need:
            released[j] = True
        else:
            scores -= col
            ref_scores -= ref_col

    logger.debug(f"Linkage: released {int(released.sum())}/{panel.m} SNVs")
    state = ReleaseState.for_panel(panel, masks=np.flatnonzero(~released))
    return _report(panel, state, cfg, extra={"released": int(released.sum())})


def run_dp_laplace(panel: GenotypePanel, cfg: SpgrConfig) -> DefenseSolution:
    """Noise only: SPG-R with masking disabled and no noise-free worker."""
    noise_cfg = replace(cfg, masking=False, noise=True, include_noiseless=False)
    return spgr_search(panel, noise_cfg, method=DP_LAPLACE).solution


def run_mask_only(panel: GenotypePanel, cfg: SpgrConfig) -> DefenseSolution:
    """Masking only: SPG-R's noise-free trajectory."""
    mask_cfg = replace(cfg, masking=True, noise=False)
    return spgr_search(panel, mask_cfg, method=MASK_ONLY).solution


def run_baseline(
    panel: GenotypePanel,
    cfg: BaselineConfig,
    consts: Optional[BeaconConstants] = None,
    ld_index: Optional[LdIndex] = None,
    spgr_cfg: Optional[SpgrConfig] = None,
) -> DefenseSolution:
    """Dispatch on cfg.method."""
    logger.info(f"Running baseline {cfg.label} under {cfg.model.label}")
    if cfg.method in BEACON_METHODS:
        if consts is None:
            raise ParameterError("consts", None, "beacon constants")
        runner = {SF: run_sf, SFM: run_sf, RF: run_rf, DP_BEACON: run_dp_beacon, MIG: run_mig}[cfg.method]
        return runner(panel, consts, cfg)
    if cfg.method == LINKAGE:
        if ld_index is None:
            raise ParameterError("ld_index", None, "an LD index for the linkage baseline")
        return run_linkage(panel, ld_index, cfg)
    spgr_cfg = spgr_cfg or SpgrConfig(alpha=cfg.alpha, w=cfg.w, model=cfg.model, seed=cfg.seed)
    if cfg.method == DP_LAPLACE:
        return run_dp_laplace(panel, spgr_cfg)
    return run_mask_only(panel, spgr_cfg)
