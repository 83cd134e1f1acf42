"""
Greedy flip/mask defense for Beacon releases (SPG-B) and its LD-hardened variant (SPG-LD).

Each iteration picks the (SNV, action) with the largest average marginal score gain per
unit cost over the individuals not yet protected:

    flip:  |T_j| * (B_j - A_j) / (alpha * |P|)
    mask:  |T_j| * (-A_j)      / ((1 - alpha) * |P|)

Under the adaptive attacker the gain of the lowest-K reference individuals is
subtracted, since their scores move the threshold. SPG-LD divides the gains by
|N_LD(j)| and applies each action to the whole neighbourhood.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from src.core.errors import ParameterError
from src.core.ld import LdIndex
from src.core.lrt import FLIP, MASK, BeaconConstants, ReleaseState, beacon_contributions
from src.core.solution import DefenseSolution, evaluate_solution
from src.core.threat import ThreatModel, lowest_k_members, threshold_for
from src.data.panel import BEACON, GenotypePanel

logger = logging.getLogger(__name__)

BOTH = "both"
FLIP_ONLY = "flip"
MASK_ONLY = "mask"
RESTRICT_MODES = (BOTH, FLIP_ONLY, MASK_ONLY)


@dataclass
class SpgbConfig:
    alpha: float = 0.9
    w: float = 1.0
    model: ThreatModel = field(default_factory=ThreatModel)
    restrict_mode: str = BOTH
    adaptive_positivity: Optional[bool] = None
    ld_defense: bool = False
    ld_index: Optional[LdIndex] = None
    force_propagation: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError("alpha", self.alpha, "in (0, 1)")
        if self.w < 0:
            raise ParameterError("w", self.w, ">= 0")
        if self.restrict_mode not in RESTRICT_MODES:
            raise ParameterError("restrict_mode", self.restrict_mode, "both, flip or mask")
        if self.ld_defense and self.ld_index is None:
            raise ParameterError("ld_index", None, "an LD index when ld_defense is set")

    @classmethod
    def from_config(cls, section: dict, model: Optional[ThreatModel] = None, ld_index: Optional[LdIndex] = None) -> "SpgbConfig":
        return cls(
            alpha=section.get("alpha", 0.9),
            w=section.get("w", 1.0),
            model=model or ThreatModel(),
            restrict_mode=section.get("restrict_mode", BOTH),
            adaptive_positivity=section.get("adaptive_positivity"),
            ld_defense=section.get("ld_defense", False) and ld_index is not None,
            ld_index=ld_index,
            force_propagation=section.get("force_propagation", False),
        )

    @property
    def positivity(self) -> bool:
        if self.adaptive_positivity is None:
            return self.model.is_adaptive
        return self.adaptive_positivity


@dataclass
class GreedyResult:
    """Full greedy trajectory: the action sequence and one snapshot per step."""

    actions: List[Tuple[int, str]]
    snapshots: List[dict]
    best_step: int
    final_covered: np.ndarray
    exhausted: bool

    def best_step_for(self, alpha: float, w: float) -> int:
        """Step with the lowest objective for another (alpha, w); later steps win ties."""
        best_step, best_u = 0, None
        for snap in self.snapshots:
            u = alpha * snap["n_flipped"] + (1.0 - alpha) * snap["n_masked"] - w * snap["n_covered"]
            if best_u is None or u <= best_u:
                best_step, best_u = snap["step"], u
        return best_step

    def actions_until(self, step: int) -> Tuple[List[int], List[int]]:
        flips = [j for j, kind in self.actions[:step] if kind == FLIP]
        masks = [j for j, kind in self.actions[:step] if kind == MASK]
        return flips, masks


def _covered_now(scores: np.ndarray, ref_scores: np.ndarray, model: ThreatModel) -> np.ndarray:
    return scores >= threshold_for(model, ref_scores)


def greedy_trajectory(panel: GenotypePanel, consts: BeaconConstants, cfg: SpgbConfig) -> GreedyResult:
    """
    Run the greedy loop until every dataset individual is protected or no candidate
    is left, recording the objective after each step.

    Coverage is updated from the tentative action sets, and in fixed-threshold mode a
    protected individual stays protected. Under the adaptive model without the
    positivity restriction coverage can shrink; best-tracking absorbs that.
    """
    if panel.mode != BEACON:
        raise ParameterError("panel", panel.mode, "a beacon panel")
    model = cfg.model
    alpha, w = cfg.alpha, cfg.w
    d = panel.d
    d_ref = panel.d_ref

    state = ReleaseState.for_panel(panel)
    contrib = beacon_contributions(consts, state)
    scores = d @ contrib
    ref_scores = d_ref @ contrib

    delta_flip = consts.delta_flip
    delta_mask = consts.delta_mask
    eligible = (state.x > 0.5) & ~consts.degenerate
    allow_flip = cfg.restrict_mode in (BOTH, FLIP_ONLY)
    allow_mask = cfg.restrict_mode in (BOTH, MASK_ONLY)
    if cfg.ld_defense:
        ld_scale = np.maximum(cfg.ld_index.sizes(), 1).astype(np.float64)
    else:
        ld_scale = np.ones(panel.m)
    positivity = cfg.positivity and model.is_adaptive

    covered = _covered_now(scores, ref_scores, model)
    uncovered_counts = d[~covered].sum(axis=0, dtype=np.int64)
    actioned = np.zeros(panel.m, dtype=bool)
    n_flip = n_mask = 0

    actions: List[Tuple[int, str]] = []
    snapshots = [{"step": 0, "n_flipped": 0, "n_masked": 0, "n_covered": int(covered.sum()),
                  "objective": -w * int(covered.sum())}]
    best_step, best_u = 0, snapshots[0]["objective"]
    exhausted = False

    while not covered.all():
        n_uncovered = int((~covered).sum())
        coef = uncovered_counts / n_uncovered
        if model.is_adaptive:
            members = lowest_k_members(ref_scores, model.k)
            coef = coef - d_ref[members].sum(axis=0, dtype=np.int64) / members.size
        flip_gain = coef * delta_flip / (alpha * ld_scale)
        mask_gain = coef * delta_mask / ((1.0 - alpha) * ld_scale)

        available = eligible & ~actioned
        flip_ok = available & allow_flip
        mask_ok = available & allow_mask
        if not model.is_adaptive:
            flip_ok &= uncovered_counts > 0
            mask_ok &= uncovered_counts > 0
        if positivity:
            flip_ok &= flip_gain > 0
            mask_ok &= mask_gain > 0
        if not (flip_ok.any() or mask_ok.any()):
            exhausted = True
            break

        flip_scan = np.where(flip_ok, flip_gain, -np.inf)
        mask_scan = np.where(mask_ok, mask_gain, -np.inf)
        jf = int(np.argmax(flip_scan))
        jm = int(np.argmax(mask_scan))
        if flip_ok.any() and (not mask_ok.any() or flip_scan[jf] >= mask_scan[jm]):
            j, kind, gains = jf, FLIP, flip_gain
        else:
            j, kind, gains = jm, MASK, mask_gain

        targets = [j]
        if cfg.ld_defense:
            for k in cfg.ld_index.neighbors(j):
                if not available[k] or k == j:
                    continue
                if positivity and not cfg.force_propagation and gains[k] <= 0:
                    continue
                targets.append(int(k))

        for t in targets:
            actioned[t] = True
            change = delta_flip[t] if kind == FLIP else delta_mask[t]
            scores += d[:, t] * change
            ref_scores += d_ref[:, t] * change
            actions.append((t, kind))
            if kind == FLIP:
                n_flip += 1
            else:
                n_mask += 1

        now = _covered_now(scores, ref_scores, model)
        if not model.is_adaptive:
            now |= covered
        gained = now & ~covered
        lost = covered & ~now
        if gained.any():
            uncovered_counts -= d[gained].sum(axis=0, dtype=np.int64)
        if lost.any():
            uncovered_counts += d[lost].sum(axis=0, dtype=np.int64)
        covered = now

        u = alpha * n_flip + (1.0 - alpha) * n_mask - w * int(covered.sum())
        snapshots.append({"step": len(actions), "n_flipped": n_flip, "n_masked": n_mask,
                          "n_covered": int(covered.sum()), "objective": u})
        logger.debug(f"SPG-B step {len(actions)}: {kind} SNV {j} (+{len(targets) - 1} LD), "
                     f"covered {int(covered.sum())}/{panel.n}, U={u:.4f}")
        if u <= best_u:
            best_u, best_step = u, len(actions)

    return GreedyResult(actions=actions, snapshots=snapshots, best_step=best_step,
                        final_covered=covered, exhausted=exhausted)


def spgb(panel: GenotypePanel, consts: BeaconConstants, cfg: SpgbConfig, method: Optional[str] = None) -> DefenseSolution:
    """Best-objective solution along the greedy trajectory."""
    if method is None:
        method = "spg-ld" if cfg.ld_defense else "spg-b"
        if cfg.restrict_mode != BOTH:
            method += f"-{cfg.restrict_mode}"
    logger.info(f"Running {method}: m={panel.m}, n={panel.n}, alpha={cfg.alpha}, w={cfg.w}, {cfg.model.label}")

    result = greedy_trajectory(panel, consts, cfg)
    flips, masks = result.actions_until(result.best_step)
    state = ReleaseState.for_panel(panel, flips=flips, masks=masks)
    solution = evaluate_solution(
        panel, state, cfg.model, cfg.alpha, cfg.w, consts=consts, method=method,
        trace=result.snapshots, extra={"steps": len(result.actions), "best_step": result.best_step},
    )
    logger.info(
        f"{method} done: |F|={solution.flips.size}, |M|={solution.masks.size}, "
        f"privacy {solution.privacy_pct:.2f}%, utility {solution.utility_pct:.4f}%, U={solution.objective:.4f}"
    )
    return solution


def spg_ld(panel: GenotypePanel, consts: BeaconConstants, cfg: SpgbConfig) -> DefenseSolution:
    """SPG-B with LD-scaled gains and neighbourhood-wide actions."""
    if cfg.ld_index is None:
        raise ParameterError("ld_index", None, "an LD index for SPG-LD")
    if not cfg.ld_defense:
        cfg = replace(cfg, ld_defense=True)
    return spgb(panel, consts, cfg)
