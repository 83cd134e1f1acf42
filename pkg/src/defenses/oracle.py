"""
Exhaustive solvers for tiny instances, used as ground truth for the heuristics.

Every enumerated SNV has a small table of options; an option fixes the SNV's score
contribution for carriers and non-carriers and its cost. Combinations are visited in
lexicographic order of the option vector (first SNV most significant), split into
chunks that share a leading prefix and run on a thread pool. Ties go to the
lexicographically smallest vector.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.core.errors import ModeMismatchError, OracleLimitError, ParameterError
from src.core.lrt import BeaconConstants, ReleaseState, aaf_log_terms, beacon_contributions
from src.core.solution import DefenseSolution, evaluate_solution
from src.core.threat import ThreatModel, lowest_k_members
from src.data.panel import AAF, AAF_LOWER, AAF_UPPER, BEACON, GenotypePanel
from src.defenses.spgb import BOTH, FLIP_ONLY, MASK_ONLY, RESTRICT_MODES

logger = logging.getLogger(__name__)

# Beacon option codes.
NONE, FLIP_OPT, MASK_OPT = 0, 1, 2
# AAF option codes; codes from GRID_START on index the noise grid.
KEEP, MASK_AAF, GRID_START = 0, 1, 2
MIN_GRID = 2

_CHUNK_ELEMENTS = 4_000_000


@dataclass
class OracleLimits:
    max_m_beacon: int = 12
    max_m_aaf: int = 8
    grid: int = 21
    max_combinations: int = 20_000_000
    threads: int = 1

    def __post_init__(self):
        if self.grid < MIN_GRID:
            raise ParameterError("grid", self.grid, f">= {MIN_GRID}")
        if (GRID_START + MIN_GRID) ** self.max_m_aaf > self.max_combinations:
            raise ParameterError("max_combinations", self.max_combinations,
                                 f">= {(GRID_START + MIN_GRID) ** self.max_m_aaf} to reach m={self.max_m_aaf}")

    @classmethod
    def from_config(cls, section: dict) -> "OracleLimits":
        return cls(
            max_m_beacon=section.get("max_m_beacon", 12),
            max_m_aaf=section.get("max_m_aaf", 8),
            grid=section.get("grid", 21),
            max_combinations=section.get("max_combinations", 20_000_000),
            threads=section.get("threads", 1),
        )

    def grid_for(self, m: int) -> int:
        """Largest grid up to `grid` whose (grid + 2) ** m combinations fit the cap."""
        levels = self.grid
        while levels > MIN_GRID and (GRID_START + levels) ** m > self.max_combinations:
            levels -= 1
        return levels


@dataclass(eq=False)
class _OptionTable:
    """Per enumerated SNV and option: carrier value, non-carrier value, cost."""

    snvs: np.ndarray
    carrier: np.ndarray
    noncarrier: np.ndarray
    cost: np.ndarray

    @property
    def radix(self) -> int:
        return self.carrier.shape[1]


def _decode(codes: np.ndarray, k: int, radix: int) -> np.ndarray:
    digits = np.empty((codes.size, k), dtype=np.int64)
    rest = codes.copy()
    for j in range(k - 1, -1, -1):
        digits[:, j] = rest % radix
        rest //= radix
    return digits


def _chunk_best(
    panel: GenotypePanel,
    table: _OptionTable,
    base: np.ndarray,
    base_ref: np.ndarray,
    model: ThreatModel,
    w: float,
    cost_fn,
    start: int,
    stop: int,
) -> Tuple[float, int]:
    """Minimum objective and its code over codes [start, stop)."""
    k = table.snvs.size
    codes = np.arange(start, stop, dtype=np.int64)
    options = _decode(codes, k, table.radix)

    scores = np.tile(base, (codes.size, 1))
    ref_scores = np.tile(base_ref, (codes.size, 1))
    for pos, j in enumerate(table.snvs):
        on = table.carrier[pos, options[:, pos]][:, None]
        off = table.noncarrier[pos, options[:, pos]][:, None]
        scores += np.where(panel.d[:, j][None, :] > 0, on, off)
        ref_scores += np.where(panel.d_ref[:, j][None, :] > 0, on, off)

    if model.is_adaptive:
        count = lowest_k_members(np.zeros(panel.n_ref), model.k).size
        lowest = np.partition(ref_scores, count - 1, axis=1)[:, :count]
        theta = lowest.mean(axis=1)[:, None]
    else:
        theta = model.theta
    n_covered = (scores >= theta).sum(axis=1)
    objective = cost_fn(options) - w * n_covered
    best = int(np.argmin(objective))
    return float(objective[best]), int(codes[best])


def _enumerate(panel, table: _OptionTable, base, base_ref, model, w, cost_fn, threads: int) -> Tuple[float, np.ndarray]:
    k = table.snvs.size
    radix = table.radix
    total = radix ** k
    width = max(panel.n, panel.n_ref, 1)
    chunk = 1
    while chunk * radix <= total and chunk * radix * width <= _CHUNK_ELEMENTS:
        chunk *= radix
    starts = list(range(0, total, chunk))

    def run(start: int):
        return _chunk_best(panel, table, base, base_ref, model, w, cost_fn, start, min(start + chunk, total))

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(s) for s in starts]

    best_u, best_code = min(results, key=lambda r: (r[0], r[1]))
    logger.debug(f"Oracle enumerated {total} combinations in {len(starts)} chunks")
    return best_u, _decode(np.array([best_code]), k, radix)[0]


def _check_w(alpha: float, w: float):
    if not 0.0 < alpha < 1.0:
        raise ParameterError("alpha", alpha, "in (0, 1)")
    if w < 0:
        raise ParameterError("w", w, ">= 0")


def solve_beacon_exact(
    panel: GenotypePanel,
    consts: BeaconConstants,
    alpha: float,
    w: float,
    model: ThreatModel,
    limits: Optional[OracleLimits] = None,
    restrict_to: Optional[Sequence[int]] = None,
    actions: str = BOTH,
) -> DefenseSolution:
    """
    Global minimum of the objective over {none, flip, mask} for every yes-response SNV
    (optionally only those in `restrict_to`, and only the actions allowed by `actions`).
    """
    if panel.mode != BEACON:
        raise ModeMismatchError(f"beacon oracle needs a beacon panel, got {panel.mode!r}")
    _check_w(alpha, w)
    if actions not in RESTRICT_MODES:
        raise ParameterError("actions", actions, "both, flip or mask")
    limits = limits or OracleLimits()

    state = ReleaseState.for_panel(panel)
    candidates = np.flatnonzero((state.x > 0.5) & ~consts.degenerate)
    if restrict_to is not None:
        candidates = np.intersect1d(candidates, np.asarray(list(restrict_to), dtype=np.int64))
    if restrict_to is None and panel.m > limits.max_m_beacon:
        raise OracleLimitError(f"beacon oracle limited to m <= {limits.max_m_beacon}, got m={panel.m}")
    if candidates.size > limits.max_m_beacon:
        raise OracleLimitError(f"beacon oracle limited to {limits.max_m_beacon} candidate SNVs, got {candidates.size}")

    allowed = [NONE]
    if actions in (BOTH, FLIP_ONLY):
        allowed.append(FLIP_OPT)
    if actions in (BOTH, MASK_ONLY):
        allowed.append(MASK_OPT)
    values = {NONE: consts.a, FLIP_OPT: consts.b, MASK_OPT: np.zeros(panel.m)}
    table = _OptionTable(
        snvs=candidates,
        carrier=np.array([[values[o][j] for o in allowed] for j in candidates]).reshape(candidates.size, len(allowed)),
        noncarrier=np.zeros((candidates.size, len(allowed))),
        cost=np.zeros((candidates.size, len(allowed))),
    )
    allowed_arr = np.array(allowed)

    contrib = beacon_contributions(consts, state)
    contrib[candidates] = 0.0
    base = panel.d @ contrib
    base_ref = panel.d_ref @ contrib

    def cost_fn(options: np.ndarray) -> np.ndarray:
        codes = allowed_arr[options]
        return alpha * (codes == FLIP_OPT).sum(axis=1) + (1.0 - alpha) * (codes == MASK_OPT).sum(axis=1)

    logger.info(f"Beacon oracle: {candidates.size} candidate SNVs, {len(allowed) ** candidates.size} combinations")
    best_u, best = _enumerate(panel, table, base, base_ref, model, w, cost_fn, limits.threads)
    chosen = allowed_arr[best]
    flips = candidates[chosen == FLIP_OPT]
    masks = candidates[chosen == MASK_OPT]
    solution = evaluate_solution(
        panel, ReleaseState.for_panel(panel, flips=flips, masks=masks), model, alpha, w,
        consts=consts, method="oracle" if actions == BOTH else f"oracle-{actions}",
        extra={"candidates": int(candidates.size), "enumerated_objective": best_u},
    )
    logger.info(f"Beacon oracle optimum: U={solution.objective:.6f}, |F|={flips.size}, |M|={masks.size}")
    return solution


def noise_grid(levels: int) -> np.ndarray:
    """Released-frequency levels spanning the clip range."""
    return np.linspace(AAF_LOWER, AAF_UPPER, levels)


def solve_aaf_exact(
    panel: GenotypePanel,
    alpha: float,
    w: float,
    model: ThreatModel,
    limits: Optional[OracleLimits] = None,
) -> DefenseSolution:
    """
    Grid-relaxed optimum for an AAF release: every SNV is kept as is, masked, or
    released at one of the grid frequencies. Optimal only over that grid, which is
    coarsened until the enumeration fits `max_combinations`.
    """
    if panel.mode != AAF:
        raise ModeMismatchError(f"aaf oracle needs an aaf panel, got {panel.mode!r}")
    _check_w(alpha, w)
    limits = limits or OracleLimits()
    if panel.m > limits.max_m_aaf:
        raise OracleLimitError(f"aaf oracle limited to m <= {limits.max_m_aaf}, got m={panel.m}")
    grid = limits.grid_for(panel.m)
    radix = GRID_START + grid
    total = radix ** panel.m
    if grid < limits.grid:
        logger.warning(f"AAF oracle grid coarsened from {limits.grid} to {grid} levels for m={panel.m}")

    x = panel.released_aaf()
    levels = noise_grid(grid)
    m = panel.m
    y = np.empty((m, radix))
    y[:, KEEP] = x
    y[:, MASK_AAF] = 0.5
    y[:, GRID_START:] = levels[None, :]
    a, b = aaf_log_terms(np.repeat(panel.p_ref[:, None], radix, axis=1), y)
    a[:, MASK_AAF] = 0.0
    b[:, MASK_AAF] = 0.0
    cost = alpha * np.abs(y - x[:, None])
    cost[:, KEEP] = 0.0
    cost[:, MASK_AAF] = 1.0 - alpha
    table = _OptionTable(snvs=np.arange(m), carrier=a, noncarrier=b, cost=cost)

    def cost_fn(options: np.ndarray) -> np.ndarray:
        return cost[np.arange(m)[None, :], options].sum(axis=1)

    logger.info(f"AAF oracle: m={m}, grid={grid}, {total} combinations")
    best_u, best = _enumerate(panel, table, np.zeros(panel.n), np.zeros(panel.n_ref), model, w, cost_fn, limits.threads)
    masks = np.flatnonzero(best == MASK_AAF)
    delta = np.where(best >= GRID_START, y[np.arange(m), best] - x, 0.0)
    solution = evaluate_solution(
        panel, ReleaseState.for_panel(panel, masks=masks, delta=delta), model, alpha, w,
        method="oracle-aaf", extra={"grid": grid, "enumerated_objective": best_u},
    )
    logger.info(f"AAF oracle optimum: U={solution.objective:.6f}, |M|={masks.size}, ||delta||_1={solution.noise_l1:.6f}")
    return solution


def optimality_gap(objective: float, exact: DefenseSolution) -> float:
    """How far a heuristic objective sits above the enumerated optimum."""
    gap = float(objective) - exact.objective
    logger.info(f"Optimality gap vs {exact.method}: {gap:.6f} (heuristic U={objective:.6f}, exact U={exact.objective:.6f})")
    return gap
