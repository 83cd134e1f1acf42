"""
Alternating masking / Laplace-noise defense for AAF releases (SPG-R).

Three search strategies share the same epoch step (draw noise for the unmasked SNVs,
score the release, then mask the next t SNVs with the largest average marginal):

    parallel       one worker per epsilon, each masking in its own order
    sequential     every epsilon evaluated per epoch, the best one drives masking
    binary_search  geometric bisection over [min E, max E] per epoch

The parallel search also runs a noise-free worker (epsilon = inf) so its candidate
space contains both the noise-only and the mask-only strategies.
"""

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import ModeMismatchError, ParameterError
from src.core.lrt import MASK, ReleaseState, marginal_contributions
from src.core.solution import DefenseSolution, evaluate_solution, objective_value
from src.core.threat import ThreatModel, lowest_k_members, score_and_cover
from src.data.panel import AAF, AAF_LOWER, AAF_UPPER, GenotypePanel

logger = logging.getLogger(__name__)

UNBOUNDED = "unbounded"
BOUNDED = "bounded"
SENSITIVITY_MODES = (UNBOUNDED, BOUNDED)

PARALLEL = "parallel"
SEQUENTIAL = "sequential"
BINARY_SEARCH = "binary_search"
VARIANTS = (PARALLEL, SEQUENTIAL, BINARY_SEARCH)

DEFAULT_EPSILONS = (1e4, 5e4, 1e5, 5e5, 1e6, 5e6, 1e7)
NOISELESS = math.inf
BISECTION_RATIO = 1.05


@dataclass
class SpgrConfig:
    alpha: float = 0.9
    w: float = 1.0
    model: ThreatModel = field(default_factory=ThreatModel)
    t: int = 1000
    epsilons: Tuple[float, ...] = DEFAULT_EPSILONS
    sensitivity: str = UNBOUNDED
    avg_hamming: Optional[float] = None
    variant: str = PARALLEL
    seed: int = 0
    runs: int = 1
    include_noiseless: bool = True
    masking: bool = True
    noise: bool = True
    noise_reuse: bool = False
    threads: int = 1

    def __post_init__(self):
        self.epsilons = tuple(sorted(set(float(e) for e in self.epsilons)))
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError("alpha", self.alpha, "in (0, 1)")
        if self.w < 0:
            raise ParameterError("w", self.w, ">= 0")
        if self.t < 1:
            raise ParameterError("t", self.t, ">= 1")
        if self.noise and not self.epsilons:
            raise ParameterError("epsilons", self.epsilons, "a non-empty set")
        if any(e <= 0 for e in self.epsilons):
            raise ParameterError("epsilons", self.epsilons, "positive values")
        if self.sensitivity not in SENSITIVITY_MODES:
            raise ParameterError("sensitivity", self.sensitivity, "unbounded or bounded")
        if self.avg_hamming is not None and self.avg_hamming < 0:
            raise ParameterError("avg_hamming", self.avg_hamming, ">= 0")
        if self.variant not in VARIANTS:
            raise ParameterError("variant", self.variant, "parallel, sequential or binary_search")
        if self.runs < 1:
            raise ParameterError("runs", self.runs, ">= 1")
        if not (self.masking or self.noise):
            raise ParameterError("spgr", "masking and noise both disabled", "at least one of them")

    @classmethod
    def from_config(cls, section: dict, model: Optional[ThreatModel] = None) -> "SpgrConfig":
        return cls(
            alpha=section.get("alpha", 0.9),
            w=section.get("w", 1.0),
            model=model or ThreatModel(),
            t=section.get("t", 1000),
            epsilons=tuple(section.get("epsilons", DEFAULT_EPSILONS)),
            sensitivity=section.get("sensitivity", UNBOUNDED),
            avg_hamming=section.get("avg_hamming"),
            variant=section.get("variant", PARALLEL),
            seed=section.get("seed", 0),
            runs=section.get("runs", 1),
            include_noiseless=section.get("include_noiseless", True),
            noise_reuse=section.get("noise_reuse", False),
            threads=section.get("threads", 1),
        )

    def worker_epsilons(self) -> List[float]:
        """Epsilons searched by the parallel variant, noise-free worker last."""
        if not self.noise:
            return [NOISELESS]
        eps = list(self.epsilons)
        if self.include_noiseless:
            eps.append(NOISELESS)
        return eps


@dataclass(eq=False)
class NoiseDraw:
    """Laplace(0, scale) samples; `delta` is the raw draw before clipping."""

    epsilon: float
    scale: float
    sensitivity: float
    delta: np.ndarray

    def clipped(self, x: np.ndarray, active: np.ndarray) -> np.ndarray:
        """Noise actually applied: clip(x + delta) - x on active SNVs, 0 elsewhere."""
        y = np.clip(x + self.delta, AAF_LOWER, AAF_UPPER)
        return np.where(active, y - x, 0.0)


def laplace_noise(
    m_active: int,
    n: int,
    epsilon: float,
    sensitivity_mode: str = UNBOUNDED,
    seed=None,
    avg_hamming: Optional[float] = None,
    size: Optional[int] = None,
) -> NoiseDraw:
    """
    Draw `size` (default m_active) i.i.d. Laplace samples with scale S / (n * epsilon),
    where S is m_active (unbounded) or the average Hamming distance (bounded).
    """
    if not epsilon > 0:
        raise ParameterError("epsilon", epsilon, "> 0")
    if n < 1:
        raise ParameterError("n", n, ">= 1")
    if sensitivity_mode == UNBOUNDED:
        sensitivity = float(m_active)
    elif sensitivity_mode == BOUNDED:
        if avg_hamming is None:
            raise ParameterError("avg_hamming", None, "a value in bounded mode")
        sensitivity = float(avg_hamming)
    else:
        raise ParameterError("sensitivity_mode", sensitivity_mode, "unbounded or bounded")

    size = m_active if size is None else size
    if math.isinf(epsilon):
        return NoiseDraw(epsilon=epsilon, scale=0.0, sensitivity=sensitivity, delta=np.zeros(size))
    scale = sensitivity / (n * epsilon)
    rng = np.random.default_rng(seed)
    return NoiseDraw(epsilon=epsilon, scale=scale, sensitivity=sensitivity,
                     delta=rng.laplace(0.0, 1.0, size) * scale)


def average_hamming(panel: GenotypePanel, active: Optional[np.ndarray] = None) -> float:
    """Expected Hamming distance between a dataset and a reference individual over `active` SNVs."""
    per_snv = panel.p + panel.p_ref - 2.0 * panel.p * panel.p_ref
    if active is not None:
        per_snv = per_snv[active]
    return float(per_snv.sum())


@dataclass(frozen=True)
class SpgrCandidate:
    """One explored snapshot; enough to re-score it for any (alpha, w)."""

    epsilon: float
    n_masked: int
    noise_l1: float
    n_covered: int
    epoch: int

    def objective(self, alpha: float, w: float) -> float:
        return objective_value(alpha, w, self.noise_l1, self.n_masked, self.n_covered)

    def key(self, alpha: float, w: float) -> tuple:
        # Objective first, then larger epsilon, then fewer masks.
        return (self.objective(alpha, w), -self.epsilon, self.n_masked, self.epoch)


def best_from_log(log: Sequence[SpgrCandidate], alpha: float, w: float) -> SpgrCandidate:
    """Best logged candidate for another (alpha, w) without re-running the search."""
    if not log:
        raise ParameterError("log", "empty", "at least one candidate")
    return min(log, key=lambda c: c.key(alpha, w))


class _BestRecord:
    """Shared best solution, updated under a lock with a total order on candidates."""

    def __init__(self, alpha: float, w: float):
        self.alpha = alpha
        self.w = w
        self.key = None
        self.candidate: Optional[SpgrCandidate] = None
        self.state: Optional[ReleaseState] = None
        self._lock = threading.Lock()

    def offer(self, candidate: SpgrCandidate, state: ReleaseState):
        key = candidate.key(self.alpha, self.w)
        with self._lock:
            if self.key is None or key < self.key:
                self.key = key
                self.candidate = candidate
                self.state = state.copy()


class _Search:
    """Per-call context: panel, config, seeds and the shared candidate log."""

    def __init__(self, panel: GenotypePanel, cfg: SpgrConfig):
        self.panel = panel
        self.cfg = cfg
        self.x = panel.released_aaf()
        self.best = _BestRecord(cfg.alpha, cfg.w)
        self.log: List[SpgrCandidate] = []
        self._log_lock = threading.Lock()

    def sensitivity_for(self, active: np.ndarray) -> Optional[float]:
        if self.cfg.sensitivity != BOUNDED:
            return None
        if self.cfg.avg_hamming is not None:
            return self.cfg.avg_hamming * active.sum() / self.panel.m
        return average_hamming(self.panel, active)

    def release(self, masked: np.ndarray, epsilon: float, seed) -> ReleaseState:
        active = ~masked
        draw = laplace_noise(
            int(active.sum()), self.panel.n, epsilon, self.cfg.sensitivity,
            seed=seed, avg_hamming=self.sensitivity_for(active), size=self.panel.m,
        )
        delta = draw.clipped(self.x, active)
        return ReleaseState(mode=AAF, x=self.x, masked=masked.copy(),
                            flipped=np.zeros(self.panel.m, dtype=bool), delta=delta)

    def evaluate(self, state: ReleaseState, epsilon: float, epoch: int) -> Tuple[SpgrCandidate, np.ndarray]:
        report, _, scores_ref = score_and_cover(self.panel, state, self.cfg.model)
        candidate = SpgrCandidate(
            epsilon=epsilon,
            n_masked=int(state.masked.sum()),
            noise_l1=state.noise_l1(),
            n_covered=report.size,
            epoch=epoch,
        )
        with self._log_lock:
            self.log.append(candidate)
        self.best.offer(candidate, state)
        return candidate, scores_ref

    def mask_order(self, state: ReleaseState, scores_ref: np.ndarray) -> np.ndarray:
        """Unmasked SNVs by decreasing average mask marginal (ties by index)."""
        marg = marginal_contributions(self.panel, None, state, MASK)
        key = marg.average(self.panel.d)
        if self.cfg.model.is_adaptive:
            members = lowest_k_members(scores_ref, self.cfg.model.k)
            key = key - marg.average(self.panel.d_ref[members])
        idx = np.flatnonzero(~state.masked)
        order = np.lexsort((idx, -key[idx]))
        return idx[order]


def _seed(cfg: SpgrConfig, slot: int, epoch: int):
    return [cfg.seed, slot, epoch]


def _run_worker(search: _Search, slot: int, epsilon: float):
    """Mask-and-noise trajectory for a single epsilon (parallel variant)."""
    cfg = search.cfg
    masked = np.zeros(search.panel.m, dtype=bool)
    order = None
    cursor = 0
    epoch = 0
    while True:
        noise_epoch = 0 if cfg.noise_reuse else epoch
        state = search.release(masked, epsilon, _seed(cfg, slot, noise_epoch))
        candidate, scores_ref = search.evaluate(state, epsilon, epoch)
        logger.debug(
            f"SPG-R eps={epsilon:g} epoch {epoch}: |M|={candidate.n_masked}, "
            f"||delta||_1={candidate.noise_l1:.6f}, |Z|={candidate.n_covered}"
        )
        if not cfg.masking or masked.all():
            break
        if cfg.noise_reuse:
            if order is None:
                order = search.mask_order(state, scores_ref)
            chosen = order[cursor:cursor + cfg.t]
            cursor += cfg.t
        else:
            chosen = search.mask_order(state, scores_ref)[:cfg.t]
        masked[chosen] = True
        epoch += 1


def _run_parallel(search: _Search):
    cfg = search.cfg
    workers = list(enumerate(cfg.worker_epsilons()))
    threads = max(1, min(cfg.threads, len(workers)))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda job: _run_worker(search, *job), workers))
    else:
        for slot, eps in workers:
            _run_worker(search, slot, eps)


def _epoch_candidates(search: _Search, masked: np.ndarray, trials: List[Tuple[int, float]], epoch: int):
    """Evaluate every (slot, epsilon) trial on the same mask set; return the best one."""
    cfg = search.cfg
    best = None
    for slot, eps in trials:
        state = search.release(masked, eps, _seed(cfg, slot, epoch))
        candidate, scores_ref = search.evaluate(state, eps, epoch)
        key = candidate.key(cfg.alpha, cfg.w)
        if best is None or key < best[0]:
            best = (key, state, scores_ref)
    return best


def _run_sequential(search: _Search):
    cfg = search.cfg
    masked = np.zeros(search.panel.m, dtype=bool)
    trials = list(enumerate(cfg.worker_epsilons()))
    epoch = 0
    while True:
        _, state, scores_ref = _epoch_candidates(search, masked, trials, epoch)
        if not cfg.masking or masked.all():
            break
        masked[search.mask_order(state, scores_ref)[:cfg.t]] = True
        epoch += 1


def _run_binary_search(search: _Search):
    cfg = search.cfg
    masked = np.zeros(search.panel.m, dtype=bool)
    epoch = 0
    while True:
        trials: List[Tuple[int, float]] = []
        best = None
        if cfg.noise:
            lo, hi = cfg.epsilons[0], cfg.epsilons[-1]
            slot = 0
            evaluated = {}

            def trial(eps: float):
                nonlocal slot
                if eps not in evaluated:
                    result = _epoch_candidates(search, masked, [(slot, eps)], epoch)
                    trials.append((slot, eps))
                    evaluated[eps] = result
                    slot += 1
                return evaluated[eps]

            trial(lo)
            trial(hi)
            while hi / lo >= BISECTION_RATIO:
                mid = math.sqrt(lo * hi)
                trial(mid)
                if evaluated[lo][0] < evaluated[hi][0]:
                    hi = mid
                else:
                    lo = mid
            best = min(evaluated.values(), key=lambda r: r[0])
        if cfg.include_noiseless or not cfg.noise:
            noiseless = _epoch_candidates(search, masked, [(len(trials), NOISELESS)], epoch)
            if best is None or noiseless[0] < best[0]:
                best = noiseless
        _, state, scores_ref = best
        if not cfg.masking or masked.all():
            break
        masked[search.mask_order(state, scores_ref)[:cfg.t]] = True
        epoch += 1


_RUNNERS = {
    PARALLEL: _run_parallel,
    SEQUENTIAL: _run_sequential,
    BINARY_SEARCH: _run_binary_search,
}


@dataclass(eq=False)
class SpgrResult:
    solution: DefenseSolution
    log: List[SpgrCandidate]


def spgr_search(panel: GenotypePanel, cfg: SpgrConfig, method: Optional[str] = None) -> SpgrResult:
    """Run the configured SPG-R variant and return the best solution with the candidate log."""
    if panel.mode != AAF:
        raise ModeMismatchError(f"SPG-R needs an aaf panel, got {panel.mode!r}")
    method = method or "spg-r"
    logger.info(
        f"Running {method} ({cfg.variant}): m={panel.m}, n={panel.n}, alpha={cfg.alpha}, w={cfg.w}, "
        f"t={cfg.t}, epsilons={list(cfg.epsilons) if cfg.noise else []}, {cfg.model.label}"
    )
    search = _Search(panel, cfg)
    _RUNNERS[cfg.variant](search)

    chosen = search.best.candidate
    # Order the log deterministically; worker threads append in schedule order.
    log = sorted(search.log, key=lambda c: (-c.epsilon, c.epoch, c.n_masked, c.noise_l1, c.n_covered))
    solution = evaluate_solution(
        panel, search.best.state, cfg.model, cfg.alpha, cfg.w, method=method,
        extra={"epsilon": chosen.epsilon, "epoch": chosen.epoch, "variant": cfg.variant,
               "candidates": len(log), "seed": cfg.seed},
    )
    logger.info(
        f"{method} done: eps={chosen.epsilon:g}, |M|={solution.masks.size}, ||delta||_1={solution.noise_l1:.6f}, "
        f"privacy {solution.privacy_pct:.2f}%, utility {solution.utility_pct:.4f}%, U={solution.objective:.4f}"
    )
    return SpgrResult(solution=solution, log=log)


def spgr(panel: GenotypePanel, cfg: SpgrConfig) -> DefenseSolution:
    return spgr_search(panel, cfg).solution
