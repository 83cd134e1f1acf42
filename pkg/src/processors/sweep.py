"""
Parameter sweep harness.
Runs every (threat point, alpha, method, parameter) job over the w grid and emits one
SweepRecord per grid point, in grid order.
"""

import hashlib
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import List, Optional, Sequence

import numpy as np

from src.core.errors import ParameterError
from src.core.ld import DEFAULT_T_LD, DEFAULT_WINDOW, LdIndex, build_index
from src.core.lrt import DEFAULT_GAMMA, FLIP, ReleaseState, precompute_beacon_constants
from src.core.solution import DefenseSolution, evaluate_solution, objective_value, utility_pct
from src.core.threat import ThreatModel
from src.data.panel import AAF, BEACON, GenotypePanel
from src.defenses.baselines import (
    DP_BEACON,
    DP_LAPLACE,
    LINKAGE,
    MASK_ONLY,
    MIG,
    RF,
    SF,
    SFM,
    BaselineConfig,
    run_baseline,
)
from src.defenses.spgb import BOTH, FLIP_ONLY, MASK_ONLY as SPGB_MASK_ONLY, SpgbConfig, greedy_trajectory
from src.defenses.spgr import SpgrConfig, best_from_log, spgr_search


SPG_B = "spg-b"
SPG_B_FLIP = "spg-b-flip"
SPG_B_MASK = "spg-b-mask"
SPG_LD = "spg-ld"
SPG_R = "spg-r"

METHOD_MODES = {
    SPG_B: BEACON,
    SPG_B_FLIP: BEACON,
    SPG_B_MASK: BEACON,
    SPG_LD: BEACON,
    SF: BEACON,
    SFM: BEACON,
    RF: BEACON,
    DP_BEACON: BEACON,
    MIG: BEACON,
    SPG_R: AAF,
    DP_LAPLACE: AAF,
    MASK_ONLY: AAF,
    LINKAGE: AAF,
}
RANDOMIZED = {RF, DP_BEACON, SPG_R, DP_LAPLACE}
# Methods sharing one seed stream so their noise draws line up.
_SEED_FAMILY = {DP_LAPLACE: SPG_R, MASK_ONLY: SPG_R}

DEFAULT_BEACON_W = tuple(float(v) for v in np.logspace(-2, 1, 7))
DEFAULT_AAF_W = (0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0)


def derive_seed(master: int, method: str, point: str, run: int) -> int:
    """64-bit seed from blake2b("master|method|point|run")."""
    token = f"{master}|{method}|{point}|{run}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(token, digest_size=8).digest(), "little")


@dataclass
class SweepSpec:
    methods: List[str] = field(default_factory=lambda: [SPG_B])
    w_grid: Optional[List[float]] = None
    alphas: List[float] = field(default_factory=lambda: [0.5, 0.75, 0.9])
    thetas: List[float] = field(default_factory=lambda: [-750.0, -250.0, 0.0, 1000.0])
    ks: List[float] = field(default_factory=lambda: [5.0, 10.0])
    epsilons: List[float] = field(default_factory=lambda: [1.0])
    ps: List[float] = field(default_factory=lambda: [0.5])
    budgets: List[float] = field(default_factory=lambda: [50.0])
    seed: int = 0
    runs: int = 5
    threads: int = 1
    timing: bool = False
    gamma: float = DEFAULT_GAMMA
    spgr: dict = field(default_factory=dict)
    ld_window: int = DEFAULT_WINDOW
    ld_t: float = DEFAULT_T_LD
    ld_attack: bool = False
    quorum: float = 0.75

    def __post_init__(self):
        for name in ("methods", "alphas"):
            if not getattr(self, name):
                raise ParameterError(name, getattr(self, name), "a non-empty list")
        if not self.thetas and not self.ks:
            raise ParameterError("thetas/ks", "empty", "at least one threat point")
        if self.w_grid is not None and not self.w_grid:
            raise ParameterError("w_grid", self.w_grid, "a non-empty list")
        unknown = [m for m in self.methods if m not in METHOD_MODES]
        if unknown:
            raise ParameterError("methods", unknown, ", ".join(METHOD_MODES))
        if self.runs < 1:
            raise ParameterError("runs", self.runs, ">= 1")

    @classmethod
    def from_config(cls, section: dict) -> "SweepSpec":
        defaults = cls()
        return cls(
            methods=section.get("methods", defaults.methods),
            w_grid=section.get("w_grid"),
            alphas=section.get("alphas", defaults.alphas),
            thetas=section.get("thetas", defaults.thetas),
            ks=section.get("ks", defaults.ks),
            epsilons=section.get("epsilons", defaults.epsilons),
            ps=section.get("ps", defaults.ps),
            budgets=section.get("budgets", defaults.budgets),
            seed=section.get("seed", 0),
            runs=section.get("runs", 5),
            threads=section.get("threads", 1),
            timing=section.get("timing", False),
            gamma=section.get("gamma", DEFAULT_GAMMA),
            spgr=section.get("spgr", {}),
            ld_window=section.get("ld_window", DEFAULT_WINDOW),
            ld_t=section.get("ld_t", DEFAULT_T_LD),
            ld_attack=section.get("ld_attack", False),
            quorum=section.get("quorum", 0.75),
        )

    def w_values(self, mode: str) -> List[float]:
        if self.w_grid is not None:
            return list(self.w_grid)
        return list(DEFAULT_BEACON_W if mode == BEACON else DEFAULT_AAF_W)

    def threat_points(self) -> List[ThreatModel]:
        """Fixed then adaptive attackers; with ld_attack set they also run the correlation attack."""
        ld = dict(ld_aware=self.ld_attack, window=self.ld_window, t_ld=self.ld_t, quorum=self.quorum)
        return [ThreatModel.fixed(t, **ld) for t in self.thetas] + [ThreatModel.adaptive(k, **ld) for k in self.ks]

    def params_for(self, method: str) -> List[Optional[float]]:
        if method == RF:
            return list(self.ps)
        if method == DP_BEACON:
            return list(self.epsilons)
        if method == LINKAGE:
            return list(self.budgets)
        return [None]


@dataclass
class SweepRecord:
    method: str
    alpha: float
    w: float
    threat: str
    theta: float
    k: float
    param: float
    seed: int
    runs: int
    utility_pct: float
    privacy_pct: float
    objective: float
    n_masked: float
    n_flipped: float
    noise_l1: float
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class _Job:
    model: ThreatModel
    alpha: float
    method: str
    param: Optional[float]

    @property
    def point(self) -> str:
        return f"{self.model.label}|alpha={self.alpha:g}|param={self.param}"


@dataclass
class _Metrics:
    """Per-w metrics of one run."""

    utility_pct: float
    privacy_pct: float
    objective: float
    n_masked: float
    n_flipped: float
    noise_l1: float


def _metrics(solution: DefenseSolution, w: float) -> _Metrics:
    return _Metrics(
        utility_pct=solution.utility_pct,
        privacy_pct=solution.privacy_pct,
        objective=objective_value(solution.alpha, w, solution.noise_l1, solution.masks.size, solution.n_covered),
        n_masked=solution.masks.size,
        n_flipped=solution.flips.size,
        noise_l1=solution.noise_l1,
    )


class SweepRunner:
    """Runs a SweepSpec against one panel."""

    def __init__(self, spec: SweepSpec, panel: GenotypePanel, ld_index: Optional[LdIndex] = None):
        self.spec = spec
        self.panel = panel
        self.logger = logging.getLogger(__name__)
        self.consts = precompute_beacon_constants(panel, spec.gamma) if panel.mode == BEACON else None
        self.ld_index = ld_index

    def jobs(self) -> List[_Job]:
        """Grid points in output order, skipping methods that do not fit the panel mode."""
        jobs = []
        for method in self.spec.methods:
            if METHOD_MODES[method] != self.panel.mode:
                self.logger.warning(f"Skipping {method}: needs a {METHOD_MODES[method]} panel, got {self.panel.mode}")
        for model in self.spec.threat_points():
            for alpha in self.spec.alphas:
                for method in self.spec.methods:
                    if METHOD_MODES[method] != self.panel.mode:
                        continue
                    for param in self.spec.params_for(method):
                        jobs.append(_Job(model=model, alpha=float(alpha), method=method, param=param))
        return jobs

    def _ensure_ld_index(self, jobs: Sequence[_Job]):
        if self.ld_index is None and any(j.method in (SPG_LD, LINKAGE) for j in jobs):
            self.ld_index = build_index(self.panel, self.spec.ld_window, self.spec.ld_t, threads=self.spec.threads)

    def _spgb_run(self, job: _Job, w_values: List[float]) -> List[_Metrics]:
        restrict = {SPG_B: BOTH, SPG_LD: BOTH, SPG_B_FLIP: FLIP_ONLY, SPG_B_MASK: SPGB_MASK_ONLY}[job.method]
        cfg = SpgbConfig(alpha=job.alpha, w=w_values[0], model=job.model, restrict_mode=restrict,
                         ld_defense=job.method == SPG_LD, ld_index=self.ld_index if job.method == SPG_LD else None)
        trajectory = greedy_trajectory(self.panel, self.consts, cfg)
        out = []
        for w in w_values:
            flips, masks = trajectory.actions_until(trajectory.best_step_for(job.alpha, w))
            state = ReleaseState.for_panel(self.panel, flips=flips, masks=masks)
            solution = evaluate_solution(self.panel, state, job.model, job.alpha, w, consts=self.consts, method=job.method)
            out.append(_metrics(solution, w))
        return out

    def _spgr_run(self, job: _Job, w_values: List[float], seed: int) -> List[_Metrics]:
        base = SpgrConfig.from_config(self.spec.spgr, model=job.model)
        cfg = replace(base, alpha=job.alpha, w=w_values[0], seed=seed)
        if job.method == DP_LAPLACE:
            cfg = replace(cfg, masking=False, noise=True, include_noiseless=False)
        elif job.method == MASK_ONLY:
            cfg = replace(cfg, masking=True, noise=False)
        log = spgr_search(self.panel, cfg, method=job.method).log
        out = []
        for w in w_values:
            best = best_from_log(log, job.alpha, w)
            out.append(_Metrics(
                utility_pct=utility_pct(job.alpha, best.noise_l1, best.n_masked, self.panel.m),
                privacy_pct=100.0 * best.n_covered / self.panel.n,
                objective=best.objective(job.alpha, w),
                n_masked=best.n_masked,
                n_flipped=0,
                noise_l1=best.noise_l1,
            ))
        return out

    def _baseline_run(self, job: _Job, w_values: List[float], seed: int) -> List[_Metrics]:
        cfg = BaselineConfig(method=job.method, action=FLIP, model=job.model, alpha=job.alpha, w=w_values[0], seed=seed)
        if job.method == RF:
            cfg = replace(cfg, p=job.param)
        elif job.method == DP_BEACON:
            cfg = replace(cfg, epsilon=job.param)
        elif job.method == LINKAGE:
            cfg = replace(cfg, min_privacy_pct=job.param)
        solution = run_baseline(self.panel, cfg, consts=self.consts, ld_index=self.ld_index)
        return [_metrics(solution, w) for w in w_values]

    def run_job(self, job: _Job) -> List[SweepRecord]:
        w_values = self.spec.w_values(self.panel.mode)
        runs = self.spec.runs if job.method in RANDOMIZED else 1
        family = _SEED_FAMILY.get(job.method, job.method)
        started = time.perf_counter()
        per_run: List[List[_Metrics]] = []
        seeds = []
        for run in range(runs):
            seed = derive_seed(self.spec.seed, family, job.point, run)
            seeds.append(seed)
            if job.method in (SPG_B, SPG_B_FLIP, SPG_B_MASK, SPG_LD):
                per_run.append(self._spgb_run(job, w_values))
            elif job.method in (SPG_R, DP_LAPLACE, MASK_ONLY):
                per_run.append(self._spgr_run(job, w_values, seed))
            else:
                per_run.append(self._baseline_run(job, w_values, seed))
        elapsed = time.perf_counter() - started

        records = []
        for idx, w in enumerate(w_values):
            rows = [r[idx] for r in per_run]
            records.append(SweepRecord(
                method=job.method,
                alpha=job.alpha,
                w=float(w),
                threat=job.model.kind + ("+ld" if job.model.ld_aware else ""),
                theta=float(job.model.theta) if not job.model.is_adaptive else float("nan"),
                k=float(job.model.k) if job.model.is_adaptive else float("nan"),
                param=float(job.param) if job.param is not None else float("nan"),
                seed=seeds[0],
                runs=runs,
                utility_pct=float(np.mean([r.utility_pct for r in rows])),
                privacy_pct=float(np.mean([r.privacy_pct for r in rows])),
                objective=float(np.mean([r.objective for r in rows])),
                n_masked=float(np.mean([r.n_masked for r in rows])),
                n_flipped=float(np.mean([r.n_flipped for r in rows])),
                noise_l1=float(np.mean([r.noise_l1 for r in rows])),
                wall_time=elapsed / len(w_values),
            ))
        self.logger.debug(f"Sweep job {job.method} {job.point}: {len(records)} records in {elapsed:.2f}s")
        return records

    def run(self) -> List[SweepRecord]:
        jobs = self.jobs()
        self._ensure_ld_index(jobs)
        self.logger.info(f"Sweep: {len(jobs)} jobs on a {self.panel.mode} panel (m={self.panel.m}, n={self.panel.n})")
        if self.spec.threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.spec.threads) as pool:
                batches = list(pool.map(self.run_job, jobs))
        else:
            batches = [self.run_job(job) for job in jobs]
        records = [record for batch in batches for record in batch]
        self.logger.info(f"Sweep finished: {len(records)} records")
        return records


def run_sweep(spec: SweepSpec, panel: GenotypePanel, ld_index: Optional[LdIndex] = None) -> List[SweepRecord]:
    return SweepRunner(spec, panel, ld_index).run()
