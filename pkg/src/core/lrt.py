"""
Likelihood-ratio scores for Beacon and AAF releases.

Beacon score of individual i over the unmasked SNVs Q\\M:

    L_i = sum_j d_ij * (x'_j * A_j + (1 - x'_j) * B_j)

AAF score with released frequency y_j = x_j + delta_j:

    L_i = sum_j d_ij * log(pbar_j / y_j) + (1 - d_ij) * log((1 - pbar_j) / (1 - y_j))

Higher scores look more like the reference population.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from src.core.errors import ClipBoundError, ModeMismatchError, ParameterError
from src.data.panel import AAF, AAF_LOWER, AAF_UPPER, BEACON, DATASET, GenotypePanel

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 1e-6
FLIP = "flip"
MASK = "mask"

_CLIP_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class BeaconConstants:
    """Per-SNV constants of the Beacon LRT, computed once per panel."""

    gamma: float
    n: int
    r_n: np.ndarray
    r_n1: np.ndarray
    a: np.ndarray
    b: np.ndarray
    degenerate: np.ndarray

    @property
    def m(self) -> int:
        return self.a.size

    @property
    def delta_flip(self) -> np.ndarray:
        """B_j - A_j; zero on degenerate SNVs."""
        return np.where(self.degenerate, 0.0, self.b - self.a)

    @property
    def delta_mask(self) -> np.ndarray:
        """-A_j; zero on degenerate SNVs."""
        return np.where(self.degenerate, 0.0, -self.a)


def precompute_beacon_constants(panel: GenotypePanel, gamma: float = DEFAULT_GAMMA) -> BeaconConstants:
    """
    Compute A_j and B_j for every SNV.

    SNVs with reference AAF 0 make 1 - R_n vanish, so A_j is undefined there. They are
    flagged degenerate, contribute nothing to any score and are never flip/mask candidates.
    """
    if panel.mode != BEACON:
        raise ModeMismatchError(f"beacon constants need a beacon panel, got {panel.mode!r}")
    if not 0.0 < gamma < 0.25:
        raise ParameterError("gamma", gamma, "in (0, 0.25)")

    n = panel.n
    log_q = np.log1p(-panel.p_ref)
    log_r_n = 2.0 * n * log_q
    log_r_n1 = 2.0 * (n - 1) * log_q
    r_n = np.exp(log_r_n)
    r_n1 = np.exp(log_r_n1)
    one_minus_r_n = -np.expm1(log_r_n)
    degenerate = one_minus_r_n <= 0.0

    with np.errstate(divide="ignore"):
        a = np.log(one_minus_r_n) - np.log1p(-gamma * r_n1)
    a = np.where(degenerate, 0.0, a)
    b = log_r_n - np.log(gamma) - log_r_n1

    for arr in (r_n, r_n1, a, b, degenerate):
        arr.setflags(write=False)
    if degenerate.any():
        logger.debug(f"{int(degenerate.sum())} degenerate SNVs (reference AAF 0)")
    return BeaconConstants(gamma=gamma, n=n, r_n=r_n, r_n1=r_n1, a=a, b=b, degenerate=degenerate)


@dataclass(eq=False)
class ReleaseState:
    """
    A summary release after defense: original release x, mask set, flip set (beacon)
    and additive noise (AAF). Masks and flips are boolean vectors over the m SNVs.
    """

    mode: str
    x: np.ndarray
    masked: np.ndarray
    flipped: np.ndarray
    delta: np.ndarray

    @classmethod
    def for_panel(
        cls,
        panel: GenotypePanel,
        flips: Iterable[int] = (),
        masks: Iterable[int] = (),
        delta: Optional[np.ndarray] = None,
    ) -> "ReleaseState":
        m = panel.m
        if panel.mode == BEACON:
            x = panel.beacon_response().astype(np.float64)
        else:
            x = panel.released_aaf()
        masked = np.zeros(m, dtype=bool)
        masked[np.asarray(list(masks), dtype=np.int64)] = True
        flipped = np.zeros(m, dtype=bool)
        flipped[np.asarray(list(flips), dtype=np.int64)] = True
        if delta is None:
            delta = np.zeros(m, dtype=np.float64)
        else:
            delta = np.asarray(delta, dtype=np.float64).copy()
            if delta.shape != (m,):
                raise ParameterError("delta", f"shape {delta.shape}", f"shape ({m},)")
        state = cls(mode=panel.mode, x=x, masked=masked, flipped=flipped, delta=delta)
        state.validate()
        return state

    @property
    def m(self) -> int:
        return self.x.size

    def copy(self) -> "ReleaseState":
        return ReleaseState(
            mode=self.mode,
            x=self.x,
            masked=self.masked.copy(),
            flipped=self.flipped.copy(),
            delta=self.delta.copy(),
        )

    def released(self) -> np.ndarray:
        """Values the attacker sees on unmasked SNVs (masked entries are meaningless)."""
        if self.mode == BEACON:
            return np.where(self.flipped, 0.0, self.x)
        return self.x + self.delta

    def mask_indices(self) -> np.ndarray:
        return np.flatnonzero(self.masked)

    def flip_indices(self) -> np.ndarray:
        return np.flatnonzero(self.flipped)

    def noise_l1(self) -> float:
        """||delta||_1 over unmasked SNVs only (|F| for beacons)."""
        if self.mode == BEACON:
            return float(self.flipped.sum())
        return float(np.abs(self.delta[~self.masked]).sum())

    def validate(self):
        if (self.masked & self.flipped).any():
            j = int(np.flatnonzero(self.masked & self.flipped)[0])
            raise ParameterError("state", f"SNV {j} both masked and flipped", "disjoint sets")
        if self.mode == BEACON:
            bad = self.flipped & (self.x == 0)
            if bad.any():
                j = int(np.flatnonzero(bad)[0])
                raise ParameterError("state", f"SNV {j} flipped with response 0", "only yes-responses flipped")
        else:
            if self.flipped.any():
                raise ModeMismatchError("flip sets exist only for beacon releases")
            _check_clip(self.released(), ~self.masked)


def _check_clip(y: np.ndarray, active: np.ndarray):
    bad = active & ((y < AAF_LOWER - _CLIP_TOL) | (y > AAF_UPPER + _CLIP_TOL))
    if bad.any():
        j = int(np.flatnonzero(bad)[0])
        raise ClipBoundError(j, float(y[j]))


def beacon_contributions(consts: BeaconConstants, state: ReleaseState) -> np.ndarray:
    """Per-SNV score contribution for a carrier: A_j on yes, B_j on no, 0 when masked or degenerate."""
    contrib = np.where(state.released() > 0.5, consts.a, consts.b)
    contrib[state.masked | consts.degenerate] = 0.0
    return contrib


def beacon_lrt(panel: GenotypePanel, consts: BeaconConstants, state: ReleaseState, who: str = DATASET) -> np.ndarray:
    """Beacon LRT score of every dataset or reference individual."""
    if state.mode != BEACON or panel.mode != BEACON:
        raise ModeMismatchError("beacon_lrt needs a beacon release")
    return panel.rows(who) @ beacon_contributions(consts, state)


def aaf_log_terms(p_ref: np.ndarray, y: np.ndarray):
    """A(y) = log(pbar/y), B(y) = log((1-pbar)/(1-y)) with pbar clipped to the release bounds."""
    pbar = np.clip(p_ref, AAF_LOWER, AAF_UPPER)
    return np.log(pbar / y), np.log((1.0 - pbar) / (1.0 - y))


def aaf_terms(panel: GenotypePanel, state: ReleaseState):
    """(A, B) vectors for the current release; masked SNVs get 0 in both."""
    active = ~state.masked
    y = np.where(active, state.released(), 0.5)
    a, b = aaf_log_terms(panel.p_ref, y)
    a[~active] = 0.0
    b[~active] = 0.0
    return a, b


def aaf_lrt(panel: GenotypePanel, state: ReleaseState, who: str = DATASET) -> np.ndarray:
    """AAF LRT score of every dataset or reference individual."""
    if state.mode != AAF or panel.mode != AAF:
        raise ModeMismatchError("aaf_lrt needs an aaf release")
    _check_clip(state.released(), ~state.masked)
    a, b = aaf_terms(panel, state)
    return panel.rows(who) @ (a - b) + b.sum()


def lrt_scores(panel: GenotypePanel, state: ReleaseState, consts: Optional[BeaconConstants] = None, who: str = DATASET) -> np.ndarray:
    """Dispatch to the beacon or AAF score."""
    if state.mode == BEACON:
        if consts is None:
            raise ParameterError("consts", None, "beacon constants for beacon releases")
        return beacon_lrt(panel, consts, state, who)
    return aaf_lrt(panel, state, who)


@dataclass(frozen=True, eq=False)
class Marginals:
    """
    Marginal score change of one action per SNV. The change for individual i is
    on_carrier[j] when d_ij = 1 and on_noncarrier[j] when d_ij = 0.
    """

    kind: str
    on_carrier: np.ndarray
    on_noncarrier: np.ndarray

    def per_individual(self, rows: np.ndarray) -> np.ndarray:
        """Delta_ij for every row of `rows`."""
        rows = rows.astype(np.float64)
        return rows * self.on_carrier + (1.0 - rows) * self.on_noncarrier

    def average(self, rows: np.ndarray) -> np.ndarray:
        """Mean of Delta_ij over the given rows, per SNV."""
        if rows.shape[0] == 0:
            return np.zeros_like(self.on_carrier)
        freq = rows.mean(axis=0, dtype=np.float64)
        return freq * self.on_carrier + (1.0 - freq) * self.on_noncarrier


def marginal_contributions(
    panel: GenotypePanel,
    consts: Optional[BeaconConstants],
    state: ReleaseState,
    kind: str,
) -> Marginals:
    """
    Score change from flipping or masking each SNV on top of `state`.

    Beacon: flipping a yes-response gives d_ij * (B_j - A_j); masking gives minus the
    current contribution (-A_j on yes, -B_j on no). AAF: masking gives
    -d_ij * A(y_j) - (1 - d_ij) * B(y_j). Already masked SNVs get 0.
    """
    if kind not in (FLIP, MASK):
        raise ParameterError("kind", kind, "flip or mask")
    zeros = np.zeros(state.m, dtype=np.float64)

    if state.mode == BEACON:
        if consts is None:
            raise ParameterError("consts", None, "beacon constants for beacon releases")
        yes = state.released() > 0.5
        if kind == FLIP:
            carrier = np.where(yes & ~state.masked & ~consts.degenerate, consts.b - consts.a, 0.0)
        else:
            carrier = -beacon_contributions(consts, state)
            carrier[consts.degenerate & yes] = 0.0
        return Marginals(kind=kind, on_carrier=carrier, on_noncarrier=zeros)

    if kind == FLIP:
        raise ModeMismatchError("flip marginals exist only for beacon releases")
    a, b = aaf_terms(panel, state)
    return Marginals(kind=kind, on_carrier=-a, on_noncarrier=-b)
