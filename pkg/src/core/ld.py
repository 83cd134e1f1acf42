"""
Linkage-disequilibrium coefficients and the sliding-window neighbour index N_LD(j).

LD(j, k) = P(AB) - P(A) P(B), estimated from carrier indicators d_ij (no phased
haplotypes are available, so allele co-occurrence is approximated by carrier
co-occurrence).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

from src.core.errors import ParameterError
from src.data.panel import GenotypePanel

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 250
DEFAULT_T_LD = 0.2
LD_SOURCES = ("dataset", "reference", "pooled")


def _ld_rows(panel: GenotypePanel, source: str) -> np.ndarray:
    if source == "dataset":
        rows = panel.d
    elif source == "reference":
        rows = panel.d_ref
    elif source == "pooled":
        rows = np.vstack([panel.d, panel.d_ref])
    else:
        raise ParameterError("source", source, "dataset, reference or pooled")
    return rows.astype(bool)


def ld_coefficient(panel: GenotypePanel, j: int, k: int, source: str = "dataset") -> float:
    """P(AB) - P(A)P(B) for SNVs j and k; always within [-0.25, 0.25]."""
    if j == k:
        raise ParameterError("k", k, "a SNV different from j")
    rows = _ld_rows(panel, source)
    a = rows[:, j]
    b = rows[:, k]
    return float((a & b).mean() - a.mean() * b.mean())


@dataclass(frozen=True, eq=False)
class LdIndex:
    """CSR adjacency of positively correlated SNV pairs within the window."""

    window: int
    t_ld: float
    indptr: np.ndarray
    indices: np.ndarray
    source: str = "dataset"

    @property
    def m(self) -> int:
        return self.indptr.size - 1

    @classmethod
    def empty(cls, m: int, window: int = 0, t_ld: float = DEFAULT_T_LD) -> "LdIndex":
        return cls(
            window=window,
            t_ld=t_ld,
            indptr=np.zeros(m + 1, dtype=np.int64),
            indices=np.zeros(0, dtype=np.int64),
        )

    def neighbors(self, j: int) -> np.ndarray:
        return self.indices[self.indptr[j]:self.indptr[j + 1]]

    def sizes(self) -> np.ndarray:
        """|N_LD(j)| for every SNV."""
        return np.diff(self.indptr)

    def pair_count(self) -> int:
        return int(self.indices.size // 2)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            np.savez(
                f,
                indptr=self.indptr,
                indices=self.indices,
                window=np.int64(self.window),
                t_ld=np.float64(self.t_ld),
                source=np.array(self.source),
            )
        logger.info(f"LD index ({self.pair_count()} pairs) written to {path}")
        return path

    @classmethod
    def load(cls, path) -> "LdIndex":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"LD index not found: {path}")
        with np.load(path, allow_pickle=False) as data:
            return cls(
                window=int(data["window"]),
                t_ld=float(data["t_ld"]),
                indptr=data["indptr"].astype(np.int64),
                indices=data["indices"].astype(np.int64),
                source=str(data["source"]),
            )


def _scan_block(rows: np.ndarray, freq: np.ndarray, start: int, stop: int, window: int, t_ld: float) -> Tuple[np.ndarray, np.ndarray]:
    """Correlated pairs (j, j + offset) whose left SNV lies in [start, stop)."""
    m = rows.shape[1]
    n = rows.shape[0]
    left: List[np.ndarray] = []
    right: List[np.ndarray] = []
    for offset in range(1, window + 1):
        hi = min(stop, m - offset)
        if hi <= start:
            break
        j = np.arange(start, hi)
        joint = np.count_nonzero(rows[:, start:hi] & rows[:, start + offset:hi + offset], axis=0) / n
        coeff = joint - freq[start:hi] * freq[start + offset:hi + offset]
        hit = coeff > t_ld
        if hit.any():
            left.append(j[hit])
            right.append(j[hit] + offset)
    if not left:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    return np.concatenate(left), np.concatenate(right)


def build_index(
    panel: GenotypePanel,
    window: int = DEFAULT_WINDOW,
    t_ld: float = DEFAULT_T_LD,
    source: str = "dataset",
    threads: int = 1,
    block_size: int = 4096,
) -> LdIndex:
    """
    Build N_LD(j) = {k : 0 < |j - k| <= window, LD(j, k) > t_LD} for every SNV.
    The scan is split into disjoint SNV blocks that run on a thread pool.
    """
    if window < 0:
        raise ParameterError("window", window, ">= 0")
    m = panel.m
    if window == 0:
        return LdIndex.empty(m, window=0, t_ld=t_ld)

    rows = _ld_rows(panel, source)
    freq = rows.mean(axis=0, dtype=np.float64)
    starts = list(range(0, m, block_size))

    def scan(start: int):
        return _scan_block(rows, freq, start, min(start + block_size, m), window, t_ld)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(scan, starts))
    else:
        parts = [scan(s) for s in starts]

    left = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, dtype=np.int64)
    right = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, dtype=np.int64)
    src = np.concatenate([left, right]).astype(np.int64)
    dst = np.concatenate([right, left]).astype(np.int64)
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=m), out=indptr[1:])

    index = LdIndex(window=window, t_ld=t_ld, indptr=indptr, indices=dst, source=source)
    logger.info(
        f"LD index built: m={m}, window={window}, t_LD={t_ld}, source={source}, pairs={index.pair_count()}"
    )
    return index
