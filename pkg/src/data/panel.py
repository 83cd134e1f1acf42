"""
Genotype panel model, panel file I/O and synthetic population generation.

Panel file format (plain text, UTF-8):

    m n n_ref mode
    n rows of dataset genotypes, m comma-separated 0/1 symbols each
    n_ref rows of reference genotypes, same width

Allele frequencies are always recomputed from the genotype rows.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import MinorAlleleError, PanelFormatError, ParameterError

logger = logging.getLogger(__name__)

BEACON = "beacon"
AAF = "aaf"
MODES = (BEACON, AAF)

# Bounds every released AAF is clipped to.
AAF_LOWER = 0.0001
AAF_UPPER = 0.9999

DATASET = "dataset"
REFERENCE = "reference"


@dataclass(frozen=True, eq=False)
class GenotypePanel:
    """Binary carrier matrices for the dataset D and the reference population."""

    d: np.ndarray
    d_ref: np.ndarray
    mode: str = BEACON
    p: np.ndarray = field(init=False, repr=False)
    p_ref: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError("mode", self.mode, "beacon or aaf")
        d = _as_binary_matrix(self.d, "dataset")
        d_ref = _as_binary_matrix(self.d_ref, "reference")
        if d.shape[1] != d_ref.shape[1]:
            raise PanelFormatError(
                f"dataset has {d.shape[1]} SNVs but reference has {d_ref.shape[1]}"
            )
        p = d.mean(axis=0, dtype=np.float64)
        p_ref = d_ref.mean(axis=0, dtype=np.float64)
        if self.mode == BEACON:
            bad = np.flatnonzero(p_ref >= 0.5)
            if bad.size:
                raise MinorAlleleError(int(bad[0]), float(p_ref[bad[0]]))
        for arr in (d, d_ref, p, p_ref):
            arr.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "d_ref", d_ref)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "p_ref", p_ref)

    @property
    def m(self) -> int:
        return self.d.shape[1]

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @property
    def n_ref(self) -> int:
        return self.d_ref.shape[0]

    def rows(self, who: str) -> np.ndarray:
        """Genotype rows of the dataset or the reference population."""
        if who == DATASET:
            return self.d
        if who == REFERENCE:
            return self.d_ref
        raise ParameterError("who", who, "dataset or reference")

    def beacon_response(self) -> np.ndarray:
        """x_j = 1 iff at least one dataset individual carries the alternate allele."""
        return self.d.any(axis=0).astype(np.uint8)

    def released_aaf(self) -> np.ndarray:
        """Dataset AAFs clipped to the release bounds."""
        return np.clip(self.p, AAF_LOWER, AAF_UPPER)


def _as_binary_matrix(values, label: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise PanelFormatError(f"{label} genotypes must be a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise PanelFormatError(f"{label} genotypes must be binary 0/1")
    return np.array(arr, dtype=np.uint8, copy=True)


@dataclass
class DatasetConfig:
    """Parameters of a synthetic panel."""

    m: int = 1000
    n: int = 400
    n_ref: int = 400
    mode: str = BEACON
    beta_a: float = 0.5
    beta_b: float = 6.0
    aaf: Optional[Sequence[float]] = None
    seed: int = 0
    block_len: int = 0
    block_rho: float = 0.0
    beacon_max_aaf: float = 0.45

    @classmethod
    def from_config(cls, section: dict) -> "DatasetConfig":
        return cls(
            m=section.get("m", 1000),
            n=section.get("n", 400),
            n_ref=section.get("n_ref", 400),
            mode=section.get("mode", BEACON),
            beta_a=section.get("beta_a", 0.5),
            beta_b=section.get("beta_b", 6.0),
            aaf=section.get("aaf"),
            seed=section.get("seed", 0),
            block_len=section.get("block_len", 0),
            block_rho=section.get("block_rho", 0.0),
            beacon_max_aaf=section.get("beacon_max_aaf", 0.45),
        )

    def validate(self):
        for name in ("m", "n", "n_ref"):
            if getattr(self, name) < 1:
                raise ParameterError(name, getattr(self, name), ">= 1")
        if self.mode not in MODES:
            raise ParameterError("mode", self.mode, "beacon or aaf")
        if self.aaf is None:
            if self.beta_a <= 0 or self.beta_b <= 0:
                raise ParameterError("beta", (self.beta_a, self.beta_b), "positive shape parameters")
        else:
            q = np.asarray(self.aaf, dtype=np.float64)
            if q.shape != (self.m,):
                raise ParameterError("aaf", f"length {q.size}", f"length {self.m}")
            if ((q < 0) | (q > 1)).any():
                raise ParameterError("aaf", "values outside [0, 1]")
            if self.mode == BEACON and (q >= 0.5).any():
                raise ParameterError("aaf", "values >= 0.5", "minor-allele frequencies in beacon mode")
        if not 0.0 < self.beacon_max_aaf < 0.5:
            raise ParameterError("beacon_max_aaf", self.beacon_max_aaf, "in (0, 0.5)")
        if self.block_len < 0:
            raise ParameterError("block_len", self.block_len, ">= 0")
        if not 0.0 <= self.block_rho <= 1.0:
            raise ParameterError("block_rho", self.block_rho, "in [0, 1]")


def _draw_rows(rng: np.random.Generator, rows: int, q: np.ndarray, block_len: int, block_rho: float) -> np.ndarray:
    d = rng.random((rows, q.size)) < q
    if block_len > 1 and block_rho > 0:
        copy = rng.random((rows, q.size)) < block_rho
        # Each column inside a block copies its left neighbour with probability block_rho.
        for offset in range(1, block_len):
            cols = np.arange(offset, q.size, block_len)
            d[:, cols] = np.where(copy[:, cols], d[:, cols - 1], d[:, cols])
    return d.astype(np.uint8)


def generate_panel(cfg: DatasetConfig) -> GenotypePanel:
    """
    Draw a synthetic panel. Generator is numpy's PCG64 seeded with cfg.seed, so a
    seed fully determines the output on every platform.
    """
    cfg.validate()
    rng = np.random.Generator(np.random.PCG64(cfg.seed))

    if cfg.aaf is not None:
        q = np.asarray(cfg.aaf, dtype=np.float64).copy()
    else:
        q = rng.beta(cfg.beta_a, cfg.beta_b, size=cfg.m)
        if cfg.mode == BEACON:
            q = np.clip(q, 1e-6, cfg.beacon_max_aaf)
        else:
            q = np.clip(q, AAF_LOWER, AAF_UPPER)

    d = _draw_rows(rng, cfg.n, q, cfg.block_len, cfg.block_rho)
    d_ref = _draw_rows(rng, cfg.n_ref, q, cfg.block_len, cfg.block_rho)

    if cfg.mode == BEACON:
        # Small reference samples can land at or above 0.5 by chance; redraw those columns.
        for j in np.flatnonzero(d_ref.mean(axis=0) >= 0.5):
            for _ in range(1000):
                d_ref[:, j] = rng.random(cfg.n_ref) < q[j]
                if d_ref[:, j].mean() < 0.5:
                    break
            else:
                raise ParameterError("aaf", float(q[j]), f"frequency too close to 0.5 for n_ref={cfg.n_ref}")

    panel = GenotypePanel(d=d, d_ref=d_ref, mode=cfg.mode)
    logger.info(
        f"Generated {cfg.mode} panel: m={panel.m}, n={panel.n}, n_ref={panel.n_ref}, seed={cfg.seed}"
    )
    return panel


def save_panel(panel: GenotypePanel, path) -> Path:
    """Write a panel in the documented text format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{panel.m} {panel.n} {panel.n_ref} {panel.mode}"]
    for matrix in (panel.d, panel.d_ref):
        lines.extend(",".join("1" if v else "0" for v in row) for row in matrix)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Panel written to {path}")
    return path


def _parse_rows(lines: List[Tuple[int, str]], m: int) -> np.ndarray:
    """Binary matrix from (file line number, text) pairs."""
    out = np.zeros((len(lines), m), dtype=np.uint8)
    for r, (line_no, line) in enumerate(lines):
        tokens = [t.strip() for t in line.split(",")]
        if len(tokens) != m:
            raise PanelFormatError(f"line {line_no}: expected {m} genotypes, found {len(tokens)}")
        for j, tok in enumerate(tokens):
            if tok == "1":
                out[r, j] = 1
            elif tok != "0":
                raise PanelFormatError(f"line {line_no}, SNV {j}: non-binary genotype symbol {tok!r}")
    return out


def load_panel(path, mode: Optional[str] = None) -> GenotypePanel:
    """
    Read a panel file.

    Args:
        path: Panel file path
        mode: "beacon" or "aaf"; defaults to the mode named in the header

    Returns:
        GenotypePanel with AAFs recomputed from the genotype rows
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Panel file not found: {path}")

    # blank lines are skipped but keep their place in the numbering
    raw = path.read_text(encoding="utf-8").splitlines()
    lines = [(no, ln.strip()) for no, ln in enumerate(raw, start=1) if ln.strip()]
    if not lines:
        raise PanelFormatError(f"{path}: empty file, dimension header missing")

    header_no, header_text = lines[0]
    header = header_text.split()
    if len(header) != 4:
        raise PanelFormatError(f"{path}: line {header_no}: header must be 'm n n_ref mode', got {header_text!r}")
    try:
        m, n, n_ref = (int(v) for v in header[:3])
    except ValueError:
        raise PanelFormatError(f"{path}: non-integer dimensions in header {header_text!r}")
    if min(m, n, n_ref) < 1:
        raise PanelFormatError(f"{path}: dimensions must be >= 1, got m={m} n={n} n_ref={n_ref}")
    file_mode = header[3]
    if file_mode not in MODES:
        raise PanelFormatError(f"{path}: unknown mode {file_mode!r}")
    if mode is None:
        mode = file_mode
    elif mode != file_mode:
        logger.warning(f"{path}: header mode {file_mode!r} overridden by requested mode {mode!r}")

    body = lines[1:]
    if len(body) != n + n_ref:
        raise PanelFormatError(f"{path}: expected {n + n_ref} genotype rows, found {len(body)}")

    d = _parse_rows(body[:n], m)
    d_ref = _parse_rows(body[n:], m)
    panel = GenotypePanel(d=d, d_ref=d_ref, mode=mode)
    logger.info(f"Loaded {mode} panel from {path}: m={m}, n={n}, n_ref={n_ref}")
    return panel
