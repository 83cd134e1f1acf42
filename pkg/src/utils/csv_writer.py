"""
CSV writers for sweep records and per-individual attack margins.
"""

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import pandas as pd

# Column order of the sweep CSV. wall_time is appended only when timing is enabled.
SWEEP_COLUMNS = [
    "method", "alpha", "w", "threat", "theta", "k", "param", "seed", "runs",
    "utility_pct", "privacy_pct", "objective", "n_masked", "n_flipped", "noise_l1",
]
FLOAT_FORMAT = "%.6f"


class CsvWriter:
    """Writes sweep records to a UTF-8, comma-separated file with a fixed header."""

    def __init__(self, config: dict):
        """Initialize with configuration."""
        self.config = config
        self.logger = logging.getLogger(__name__)
        output = config.get('output', {})
        self.output_file = output.get('sweep_csv', 'data/outputs/sweep.csv')
        self.include_timing = output.get('include_timing', False)

    def columns(self) -> List[str]:
        return SWEEP_COLUMNS + (["wall_time"] if self.include_timing else [])

    def to_frame(self, records: Iterable) -> pd.DataFrame:
        rows: List[Dict] = [r if isinstance(r, dict) else r.to_dict() for r in records]
        df = pd.DataFrame(rows, columns=self.columns())
        return df

    def write_records(self, records: Iterable, path: Optional[str] = None) -> str:
        """
        Write records in the order given.

        Args:
            records: SweepRecord objects or dicts with the sweep columns
            path: Output file; defaults to output.sweep_csv

        Returns:
            Path to output file
        """
        output_file = path or self.output_file
        Path(output_file).parent.mkdir(parents=True, exist_ok=True)
        df = self.to_frame(records)
        df.to_csv(output_file, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")
        self.logger.info(f"Wrote {len(df)} records to {output_file}")
        return output_file


def read_records(path) -> List[Dict]:
    """Load a sweep CSV back as a list of dicts."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Sweep file not found: {path}")
    return pd.read_csv(path).to_dict(orient="records")


MARGIN_COLUMNS = ["individual", "score", "margin", "covered"]


def write_margins(report, scores, path, ld_report=None) -> str:
    """
    Per-individual attack result: LRT score, margin to the threshold and whether the
    individual is protected. With an LD attack report the rescored columns follow.
    """
    df = pd.DataFrame({
        "individual": range(report.covered.size),
        "score": scores,
        "margin": report.margins,
        "covered": report.covered.astype(int),
    }, columns=MARGIN_COLUMNS)
    if ld_report is not None:
        df["ld_score"] = ld_report.scores
        df["ld_margin"] = ld_report.coverage.margins
        df["ld_covered"] = ld_report.coverage.covered.astype(int)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")
    logging.getLogger(__name__).info(f"Wrote margins for {len(df)} individuals to {path}")
    return str(path)
