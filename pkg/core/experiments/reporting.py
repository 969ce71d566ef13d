"""
Reporting - Scrittura dei CSV dei risultati

Schemi fissi (versionati nel manifest con schema_version):
  distances.csv : metric, n, H, experiment, estimate, std_error
  bounds.csv    : experiment, n, H, term, estimate, std_error, analytic_bound, pass
  rate_fit.csv  : experiment, metric, slope, intercept, r2, theory_slope, pass

I corpi dei CSV dipendono solo da (config, seed): stesso ordine di righe e
formato numerico fisso.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

logger = logging.getLogger(__name__)

DISTANCE_COLUMNS = ["metric", "n", "H", "experiment", "estimate", "std_error"]
BOUND_COLUMNS = ["experiment", "n", "H", "term", "estimate", "std_error", "analytic_bound", "pass"]
RATE_COLUMNS = ["experiment", "metric", "slope", "intercept", "r2", "theory_slope", "pass"]

FLOAT_FORMAT = "%.12g"


class ReportWriter:
    """Accumula le righe di un run e le scrive come CSV nella directory di output."""

    DISTANCES_FILE = "distances.csv"
    BOUNDS_FILE = "bounds.csv"
    RATE_FIT_FILE = "rate_fit.csv"

    def __init__(self, out_dir: str):
        self.out_dir = Path(out_dir)
        self.distances: List[Dict[str, Any]] = []
        self.bounds: List[Dict[str, Any]] = []
        self.rates: List[Dict[str, Any]] = []
        self._extra: Dict[str, pd.DataFrame] = {}

    def add_distance(self, metric: str, n: int, h: float, experiment: str,
                     estimate: float, std_error: Optional[float] = None) -> None:
        self.distances.append({"metric": metric, "n": n, "H": h, "experiment": experiment,
                               "estimate": estimate, "std_error": std_error})

    def add_bound(self, experiment: str, n: int, h: float, term: str, estimate: float,
                  std_error: Optional[float] = None, analytic_bound: Optional[float] = None,
                  passed: Optional[bool] = None) -> None:
        self.bounds.append({"experiment": experiment, "n": n, "H": h, "term": term,
                            "estimate": estimate, "std_error": std_error,
                            "analytic_bound": analytic_bound, "pass": passed})

    def add_rate(self, experiment: str, metric: str, slope: float, intercept: float, r2: float,
                 theory_slope: Optional[float] = None, passed: Optional[bool] = None) -> None:
        self.rates.append({"experiment": experiment, "metric": metric, "slope": slope,
                           "intercept": intercept, "r2": r2, "theory_slope": theory_slope,
                           "pass": passed})

    def add_table(self, filename: str, rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> None:
        """Tabella aggiuntiva (constants.csv, combinatorics.csv)."""
        self._extra[filename] = pd.DataFrame(list(rows), columns=list(columns))

    def write(self) -> List[str]:
        """Scrive tutti i CSV (anche vuoti, con la sola intestazione)."""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        tables = {
            self.DISTANCES_FILE: pd.DataFrame(self.distances, columns=DISTANCE_COLUMNS),
            self.BOUNDS_FILE: pd.DataFrame(self.bounds, columns=BOUND_COLUMNS),
            self.RATE_FIT_FILE: pd.DataFrame(self.rates, columns=RATE_COLUMNS),
        }
        tables.update(self._extra)
        for name, frame in tables.items():
            frame.to_csv(self.out_dir / name, index=False, float_format=FLOAT_FORMAT,
                         na_rep="", lineterminator="\n")
            logger.debug("Scritto %s (%d righe)", name, len(frame))
        return list(tables)


def read_rate_input(path: str) -> pd.DataFrame:
    """Legge un distances.csv o bounds.csv e lo normalizza a (experiment, metric, n, H, estimate)."""
    frame = pd.read_csv(path)
    if set(DISTANCE_COLUMNS) <= set(frame.columns):
        out = frame[["experiment", "metric", "n", "H", "estimate"]]
    elif set(BOUND_COLUMNS) <= set(frame.columns):
        out = frame.rename(columns={"term": "metric"})[["experiment", "metric", "n", "H", "estimate"]]
    else:
        raise ValueError(f"Schema CSV non riconosciuto: {list(frame.columns)}")
    return out.dropna(subset=["estimate"])
