"""
Audit Logger - Log JSONL degli eventi di un run e manifest JSON

Scrive events.jsonl (una riga JSON per evento) e manifest.json nella
directory di output del run.
"""

import atexit
import json
import logging
import platform
import threading
import weakref
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
import scipy
import sympy

from ..replica_pool import RNG_SCHEME
from .config_loader import ExperimentConfig

SCHEMA_VERSION = 1

# Mappa livelli stringa → logging
_LEVEL_MAP = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warn": logging.WARNING,
    "error": logging.ERROR,
}


def package_versions() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "sympy": sympy.__version__,
    }


class RunAuditLogger:
    """Logger strutturato JSONL di un run, con buffer e manifest finale."""

    _BUFFER_SIZE = 20      # Righe accumulate prima di flush su disco
    EVENTS_FILE = "events.jsonl"
    MANIFEST_FILE = "manifest.json"

    def __init__(self, cfg: ExperimentConfig, out_dir: Optional[str] = None):
        self.cfg = cfg
        self._level = _LEVEL_MAP.get(cfg.log_level, logging.INFO)
        self.out_dir = Path(out_dir or cfg.output_path)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._events_path = self.out_dir / self.EVENTS_FILE
        self._started = datetime.now()
        self.truncated = False

        self._buf_lock = threading.RLock()
        self._buffer: List[str] = []

        _weak_self = weakref.ref(self)

        def _atexit_flush():
            obj = _weak_self()
            if obj is not None:
                obj.flush()
        atexit.register(_atexit_flush)

        self._logger = logging.getLogger("stable_rates")
        self._logger.setLevel(self._level)
        if not self._logger.handlers:
            handler = logging.StreamHandler()
            handler.setLevel(self._level)
            handler.setFormatter(logging.Formatter("[%(levelname)s] %(name)s: %(message)s"))
            self._logger.addHandler(handler)
            self._logger.propagate = False
        for hd in self._logger.handlers:
            hd.setLevel(self._level)

    # ------------------------------------------------------------------
    # Eventi
    # ------------------------------------------------------------------

    def log_event(self, event_type: str, data: Optional[Dict] = None, level: str = "info") -> None:
        event = {
            "ts": datetime.now().isoformat(),
            "type": event_type,
            "level": level,
            "data": data or {},
        }
        self._write_jsonl(event)
        self._console_log(level, f"[{event_type}] {json.dumps(data or {}, ensure_ascii=False, default=str)[:200]}")

    def log_run_start(self) -> None:
        """Apre un nuovo events.jsonl: gli eventi di run precedenti nella stessa directory sono scartati."""
        with self._buf_lock:
            self._events_path.write_text("", encoding="utf-8")
        self.log_event("run_start", {"experiment": self.cfg.experiment, "seed": self.cfg.seed,
                                     "threads": self.cfg.threads})

    def log_level_done(self, n: int, **details: Any) -> None:
        self.log_event("level_done", {"n": n, **details}, level="debug")

    def log_acceptance(self, name: str, passed: bool, **details: Any) -> None:
        self.log_event("acceptance", {"name": name, "pass": passed, **details},
                       level="info" if passed else "warn")

    def log_truncated(self, where: str) -> None:
        self.truncated = True
        self.log_event("truncated", {"where": where}, level="warn")

    def log_run_end(self, wall_clock: float) -> None:
        self.log_event("run_end", {"wall_clock_seconds": round(wall_clock, 3)})

    def log_error(self, message: str, exception: Optional[Exception] = None) -> None:
        data: Dict[str, Any] = {"message": message}
        if exception:
            data["exception"] = str(exception)
            data["type"] = type(exception).__name__
        self.log_event("error", data, level="error")

    # ------------------------------------------------------------------
    # Manifest
    # ------------------------------------------------------------------

    def write_manifest(self, files: List[str], acceptance: Dict[str, bool],
                       wall_clock: float) -> Path:
        """Scrive manifest.json: config esatta, versioni, schema RNG, esito."""
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.cfg.experiment,
            "config": self.cfg.to_dict(),
            "versions": package_versions(),
            "rng": RNG_SCHEME,
            "started_at": self._started.isoformat(),
            "wall_clock_seconds": round(wall_clock, 3),
            "truncated": self.truncated,
            "files": sorted(files),
            "acceptance": acceptance,
            "threads": self.cfg.threads,
        }
        path = self.out_dir / self.MANIFEST_FILE
        with open(path, "w", encoding="utf-8") as f:
            json.dump(manifest, f, ensure_ascii=False, indent=2)
        self.flush()
        return path

    # ------------------------------------------------------------------
    # Internals
    # ------------------------------------------------------------------

    def _write_jsonl(self, entry: Dict) -> None:
        """Accoda una riga al buffer; flush su disco quando il buffer è pieno"""
        line = json.dumps(entry, ensure_ascii=False, default=str) + "\n"
        with self._buf_lock:
            self._buffer.append(line)
            if len(self._buffer) >= self._BUFFER_SIZE:
                self._flush_buffer()

    def _flush_buffer(self) -> None:
        if not self._buffer:
            return
        pending = list(self._buffer)
        self._buffer.clear()
        try:
            with open(self._events_path, "a", encoding="utf-8") as f:
                f.writelines(pending)
        except OSError as e:
            self._buffer.extend(pending)
            self._logger.error("Errore scrittura log %s: %s", self._events_path, e)

    def flush(self) -> None:
        """Forza il flush del buffer (chiamare prima di chiudere il run)"""
        with self._buf_lock:
            self._flush_buffer()

    def _console_log(self, level: str, message: str) -> None:
        log_level = _LEVEL_MAP.get(level, logging.INFO)
        if log_level >= self._level:
            self._logger.log(log_level, message)

    def read_events(self) -> List[Dict[str, Any]]:
        """Eventi scritti su disco più quelli ancora nel buffer."""
        self.flush()
        if not self._events_path.exists():
            return []
        with open(self._events_path, "r", encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]
