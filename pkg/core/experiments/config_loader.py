"""
Config Loader - Carica e valida la configurazione di un esperimento

Precedenza: flag CLI > file JSON > default (default.config.json + config.py).
Il documento risultante è validato contro experiment.schema.json e poi
contro i vincoli semantici (scala di n crescente, risoluzione di Itô).
"""

import copy
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import jsonschema

import config

logger = logging.getLogger(__name__)

# _CODE_DIR = core/experiments/, _CFG_DIR = core/experiment_config/
_CODE_DIR = Path(__file__).resolve().parent
CONFIG_DIR = _CODE_DIR.parent / "experiment_config"
SCHEMA_PATH = CONFIG_DIR / "experiment.schema.json"
DEFAULTS_PATH = CONFIG_DIR / "default.config.json"

EXPERIMENTS = ("quadratic_bm", "quadratic_fbm", "weighted_qv", "bounds_prop36",
               "weighted_bounds", "lemma61", "combinatorics", "constants", "rate_fit")

# esperimenti con somme di Itô sulla griglia di simulazione
ITO_EXPERIMENTS = ("quadratic_bm", "bounds_prop36")

# intervallo di H ammesso per esperimento: (condizione, descrizione)
HURST_RANGES = {
    "quadratic_bm": (lambda h: h == 0.5, "H = 1/2"),
    "bounds_prop36": (lambda h: h == 0.5, "H = 1/2"),
    "quadratic_fbm": (lambda h: 0.5 <= h < 1.0, "1/2 ≤ H < 1"),
    "weighted_qv": (lambda h: 0.25 < h <= 0.5, "1/4 < H ≤ 1/2"),
    "weighted_bounds": (lambda h: 0.25 < h <= 0.5, "1/4 < H ≤ 1/2"),
    "lemma61": (lambda h: 0.0 < h < 0.5, "0 < H < 1/2"),
}


class ConfigValidationError(Exception):
    """Errore di validazione della configurazione, con il campo coinvolto."""

    def __init__(self, field_path: str, reason: str):
        self.field = field_path
        self.reason = reason
        super().__init__(f"{field_path}: {reason}")


@dataclass
class ExperimentConfig:
    """Configurazione completa di un esperimento (eco nel manifest)."""
    experiment: str
    hurst: float = 0.5
    n_ladder: List[int] = field(default_factory=lambda: [8, 16, 32, 64])
    replicas: int = 10000
    grid_size: int = 0
    seed: int = 20240601
    weight: str = "cos"
    output_path: str = "results"
    threads: int = 1
    q: int = 2
    m: int = 0
    d: int = 1
    hurst_grid: List[float] = field(default_factory=lambda: [0.5])
    alpha: float = 0.5
    bootstrap: int = 0
    chunk_size: int = 500
    budget_seconds: float = 0.0
    assert_acceptance: bool = False
    input_csv: Optional[str] = None
    log_level: str = "info"

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known - {"$schema"})
        if unknown:
            raise ConfigValidationError(unknown[0], "campo sconosciuto")
        kwargs = {k: copy.deepcopy(v) for k, v in data.items() if k in known}
        return cls(**kwargs)

    def effective_grid(self, n: int) -> int:
        """Passi della griglia di Itô per il livello n (0 = automatico, 8n)."""
        return self.grid_size or config.QUADRATURE_CONFIG['ito_resolution'] * n


def _read_json(path: Path) -> Dict[str, Any]:
    if not path.exists():
        raise FileNotFoundError(f"Config non trovata: {path}")
    with open(path, "r", encoding="utf-8-sig") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigValidationError(str(path.name), f"JSON non valido ({e.msg}, riga {e.lineno})")


class ExperimentConfigLoader:
    """Costruisce ExperimentConfig unendo default, file e override."""

    def __init__(self, schema_path: Optional[str] = None, defaults_path: Optional[str] = None):
        self._schema_path = Path(schema_path) if schema_path else SCHEMA_PATH
        self._defaults_path = Path(defaults_path) if defaults_path else DEFAULTS_PATH
        self._schema: Dict[str, Any] = {}
        self._defaults: Dict[str, Any] = {}
        self._load()

    def _load(self) -> None:
        self._schema = _read_json(self._schema_path)
        self._defaults = _read_json(self._defaults_path)

    def reload(self) -> None:
        """Ricarica schema e default; in caso di errore ripristina lo stato precedente."""
        old_schema, old_defaults = self._schema, self._defaults
        try:
            self._load()
        except Exception:
            self._schema, self._defaults = old_schema, old_defaults
            raise

    # ------------------------------------------------------------------

    def _base(self, experiment: Optional[str]) -> Dict[str, Any]:
        base = {
            "seed": config.RUN_CONFIG['seed'],
            "threads": config.RUN_CONFIG['threads'],
            "replicas": config.RUN_CONFIG['replicas'],
            "chunk_size": config.RUN_CONFIG['chunk_size'],
            "budget_seconds": config.RUN_CONFIG['budget_seconds'],
            "log_level": config.RUN_CONFIG['log_level'],
            "output_path": config.DEFAULT_OUTPUT_DIR,
        }
        base.update(copy.deepcopy(self._defaults.get("defaults", {})))
        if experiment:
            base.update(copy.deepcopy(self._defaults.get("experiments", {}).get(experiment, {})))
        return base

    def build(self, experiment: Optional[str] = None, config_path: Optional[str] = None,
              overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
        """Unisce le sorgenti e valida.

        Args:
            experiment:  Nome dell'esperimento (ha la precedenza sul file)
            config_path: File JSON dell'esperimento (opzionale)
            overrides:   Valori da CLI; le chiavi con valore None sono ignorate
        """
        file_doc: Dict[str, Any] = {}
        if config_path:
            file_doc = _read_json(Path(config_path))
            if not isinstance(file_doc, dict):
                raise ConfigValidationError("(radice)", "il documento deve essere un oggetto JSON")
        name = experiment or file_doc.get("experiment")
        merged = self._base(name)
        merged.update({k: v for k, v in file_doc.items() if k != "$schema"})
        merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
        if name:
            merged["experiment"] = name
        self.validate(merged)
        cfg = ExperimentConfig.from_dict(merged)
        logger.debug("Config esperimento %s: %s", cfg.experiment, cfg.to_dict())
        return cfg

    def validate(self, doc: Dict[str, Any]) -> None:
        """Schema JSON più vincoli semantici."""
        try:
            jsonschema.validate(instance=doc, schema=self._schema)
        except jsonschema.ValidationError as e:
            path = ".".join(str(p) for p in e.absolute_path) or (
                e.validator_value[0] if e.validator == "required" else "(radice)"
            )
            raise ConfigValidationError(str(path), f"Validazione schema fallita: {e.message}")

        ladder = doc.get("n_ladder", [])
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ConfigValidationError("n_ladder", "deve essere strettamente crescente")
        if doc["experiment"] in ITO_EXPERIMENTS and doc.get("grid_size") and ladder:
            needed = config.QUADRATURE_CONFIG['ito_resolution'] * max(ladder)
            if doc["grid_size"] < needed:
                raise ConfigValidationError(
                    "grid_size", f"serve almeno {needed} (8·max(n_ladder)) per le somme di Itô"
                )
        allowed = HURST_RANGES.get(doc["experiment"])
        if allowed and "hurst" in doc and not allowed[0](doc["hurst"]):
            raise ConfigValidationError(
                "hurst", f"{doc['experiment']} richiede {allowed[1]}, ricevuto {doc['hurst']}"
            )
        if doc["experiment"] == "rate_fit" and not doc.get("input_csv"):
            raise ConfigValidationError("input_csv", "obbligatorio per rate_fit")

    def __repr__(self) -> str:
        return f"<ExperimentConfigLoader schema={self._schema_path.name}>"


def load_experiment_config(experiment: Optional[str] = None, config_path: Optional[str] = None,
                           overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Scorciatoia: loader con schema e default del pacchetto."""
    return ExperimentConfigLoader().build(experiment, config_path, overrides)
