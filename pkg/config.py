"""
Configurazione stable-rates
"""

import os
import logging
from dotenv import load_dotenv

_logger = logging.getLogger(__name__)

# Carica variabili d'ambiente dal file .env
load_dotenv()

# Directory base del progetto
BASE_DIR = os.path.dirname(os.path.abspath(__file__))

# Directory dei risultati (creata solo al momento della scrittura)
DEFAULT_OUTPUT_DIR = os.getenv('STABLE_RATES_OUTPUT_DIR', os.path.join(BASE_DIR, 'results'))


def _safe_float(val, default):
    try:
        return float(val)
    except (ValueError, TypeError):
        _logger.warning("Valore non valido '%s', uso default %s", val, default)
        return default


def _safe_int(val, default):
    try:
        return int(val)
    except (ValueError, TypeError):
        _logger.warning("Valore non valido '%s', uso default %s", val, default)
        return default


# ── Esecuzione ───────────────────────────────────────────────────────────────
RUN_CONFIG = {
    'seed': _safe_int(os.getenv('STABLE_RATES_SEED', '20240601'), 20240601),
    'threads': _safe_int(os.getenv('STABLE_RATES_THREADS', str(os.cpu_count() or 1)), os.cpu_count() or 1),
    'replicas': _safe_int(os.getenv('STABLE_RATES_REPLICAS', '10000'), 10000),
    'chunk_size': _safe_int(os.getenv('STABLE_RATES_CHUNK', '500'), 500),
    'budget_seconds': _safe_float(os.getenv('STABLE_RATES_BUDGET_SECONDS', '0'), 0.0),
    'log_level': os.getenv('STABLE_RATES_LOG_LEVEL', 'info').lower(),
}

if RUN_CONFIG['threads'] < 1:
    _logger.warning("STABLE_RATES_THREADS=%s non valido, uso 1", RUN_CONFIG['threads'])
    RUN_CONFIG['threads'] = 1

# ── Simulazione fBm ──────────────────────────────────────────────────────────
# Tolleranza relativa sugli autovalori negativi dell'embedding circolante:
# sotto -tol·max si passa a Cholesky, sopra si tronca a zero.
SIMULATION_CONFIG = {
    'circulant_tolerance': _safe_float(os.getenv('FBM_CIRCULANT_TOL', '1e-8'), 1e-8),
    'cholesky_jitter': _safe_float(os.getenv('FBM_CHOLESKY_JITTER', '1e-12'), 1e-12),
    'cholesky_cache_size': _safe_int(os.getenv('FBM_CHOLESKY_CACHE', '16'), 16),
}

# ── Quadrature ───────────────────────────────────────────────────────────────
QUADRATURE_CONFIG = {
    'gauss_hermite_nodes': _safe_int(os.getenv('GAUSS_HERMITE_NODES', '200'), 200),
    'an_u_grid': _safe_int(os.getenv('AN_U_GRID', '2048'), 2048),
    'an_u_grid_cap': _safe_int(os.getenv('AN_U_GRID_CAP', '65536'), 65536),
    'ito_resolution': 8,        # griglia ≥ 8n per le somme di Itô
}

# ── Distanze ─────────────────────────────────────────────────────────────────
DISTANCE_CONFIG = {
    'kde_grid': _safe_int(os.getenv('KDE_GRID', '2048'), 2048),
    'kde_span_bandwidths': 4.0,
    'bootstrap_resamples': _safe_int(os.getenv('BOOTSTRAP_RESAMPLES', '200'), 200),
    'cf_lambdas': (0.5, 1.0, 2.0),
    'cf_mus': (0.0, 1.0),
}

# ── Combinatoria ─────────────────────────────────────────────────────────────
ENUMERATION_CONFIG = {
    'budget': _safe_int(os.getenv('ENUMERATION_BUDGET', '1000000'), 1_000_000),
    'tensor_max_dim': 8,
    'tensor_max_order': 6,
}

# ── Criteri di accettazione ──────────────────────────────────────────────────
ACCEPTANCE_CONFIG = {
    'wasserstein_slope_slack': 0.08,
    'term_slope_slack': 0.1,
    'lemma61_slope_tolerance': 0.1,
    'envelope_factor': 1.25,
    'alpha_sum_ratio': 1.5,
    'bound_se_multiplier': 3.0,
    'mean_se_multiplier': 4.0,
    'cf_gap_floor': 0.02,
    'variance_match_tolerance': 0.05,
}
