"""
Core Package - Limiti stabili quantitativi sullo spazio di Wiener
"""

from .errors import (
    AccuracyError, BudgetError, ContractError, DomainError, GenerationError,
    HypothesisError, ParameterError, StableRatesError,
)

# moduli numerici caricati alla prima richiesta (scipy/sympy sono lenti da importare)
_LAZY = {
    'fbm_engine': ('sample_path', 'sample_paths', 'fbm_covariance', 'indicator_inner', 'rho_H',
                   'lemma61_quantities', 'TimeGrid', 'FbmPath', 'Hurst'),
    'chaos_combinatorics': ('hermite', 'hermite_expand_power', 'enumerate_A', 'enumerate_B',
                            'enumerate_B0', 'coeff_C', 'coeff_W', 'coeff_W_hat', 'contract',
                            'symmetrize', 'gaussian_moment_functional'),
    'functionals': ('c_H', 'sigma_H_series', 'quad_functional_An', 'ito_Fn_half', 'skorohod_Fn',
                    'weighted_qv_Fn', 'weighted_limit_sample', 'get_weight'),
    'malliavin_estimators': ('delta_bound', 'kolmogorov_transfer', 'tv_transfer',
                             'estimate_prop36_ingredients', 'estimate_weighted_qv_terms',
                             'assemble_theorem51_bound'),
    'distances': ('wasserstein1', 'kolmogorov', 'tv_kde', 'smooth_metric', 'stable_cf_gap',
                  'rate_fit'),
}
_INDEX = {name: module for module, names in _LAZY.items() for name in names}


def __getattr__(name):
    """Import pigro dei simboli numerici, poi memorizzati in globals()"""
    if name in _INDEX:
        import importlib
        value = getattr(importlib.import_module(f".{_INDEX[name]}", __name__), name)
        globals()[name] = value
        return value
    raise AttributeError(f"module 'core' has no attribute {name!r}")


__all__ = [
    'StableRatesError', 'ParameterError', 'GenerationError', 'HypothesisError',
    'DomainError', 'ContractError', 'BudgetError', 'AccuracyError',
] + sorted(_INDEX)
