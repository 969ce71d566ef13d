"""
Errori del toolkit stable-rates

Gerarchia unica: ogni modulo solleva una sottoclasse di StableRatesError,
così la CLI può distinguere errori di input da guasti numerici.
"""


class StableRatesError(Exception):
    """Base di tutti gli errori del toolkit."""


class ParameterError(StableRatesError, ValueError):
    """Parametro fuori dominio (Hurst, griglia, tempi negativi)."""


class DomainError(StableRatesError, ValueError):
    """Formula richiesta fuori dal suo regime di validità."""


class HypothesisError(StableRatesError, ValueError):
    """Ipotesi di un risultato non soddisfatta (es. H ≥ 1/2 dove serve H < 1/2)."""


class ContractError(StableRatesError, ValueError):
    """Argomenti incoerenti: forme, arità, chiavi mancanti, campioni vuoti."""


class GenerationError(StableRatesError):
    """Campionamento fallito (Cholesky non PSD anche dopo il jitter)."""


class BudgetError(StableRatesError):
    """Enumerazione o griglia oltre il budget configurato."""


class AccuracyError(StableRatesError):
    """Risoluzione della griglia insufficiente per la discretizzazione richiesta."""
