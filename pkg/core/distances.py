"""
Distances - metriche empiriche tra campioni, test di convergenza stabile, regressione dei tassi

Metriche: wasserstein1, kolmogorov, tv_kde, smooth_metric (banco di funzioni
test C⁵ normalizzate). Convergenza stabile: stable_cf_gap confronta la funzione
caratteristica congiunta empirica di (Fₙ, B₁) con il limite in forma chiusa.
Tassi: rate_fit (minimi quadrati su log-log) ed envelope_check.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, signal, stats

import config
from .errors import ContractError
from .fbm_engine import HurstLike
from .functionals import c_H
from .replica_pool import BOOTSTRAP_NAMESPACE, replica_stream

logger = logging.getLogger(__name__)


@dataclass
class EmpiricalSample:
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size == 0:
            raise ContractError(f"Campione vuoto ({self.label or 'senza etichetta'})")
        if not np.all(np.isfinite(self.values)):
            raise ContractError(f"Campione con valori non finiti ({self.label or 'senza etichetta'})")

    def __len__(self) -> int:
        return int(self.values.size)


SampleLike = Union[EmpiricalSample, Sequence[float], np.ndarray]


def _values(x: SampleLike) -> np.ndarray:
    return x.values if isinstance(x, EmpiricalSample) else EmpiricalSample(x).values


# ─── Metriche ───────────────────────────────────────────────────────────

def wasserstein1(xs: SampleLike, ys: SampleLike) -> float:
    """d_W: accoppiamento delle statistiche d'ordine (stessa numerosità), scipy altrimenti."""
    x, y = _values(xs), _values(ys)
    if x.size == y.size:
        return float(np.mean(np.abs(np.sort(x) - np.sort(y))))
    return float(stats.wasserstein_distance(x, y))


def kolmogorov(xs: SampleLike, ys: SampleLike) -> float:
    """sup_x |F̂(x) − Ĝ(x)| sul supporto unito."""
    return float(stats.ks_2samp(_values(xs), _values(ys)).statistic)


def silverman_bandwidth(x: np.ndarray) -> float:
    return 1.06 * float(np.std(x, ddof=1)) * x.size ** (-0.2)


def _atom_tv(x: np.ndarray, y: np.ndarray) -> float:
    support = np.union1d(x, y)
    p = np.searchsorted(support, x)
    q = np.searchsorted(support, y)
    px = np.bincount(p, minlength=support.size) / x.size
    qy = np.bincount(q, minlength=support.size) / y.size
    return float(0.5 * np.abs(px - qy).sum())


def _binned_kde(x: np.ndarray, grid: np.ndarray, bandwidth: float) -> np.ndarray:
    """Densità gaussiana su griglia: istogramma convoluto col nucleo discretizzato."""
    dx = grid[1] - grid[0]
    edges = np.concatenate((grid - dx / 2, [grid[-1] + dx / 2]))
    counts, _ = np.histogram(x, bins=edges)
    half = max(1, int(math.ceil(4.0 * bandwidth / dx)))
    offsets = np.arange(-half, half + 1) * dx
    kernel = np.exp(-0.5 * (offsets / bandwidth) ** 2)
    kernel /= kernel.sum()
    return np.clip(signal.fftconvolve(counts / (x.size * dx), kernel, mode="same"), 0.0, None)


def tv_kde(xs: SampleLike, ys: SampleLike, bandwidth: Optional[float] = None,
           grid_size: Optional[int] = None) -> float:
    """½∫|p̂ − q̂| con densità a nucleo gaussiano su una griglia comune.

    Campioni a varianza nulla: TV tra le distribuzioni empiriche atomiche.
    """
    x, y = _values(xs), _values(ys)
    if x.size < 2 or y.size < 2 or np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        return _atom_tv(x, y)
    if bandwidth is not None and bandwidth <= 0:
        raise ContractError(f"Banda non positiva: {bandwidth}")
    hx = bandwidth or silverman_bandwidth(x)
    hy = bandwidth or silverman_bandwidth(y)
    span = config.DISTANCE_CONFIG['kde_span_bandwidths'] * max(hx, hy)
    grid_size = grid_size or config.DISTANCE_CONFIG['kde_grid']
    grid = np.linspace(min(x.min(), y.min()) - span, max(x.max(), y.max()) + span, grid_size)
    p = _binned_kde(x, grid, hx)
    q = _binned_kde(y, grid, hy)
    tv = 0.5 * integrate.trapezoid(np.abs(p - q), grid)
    return float(min(max(tv, 0.0), 1.0))


@dataclass(frozen=True)
class BankFunction:
    """Funzione test con derivate fino al quinto ordine limitate da 1."""
    name: str
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return self.fn(x)


def _cos_test(omega: float, theta: float) -> BankFunction:
    norm = max(1.0, omega ** 5)
    return BankFunction(name=f"cos({omega}x+{theta:.4f})",
                        fn=lambda x: np.cos(omega * x + theta) / norm)


def default_bank() -> List[BankFunction]:
    """cos(ωx+θ)/max(1, ω⁵), ω ∈ {½, 1, 2}, θ ∈ {0, π/2}."""
    return [_cos_test(w, t) for w in (0.5, 1.0, 2.0) for t in (0.0, math.pi / 2)]


def smooth_metric(xs: SampleLike, ys: SampleLike,
                  bank: Optional[Sequence[Callable]] = None) -> float:
    """max_φ |Ê φ(xs) − Ê φ(ys)| sul banco di funzioni test."""
    x, y = _values(xs), _values(ys)
    bank = default_bank() if bank is None else bank
    if not bank:
        raise ContractError("Banco di funzioni test vuoto")
    return float(max(abs(np.mean(phi(x)) - np.mean(phi(y))) for phi in bank))


def fortet_mourier_proxy(d_w: float) -> float:
    """d_FM ≤ min(d_W, 2)."""
    return min(d_w, 2.0)


# ─── Convergenza stabile ────────────────────────────────────────────────

def stable_cf_limit(lam: float, mu: float, h: HurstLike) -> float:
    """E[exp(iμB₁ − λ²c_H²B₁²/2)] = (1+a)^{−1/2} exp(−μ²/(2(1+a))), a = λ²c_H²."""
    a = lam * lam * c_H(h) ** 2
    return (1.0 + a) ** -0.5 * math.exp(-mu * mu / (2.0 * (1.0 + a)))


def _paired(f_samples, b1_samples) -> Tuple[np.ndarray, np.ndarray]:
    f = np.asarray(f_samples, dtype=float).ravel()
    b = np.asarray(b1_samples, dtype=float).ravel()
    if f.size != b.size:
        raise ContractError(f"Campioni non appaiati: {f.size} e {b.size}")
    if f.size == 0:
        raise ContractError("Campioni vuoti")
    return f, b


def stable_cf_gap(f_samples, b1_samples, lam: float, mu: float, h: HurstLike) -> float:
    """|(1/M)Σ exp(i(μ b1_j + λ F_j)) − limite| (modulo complesso)."""
    f, b = _paired(f_samples, b1_samples)
    if lam == 0.0 and mu == 0.0:
        return 0.0
    empirical = np.mean(np.exp(1j * (mu * b + lam * f)))
    return float(abs(empirical - stable_cf_limit(lam, mu, h)))


def cf_standard_error(f_samples, b1_samples, lam: float, mu: float) -> float:
    f, b = _paired(f_samples, b1_samples)
    phase = mu * b + lam * f
    if f.size < 2:
        return 0.0
    var = np.var(np.cos(phase), ddof=1) + np.var(np.sin(phase), ddof=1)
    return float(math.sqrt(var / f.size))


def max_cf_gap(f_samples, b1_samples, h: HurstLike,
               lambdas: Optional[Sequence[float]] = None,
               mus: Optional[Sequence[float]] = None) -> Tuple[float, float]:
    """(gap massimo sulla griglia di frequenze, SE nel punto del massimo)."""
    lambdas = lambdas or config.DISTANCE_CONFIG['cf_lambdas']
    mus = mus or config.DISTANCE_CONFIG['cf_mus']
    best = (0.0, 0.0)
    for lam in lambdas:
        for mu in mus:
            gap = stable_cf_gap(f_samples, b1_samples, lam, mu, h)
            if gap >= best[0]:
                best = (gap, cf_standard_error(f_samples, b1_samples, lam, mu))
    return best


# ─── Bootstrap ──────────────────────────────────────────────────────────

def bootstrap_se(metric: Callable[[np.ndarray, np.ndarray], float], xs: SampleLike, ys: SampleLike,
                 resamples: Optional[int] = None, seed: int = 0) -> float:
    """Errore standard bootstrap di una metrica.

    A parità di numerosità gli indici sono appaiati (stesse repliche).
    """
    x, y = _values(xs), _values(ys)
    resamples = config.DISTANCE_CONFIG['bootstrap_resamples'] if resamples is None else resamples
    if resamples < 2:
        return 0.0
    rng = replica_stream(seed, 0, namespace=BOOTSTRAP_NAMESPACE)
    estimates = np.empty(resamples)
    for r in range(resamples):
        ix = rng.integers(0, x.size, x.size)
        iy = ix if x.size == y.size else rng.integers(0, y.size, y.size)
        estimates[r] = metric(x[ix], y[iy])
    return float(np.std(estimates, ddof=1))


# ─── Tassi ──────────────────────────────────────────────────────────────

@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    points: List[Tuple[float, float]] = field(default_factory=list)

    def predict(self, n: float) -> float:
        return math.exp(self.intercept) * n ** self.slope

    def to_dict(self) -> Dict[str, float]:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r_squared}


def rate_fit(ns: Sequence[float], ds: Sequence[float]) -> RateFit:
    """Minimi quadrati di log d su log n."""
    n = np.asarray(ns, dtype=float)
    d = np.asarray(ds, dtype=float)
    if n.size != d.size:
        raise ContractError(f"Lunghezze diverse: {n.size} livelli, {d.size} distanze")
    if n.size < 3:
        raise ContractError(f"Servono almeno 3 punti per la regressione, ricevuti {n.size}")
    if np.any(d <= 0) or np.any(n <= 0):
        raise ContractError("Distanze e livelli devono essere positivi")
    x, y = np.log(n), np.log(d)
    fit = stats.linregress(x, y)
    r2 = float(min(max(fit.rvalue ** 2, 0.0), 1.0))
    return RateFit(slope=float(fit.slope), intercept=float(fit.intercept), r_squared=r2,
                   points=list(zip(x.tolist(), y.tolist())))


def envelope_check(ns: Sequence[float], ds: Sequence[float], exponent: float,
                   factor: Optional[float] = None) -> Tuple[bool, float]:
    """Ĉ ancorata al primo livello; vero se ogni d ≤ factor·Ĉ·n^{−exponent}."""
    factor = factor or config.ACCEPTANCE_CONFIG['envelope_factor']
    n = np.asarray(ns, dtype=float)
    d = np.asarray(ds, dtype=float)
    if n.size == 0 or n.size != d.size:
        raise ContractError("Livelli e distanze vuoti o di lunghezza diversa")
    c_hat = float(d[0] * n[0] ** exponent)
    ok = bool(np.all(d[1:] <= factor * c_hat * n[1:] ** (-exponent)))
    return ok, c_hat
