"""
Functionals — funzionali delle traiettorie e campioni del limite misto gaussiano

  • c_H, sigma_H_series, rho_nm: costanti
  • quad_functional_An / skorohod_Fn: funzionale quadratico Aₙ e Fₙ = Aₙ − H nᴴ/(2H+n)
  • ito_Fn_half / an_ito_pair_half: integrale di Itô per H = 1/2 (accoppiato ad Aₙ)
  • weighted_qv_Fn / weighted_limit_sample: variazione quadratica pesata
  • WeightFunction, weight_bank: funzioni peso con derivate simboliche

Ogni funzione "singola" ha una controparte vettoriale sulle repliche (suffisso
_batch o sample_*) usata dal runner.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import integrate, special

import config
from .chaos_combinatorics import SmoothFunction
from .errors import AccuracyError, BudgetError, ContractError, DomainError
from .fbm_engine import FbmPath, Hurst, HurstLike, TimeGrid, as_hurst, rho_H, sample_paths

logger = logging.getLogger(__name__)


# ─── Costanti ───────────────────────────────────────────────────────────

def c_H(h: HurstLike) -> float:
    """c_H = √(H(2H−1)Γ(2H−1)) = √(H·Γ(2H)); vale 1/√2 in H = 1/2."""
    hh = as_hurst(h).h
    if hh < 0.5:
        raise DomainError(f"c_H definita per H ≥ 1/2, ricevuto H={hh}")
    return math.sqrt(hh * math.gamma(2.0 * hh))


def _check_sigma_domain(hh: float) -> None:
    if not 0.25 < hh < 0.75:
        raise DomainError(f"Serie di σ_H non convergente per H={hh} (serve 1/4 < H < 3/4)")


def sigma_H_truncation(h: HurstLike, tol: float = 1e-12) -> Tuple[int, float]:
    """(P, maggiorazione) per la serie di σ_H.

    I termini con |p| ≤ P si sommano esattamente; oltre P la coda è
    approssimata da 4c²ζ(4−4H, P+1), c = H|2H−1|, con errore residuo
    ≤ 4c² (P−1)^{4H−5}/(5−4H).
    """
    hh = as_hurst(h).h
    _check_sigma_domain(hh)
    if tol <= 0:
        raise ContractError(f"Tolleranza non positiva: {tol}")
    c = hh * abs(2.0 * hh - 1.0)
    if c == 0.0:
        return 1, 0.0
    exponent = 4.0 * hh - 5.0
    p = 2 + math.ceil((tol * (5.0 - 4.0 * hh) / (4.0 * c * c)) ** (1.0 / exponent))
    if p > 10 ** 8:
        raise BudgetError(f"Troncamento della serie σ_H oltre il budget (P={p})")
    bound = 4.0 * c * c * (p - 1) ** exponent / (5.0 - 4.0 * hh)
    return p, bound


def sigma_H_series(h: HurstLike, tol: float = 1e-12) -> float:
    """σ_H = ½ Σ_{p∈ℤ} (|p+1|^{2H} + |p−1|^{2H} − 2|p|^{2H})² = 2 Σ_p ρ_H(p)²."""
    hh = as_hurst(h).h
    p_max, _ = sigma_H_truncation(hh, tol)
    if hh == 0.5:
        return 2.0
    terms = np.asarray(rho_H(np.arange(1, p_max + 1), hh)) ** 2
    c = hh * abs(2.0 * hh - 1.0)
    tail = c * c * float(special.zeta(4.0 - 4.0 * hh, p_max + 1))
    # termini piccoli per primi
    one_sided = math.fsum(np.concatenate(([tail], terms[::-1])))
    return 2.0 * (1.0 + 2.0 * one_sided)


def rho_nm(n: int, m: int, h: HurstLike) -> float:
    """ρ_{n,m} = ∫₀¹∫₀ᵗ sⁿ tᵐ (t−s)^{2H−2} ds dt = Γ(n+1)Γ(2H−1)/(Γ(n+2H)(n+m+2H))."""
    hh = as_hurst(h).h
    if hh <= 0.5:
        raise DomainError(f"ρ_(n,m) definito per H > 1/2, ricevuto H={hh}")
    log_ratio = special.gammaln(n + 1) + special.gammaln(2 * hh - 1) - special.gammaln(n + 2 * hh)
    return float(np.exp(log_ratio) / (n + m + 2 * hh))


def rho_nm_quadrature(n: int, m: int, h: HurstLike) -> float:
    """Stessa costante per quadratura: integrale interno con peso (t−s)^{2H−2}."""
    hh = as_hurst(h).h
    if hh <= 0.5:
        raise DomainError(f"ρ_(n,m) definito per H > 1/2, ricevuto H={hh}")

    def inner(t: float) -> float:
        if t == 0.0:
            return 0.0
        value, _ = integrate.quad(lambda s: s ** n, 0.0, t, weight="alg", wvar=(0.0, 2 * hh - 2))
        return value

    outer, _ = integrate.quad(lambda t: t ** m * inner(t), 0.0, 1.0, epsabs=1e-13, epsrel=1e-10, limit=200)
    return float(outer)


def an_fn_gap(n: int, h: HurstLike) -> float:
    """Aₙ − Fₙ = H·nᴴ/(2H+n)."""
    hh = as_hurst(h).h
    return hh * n ** hh / (2 * hh + n)


# ─── Funzioni peso ──────────────────────────────────────────────────────

class WeightFunction(SmoothFunction):
    """Funzione peso f di una variabile, con derivate fino a max_order.

    growth_tag dichiara il tipo di crescita moderata ('bounded', 'polynomial').
    """

    def __init__(self, expr, name: Optional[str] = None, max_order: int = 6,
                 growth_tag: str = "bounded"):
        super().__init__(expr, variables=("x",), max_order=max_order, name=name)
        self.growth_tag = growth_tag

    @property
    def derivatives(self):
        return [self.derivative(i) for i in range(1, self.max_order + 1)]

    def scaled(self, c: float) -> "WeightFunction":
        return WeightFunction(c * self.expr, name=f"{c}*{self.name}",
                              max_order=self.max_order, growth_tag=self.growth_tag)

    def require_order(self, order: int) -> None:
        if order > self.max_order:
            raise ContractError(
                f"La funzione peso '{self.name}' fornisce {self.max_order} derivate, ne servono {order}"
            )

    def check_consistency(self, tol: float = 1e-4, lo: float = -3.0, hi: float = 3.0,
                          points: int = 61, step: float = 1e-5) -> bool:
        """Differenze centrate della derivata i contro la derivata i+1."""
        x = np.linspace(lo, hi, points)
        for i in range(self.max_order):
            fd = (self.derivative(i)(x + step) - self.derivative(i)(x - step)) / (2 * step)
            exact = self.derivative(i + 1)(x)
            if np.any(np.abs(fd - exact) > tol * np.maximum(1.0, np.abs(exact))):
                raise ContractError(f"Derivata {i + 1} di '{self.name}' incoerente")
        return True


def weight_bank() -> Dict[str, WeightFunction]:
    """Funzioni peso degli esperimenti."""
    return {
        "cos": WeightFunction("cos(x)", name="cos", growth_tag="bounded"),
        "quadratic": WeightFunction("1 + x**2", name="quadratic", growth_tag="polynomial"),
        "one": WeightFunction("1", name="one", growth_tag="bounded"),
        "identity": WeightFunction("x", name="identity", growth_tag="polynomial"),
    }


def get_weight(name: str) -> WeightFunction:
    bank = weight_bank()
    if name not in bank:
        raise ContractError(f"Funzione peso sconosciuta '{name}' (disponibili: {', '.join(bank)})")
    return bank[name]


# ─── Tipi ───────────────────────────────────────────────────────────────

class LimitKind(Enum):
    QUADRATIC = "quadratic"
    WEIGHTED_QV = "weighted_qv"


@dataclass
class LimitSpec:
    kind: LimitKind
    hurst: Hurst
    weight: Optional[WeightFunction] = None

    def __post_init__(self):
        self.hurst = as_hurst(self.hurst)
        if (self.kind == LimitKind.WEIGHTED_QV) != (self.weight is not None):
            raise ContractError("La funzione peso va indicata se e solo se kind = weighted_qv")

    @property
    def scale(self) -> float:
        """c_H per il funzionale quadratico, √σ_H per la variazione pesata."""
        if self.kind == LimitKind.QUADRATIC:
            return c_H(self.hurst)
        return math.sqrt(sigma_H_series(self.hurst))


@dataclass
class FunctionalSample:
    """Valore del funzionale e replica del limite S·η sulla stessa traiettoria."""
    n: int
    value: float
    limit_value: float
    b1: float
    s_value: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "value": self.value,
            "limit_value": self.limit_value,
            "b1": self.b1,
            "s_value": self.s_value,
        }


@dataclass
class FunctionalBatch:
    """Come FunctionalSample, vettoriale sulle repliche."""
    n: int
    values: np.ndarray
    limit_values: np.ndarray
    b1: np.ndarray
    s_values: np.ndarray
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.values.size)

    def sample(self, i: int) -> FunctionalSample:
        return FunctionalSample(n=self.n, value=float(self.values[i]),
                                limit_value=float(self.limit_values[i]),
                                b1=float(self.b1[i]), s_value=float(self.s_values[i]))


# ─── Aₙ ─────────────────────────────────────────────────────────────────

def an_u_grid(n: int, m: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Griglia uniforme in u (m punti, estremi inclusi) e immagini t = u^{1/n}."""
    if n < 1:
        raise ContractError(f"Livello n non valido: {n}")
    m = m or config.QUADRATURE_CONFIG['an_u_grid']
    cap = config.QUADRATURE_CONFIG['an_u_grid_cap']
    if m > cap:
        raise BudgetError(f"Griglia in u di {m} punti oltre il limite {cap}")
    if m < 2:
        raise ContractError(f"Griglia in u troppo piccola: {m}")
    u = np.linspace(0.0, 1.0, m)
    t = u ** (1.0 / n)
    t[-1] = 1.0
    return u, t


def evaluate_An(values, u, n: int, h: HurstLike) -> np.ndarray:
    """Aₙ = (nᴴ/2) ∫₀¹ (B₁² − B²_{u^{1/n}}) du per trapezi.

    `values` ha forma (repliche, len(u)) con B valutato in t = u^{1/n};
    l'ultima colonna è B₁.
    """
    hh = as_hurst(h).h
    b = np.atleast_2d(np.asarray(values, dtype=float))
    integrand = b[:, -1:] ** 2 - b ** 2
    return 0.5 * n ** hh * integrate.trapezoid(integrand, np.asarray(u, dtype=float), axis=1)


def expected_An(n: int, h: HurstLike, u_points: Optional[int] = None) -> float:
    """E[Aₙ] con la stessa regola dei trapezi: (nᴴ/2)·trap(1 − t^{2H}).

    Tende a an_fn_gap(n, h) al raffinarsi della griglia in u.
    """
    hh = as_hurst(h).h
    u, t = an_u_grid(n, u_points)
    return float(0.5 * n ** hh * integrate.trapezoid(1.0 - t ** (2.0 * hh), u))


def _check_quadratic_hurst(hh: float) -> None:
    if not 0.5 <= hh < 1.0:
        raise DomainError(f"Funzionale quadratico richiede 1/2 ≤ H < 1, ricevuto H={hh}")


def sample_An(n: int, h: HurstLike, seed: int, replicas: int, start: int = 0,
              u_points: Optional[int] = None) -> FunctionalBatch:
    """Aₙ e limite c_H|B₁|η per le repliche [start, start+replicas)."""
    hurst = as_hurst(h)
    _check_quadratic_hurst(hurst.h)
    u, t = an_u_grid(n, u_points)
    values, eta, diagnostics = sample_paths(TimeGrid(t), hurst, seed, replicas,
                                            start=start, with_eta=True)
    a_n = evaluate_An(values, u, n, hurst)
    b1 = values[:, -1]
    s = c_H(hurst) * np.abs(b1)
    return FunctionalBatch(n=n, values=a_n, limit_values=s * eta, b1=b1, s_values=s,
                           diagnostics=diagnostics)


def quad_functional_An(n: int, h: HurstLike, seed: int, replica: int = 0,
                       u_points: Optional[int] = None) -> FunctionalSample:
    """Aₙ = (n^{1+H}/2)∫₀¹ t^{n−1}(B₁² − B_t²)dt su una replica."""
    return sample_An(n, h, seed, 1, start=replica, u_points=u_points).sample(0)


def skorohod_Fn(n: int, h: HurstLike, seed: int, replica: int = 0,
                u_points: Optional[int] = None) -> float:
    """Fₙ = δ(uₙ) tramite Fₙ = Aₙ − H·nᴴ/(2H+n); stessa traiettoria di Aₙ."""
    sample = quad_functional_An(n, h, seed, replica, u_points)
    return sample.value - an_fn_gap(n, h)


# ─── Itô (H = 1/2) ──────────────────────────────────────────────────────

def _ito_sum(values: np.ndarray, times: np.ndarray, n: int) -> np.ndarray:
    """√n Σ_k t_kⁿ B_{t_k} (B_{t_{k+1}} − B_{t_k}) per riga."""
    left = values[:, :-1]
    return math.sqrt(n) * np.sum(times[:-1] ** n * left * np.diff(values, axis=1), axis=1)


def _check_ito_grid(grid: TimeGrid, n: int) -> None:
    if not (grid.contains_zero and grid.is_uniform and grid.points[-1] == 1.0):
        raise ContractError("Somma di Itô richiede la griglia uniforme {k/m} su [0, 1]")
    steps = len(grid) - 1
    needed = config.QUADRATURE_CONFIG['ito_resolution'] * n
    if steps < needed:
        raise AccuracyError(f"Griglia di {steps} passi insufficiente per n={n} (servono ≥ {needed})")


def ito_Fn_half(path: FbmPath, n: int) -> float:
    """Fₙ = √n ∫₀¹ tⁿ B_t dB_t con somma di Riemann–Itô a punto sinistro."""
    if not path.hurst.is_brownian:
        raise DomainError(f"ito_Fn_half richiede H = 1/2, ricevuto H={path.hurst.h}")
    _check_ito_grid(path.grid, n)
    return float(_ito_sum(path.values[np.newaxis, :], path.grid.points, n)[0])


def ito_Fn_batch(values, grid: TimeGrid, n: int) -> np.ndarray:
    _check_ito_grid(grid, n)
    return _ito_sum(np.atleast_2d(values), grid.points, n)


def an_ito_pair_half(n: int, seed: int, replicas: int, start: int = 0,
                     u_points: Optional[int] = None,
                     ito_steps: Optional[int] = None) -> Tuple[FunctionalBatch, np.ndarray]:
    """Aₙ e Fₙ (Itô) sulla stessa traiettoria browniana.

    La traiettoria vive sull'unione della griglia t = u^{1/n} e della griglia
    uniforme di Itô; per H = 1/2 gli incrementi indipendenti sono esatti.
    """
    hurst = Hurst(0.5)
    u, t = an_u_grid(n, u_points)
    steps = ito_steps or config.QUADRATURE_CONFIG['ito_resolution'] * n
    ito_grid = TimeGrid.uniform(steps)
    _check_ito_grid(ito_grid, n)

    union = np.union1d(t, ito_grid.points)
    values, eta, diagnostics = sample_paths(TimeGrid(union), hurst, seed, replicas,
                                            start=start, with_eta=True)
    a_n = evaluate_An(values[:, np.searchsorted(union, t)], u, n, hurst)
    f_n = _ito_sum(values[:, np.searchsorted(union, ito_grid.points)], ito_grid.points, n)
    b1 = values[:, -1]
    s = c_H(hurst) * np.abs(b1)
    batch = FunctionalBatch(n=n, values=a_n, limit_values=s * eta, b1=b1, s_values=s,
                            diagnostics=diagnostics)
    return batch, f_n


def sample_Fn(n: int, h: HurstLike, seed: int, replicas: int, start: int = 0,
              u_points: Optional[int] = None) -> FunctionalBatch:
    """Fₙ per 1/2 ≤ H < 1 (Itô per H = 1/2, Skorohod via Aₙ altrimenti)."""
    hurst = as_hurst(h)
    if hurst.is_brownian:
        batch, f_n = an_ito_pair_half(n, seed, replicas, start, u_points)
        batch.values = f_n
        return batch
    batch = sample_An(n, hurst, seed, replicas, start, u_points)
    batch.values = batch.values - an_fn_gap(n, hurst)
    return batch


# ─── Variazione quadratica pesata ───────────────────────────────────────

def qv_level(grid: TimeGrid) -> int:
    """n tale che la griglia sia esattamente {0, 1/n, …, 1}."""
    n = len(grid) - 1
    if n < 1 or not grid.contains_zero or not grid.is_uniform or grid.points[-1] != 1.0:
        raise ContractError("La variazione pesata richiede la griglia {k/n : k = 0..n}")
    return n


def weighted_qv_batch(values, f: WeightFunction, h: HurstLike) -> np.ndarray:
    """Fₙ = n^{2H−1/2} Σ_{k<n} f(B_{k/n})[(ΔB_{k/n})² − n^{−2H}] per riga."""
    hh = as_hurst(h).h
    b = np.atleast_2d(np.asarray(values, dtype=float))
    n = b.shape[1] - 1
    if n < 1:
        raise ContractError("Servono almeno due punti per la variazione pesata")
    increments = np.diff(b, axis=1)
    centered = increments ** 2 - n ** (-2.0 * hh)
    return n ** (2.0 * hh - 0.5) * np.sum(f(b[:, :-1]) * centered, axis=1)


def weighted_qv_Fn(path: FbmPath, f: WeightFunction, h: Optional[HurstLike] = None) -> float:
    qv_level(path.grid)
    hurst = path.hurst if h is None else as_hurst(h)
    return float(weighted_qv_batch(path.values, f, hurst)[0])


def weighted_limit_batch(values, f: WeightFunction, h: HurstLike, eta) -> np.ndarray:
    """√σ_H · √((1/n)Σ_k f²(B_{k/n})) · η per riga."""
    b = np.atleast_2d(np.asarray(values, dtype=float))
    scale = math.sqrt(sigma_H_series(h))
    s = scale * np.sqrt(np.mean(f(b[:, :-1]) ** 2, axis=1))
    return s * np.asarray(eta, dtype=float)


def weighted_limit_sample(path: FbmPath, f: WeightFunction, h: HurstLike, eta: float) -> float:
    qv_level(path.grid)
    return float(weighted_limit_batch(path.values, f, h, eta)[0])


def _check_qv_hurst(hh: float) -> None:
    if not 0.25 < hh <= 0.5:
        raise DomainError(f"Variazione pesata richiede 1/4 < H ≤ 1/2, ricevuto H={hh}")


def sample_weighted_qv(n: int, f: WeightFunction, h: HurstLike, seed: int, replicas: int,
                       start: int = 0) -> FunctionalBatch:
    """Fₙ pesata e limite √σ_H·√(∫f²)·η sulle repliche [start, start+replicas)."""
    hurst = as_hurst(h)
    _check_qv_hurst(hurst.h)
    values, eta, diagnostics = sample_paths(TimeGrid.uniform(n), hurst, seed, replicas,
                                            start=start, with_eta=True)
    f_n = weighted_qv_batch(values, f, hurst)
    limit = weighted_limit_batch(values, f, hurst, eta)
    s = weighted_limit_batch(values, f, hurst, np.ones(values.shape[0]))
    return FunctionalBatch(n=n, values=f_n, limit_values=limit, b1=values[:, -1], s_values=s,
                           diagnostics=diagnostics)
