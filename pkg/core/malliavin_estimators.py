"""
Malliavin Estimators - ingredienti dei bound e loro assemblaggio

Due livelli:
  1. Aritmetica pura: delta_bound, kolmogorov_transfer, tv_transfer,
     e_abs_S_neg_alpha, bound analitici per il funzionale quadratico,
     assemble_theorem51_bound.
  2. Monte Carlo: estimate_prop36_ingredients (H = 1/2) ed
     estimate_weighted_qv_terms (cinque prodotti interni della variazione
     pesata, H ∈ (1/4, 1/2]).

Gli stimatori Monte Carlo girano a blocchi su ReplicaPool e restituiscono
coppie (media, errore standard) fuse in ordine di blocco.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, special

import config
from .chaos_combinatorics import BoundTerm, theorem51_terms
from .errors import AccuracyError, ContractError, DomainError
from .fbm_engine import HurstLike, TimeGrid, alpha_matrix, as_hurst, rho_H, sample_paths
from .functionals import WeightFunction, c_H, rho_nm, sigma_H_series
from .replica_pool import ReplicaChunk, ReplicaPool, RunningStats, merge_block_stats

logger = logging.getLogger(__name__)

SQRT_2PI = math.sqrt(2.0 * math.pi)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


# ═══════════════════════════════════════════════════════════════════════
# Tipi
# ═══════════════════════════════════════════════════════════════════════

@dataclass
class BoundIngredients:
    """E|⟨u,DF⟩ − S²|, E|⟨u,DS²⟩|, E|F|, E[S] con i relativi errori standard."""
    e_inner_uDF_minus_S2: float
    e_inner_uDS2: float
    e_abs_F: float = 0.0
    e_S: float = 0.0
    std_errors: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        values = (self.e_inner_uDF_minus_S2, self.e_inner_uDS2, self.e_abs_F, self.e_S)
        if any(v < 0 for v in values):
            raise ContractError(f"Ingredienti negativi: {values}")
        if len(self.std_errors) != len(values):
            raise ContractError("std_errors deve avere la stessa arità degli ingredienti")

    def to_dict(self) -> Dict[str, float]:
        return {
            "e_inner_uDF_minus_S2": self.e_inner_uDF_minus_S2,
            "e_inner_uDS2": self.e_inner_uDS2,
            "e_abs_F": self.e_abs_F,
            "e_S": self.e_S,
            "std_errors": list(self.std_errors),
        }


@dataclass
class BoundReport:
    n: int
    delta: float
    kolmogorov_bound: float
    alpha: float
    tv_bound: Optional[float] = None
    provenance: str = "analytic"

    def __post_init__(self):
        if self.delta < 0 or self.kolmogorov_bound < 0:
            raise ContractError("Bound negativo")
        if self.provenance not in ("analytic", "monte_carlo"):
            raise ContractError(f"Provenienza sconosciuta: {self.provenance}")

    def to_dict(self) -> Dict[str, object]:
        return {
            "n": self.n,
            "delta": self.delta,
            "kolmogorov_bound": self.kolmogorov_bound,
            "alpha": self.alpha,
            "tv_bound": self.tv_bound,
            "provenance": self.provenance,
        }


# ═══════════════════════════════════════════════════════════════════════
# Aritmetica dei bound
# ═══════════════════════════════════════════════════════════════════════

def delta_components(ing: BoundIngredients) -> Tuple[float, float]:
    """(Φ₁, Φ₂) con Φ₂ = E|⟨u,DF⟩−S²|/√(2π) + (√2/3)E|⟨u,DS²⟩|."""
    phi2 = ing.e_inner_uDF_minus_S2 / SQRT_2PI + (math.sqrt(2.0) / 3.0) * ing.e_inner_uDS2
    phi1 = SQRT_2_OVER_PI * (2.0 + ing.e_S + ing.e_abs_F)
    return phi1, phi2


def delta_bound(ing: BoundIngredients) -> float:
    """Δ = 3 Φ₂^{1/3} max{Φ₂, √(2/π)(2 + E[S] + E|F|)}^{2/3}."""
    phi1, phi2 = delta_components(ing)
    return 3.0 * phi2 ** (1.0 / 3.0) * max(phi2, phi1) ** (2.0 / 3.0)


def optimal_t0(phi1: float, phi2: float) -> float:
    """Punto di taglio dell'interpolazione dietro Δ, in (0, 1]."""
    if phi1 <= 0:
        raise ContractError(f"Φ₁ deve essere positivo, ricevuto {phi1}")
    return min(1.0, (2.0 * phi2 / phi1) ** (2.0 / 3.0))


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"α deve stare in (0, 1], ricevuto {alpha}")


def kolmogorov_transfer(delta: float, alpha: float, e_S_neg_alpha: float) -> float:
    """d_Kol ≤ Δ^{α/(α+1)} (1 + E|S|^{−α})."""
    _check_alpha(alpha)
    if delta < 0:
        raise ContractError(f"Δ negativo: {delta}")
    if e_S_neg_alpha < 0 or not math.isfinite(e_S_neg_alpha):
        raise ContractError(f"E|S|^(-α) non valido: {e_S_neg_alpha}")
    return delta ** (alpha / (alpha + 1.0)) * (1.0 + e_S_neg_alpha)


def tv_transfer(d: float, p: int, c: float) -> float:
    """d_TV ≤ c·d^{1/(1+2p)} per variabili nelle prime p camere di Wiener."""
    if d < 0 or p < 1 or c <= 0:
        raise ContractError(f"Argomenti non validi: d={d}, p={p}, c={c}")
    return c * d ** (1.0 / (1.0 + 2.0 * p))


def e_abs_S_neg_alpha(alpha: float, h: HurstLike) -> float:
    """E|S|^{−α} per S = c_H|B₁|: c_H^{−α} 2^{−α/2} Γ((1−α)/2)/Γ(½), α < 1."""
    _check_alpha(alpha)
    if alpha >= 1.0:
        raise DomainError("E|B₁|^(-1) è infinito: serve α < 1")
    log_moment = (-alpha / 2.0) * math.log(2.0) + special.gammaln((1.0 - alpha) / 2.0) \
        - special.gammaln(0.5)
    return float(c_H(h) ** (-alpha) * math.exp(log_moment))


def wasserstein_exponent(h: HurstLike) -> float:
    """Esponente di d_W(Fₙ, Sη): 1/6 in H = 1/2, (1−H)/3 per H > 1/2."""
    hh = as_hurst(h).h
    if hh < 0.5:
        raise DomainError(f"Esponente definito per H ≥ 1/2, ricevuto H={hh}")
    return 1.0 / 6.0 if hh == 0.5 else (1.0 - hh) / 3.0


def kolmogorov_exponent(h: HurstLike) -> float:
    return wasserstein_exponent(h) / 2.0


def tv_exponent(h: HurstLike) -> float:
    """(1−H)/15: esponente di Wasserstein composto con tv_transfer a p = 2."""
    hh = as_hurst(h).h
    if hh < 0.5:
        raise DomainError(f"Esponente definito per H ≥ 1/2, ricevuto H={hh}")
    return (1.0 - hh) / 15.0


# ─── Funzionale quadratico: bound analitici ─────────────────────────────

def prop36_analytic_ingredients(n: int) -> BoundIngredients:
    """Maggiorazioni esatte degli ingredienti per H = 1/2."""
    if n < 1:
        raise ContractError(f"Livello n non valido: {n}")
    return BoundIngredients(
        e_inner_uDF_minus_S2=math.sqrt(2.0) / math.sqrt(n) + 1.0 / (4.0 * n),
        e_inner_uDS2=1.0 / math.sqrt(n),
        e_abs_F=math.sqrt(n) / math.sqrt(2.0 * n + 2.0),
        e_S=1.0 / math.sqrt(math.pi),
    )


def prop36_constant_C0() -> float:
    """lim Δₙ·n^{1/6} con gli ingredienti analitici."""
    phi2_rate = 1.0 / math.sqrt(math.pi) + math.sqrt(2.0) / 3.0
    phi1_limit = SQRT_2_OVER_PI * (2.0 + 1.0 / math.sqrt(math.pi) + 1.0 / math.sqrt(2.0))
    return 3.0 * phi2_rate ** (1.0 / 3.0) * phi1_limit ** (2.0 / 3.0)


def build_bound_report(n: int, ingredients: Optional[BoundIngredients] = None,
                       delta: Optional[float] = None, alpha: float = 0.5,
                       h: HurstLike = 0.5, tv_c: Optional[float] = None,
                       provenance: str = "analytic") -> BoundReport:
    """BoundReport da ingredienti o da un Δ già calcolato."""
    if (ingredients is None) == (delta is None):
        raise ContractError("Indicare esattamente uno tra ingredients e delta")
    if delta is None:
        delta = delta_bound(ingredients)
    _check_alpha(alpha)
    if alpha < 1.0:
        kol = kolmogorov_transfer(delta, alpha, e_abs_S_neg_alpha(alpha, h))
    else:
        # E|S|^{-1} = ∞: il trasferimento non dà informazione
        logger.info("α = 1: bound di Kolmogorov non informativo (n=%d)", n)
        kol = math.inf
    tv = tv_transfer(delta, 2, tv_c) if tv_c is not None else None
    return BoundReport(n=n, delta=delta, kolmogorov_bound=kol, alpha=alpha, tv_bound=tv,
                       provenance=provenance)


def prop36_analytic_report(n: int, alpha: float = 0.5) -> BoundReport:
    return build_bound_report(n, ingredients=prop36_analytic_ingredients(n), alpha=alpha, h=0.5)


def skorohod_analytic_terms(n: int, h: HurstLike) -> Dict[str, float]:
    """Termini aₙ, bₙ e la forma di E|⟨u,DS²⟩| per 1/2 < H < 1 (costanti omesse).

    Tassi attesi: aₙ ~ n^{−H}, bₙ ~ n^{−1}, ds2 ~ n^{H−1}.
    """
    hh = as_hurst(h).h
    if not 0.5 < hh < 1.0:
        raise DomainError(f"Richiesto 1/2 < H < 1, ricevuto H={hh}")
    k = hh * (2 * hh - 1)
    rho_nn = rho_nm(n, n, hh)
    rho_diff = max(rho_nn - rho_nm(n + 1, n, hh), 0.0)
    a_n = 4 * k * n ** (2 * hh) * rho_nn ** (1 - hh) * rho_diff ** hh
    log_ratio = special.gammaln(n + 1) - special.gammaln(n + 2 * hh)
    b_n = k * math.gamma(2 * hh - 1) * abs(
        2 * n ** (2 * hh) * math.exp(log_ratio) / (2 * n + 2 * hh) - 1
    )
    # ∫₀¹|t−s|^{2H−2}dt = (s^{2H−1} + (1−s)^{2H−1})/(2H−1)
    ds2 = n ** hh * (1.0 / (n + 3 * hh) + special.beta(n + hh + 1, 2 * hh)) / (2 * hh - 1)
    return {"a_n": float(a_n), "b_n": float(b_n), "ds2": float(ds2)}


# ═══════════════════════════════════════════════════════════════════════
# Monte Carlo: funzionale quadratico, H = 1/2
# ═══════════════════════════════════════════════════════════════════════

def _prop36_grid(n: int, steps: Optional[int]) -> TimeGrid:
    needed = config.QUADRATURE_CONFIG['ito_resolution'] * n
    steps = steps or needed
    if steps < needed:
        raise AccuracyError(f"Griglia di {steps} passi insufficiente per n={n} (servono ≥ {needed})")
    return TimeGrid.uniform(steps)


def prop36_block(n: int, seed: int, start: int, size: int,
                 steps: Optional[int] = None) -> Dict[str, np.ndarray]:
    """Repliche [start, start+size) delle quantità di Malliavin per H = 1/2.

    ⟨u,DF⟩  = n∫s^{2n}B²ds + n∫sⁿ B_s J_s ds,  J_s = ∫_s¹ tⁿ dB_t
    ⟨u,DS²⟩ = √n B₁ ∫ sⁿ B_s ds,               S² = B₁²/2
    """
    grid = _prop36_grid(n, steps)
    t = grid.points
    b, _ = sample_paths(grid, 0.5, seed, size, start=start)
    increments = np.diff(b, axis=1)
    weighted = t[:-1] ** n * increments
    # J_k = Σ_{j≥k} t_jⁿ ΔB_j, J_M = 0
    j = np.zeros_like(b)
    j[:, :-1] = np.cumsum(weighted[:, ::-1], axis=1)[:, ::-1]
    tn = t ** n
    u_df = n * integrate.trapezoid(tn ** 2 * b ** 2, t, axis=1) \
        + n * integrate.trapezoid(tn * b * j, t, axis=1)
    b1 = b[:, -1]
    s2 = 0.5 * b1 ** 2
    u_ds2 = math.sqrt(n) * b1 * integrate.trapezoid(tn * b, t, axis=1)
    f_n = math.sqrt(n) * np.sum(t[:-1] ** n * b[:, :-1] * increments, axis=1)
    return {
        "inner_uDF_minus_S2": np.abs(u_df - s2),
        "inner_uDS2": np.abs(u_ds2),
        "abs_F": np.abs(f_n),
        "S": np.sqrt(s2),
        "S2": s2,
        "F": f_n,
    }


def _block_stats(arrays: Dict[str, np.ndarray]) -> Dict[str, RunningStats]:
    return {name: RunningStats().push_many(values) for name, values in arrays.items()}


def estimate_prop36_statistics(n: int, replicas: int, seed: int, steps: Optional[int] = None,
                               pool: Optional[ReplicaPool] = None) -> Dict[str, RunningStats]:
    """Statistiche (media, SE) di tutte le quantità di prop36_block."""
    _prop36_grid(n, steps)
    pool = pool or ReplicaPool(max_workers=1, chunk_size=config.RUN_CONFIG['chunk_size'])

    def work(chunk: ReplicaChunk):
        return _block_stats(prop36_block(n, seed, chunk.start, chunk.size, steps))

    return merge_block_stats(pool.map(work, replicas))


def estimate_prop36_ingredients(n: int, replicas: int, seed: int, steps: Optional[int] = None,
                                pool: Optional[ReplicaPool] = None) -> BoundIngredients:
    """Stime Monte Carlo degli ingredienti di Δ per il funzionale quadratico, H = 1/2."""
    stats = estimate_prop36_statistics(n, replicas, seed, steps, pool)
    names = ("inner_uDF_minus_S2", "inner_uDS2", "abs_F", "S")
    return BoundIngredients(
        e_inner_uDF_minus_S2=stats[names[0]].mean,
        e_inner_uDS2=stats[names[1]].mean,
        e_abs_F=stats[names[2]].mean,
        e_S=stats[names[3]].mean,
        std_errors=tuple(stats[name].std_error for name in names),
    )


# ═══════════════════════════════════════════════════════════════════════
# Monte Carlo: variazione quadratica pesata
# ═══════════════════════════════════════════════════════════════════════

WEIGHTED_TERMS = ("u_D2F", "u_DF_DF", "u_DS2_DS2", "u_D2S2", "u_DF_DS2")


@dataclass
class WeightedKernels:
    """Matrici deterministiche dei prodotti interni sulla griglia {k/n}.

    beta[j, k]  = ⟨δ_j, δ_k⟩ = n^{−2H} ρ_H(j−k)
    e[j, k]     = ⟨δ_j, 1_[0,k/n]⟩
    """
    n: int
    hurst: float
    sigma: float
    beta: np.ndarray = field(repr=False)
    e: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, n: int, h: HurstLike) -> "WeightedKernels":
        hh = as_hurst(h).h
        if not 0.25 < hh <= 0.5:
            raise DomainError(f"Variazione pesata richiede 1/4 < H ≤ 1/2, ricevuto H={hh}")
        idx = np.arange(n)
        beta = n ** (-2.0 * hh) * rho_H(idx[:, None] - idx[None, :], hh)
        e = alpha_matrix(idx / n, n, hh).T
        return cls(n=n, hurst=hh, sigma=sigma_H_series(hh), beta=np.asarray(beta), e=e)

    @property
    def scale(self) -> float:
        return self.n ** (2.0 * self.hurst - 0.5)


def weighted_terms_from_paths(values, f: WeightFunction, kernels: WeightedKernels) -> Dict[str, np.ndarray]:
    """I cinque prodotti interni (in valore assoluto) e l'aggregato, per riga.

    values ha forma (repliche, n+1) sulla griglia {k/n}.
    """
    f.require_order(2)
    b = np.atleast_2d(np.asarray(values, dtype=float))
    n = kernels.n
    if b.shape[1] != n + 1:
        raise ContractError(f"Traiettorie di {b.shape[1]} punti, attesi {n + 1}")
    beta, e = kernels.beta, kernels.e
    c = kernels.scale
    coeff = 2.0 * kernels.sigma / n

    x = b[:, :-1]
    db = np.diff(b, axis=1)
    i2 = db ** 2 - n ** (-2.0 * kernels.hurst)
    f0, f1, f2 = f(x), f.derivative(1)(x), f.derivative(2)(x)

    d2f = c * c * (
        2.0 * np.sum(f0 * (f0 @ (beta * beta)), axis=1)
        + 4.0 * np.sum(f0 * ((f1 * db) @ (beta * e).T), axis=1)
        + np.sum(f0 * ((f2 * i2) @ (e * e).T), axis=1)
    )
    centering = kernels.sigma * np.mean(f0 ** 2, axis=1)
    w = (f0 * db) @ (2.0 * beta).T + (f1 * i2) @ e.T
    z = coeff * ((f0 * f1) @ e.T)

    terms = {
        "u_D2F": np.abs(d2f - centering),
        "u_DF_DF": np.abs(c ** 3 * np.sum(f0 * w * w, axis=1)),
        "u_DS2_DS2": np.abs(c * np.sum(f0 * z * z, axis=1)),
        "u_D2S2": np.abs(c * coeff * np.sum(f0 * ((f1 * f1 + f0 * f2) @ (e * e).T), axis=1)),
        "u_DF_DS2": np.abs(c * c * np.sum(f0 * w * z, axis=1)),
    }
    terms["aggregate"] = aggregate_weighted_bound(terms)
    return terms


def aggregate_weighted_bound(terms: Mapping[str, np.ndarray]) -> np.ndarray:
    """½·T1 + T2 + T3 + T4 + T5 (costanti unitarie, norme di φ unitarie)."""
    missing = [name for name in WEIGHTED_TERMS if name not in terms]
    if missing:
        raise ContractError(f"Termini mancanti: {missing}")
    return 0.5 * np.asarray(terms["u_D2F"]) + sum(np.asarray(terms[name]) for name in WEIGHTED_TERMS[1:])


def estimate_weighted_qv_terms(n: int, f: WeightFunction, h: HurstLike, replicas: int, seed: int,
                               pool: Optional[ReplicaPool] = None) -> Dict[str, RunningStats]:
    """Stime (media, SE) dei cinque termini e dell'aggregato."""
    f.require_order(2)
    kernels = WeightedKernels.build(n, h)
    grid = TimeGrid.uniform(n)
    pool = pool or ReplicaPool(max_workers=1, chunk_size=config.RUN_CONFIG['chunk_size'])

    def work(chunk: ReplicaChunk):
        b, _ = sample_paths(grid, kernels.hurst, seed, chunk.size, start=chunk.start)
        return _block_stats(weighted_terms_from_paths(b, f, kernels))

    stats = merge_block_stats(pool.map(work, replicas))
    logger.debug("Termini pesati n=%d H=%.3f: %s", n, kernels.hurst,
                 {k: round(v.mean, 6) for k, v in stats.items()})
    return stats


# ═══════════════════════════════════════════════════════════════════════
# Assemblaggio del bound generale
# ═══════════════════════════════════════════════════════════════════════

TermKey = Tuple[int, object, Tuple[int, ...]]


def theorem51_weights(q_list: Sequence[int], d: int, m: int) -> List[BoundTerm]:
    """Tutti gli addendi (w2) per le coordinate k = 0..d−1."""
    if len(q_list) != d:
        raise ContractError(f"q_list ha {len(q_list)} elementi, attesi d={d}")
    terms: List[BoundTerm] = []
    for k, q in enumerate(q_list):
        terms.extend(theorem51_terms(q, m, d, k))
    return terms


def assemble_theorem51_bound(q_list: Sequence[int], d: int, m: int,
                             phi_norms: Mapping[Tuple[int, ...], float],
                             term_estimates: Mapping[TermKey, float],
                             second_order: Optional[Mapping[Tuple[int, ...], float]] = None) -> float:
    """(w1) + (w2).

    (w1) = ½ Σ ‖∂²φ‖·stima, con chiavi = ordini di derivazione in second_order
    (w2) = Σ_k Σ_{β∈ℬ₀(q_k)} Σ_l Ŵ(β,l)·‖∂★φ‖·E[(k, β, l)]
    """
    total = 0.0
    for order, value in (second_order or {}).items():
        if order not in phi_norms:
            raise ContractError(f"Norma di φ mancante per l'ordine {order}")
        total += 0.5 * phi_norms[order] * value
    for term in theorem51_weights(q_list, d, m):
        if term.order not in phi_norms:
            raise ContractError(f"Norma di φ mancante per l'ordine {term.order}")
        if term.key not in term_estimates:
            raise ContractError(f"Stima mancante per il termine (k={term.k}, l={term.ls}): {term.beta}")
        total += term.w_hat_float * phi_norms[term.order] * term_estimates[term.key]
    return total


def first_order_constants() -> Tuple[Fraction, Fraction]:
    """Costanti (½, ⅓) del caso q = 1, m = 0, d = 1, in aritmetica razionale.

    La seconda è ½·Ŵ·½: Ŵ = B(½, 2) dall'unico addendo del terzo ordine e
    S⟨u,DS⟩ = ½⟨u,DS²⟩.
    """
    third = [t for t in theorem51_terms(1, 0, 1, 0) if t.order == (3,)]
    if len(third) != 1:
        raise ContractError("Riduzione q = 1 inattesa: serve un solo termine del terzo ordine")
    return Fraction(1, 2), Fraction(1, 2) * third[0].w_hat * Fraction(1, 2)
