"""
fBm Engine — covarianze esatte e campionamento del moto browniano frazionario

Contiene:
  • Hurst, TimeGrid, FbmPath: tipi di dominio validati
  • fbm_covariance / indicator_inner / rho_H: aritmetica delle covarianze
  • sample_path / sample_paths: campionamento (embedding circolante su
                                     griglie uniformi, Cholesky altrove)
  • lemma61_quantities: somme discrete dei prodotti ⟨δ_j, δ_k⟩ e
                                     ⟨1_[0,t], δ_k⟩ per H < 1/2

Ogni replica usa il proprio flusso replica_stream(seed, replica): stessa
(griglia, H, seed, replica) → valori identici bit a bit.
"""

import logging
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

import config
from .errors import ContractError, GenerationError, HypothesisError, ParameterError
from .replica_pool import replica_stream

logger = logging.getLogger(__name__)


# ─── Tipi di dominio ────────────────────────────────────────────────────

@dataclass(frozen=True)
class Hurst:
    """Parametro di Hurst, 0 < h < 1."""
    h: float

    def __post_init__(self):
        try:
            value = float(self.h)
        except (TypeError, ValueError):
            raise ParameterError(f"Parametro di Hurst non numerico: {self.h!r}")
        if not np.isfinite(value) or not 0.0 < value < 1.0:
            raise ParameterError(f"Parametro di Hurst fuori da (0,1): {self.h}")
        object.__setattr__(self, "h", value)

    def __float__(self) -> float:
        return self.h

    @property
    def is_brownian(self) -> bool:
        return self.h == 0.5


HurstLike = Union[Hurst, float]


def as_hurst(h: HurstLike) -> Hurst:
    return h if isinstance(h, Hurst) else Hurst(h)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Griglia di tempi strettamente crescente in [0, horizon]."""
    points: np.ndarray
    horizon: float = 0.0

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).ravel()
        if pts.size == 0:
            raise ParameterError("Griglia vuota")
        if not np.all(np.isfinite(pts)):
            raise ParameterError("Griglia con valori non finiti")
        if pts[0] < 0:
            raise ParameterError(f"Primo punto della griglia negativo: {pts[0]}")
        if pts.size > 1 and np.any(np.diff(pts) <= 0):
            raise ParameterError("Griglia non strettamente crescente")
        horizon = float(self.horizon) if self.horizon else float(pts[-1])
        if horizon < pts[-1]:
            raise ParameterError(f"Orizzonte {horizon} minore dell'ultimo punto {pts[-1]}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "horizon", horizon)

    @classmethod
    def uniform(cls, m: int, horizon: float = 1.0) -> "TimeGrid":
        """Griglia {k·T/m : k = 0..m}."""
        if m < 1:
            raise ParameterError(f"Numero di passi non valido: {m}")
        return cls(np.arange(m + 1) * (horizon / m), horizon)

    def __len__(self) -> int:
        return int(self.points.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.horizon == other.horizon and np.array_equal(self.points, other.points)

    __hash__ = None

    @property
    def contains_zero(self) -> bool:
        return self.points[0] == 0.0

    @property
    def step(self) -> float:
        """Passo nominale: ultimo punto / numero di incrementi."""
        increments = len(self) - 1 if self.contains_zero else len(self)
        return float(self.points[-1] / increments) if increments else 0.0

    @property
    def is_uniform(self) -> bool:
        """True se i punti sono {k·Δ} con k consecutivi da 0 o da 1."""
        if len(self) < 2:
            return False
        step = self.step
        first = 0 if self.contains_zero else 1
        expected = (np.arange(len(self)) + first) * step
        return bool(np.allclose(self.points, expected, rtol=1e-10, atol=1e-14))


@dataclass(eq=False)
class FbmPath:
    """Una traiettoria fBm realizzata sulla griglia."""
    grid: TimeGrid
    values: np.ndarray
    hurst: Hurst
    seed: int
    replica: int = 0
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.grid),):
            raise ContractError(
                f"Valori ({self.values.shape}) e griglia ({len(self.grid)}) di lunghezza diversa"
            )

    @property
    def increments(self) -> np.ndarray:
        """Incrementi tra punti consecutivi (il primo parte da B_0 = 0)."""
        start = self.values if self.grid.contains_zero else np.concatenate(([0.0], self.values))
        return np.diff(start)

    @property
    def terminal(self) -> float:
        return float(self.values[-1])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "hurst": self.hurst.h,
            "seed": self.seed,
            "replica": self.replica,
            "grid_size": len(self.grid),
            "horizon": self.grid.horizon,
            "diagnostics": dict(self.diagnostics),
        }


# ─── Covarianze ─────────────────────────────────────────────────────────

def fbm_covariance(s, t, h: HurstLike):
    """E(B_s B_t) = ½(t^{2H} + s^{2H} − |t−s|^{2H}); vettorizzata.

    Per H = 1/2 restituisce min(s, t) esatto.
    """
    hh = as_hurst(h).h
    s_arr = np.asarray(s, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    if np.any(s_arr < 0) or np.any(t_arr < 0):
        raise ParameterError("Tempi negativi non ammessi nella covarianza fBm")
    if hh == 0.5:
        out = np.minimum(s_arr, t_arr)
    else:
        two_h = 2.0 * hh
        out = 0.5 * (np.power(t_arr, two_h) + np.power(s_arr, two_h)
                     - np.power(np.abs(t_arr - s_arr), two_h))
    return float(out) if np.ndim(out) == 0 else out


def indicator_inner(a, b, c, d, h: HurstLike):
    """⟨1_[a,b], 1_[c,d]⟩ = R(b,d) − R(b,c) − R(a,d) + R(a,c)."""
    a, b, c, d = (np.asarray(x, dtype=float) for x in (a, b, c, d))
    if np.any(a < 0) or np.any(c < 0):
        raise ParameterError("Estremi degli intervalli negativi")
    if np.any(a > b) or np.any(c > d):
        raise ParameterError("Intervallo con estremo sinistro maggiore del destro")
    return (fbm_covariance(b, d, h) - fbm_covariance(b, c, h)
            - fbm_covariance(a, d, h) + fbm_covariance(a, c, h))


def rho_H(p, h: HurstLike):
    """Correlazione degli incrementi unitari a ritardo p: ½(|p+1|^{2H} + |p−1|^{2H} − 2|p|^{2H})."""
    two_h = 2.0 * as_hurst(h).h
    p_arr = np.abs(np.asarray(p, dtype=float))
    out = 0.5 * (np.power(p_arr + 1.0, two_h) + np.power(np.abs(p_arr - 1.0), two_h)
                 - 2.0 * np.power(p_arr, two_h))
    return float(out) if np.ndim(out) == 0 else out


def covariance_matrix(points, h: HurstLike) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    return fbm_covariance(pts[:, None], pts[None, :], h)


# ─── Cholesky (con cache) ───────────────────────────────────────────────

_chol_lock = threading.Lock()
_chol_cache: "OrderedDict[Tuple[bytes, float], Tuple[np.ndarray, float]]" = OrderedDict()


def clear_cache() -> None:
    """Svuota la cache dei fattori di Cholesky."""
    with _chol_lock:
        _chol_cache.clear()


def cholesky_factor(points, h: HurstLike) -> Tuple[np.ndarray, float]:
    """Fattore triangolare inferiore della covarianza sui punti (tutti > 0).

    Restituisce (L, jitter). Al primo fallimento aggiunge
    jitter·trace/m alla diagonale e riprova una volta.
    """
    hh = as_hurst(h).h
    pts = np.ascontiguousarray(points, dtype=float)
    key = (pts.tobytes(), hh)
    with _chol_lock:
        if key in _chol_cache:
            _chol_cache.move_to_end(key)
            return _chol_cache[key]

    cov = covariance_matrix(pts, hh)
    jitter = 0.0
    try:
        factor = linalg.cholesky(cov, lower=True, check_finite=False)
    except linalg.LinAlgError:
        jitter = config.SIMULATION_CONFIG['cholesky_jitter'] * float(np.trace(cov)) / len(pts)
        logger.warning("Cholesky fallita (m=%d, H=%.3f): riprovo con jitter %.3e",
                       len(pts), hh, jitter)
        try:
            factor = linalg.cholesky(cov + jitter * np.eye(len(pts)), lower=True, check_finite=False)
        except linalg.LinAlgError as e:
            raise GenerationError(
                f"Covarianza non PSD anche dopo il jitter (m={len(pts)}, H={hh})"
            ) from e

    entry = (factor, jitter)
    with _chol_lock:
        _chol_cache[key] = entry
        while len(_chol_cache) > config.SIMULATION_CONFIG['cholesky_cache_size']:
            _chol_cache.popitem(last=False)
    return entry


# ─── Embedding circolante (Davies–Harte) ────────────────────────────────

def _circulant_eigenvalues(m: int, hh: float) -> np.ndarray:
    """Autovalori (formato rfft, m+1 valori) della circolante 2m×2m che
    contiene la covarianza degli incrementi unitari ρ_H(·)."""
    gamma = rho_H(np.arange(m + 1), hh)
    row = np.concatenate([gamma, gamma[m - 1:0:-1]])
    return np.fft.rfft(row).real


def _circulant_sqrt(m: int, hh: float) -> Tuple[Optional[np.ndarray], Dict[str, Any]]:
    """Radici degli autovalori, oppure None se serve il fallback a Cholesky."""
    eig = _circulant_eigenvalues(m, hh)
    tol = config.SIMULATION_CONFIG['circulant_tolerance'] * float(np.max(np.abs(eig)))
    diagnostics: Dict[str, Any] = {"method": "circulant", "fallback": False, "clipped_mass": 0.0}
    if eig.min() < -tol:
        logger.warning("Autovalore circolante %.3e sotto tolleranza (m=%d, H=%.3f): fallback Cholesky",
                       eig.min(), m, hh)
        return None, {"method": "cholesky", "fallback": True, "min_eigenvalue": float(eig.min())}
    negative = eig < 0
    if negative.any():
        diagnostics["clipped_mass"] = float(-eig[negative].sum())
        eig = np.where(negative, 0.0, eig)
    return np.sqrt(eig), diagnostics


def _circulant_increments(normals: np.ndarray, sqrt_eig: np.ndarray) -> np.ndarray:
    """Incrementi unitari da 2m normali per replica (righe di `normals`).

    Ordine delle normali: DC, Nyquist, m−1 parti reali, m−1 parti immaginarie.
    """
    m = sqrt_eig.size - 1
    n = 2 * m
    z = np.empty((normals.shape[0], m + 1), dtype=np.complex128)
    z[:, 0] = normals[:, 0]
    z[:, m] = normals[:, 1]
    z[:, 1:m] = (normals[:, 2:m + 1] + 1j * normals[:, m + 1:n]) / np.sqrt(2.0)
    z *= (sqrt_eig * np.sqrt(n))[np.newaxis, :]
    return np.fft.irfft(z, n=n, axis=1)[:, :m]


def draw_count(grid: TimeGrid, h: HurstLike) -> int:
    """Numero di normali consumate da una replica (poi viene η)."""
    positive = int(np.count_nonzero(grid.points > 0))
    if grid.is_uniform:
        return 2 * positive
    return positive


# ─── Campionamento ──────────────────────────────────────────────────────

def _assemble(grid: TimeGrid, positive_values: np.ndarray) -> np.ndarray:
    if grid.contains_zero:
        out = np.zeros((positive_values.shape[0], len(grid)))
        out[:, 1:] = positive_values
        return out
    return positive_values


def _sample_from_normals(grid: TimeGrid, hh: float, normals: np.ndarray) -> Tuple[np.ndarray, Dict[str, Any]]:
    """Traiettorie (repliche × punti) dalle normali già estratte."""
    positive = grid.points[grid.points > 0]
    m = positive.size
    if m == 0:
        return np.zeros((normals.shape[0], len(grid))), {"method": "trivial"}

    if grid.is_uniform:
        sqrt_eig, diagnostics = _circulant_sqrt(m, hh)
        if sqrt_eig is not None:
            unit = _circulant_increments(normals, sqrt_eig)
            scale = grid.step ** hh
            return _assemble(grid, np.cumsum(unit * scale, axis=1)), diagnostics
        # fallback: stesse normali, prime m colonne
        normals = normals[:, :m]
    else:
        diagnostics = {"method": "cholesky", "fallback": False}
        if hh == 0.5:
            # incrementi indipendenti: esatto su qualsiasi griglia
            widths = np.diff(np.concatenate(([0.0], positive)))
            values = np.cumsum(normals * np.sqrt(widths)[np.newaxis, :], axis=1)
            return _assemble(grid, values), {"method": "independent_increments", "fallback": False}

    factor, jitter = cholesky_factor(positive, hh)
    diagnostics["jitter"] = jitter
    return _assemble(grid, normals @ factor.T), diagnostics


def sample_paths(grid: TimeGrid, h: HurstLike, seed: int, replicas: int,
                 start: int = 0, with_eta: bool = False):
    """Campiona le repliche [start, start+replicas) in blocco.

    Returns:
        (values, diagnostics) oppure (values, eta, diagnostics) se with_eta,
        con values di forma (replicas, len(grid)).
    """
    hurst = as_hurst(h)
    if replicas < 1:
        raise ContractError(f"Numero di repliche non valido: {replicas}")
    k = draw_count(grid, hurst)
    normals = np.empty((replicas, k))
    eta = np.empty(replicas)
    for i in range(replicas):
        rng = replica_stream(seed, start + i)
        normals[i] = rng.standard_normal(k)
        eta[i] = rng.standard_normal()
    values, diagnostics = _sample_from_normals(grid, hurst.h, normals)
    if with_eta:
        return values, eta, diagnostics
    return values, diagnostics


def sample_path(grid: TimeGrid, h: HurstLike, seed: int, replica: int = 0) -> FbmPath:
    """Una traiettoria fBm sulla griglia, riproducibile da (seed, replica)."""
    hurst = as_hurst(h)
    values, diagnostics = sample_paths(grid, hurst, seed, 1, start=replica)
    return FbmPath(grid=grid, values=values[0], hurst=hurst, seed=seed,
                   replica=replica, diagnostics=diagnostics)


# ─── Quantità discrete per H < 1/2 ──────────────────────────────────────

def alpha_matrix(times, n: int, h: HurstLike) -> np.ndarray:
    """α_k(t) = ⟨1_[0,t], 1_[k/n,(k+1)/n]⟩ per ogni t (righe) e k (colonne)."""
    t = np.asarray(times, dtype=float)[:, None]
    k = np.arange(n)[None, :]
    return fbm_covariance(t, (k + 1) / n, h) - fbm_covariance(t, k / n, h)


def lemma61_quantities(n: int, q: int, h: HurstLike, chunk_rows: int = 512) -> Dict[str, Any]:
    """Somme discrete per H < 1/2.

    sum_beta_q    = Σ_{j,k<n} |n^{−2H} ρ_H(j−k)|^q
    sup_alpha_sum = max_t Σ_k |α_k(t)| su t ∈ {j/(2n)} (griglia e punti medi)
    max_alpha     = max |α_k(t)| sullo stesso insieme
    """
    hurst = as_hurst(h)
    hh = hurst.h
    if hh >= 0.5:
        raise HypothesisError(f"Richiesto H < 1/2, ricevuto H={hh}")
    if n < 2:
        raise ParameterError(f"Richiesto n ≥ 2, ricevuto {n}")
    if q < 1:
        raise ParameterError(f"Richiesto q ≥ 1, ricevuto {q}")

    scale = float(n) ** (-2.0 * hh)
    lags = np.arange(1, n)
    off_diag = 2.0 * np.sum((n - lags) * np.abs(scale * rho_H(lags, hh)) ** q)
    sum_beta = n * scale ** q + off_diag

    times = np.arange(2 * n + 1) / (2.0 * n)
    sup_sum = 0.0
    max_alpha = 0.0
    for lo in range(0, times.size, chunk_rows):
        block = np.abs(alpha_matrix(times[lo:lo + chunk_rows], n, hh))
        sup_sum = max(sup_sum, float(block.sum(axis=1).max()))
        max_alpha = max(max_alpha, float(block.max()))

    return {
        "n": n,
        "q": q,
        "hurst": hh,
        "sum_beta_q": float(sum_beta),
        "sup_alpha_sum": sup_sum,
        "max_alpha": max_alpha,
        "alpha_bound": scale,
        "alpha_bound_ok": bool(max_alpha <= scale * (1.0 + 1e-12)),
    }
