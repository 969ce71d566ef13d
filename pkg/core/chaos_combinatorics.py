"""
Chaos Combinatorics — polinomi di Hermite, momenti gaussiani, indici diofantei

Livello esatto del toolkit:
  • hermite, hermite_expand_power: convenzione probabilistica
  • SmoothFunction, gaussian_moment_functional: identità E[f(αη)η^k] via
    quadratura di Gauss–Hermite tensorizzata
  • enumerate_A / enumerate_B / enumerate_B0: insiemi di multi-indici
  • coeff_C / coeff_W / coeff_W_hat: coefficienti in Fraction
  • derivative_order / theorem51_terms: contabilità degli ordini di
    derivazione dei termini del bound generale
  • SymmetricTensor, symmetrize, contract: tensori densi a dimensione finita

Tutti i coefficienti sono razionali esatti; la conversione a float avviene solo
nel fattore Beta di Ŵ (salvo exact=True).
"""

import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy
from numpy.polynomial.hermite import hermgauss
from scipy import special
from sympy.utilities.iterables import partitions

import config
from .errors import BudgetError, ContractError

logger = logging.getLogger(__name__)

Number = Union[int, float, Fraction]


# ═══════════════════════════════════════════════════════════════════════
# Hermite
# ═══════════════════════════════════════════════════════════════════════

def hermite(q: int, x):
    """H_q(x) probabilistico: H_{q+1} = x·H_q − q·H_{q−1}."""
    if q < 0:
        raise ContractError(f"Grado di Hermite negativo: {q}")
    x_arr = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x_arr), x_arr.copy()
    if q == 0:
        out = prev
    else:
        for j in range(1, q):
            prev, cur = cur, x_arr * cur - j * prev
        out = cur
    return float(out) if out.ndim == 0 else out


def hermite_expand_power(k: int) -> List[int]:
    """Coefficienti c_j di x^k = Σ_j c_j H_{k−2j}(x), c_j = k!/(2^j (k−2j)! j!)."""
    if k < 0:
        raise ContractError(f"Potenza negativa: {k}")
    return [
        math.factorial(k) // (2 ** j * math.factorial(k - 2 * j) * math.factorial(j))
        for j in range(k // 2 + 1)
    ]


# ═══════════════════════════════════════════════════════════════════════
# Funzioni lisce e quadratura gaussiana
# ═══════════════════════════════════════════════════════════════════════

class SmoothFunction:
    """Funzione scalare di d variabili con derivate parziali simboliche.

    Le derivate si ottengono con sympy e vengono compilate (lambdify) alla
    prima richiesta. `max_order` è l'ordine totale massimo ammesso.
    """

    def __init__(self, expr, variables: Sequence[str] = ("x",), max_order: int = 6,
                 name: Optional[str] = None):
        self.symbols = sympy.symbols(list(variables))
        self.expr = sympy.sympify(expr)
        self.max_order = max_order
        self.name = name or str(self.expr)
        self._compiled: Dict[Tuple[int, ...], Callable] = {}

    @property
    def arity(self) -> int:
        return len(self.symbols)

    def derivative(self, orders: Union[int, Sequence[int]]) -> Callable:
        """Derivata parziale di ordini `orders` (uno per variabile)."""
        if isinstance(orders, int):
            orders = (orders,)
        orders = tuple(int(o) for o in orders)
        if len(orders) != self.arity:
            raise ContractError(f"Attesi {self.arity} ordini di derivazione, ricevuti {len(orders)}")
        if any(o < 0 for o in orders):
            raise ContractError(f"Ordini di derivazione negativi: {orders}")
        if sum(orders) > self.max_order:
            raise ContractError(
                f"Ordine di derivazione insufficiente per '{self.name}': "
                f"richiesto {sum(orders)}, disponibile {self.max_order}"
            )
        if orders not in self._compiled:
            expr = self.expr
            for sym, o in zip(self.symbols, orders):
                if o:
                    expr = sympy.diff(expr, sym, o)
            fn = sympy.lambdify(self.symbols, expr, modules="numpy")
            self._compiled[orders] = _broadcasting(fn)
        return self._compiled[orders]

    def __call__(self, *args):
        return self.derivative((0,) * self.arity)(*args)

    def __repr__(self) -> str:
        return f"<SmoothFunction {self.name} arity={self.arity} max_order={self.max_order}>"


def _broadcasting(fn: Callable) -> Callable:
    """Le espressioni costanti di lambdify restituiscono scalari: riallinea la forma."""
    def wrapped(*args):
        arrays = [np.asarray(a, dtype=float) for a in args]
        out = np.asarray(fn(*arrays), dtype=float)
        shape = np.broadcast(*arrays).shape if arrays else ()
        if out.shape != shape:
            out = np.broadcast_to(out, shape).copy()
        return out
    return wrapped


@lru_cache(maxsize=8)
def _gauss_hermite_1d(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = hermgauss(nodes)
    return x * np.sqrt(2.0), w / np.sqrt(np.pi)


def gauss_hermite_grid(d: int, nodes: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Nodi (d × N) e pesi (N) per E[g(η₁,…,η_d)], η i.i.d. N(0,1)."""
    if not 1 <= d <= 3:
        raise ContractError(f"Quadratura tensorizzata supportata per 1 ≤ d ≤ 3, ricevuto d={d}")
    nodes = nodes or config.QUADRATURE_CONFIG['gauss_hermite_nodes']
    x, w = _gauss_hermite_1d(nodes)
    points = np.array([p.ravel() for p in np.meshgrid(*([x] * d), indexing="ij")])
    weights = w
    for _ in range(d - 1):
        weights = np.kron(weights, w)
    return points, weights


def _check_moment_args(f: SmoothFunction, alphas: Sequence[float], ks: Sequence[int]) -> None:
    if len(alphas) != len(ks):
        raise ContractError(f"alphas ({len(alphas)}) e ks ({len(ks)}) di lunghezza diversa")
    if f.arity != len(ks):
        raise ContractError(f"Funzione di {f.arity} variabili, richieste {len(ks)}")
    if any(k < 0 for k in ks):
        raise ContractError(f"Esponenti negativi: {ks}")


def gaussian_moment_direct(f: SmoothFunction, alphas: Sequence[float], ks: Sequence[int],
                           nodes: Optional[int] = None) -> float:
    """E[f(α₁η₁,…,α_dη_d) η₁^{k₁}⋯η_d^{k_d}] per quadratura diretta."""
    _check_moment_args(f, alphas, ks)
    x, w = gauss_hermite_grid(len(ks), nodes)
    args = [a * xi for a, xi in zip(alphas, x)]
    weight = np.prod([xi ** k for xi, k in zip(x, ks)], axis=0)
    return float(np.sum(w * f(*args) * weight))


def gaussian_moment_functional(f: SmoothFunction, alphas: Sequence[float], ks: Sequence[int],
                               nodes: Optional[int] = None) -> float:
    """Lato destro dell'espansione in derivate:

        Σ_j ∏_l [k_l!/(2^{j_l}(k_l−2j_l)! j_l!) α_l^{k_l−2j_l}] · E[∂^{k−2j} f(αη)]
    """
    _check_moment_args(f, alphas, ks)
    if sum(ks) > f.max_order:
        raise ContractError(
            f"Ordine di derivazione insufficiente: servono {sum(ks)} derivate, "
            f"'{f.name}' ne fornisce {f.max_order}"
        )
    x, w = gauss_hermite_grid(len(ks), nodes)
    args = [a * xi for a, xi in zip(alphas, x)]
    expansions = [hermite_expand_power(k) for k in ks]
    total = 0.0
    for js in itertools.product(*(range(k // 2 + 1) for k in ks)):
        orders = tuple(k - 2 * j for k, j in zip(ks, js))
        coeff = 1.0
        for c, a, j, o in zip(expansions, alphas, js, orders):
            coeff *= c[j] * a ** o
        if coeff == 0.0:
            continue
        total += coeff * float(np.sum(w * f.derivative(orders)(*args)))
    return total


# ═══════════════════════════════════════════════════════════════════════
# Multi-indici
# ═══════════════════════════════════════════════════════════════════════

Matrix = Tuple[Tuple[int, ...], ...]


@dataclass(frozen=True, order=True)
class MultiIndexAlpha:
    """Vettore (k; a; b) che soddisfa il sistema diofanteo di ordine q."""
    k: Tuple[int, ...]
    a: Tuple[int, ...]
    b: Matrix
    q: int
    m: int
    d: int

    def __post_init__(self):
        if len(self.k) != self.q or len(self.a) != self.m or len(self.b) != self.q:
            raise ContractError(f"Forme incoerenti per q={self.q}, m={self.m}")
        if any(len(row) != self.d for row in self.b):
            raise ContractError(f"Righe di b di lunghezza diversa da d={self.d}")
        entries = list(self.k) + list(self.a) + [x for row in self.b for x in row]
        if any(x < 0 for x in entries):
            raise ContractError("Multi-indice con componenti negative")
        if sum((i + 1) * ki for i, ki in enumerate(self.k)) != self.q:
            raise ContractError(f"Σ i·k_i ≠ q per k={self.k}")
        if sum(self.a) + sum(self.b[0]) != self.k[0]:
            raise ContractError("a₁+…+a_m + b₁₁+…+b₁d ≠ k₁")
        for i in range(1, self.q):
            if sum(self.b[i]) != self.k[i]:
                raise ContractError(f"Σ_j b_{i + 1}j ≠ k_{i + 1}")

    @property
    def total_order(self) -> int:
        """|k| = k₁ + … + k_q."""
        return sum(self.k)

    def x_orders(self) -> Tuple[int, ...]:
        """Ordine di derivazione in x_j: Σ_i b_ij."""
        return tuple(sum(row[j] for row in self.b) for j in range(self.d))


@dataclass(frozen=True, order=True)
class MultiIndexBeta:
    """Come MultiIndexAlpha, con b = b′ + b″."""
    k: Tuple[int, ...]
    a: Tuple[int, ...]
    b_prime: Matrix
    b_second: Matrix
    q: int
    m: int
    d: int

    def __post_init__(self):
        # la validazione passa per l'α associato
        self.alpha

    @property
    def alpha(self) -> MultiIndexAlpha:
        b = tuple(tuple(x + y for x, y in zip(r1, r2)) for r1, r2 in zip(self.b_prime, self.b_second))
        return MultiIndexAlpha(k=self.k, a=self.a, b=b, q=self.q, m=self.m, d=self.d)

    @property
    def norm_b_prime(self) -> int:
        return sum(x for row in self.b_prime for x in row)

    @property
    def norm_b_second(self) -> int:
        return sum(x for row in self.b_second for x in row)

    @property
    def column_norms_b_second(self) -> Tuple[int, ...]:
        """|b″_{•j}| = Σ_i b″_ij."""
        return tuple(sum(row[j] for row in self.b_second) for j in range(self.d))

    def l_ranges(self) -> List[range]:
        return [range(c // 2 + 1) for c in self.column_norms_b_second]


def _weak_compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    """Tutte le tuple di `parts` interi ≥ 0 con somma `total`."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        edges = (-1,) + bars + (total + parts - 1,)
        yield tuple(edges[i + 1] - edges[i] - 1 for i in range(parts))


def _compositions_count(total: int, parts: int) -> int:
    if parts == 0:
        return 1 if total == 0 else 0
    return math.comb(total + parts - 1, parts - 1)


def _check_dims(q: int, m: int, d: int) -> None:
    if q < 1 or m < 0 or d < 1:
        raise ContractError(f"Parametri non validi: q={q}, m={m}, d={d}")


def _k_vectors(q: int) -> List[Tuple[int, ...]]:
    return [tuple(p.get(i, 0) for i in range(1, q + 1)) for p in partitions(q)]


def enumerate_A(q: int, m: int, d: int, budget: Optional[int] = None) -> List[MultiIndexAlpha]:
    """Insieme 𝒜(q; m, d), ordinato lessicograficamente su (k, a, righe di b)."""
    _check_dims(q, m, d)
    budget = budget or config.ENUMERATION_CONFIG['budget']
    ks: List[Tuple[int, ...]] = []
    candidates = 0
    for k in _k_vectors(q):
        count = _compositions_count(k[0], m + d)
        for ki in k[1:]:
            count *= _compositions_count(ki, d)
        candidates += count
        if candidates > budget:
            raise BudgetError(
                f"Enumerazione di 𝒜({q}; {m}, {d}) oltre il budget di {budget} candidati"
            )
        ks.append(k)

    out = []
    for k in ks:
        heads = list(_weak_compositions(k[0], m + d))
        tails = [list(_weak_compositions(ki, d)) for ki in k[1:]]
        for head in heads:
            for rest in itertools.product(*tails):
                b = (tuple(head[m:]),) + tuple(rest)
                out.append(MultiIndexAlpha(k=k, a=tuple(head[:m]), b=b, q=q, m=m, d=d))
    out.sort(key=lambda al: (al.k, al.a, al.b))
    logger.debug("enumerate_A(%d, %d, %d): %d elementi", q, m, d, len(out))
    return out


def _splits(alpha: MultiIndexAlpha) -> Iterator[MultiIndexBeta]:
    flat = [x for row in alpha.b for x in row]
    for primes in itertools.product(*(range(x + 1) for x in flat)):
        bp = tuple(tuple(primes[i * alpha.d:(i + 1) * alpha.d]) for i in range(alpha.q))
        bs = tuple(tuple(x - y for x, y in zip(rb, rp)) for rb, rp in zip(alpha.b, bp))
        yield MultiIndexBeta(k=alpha.k, a=alpha.a, b_prime=bp, b_second=bs,
                             q=alpha.q, m=alpha.m, d=alpha.d)


def enumerate_B(q: int, m: int, d: int, budget: Optional[int] = None) -> List[MultiIndexBeta]:
    """Insieme ℬ(q; m, d): ogni scomposizione b = b′ + b″ di ogni α ∈ 𝒜(q)."""
    budget = budget or config.ENUMERATION_CONFIG['budget']
    alphas = enumerate_A(q, m, d, budget)
    total = sum(math.prod(x + 1 for row in al.b for x in row) for al in alphas)
    if total > budget:
        raise BudgetError(f"Enumerazione di ℬ({q}; {m}, {d}) oltre il budget di {budget} candidati")
    return [beta for al in alphas for beta in _splits(al)]


def enumerate_B0(q: int, m: int, d: int, budget: Optional[int] = None) -> List[MultiIndexBeta]:
    """Sottoinsieme ℬ₀(q) di ℬ(q) con b′_{qj} = 0 per ogni j."""
    return [beta for beta in enumerate_B(q, m, d, budget) if not any(beta.b_prime[q - 1])]


# ═══════════════════════════════════════════════════════════════════════
# Coefficienti
# ═══════════════════════════════════════════════════════════════════════

def coeff_C(alpha: MultiIndexAlpha) -> Fraction:
    """C(α) = q! / (∏ i!^{k_i} ∏ a_l! ∏ b_ij!)."""
    den = 1
    for i, ki in enumerate(alpha.k, start=1):
        den *= math.factorial(i) ** ki
    for al in alpha.a:
        den *= math.factorial(al)
    for row in alpha.b:
        for x in row:
            den *= math.factorial(x)
    return Fraction(math.factorial(alpha.q), den)


def _check_ls(beta: MultiIndexBeta, ls: Sequence[int]) -> Tuple[int, ...]:
    ls = tuple(int(x) for x in ls)
    if len(ls) != beta.d:
        raise ContractError(f"Attesi {beta.d} indici l, ricevuti {len(ls)}")
    for s, (l, c) in enumerate(zip(ls, beta.column_norms_b_second)):
        if not 0 <= l <= c // 2:
            raise ContractError(f"l_{s + 1}={l} fuori da [0, {c // 2}]")
    return ls


def coeff_W(beta: MultiIndexBeta, ls: Sequence[int]) -> Fraction:
    """W(β; l) = C(α(β)) · ∏ binom(b′+b″, b′) · ∏_s |b″_•s|!/(2^{l_s}(|b″_•s|−2l_s)! l_s!)."""
    ls = _check_ls(beta, ls)
    out = coeff_C(beta.alpha)
    for r1, r2 in zip(beta.b_prime, beta.b_second):
        for bp, bs in zip(r1, r2):
            out *= math.comb(bp + bs, bp)
    for c, l in zip(beta.column_norms_b_second, ls):
        out *= Fraction(math.factorial(c), 2 ** l * math.factorial(c - 2 * l) * math.factorial(l))
    return out


def beta_function(u: float, v: float) -> float:
    """B(u, v) via log-Gamma."""
    if u <= 0 or v <= 0:
        raise ContractError(f"Beta definita per u, v > 0 (ricevuti {u}, {v})")
    return float(np.exp(special.betaln(u, v)))


def beta_half_integer(prime_norm: int, second_norm: int) -> Fraction:
    """B(|b′|+½, |b″|+1) esatta: n!/∏_{i=0}^{n}(u+i) con u = |b′|+½, n = |b″|."""
    u = Fraction(2 * prime_norm + 1, 2)
    den = Fraction(1)
    for i in range(second_norm + 1):
        den *= u + i
    return Fraction(math.factorial(second_norm)) / den


def coeff_W_hat(beta: MultiIndexBeta, ls: Sequence[int], exact: bool = False) -> Number:
    """Ŵ = W · B(|b′|+½, |b″|+1); Fraction se exact=True."""
    w = coeff_W(beta, ls)
    if exact:
        return w * beta_half_integer(beta.norm_b_prime, beta.norm_b_second)
    return float(w) * beta_function(beta.norm_b_prime + 0.5, beta.norm_b_second + 1.0)


def derivative_order(beta: MultiIndexBeta, ls: Sequence[int], k: int = 0) -> Tuple[int, ...]:
    """Ordini (y₁..y_m, x₁..x_d) dell'operatore ∂★ applicato a φ_{x_k} (k da 0)."""
    ls = _check_ls(beta, ls)
    if not 0 <= k < beta.d:
        raise ContractError(f"Indice di coordinata k={k} fuori da [0, {beta.d})")
    base = beta.alpha.x_orders()
    xs = tuple(
        base[j] + c - 2 * l + (1 if j == k else 0)
        for j, (c, l) in enumerate(zip(beta.column_norms_b_second, ls))
    )
    return tuple(beta.a) + xs


def s_powers(beta: MultiIndexBeta, ls: Sequence[int]) -> Tuple[int, ...]:
    """Esponenti di S_s nel valore atteso: |b″_•s| − 2l_s."""
    ls = _check_ls(beta, ls)
    return tuple(c - 2 * l for c, l in zip(beta.column_norms_b_second, ls))


@dataclass(frozen=True)
class BoundTerm:
    """Un addendo della parte (w2) del bound generale."""
    k: int
    beta: MultiIndexBeta
    ls: Tuple[int, ...]
    w: Fraction
    w_hat: Fraction
    order: Tuple[int, ...]
    s_powers: Tuple[int, ...]

    @property
    def key(self) -> Tuple[int, MultiIndexBeta, Tuple[int, ...]]:
        return (self.k, self.beta, self.ls)

    @property
    def w_hat_float(self) -> float:
        return float(self.w_hat)


def theorem51_terms(q: int, m: int, d: int, k: int = 0) -> List[BoundTerm]:
    """Tutti gli addendi (β, l) con β ∈ ℬ₀(q; m, d) per la coordinata k."""
    terms = []
    for beta in enumerate_B0(q, m, d):
        for ls in itertools.product(*beta.l_ranges()):
            terms.append(BoundTerm(
                k=k, beta=beta, ls=tuple(ls),
                w=coeff_W(beta, ls),
                w_hat=coeff_W_hat(beta, ls, exact=True),
                order=derivative_order(beta, ls, k),
                s_powers=s_powers(beta, ls),
            ))
    return terms


def compose_derivative(q: int, outer: Sequence[Number], inner: Sequence[Number]) -> Number:
    """q-esima derivata di f∘g (Faà di Bruno su 𝒜(q; 0, 1)).

    Args:
        outer: outer[j] = f^{(j)}(g(x)), j = 0..q
        inner: inner[i] = g^{(i)}(x),   i = 0..q
    """
    if len(outer) <= q or len(inner) <= q:
        raise ContractError(f"Servono derivate fino all'ordine {q}")
    total: Number = 0
    for alpha in enumerate_A(q, 0, 1):
        term: Number = coeff_C(alpha) * outer[alpha.total_order]
        for i, ki in enumerate(alpha.k, start=1):
            term = term * inner[i] ** ki
        total += term
    return total


# ═══════════════════════════════════════════════════════════════════════
# Tensori simmetrici
# ═══════════════════════════════════════════════════════════════════════

@dataclass(eq=False)
class SymmetricTensor:
    """Tensore denso simmetrico di ordine p su ℝ^dim."""
    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        order, dims = self.entries.ndim, set(self.entries.shape)
        if len(dims) > 1:
            raise ContractError(f"Forma non cubica: {self.entries.shape}")
        if order > config.ENUMERATION_CONFIG['tensor_max_order']:
            raise BudgetError(f"Ordine {order} oltre il limite")
        if dims and max(dims) > config.ENUMERATION_CONFIG['tensor_max_dim']:
            raise BudgetError(f"Dimensione {max(dims)} oltre il limite")
        if not _is_symmetric(self.entries):
            raise ContractError("Tensore non simmetrico")

    @property
    def order(self) -> int:
        return self.entries.ndim

    @property
    def dim(self) -> int:
        return self.entries.shape[0] if self.entries.ndim else 0

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries.ravel()))


def _permutation_average(arr: np.ndarray) -> np.ndarray:
    perms = list(itertools.permutations(range(arr.ndim)))
    return sum(np.transpose(arr, p) for p in perms) / len(perms)


def _is_symmetric(arr: np.ndarray, tol: float = 1e-12) -> bool:
    if arr.ndim < 2:
        return True
    return bool(np.allclose(arr, _permutation_average(arr), rtol=0.0, atol=tol))


def symmetrize(t) -> SymmetricTensor:
    """Media sulle permutazioni degli indici."""
    arr = t.entries if isinstance(t, SymmetricTensor) else np.asarray(t, dtype=float)
    return SymmetricTensor(_permutation_average(arr) if arr.ndim > 1 else arr.copy())


def basis_vector(i: int, dim: int) -> np.ndarray:
    e = np.zeros(dim)
    e[i] = 1.0
    return e


def tensor_product(*factors) -> np.ndarray:
    """f₁ ⊗ … ⊗ f_k (prodotto esterno non simmetrizzato)."""
    out = np.asarray(1.0)
    for f in factors:
        arr = f.entries if isinstance(f, SymmetricTensor) else np.asarray(f, dtype=float)
        out = np.multiply.outer(out, arr)
    return out


def contract(f, g, r: int):
    """Contrazione r-esima: somma sugli ultimi r indici di f e i primi r di g.

    Ordine del risultato p + q − 2r; per r = p = q restituisce lo scalare ⟨f, g⟩.
    """
    fa = f.entries if isinstance(f, SymmetricTensor) else np.asarray(f, dtype=float)
    ga = g.entries if isinstance(g, SymmetricTensor) else np.asarray(g, dtype=float)
    p, q = fa.ndim, ga.ndim
    if r < 0 or r > min(p, q):
        raise ContractError(f"Contrazione r={r} non ammessa per ordini {p} e {q}")
    if p and q and fa.shape[0] != ga.shape[0]:
        raise ContractError(f"Dimensioni diverse: {fa.shape[0]} e {ga.shape[0]}")
    out = np.tensordot(fa, ga, axes=(list(range(p - r, p)), list(range(r))))
    return float(out) if out.ndim == 0 else out


def symmetric_contract(f, g, r: int):
    """f ⊗̃_r g: contrazione seguita da simmetrizzazione."""
    out = contract(f, g, r)
    return out if isinstance(out, float) else symmetrize(out)
