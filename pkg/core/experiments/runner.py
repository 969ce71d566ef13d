"""
Runner - Una routine per esperimento e run(config)

Ogni routine riceve un RunContext (pool di repliche, audit logger, writer dei
CSV) e scrive righe di distanze, bound e regressioni. I controlli di
accettazione (direzione dei bound, inviluppi di pendenza, identità esatte)
finiscono nella colonna `pass` e in manifest["acceptance"].

Esempio:
    cfg = load_experiment_config("constants", overrides={"output_path": "out"})
    result = run(cfg)
    result.passed   # True se tutti i controlli sono superati
"""

import logging
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import sympy

import config
from ..chaos_combinatorics import (
    SmoothFunction, coeff_C, compose_derivative, enumerate_A, enumerate_B,
    gaussian_moment_direct, gaussian_moment_functional, theorem51_terms,
)
from ..distances import (
    bootstrap_se, envelope_check, kolmogorov, max_cf_gap, rate_fit, smooth_metric,
    tv_kde, wasserstein1,
)
from ..errors import StableRatesError
from ..fbm_engine import lemma61_quantities, rho_H
from ..functionals import (
    an_fn_gap, an_ito_pair_half, c_H, expected_An, get_weight, rho_nm, rho_nm_quadrature,
    sample_An, sample_weighted_qv, sigma_H_series, sigma_H_truncation,
)
from ..malliavin_estimators import (
    WEIGHTED_TERMS, BoundIngredients, build_bound_report, estimate_prop36_statistics,
    estimate_weighted_qv_terms, first_order_constants, kolmogorov_exponent,
    prop36_analytic_ingredients, prop36_constant_C0, skorohod_analytic_terms,
    tv_exponent, wasserstein_exponent,
)
from ..replica_pool import PoolError, ReplicaChunk, ReplicaPool, mean_and_se
from .audit_logger import RunAuditLogger
from .config_loader import ExperimentConfig
from .reporting import ReportWriter, read_rate_input

logger = logging.getLogger(__name__)

ACCEPT = config.ACCEPTANCE_CONFIG

CONSTANTS_FILE = "constants.csv"
CONSTANTS_COLUMNS = ["hurst", "c_H", "sigma_H", "sqrt_sigma_H", "truncation_P", "tail_bound", "rho_H_1"]
COMBINATORICS_FILE = "combinatorics.csv"
COMBINATORICS_COLUMNS = ["kind", "q", "m", "d", "k", "a", "b", "b_prime", "b_second", "l", "C", "W", "W_hat"]

# livelli e griglie di H dell'oracolo per ρ_(n,m)
RHO_ORACLE_LEVELS = (1, 2, 4)
RHO_ORACLE_HURST = (0.6, 0.75)

Points = List[Tuple[int, float, Optional[float]]]


# ─── Risultato ──────────────────────────────────────────────────────────

@dataclass
class RunResult:
    """Esito di un run: file scritti, controlli di accettazione, troncamento."""
    experiment: str
    out_dir: str
    files: List[str] = field(default_factory=list)
    acceptance: Dict[str, bool] = field(default_factory=dict)
    truncated: bool = False
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.acceptance.values())

    @property
    def failed_checks(self) -> List[str]:
        return [name for name, ok in self.acceptance.items() if not ok]


# ─── Regole di pendenza ─────────────────────────────────────────────────

@dataclass(frozen=True)
class RateRule:
    """Pendenza teorica di una metrica e modo di confronto.

    two_sided=False: pendenza ≤ teoria + slack (i tassi sono maggiorazioni)
    checked=False:   solo informativa (pass vuoto)
    """
    theory: float
    slack: float
    two_sided: bool = False
    checked: bool = True

    def accepts(self, slope: float) -> Optional[bool]:
        if not self.checked:
            return None
        if self.two_sided:
            return abs(slope - self.theory) <= self.slack
        return slope <= self.theory + self.slack


def qv_theory_slope(h: float) -> float:
    """−1/2 in H = 1/2, 1/2 − 2H per 1/4 < H < 1/2."""
    return -0.5 if h == 0.5 else 0.5 - 2.0 * h


def rate_rule(experiment: str, metric: str, h: float) -> Optional[RateRule]:
    """Regola di pendenza per (esperimento, metrica, H); None se non nota."""
    w_slack = ACCEPT['wasserstein_slope_slack']
    t_slack = ACCEPT['term_slope_slack']
    if experiment in ("quadratic_bm", "quadratic_fbm"):
        if metric == "wasserstein_F":
            return RateRule(-wasserstein_exponent(h), w_slack)
        if metric == "kolmogorov_F":
            return RateRule(-kolmogorov_exponent(h), w_slack)
        if metric == "tv_A":
            return RateRule(-tv_exponent(h), w_slack, checked=False)
        analytic = {"analytic_a_n": -h, "analytic_b_n": -1.0, "analytic_ds2": h - 1.0}
        if metric in analytic:
            return RateRule(analytic[metric], t_slack, checked=False)
    elif experiment == "weighted_qv":
        if metric in ("smooth", "wasserstein", "kolmogorov"):
            return RateRule(qv_theory_slope(h), t_slack, checked=metric == "smooth")
    elif experiment == "bounds_prop36":
        if metric in ("inner_uDF_minus_S2", "inner_uDS2"):
            return RateRule(-0.5, t_slack)
        if metric == "delta_mc":
            return RateRule(-1.0 / 6.0, w_slack)
        if metric == "delta_analytic":
            return RateRule(-1.0 / 6.0, w_slack, checked=False)
    elif experiment == "weighted_bounds":
        if metric == "aggregate" or metric in WEIGHTED_TERMS:
            # per H < 1/2 i singoli termini hanno tassi misti: solo l'aggregato è vincolato
            return RateRule(qv_theory_slope(h), t_slack, checked=(h == 0.5 or metric == "aggregate"))
    elif experiment == "lemma61" and metric.startswith("sum_beta_q"):
        q = int(metric[len("sum_beta_q"):])
        return RateRule(1.0 - 2.0 * q * h, ACCEPT['lemma61_slope_tolerance'], two_sided=True)
    return None


# ─── Contesto ───────────────────────────────────────────────────────────

class RunContext:
    """Stato condiviso di un run: pool, audit, report, controlli."""

    def __init__(self, cfg: ExperimentConfig, out_dir: Optional[str] = None):
        self.cfg = cfg
        self.out_dir = out_dir or cfg.output_path
        deadline = time.monotonic() + cfg.budget_seconds if cfg.budget_seconds > 0 else None
        self.pool = ReplicaPool(max_workers=cfg.threads, chunk_size=cfg.chunk_size, deadline=deadline)
        self.audit = RunAuditLogger(cfg, self.out_dir)
        self.report = ReportWriter(self.out_dir)
        self.acceptance: Dict[str, bool] = {}

    # ------------------------------------------------------------------

    def check(self, name: str, passed: bool, **details: Any) -> bool:
        passed = bool(passed)
        self.acceptance[name] = passed
        self.audit.log_acceptance(name, passed, **details)
        return passed

    def bound(self, experiment: str, n: int, h: float, term: str, estimate: float,
              std_error: Optional[float] = None, analytic_bound: Optional[float] = None,
              passed: Optional[bool] = None, check: Optional[str] = None) -> None:
        """Riga di bounds.csv; con `check` il risultato entra anche nell'accettazione."""
        if passed is not None:
            passed = bool(passed)
            if check:
                self.check(check, passed, n=n, estimate=estimate, analytic_bound=analytic_bound)
        self.report.add_bound(experiment, n, h, term, estimate, std_error, analytic_bound, passed)

    def out_of_time(self) -> bool:
        return self.pool.deadline is not None and time.monotonic() > self.pool.deadline

    def mark_truncated(self, where: str) -> None:
        if not self.audit.truncated:
            self.audit.log_truncated(where)

    def guarded(self, where: str, fn: Callable, *args, **kwargs):
        """Esegue un calcolo sul pool; None se il budget è esaurito."""
        try:
            result = fn(*args, **kwargs)
        except PoolError as e:
            if self.pool.truncated:
                self.mark_truncated(where)
                return None
            if isinstance(e.__cause__, StableRatesError):
                raise e.__cause__
            raise
        if self.pool.truncated:
            self.mark_truncated(where)
            return None
        return result

    def collect(self, where: str, work: Callable[[ReplicaChunk], Dict[str, np.ndarray]]
                ) -> Optional[Dict[str, np.ndarray]]:
        """Array per replica, concatenati in ordine di blocco."""
        blocks = self.guarded(where, self.pool.map, work, self.cfg.replicas)
        if blocks is None:
            return None
        return {key: np.concatenate([b[key] for b in blocks]) for key in blocks[0]}

    def bootstrap(self, metric: Callable, xs: np.ndarray, ys: np.ndarray, n: int) -> Optional[float]:
        if self.cfg.bootstrap < 2:
            return None
        return bootstrap_se(metric, xs, ys, resamples=self.cfg.bootstrap, seed=self.cfg.seed + n)

    def fit(self, experiment: str, metric: str, h: float, points: Points,
            label: Optional[str] = None):
        """Regressione log-log di una serie; riga in rate_fit.csv."""
        label = label or metric
        if len(points) < 3:
            logger.warning("Regressione %s/%s saltata: %d livelli", experiment, label, len(points))
            return None
        ns = [p[0] for p in points]
        ds = [p[1] for p in points]
        if min(ds) <= 0:
            logger.info("Regressione %s/%s saltata: stime non positive", experiment, label)
            return None
        fit = rate_fit(ns, ds)
        rule = rate_rule(experiment, metric, h)
        passed = rule.accepts(fit.slope) if rule else None
        self.report.add_rate(experiment, label, fit.slope, fit.intercept, fit.r_squared,
                             rule.theory if rule else None, passed)
        if passed is not None:
            self.check(f"slope_{label}", passed, slope=round(fit.slope, 6), theory=rule.theory)
        return fit


# ─── Funzionale quadratico ──────────────────────────────────────────────

def _quadratic_distances(ctx: RunContext, experiment: str, n: int, h: float,
                         data: Dict[str, np.ndarray], series: Dict[str, Points]) -> None:
    f_n, a_n, limit, b1 = data["F"], data["A"], data["limit"], data["b1"]
    rows = [
        ("wasserstein_F", wasserstein1, f_n),
        ("kolmogorov_F", kolmogorov, f_n),
        ("tv_A", tv_kde, a_n),
    ]
    for metric, fn, xs in rows:
        estimate = fn(xs, limit)
        se = ctx.bootstrap(fn, xs, limit, n)
        ctx.report.add_distance(metric, n, h, experiment, estimate, se)
        series[metric].append((n, estimate, se))
    gap, gap_se = max_cf_gap(a_n, b1, h)
    ctx.report.add_distance("cf_gap_A", n, h, experiment, gap, gap_se)
    series["cf_gap_A"].append((n, gap, gap_se))


def _quadratic_acceptance(ctx: RunContext, experiment: str, h: float, series: Dict[str, Points]) -> None:
    for metric in ("wasserstein_F", "kolmogorov_F", "tv_A"):
        ctx.fit(experiment, metric, h, series[metric])

    w = series["wasserstein_F"]
    if len(w) >= 2:
        ok, c_hat = envelope_check([p[0] for p in w], [p[1] for p in w], wasserstein_exponent(h))
        ctx.check("wasserstein_envelope", ok, c_hat=c_hat)

    tv = series["tv_A"]
    if len(tv) >= 2:
        ok, c_hat = envelope_check([p[0] for p in tv], [p[1] for p in tv], tv_exponent(h))
        ctx.check("tv_envelope", ok, c_hat=c_hat)
        monotone = all(
            b[1] <= a[1] + (2.0 * max(a[2], b[2]) if a[2] is not None else ACCEPT['cf_gap_floor'])
            for a, b in zip(tv, tv[1:])
        )
        ctx.check("tv_nonincreasing", monotone)

    cf = series["cf_gap_A"]
    if cf:
        n, gap, se = cf[-1]
        ctx.check("cf_gap_largest_n", gap <= ACCEPT['cf_gap_floor'] + ACCEPT['mean_se_multiplier'] * se,
                  n=n, gap=gap, std_error=se)


def run_quadratic_bm(ctx: RunContext) -> None:
    """Aₙ e Fₙ (Itô) accoppiati sulla stessa traiettoria browniana."""
    cfg = ctx.cfg
    h = 0.5
    k_mean = ACCEPT['mean_se_multiplier']
    k_bound = ACCEPT['bound_se_multiplier']
    series: Dict[str, Points] = defaultdict(list)

    for n in cfg.n_ladder:
        t0 = time.perf_counter()
        steps = cfg.effective_grid(n)

        def work(chunk: ReplicaChunk, n=n, steps=steps):
            batch, f_n = an_ito_pair_half(n, cfg.seed, chunk.size, start=chunk.start, ito_steps=steps)
            return {"A": batch.values, "F": f_n, "limit": batch.limit_values, "b1": batch.b1}

        data = ctx.collect(f"quadratic_bm n={n}", work)
        if data is None:
            break
        _quadratic_distances(ctx, "quadratic_bm", n, h, data, series)

        mean, se = mean_and_se(data["A"] - data["F"])
        expected = expected_An(n, h)
        ctx.bound("quadratic_bm", n, h, "mean_A_minus_F", mean, se, expected,
                  abs(mean - expected) <= k_mean * se, check=f"identity_A_minus_F_n{n}")
        ctx.bound("quadratic_bm", n, h, "gap_quadrature_bias", expected, None, an_fn_gap(n, h))
        mean, se = mean_and_se(data["F"])
        ctx.bound("quadratic_bm", n, h, "mean_F", mean, se, 0.0, abs(mean) <= k_mean * se,
                  check=f"centering_F_n{n}")
        mean, se = mean_and_se(np.abs(data["F"]))
        bound = math.sqrt(n) / math.sqrt(2.0 * n + 2.0)
        ctx.bound("quadratic_bm", n, h, "abs_F", mean, se, bound, mean <= bound + k_bound * se,
                  check=f"abs_F_n{n}")
        ctx.audit.log_level_done(n, seconds=round(time.perf_counter() - t0, 3))

    _quadratic_acceptance(ctx, "quadratic_bm", h, series)


def run_quadratic_fbm(ctx: RunContext) -> None:
    """Aₙ per 1/2 ≤ H < 1 e Fₙ = Aₙ − H nᴴ/(2H+n)."""
    cfg = ctx.cfg
    h = cfg.hurst
    series: Dict[str, Points] = defaultdict(list)

    for n in cfg.n_ladder:
        t0 = time.perf_counter()

        def work(chunk: ReplicaChunk, n=n):
            batch = sample_An(n, h, cfg.seed, chunk.size, start=chunk.start)
            return {"A": batch.values, "limit": batch.limit_values, "b1": batch.b1}

        data = ctx.collect(f"quadratic_fbm n={n}", work)
        if data is None:
            break
        data["F"] = data["A"] - an_fn_gap(n, h)
        _quadratic_distances(ctx, "quadratic_fbm", n, h, data, series)

        mean, se = mean_and_se(data["A"])
        expected = expected_An(n, h)
        ctx.bound("quadratic_fbm", n, h, "mean_A", mean, se, expected,
                  abs(mean - expected) <= ACCEPT['mean_se_multiplier'] * se, check=f"centering_A_n{n}")
        if h > 0.5:
            for name, value in skorohod_analytic_terms(n, h).items():
                term = f"analytic_{name}"
                ctx.bound("quadratic_fbm", n, h, term, value)
                series[term].append((n, value, None))
        ctx.audit.log_level_done(n, seconds=round(time.perf_counter() - t0, 3))

    _quadratic_acceptance(ctx, "quadratic_fbm", h, series)
    if h > 0.5:
        for term in ("analytic_a_n", "analytic_b_n", "analytic_ds2"):
            ctx.fit("quadratic_fbm", term, h, series[term])


# ─── Variazione quadratica pesata ───────────────────────────────────────

def run_weighted_qv(ctx: RunContext) -> None:
    cfg = ctx.cfg
    h = cfg.hurst
    f = get_weight(cfg.weight)
    series: Dict[str, Points] = defaultdict(list)
    ratio: Optional[Tuple[int, float]] = None

    for n in cfg.n_ladder:
        t0 = time.perf_counter()

        def work(chunk: ReplicaChunk, n=n):
            batch = sample_weighted_qv(n, f, h, cfg.seed, chunk.size, start=chunk.start)
            return {"F": batch.values, "limit": batch.limit_values, "s": batch.s_values}

        data = ctx.collect(f"weighted_qv n={n}", work)
        if data is None:
            break
        for metric, fn in (("smooth", smooth_metric), ("wasserstein", wasserstein1),
                           ("kolmogorov", kolmogorov)):
            estimate = fn(data["F"], data["limit"])
            se = ctx.bootstrap(fn, data["F"], data["limit"], n)
            ctx.report.add_distance(metric, n, h, "weighted_qv", estimate, se)
            series[metric].append((n, estimate, se))

        limit_var = float(np.mean(data["s"] ** 2))
        if limit_var > 0:
            ratio = (n, float(np.var(data["F"], ddof=1)) / limit_var)
            ctx.bound("weighted_qv", n, h, "variance_ratio", ratio[1], None, 1.0)
        ctx.audit.log_level_done(n, seconds=round(time.perf_counter() - t0, 3))

    for metric in ("smooth", "wasserstein", "kolmogorov"):
        ctx.fit("weighted_qv", metric, h, series[metric])
    if ratio is not None:
        ctx.check("variance_match_largest_n", abs(ratio[1] - 1.0) <= ACCEPT['variance_match_tolerance'],
                  n=ratio[0], ratio=ratio[1])


# ─── Bound del funzionale quadratico ────────────────────────────────────

def run_bounds_prop36(ctx: RunContext) -> None:
    """Ingredienti Monte Carlo di Δ contro le maggiorazioni esatte, H = 1/2."""
    cfg = ctx.cfg
    h = 0.5
    k_bound = ACCEPT['bound_se_multiplier']
    k_mean = ACCEPT['mean_se_multiplier']
    series: Dict[str, Points] = defaultdict(list)
    c0 = prop36_constant_C0()

    for n in cfg.n_ladder:
        t0 = time.perf_counter()
        stats = ctx.guarded(f"bounds_prop36 n={n}", estimate_prop36_statistics, n, cfg.replicas,
                            cfg.seed, steps=cfg.effective_grid(n), pool=ctx.pool)
        if stats is None:
            break
        analytic = prop36_analytic_ingredients(n)
        limits = {
            "inner_uDF_minus_S2": analytic.e_inner_uDF_minus_S2,
            "inner_uDS2": analytic.e_inner_uDS2,
            "abs_F": analytic.e_abs_F,
        }
        for term, bound in limits.items():
            est, se = stats[term].mean, stats[term].std_error
            ctx.bound("bounds_prop36", n, h, term, est, se, bound, est <= bound + k_bound * se,
                      check=f"{term}_n{n}")
            series[term].append((n, est, se))
        est, se = stats["S2"].mean, stats["S2"].std_error
        ctx.bound("bounds_prop36", n, h, "S2", est, se, 0.5, abs(est - 0.5) <= k_mean * se,
                  check=f"S2_mean_n{n}")
        est, se = stats["F"].mean, stats["F"].std_error
        ctx.bound("bounds_prop36", n, h, "F", est, se, 0.0, abs(est) <= k_mean * se,
                  check=f"centering_F_n{n}")

        mc = BoundIngredients(
            e_inner_uDF_minus_S2=stats["inner_uDF_minus_S2"].mean,
            e_inner_uDS2=stats["inner_uDS2"].mean,
            e_abs_F=stats["abs_F"].mean,
            e_S=stats["S"].mean,
            std_errors=tuple(stats[k].std_error for k in ("inner_uDF_minus_S2", "inner_uDS2", "abs_F", "S")),
        )
        mc_report = build_bound_report(n, ingredients=mc, alpha=cfg.alpha, h=h, provenance="monte_carlo")
        an_report = build_bound_report(n, ingredients=analytic, alpha=cfg.alpha, h=h)
        ctx.bound("bounds_prop36", n, h, "delta_mc", mc_report.delta, None, an_report.delta,
                  mc_report.delta <= an_report.delta, check=f"delta_n{n}")
        ctx.bound("bounds_prop36", n, h, "kolmogorov_mc", mc_report.kolmogorov_bound, None,
                  an_report.kolmogorov_bound)
        ctx.bound("bounds_prop36", n, h, "delta_analytic", an_report.delta)
        ctx.bound("bounds_prop36", n, h, "delta_analytic_scaled", an_report.delta * n ** (1.0 / 6.0),
                  None, c0)
        series["delta_mc"].append((n, mc_report.delta, None))
        series["delta_analytic"].append((n, an_report.delta, None))
        ctx.audit.log_level_done(n, seconds=round(time.perf_counter() - t0, 3))

    for term in ("inner_uDF_minus_S2", "inner_uDS2", "delta_mc", "delta_analytic"):
        ctx.fit("bounds_prop36", term, h, series[term])


def run_weighted_bounds(ctx: RunContext) -> None:
    """I cinque prodotti interni della variazione pesata e il loro aggregato."""
    cfg = ctx.cfg
    h = cfg.hurst
    f = get_weight(cfg.weight)
    constant_weight = not f.expr.free_symbols
    series: Dict[str, Points] = defaultdict(list)
    vanishing = ("u_DS2_DS2", "u_D2S2", "u_DF_DS2")

    for n in cfg.n_ladder:
        t0 = time.perf_counter()
        stats = ctx.guarded(f"weighted_bounds n={n}", estimate_weighted_qv_terms, n, f, h,
                            cfg.replicas, cfg.seed, pool=ctx.pool)
        if stats is None:
            break
        for term in WEIGHTED_TERMS + ("aggregate",):
            est, se = stats[term].mean, stats[term].std_error
            if constant_weight and term in vanishing:
                ctx.bound("weighted_bounds", n, h, term, est, se, 0.0, est == 0.0,
                          check=f"zero_{term}_n{n}")
            else:
                ctx.bound("weighted_bounds", n, h, term, est, se)
            series[term].append((n, est, se))
        ctx.audit.log_level_done(n, seconds=round(time.perf_counter() - t0, 3))

    for term in WEIGHTED_TERMS + ("aggregate",):
        ctx.fit("weighted_bounds", term, h, series[term])


# ─── Somme discrete per H < 1/2 ─────────────────────────────────────────

def run_lemma61(ctx: RunContext) -> None:
    cfg = ctx.cfg
    h = cfg.hurst
    sups: List[float] = []
    for q in range(1, cfg.q + 1):
        points: Points = []
        for n in cfg.n_ladder:
            if ctx.out_of_time():
                ctx.mark_truncated(f"lemma61 q={q} n={n}")
                break
            qty = lemma61_quantities(n, q, h)
            ctx.bound("lemma61", n, h, f"sum_beta_q{q}", qty["sum_beta_q"])
            points.append((n, qty["sum_beta_q"], None))
            if q == 1:
                ctx.bound("lemma61", n, h, "max_alpha", qty["max_alpha"], None, qty["alpha_bound"],
                          qty["alpha_bound_ok"], check=f"alpha_bound_n{n}")
                ctx.bound("lemma61", n, h, "sup_alpha_sum", qty["sup_alpha_sum"])
                sups.append(qty["sup_alpha_sum"])
            ctx.audit.log_level_done(n, q=q)
        ctx.fit("lemma61", f"sum_beta_q{q}", h, points)
    if sups:
        ratio = max(sups) / min(sups)
        ctx.check("sup_alpha_sum_bounded", ratio <= ACCEPT['alpha_sum_ratio'], ratio=ratio)


# ─── Combinatoria ───────────────────────────────────────────────────────

def _fmt(values) -> str:
    """Tuple e matrici come testo: elementi separati da ';', righe da '|'."""
    if values and isinstance(values[0], tuple):
        return "|".join(_fmt(row) for row in values)
    return ";".join(str(v) for v in values)


def _fraction_text(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _faa_di_bruno_ok(max_q: int = 6) -> bool:
    x = sympy.Symbol("x")
    outer_expr, inner_expr = sympy.sin(x), sympy.exp(x / 2) + x ** 2
    x0 = 0.3
    g0 = float(inner_expr.subs(x, x0))
    for q in range(1, max_q + 1):
        outer = [float(sympy.diff(outer_expr, x, j).subs(x, g0)) for j in range(q + 1)]
        inner = [float(sympy.diff(inner_expr, x, i).subs(x, x0)) for i in range(q + 1)]
        exact = float(sympy.diff(outer_expr.subs(x, inner_expr), x, q).subs(x, x0))
        if abs(compose_derivative(q, outer, inner) - exact) > 1e-10 * max(1.0, abs(exact)):
            logger.warning("Faà di Bruno: discrepanza all'ordine %d", q)
            return False
    return True


def _gaussian_moment_ok(max_k: int = 6, alpha: float = 0.7) -> bool:
    bank = [SmoothFunction("cos(x)"), SmoothFunction("1 + x**2"), SmoothFunction("1/(1 + exp(-x))")]
    for f in bank:
        for k in range(max_k + 1):
            direct = gaussian_moment_direct(f, [alpha], [k])
            expanded = gaussian_moment_functional(f, [alpha], [k])
            if abs(direct - expanded) > 1e-6 * max(1.0, abs(direct)):
                logger.warning("Momento gaussiano: discrepanza per %s, k=%d", f.name, k)
                return False
    return True


def run_combinatorics(ctx: RunContext) -> None:
    """Dump di 𝒜, ℬ e degli addendi (β, l) con C, W, Ŵ; controlli esatti."""
    cfg = ctx.cfg
    q, m, d = cfg.q, cfg.m, cfg.d
    base = {"q": q, "m": m, "d": d}
    rows: List[Dict[str, Any]] = []

    alphas = enumerate_A(q, m, d)
    for al in alphas:
        rows.append({**base, "kind": "A", "k": _fmt(al.k), "a": _fmt(al.a), "b": _fmt(al.b),
                     "C": _fraction_text(coeff_C(al))})
    betas = enumerate_B(q, m, d)
    for beta in betas:
        rows.append({**base, "kind": "B", "k": _fmt(beta.k), "a": _fmt(beta.a),
                     "b_prime": _fmt(beta.b_prime), "b_second": _fmt(beta.b_second),
                     "C": _fraction_text(coeff_C(beta.alpha))})
    for k in range(d):
        for term in theorem51_terms(q, m, d, k):
            beta = term.beta
            rows.append({**base, "kind": f"B0_term_k{k}", "k": _fmt(beta.k), "a": _fmt(beta.a),
                         "b_prime": _fmt(beta.b_prime), "b_second": _fmt(beta.b_second),
                         "l": _fmt(term.ls), "C": _fraction_text(coeff_C(beta.alpha)),
                         "W": _fraction_text(term.w), "W_hat": term.w_hat_float})
    ctx.report.add_table(COMBINATORICS_FILE, rows, COMBINATORICS_COLUMNS)
    logger.info("Combinatoria q=%d m=%d d=%d: |𝒜|=%d, |ℬ|=%d", q, m, d, len(alphas), len(betas))

    expected_b = sum(math.prod(x + 1 for row in al.b for x in row) for al in alphas)
    ctx.check("B_count_identity", len(betas) == expected_b, count=len(betas), expected=expected_b)
    partitions_ok = all(len(enumerate_A(p, 0, 1)) == sympy.npartitions(p) for p in range(1, 9))
    ctx.check("A_count_partitions", partitions_ok)
    ctx.check("faa_di_bruno", _faa_di_bruno_ok())
    ctx.check("gaussian_moment_identity", _gaussian_moment_ok())
    ctx.check("first_order_constants", first_order_constants() == (Fraction(1, 2), Fraction(1, 3)))


# ─── Costanti ───────────────────────────────────────────────────────────

def _optional(fn: Callable[[], float]) -> Optional[float]:
    try:
        return fn()
    except StableRatesError:
        return None


def run_constants(ctx: RunContext) -> None:
    """Tabella di c_H e σ_H sulla griglia di H; oracolo di quadratura per ρ_(n,m)."""
    rows = []
    for h in ctx.cfg.hurst_grid:
        sigma = _optional(lambda: sigma_H_series(h))
        trunc = _optional(lambda: sigma_H_truncation(h))
        rows.append({
            "hurst": h,
            "c_H": _optional(lambda: c_H(h)),
            "sigma_H": sigma,
            "sqrt_sigma_H": math.sqrt(sigma) if sigma is not None else None,
            "truncation_P": trunc[0] if trunc else None,
            "tail_bound": trunc[1] if trunc else None,
            "rho_H_1": float(rho_H(1, h)),
        })
    ctx.report.add_table(CONSTANTS_FILE, rows, CONSTANTS_COLUMNS)

    ctx.check("sigma_half", abs(sigma_H_series(0.5) - 2.0) <= 1e-12)
    ctx.check("c_half", abs(c_H(0.5) - 1.0 / math.sqrt(2.0)) <= 1e-12)
    jump = max(abs(math.sqrt(sigma_H_series(0.5 + s)) - math.sqrt(2.0)) for s in (-1e-3, 1e-3))
    ctx.check("sigma_continuity", jump < 1e-3, jump=jump)

    oracle_ok = True
    for h in RHO_ORACLE_HURST:
        for n in RHO_ORACLE_LEVELS:
            for m in RHO_ORACLE_LEVELS:
                closed = rho_nm(n, m, h)
                numeric = rho_nm_quadrature(n, m, h)
                ok = abs(numeric - closed) <= 1e-4 * abs(closed)
                oracle_ok = oracle_ok and ok
                ctx.bound("constants", n, h, f"rho_nm_m{m}", numeric, None, closed, ok)
    ctx.check("rho_nm_oracle", oracle_ok)


# ─── Regressione da CSV ─────────────────────────────────────────────────

def run_rate_fit(ctx: RunContext) -> None:
    """Ricalcola le regressioni log-log da un distances.csv o bounds.csv esistente."""
    frame = read_rate_input(ctx.cfg.input_csv)
    groups = frame.groupby(["experiment", "metric", "H"], sort=True)
    multi_h = frame.groupby(["experiment", "metric"])["H"].nunique()
    for (experiment, metric, h), group in groups:
        group = group.sort_values("n")
        points = [(int(n), float(e), None) for n, e in zip(group["n"], group["estimate"])]
        label = f"{metric}@H={h:g}" if multi_h[(experiment, metric)] > 1 else metric
        ctx.fit(experiment, metric, float(h), points, label=label)


# ─── Registro ed entry point ────────────────────────────────────────────

EXPERIMENT_RUNNERS: Dict[str, Callable[[RunContext], None]] = {
    "quadratic_bm": run_quadratic_bm,
    "quadratic_fbm": run_quadratic_fbm,
    "weighted_qv": run_weighted_qv,
    "bounds_prop36": run_bounds_prop36,
    "weighted_bounds": run_weighted_bounds,
    "lemma61": run_lemma61,
    "combinatorics": run_combinatorics,
    "constants": run_constants,
    "rate_fit": run_rate_fit,
}


def run(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> RunResult:
    """Esegue l'esperimento e scrive CSV, events.jsonl e manifest.json.

    I file vengono scritti anche se il run fallisce o viene troncato.
    """
    if cfg.experiment not in EXPERIMENT_RUNNERS:
        raise ValueError(f"Esperimento sconosciuto: {cfg.experiment}")
    t_start = time.perf_counter()
    ctx = RunContext(cfg, out_dir)
    ctx.audit.log_run_start()
    logger.info("Avvio esperimento %s (seed=%d, thread=%d)", cfg.experiment, cfg.seed, cfg.threads)
    try:
        EXPERIMENT_RUNNERS[cfg.experiment](ctx)
    except Exception as e:
        ctx.audit.log_error(f"Esperimento {cfg.experiment} interrotto", e)
        raise
    finally:
        files = ctx.report.write() + [RunAuditLogger.EVENTS_FILE]
        wall_clock = time.perf_counter() - t_start
        ctx.audit.log_run_end(wall_clock)
        ctx.audit.write_manifest(files, ctx.acceptance, wall_clock)

    files = files + [RunAuditLogger.MANIFEST_FILE]
    result = RunResult(experiment=cfg.experiment, out_dir=str(ctx.out_dir), files=files,
                       acceptance=dict(ctx.acceptance), truncated=ctx.audit.truncated,
                       wall_clock=wall_clock)
    logger.info("Esperimento %s completato in %.1fs: %d/%d controlli superati%s",
                cfg.experiment, wall_clock, sum(result.acceptance.values()), len(result.acceptance),
                " (troncato)" if result.truncated else "")
    return result
