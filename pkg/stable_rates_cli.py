#!/usr/bin/env python3
"""
CLI stable-rates: esperimenti Monte Carlo sui tassi di convergenza stabile.

Comandi:
    quadratic-bm        Aₙ e Fₙ (Itô) per H = 1/2: distanze, identità Aₙ − Fₙ
    quadratic-fbm       Aₙ e Fₙ (Skorohod) per 1/2 ≤ H < 1
    weighted-qv         Variazione quadratica pesata e limite misto gaussiano
    bounds-prop36       Ingredienti di Δ contro le maggiorazioni esatte
    weighted-bounds     Cinque prodotti interni della variazione pesata
    lemma61             Somme discrete di prodotti interni per H < 1/2
    combinatorics       Multi-indici e coefficienti C, W, Ŵ (CSV)
    constants           Tabella di c_H e σ_H; oracolo per ρ_(n,m)
    rate-fit            Regressioni log-log da un CSV esistente

Uso:
    python stable_rates_cli.py constants --out results/constants
    python stable_rates_cli.py quadratic-bm --n 8,16,32,64 --replicas 20000 --threads 8
    python stable_rates_cli.py weighted-qv --hurst 0.4 --weight cos --assert
    python stable_rates_cli.py combinatorics --q 3 --m 1 --d 2
    python stable_rates_cli.py rate-fit --input results/distances.csv --out results/refit

Codici di uscita: 0 successo, 1 controllo di accettazione fallito (con --assert),
2 configurazione non valida.
"""

import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional

# Aggiungi root al path
ROOT = os.path.dirname(os.path.abspath(__file__))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from colorama import Fore, Style, init as colorama_init

from core.errors import StableRatesError
from core.experiments.config_loader import ConfigValidationError, load_experiment_config

EXIT_OK = 0
EXIT_ACCEPTANCE = 1
EXIT_CONFIG = 2

# sottocomando → nome dell'esperimento
SUBCOMMANDS = {
    "quadratic-bm": ("quadratic_bm", "Aₙ e Fₙ (Itô) per H = 1/2"),
    "quadratic-fbm": ("quadratic_fbm", "Aₙ e Fₙ (Skorohod) per 1/2 ≤ H < 1"),
    "weighted-qv": ("weighted_qv", "Variazione quadratica pesata"),
    "bounds-prop36": ("bounds_prop36", "Ingredienti di Δ per H = 1/2"),
    "weighted-bounds": ("weighted_bounds", "Termini del bound della variazione pesata"),
    "lemma61": ("lemma61", "Somme discrete per H < 1/2"),
    "combinatorics": ("combinatorics", "Multi-indici e coefficienti"),
    "constants": ("constants", "Costanti c_H, σ_H, ρ_(n,m)"),
    "rate-fit": ("rate_fit", "Regressioni log-log da CSV"),
}

_LOG_LEVELS = {"debug": logging.DEBUG, "info": logging.INFO, "warn": logging.WARNING,
               "error": logging.ERROR}


def parse_ladder(text: str) -> List[int]:
    """'4,8,16' → [4, 8, 16]."""
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"scala di n non valida: '{text}' (atteso es. 4,8,16)")
    if not values:
        raise argparse.ArgumentTypeError("scala di n vuota")
    return values


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="File JSON dell'esperimento")
    p.add_argument("--hurst", type=float, help="Parametro di Hurst H")
    p.add_argument("--n", dest="n_ladder", type=parse_ladder, help="Scala di n, es. 4,8,16")
    p.add_argument("--replicas", type=int, help="Numero di repliche Monte Carlo")
    p.add_argument("--grid", dest="grid_size", type=int, help="Passi della griglia di Itô (0 = 8n)")
    p.add_argument("--seed", type=int, help="Seme principale")
    p.add_argument("--threads", type=int, help="Thread del pool di repliche")
    p.add_argument("--out", dest="output_path", help="Directory di output")
    p.add_argument("--weight", help="Funzione peso (cos, quadratic, one, identity)")
    p.add_argument("--q", type=int, help="Ordine q (combinatoria, lemma61)")
    p.add_argument("--m", type=int, help="Numero di variabili y (combinatoria)")
    p.add_argument("--d", type=int, help="Numero di variabili x (combinatoria)")
    p.add_argument("--alpha", type=float, help="Esponente α del trasferimento di Kolmogorov")
    p.add_argument("--bootstrap", type=int, help="Ricampionamenti bootstrap (0 = disattivo)")
    p.add_argument("--chunk", dest="chunk_size", type=int, help="Repliche per blocco")
    p.add_argument("--budget", dest="budget_seconds", type=float,
                   help="Budget di tempo in secondi (0 = illimitato)")
    p.add_argument("--assert", dest="assert_acceptance", action="store_true", default=None,
                   help="Uscita 1 se un controllo di accettazione fallisce")
    p.add_argument("--log-level", dest="log_level", choices=sorted(_LOG_LEVELS), help="Livello di log")


OVERRIDE_KEYS = ("hurst", "n_ladder", "replicas", "grid_size", "seed", "threads", "output_path",
                 "weight", "q", "m", "d", "alpha", "bootstrap", "chunk_size", "budget_seconds",
                 "assert_acceptance", "log_level", "input_csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stable-rates",
        description="Tassi quantitativi di convergenza stabile – esperimenti Monte Carlo",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    sub = parser.add_subparsers(dest="command", help="Esperimento da eseguire")
    for name, (_, help_text) in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        _add_common_flags(p)
        if name == "rate-fit":
            p.add_argument("--input", dest="input_csv", help="distances.csv o bounds.csv da rielaborare")
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    return {key: getattr(args, key, None) for key in OVERRIDE_KEYS}


# ── Output ──────────────────────────────────────────────────────────────────

def _mark(ok: bool) -> str:
    return f"{Fore.GREEN}✓{Style.RESET_ALL}" if ok else f"{Fore.RED}✗{Style.RESET_ALL}"


def print_summary(result) -> None:
    print(f"\n{'='*60}")
    print(f"  ESPERIMENTO {result.experiment.upper()}"
          + (f"  {Fore.YELLOW}(troncato){Style.RESET_ALL}" if result.truncated else ""))
    print(f"{'='*60}\n")
    print(f"  Output:  {result.out_dir}")
    print(f"  File:    {', '.join(result.files)}")
    print(f"  Tempo:   {result.wall_clock:.1f}s\n")
    if result.acceptance:
        print("  Controlli di accettazione:")
        for name, ok in result.acceptance.items():
            print(f"    {_mark(ok)} {name}")
        passed = sum(result.acceptance.values())
        print(f"\n{'─'*60}")
        print(f"  Superati: {passed}/{len(result.acceptance)}\n")


# ── Main ────────────────────────────────────────────────────────────────────

def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return EXIT_OK

    colorama_init()
    experiment = SUBCOMMANDS[args.command][0]
    try:
        cfg = load_experiment_config(experiment, args.config, overrides_from_args(args))
    except ConfigValidationError as e:
        print(f"Config non valida: {e.field}: {e.reason}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"Config non valida: config: {e}", file=sys.stderr)
        return EXIT_CONFIG

    logging.basicConfig(level=_LOG_LEVELS.get(cfg.log_level, logging.INFO),
                        format="[%(levelname)s] %(name)s: %(message)s")

    from core.experiments.runner import run
    try:
        result = run(cfg)
    except StableRatesError as e:
        print(f"Esecuzione interrotta: {experiment}: {e}", file=sys.stderr)
        return EXIT_CONFIG

    print_summary(result)
    if cfg.assert_acceptance and not result.passed:
        print(f"  {Fore.RED}Controlli falliti: {', '.join(result.failed_checks)}{Style.RESET_ALL}\n")
        return EXIT_ACCEPTANCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
