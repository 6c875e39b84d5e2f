"""Command-line entry point: pricing grids, figure data and the validation suite.

Exit codes: 0 success, 1 validation failure, 2 configuration or output error.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from dataclasses import replace
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Sequence

from .config import ConfigError, ExperimentConfig, load_config, parse_config, preset
from .mc.estimators import MCLegEstimate, mc_price_survival_measure, mc_price_weighted
from .pricer import (
    LegValues,
    backward_ode_value,
    gateaux_cca,
    gateaux_cva,
    legs_3party,
    legs_4party,
    par_curve,
    risk_free_value,
)
from .validation import Z_999, mc_separation, run_suite

BOUND_SLACK_BP = 1e-8

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

_DEFAULT_PRESET = {"price": "fig1", "fig1": "fig1", "fig2": "fig2", "b2b": "fig2", "validate": "fig1"}


def fmt_bp(x: float | None) -> str:
    """Basis points with two decimals, ties to even."""
    if x is None:
        return ""
    q = Decimal(x).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN)
    return format(q + 0, "f") if q != 0 else "0.00"


def fmt_pv(x: float | None) -> str:
    """Twelve significant digits."""
    if x is None:
        return ""
    if x == 0:
        return "0"
    return format(x, ".12g")


def fmt_num(x: float) -> str:
    return format(x, "g")


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


class OutputError(OSError):
    pass


def _check_writable(path: str | None):
    if path is None:
        return
    p = Path(path)
    parent = p.parent if str(p.parent) else Path(".")
    if p.is_dir():
        raise OutputError(f"output path {path} is a directory")
    if not parent.is_dir() or not os.access(parent, os.W_OK) or (p.exists() and not os.access(p, os.W_OK)):
        raise OutputError(f"cannot write output path {path}")


def _emit(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write output path {path}: {exc.strerror}") from None


def _log(msg: str):
    print(msg, file=sys.stderr)


def _grid_legs(cfg: ExperimentConfig, seller: int | None, jobs: int) -> dict[tuple[float, float], LegValues]:
    cells = par_curve(cfg.alphas, cfg.maturities, cfg.curves, cfg.deal, seller_is_party=seller,
                      jobs=jobs, rtol=cfg.rtol, atol=cfg.atol)
    return {(c.alpha, c.maturity): c.legs for c in cells}


def _risk_free_par(cfg: ExperimentConfig, T: float) -> float:
    return risk_free_value(cfg.curves, cfg.deal_at(T), rtol=cfg.rtol, atol=cfg.atol).par_spread


def _mc_legs(cfg: ExperimentConfig, alpha: float, T: float, seller: int,
             direct: bool = False) -> MCLegEstimate:
    deal = cfg.deal_at(T).replace(protection_seller=seller)
    estimator = mc_price_survival_measure if direct else mc_price_weighted
    return estimator(alpha, cfg.curves, deal, cfg.sim)


def _is_validated(cfg: ExperimentConfig, alpha: float) -> bool:
    return any(math.isclose(alpha, a, rel_tol=0, abs_tol=1e-12) for a in cfg.validate_alphas)


def _warn_missing_alphas(cfg: ExperimentConfig):
    for a in cfg.validate_alphas:
        if not any(math.isclose(a, g, rel_tol=0, abs_tol=1e-12) for g in cfg.alphas):
            _log(f"note: validation alpha {a:g} is not on the alpha grid and is skipped")


# ---------------------------------------------------------------- commands

def run_price(cfg: ExperimentConfig, args) -> tuple[str, int]:
    seller = cfg.deal.protection_seller
    legs = _grid_legs(cfg, seller, cfg.sim.jobs)
    premium = None if cfg.premium_bp is None else cfg.premium_bp * 1e-4
    adjust = premium is not None and cfg.parties == 3
    header = ["alpha", "maturity_years", "par_spread_bp", "risk_free_par_bp", "protection_pv",
              "annuity_pv", "premium_bp", "value_pv"]
    if adjust:
        header += ["cca_pv", "cva_pv", "ode_value_pv"]
    if args.validate:
        header += ["mc_par_bp", "mc_se_bp"]
    rows, failed = [], False
    rf = {T: _risk_free_par(cfg, T) for T in cfg.maturities}
    for (alpha, T), lv in legs.items():
        row = [fmt_num(alpha), fmt_num(T), fmt_bp(lv.par_spread_bp), fmt_bp(1e4 * rf[T]),
               fmt_pv(lv.protection), fmt_pv(lv.annuity),
               "" if premium is None else fmt_bp(cfg.premium_bp),
               "" if premium is None else fmt_pv(lv.value(premium))]
        if adjust:
            deal = cfg.deal_at(T)
            row += [fmt_pv(gateaux_cca(alpha, cfg.curves, deal)),
                    fmt_pv(gateaux_cva(alpha, cfg.curves, deal)),
                    fmt_pv(backward_ode_value(alpha, cfg.curves, deal))]
        if args.validate:
            est = _mc_legs(cfg, alpha, T, seller).par
            row += [fmt_bp(1e4 * est.mean), fmt_bp(1e4 * est.stderr)]
            if abs(est.mean - lv.par_spread) > Z_999 * est.stderr:
                failed = True
                _log(f"FAIL alpha={alpha:g} T={T:g}: MC par off by {est.zscore(lv.par_spread):+.2f} SE")
        rows.append(row)
    return _csv_text(header, rows), EXIT_FAIL if failed else EXIT_OK


def run_fig1(cfg: ExperimentConfig, args) -> tuple[str, int]:
    if cfg.parties != 3:
        raise ConfigError("parties", "fig1 needs three parties")
    legs = _grid_legs(cfg, None, cfg.sim.jobs)
    rf = {T: _risk_free_par(cfg, T) for T in cfg.maturities}
    if args.validate:
        _warn_missing_alphas(cfg)
    header = ["alpha", "maturity_years", "par_spread_bp", "protection_pv", "annuity_pv",
              "mc_par_bp", "mc_se_bp"]
    rows, failed = [], False
    for (alpha, T), lv in legs.items():
        if lv.par_spread_bp > 1e4 * rf[T] + BOUND_SLACK_BP:
            failed = True
            _log(f"FAIL alpha={alpha:g} T={T:g}: par {lv.par_spread_bp:.6f}bp above the "
                 f"default-free bound {1e4 * rf[T]:.6f}bp")
        mc_par = mc_se = None
        if args.validate and _is_validated(cfg, alpha):
            est = _mc_legs(cfg, alpha, T, 2).par
            mc_par, mc_se = 1e4 * est.mean, 1e4 * est.stderr
            if abs(est.mean - lv.par_spread) > Z_999 * est.stderr:
                failed = True
                _log(f"FAIL alpha={alpha:g} T={T:g}: MC par off by {est.zscore(lv.par_spread):+.2f} SE")
        rows.append([fmt_num(alpha), fmt_num(T), fmt_bp(lv.par_spread_bp), fmt_pv(lv.protection),
                     fmt_pv(lv.annuity), fmt_bp(mc_par), fmt_bp(mc_se)])
    return _csv_text(header, rows), EXIT_FAIL if failed else EXIT_OK


def _gap(buy: LegValues, sell: LegValues, premium: float) -> float:
    return (buy.protection - sell.protection) - premium * (buy.annuity - sell.annuity)


def _sign(x: float, tol: float) -> int:
    return 0 if abs(x) <= tol else (1 if x > 0 else -1)


def _b2b_tables(cfg: ExperimentConfig):
    if cfg.parties != 4:
        raise ConfigError("parties", "the back-to-back trade needs four parties")
    buy = _grid_legs(cfg, 2, cfg.sim.jobs)
    sell = _grid_legs(cfg, 3, cfg.sim.jobs)
    return buy, sell


def _check_separation(buy, sell) -> bool:
    """Par separation keeps one sign over all alpha > 0 at each maturity."""
    signs = {}
    for (alpha, T), lb in buy.items():
        if alpha > 0:
            s = _sign(lb.par_spread - sell[alpha, T].par_spread, 1e-12)
            signs.setdefault(T, set()).add(s)
    ok = True
    for T, s in sorted(signs.items()):
        if len(s) > 1 or 0 in s:
            ok = False
            _log(f"FAIL T={T:g}: par separation changes sign or vanishes across alpha > 0")
    return ok


def _mc_separation(cfg: ExperimentConfig, alpha: float, T: float, buy: LegValues,
                   sell: LegValues) -> tuple[MCLegEstimate, MCLegEstimate, bool]:
    mb, ms, z = mc_separation(cfg, alpha, T, buy, sell)
    ok = True
    for name, est, det in (("party 2", mb, buy), ("party 3", ms, sell)):
        if abs(est.par.mean - det.par_spread) > Z_999 * est.par.stderr:
            ok = False
            _log(f"FAIL alpha={alpha:g} T={T:g}: MC par against {name} off by "
                 f"{est.par.zscore(det.par_spread):+.2f} SE")
    if _sign(buy.par_spread - sell.par_spread, 1e-12) != 0 and not z > Z_999:
        ok = False
        _log(f"FAIL alpha={alpha:g} T={T:g}: MC does not confirm the sign of the par separation")
    return mb, ms, ok


def run_fig2(cfg: ExperimentConfig, args) -> tuple[str, int]:
    buy, sell = _b2b_tables(cfg)
    failed = not _check_separation(buy, sell)
    if args.validate:
        _warn_missing_alphas(cfg)
    header = ["alpha", "maturity_years", "par_vs_party2_bp", "par_vs_party3_bp", "b2b_gap_pv"]
    if args.validate:
        header += ["mc_par_vs_party2_bp", "mc_se_vs_party2_bp", "mc_par_vs_party3_bp",
                   "mc_se_vs_party3_bp"]
    rows = []
    for (alpha, T), lb in buy.items():
        ls = sell[alpha, T]
        row = [fmt_num(alpha), fmt_num(T), fmt_bp(lb.par_spread_bp), fmt_bp(ls.par_spread_bp),
               fmt_pv(_gap(lb, ls, lb.par_spread))]
        if args.validate:
            cols = [None] * 4
            if _is_validated(cfg, alpha):
                mb, ms, ok = _mc_separation(cfg, alpha, T, lb, ls)
                failed |= not ok
                cols = [1e4 * mb.par.mean, 1e4 * mb.par.stderr, 1e4 * ms.par.mean, 1e4 * ms.par.stderr]
            row += [fmt_bp(c) for c in cols]
        rows.append(row)
    return _csv_text(header, rows), EXIT_FAIL if failed else EXIT_OK


def run_b2b(cfg: ExperimentConfig, args) -> tuple[str, int]:
    buy, sell = _b2b_tables(cfg)
    failed = False
    header = ["alpha", "maturity_years", "premium_bp", "value_vs_party2_pv", "value_vs_party3_pv",
              "b2b_gap_pv"]
    rows, signs = [], set()
    for (alpha, T), lb in buy.items():
        ls = sell[alpha, T]
        premium = lb.par_spread if cfg.premium_bp is None else cfg.premium_bp * 1e-4
        gap = _gap(lb, ls, premium)
        if alpha > 0:
            signs.add(_sign(gap, 1e-12))
        rows.append([fmt_num(alpha), fmt_num(T), fmt_bp(1e4 * premium), fmt_pv(lb.value(premium)),
                     fmt_pv(ls.value(premium)), fmt_pv(gap)])
    _log("gap sign over alpha > 0: " + (", ".join(str(s) for s in sorted(signs)) or "none"))
    if args.validate:
        T = cfg.validate_maturity
        for alpha in cfg.validate_alphas:
            deal = cfg.deal_at(T)
            lb = legs_4party(alpha, cfg.curves, deal, 2, rtol=cfg.rtol, atol=cfg.atol)
            ls = legs_4party(alpha, cfg.curves, deal, 3, rtol=cfg.rtol, atol=cfg.atol)
            _, _, ok = _mc_separation(cfg, alpha, T, lb, ls)
            failed |= not ok
    return _csv_text(header, rows), EXIT_FAIL if failed else EXIT_OK


def run_validate(cfg: ExperimentConfig, args) -> tuple[str, int]:
    results = run_suite(cfg)
    lines = [r.line() for r in results]
    failures = sum(not r.passed for r in results)
    lines.append(f"SUMMARY {len(results) - failures}/{len(results)} checks passed")
    return "\n".join(lines) + "\n", EXIT_FAIL if failures else EXIT_OK


COMMANDS = {
    "price": run_price,
    "fig1": run_fig1,
    "fig2": run_fig2,
    "b2b": run_b2b,
    "validate": run_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="collateral-cds",
        description="Price collateralised CDS contracts under Clayton default dependence.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "price": "legs and par spreads on the configured (alpha, maturity) grid",
        "fig1": "three-party par spread curves against alpha",
        "fig2": "four-party par spreads against parties 2 and 3 with the back-to-back gap",
        "b2b": "back-to-back gap on the grid",
        "validate": "run the invariant and Monte Carlo agreement suite",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", metavar="PATH",
                       help=f"JSON configuration (default: built-in {_DEFAULT_PRESET[name]} preset)")
        p.add_argument("--out", metavar="PATH", help="output file (default: config output or stdout)")
        if name != "validate":
            p.add_argument("--validate", action="store_true",
                           help="also run Monte Carlo checks and fail on disagreement")
        p.add_argument("--seed", type=int, metavar="N", help="override the simulation seed")
        p.add_argument("--paths", type=int, metavar="N", help="override the simulation path count")
        p.add_argument("--jobs", type=int, metavar="N", help="worker processes (results do not depend on it)")
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    sim = cfg.sim
    try:
        if args.seed is not None:
            sim = replace(sim, seed=args.seed)
        if args.paths is not None:
            sim = replace(sim, paths=args.paths)
        if args.jobs is not None:
            sim = replace(sim, jobs=args.jobs)
    except ValueError as exc:
        raise ConfigError("command line", str(exc)) from None
    return replace(cfg, sim=sim)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "validate"):
        args.validate = True
    try:
        if args.config:
            cfg = load_config(args.config)
        else:
            cfg = parse_config(preset(_DEFAULT_PRESET[args.command]))
        cfg = _apply_overrides(cfg, args)
        out = args.out if args.out is not None else cfg.output
        _check_writable(out)
        text, code = COMMANDS[args.command](cfg, args)
        _emit(text, out)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except OutputError as exc:
        _log(f"output error: {exc}")
        return EXIT_CONFIG
    return code


if __name__ == "__main__":
    sys.exit(main())
