"""Command line entry point: ``python -m paest <verb> ...``.

Exit codes: 0 success, 2 configuration error, 3 assumption-check failure,
4 divergence abort. Output defaults to ``$PAEST_OUT/<scenario id>``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..estimators import AssumptionError, DivergenceError
from ..gpebo import AssumptionViolation
from ..regext import ConfigurationError
from .config import ConfigError, load_config
from .runner import compare, default_out_root, diagnose, run_scenario, sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3
EXIT_DIVERGED = 4


def _out(arg, cfg_id: str) -> Path:
    return Path(arg) if arg else default_out_root() / cfg_id


def _values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="paest", description="Perturbation-annihilating estimation scenarios.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    s = sub.add_parser("sweep", help="run a scenario over several T or gamma values")
    s.add_argument("--config", required=True)
    s.add_argument("--param", required=True, choices=["T", "gamma"])
    s.add_argument("--values", required=True, type=_values)
    s.add_argument("--out")
    c = sub.add_parser("compare", help="paired runs of two configs on a shared grid and seed")
    c.add_argument("--config-a", required=True)
    c.add_argument("--config-b", required=True)
    c.add_argument("--out")
    d = sub.add_parser("diagnose", help="assumption checks only")
    d.add_argument("--config", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"configuration error in {exc.source}:", file=sys.stderr)
        for e in exc.errors:
            print(f"  - {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AssumptionError, AssumptionViolation) as exc:
        print(f"assumption check failed: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


def _report(res) -> None:
    for w in res.warnings:
        print(f"warning: {w}")
    for k in sorted(res.metrics):
        print(f"{k} = {res.metrics[k]!r}")


def _dispatch(args) -> int:
    if args.verb == "run":
        cfg = load_config(args.config)
        res = run_scenario(cfg, _out(args.out, cfg.id))
        _report(res)
        print(f"wrote {res.files['csv']}")
        return EXIT_DIVERGED if res.diverged else EXIT_OK
    if args.verb == "sweep":
        cfg = load_config(args.config)
        out = _out(args.out, f"{cfg.id}_sweep_{args.param}")
        table = sweep(cfg, args.param, args.values, out)
        print(",".join(table.header))
        for row in table.rows():
            print(",".join(repr(float(v)) for v in row))
        print(f"wrote {out / 'sweep.csv'}")
        return EXIT_DIVERGED if any(r.diverged for r in table.results) else EXIT_OK
    if args.verb == "compare":
        a, b = load_config(args.config_a), load_config(args.config_b)
        out = _out(args.out, f"{a.id}_vs_{b.id}")
        rep = compare(a, b, out)
        for k in sorted(rep.ratios):
            print(f"{k} = {rep.ratios[k]!r}")
        print(f"wrote {out / 'compare.json'}")
        return EXIT_DIVERGED if rep.a.diverged or rep.b.diverged else EXIT_OK
    cfg = load_config(args.config)
    rep = diagnose(cfg)
    for line in rep.lines():
        print(line)
    return EXIT_OK if rep.ok else EXIT_ASSUMPTION


if __name__ == "__main__":
    sys.exit(main())
