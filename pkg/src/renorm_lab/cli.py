"""Command-line front end: ``renorm-lab <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 solver or precision
exhaustion, 4 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import experiments as ex
from .circle_map import CircleMapLift, closest_returns
from .commuting_pair import dumps_pair, extract_pair, period, validate
from .errors import ConfigurationError, PairValidationError, RenormLabError
from .numerics import precision, to_decimal

COMMANDS = (
    "rotnum",
    "solve",
    "pair",
    "renorm-orbit",
    "converge",
    "yoccoz",
    "expand",
    "sync",
    "lipschitz",
    "rigidity",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="renorm-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--precision", type=int, help="working precision in bits")
        p.add_argument("--depth", type=int, help="renormalization depth")
        p.add_argument("--grid", type=int, help="grid points per side for distances")
        p.add_argument("--out", help="output directory")
        p.add_argument("--format", choices=("csv", "json"), help="report format")
        p.add_argument("--family", help="family of the first map (overrides config)")
        p.add_argument("--param", action="append", default=[], metavar="NAME=VALUE", help="parameter of the first map")
        p.add_argument("--digits", help="comma-separated target digits")
        if name in ("pair", "sync"):
            p.add_argument("--level", type=int, help="pair level (-1 is the map itself)")
        if name == "yoccoz":
            p.add_argument("--a", type=int, help="large digit")
        if name == "expand":
            p.add_argument("--a-values", help="comma-separated large digits")
        if name in ("lipschitz", "rigidity"):
            p.add_argument("--levels", help="level range LO:HI")
    return parser


def _ints(text: str) -> list:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"expected comma-separated integers, got {text!r}") from exc


def load_config(args) -> ex.ExperimentConfig:
    data = {}
    if args.config:
        data = ex.read_config_dict(args.config)
    overrides = {
        "precision_bits": args.precision,
        "depth": args.depth,
        "grid_size": args.grid,
        "out_dir": args.out,
        "format": args.format,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.digits:
        data["target_digits"] = _ints(args.digits)
    if getattr(args, "level", None) is not None:
        data["level"] = args.level
    if getattr(args, "levels", None):
        try:
            lo, hi = args.levels.split(":")
            data["levels"] = [int(lo), int(hi)]
        except ValueError as exc:
            raise ConfigurationError("--levels expects LO:HI") from exc
    cfg = ex.ExperimentConfig.from_dict(data)
    if args.family or args.param:
        params = {}
        for item in args.param:
            if "=" not in item:
                raise ConfigurationError(f"--param expects NAME=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            params[k] = v
        first = ex.FamilyConfig(args.family or cfg.families[0].family, params or dict(cfg.families[0].params))
        cfg.families = [first] + list(cfg.families[1:])
    return cfg


def _emit(report: ex.ExperimentReport, cfg: ex.ExperimentConfig) -> None:
    for path in report.write(cfg.out_dir, cfg.format):
        print(path)
    if report.summary:
        print(json.dumps(report.summary, indent=2))


def _first_map(cfg: ex.ExperimentConfig) -> CircleMapLift:
    fam = cfg.families[0]
    return CircleMapLift(fam.family, fam.params, cfg.precision_bits)


def cmd_rotnum(cfg) -> None:
    fmap = _first_map(cfg)
    state = closest_returns(fmap, max_level=cfg.depth, max_iterations=cfg.max_iterations)
    rows = []
    for n, a in enumerate(state.digits):
        p, q = state.convergents[n + 1]
        rows.append([str(n), str(a), str(p), str(q), to_decimal(state.closest_return_points[n + 1], cfg.precision_bits)])
    header = {"experiment": "rotnum", "map": fmap.describe(), "truncated": state.truncated, "config_hash": cfg.digest()}
    _emit(ex.ExperimentReport("rotnum", ["n", "a_n", "p_n_plus_1", "q_n_plus_1", "closest_return"], rows, header), cfg)


def cmd_solve(cfg) -> None:
    sol = ex.solve_family(cfg.families[0], cfg.target, cfg)
    out = {
        "family": sol.fmap.family,
        "omega": to_decimal(sol.omega, cfg.precision_bits),
        "requested_depth": sol.requested_depth,
        "achieved_depth": sol.achieved_depth,
        "verified": sol.verified,
        "bisection_steps": sol.bisection_steps,
        "digits": list(sol.state.digits),
    }
    print(json.dumps(out, indent=2))


def cmd_pair(cfg) -> None:
    sol = ex.solve_family(cfg.families[0], cfg.target, cfg)
    with precision(cfg.precision_bits):
        pair = extract_pair(sol.fmap, sol.state, cfg.level, validate=False)
        failures = validate(pair)
        period(pair)
    text = dumps_pair(pair)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, f"pair_level{cfg.level}.json")
    with open(path, "w") as fh:
        fh.write(text)
    print(path)
    print(json.dumps({"period": pair._cache.get("period"), "validation": {k: str(v) for k, v in failures.items()}}))
    if failures:
        raise PairValidationError(failures)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args)
        cmd = args.command
        if cmd == "rotnum":
            cmd_rotnum(cfg)
        elif cmd == "solve":
            cmd_solve(cfg)
        elif cmd == "pair":
            cmd_pair(cfg)
        elif cmd == "renorm-orbit":
            _emit(ex.run_renorm_orbit(cfg), cfg)
        elif cmd == "converge":
            _emit(ex.run_converge(cfg).report, cfg)
        elif cmd == "yoccoz":
            _emit(ex.run_yoccoz(cfg, args.a).report, cfg)
        elif cmd == "expand":
            a_values = _ints(args.a_values) if args.a_values else None
            _emit(ex.run_expansion(cfg, a_values).report, cfg)
        elif cmd == "sync":
            _emit(ex.run_sync(cfg).report, cfg)
        elif cmd == "lipschitz":
            _emit(ex.run_lipschitz_probe(cfg).report, cfg)
        elif cmd == "rigidity":
            _emit(ex.run_rigidity(cfg).report, cfg)
    except RenormLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
