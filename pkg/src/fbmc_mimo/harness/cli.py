"""Command-line entry point: ``sim mse|ser|pulse-check|eta-table``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from ..pulse import (
    ETA_INDICES,
    eta_relations,
    eta_table,
    interference_power,
    pr_residual,
    pulse_derivative,
    write_pulse_csv,
)
from .config import ConfigError, load_config, parse_overrides
from .experiments import build_pulse, run_mse_experiment, run_ser_experiment
from .report import emit_report

log = logging.getLogger("fbmc_mimo")


def _experiment_parser(sub, name: str, help_text: str):
    p = sub.add_parser(name, help=help_text)
    p.add_argument("--config", help="INI config file")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out", default=f"{name}_out", help="output directory")
    p.add_argument("--plot", action="store_true", help="also write SVG plots")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    return p


def _pulse_args(p):
    p.add_argument("--M", type=int, default=64, help="half the number of subcarriers")
    p.add_argument("--kappa", type=int, default=4)
    p.add_argument("--pulse", choices=("phydyas", "smooth_pr"), default="phydyas")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _experiment_parser(sub, "mse", "per-subcarrier MSE: theory vs Monte Carlo")
    _experiment_parser(sub, "ser", "symbol error rate vs SNR")
    pc = sub.add_parser("pulse-check", help="reconstruction and symmetry diagnostics of a prototype pulse")
    _pulse_args(pc)
    pc.add_argument("--export", help="write the pulse samples to this CSV file")
    et = sub.add_parser("eta-table", help="print the eta pulse quantities")
    _pulse_args(et)
    et.add_argument("--json", action="store_true", help="machine-readable output")
    return parser


def _run_experiment(args, runner) -> int:
    overrides = parse_overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    cfg = load_config(args.config, overrides)
    log.info("running %s with config hash %s", args.command, cfg.config_hash())
    res = runner(cfg)
    for path in emit_report(res, args.out, plot=args.plot):
        print(path)
    print(f"{len(res.rows)} rows in {res.wall_time:.1f} s", file=sys.stderr)
    return 0


def _pulse(args):
    kappa = 1 if args.pulse == "smooth_pr" else args.kappa
    return build_pulse(args.pulse, args.M, kappa)


def _pulse_check(args) -> int:
    p = _pulse(args)
    d1, d2 = pulse_derivative(p, 1), pulse_derivative(p, 2)
    report = {
        "pulse": args.pulse,
        "M": p.half_subcarriers,
        "kappa": p.overlap,
        "length": p.length,
        "energy_over_M": p.energy / p.half_subcarriers,
        "symmetry_error": p.symmetry_error(),
        "pr_residual": pr_residual(p),
        "interference_power": interference_power(p),
        "endpoint_values": [float(abs(x.samples[[0, -1]]).max()) for x in (p, d1, d2)],
    }
    for k, v in report.items():
        print(f"{k:20s} {v}")
    if args.export:
        write_pulse_csv(p, args.export)
        print(f"wrote {args.export}")
    return 0


def _eta_table(args) -> int:
    table = eta_table(_pulse(args))
    if args.json:
        out = {
            "M": table.half_subcarriers,
            "alpha": table.alpha,
            "beta": table.beta,
            "eta_pm": {"".join(map(str, k)): v for k, v in table.eta_pm.items()},
            "eta_mp": {"".join(map(str, k)): v for k, v in table.eta_mp.items()},
            "relations": eta_relations(table),
        }
        print(json.dumps(out, indent=2))
        return 0
    print(f"{'index':8s} {'eta(+,-)':>16s} {'eta(-,+)':>16s}")
    for idx in ETA_INDICES:
        print(f"{''.join(map(str, idx)):8s} {table.eta_pm[idx]:16.9e} {table.eta_mp[idx]:16.9e}")
    print(f"alpha = {table.alpha:.9e}\nbeta  = {table.beta:.9e}")
    for k, v in eta_relations(table).items():
        print(f"{k:18s} {v: .3e}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "mse":
            return _run_experiment(args, run_mse_experiment)
        if args.command == "ser":
            return _run_experiment(args, run_ser_experiment)
        if args.command == "pulse-check":
            return _pulse_check(args)
        return _eta_table(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
